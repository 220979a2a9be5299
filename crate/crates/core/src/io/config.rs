//! Run configuration as flat `key = value` text. Blank lines and `#`
//! comments are ignored, every key is optional and unknown keys are errors.
//!
//! ```text
//! # hyperparameters
//! delta = 0.1
//! tau_mask = 0.4
//! reconstruction = density
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::threshold::{ThresholdConfig, ThresholdRule};
use crate::tracker::{InitMode, ReconstructionMode, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("line {line}: key {key} given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: {key} = {value:?}: {reason}")]
    Value {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("{}: {message}", .keys.join(", "))]
    Constraint { keys: Vec<String>, message: String },
}

impl ConfigError {
    pub fn constraint(keys: &[&str], message: impl Into<String>) -> Self {
        ConfigError::Constraint {
            keys: keys.iter().map(|k| k.to_string()).collect(),
            message: message.into(),
        }
    }

    /// Keys the error is about.
    pub fn keys(&self) -> Vec<String> {
        match self {
            ConfigError::Syntax { .. } => Vec::new(),
            ConfigError::UnknownKeys(k) => k.clone(),
            ConfigError::Duplicate { key, .. } | ConfigError::Value { key, .. } => vec![key.clone()],
            ConfigError::Constraint { keys, .. } => keys.clone(),
        }
    }
}

/// Which threshold filters detections before tracking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectionThreshold {
    /// Per-sequence two-cluster threshold.
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub threshold: ThresholdConfig,
    pub detection_threshold: DetectionThreshold,
    /// `oracle`, `exec:CMD` or `tcp:ADDR`.
    pub segmenter: Option<String>,
    pub sequences: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            threshold: ThresholdConfig::default(),
            detection_threshold: DetectionThreshold::Adaptive,
            segmenter: None,
            sequences: Vec::new(),
        }
    }
}

const KEYS: &[&str] = &[
    "delta",
    "tau_mask",
    "tau_iou",
    "tau_reliable",
    "tau_pending",
    "tau_lost",
    "n_lost",
    "n_frames",
    "tau_miou",
    "tau_dscore",
    "tau_dstd",
    "tau_nms",
    "match_floor",
    "fallback_threshold",
    "score_floor",
    "threshold_rule",
    "threshold_mode",
    "fixed_threshold",
    "init_mode",
    "reconstruction",
    "cross_object",
    "mask_nms",
    "segmenter",
    "sequences",
];

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        line,
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn choice<T: Copy>(line: usize, key: &str, value: &str, options: &[(&str, T)]) -> Result<T, ConfigError> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| ConfigError::Value {
            line,
            key: key.into(),
            value: value.into(),
            reason: format!(
                "expected one of {}",
                options.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ),
        })
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut unknown = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: raw.to_string(),
            });
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: raw.to_string(),
            });
        }
        if !KEYS.contains(&k.as_str()) {
            unknown.push(k);
            continue;
        }
        if seen.insert(k.clone(), line).is_some() {
            return Err(ConfigError::Duplicate { line, key: k });
        }
        entries.push((line, k, v));
    }
    if !unknown.is_empty() {
        return Err(ConfigError::UnknownKeys(unknown));
    }

    let mut cfg = RunConfig::default();
    let mut mode = "adaptive".to_string();
    let mut fixed = 0.3;
    for (line, key, value) in entries {
        let (t, th) = (&mut cfg.tracker, &mut cfg.threshold);
        let v = value.as_str();
        match key.as_str() {
            "delta" => th.delta = parse(line, &key, v)?,
            "tau_mask" => t.tau_mask = parse(line, &key, v)?,
            "tau_iou" => t.tau_iou = parse(line, &key, v)?,
            "tau_reliable" => t.tau_reliable = parse(line, &key, v)?,
            "tau_pending" => t.tau_pending = parse(line, &key, v)?,
            "tau_lost" => t.tau_lost = parse(line, &key, v)?,
            "n_lost" => t.n_lost = parse(line, &key, v)?,
            "n_frames" => t.n_frames = parse(line, &key, v)?,
            "tau_miou" => t.tau_miou = parse(line, &key, v)?,
            "tau_dscore" => t.tau_dscore = parse(line, &key, v)?,
            "tau_dstd" => t.tau_dstd = parse(line, &key, v)?,
            "tau_nms" => t.tau_nms = parse(line, &key, v)?,
            "match_floor" => t.match_floor = parse(line, &key, v)?,
            "fallback_threshold" => th.fallback = parse(line, &key, v)?,
            "score_floor" => th.floor = parse(line, &key, v)?,
            "threshold_rule" => {
                th.rule = choice(
                    line,
                    &key,
                    v,
                    &[
                        ("boundary", ThresholdRule::Boundary),
                        ("weighted_centroid", ThresholdRule::WeightedCentroid),
                    ],
                )?
            }
            "threshold_mode" => mode = choice(line, &key, v, &[("adaptive", "adaptive"), ("fixed", "fixed")])?.into(),
            "fixed_threshold" => fixed = parse(line, &key, v)?,
            "init_mode" => {
                t.init_mode = choice(
                    line,
                    &key,
                    v,
                    &[("mask", InitMode::MaskOverlap), ("unassigned", InitMode::UnassignedPixels)],
                )?
            }
            "reconstruction" => {
                t.reconstruction = choice(
                    line,
                    &key,
                    v,
                    &[
                        ("density", ReconstructionMode::DensityAware),
                        ("band", ReconstructionMode::Band),
                        ("always", ReconstructionMode::Always),
                        ("off", ReconstructionMode::Off),
                    ],
                )?
            }
            "cross_object" => t.cross_object = parse(line, &key, v)?,
            "mask_nms" => t.mask_nms = parse(line, &key, v)?,
            "segmenter" => cfg.segmenter = Some(value.clone()),
            "sequences" => {
                cfg.sequences = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            _ => unreachable!("keys are checked against KEYS"),
        }
    }
    if !(0.0..=1.0).contains(&fixed) {
        return Err(ConfigError::constraint(&["fixed_threshold"], "must lie in [0, 1]"));
    }
    cfg.detection_threshold = if mode == "fixed" {
        DetectionThreshold::Fixed(fixed)
    } else {
        DetectionThreshold::Adaptive
    };
    cfg.tracker.validate()?;
    cfg.threshold
        .validate()
        .map_err(|m| ConfigError::constraint(&["delta", "fallback_threshold", "score_floor"], m))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> crate::Result<RunConfig> {
    let text = super::read_to_string(path)?;
    Ok(parse_config(&text)?)
}

/// Renders every key, so the output documents the full effective setup.
pub fn format_config(cfg: &RunConfig) -> String {
    let t = &cfg.tracker;
    let th = &cfg.threshold;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("delta", th.delta.to_string());
    kv("tau_mask", t.tau_mask.to_string());
    kv("tau_iou", t.tau_iou.to_string());
    kv("tau_reliable", t.tau_reliable.to_string());
    kv("tau_pending", t.tau_pending.to_string());
    kv("tau_lost", t.tau_lost.to_string());
    kv("n_lost", t.n_lost.to_string());
    kv("n_frames", t.n_frames.to_string());
    kv("tau_miou", t.tau_miou.to_string());
    kv("tau_dscore", t.tau_dscore.to_string());
    kv("tau_dstd", t.tau_dstd.to_string());
    kv("tau_nms", t.tau_nms.to_string());
    kv("match_floor", t.match_floor.to_string());
    kv("fallback_threshold", th.fallback.to_string());
    kv("score_floor", th.floor.to_string());
    kv(
        "threshold_rule",
        match th.rule {
            ThresholdRule::Boundary => "boundary",
            ThresholdRule::WeightedCentroid => "weighted_centroid",
        }
        .into(),
    );
    match cfg.detection_threshold {
        DetectionThreshold::Adaptive => kv("threshold_mode", "adaptive".into()),
        DetectionThreshold::Fixed(v) => {
            kv("threshold_mode", "fixed".into());
            kv("fixed_threshold", v.to_string());
        }
    }
    kv(
        "init_mode",
        match t.init_mode {
            InitMode::MaskOverlap => "mask",
            InitMode::UnassignedPixels => "unassigned",
        }
        .into(),
    );
    kv(
        "reconstruction",
        match t.reconstruction {
            ReconstructionMode::DensityAware => "density",
            ReconstructionMode::Band => "band",
            ReconstructionMode::Always => "always",
            ReconstructionMode::Off => "off",
        }
        .into(),
    );
    kv("cross_object", t.cross_object.to_string());
    kv("mask_nms", t.mask_nms.to_string());
    if let Some(s) = &cfg.segmenter {
        kv("segmenter", s.clone());
    }
    if !cfg.sequences.is_empty() {
        kv("sequences", cfg.sequences.join(","));
    }
    out
}
