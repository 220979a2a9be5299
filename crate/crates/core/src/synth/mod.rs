//! Deterministic synthetic world: ground-truth sequences, a noisy detector
//! with bimodal scores, and an oracle segmenter.
//!
//! Objects are analytic ellipses or rectangles moving along linear plus
//! sinusoidal paths. Mutual occlusion follows a static depth order (smaller
//! depth is closer to the camera). Distractors are extra objects that are not
//! part of the ground truth; the detector fires on them with low scores and
//! the oracle segmenter will happily segment them, which is what makes a
//! permissive threshold costly.

pub mod oracle;
pub mod presets;
pub mod raster;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, BitMask, Detection};
use crate::io::detections::FrameDetections;
use crate::io::mot::{MotRow, MotTable};

pub use oracle::OracleSession;
pub use raster::Shape;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario has no objects and no false positives; nothing to generate")]
    Empty,
    #[error("object {index}: {reason}")]
    Object { index: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
}

/// Center path: `start + velocity * t + amplitude * sin(2πt / period + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default)]
    pub amplitude: [f64; 2],
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
}

fn default_period() -> f64 {
    50.0
}

impl Trajectory {
    pub fn fixed(x: f64, y: f64) -> Self {
        Self {
            start: [x, y],
            velocity: [0.0, 0.0],
            amplitude: [0.0, 0.0],
            period: default_period(),
            phase: 0.0,
        }
    }

    pub fn linear(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self {
            velocity: [vx, vy],
            ..Self::fixed(x, y)
        }
    }

    pub fn center(&self, t: u32) -> (f64, f64) {
        let t = t as f64;
        let s = (2.0 * std::f64::consts::PI * t / self.period + self.phase).sin();
        (
            self.start[0] + self.velocity[0] * t + self.amplitude[0] * s,
            self.start[1] + self.velocity[1] * t + self.amplitude[1] * s,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// Full width and height in pixels.
    pub size: [f64; 2],
    pub trajectory: Trajectory,
    pub enter_frame: u32,
    pub exit_frame: u32,
    /// Occlusion order; smaller is closer to the camera.
    pub depth: i32,
}

impl ObjectSpec {
    pub fn present(&self, t: u32) -> bool {
        self.enter_frame <= t && t < self.exit_frame
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreMode {
    pub mean: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorNoise {
    pub tp_score_mode: ScoreMode,
    pub fp_score_mode: ScoreMode,
    /// Expected false positives per frame (Poisson).
    pub fp_rate: f64,
    /// Probability that a detectable object is missed.
    pub fn_rate: f64,
    /// Relative standard deviation of box position and size.
    pub box_jitter: f64,
    /// Objects less visible than this are never detected.
    #[serde(default = "default_min_visibility")]
    pub min_visibility: f64,
    /// Share of false positives placed on distractors when any are visible.
    #[serde(default = "default_distractor_share")]
    pub distractor_share: f64,
    /// Probability that the box of an object touching another one covers
    /// both, the typical detector failure in crowds.
    #[serde(default)]
    pub merge_rate: f64,
}

fn default_min_visibility() -> f64 {
    0.3
}

fn default_distractor_share() -> f64 {
    0.7
}

impl Default for DetectorNoise {
    fn default() -> Self {
        Self {
            tp_score_mode: ScoreMode { mean: 0.75, spread: 0.06 },
            fp_score_mode: ScoreMode { mean: 0.25, spread: 0.06 },
            fp_rate: 0.5,
            fn_rate: 0.05,
            box_jitter: 0.03,
            min_visibility: default_min_visibility(),
            distractor_share: default_distractor_share(),
            merge_rate: 0.0,
        }
    }
}

/// Behaviour of the oracle segmenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Occlusion score of a fully hidden object.
    pub occ_min: f64,
    /// Occlusion score of a fully visible, freshly prompted object.
    pub occ_max: f64,
    /// Occlusion-score penalty per frame since the last prompt.
    pub occ_decay_per_frame: f64,
    /// Mask erosion rate: a mask keeps `exp(-rate * age)` of its pixels.
    pub decay_per_frame: f64,
    /// Drift toward the occluder per contaminated memory entry.
    pub contamination_rate: f64,
    /// Below this visibility an occluded object's mask latches onto its
    /// occluder and the frame's memory entry becomes contaminated.
    pub confusion_visibility: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            occ_min: -4.0,
            occ_max: 10.0,
            occ_decay_per_frame: 0.08,
            decay_per_frame: 0.002,
            contamination_rate: 0.2,
            confusion_visibility: 0.25,
        }
    }
}

impl OracleConfig {
    /// Monotone map from visibility to occlusion score (linear).
    pub fn occ_of_visibility(&self, visibility: f64) -> f64 {
        self.occ_min + (self.occ_max - self.occ_min) * visibility.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub frames: u32,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub distractors: Vec<ObjectSpec>,
    pub detector_noise: DetectorNoise,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default = "default_label")]
    pub label: String,
}

fn default_label() -> String {
    "animal".into()
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.width == 0 || self.height == 0 || self.frames == 0 {
            return Err(ScenarioError::Invalid("width, height and frames must be positive".into()));
        }
        if self.objects.is_empty() && self.detector_noise.fp_rate <= 0.0 {
            return Err(ScenarioError::Empty);
        }
        for (index, o) in self.objects.iter().chain(&self.distractors).enumerate() {
            if !(o.enter_frame < o.exit_frame && o.exit_frame <= self.frames) {
                return Err(ScenarioError::Object {
                    index,
                    reason: format!(
                        "need 0 <= enter_frame < exit_frame <= {}, got {}..{}",
                        self.frames, o.enter_frame, o.exit_frame
                    ),
                });
            }
            if !(o.size[0] > 0.0 && o.size[1] > 0.0) {
                return Err(ScenarioError::Object {
                    index,
                    reason: "size must be positive".into(),
                });
            }
        }
        let n = &self.detector_noise;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(n.fn_rate) && unit(n.min_visibility) && unit(n.distractor_share) && unit(n.merge_rate)) {
            return Err(ScenarioError::Invalid("detector probabilities must lie in [0, 1]".into()));
        }
        if n.fp_rate < 0.0 || n.box_jitter < 0.0 || n.tp_score_mode.spread < 0.0 || n.fp_score_mode.spread < 0.0 {
            return Err(ScenarioError::Invalid("rates and spreads must be non-negative".into()));
        }
        if n.tp_score_mode.mean <= n.fp_score_mode.mean {
            return Err(ScenarioError::Invalid("true-positive score mode must lie above the false-positive mode".into()));
        }
        if self.oracle.occ_max < self.oracle.occ_min {
            return Err(ScenarioError::Invalid("occ_max must not be below occ_min".into()));
        }
        Ok(())
    }
}

/// One object's state in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectFrame {
    /// Index into `objects` (or `distractors`).
    pub index: usize,
    /// Full extent clipped to the frame.
    pub full: BitMask,
    pub visible: BitMask,
    /// Pixel count of the unclipped shape.
    pub full_area: u64,
    pub visibility: f64,
    /// Closer target hiding the largest part of this object, if any.
    pub occluder: Option<usize>,
}

impl ObjectFrame {
    pub fn bbox(&self) -> Option<BBox> {
        self.visible.to_bbox()
    }

    /// Ground-truth identity in exported tables (1-based).
    pub fn track_id(&self) -> u64 {
        self.index as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameTruth {
    pub objects: Vec<ObjectFrame>,
    pub distractors: Vec<ObjectFrame>,
}

impl FrameTruth {
    pub fn object(&self, index: usize) -> Option<&ObjectFrame> {
        self.objects.iter().find(|o| o.index == index)
    }

    pub fn distractor(&self, index: usize) -> Option<&ObjectFrame> {
        self.distractors.iter().find(|o| o.index == index)
    }
}

/// A generated sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub truth: Vec<FrameTruth>,
    pub detections: Vec<FrameDetections>,
}

impl Scenario {
    /// Ground truth as a MOTChallenge table: one row per object and frame in
    /// which some part of it is visible, boxed around the visible region.
    pub fn ground_truth_table(&self) -> MotTable {
        let mut rows = Vec::new();
        for (t, frame) in self.truth.iter().enumerate() {
            for o in &frame.objects {
                if let Some(bbox) = o.bbox() {
                    rows.push(MotRow {
                        frame: t as u32 + 1,
                        id: o.track_id(),
                        bbox,
                        conf: 1.0,
                        class: 1,
                        visibility: o.visibility,
                    });
                }
            }
        }
        MotTable { rows }
    }

    pub fn all_scores(&self) -> Vec<f64> {
        self.detections
            .iter()
            .flat_map(|f| f.detections.iter().map(|d| d.score))
            .collect()
    }
}

fn render(spec: &ObjectSpec, t: u32) -> (Vec<(i64, i64)>, u64) {
    let (cx, cy) = spec.trajectory.center(t);
    let px = raster::shape_pixels(spec.shape, cx, cy, spec.size);
    let area = px.len() as u64;
    (px, area)
}

fn clipped(width: u32, height: u32, px: &[(i64, i64)]) -> Vec<(u32, u32)> {
    px.iter()
        .filter(|&&(x, y)| x >= 0 && y >= 0 && x < width as i64 && y < height as i64)
        .map(|&(x, y)| (x as u32, y as u32))
        .collect()
}

fn compose_frame(cfg: &ScenarioConfig, t: u32) -> FrameTruth {
    let (w, h) = (cfg.width, cfg.height);
    let mut order: Vec<usize> = (0..cfg.objects.len()).filter(|&i| cfg.objects[i].present(t)).collect();
    order.sort_by_key(|&i| (cfg.objects[i].depth, i));

    // owner[y * w + x] = closest target covering the pixel
    let mut owner: Vec<Option<usize>> = vec![None; w as usize * h as usize];
    let mut objects = Vec::with_capacity(order.len());
    for &i in &order {
        let (px, full_area) = render(&cfg.objects[i], t);
        let inside = clipped(w, h, &px);
        let mut visible = Vec::new();
        let mut hidden_by: Vec<(usize, u64)> = Vec::new();
        for &(x, y) in &inside {
            let cell = &mut owner[y as usize * w as usize + x as usize];
            match *cell {
                None => {
                    *cell = Some(i);
                    visible.push((x, y));
                }
                Some(front) => match hidden_by.iter_mut().find(|e| e.0 == front) {
                    Some(e) => e.1 += 1,
                    None => hidden_by.push((front, 1)),
                },
            }
        }
        let occluder = hidden_by
            .iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|e| e.0);
        let vis_area = visible.len() as u64;
        objects.push(ObjectFrame {
            index: i,
            full: BitMask::from_pixels(w, h, inside),
            visible: BitMask::from_pixels(w, h, visible),
            full_area,
            visibility: if full_area == 0 { 0.0 } else { vis_area as f64 / full_area as f64 },
            occluder,
        });
    }
    objects.sort_by_key(|o| o.index);

    // distractors sit behind every target
    let mut distractors = Vec::new();
    for (i, spec) in cfg.distractors.iter().enumerate().filter(|(_, s)| s.present(t)) {
        let (px, full_area) = render(spec, t);
        let inside = clipped(w, h, &px);
        let visible: Vec<_> = inside
            .iter()
            .copied()
            .filter(|&(x, y)| owner[y as usize * w as usize + x as usize].is_none())
            .collect();
        let vis_area = visible.len() as u64;
        distractors.push(ObjectFrame {
            index: i,
            full: BitMask::from_pixels(w, h, inside),
            visible: BitMask::from_pixels(w, h, visible),
            full_area,
            visibility: if full_area == 0 { 0.0 } else { vis_area as f64 / full_area as f64 },
            occluder: None,
        });
    }
    FrameTruth { objects, distractors }
}

/// Visible box of the target overlapping `b` the most, if any does.
fn touching(frame: &FrameTruth, index: usize, b: &BBox) -> Option<BBox> {
    frame
        .objects
        .iter()
        .filter(|o| o.index != index)
        .filter_map(|o| o.bbox())
        .map(|n| (b.intersection_area(&n), n))
        .filter(|(a, _)| *a > 0.0)
        .max_by(|x, y| x.0.total_cmp(&y.0))
        .map(|(_, n)| n)
}

fn hull(a: &BBox, b: &BBox) -> BBox {
    let x = a.x().min(b.x());
    let y = a.y().min(b.y());
    BBox::new(x, y, a.right().max(b.right()) - x, a.bottom().max(b.bottom()) - y).expect("hull of valid boxes")
}

fn sample_score(rng: &mut ChaCha8Rng, mode: ScoreMode) -> f64 {
    let v = if mode.spread > 0.0 {
        Normal::new(mode.mean, mode.spread).expect("spread is positive").sample(rng)
    } else {
        mode.mean
    };
    v.clamp(0.0, 1.0)
}

fn jitter(rng: &mut ChaCha8Rng, b: &BBox, amount: f64, width: u32, height: u32) -> BBox {
    if amount <= 0.0 {
        return *b;
    }
    let n = Normal::new(0.0, amount).expect("jitter is positive");
    let (cx, cy) = b.center();
    let cx = cx + n.sample(rng) * b.w();
    let cy = cy + n.sample(rng) * b.h();
    let w = (b.w() * n.sample(rng).exp()).max(1.0);
    let h = (b.h() * n.sample(rng).exp()).max(1.0);
    let x = (cx - 0.5 * w).clamp(-0.5 * w, width as f64 - 0.5 * w);
    let y = (cy - 0.5 * h).clamp(-0.5 * h, height as f64 - 0.5 * h);
    BBox::new(x, y, w, h).expect("jittered box keeps positive size")
}

/// Generates ground truth and detections. Identical configurations give
/// bit-identical output.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = &cfg.detector_noise;
    let poisson = (noise.fp_rate > 0.0).then(|| Poisson::new(noise.fp_rate).expect("rate is positive"));
    let mut truth = Vec::with_capacity(cfg.frames as usize);
    let mut detections = Vec::with_capacity(cfg.frames as usize);
    for t in 0..cfg.frames {
        let frame = compose_frame(cfg, t);
        let mut dets = Vec::new();
        for o in &frame.objects {
            let Some(b) = o.bbox() else { continue };
            if o.visibility < noise.min_visibility {
                continue;
            }
            if rng.random::<f64>() < noise.fn_rate {
                continue;
            }
            let b = match touching(&frame, o.index, &b) {
                Some(n) if rng.random::<f64>() < noise.merge_rate => hull(&b, &n),
                _ => b,
            };
            let bbox = jitter(&mut rng, &b, noise.box_jitter, cfg.width, cfg.height);
            let score = sample_score(&mut rng, noise.tp_score_mode);
            dets.push(Detection::new(t, bbox, score, cfg.label.clone()).expect("score clamped"));
        }
        let fp_count = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        let visible_distractors: Vec<BBox> = frame.distractors.iter().filter_map(|d| d.bbox()).collect();
        for _ in 0..fp_count {
            let on_distractor = !visible_distractors.is_empty() && rng.random::<f64>() < noise.distractor_share;
            let bbox = if on_distractor {
                let d = visible_distractors[rng.random_range(0..visible_distractors.len())];
                jitter(&mut rng, &d, noise.box_jitter, cfg.width, cfg.height)
            } else {
                let max_w = (cfg.width as f64 * 0.25).max(4.0);
                let max_h = (cfg.height as f64 * 0.25).max(4.0);
                let w = rng.random_range(3.0..max_w);
                let h = rng.random_range(3.0..max_h);
                let x = rng.random_range(0.0..(cfg.width as f64 - w).max(1.0));
                let y = rng.random_range(0.0..(cfg.height as f64 - h).max(1.0));
                BBox::new(x, y, w, h).expect("positive size")
            };
            let score = sample_score(&mut rng, noise.fp_score_mode);
            dets.push(Detection::new(t, bbox, score, cfg.label.clone()).expect("score clamped"));
        }
        dets.sort_by(|a, b| b.score.total_cmp(&a.score));
        detections.push(FrameDetections { frame: t, detections: dets });
        truth.push(frame);
    }
    Ok(Scenario {
        config: cfg.clone(),
        truth,
        detections,
    })
}
