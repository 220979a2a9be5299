//! Track lifecycle and the per-frame tracking loop.
//!
//! [`Tracker::step`] runs one frame: propagate, update lifecycles, resolve
//! cross-object occlusion, match detections to track boxes, re-prompt where
//! the density-aware gate allows, initialize tracks from unmatched
//! detections, terminate long-lost tracks and finally suppress duplicate
//! masks in the output. The individual decisions live in [`rules`] as pure
//! functions.

mod engine;
pub mod rules;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, BitMask, OcclusionScore};
use crate::io::config::ConfigError;

pub use engine::{Event, FrameResult, LoggedEvent, TrackOutput, TrackStatus, Tracker};
pub use rules::{GateDecision, InitDecision, OcclusionRule, RejectReason};

/// How unmatched detections become tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Prompt, then keep the track only if its mask is not mostly covered
    /// by an existing track mask.
    #[default]
    MaskOverlap,
    /// Prompt only when more than half of the box is not covered by any
    /// track mask.
    UnassignedPixels,
}

/// When a matched detection re-prompts its track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionMode {
    /// Occlusion score in the pending band and an unambiguous best match.
    #[default]
    DensityAware,
    /// Occlusion score in the pending band, regardless of crowding.
    Band,
    /// Every matched detection.
    Always,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Largest tolerated overlap of a new mask with an existing one.
    pub tau_mask: f64,
    /// Required gap between best and second-best box IoU for re-prompting.
    pub tau_iou: f64,
    pub tau_reliable: f64,
    pub tau_pending: f64,
    pub tau_lost: f64,
    /// Consecutive lost frames before termination.
    pub n_lost: u32,
    /// Length of the occlusion-score history.
    pub n_frames: usize,
    pub tau_miou: f64,
    pub tau_dscore: f64,
    pub tau_dstd: f64,
    pub tau_nms: f64,
    /// Detection-track pairs below this box IoU are never matched.
    pub match_floor: f64,
    pub init_mode: InitMode,
    pub reconstruction: ReconstructionMode,
    pub cross_object: bool,
    pub mask_nms: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            tau_mask: 0.4,
            tau_iou: 0.3,
            tau_reliable: 8.0,
            tau_pending: 6.0,
            tau_lost: 2.0,
            n_lost: 25,
            n_frames: 10,
            tau_miou: 0.8,
            tau_dscore: 2.0,
            tau_dstd: 0.2,
            tau_nms: 0.95,
            match_floor: 0.1,
            init_mode: InitMode::MaskOverlap,
            reconstruction: ReconstructionMode::DensityAware,
            cross_object: true,
            mask_nms: true,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = [
            self.tau_reliable,
            self.tau_pending,
            self.tau_lost,
            self.tau_dscore,
            self.tau_dstd,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::constraint(
                &["tau_reliable", "tau_pending", "tau_lost", "tau_dscore", "tau_dstd"],
                "must be finite",
            ));
        }
        if !(self.tau_reliable > self.tau_pending && self.tau_pending > self.tau_lost) {
            return Err(ConfigError::constraint(
                &["tau_reliable", "tau_pending", "tau_lost"],
                format!(
                    "need tau_reliable > tau_pending > tau_lost, got {} / {} / {}",
                    self.tau_reliable, self.tau_pending, self.tau_lost
                ),
            ));
        }
        for (key, v) in [
            ("tau_mask", self.tau_mask),
            ("tau_iou", self.tau_iou),
            ("tau_miou", self.tau_miou),
            ("tau_nms", self.tau_nms),
            ("match_floor", self.match_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::constraint(&[key], format!("must lie in [0, 1], got {v}")));
            }
        }
        if self.tau_dscore < 0.0 || self.tau_dstd < 0.0 {
            return Err(ConfigError::constraint(&["tau_dscore", "tau_dstd"], "must not be negative"));
        }
        if self.n_lost == 0 || self.n_frames == 0 {
            return Err(ConfigError::constraint(&["n_lost", "n_frames"], "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackState {
    /// `occ >= tau_reliable`.
    Reliable,
    /// `tau_pending < occ < tau_reliable`; eligible for re-prompting.
    Pending,
    /// `tau_lost <= occ <= tau_pending`.
    Uncertain,
    /// `occ < tau_lost`.
    Lost,
    Terminated,
}

/// State band of an occlusion score.
pub fn classify(occ: f64, cfg: &TrackerConfig) -> TrackState {
    if occ >= cfg.tau_reliable {
        TrackState::Reliable
    } else if occ > cfg.tau_pending {
        TrackState::Pending
    } else if occ < cfg.tau_lost {
        TrackState::Lost
    } else {
        TrackState::Uncertain
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: TrackState,
    pub mask: BitMask,
    /// Always derived from `mask`.
    pub bbox: Option<BBox>,
    /// Latest occlusion score, including one returned by a re-prompt.
    pub occ: OcclusionScore,
    pub occ_history: VecDeque<f64>,
    pub lost_streak: u32,
    pub born_frame: u32,
    pub last_prompt_frame: u32,
}

impl Track {
    /// A track fresh from a prompt; the prompt's score seeds its history.
    pub fn new(id: u64, frame: u32, mask: BitMask, occ: OcclusionScore, cfg: &TrackerConfig) -> Self {
        let mut t = Self {
            id,
            state: TrackState::Pending,
            bbox: mask.to_bbox(),
            mask,
            occ,
            occ_history: VecDeque::with_capacity(cfg.n_frames),
            lost_streak: 0,
            born_frame: frame,
            last_prompt_frame: frame,
        };
        t.update_lifecycle(occ, cfg);
        t
    }

    pub fn is_active(&self) -> bool {
        self.state != TrackState::Terminated
    }

    pub fn set_mask(&mut self, mask: BitMask, occ: OcclusionScore) {
        self.bbox = mask.to_bbox();
        self.mask = mask;
        self.occ = occ;
    }

    /// Records one occlusion score and moves the track to its new state.
    /// Terminated is absorbing.
    pub fn update_lifecycle(&mut self, occ: OcclusionScore, cfg: &TrackerConfig) -> TrackState {
        if self.state == TrackState::Terminated {
            return self.state;
        }
        let v = occ.value();
        self.occ = occ;
        if self.occ_history.len() == cfg.n_frames {
            self.occ_history.pop_front();
        }
        self.occ_history.push_back(v);
        if v < cfg.tau_lost {
            self.lost_streak += 1;
        } else {
            self.lost_streak = 0;
        }
        self.state = if self.lost_streak >= cfg.n_lost {
            TrackState::Terminated
        } else {
            classify(v, cfg)
        };
        self.state
    }

    pub fn occ_mean(&self) -> f64 {
        if self.occ_history.is_empty() {
            return self.occ.value();
        }
        self.occ_history.iter().sum::<f64>() / self.occ_history.len() as f64
    }

    /// Population standard deviation of the history.
    pub fn occ_std(&self) -> f64 {
        let n = self.occ_history.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.occ_mean();
        (self.occ_history.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
    }
}
