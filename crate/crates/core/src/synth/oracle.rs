//! Segmenter backed by scenario ground truth.
//!
//! Each track is bound to one scene object (a target or a distractor) chosen
//! by box overlap when it is prompted. Propagation returns that object's
//! visible mask, eroded with the time since the last prompt. When the object
//! is almost hidden the returned mask jumps onto its occluder and the frame's
//! memory entry is marked contaminated; every contaminated entry left in
//! memory pulls later masks toward the occluder, and once the pull reaches 1
//! the track is rebound to the occluder for good. Dropping the contaminated
//! entries is the only way to stop the drift.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::raster::keep_fraction;
use super::{FrameTruth, ObjectFrame, Scenario};
use crate::geometry::{BBox, BitMask, OcclusionScore};
use crate::protocol::{SequenceInfo, Segmenter, SegmenterError, TrackMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    Object(usize),
    Distractor(usize),
}

#[derive(Debug, Clone)]
struct OracleTrack {
    bound: Option<Target>,
    prompt_frame: u32,
    /// Memory entries; `Some(q)` marks an entry contaminated by object `q`.
    memory: BTreeMap<u32, Option<usize>>,
}

impl OracleTrack {
    fn contamination(&self) -> (usize, Option<usize>) {
        let hits: Vec<usize> = self.memory.values().flatten().copied().collect();
        (hits.len(), hits.last().copied())
    }
}

/// Protocol-conformant session over a generated [`Scenario`].
#[derive(Debug, Clone)]
pub struct OracleSession {
    scenario: Arc<Scenario>,
    open: bool,
    current: Option<u32>,
    tracks: BTreeMap<u64, OracleTrack>,
}

impl OracleSession {
    pub fn new(scenario: Arc<Scenario>) -> Self {
        Self {
            scenario,
            open: false,
            current: None,
            tracks: BTreeMap::new(),
        }
    }

    pub fn info(&self) -> SequenceInfo {
        let c = &self.scenario.config;
        SequenceInfo {
            sequence_id: c.name.clone(),
            width: c.width,
            height: c.height,
            frames: c.frames,
        }
    }

    /// The scene object a track currently follows.
    pub fn binding(&self, track_id: u64) -> Option<Target> {
        self.tracks.get(&track_id).and_then(|t| t.bound)
    }

    fn truth(&self, frame: u32) -> &FrameTruth {
        &self.scenario.truth[frame as usize]
    }

    fn lookup<'a>(truth: &'a FrameTruth, target: Target) -> Option<&'a ObjectFrame> {
        match target {
            Target::Object(i) => truth.object(i),
            Target::Distractor(i) => truth.distractor(i),
        }
    }

    fn empty(&self) -> BitMask {
        BitMask::empty(self.scenario.config.width, self.scenario.config.height)
    }

    fn occ(&self, visibility: f64, age: u32) -> OcclusionScore {
        let o = &self.scenario.config.oracle;
        let v = o.occ_of_visibility(visibility) - o.occ_decay_per_frame * age as f64;
        OcclusionScore::new(v).expect("finite by construction")
    }

    fn keep(&self, age: u32) -> f64 {
        (-self.scenario.config.oracle.decay_per_frame * age as f64).exp()
    }

    fn bind(&self, frame: u32, bbox: &BBox) -> Option<Target> {
        let truth = self.truth(frame);
        let candidates = truth
            .objects
            .iter()
            .map(|o| (Target::Object(o.index), o))
            .chain(truth.distractors.iter().map(|o| (Target::Distractor(o.index), o)));
        let mut best: Option<(f64, Target)> = None;
        for (target, o) in candidates {
            let Some(b) = o.bbox() else { continue };
            let iou = b.iou(bbox);
            if iou > 0.0 && best.is_none_or(|(s, _)| iou > s) {
                best = Some((iou, target));
            }
        }
        best.map(|(_, t)| t)
    }

    fn check_open(&self) -> Result<(), SegmenterError> {
        if self.open {
            Ok(())
        } else {
            Err(SegmenterError::NotOpen)
        }
    }

    /// Mask and score for one track at `frame`, updating its memory.
    fn advance(&self, track: &mut OracleTrack, frame: u32) -> (BitMask, OcclusionScore) {
        let truth = self.truth(frame);
        let cfg = &self.scenario.config.oracle;
        let age = frame.saturating_sub(track.prompt_frame);
        let keep = self.keep(age);

        let (count, toward) = track.contamination();
        if let Some(q) = toward {
            if cfg.contamination_rate * count as f64 >= 1.0 {
                track.bound = Some(Target::Object(q));
                for entry in track.memory.values_mut() {
                    *entry = None;
                }
            }
        }
        let (count, toward) = track.contamination();
        let drift = (cfg.contamination_rate * count as f64).min(1.0);

        let Some(obj) = track.bound.and_then(|t| Self::lookup(truth, t)) else {
            track.memory.insert(frame, None);
            return (self.empty(), self.occ(0.0, age));
        };
        let occ = self.occ(obj.visibility, age);

        let confused = matches!(track.bound, Some(Target::Object(_)))
            && obj.visibility < cfg.confusion_visibility
            && obj.occluder.is_some();
        if confused {
            let q = obj.occluder.expect("checked");
            track.memory.insert(frame, Some(q));
            let occluder = truth.object(q).expect("occluders are present");
            return (keep_fraction(&occluder.visible, keep), occ);
        }

        track.memory.insert(frame, None);
        let base = keep_fraction(&obj.visible, keep);
        let mask = match toward.and_then(|q| truth.object(q)) {
            Some(q) if drift > 0.0 => keep_fraction(&base, 1.0 - drift)
                .union(&keep_fraction(&q.visible, drift))
                .expect("same frame dims"),
            _ => base,
        };
        (mask, occ)
    }
}

impl Segmenter for OracleSession {
    fn open_sequence(&mut self, info: &SequenceInfo) -> Result<(), SegmenterError> {
        if self.open {
            return Err(SegmenterError::AlreadyOpen);
        }
        let c = &self.scenario.config;
        if (info.width, info.height, info.frames) != (c.width, c.height, c.frames) {
            return Err(SegmenterError::Malformed(format!(
                "sequence is {}x{} with {} frames, scenario is {}x{} with {}",
                info.width, info.height, info.frames, c.width, c.height, c.frames
            )));
        }
        self.open = true;
        self.current = None;
        self.tracks.clear();
        Ok(())
    }

    fn prompt(&mut self, frame: u32, track_id: u64, bbox: BBox) -> Result<(BitMask, OcclusionScore), SegmenterError> {
        self.check_open()?;
        if self.current != Some(frame) {
            return Err(SegmenterError::OutOfOrderFrame {
                expected: self.current.map_or(-1, i64::from),
                got: frame,
            });
        }
        let bound = self.bind(frame, &bbox);
        let track = OracleTrack {
            bound,
            prompt_frame: frame,
            memory: BTreeMap::from([(frame, None)]),
        };
        let result = match bound.and_then(|t| Self::lookup(self.truth(frame), t)) {
            Some(o) => (o.visible.clone(), self.occ(o.visibility, 0)),
            None => (self.empty(), self.occ(0.0, 0)),
        };
        self.tracks.insert(track_id, track);
        Ok(result)
    }

    fn propagate(&mut self, frame: u32) -> Result<Vec<TrackMask>, SegmenterError> {
        self.check_open()?;
        let expected = self.current.map_or(0, |c| c + 1);
        if frame != expected {
            return Err(SegmenterError::OutOfOrderFrame {
                expected: expected as i64,
                got: frame,
            });
        }
        if frame >= self.scenario.config.frames {
            return Err(SegmenterError::FrameOutOfRange(frame));
        }
        self.current = Some(frame);
        let mut tracks = std::mem::take(&mut self.tracks);
        let mut out = Vec::with_capacity(tracks.len());
        for (&track_id, track) in tracks.iter_mut() {
            let (mask, occ) = self.advance(track, frame);
            out.push(TrackMask { track_id, mask, occ });
        }
        self.tracks = tracks;
        Ok(out)
    }

    fn drop_memory(&mut self, track_id: u64, frame: u32) -> Result<(), SegmenterError> {
        self.check_open()?;
        if let Some(t) = self.tracks.get_mut(&track_id) {
            t.memory.remove(&frame);
            if t.memory.is_empty() {
                self.tracks.remove(&track_id);
            }
        }
        Ok(())
    }

    fn close_sequence(&mut self) -> Result<(), SegmenterError> {
        self.check_open()?;
        self.open = false;
        self.current = None;
        self.tracks.clear();
        Ok(())
    }
}
