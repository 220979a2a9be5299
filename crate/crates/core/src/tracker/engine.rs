use serde::{Deserialize, Serialize};

use super::rules::{self, GateDecision, InitDecision, OcclusionRule, RejectReason};
use super::{InitMode, Track, TrackState, TrackerConfig};
use crate::association::{hungarian_match, iou_matrix};
use crate::geometry::{BBox, BitMask, Detection, OcclusionScore};
use crate::protocol::{SequenceInfo, Segmenter, SegmenterError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event")]
pub enum Event {
    Created {
        track_id: u64,
        detection: usize,
        max_nmi: f64,
    },
    Rejected {
        detection: usize,
        reason: RejectReason,
    },
    Reprompted {
        track_id: u64,
        detection: usize,
        best_iou: f64,
        second_iou: f64,
        gap: f64,
        occ: f64,
    },
    MemoryDropped {
        track_id: u64,
        occluder: u64,
        rule: OcclusionRule,
        mask_iou: f64,
    },
    Suppressed {
        track_id: u64,
        by: u64,
        mask_iou: f64,
    },
    Terminated {
        track_id: u64,
        lost_streak: u32,
    },
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub frame: u32,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub track_id: u64,
    pub bbox: BBox,
    pub mask: BitMask,
    pub occ: OcclusionScore,
}

/// Lifecycle snapshot of one track after a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackStatus {
    pub track_id: u64,
    pub state: TrackState,
    pub occ: f64,
    pub lost_streak: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: u32,
    /// Sorted by track id.
    pub outputs: Vec<TrackOutput>,
    pub events: Vec<Event>,
    /// Every track that was active at the start of the frame or created in it.
    pub statuses: Vec<TrackStatus>,
}

/// Tracking state for one sequence, bound to one segmenter session.
pub struct Tracker<S> {
    cfg: TrackerConfig,
    session: S,
    info: SequenceInfo,
    tracks: Vec<Track>,
    next_id: u64,
    next_frame: u32,
}

impl<S: Segmenter> Tracker<S> {
    /// Opens the sequence on the segmenter.
    pub fn new(mut session: S, info: SequenceInfo, cfg: TrackerConfig) -> Result<Self, SegmenterError> {
        session.open_sequence(&info)?;
        Ok(Self {
            cfg,
            session,
            info,
            tracks: Vec::new(),
            next_id: 1,
            next_frame: 0,
        })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Closes the sequence and hands the session back.
    pub fn finish(mut self) -> Result<S, SegmenterError> {
        self.session.close_sequence()?;
        Ok(self.session)
    }

    fn active(&self) -> Vec<usize> {
        (0..self.tracks.len()).filter(|&i| self.tracks[i].is_active()).collect()
    }

    /// Processes the next frame. `detections` must already be filtered by
    /// the sequence threshold.
    pub fn step(&mut self, detections: &[Detection]) -> Result<FrameResult, SegmenterError> {
        let frame = self.next_frame;
        let cfg = self.cfg.clone();
        let mut events = Vec::new();

        // 1. propagate
        let entries = self.session.propagate(frame)?;
        let mut fresh: Vec<Option<(BitMask, OcclusionScore)>> = vec![None; self.tracks.len()];
        for e in entries {
            if let Some(i) = self.tracks.iter().position(|t| t.id == e.track_id) {
                if self.tracks[i].is_active() {
                    fresh[i] = Some((e.mask, e.occ));
                }
            }
        }
        let started: Vec<usize> = self.active();
        for &i in &started {
            let Some((mask, occ)) = fresh[i].take() else {
                return Err(SegmenterError::Malformed(format!(
                    "propagate for frame {frame} is missing track {}",
                    self.tracks[i].id
                )));
            };
            self.tracks[i].set_mask(mask, occ);
            // 2. lifecycle
            self.tracks[i].update_lifecycle(occ, &cfg);
        }

        // 3. cross-object interaction
        let live = self.active();
        if cfg.cross_object && live.len() >= 2 {
            let views: Vec<&Track> = live.iter().map(|&i| &self.tracks[i]).collect();
            let drops = rules::cross_object_interaction(&views, &cfg);
            for d in drops {
                let (id, by) = (views[d.occluded].id, views[d.occluder].id);
                self.session.drop_memory(id, frame)?;
                events.push(Event::MemoryDropped {
                    track_id: id,
                    occluder: by,
                    rule: d.rule,
                    mask_iou: d.mask_iou,
                });
            }
        }

        // 4. association
        let boxes: Vec<Option<BBox>> = live.iter().map(|&i| self.tracks[i].bbox).collect();
        let det_boxes: Vec<BBox> = detections.iter().map(|d| d.bbox).collect();
        let ious = iou_matrix(&det_boxes, &boxes);
        let assignment = hungarian_match(&ious, cfg.match_floor);

        // 5. density-aware reconstruction
        for &(d, k) in &assignment.pairs {
            let ti = live[k];
            let occ = self.tracks[ti].occ.value();
            if let GateDecision::Reprompt { best, second, gap } = rules::reconstruction_gate(&ious[d], k, occ, &cfg) {
                let id = self.tracks[ti].id;
                let (mask, occ) = self.session.prompt(frame, id, detections[d].bbox)?;
                let t = &mut self.tracks[ti];
                t.set_mask(mask, occ);
                t.last_prompt_frame = frame;
                events.push(Event::Reprompted {
                    track_id: id,
                    detection: d,
                    best_iou: best,
                    second_iou: second,
                    gap,
                    occ: occ.value(),
                });
            }
        }

        // 6. initialization, strongest detections first
        let mut pending = assignment.unmatched_detections.clone();
        pending.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score).then(a.cmp(&b)));
        for d in pending {
            let bbox = detections[d].bbox;
            if cfg.init_mode == InitMode::UnassignedPixels {
                let masks = self.tracks.iter().filter(|t| t.is_active()).map(|t| &t.mask);
                let free = rules::unassigned_fraction(&bbox, masks, self.info.width, self.info.height);
                if free <= 0.5 {
                    events.push(Event::Rejected {
                        detection: d,
                        reason: RejectReason::Covered { unassigned: free },
                    });
                    continue;
                }
            }
            let id = self.next_id;
            self.next_id += 1;
            let (mask, occ) = self.session.prompt(frame, id, bbox)?;
            let decision = match cfg.init_mode {
                InitMode::MaskOverlap => {
                    let existing = self.tracks.iter().filter(|t| t.is_active()).map(|t| &t.mask);
                    rules::init_decision(&mask, existing, &cfg)
                }
                InitMode::UnassignedPixels => rules::init_decision(&mask, [], &cfg),
            };
            match decision {
                InitDecision::Create { max_nmi } => {
                    self.tracks.push(Track::new(id, frame, mask, occ, &cfg));
                    events.push(Event::Created {
                        track_id: id,
                        detection: d,
                        max_nmi,
                    });
                }
                InitDecision::Reject(reason) => {
                    self.session.drop_memory(id, frame)?;
                    events.push(Event::Rejected { detection: d, reason });
                }
            }
        }

        // 7. termination (decided by the lifecycle update in step 2)
        for &i in &started {
            let t = &self.tracks[i];
            if t.state == TrackState::Terminated {
                events.push(Event::Terminated {
                    track_id: t.id,
                    lost_streak: t.lost_streak,
                });
            }
        }

        // 8. mask NMS over the visible tracks
        let shown: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| {
                let t = &self.tracks[i];
                t.is_active() && t.state != TrackState::Lost && !t.mask.is_empty()
            })
            .collect();
        let mut hidden = vec![false; shown.len()];
        if cfg.mask_nms {
            let views: Vec<&Track> = shown.iter().map(|&i| &self.tracks[i]).collect();
            for s in rules::mask_nms(&views, &cfg) {
                hidden[s.suppressed] = true;
                events.push(Event::Suppressed {
                    track_id: views[s.suppressed].id,
                    by: views[s.by].id,
                    mask_iou: s.mask_iou,
                });
            }
        }
        let mut outputs: Vec<TrackOutput> = shown
            .iter()
            .zip(&hidden)
            .filter(|(_, &h)| !h)
            .map(|(&i, _)| {
                let t = &self.tracks[i];
                TrackOutput {
                    track_id: t.id,
                    bbox: t.bbox.expect("nonempty mask has a box"),
                    mask: t.mask.clone(),
                    occ: t.occ,
                }
            })
            .collect();
        outputs.sort_by_key(|o| o.track_id);

        let statuses = self
            .tracks
            .iter()
            .filter(|t| t.is_active() || t.state == TrackState::Terminated && started.iter().any(|&i| self.tracks[i].id == t.id))
            .map(|t| TrackStatus {
                track_id: t.id,
                state: t.state,
                occ: t.occ.value(),
                lost_streak: t.lost_streak,
            })
            .collect();

        self.next_frame += 1;
        Ok(FrameResult {
            frame,
            outputs,
            events,
            statuses,
        })
    }
}
