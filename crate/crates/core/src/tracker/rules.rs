//! Pure decision rules used by the tracking loop.

use serde::{Deserialize, Serialize};

use super::{ReconstructionMode, Track, TrackerConfig};
use crate::association::mask_iou;
use crate::geometry::{BBox, BitMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RejectReason {
    /// The segmenter found nothing inside the box.
    EmptyMask,
    /// The new mask lies mostly inside an existing track mask.
    Overlap { max_nmi: f64 },
    /// Too little of the box is free of existing track masks.
    Covered { unassigned: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitDecision {
    Create { max_nmi: f64 },
    Reject(RejectReason),
}

/// `|new ∩ existing| / |new|`. Zero for an empty new mask.
pub fn nmi(new: &BitMask, existing: &BitMask) -> f64 {
    let area = new.area();
    if area == 0 {
        return 0.0;
    }
    new.intersection_area(existing).unwrap_or(0) as f64 / area as f64
}

/// Largest normalized intersection with any existing mask; 0 when there are
/// none.
pub fn max_nmi<'a>(new: &BitMask, existing: impl IntoIterator<Item = &'a BitMask>) -> f64 {
    existing.into_iter().map(|m| nmi(new, m)).fold(0.0, f64::max)
}

/// A prompted mask becomes a track iff it is nonempty and its maximum
/// normalized intersection stays strictly below `tau_mask`.
pub fn init_decision<'a>(
    new: &BitMask,
    existing: impl IntoIterator<Item = &'a BitMask>,
    cfg: &TrackerConfig,
) -> InitDecision {
    if new.is_empty() {
        return InitDecision::Reject(RejectReason::EmptyMask);
    }
    let max_nmi = max_nmi(new, existing);
    if max_nmi < cfg.tau_mask {
        InitDecision::Create { max_nmi }
    } else {
        InitDecision::Reject(RejectReason::Overlap { max_nmi })
    }
}

/// Share of the pixels inside `bbox` that no mask covers. A box covering no
/// pixel counts as fully unassigned.
pub fn unassigned_fraction<'a>(bbox: &BBox, masks: impl IntoIterator<Item = &'a BitMask>, width: u32, height: u32) -> f64 {
    let boxed = bbox.to_mask(width, height);
    let total = boxed.area();
    if total == 0 {
        return 1.0;
    }
    let mut free = boxed;
    for m in masks {
        if m.dims() == free.dims() {
            free = free.difference(m).expect("dims checked");
        }
    }
    free.area() as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateDecision {
    Reprompt { best: f64, second: f64, gap: f64 },
    Skip { best: f64, second: f64, gap: f64 },
}

impl GateDecision {
    pub fn is_reprompt(&self) -> bool {
        matches!(self, GateDecision::Reprompt { .. })
    }
}

/// Whether `tau_pending < occ < tau_reliable`.
pub fn in_pending_band(occ: f64, cfg: &TrackerConfig) -> bool {
    cfg.tau_pending < occ && occ < cfg.tau_reliable
}

/// Re-prompting decision for a detection matched to track `matched`.
/// `ious[i]` is the box IoU of the detection with track `i`. The gap is the
/// best IoU minus the second best, where a missing second track counts as 0.
pub fn reconstruction_gate(ious: &[f64], matched: usize, occ: f64, cfg: &TrackerConfig) -> GateDecision {
    let mut best = (0.0, None);
    let mut second = 0.0;
    for (i, &v) in ious.iter().enumerate() {
        if best.1.is_none() || v > best.0 {
            second = if best.1.is_some() { best.0 } else { 0.0 };
            best = (v, Some(i));
        } else if v > second {
            second = v;
        }
    }
    let (best_iou, best_idx) = best;
    let gap = best_iou - second;
    let go = match cfg.reconstruction {
        ReconstructionMode::DensityAware => gap > cfg.tau_iou && in_pending_band(occ, cfg) && best_idx == Some(matched),
        ReconstructionMode::Band => in_pending_band(occ, cfg),
        ReconstructionMode::Always => true,
        ReconstructionMode::Off => false,
    };
    if go {
        GateDecision::Reprompt {
            best: best_iou,
            second,
            gap,
        }
    } else {
        GateDecision::Skip {
            best: best_iou,
            second,
            gap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionRule {
    /// Mean occlusion scores differ by more than `tau_dscore`.
    MeanScore,
    /// Standard deviations differ by more than `tau_dstd`.
    Variance,
}

/// Which of two overlapping tracks is occluded, from their score statistics:
/// `Some(true)` for the first, `Some(false)` for the second.
pub fn occluded_side(a: (f64, f64), b: (f64, f64), cfg: &TrackerConfig) -> Option<(bool, OcclusionRule)> {
    let ((mean_a, std_a), (mean_b, std_b)) = (a, b);
    if (mean_a - mean_b).abs() > cfg.tau_dscore {
        Some((mean_a < mean_b, OcclusionRule::MeanScore))
    } else if (std_a - std_b).abs() > cfg.tau_dstd {
        Some((std_a > std_b, OcclusionRule::Variance))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occlusion {
    /// Index of the occluded track.
    pub occluded: usize,
    pub occluder: usize,
    pub rule: OcclusionRule,
    pub mask_iou: f64,
}

/// Pairs of tracks whose masks overlap by more than `tau_miou`, resolved to
/// the occluded member. Each track is reported at most once, for its first
/// offending pair in index order.
pub fn cross_object_interaction(tracks: &[&Track], cfg: &TrackerConfig) -> Vec<Occlusion> {
    let mut out: Vec<Occlusion> = Vec::new();
    let stats: Vec<(f64, f64)> = tracks.iter().map(|t| (t.occ_mean(), t.occ_std())).collect();
    for i in 0..tracks.len() {
        for j in i + 1..tracks.len() {
            let iou = mask_iou(&tracks[i].mask, &tracks[j].mask).unwrap_or(0.0);
            if iou <= cfg.tau_miou {
                continue;
            }
            let Some((first, rule)) = occluded_side(stats[i], stats[j], cfg) else { continue };
            let (occluded, occluder) = if first { (i, j) } else { (j, i) };
            if out.iter().all(|o| o.occluded != occluded) {
                out.push(Occlusion {
                    occluded,
                    occluder,
                    rule,
                    mask_iou: iou,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Suppression {
    pub suppressed: usize,
    pub by: usize,
    pub mask_iou: f64,
}

/// Greedy mask NMS. Tracks are ranked by current occlusion score, then age
/// (older first), then id; a track is suppressed when its mask IoU with an
/// already kept track exceeds `tau_nms`.
pub fn mask_nms(tracks: &[&Track], cfg: &TrackerConfig) -> Vec<Suppression> {
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by(|&a, &b| {
        let (ta, tb) = (tracks[a], tracks[b]);
        tb.occ
            .value()
            .total_cmp(&ta.occ.value())
            .then(ta.born_frame.cmp(&tb.born_frame))
            .then(ta.id.cmp(&tb.id))
    });
    let mut kept: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for i in order {
        let hit = kept.iter().find_map(|&k| {
            let iou = mask_iou(&tracks[i].mask, &tracks[k].mask).unwrap_or(0.0);
            (iou > cfg.tau_nms).then_some((k, iou))
        });
        match hit {
            Some((by, mask_iou)) => out.push(Suppression {
                suppressed: i,
                by,
                mask_iou,
            }),
            None => kept.push(i),
        }
    }
    out.sort_by_key(|s| s.suppressed);
    out
}
