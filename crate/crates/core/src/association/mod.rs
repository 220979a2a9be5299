//! Box and mask overlap plus optimal detection-to-track matching.

pub mod hungarian;

use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, BitMask, GeometryError};

pub use hungarian::{linear_assignment, max_weight_matching};

/// Box intersection over union.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// Mask intersection over union. Two empty masks have IoU 0.
pub fn mask_iou(a: &BitMask, b: &BitMask) -> Result<f64, GeometryError> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Result of matching detections (rows) to tracks (columns).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(detection index, track index)` pairs, sorted by detection index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_tracks: Vec<usize>,
}

impl Assignment {
    pub fn total(&self, iou_matrix: &[Vec<f64>]) -> f64 {
        self.pairs.iter().map(|&(d, t)| iou_matrix[d][t]).sum()
    }

    pub fn track_for(&self, detection: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == detection).map(|p| p.1)
    }
}

/// Maximum-total-IoU matching in which every pair has IoU at least
/// `match_floor` (and strictly positive). Solved as a minimum-cost
/// assignment on `1 - IoU`, with sub-floor entries costed as "no match".
pub fn hungarian_match(iou_matrix: &[Vec<f64>], match_floor: f64) -> Assignment {
    let rows = iou_matrix.len();
    let cols = iou_matrix.first().map_or(0, Vec::len);
    let admissible = |v: f64| v >= match_floor && v > 0.0;
    let weights: Vec<Vec<f64>> = iou_matrix
        .iter()
        .map(|r| r.iter().map(|&v| if admissible(v) { v } else { 0.0 }).collect())
        .collect();
    let mut pairs = max_weight_matching(&weights);
    pairs.sort_unstable();
    let mut det_used = vec![false; rows];
    let mut trk_used = vec![false; cols];
    for &(d, t) in &pairs {
        det_used[d] = true;
        trk_used[t] = true;
    }
    Assignment {
        pairs,
        unmatched_detections: (0..rows).filter(|&d| !det_used[d]).collect(),
        unmatched_tracks: (0..cols).filter(|&t| !trk_used[t]).collect(),
    }
}

/// IoU matrix between detection boxes (rows) and track boxes (columns).
/// Tracks without a box contribute a zero column.
pub fn iou_matrix(detections: &[BBox], tracks: &[Option<BBox>]) -> Vec<Vec<f64>> {
    detections
        .iter()
        .map(|d| {
            tracks
                .iter()
                .map(|t| t.as_ref().map_or(0.0, |t| d.iou(t)))
                .collect()
        })
        .collect()
}
