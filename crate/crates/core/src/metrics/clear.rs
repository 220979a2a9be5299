use serde::{Deserialize, Serialize};

use super::Prepared;
use crate::association::max_weight_matching;

/// CLEAR MOT counts at a fixed IoU threshold.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClearCounts {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub idsw: u64,
    pub frag: u64,
    pub motp_sum: f64,
}

impl ClearCounts {
    pub fn mota(&self) -> f64 {
        (self.tp as f64 - self.fp as f64 - self.idsw as f64) / (self.tp + self.fn_).max(1) as f64
    }

    pub fn motp(&self) -> f64 {
        self.motp_sum / self.tp.max(1) as f64
    }

    pub(super) fn add(&mut self, o: &ClearCounts) {
        self.tp += o.tp;
        self.fn_ += o.fn_;
        self.fp += o.fp;
        self.idsw += o.idsw;
        self.frag += o.frag;
        self.motp_sum += o.motp_sum;
    }
}

/// Matching prefers continuing last frame's correspondence; an identity
/// switch is a ground-truth object matched to a different prediction than
/// the last time it was matched.
pub fn clear_counts(p: &Prepared, threshold: f64) -> ClearCounts {
    let mut c = ClearCounts::default();
    let mut prev: Vec<Option<usize>> = vec![None; p.num_gt_ids];
    let mut prev_step: Vec<Option<usize>> = vec![None; p.num_gt_ids];
    for t in 0..p.similarity.len() {
        let sim = &p.similarity[t];
        let (gi, pi) = (&p.gt_ids[t], &p.pred_ids[t]);
        if gi.is_empty() {
            c.fp += pi.len() as u64;
            continue;
        }
        if pi.is_empty() {
            c.fn_ += gi.len() as u64;
            continue;
        }
        let score: Vec<Vec<f64>> = gi
            .iter()
            .enumerate()
            .map(|(a, &g)| {
                pi.iter()
                    .enumerate()
                    .map(|(b, &q)| {
                        if sim[a][b] < threshold - f64::EPSILON {
                            0.0
                        } else {
                            let bonus = if prev_step[g] == Some(q) { 1000.0 } else { 0.0 };
                            bonus + sim[a][b]
                        }
                    })
                    .collect()
            })
            .collect();
        let pairs = max_weight_matching(&score);
        let mut matched_now = Vec::with_capacity(pairs.len());
        for &(a, b) in &pairs {
            let (g, q) = (gi[a], pi[b]);
            if prev[g].is_some_and(|old| old != q) {
                c.idsw += 1;
            }
            c.motp_sum += sim[a][b];
            matched_now.push((g, q));
        }
        let not_tracked_before: Vec<bool> = prev_step.iter().map(Option::is_none).collect();
        for s in prev_step.iter_mut() {
            *s = None;
        }
        for &(g, q) in &matched_now {
            prev[g] = Some(q);
            prev_step[g] = Some(q);
        }
        c.frag += matched_now.iter().filter(|&&(g, _)| not_tracked_before[g]).count() as u64;
        let n = matched_now.len() as u64;
        c.tp += n;
        c.fn_ += gi.len() as u64 - n;
        c.fp += pi.len() as u64 - n;
    }
    c
}

/// Identity-level counts from the best one-to-one id correspondence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityCounts {
    pub idtp: u64,
    pub idfn: u64,
    pub idfp: u64,
}

impl IdentityCounts {
    pub fn idf1(&self) -> f64 {
        self.idtp as f64 / (self.idtp as f64 + 0.5 * (self.idfp + self.idfn) as f64).max(1.0)
    }

    pub fn idp(&self) -> f64 {
        self.idtp as f64 / (self.idtp + self.idfp).max(1) as f64
    }

    pub fn idr(&self) -> f64 {
        self.idtp as f64 / (self.idtp + self.idfn).max(1) as f64
    }

    pub(super) fn add(&mut self, o: &IdentityCounts) {
        self.idtp += o.idtp;
        self.idfn += o.idfn;
        self.idfp += o.idfp;
    }
}

pub fn identity_counts(p: &Prepared, threshold: f64) -> IdentityCounts {
    let mut potential = vec![vec![0.0f64; p.num_pred_ids]; p.num_gt_ids];
    for t in 0..p.similarity.len() {
        for (a, &g) in p.gt_ids[t].iter().enumerate() {
            for (b, &q) in p.pred_ids[t].iter().enumerate() {
                if p.similarity[t][a][b] >= threshold - f64::EPSILON {
                    potential[g][q] += 1.0;
                }
            }
        }
    }
    let idtp: f64 = max_weight_matching(&potential).iter().map(|&(g, q)| potential[g][q]).sum();
    let idtp = idtp as u64;
    IdentityCounts {
        idtp,
        idfn: p.gt_dets() as u64 - idtp,
        idfp: p.pred_dets() as u64 - idtp,
    }
}
