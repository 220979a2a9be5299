use serde::{Deserialize, Serialize};

use super::Prepared;
use crate::association::max_weight_matching;

/// HOTA counts and association scores at one localization threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCounts {
    pub alpha: f64,
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub assa: f64,
    pub assre: f64,
    pub asspr: f64,
    pub loca: f64,
}

impl AlphaCounts {
    pub fn deta(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_ + self.fp).max(1) as f64
    }

    pub fn detre(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_).max(1) as f64
    }

    pub fn detpr(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fp).max(1) as f64
    }

    pub fn hota(&self) -> f64 {
        (self.deta() * self.assa).sqrt()
    }

    pub(super) fn pooled<'a>(parts: impl Iterator<Item = &'a AlphaCounts>) -> Self {
        let parts: Vec<&AlphaCounts> = parts.collect();
        let tp: u64 = parts.iter().map(|p| p.tp).sum();
        let weighted = |f: fn(&AlphaCounts) -> f64| {
            parts.iter().map(|p| f(p) * p.tp as f64).sum::<f64>() / (tp as f64).max(1e-10)
        };
        Self {
            alpha: parts.first().map_or(0.0, |p| p.alpha),
            tp,
            fn_: parts.iter().map(|p| p.fn_).sum(),
            fp: parts.iter().map(|p| p.fp).sum(),
            assa: weighted(|p| p.assa),
            assre: weighted(|p| p.assre),
            asspr: weighted(|p| p.asspr),
            loca: weighted(|p| p.loca),
        }
    }
}

/// Soft identity alignment between every ground-truth and predicted id,
/// accumulated over the whole sequence.
pub fn global_alignment(p: &Prepared) -> Vec<Vec<f64>> {
    let (ng, np) = (p.num_gt_ids, p.num_pred_ids);
    let mut potential = vec![vec![0.0; np]; ng];
    let mut gt_count = vec![0.0; ng];
    let mut pred_count = vec![0.0; np];
    for t in 0..p.similarity.len() {
        let sim = &p.similarity[t];
        let (gi, pi) = (&p.gt_ids[t], &p.pred_ids[t]);
        let row_sum: Vec<f64> = sim.iter().map(|r| r.iter().sum()).collect();
        let col_sum: Vec<f64> = (0..pi.len()).map(|j| sim.iter().map(|r| r[j]).sum()).collect();
        for (a, &g) in gi.iter().enumerate() {
            for (b, &q) in pi.iter().enumerate() {
                let denom = row_sum[a] + col_sum[b] - sim[a][b];
                if denom > f64::EPSILON {
                    potential[g][q] += sim[a][b] / denom;
                }
            }
        }
        for &g in gi {
            gt_count[g] += 1.0;
        }
        for &q in pi {
            pred_count[q] += 1.0;
        }
    }
    for g in 0..ng {
        for q in 0..np {
            potential[g][q] /= gt_count[g] + pred_count[q] - potential[g][q];
        }
    }
    potential
}

pub fn hota_counts(p: &Prepared, alphas: &[f64]) -> Vec<AlphaCounts> {
    let (gt_dets, pred_dets) = (p.gt_dets() as u64, p.pred_dets() as u64);
    let blank = |alpha: f64| AlphaCounts {
        alpha,
        tp: 0,
        fn_: 0,
        fp: 0,
        assa: 0.0,
        assre: 0.0,
        asspr: 0.0,
        loca: 1.0,
    };
    if pred_dets == 0 || gt_dets == 0 {
        return alphas
            .iter()
            .map(|&a| AlphaCounts {
                fn_: gt_dets * (pred_dets == 0) as u64,
                fp: pred_dets * (pred_dets != 0) as u64,
                ..blank(a)
            })
            .collect();
    }

    let align = global_alignment(p);
    let (ng, np) = (p.num_gt_ids, p.num_pred_ids);
    let na = alphas.len();
    let mut tp = vec![0u64; na];
    let mut fn_ = vec![0u64; na];
    let mut fp = vec![0u64; na];
    let mut loc = vec![0.0f64; na];
    let mut matches = vec![vec![vec![0u64; np]; ng]; na];
    let mut gt_count = vec![0u64; ng];
    let mut pred_count = vec![0u64; np];

    for t in 0..p.similarity.len() {
        let sim = &p.similarity[t];
        let (gi, pi) = (&p.gt_ids[t], &p.pred_ids[t]);
        for &g in gi {
            gt_count[g] += 1;
        }
        for &q in pi {
            pred_count[q] += 1;
        }
        if gi.is_empty() || pi.is_empty() {
            for k in 0..na {
                fn_[k] += gi.len() as u64;
                fp[k] += pi.len() as u64;
            }
            continue;
        }
        let score: Vec<Vec<f64>> = gi
            .iter()
            .enumerate()
            .map(|(a, &g)| pi.iter().enumerate().map(|(b, &q)| align[g][q] * sim[a][b]).collect())
            .collect();
        let pairs = max_weight_matching(&score);
        for (k, &alpha) in alphas.iter().enumerate() {
            let mut n = 0u64;
            for &(a, b) in &pairs {
                if sim[a][b] >= alpha - f64::EPSILON {
                    n += 1;
                    loc[k] += sim[a][b];
                    matches[k][gi[a]][pi[b]] += 1;
                }
            }
            tp[k] += n;
            fn_[k] += gi.len() as u64 - n;
            fp[k] += pi.len() as u64 - n;
        }
    }

    (0..na)
        .map(|k| {
            let m = &matches[k];
            let (mut assa, mut assre, mut asspr) = (0.0, 0.0, 0.0);
            for g in 0..ng {
                for q in 0..np {
                    let c = m[g][q];
                    if c == 0 {
                        continue;
                    }
                    let c = c as f64;
                    let (gc, pc) = (gt_count[g] as f64, pred_count[q] as f64);
                    assa += c * c / (gc + pc - c);
                    assre += c * c / gc.max(1.0);
                    asspr += c * c / pc.max(1.0);
                }
            }
            let denom = tp[k].max(1) as f64;
            AlphaCounts {
                alpha: alphas[k],
                tp: tp[k],
                fn_: fn_[k],
                fp: fp[k],
                assa: assa / denom,
                assre: assre / denom,
                asspr: asspr / denom,
                loca: loc[k].max(1e-10) / (tp[k] as f64).max(1e-10),
            }
        })
        .collect()
}
