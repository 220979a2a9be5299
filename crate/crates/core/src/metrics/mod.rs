//! Box-level tracking metrics compatible with TrackEval: the HOTA family
//! over 19 localization thresholds, CLEAR MOT and identity (IDF1) scores.
//! Sequences are pooled by summing counts before taking ratios.

mod clear;
mod hota;

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::io::mot::MotTable;

pub use clear::{ClearCounts, IdentityCounts};
pub use hota::AlphaCounts;

/// `0.05, 0.10, ..., 0.95`.
pub fn default_alphas() -> Vec<f64> {
    (1..20).map(|i| i as f64 * 0.05).collect()
}

/// Frames of one sequence with dense identity indices, ready for scoring.
#[derive(Debug, Clone, Default)]
pub struct Prepared {
    pub gt_ids: Vec<Vec<usize>>,
    pub pred_ids: Vec<Vec<usize>>,
    /// `similarity[t][g][p]`: box IoU in frame `t`.
    pub similarity: Vec<Vec<Vec<f64>>>,
    pub num_gt_ids: usize,
    pub num_pred_ids: usize,
}

impl Prepared {
    pub fn gt_dets(&self) -> usize {
        self.gt_ids.iter().map(Vec::len).sum()
    }

    pub fn pred_dets(&self) -> usize {
        self.pred_ids.iter().map(Vec::len).sum()
    }
}

fn dense(table: &MotTable, frames: usize, what: &str) -> Result<(Vec<Vec<(usize, BBox)>>, usize)> {
    let mut ids: Vec<u64> = table.rows.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    ids.dedup();
    let index: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut out = vec![Vec::new(); frames];
    for r in &table.rows {
        if r.frame == 0 {
            return Err(Error::validation(what, "frame numbers start at 1"));
        }
        let slot: &mut Vec<(usize, BBox)> = &mut out[r.frame as usize - 1];
        let k = index[&r.id];
        if slot.iter().any(|&(j, _)| j == k) {
            return Err(Error::validation(
                what,
                format!("id {} appears twice in frame {}", r.id, r.frame),
            ));
        }
        slot.push((k, r.bbox));
    }
    Ok((out, ids.len()))
}

/// Validates both tables and computes per-frame IoU matrices.
pub fn prepare(gt: &MotTable, pred: &MotTable) -> Result<Prepared> {
    let frames = gt.last_frame().max(pred.last_frame()) as usize;
    let (g, num_gt_ids) = dense(gt, frames, "ground truth")?;
    let (p, num_pred_ids) = dense(pred, frames, "predictions")?;
    let mut prepared = Prepared {
        num_gt_ids,
        num_pred_ids,
        ..Prepared::default()
    };
    for (gf, pf) in g.into_iter().zip(p) {
        prepared
            .similarity
            .push(gf.iter().map(|(_, a)| pf.iter().map(|(_, b)| a.iou(b)).collect()).collect());
        prepared.gt_ids.push(gf.into_iter().map(|(k, _)| k).collect());
        prepared.pred_ids.push(pf.into_iter().map(|(k, _)| k).collect());
    }
    Ok(prepared)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEval {
    pub name: String,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub detre: f64,
    pub detpr: f64,
    pub assre: f64,
    pub asspr: f64,
    pub loca: f64,
    /// Unbounded below.
    pub mota: f64,
    pub motp: f64,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub idsw: u64,
    pub frag: u64,
    pub gt_dets: u64,
    pub pred_dets: u64,
    pub alphas: Vec<f64>,
    pub per_alpha: Vec<AlphaCounts>,
    pub clear: ClearCounts,
    pub identity: IdentityCounts,
}

impl SequenceEval {
    fn from_counts(
        name: String,
        alphas: Vec<f64>,
        per_alpha: Vec<AlphaCounts>,
        clear: ClearCounts,
        identity: IdentityCounts,
        gt_dets: u64,
        pred_dets: u64,
    ) -> Self {
        let mean = |f: fn(&AlphaCounts) -> f64| per_alpha.iter().map(f).sum::<f64>() / per_alpha.len().max(1) as f64;
        Self {
            name,
            hota: mean(AlphaCounts::hota),
            deta: mean(AlphaCounts::deta),
            assa: mean(|a| a.assa),
            detre: mean(AlphaCounts::detre),
            detpr: mean(AlphaCounts::detpr),
            assre: mean(|a| a.assre),
            asspr: mean(|a| a.asspr),
            loca: mean(|a| a.loca),
            mota: clear.mota(),
            motp: clear.motp(),
            idf1: identity.idf1(),
            idp: identity.idp(),
            idr: identity.idr(),
            idsw: clear.idsw,
            frag: clear.frag,
            gt_dets,
            pred_dets,
            alphas,
            per_alpha,
            clear,
            identity,
        }
    }
}

/// Scores one sequence. Frames are matched by number; either table may be
/// empty.
pub fn evaluate(gt: &MotTable, pred: &MotTable, alphas: &[f64]) -> Result<SequenceEval> {
    evaluate_named("", gt, pred, alphas)
}

pub fn evaluate_named(name: &str, gt: &MotTable, pred: &MotTable, alphas: &[f64]) -> Result<SequenceEval> {
    if alphas.is_empty() || alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::validation("alphas", "need at least one threshold in [0, 1]"));
    }
    let p = prepare(gt, pred)?;
    Ok(SequenceEval::from_counts(
        name.to_string(),
        alphas.to_vec(),
        hota::hota_counts(&p, alphas),
        clear::clear_counts(&p, 0.5),
        clear::identity_counts(&p, 0.5),
        p.gt_dets() as u64,
        p.pred_dets() as u64,
    ))
}

/// Pools sequences: detection and identity counts are summed, association
/// and localization scores are weighted by true positives.
pub fn aggregate(name: &str, sequences: &[SequenceEval]) -> Result<SequenceEval> {
    let first = sequences
        .first()
        .ok_or_else(|| Error::validation("aggregate", "no sequences to combine"))?;
    if sequences.iter().any(|s| s.alphas != first.alphas) {
        return Err(Error::validation("aggregate", "sequences were scored with different thresholds"));
    }
    let per_alpha = (0..first.alphas.len())
        .map(|k| AlphaCounts::pooled(sequences.iter().map(|s| &s.per_alpha[k])))
        .collect();
    let mut clear = ClearCounts::default();
    let mut identity = IdentityCounts::default();
    for s in sequences {
        clear.add(&s.clear);
        identity.add(&s.identity);
    }
    Ok(SequenceEval::from_counts(
        name.to_string(),
        first.alphas.clone(),
        per_alpha,
        clear,
        identity,
        sequences.iter().map(|s| s.gt_dets).sum(),
        sequences.iter().map(|s| s.pred_dets).sum(),
    ))
}

/// Fixed-width text table, one row per sequence, percentages for ratios.
pub fn format_table(rows: &[SequenceEval]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "sequence", "HOTA", "DetA", "AssA", "DetRe", "DetPr", "AssRe", "AssPr", "LocA", "MOTA", "IDF1", "IDSW"
    );
    for r in rows {
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let _ = writeln!(
            out,
            "{:<24} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
            r.name,
            pct(r.hota),
            pct(r.deta),
            pct(r.assa),
            pct(r.detre),
            pct(r.detpr),
            pct(r.assre),
            pct(r.asspr),
            pct(r.loca),
            pct(r.mota),
            pct(r.idf1),
            r.idsw
        );
    }
    out
}
