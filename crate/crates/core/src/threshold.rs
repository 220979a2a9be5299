//! Per-sequence detection-score thresholds from exact two-cluster 1-D K-Means.
//!
//! In one dimension the optimal K-Means partition is contiguous in sorted
//! order, so the global optimum is found by scanning every split point once.
//! The threshold sits on the decision boundary between the two clusters and a
//! static offset pushes it toward precision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThresholdError {
    #[error("score distribution needs at least two distinct values")]
    DegenerateDistribution,
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("histogram needs at least two bins, got {0}")]
    TooFewBins(usize),
}

/// How the raw threshold is read off the optimal two-cluster partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Midpoint of the gap between the largest low-cluster score and the
    /// smallest high-cluster score. This is the K-Means decision boundary and
    /// coincides with the histogram Otsu threshold up to bin resolution.
    #[default]
    Boundary,
    /// Cardinality-weighted combination of the two cluster means. Note that
    /// this equals the mean of all admitted scores.
    WeightedCentroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    /// Static offset added to the clustered threshold.
    pub delta: f64,
    /// Threshold used when clustering is impossible.
    pub fallback: f64,
    /// Scores below this never enter clustering.
    pub floor: f64,
    #[serde(default)]
    pub rule: ThresholdRule,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            fallback: 0.4,
            floor: 0.05,
            rule: ThresholdRule::Boundary,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.delta) {
            return Err(format!("delta must lie in [0, 1], got {}", self.delta));
        }
        if !unit(self.fallback) {
            return Err(format!("fallback must lie in [0, 1], got {}", self.fallback));
        }
        if !(0.0..1.0).contains(&self.floor) {
            return Err(format!("floor must lie in [0, 1), got {}", self.floor));
        }
        Ok(())
    }
}

/// Optimal two-cluster partition of a score set. Cluster 1 has the lower mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub mu1: f64,
    pub mu2: f64,
    pub n1: usize,
    pub n2: usize,
    /// Largest score assigned to the low cluster.
    pub low_max: f64,
    /// Smallest score assigned to the high cluster.
    pub high_min: f64,
}

impl ClusterResult {
    pub fn boundary(&self) -> f64 {
        0.5 * (self.low_max + self.high_min)
    }

    pub fn weighted_centroid(&self) -> f64 {
        let n = (self.n1 + self.n2) as f64;
        (self.n1 as f64 / n) * self.mu1 + (self.n2 as f64 / n) * self.mu2
    }

    pub fn raw_threshold(&self, rule: ThresholdRule) -> f64 {
        match rule {
            ThresholdRule::Boundary => self.boundary(),
            ThresholdRule::WeightedCentroid => self.weighted_centroid(),
        }
    }
}

fn sorted_finite(scores: &[f64]) -> Result<Vec<f64>, ThresholdError> {
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(ThresholdError::NonFinite(bad));
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Globally optimal two-cluster K-Means on the real line.
///
/// Scans the n-1 split points of the sorted scores, skipping splits between
/// equal values, and keeps the first split with the smallest within-cluster
/// sum of squares.
pub fn two_means_1d(scores: &[f64]) -> Result<ClusterResult, ThresholdError> {
    let sorted = sorted_finite(scores)?;
    let n = sorted.len();
    if n < 2 || sorted[0] == sorted[n - 1] {
        return Err(ThresholdError::DegenerateDistribution);
    }
    // centering keeps the prefix sums well conditioned and makes the scan
    // invariant to shifting every score by a constant
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let mut prefix = Vec::with_capacity(n + 1);
    let mut prefix_sq = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    prefix_sq.push(0.0);
    for &s in &sorted {
        let c = s - mean;
        prefix.push(prefix.last().unwrap() + c);
        prefix_sq.push(prefix_sq.last().unwrap() + c * c);
    }
    let sse = |lo: usize, hi: usize| {
        let k = (hi - lo) as f64;
        let s = prefix[hi] - prefix[lo];
        (prefix_sq[hi] - prefix_sq[lo]) - s * s / k
    };

    let mut best: Option<(usize, f64)> = None;
    for k in 1..n {
        if sorted[k - 1] == sorted[k] {
            continue;
        }
        let cost = sse(0, k) + sse(k, n);
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((k, cost));
        }
    }
    let (k, _) = best.ok_or(ThresholdError::DegenerateDistribution)?;
    let mu1 = sorted[..k].iter().sum::<f64>() / k as f64;
    let mu2 = sorted[k..].iter().sum::<f64>() / (n - k) as f64;
    Ok(ClusterResult {
        mu1,
        mu2,
        n1: k,
        n2: n - k,
        low_max: sorted[k - 1],
        high_min: sorted[k],
    })
}

/// Scores that take part in clustering.
pub fn admitted(scores: &[f64], cfg: &ThresholdConfig) -> Vec<f64> {
    scores.iter().copied().filter(|&s| s >= cfg.floor).collect()
}

/// Sequence-level detection threshold: clustered threshold plus `delta`,
/// clamped to `[0, 1]`. Falls back to `cfg.fallback` when the admitted scores
/// are empty or single-valued.
pub fn adaptive_threshold(scores: &[f64], cfg: &ThresholdConfig) -> f64 {
    let kept = admitted(scores, cfg);
    match two_means_1d(&kept) {
        Ok(c) => (c.raw_threshold(cfg.rule) + cfg.delta).clamp(0.0, 1.0),
        Err(_) => cfg.fallback,
    }
}

/// Histogram Otsu threshold over `[0, 1]`.
///
/// Each bin carries its count and the sum of its scores, so class means are
/// exact. Candidate thresholds are the interior bin edges; when several
/// consecutive edges reach the maximal between-class variance (empty bins
/// between the classes), the middle of that run is returned.
pub fn otsu_threshold(scores: &[f64], bins: usize) -> Result<f64, ThresholdError> {
    if bins < 2 {
        return Err(ThresholdError::TooFewBins(bins));
    }
    let sorted = sorted_finite(scores)?;
    let mut count = vec![0usize; bins];
    let mut sum = vec![0.0f64; bins];
    for &s in &sorted {
        let b = bin_index(s, bins);
        count[b] += 1;
        sum[b] += s;
    }
    if count.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(ThresholdError::DegenerateDistribution);
    }
    let total_n = sorted.len() as f64;
    let total_s: f64 = sum.iter().sum();

    let mut best = f64::NEG_INFINITY;
    let mut run: Option<(usize, usize)> = None;
    let (mut n0, mut s0) = (0usize, 0.0f64);
    for edge in 1..bins {
        n0 += count[edge - 1];
        s0 += sum[edge - 1];
        let n1 = sorted.len() - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let w0 = n0 as f64 / total_n;
        let w1 = n1 as f64 / total_n;
        let m0 = s0 / n0 as f64;
        let m1 = (total_s - s0) / n1 as f64;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            run = Some((edge, edge));
        } else if between == best {
            if let Some((start, end)) = run {
                if end + 1 == edge {
                    run = Some((start, edge));
                }
            }
        }
    }
    let (start, end) = run.ok_or(ThresholdError::DegenerateDistribution)?;
    Ok((start + end) as f64 / (2.0 * bins as f64))
}

fn bin_index(score: f64, bins: usize) -> usize {
    ((score * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// One row of a score histogram table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// 0 = below the clustering floor, 1 = low cluster, 2 = high cluster.
    pub cluster: u8,
}

/// Everything needed to plot one sequence's score distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub sequence: String,
    pub threshold: f64,
    pub config: ThresholdConfig,
    pub clusters: Option<ClusterResult>,
    pub histogram: Vec<HistogramBin>,
}

impl ThresholdReport {
    pub fn compute(sequence: impl Into<String>, scores: &[f64], cfg: &ThresholdConfig, bins: usize) -> Self {
        let bins = bins.max(1);
        let clusters = two_means_1d(&admitted(scores, cfg)).ok();
        let mut counts = vec![0usize; bins];
        for &s in scores.iter().filter(|s| s.is_finite()) {
            counts[bin_index(s.clamp(0.0, 1.0), bins)] += 1;
        }
        let histogram = counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| {
                let lo = i as f64 / bins as f64;
                let hi = (i + 1) as f64 / bins as f64;
                let mid = 0.5 * (lo + hi);
                let cluster = match clusters {
                    _ if hi <= cfg.floor => 0,
                    Some(c) if mid >= c.boundary() => 2,
                    Some(_) => 1,
                    None => 1,
                };
                HistogramBin { lo, hi, count, cluster }
            })
            .collect();
        Self {
            sequence: sequence.into(),
            threshold: adaptive_threshold(scores, cfg),
            config: *cfg,
            clusters,
            histogram,
        }
    }
}

/// Recomputes the threshold over every score seen so far. Used when the
/// whole sequence is not available up front.
#[derive(Debug, Clone)]
pub struct StreamingThreshold {
    cfg: ThresholdConfig,
    scores: Vec<f64>,
}

impl StreamingThreshold {
    pub fn new(cfg: ThresholdConfig) -> Self {
        Self {
            cfg,
            scores: Vec::new(),
        }
    }

    pub fn observe(&mut self, scores: impl IntoIterator<Item = f64>) -> f64 {
        self.scores.extend(scores);
        self.current()
    }

    pub fn current(&self) -> f64 {
        adaptive_threshold(&self.scores, &self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    /// Direct evaluation of every contiguous split, O(n^2).
    fn brute_force(scores: &[f64]) -> Option<(usize, f64, f64)> {
        let mut s = scores.to_vec();
        s.sort_by(f64::total_cmp);
        let mut best: Option<(usize, f64, f64, f64)> = None;
        for k in 1..s.len() {
            if s[k - 1] == s[k] {
                continue;
            }
            let (a, b) = s.split_at(k);
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            let cost: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>()
                + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
            if best.is_none_or(|bst| cost < bst.3) {
                best = Some((k, ma, mb, cost));
            }
        }
        best.map(|(k, a, b, _)| (k, a, b))
    }

    #[test]
    fn symmetric_pairs() {
        let c = two_means_1d(&[0.1, 0.1, 0.9, 0.9]).unwrap();
        assert_eq!((c.n1, c.n2), (2, 2));
        assert!((c.mu1 - 0.1).abs() < 1e-12 && (c.mu2 - 0.9).abs() < 1e-12);
        assert_eq!(brute_force(&[0.1, 0.1, 0.9, 0.9]).unwrap().0, 2);
    }

    #[test]
    fn two_points() {
        let c = two_means_1d(&[0.8, 0.2]).unwrap();
        assert_eq!((c.mu1, c.mu2, c.n1, c.n2), (0.2, 0.8, 1, 1));
    }

    #[test]
    fn narrow_modes_split_between() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let lo = Normal::new(0.15, 0.02).unwrap();
        let hi = Normal::new(0.85, 0.02).unwrap();
        let mut scores = Vec::new();
        for i in 0..500 {
            let d = if i % 3 == 0 { &hi } else { &lo };
            scores.push(d.sample(&mut rng));
        }
        let c = two_means_1d(&scores).unwrap();
        assert!(c.low_max < 0.5 && c.high_min > 0.5);
        assert_eq!(c.n2, scores.iter().filter(|&&s| s > 0.5).count());
        let (k, _, _) = brute_force(&scores).unwrap();
        assert_eq!(k, c.n1);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(two_means_1d(&[0.7; 5]), Err(ThresholdError::DegenerateDistribution));
        assert_eq!(two_means_1d(&[0.3]), Err(ThresholdError::DegenerateDistribution));
        assert_eq!(two_means_1d(&[]), Err(ThresholdError::DegenerateDistribution));
        assert!(matches!(two_means_1d(&[0.1, f64::NAN]), Err(ThresholdError::NonFinite(_))));
    }

    #[test]
    fn adaptive_threshold_examples() {
        let s = [0.1, 0.1, 0.9, 0.9];
        let zero = ThresholdConfig { delta: 0.0, ..Default::default() };
        assert!((adaptive_threshold(&s, &zero) - 0.5).abs() < 1e-12);
        assert!((adaptive_threshold(&s, &ThresholdConfig::default()) - 0.6).abs() < 1e-12);
        assert_eq!(adaptive_threshold(&[0.7; 8], &ThresholdConfig::default()), 0.4);
        assert_eq!(adaptive_threshold(&[], &ThresholdConfig::default()), 0.4);
        // everything below the floor counts as empty
        assert_eq!(adaptive_threshold(&[0.01, 0.02], &ThresholdConfig::default()), 0.4);
    }

    #[test]
    fn weighted_centroid_rule_is_grand_mean() {
        let s = [0.1, 0.2, 0.8, 0.85, 0.9];
        let cfg = ThresholdConfig {
            delta: 0.0,
            floor: 0.0,
            rule: ThresholdRule::WeightedCentroid,
            ..Default::default()
        };
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((adaptive_threshold(&s, &cfg) - mean).abs() < 1e-12);
    }

    #[test]
    fn threshold_is_clamped() {
        let cfg = ThresholdConfig { delta: 1.0, ..Default::default() };
        assert_eq!(adaptive_threshold(&[0.2, 0.9], &cfg), 1.0);
    }

    #[test]
    fn otsu_examples() {
        let two = [0.2, 0.2, 0.2, 0.8, 0.8];
        let t = otsu_threshold(&two, 256).unwrap();
        assert!(t > 0.2 && t < 0.8);
        let t = otsu_threshold(&[0.1, 0.1, 0.9, 0.9], 256).unwrap();
        assert!((t - 0.5).abs() <= 1.0 / 256.0);
        assert_eq!(otsu_threshold(&[0.5; 10], 256), Err(ThresholdError::DegenerateDistribution));
        assert_eq!(otsu_threshold(&[0.1, 0.9], 1), Err(ThresholdError::TooFewBins(1)));
    }

    #[test]
    fn histogram_report_marks_clusters() {
        let scores = [0.01, 0.2, 0.25, 0.8, 0.85];
        let r = ThresholdReport::compute("s", &scores, &ThresholdConfig::default(), 10);
        assert_eq!(r.histogram.len(), 10);
        assert_eq!(r.histogram.iter().map(|b| b.count).sum::<usize>(), 5);
        assert_eq!(r.histogram[0].cluster, 1);
        assert_eq!(r.histogram[2].cluster, 1);
        assert_eq!(r.histogram[8].cluster, 2);
        let floored = ThresholdReport::compute("s", &scores, &ThresholdConfig { floor: 0.1, ..Default::default() }, 10);
        assert_eq!(floored.histogram[0].cluster, 0);
    }

    #[test]
    fn streaming_converges_to_offline() {
        let mut st = StreamingThreshold::new(ThresholdConfig::default());
        assert_eq!(st.observe([0.9]), 0.4);
        st.observe([0.1, 0.15]);
        let t = st.observe([0.85, 0.2]);
        let offline = adaptive_threshold(&[0.9, 0.1, 0.15, 0.85, 0.2], &ThresholdConfig::default());
        assert_eq!(t, offline);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(scores in proptest::collection::vec(0.0f64..1.0, 2..200)) {
            let got = two_means_1d(&scores);
            match brute_force(&scores) {
                None => prop_assert_eq!(got, Err(ThresholdError::DegenerateDistribution)),
                Some((k, ma, mb)) => {
                    let c = got.unwrap();
                    prop_assert_eq!(c.n1, k);
                    prop_assert!((c.mu1 - ma).abs() < 1e-12 && (c.mu2 - mb).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn monotone_filter(scores in proptest::collection::vec(0.0f64..1.0, 1..100), bump in 0.0f64..0.5) {
            let tau = adaptive_threshold(&scores, &ThresholdConfig::default());
            let stricter = (tau + bump).min(1.0);
            for s in &scores {
                if *s >= stricter {
                    prop_assert!(*s >= tau);
                }
            }
        }
    }
}
