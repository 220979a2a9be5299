//! Brute-force reference implementations and fixture generators shared by
//! the integration tests. Everything here favours obviousness over speed.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use zsmat::io::mot::{MotRow, MotTable};
use zsmat::BBox;

// ---------------------------------------------------------------- thresholds

/// Best contiguous split of the sorted scores by direct evaluation of the
/// within-cluster sum of squares: `(low count, low mean, high mean)`.
pub fn brute_two_means(scores: &[f64]) -> Option<(usize, f64, f64)> {
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
        let cost = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
        if best.is_none_or(|bst| cost < bst.3) {
            best = Some((k, ma, mb, cost));
        }
    }
    best.map(|(k, a, b, _)| (k, a, b))
}

/// Two Gaussian modes clipped to [0, 1], mixing weight and positions drawn
/// from the seed.
pub fn bimodal_sample(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo_mean = rng.random_range(0.1f64..0.35);
    let hi_mean = rng.random_range(0.6..0.9);
    let lo = Normal::new(lo_mean, rng.random_range(0.02..0.08)).unwrap();
    let hi = Normal::new(hi_mean, rng.random_range(0.02..0.08)).unwrap();
    let share = rng.random_range(0.2..0.8);
    (0..n)
        .map(|_| {
            let d = if rng.random_bool(share) { &hi } else { &lo };
            d.sample(&mut rng).clamp(0.0, 1.0)
        })
        .collect()
}

// ---------------------------------------------------------------- assignment

fn permutations_into(k: usize, n: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, out: &mut dyn FnMut(&[usize])) {
    if cur.len() == k {
        out(cur);
        return;
    }
    for j in 0..n {
        if !used[j] {
            used[j] = true;
            cur.push(j);
            permutations_into(k, n, used, cur, out);
            cur.pop();
            used[j] = false;
        }
    }
}

/// Minimum total cost over all assignments that use min(rows, cols) pairs.
pub fn brute_min_cost(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    let mut best = f64::INFINITY;
    if rows <= cols {
        permutations_into(rows, cols, &mut vec![false; cols], &mut Vec::new(), &mut |p| {
            best = best.min(p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum());
        });
    } else {
        permutations_into(cols, rows, &mut vec![false; rows], &mut Vec::new(), &mut |p| {
            best = best.min(p.iter().enumerate().map(|(j, &i)| cost[i][j]).sum());
        });
    }
    best
}

/// Every partial matching of a rows × cols grid, as (row, col) pair lists.
pub fn partial_matchings(rows: usize, cols: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(r: usize, rows: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if r == rows {
            out.push(cur.clone());
            return;
        }
        rec(r + 1, rows, used, cur, out);
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                cur.push((r, c));
                rec(r + 1, rows, used, cur, out);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(0, rows, &mut vec![false; cols], &mut Vec::new(), &mut out);
    out
}

/// Best total weight of a partial matching that only uses entries with
/// weight ≥ floor and > 0.
pub fn brute_max_matching(weight: &[Vec<f64>], floor: f64) -> f64 {
    let cols = weight.first().map_or(0, Vec::len);
    partial_matchings(weight.len(), cols)
        .into_iter()
        .filter(|m| m.iter().all(|&(r, c)| weight[r][c] >= floor && weight[r][c] > 0.0))
        .map(|m| m.iter().map(|&(r, c)| weight[r][c]).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Partial matching maximizing `score`, restricted to pairs where `allowed`.
fn best_matching(
    rows: usize,
    cols: usize,
    allowed: impl Fn(usize, usize) -> bool,
    score: impl Fn(usize, usize) -> f64,
) -> Vec<(usize, usize)> {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for m in partial_matchings(rows, cols) {
        if !m.iter().all(|&(r, c)| allowed(r, c)) {
            continue;
        }
        let s: f64 = m.iter().map(|&(r, c)| score(r, c)).sum();
        if s > best.0 {
            best = (s, m);
        }
    }
    best.1
}

// ---------------------------------------------------------------- metrics

/// Intersection over union from first principles.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x() + a.w()).min(b.x() + b.w()) - a.x().max(b.x());
    let ih = (a.y() + a.h()).min(b.y() + b.h()) - a.y().max(b.y());
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.w() * a.h() + b.w() * b.h() - inter)
}

#[derive(Debug, Clone)]
pub struct OracleAlpha {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub assa: f64,
    pub loca: f64,
}

#[derive(Debug, Clone)]
pub struct OracleScores {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub loca: f64,
    pub per_alpha: Vec<OracleAlpha>,
    pub idf1: f64,
    pub idsw: u64,
    pub mota: f64,
}

type Frame = Vec<(u64, BBox)>;

fn frames_of(t: &MotTable, n: usize) -> Vec<Frame> {
    let mut out = vec![Vec::new(); n];
    for r in &t.rows {
        out[r.frame as usize - 1].push((r.id, r.bbox));
    }
    out
}

/// Reference HOTA, identity and CLEAR scores. The per-frame HOTA matching
/// maximizes the sum of alignment × IoU by enumerating every partial
/// matching; association scores are accumulated true positive by true
/// positive. Requires tiny inputs.
pub fn oracle_scores(gt: &MotTable, pred: &MotTable, alphas: &[f64]) -> OracleScores {
    let n = gt.rows.iter().chain(&pred.rows).map(|r| r.frame).max().unwrap_or(0) as usize;
    let g = frames_of(gt, n);
    let p = frames_of(pred, n);

    let mut gt_count: BTreeMap<u64, f64> = BTreeMap::new();
    let mut pr_count: BTreeMap<u64, f64> = BTreeMap::new();
    let mut potential: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for t in 0..n {
        for (gid, _) in &g[t] {
            *gt_count.entry(*gid).or_default() += 1.0;
        }
        for (pid, _) in &p[t] {
            *pr_count.entry(*pid).or_default() += 1.0;
        }
        for (gid, gb) in &g[t] {
            for (pid, pb) in &p[t] {
                let s = box_iou(gb, pb);
                let row: f64 = p[t].iter().map(|(_, b)| box_iou(gb, b)).sum();
                let col: f64 = g[t].iter().map(|(_, b)| box_iou(b, pb)).sum();
                let denom = row + col - s;
                if denom > f64::EPSILON {
                    *potential.entry((*gid, *pid)).or_default() += s / denom;
                }
            }
        }
    }
    let align = |gid: u64, pid: u64| {
        let m = potential.get(&(gid, pid)).copied().unwrap_or(0.0);
        m / (gt_count[&gid] + pr_count[&pid] - m)
    };

    // one matching per frame, then thresholded per alpha
    let mut frame_matches: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(n);
    for t in 0..n {
        let m = best_matching(
            g[t].len(),
            p[t].len(),
            |a, b| box_iou(&g[t][a].1, &p[t][b].1) > 0.0,
            |a, b| align(g[t][a].0, p[t][b].0) * box_iou(&g[t][a].1, &p[t][b].1),
        );
        frame_matches.push(m.into_iter().map(|(a, b)| (a, b, box_iou(&g[t][a].1, &p[t][b].1))).collect());
    }
    let total_g: u64 = g.iter().map(|f| f.len() as u64).sum();
    let total_p: u64 = p.iter().map(|f| f.len() as u64).sum();

    let mut per_alpha = Vec::new();
    for &alpha in alphas {
        let mut tp_pairs: Vec<(u64, u64, f64)> = Vec::new();
        for t in 0..n {
            for &(a, b, s) in &frame_matches[t] {
                if s >= alpha - f64::EPSILON {
                    tp_pairs.push((g[t][a].0, p[t][b].0, s));
                }
            }
        }
        let tp = tp_pairs.len() as u64;
        let mut pair_tp: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        for &(gi, pi, _) in &tp_pairs {
            *pair_tp.entry((gi, pi)).or_default() += 1.0;
        }
        let mut assa = 0.0;
        for &(gi, pi, _) in &tp_pairs {
            let tpa = pair_tp[&(gi, pi)];
            let fna = gt_count[&gi] - tpa;
            let fpa = pr_count[&pi] - tpa;
            assa += tpa / (tpa + fna + fpa);
        }
        let (assa, loca) = if tp == 0 {
            (0.0, 1.0)
        } else {
            (assa / tp as f64, tp_pairs.iter().map(|x| x.2).sum::<f64>() / tp as f64)
        };
        per_alpha.push(OracleAlpha {
            tp,
            fn_: total_g - tp,
            fp: total_p - tp,
            assa,
            loca,
        });
    }
    let k = alphas.len() as f64;
    let deta_of = |a: &OracleAlpha| a.tp as f64 / ((a.tp + a.fn_ + a.fp).max(1)) as f64;
    let deta = per_alpha.iter().map(deta_of).sum::<f64>() / k;
    let assa = per_alpha.iter().map(|a| a.assa).sum::<f64>() / k;
    let hota = per_alpha.iter().map(|a| (deta_of(a) * a.assa).sqrt()).sum::<f64>() / k;
    let loca = per_alpha.iter().map(|a| a.loca).sum::<f64>() / k;

    OracleScores {
        hota,
        deta,
        assa,
        loca,
        per_alpha,
        idf1: oracle_idf1(&g, &p, total_g, total_p),
        idsw: oracle_clear(&g, &p).0,
        mota: oracle_clear(&g, &p).1,
    }
}

/// IDF1 by trying every one-to-one correspondence between identities.
fn oracle_idf1(g: &[Frame], p: &[Frame], total_g: u64, total_p: u64) -> f64 {
    let gids: Vec<u64> = {
        let mut v: Vec<u64> = g.iter().flatten().map(|x| x.0).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let pids: Vec<u64> = {
        let mut v: Vec<u64> = p.iter().flatten().map(|x| x.0).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let overlap = |gi: u64, pi: u64| -> f64 {
        g.iter()
            .zip(p)
            .filter(|(gf, pf)| {
                let a = gf.iter().find(|x| x.0 == gi);
                let b = pf.iter().find(|x| x.0 == pi);
                matches!((a, b), (Some(a), Some(b)) if box_iou(&a.1, &b.1) >= 0.5 - f64::EPSILON)
            })
            .count() as f64
    };
    let table: Vec<Vec<f64>> = gids.iter().map(|&a| pids.iter().map(|&b| overlap(a, b)).collect()).collect();
    let idtp = partial_matchings(gids.len(), pids.len())
        .into_iter()
        .map(|m| m.iter().map(|&(a, b)| table[a][b]).sum::<f64>())
        .fold(0.0, f64::max);
    let denom = (total_g + total_p) as f64;
    if denom == 0.0 {
        return 0.0;
    }
    2.0 * idtp / denom
}

/// CLEAR counting: each frame keeps last frame's pairs when they still
/// overlap by ≥ 0.5, otherwise maximizes IoU. Returns (IDSW, MOTA).
fn oracle_clear(g: &[Frame], p: &[Frame]) -> (u64, f64) {
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    let mut prev_step: BTreeMap<u64, u64> = BTreeMap::new();
    let (mut tp, mut fn_, mut fp, mut idsw) = (0u64, 0u64, 0u64, 0u64);
    for (gf, pf) in g.iter().zip(p) {
        let ok = |a: usize, b: usize| box_iou(&gf[a].1, &pf[b].1) >= 0.5 - f64::EPSILON;
        let m = best_matching(gf.len(), pf.len(), ok, |a, b| {
            let cont = prev_step.get(&gf[a].0) == Some(&pf[b].0);
            1000.0 * cont as u8 as f64 + box_iou(&gf[a].1, &pf[b].1)
        });
        prev_step.clear();
        for &(a, b) in &m {
            let (gi, pi) = (gf[a].0, pf[b].0);
            if last_match.get(&gi).is_some_and(|&old| old != pi) {
                idsw += 1;
            }
            last_match.insert(gi, pi);
            prev_step.insert(gi, pi);
        }
        tp += m.len() as u64;
        fn_ += (gf.len() - m.len()) as u64;
        fp += (pf.len() - m.len()) as u64;
    }
    let total = (tp + fn_).max(1) as f64;
    (idsw, (tp as f64 - fp as f64 - idsw as f64) / total)
}

// ---------------------------------------------------------------- fixtures

pub fn row(frame: u32, id: u64, bbox: BBox) -> MotRow {
    MotRow {
        frame,
        id,
        bbox,
        conf: 1.0,
        class: -1,
        visibility: -1.0,
    }
}

pub fn clamp_box(x: f64, y: f64, w: f64, h: f64) -> BBox {
    BBox::new(x, y, w.max(1.0), h.max(1.0)).unwrap()
}

/// A tiny ground truth (≤ 4 objects, ≤ 30 frames, crowded 60×60 arena) and
/// a corrupted copy of it: jitter, misses, identity switches, fragments and
/// false-positive tracks.
pub fn mini_scenario(seed: u64) -> (MotTable, MotTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames: u32 = rng.random_range(5..=30);
    let objects: u64 = rng.random_range(1..=4);
    let mut gt = Vec::new();
    let mut pred = Vec::new();
    let mut next_pred_id = 100u64;
    for id in 1..=objects {
        let (mut x, mut y) = (rng.random_range(0.0..45.0), rng.random_range(0.0..45.0));
        let (vx, vy) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let (w, h) = (rng.random_range(6.0..18.0), rng.random_range(6.0..18.0));
        let start = rng.random_range(1..=frames);
        let end = rng.random_range(start..=frames);
        let mut pid = next_pred_id;
        next_pred_id += 1;
        for f in start..=end {
            x += vx;
            y += vy;
            let b = clamp_box(x, y, w, h);
            gt.push(row(f, id, b));
            if rng.random_bool(0.1) {
                continue;
            }
            if rng.random_bool(0.06) {
                pid = next_pred_id;
                next_pred_id += 1;
            }
            let j = |rng: &mut ChaCha8Rng| rng.random_range(-2.5..2.5);
            let pb = clamp_box(x + j(&mut rng), y + j(&mut rng), w + j(&mut rng), h + j(&mut rng));
            pred.push(row(f, pid, pb));
        }
    }
    // occasional identity swap between two predicted tracks
    if objects >= 2 && rng.random_bool(0.5) {
        let at = rng.random_range(1..=frames);
        let (a, b) = (100, 101);
        for r in pred.iter_mut().filter(|r| r.frame >= at) {
            if r.id == a {
                r.id = b;
            } else if r.id == b {
                r.id = a;
            }
        }
    }
    for _ in 0..rng.random_range(0..=2) {
        let id = next_pred_id;
        next_pred_id += 1;
        let start = rng.random_range(1..=frames);
        let end = rng.random_range(start..=frames);
        let (x, y) = (rng.random_range(0.0..50.0), rng.random_range(0.0..50.0));
        for f in start..=end {
            pred.push(row(f, id, clamp_box(x + f as f64 * 0.3, y, 10.0, 10.0)));
        }
    }
    let mut gt = MotTable { rows: gt };
    let mut pred = MotTable { rows: pred };
    gt.sort();
    pred.sort();
    (gt, pred)
}

/// Two objects over 100 frames whose predicted identities swap at frame 50.
pub fn swap_at_50() -> (MotTable, MotTable) {
    let mut gt = Vec::new();
    let mut pred = Vec::new();
    for f in 1..=100u32 {
        let a = clamp_box(10.0 + f as f64, 10.0, 20.0, 20.0);
        let b = clamp_box(10.0 + f as f64, 60.0, 20.0, 20.0);
        gt.push(row(f, 1, a));
        gt.push(row(f, 2, b));
        let (ia, ib) = if f < 50 { (7, 8) } else { (8, 7) };
        pred.push(row(f, ia, a));
        pred.push(row(f, ib, b));
    }
    let mut gt = MotTable { rows: gt };
    let mut pred = MotTable { rows: pred };
    gt.sort();
    pred.sort();
    (gt, pred)
}
