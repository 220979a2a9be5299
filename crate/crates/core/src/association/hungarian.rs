//! Shortest-augmenting-path Hungarian algorithm with dual potentials, O(n²m).

/// Minimum-cost assignment of a rectangular cost matrix.
///
/// Returns, for each row, the column it is assigned to. When there are more
/// rows than columns some rows stay `None`; otherwise every row is assigned.
/// All rows must have the same length and all costs must be finite.
pub fn linear_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let transposed: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| cost[i][j]).collect())
            .collect();
        let by_col = solve(&transposed);
        let mut out = vec![None; rows];
        for (j, i) in by_col.into_iter().enumerate() {
            out[i] = Some(j);
        }
        return out;
    }
    solve(cost).into_iter().map(Some).collect()
}

// rows <= cols; 1-based indexing with a virtual column 0
fn solve(a: &[Vec<f64>]) -> Vec<usize> {
    let n = a.len();
    let m = a[0].len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Maximum-weight assignment; rows and columns may stay unassigned.
/// Pairs with non-positive weight are never reported.
pub fn max_weight_matching(weight: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let cost: Vec<Vec<f64>> = weight
        .iter()
        .map(|r| r.iter().map(|&w| -w.max(0.0)).collect())
        .collect();
    linear_assignment(&cost)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .filter(|&(i, j)| weight[i][j] > 0.0)
        .collect()
}
