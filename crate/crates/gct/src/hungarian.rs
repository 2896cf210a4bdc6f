//! Minimum-cost linear assignment (Jonker-Volgenant style, O(n^3)) with a
//! deterministic tie-break: among equal-cost optima, the lexicographically
//! smallest assignment vector is returned.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HungarianError {
    #[error("cost matrix is empty")]
    Empty,
    #[error("cost matrix is not square")]
    NotSquare,
    #[error("cost matrix contains a non-finite entry")]
    NonFinite,
}

/// Shortest-augmenting-path solve. Returns (assignment row->col, row duals,
/// col duals) with cost[i][j] - u[i] - v[j] >= 0 and equality on assigned
/// edges.
fn solve_duals(cost: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.len();
    let mut u = vec![0.0; n + 1]; // row potentials, index n is the virtual row
    let mut v = vec![0.0; n + 1];
    let mut col_row = vec![n; n + 1]; // col -> assigned row, index n is virtual col
    let mut way = vec![0usize; n + 1];
    for i in 0..n {
        col_row[n] = i;
        let mut j0 = n;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 0..n {
                if !used[j] {
                    let cur = cost[i0][j] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == n {
                break;
            }
        }
        // Augment along the alternating path.
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == n {
                break;
            }
        }
    }
    let mut row_col = vec![0usize; n];
    for j in 0..n {
        if col_row[j] < n {
            row_col[col_row[j]] = j;
        }
    }
    (row_col, u[..n].to_vec(), v[..n].to_vec())
}

/// Kuhn's augmenting-path matching restricted to `allowed` edges, used to
/// test whether a partial lexicographic choice can still complete.
fn can_complete(allowed: &[Vec<bool>], fixed_cols: &[bool], start_row: usize, n: usize) -> bool {
    let mut match_col = vec![usize::MAX; n]; // col -> row among free rows
    fn try_row(
        r: usize,
        allowed: &[Vec<bool>],
        fixed_cols: &[bool],
        seen: &mut [bool],
        match_col: &mut [usize],
    ) -> bool {
        for (c, &ok) in allowed[r].iter().enumerate() {
            if ok && !fixed_cols[c] && !seen[c] {
                seen[c] = true;
                if match_col[c] == usize::MAX
                    || try_row(match_col[c], allowed, fixed_cols, seen, match_col)
                {
                    match_col[c] = r;
                    return true;
                }
            }
        }
        false
    }
    for r in start_row..n {
        let mut seen = vec![false; n];
        if !try_row(r, allowed, fixed_cols, &mut seen, &mut match_col) {
            return false;
        }
    }
    true
}

/// Minimum-total-cost permutation; among equal-cost optima, returns the
/// lexicographically smallest assignment vector.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<usize>, HungarianError> {
    let n = cost.len();
    if n == 0 {
        return Err(HungarianError::Empty);
    }
    let mut scale: f64 = 1.0;
    for row in cost {
        if row.len() != n {
            return Err(HungarianError::NotSquare);
        }
        for &c in row {
            if !c.is_finite() {
                return Err(HungarianError::NonFinite);
            }
            scale = scale.max(c.abs());
        }
    }
    let (base, u, v) = solve_duals(cost);
    // Every optimal assignment uses only tight edges (zero reduced cost
    // against the optimal duals), and every perfect matching of tight edges
    // attains the optimum.
    let eps = 1e-9 * scale * n as f64;
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| cost[i][j] - u[i] - v[j] <= eps).collect())
        .collect();
    let mut fixed_cols = vec![false; n];
    let mut result = vec![usize::MAX; n];
    // While no row has deviated from the solver's assignment, the solver's
    // own column is known to complete; after a deviation every candidate is
    // checked explicitly.
    let mut diverged = false;
    for i in 0..n {
        let mut chosen = usize::MAX;
        for j in 0..n {
            if !tight[i][j] || fixed_cols[j] {
                continue;
            }
            if !diverged && j == base[i] {
                chosen = j;
                break;
            }
            fixed_cols[j] = true;
            let ok = can_complete(&tight, &fixed_cols, i + 1, n);
            fixed_cols[j] = false;
            if ok {
                chosen = j;
                break;
            }
        }
        debug_assert!(chosen != usize::MAX, "tight graph must stay matchable");
        if chosen != base[i] {
            diverged = true;
        }
        result[i] = chosen;
        fixed_cols[chosen] = true;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn total(cost: &[Vec<f64>], assignment: &[usize]) -> f64 {
        assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
    }

    fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
        let n = cost.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, cost, &mut best);
        best
    }

    fn permute(perm: &mut Vec<usize>, k: usize, cost: &[Vec<f64>], best: &mut f64) {
        let n = perm.len();
        if k == n {
            let t = total(cost, perm);
            if t < *best {
                *best = t;
            }
            return;
        }
        for i in k..n {
            perm.swap(k, i);
            permute(perm, k + 1, cost, best);
            perm.swap(k, i);
        }
    }

    #[test]
    fn hand_example() {
        let cost = vec![vec![1.0, 2.0], vec![3.0, 0.0]];
        assert_eq!(hungarian(&cost).unwrap(), vec![0, 1]);
    }

    #[test]
    fn identity_favoring_cost() {
        let n = 6;
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        assert_eq!(hungarian(&cost).unwrap(), (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn ties_break_lexicographically() {
        // All-equal costs: identity is the lexicographically smallest optimum.
        let cost = vec![vec![5.0; 4]; 4];
        assert_eq!(hungarian(&cost).unwrap(), vec![0, 1, 2, 3]);
        // Two optima: {0->0,1->1} and {0->1,1->0}, both total 2.
        let cost = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(hungarian(&cost).unwrap(), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(hungarian(&[]), Err(HungarianError::Empty));
        assert_eq!(
            hungarian(&[vec![1.0, 2.0]]),
            Err(HungarianError::NotSquare)
        );
        assert_eq!(
            hungarian(&[vec![1.0, f64::NAN], vec![0.0, 1.0]]),
            Err(HungarianError::NonFinite)
        );
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = crate::rng::stream(2024, &[0]);
        for trial in 0..300 {
            let n = rng.gen_range(2..=6);
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect())
                .collect();
            let a = hungarian(&cost).unwrap();
            // Bijection check.
            let mut seen = vec![false; n];
            for &j in &a {
                assert!(!seen[j]);
                seen[j] = true;
            }
            let got = total(&cost, &a);
            let want = brute_force_min(&cost);
            assert!((got - want).abs() < 1e-9, "trial {trial}: {got} vs {want}");
        }
    }
}
