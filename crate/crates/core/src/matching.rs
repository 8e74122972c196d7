//! Bipartite matching routines: maximum-weight perfect assignment (Hungarian
//! method with potentials, O(n^3)) and plain augmenting-path matching on a
//! 0/1 adjacency structure. Both are deterministic under index order.

use crate::num::Scalar;

/// Maximum-weight perfect matching on a square weight table.
///
/// Returns `assignment[row] = col` and the total weight. Ties resolve toward
/// smaller indices by the scan order of the potential update.
pub fn max_weight_assignment<S: Scalar>(weights: &[Vec<S>]) -> (Vec<usize>, S) {
    let n = weights.len();
    assert!(n > 0 && weights.iter().all(|r| r.len() == n), "square table required");
    // Hungarian method on costs = -weights (minimization form, 1-based).
    let cost = |i: usize, j: usize| -> S { -weights[i - 1][j - 1].clone() };

    let mut u = vec![S::zero(); n + 1];
    let mut v = vec![S::zero(); n + 1];
    let mut matched_row = vec![0usize; n + 1]; // p[j]: row matched to column j
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv: Vec<Option<S>> = vec![None; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta: Option<S> = None;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0].clone() - v[j].clone();
                if minv[j].as_ref().map_or(true, |m| cur < *m) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                if delta.as_ref().map_or(true, |d| minv[j].as_ref().unwrap() < d) {
                    delta = minv[j].clone();
                    j1 = j;
                }
            }
            let delta = delta.expect("perfect matching always exists on a complete table");
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] = u[matched_row[j]].clone() + delta.clone();
                    v[j] = v[j].clone() - delta.clone();
                } else if let Some(m) = &minv[j] {
                    minv[j] = Some(m.clone() - delta.clone());
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[matched_row[j] - 1] = j - 1;
    }
    let mut total = S::zero();
    for (i, &j) in assignment.iter().enumerate() {
        total = total + weights[i][j].clone();
    }
    (assignment, total)
}

/// Perfect matching on a bipartite 0/1 adjacency list via Kuhn's algorithm.
/// `adj[i]` lists the columns row `i` may use. Returns `assignment[row] = col`
/// or `None` when no perfect matching exists.
pub fn perfect_matching(adj: &[Vec<usize>], n_cols: usize) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut col_match: Vec<Option<usize>> = vec![None; n_cols];

    fn try_augment(
        row: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        col_match: &mut [Option<usize>],
    ) -> bool {
        for &col in &adj[row] {
            if seen[col] {
                continue;
            }
            seen[col] = true;
            if col_match[col].is_none()
                || try_augment(col_match[col].unwrap(), adj, seen, col_match)
            {
                col_match[col] = Some(row);
                return true;
            }
        }
        false
    }

    for row in 0..n {
        let mut seen = vec![false; n_cols];
        if !try_augment(row, adj, &mut seen, &mut col_match) {
            return None;
        }
    }
    let mut assignment = vec![usize::MAX; n];
    for (col, m) in col_match.iter().enumerate() {
        if let Some(row) = m {
            assignment[*row] = col;
        }
    }
    Some(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn brute_force_best(weights: &[Vec<f64>]) -> f64 {
        let n = weights.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::NEG_INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let total: f64 = p.iter().enumerate().map(|(i, &j)| weights[i][j]).sum();
            if total > best {
                best = total;
            }
        });
        best
    }

    fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == perm.len() {
            visit(perm);
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            permute(perm, k + 1, visit);
            perm.swap(k, i);
        }
    }

    #[test]
    fn assignment_on_known_table() {
        let w = vec![
            vec![7.0, 5.0, 11.0],
            vec![5.0, 4.0, 1.0],
            vec![9.0, 3.0, 2.0],
        ];
        let (assign, total) = max_weight_assignment(&w);
        assert_eq!(total, 11.0 + 4.0 + 9.0);
        assert_eq!(assign, vec![2, 1, 0]);
    }

    #[test]
    fn rational_assignment_exact() {
        let q = |n: i64, d: i64| BigRational::from_ratio(n, d);
        let w = vec![
            vec![q(1, 2), q(1, 3)],
            vec![q(1, 4), q(1, 5)],
        ];
        let (_, total) = max_weight_assignment(&w);
        assert_eq!(total, q(1, 2) + q(1, 5));
    }

    #[test]
    fn perfect_matching_found_and_blocked() {
        let adj = vec![vec![0, 1], vec![0], vec![2]];
        let m = perfect_matching(&adj, 3).unwrap();
        assert_eq!(m, vec![1, 0, 2]);
        let blocked = vec![vec![0], vec![0], vec![1, 2]];
        assert!(perfect_matching(&blocked, 3).is_none());
    }

    proptest! {
        #[test]
        fn hungarian_matches_brute_force(
            rows in proptest::collection::vec(
                proptest::collection::vec(-10i32..10, 5), 5)
        ) {
            let w: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().map(|&v| v as f64).collect())
                .collect();
            let (assign, total) = max_weight_assignment(&w);
            let mut seen = vec![false; 5];
            for &j in &assign {
                prop_assert!(!seen[j]);
                seen[j] = true;
            }
            prop_assert!((total - brute_force_best(&w)).abs() < 1e-9);
        }
    }
}
