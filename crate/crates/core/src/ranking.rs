//! The ranking duel: permutations over items, payoff through the doubly
//! stochastic relaxation, exact minmax via the bilinear LP, and
//! Birkhoff–von Neumann rounding back to rankings.

use crate::bilinear::{minmax_bilinear, verify_minmax, BilinearDuel, MinmaxSolution};
use crate::dist::DiscreteDistribution;
use crate::error::{DuelError, Result};
use crate::lp::{Halfspace, Polytope};
use crate::matching::{max_weight_assignment, perfect_matching};
use crate::num::Scalar;
use num_rational::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A ranking of `n` items; `positions[item] = position`, position 0 is best.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ranking {
    positions: Vec<usize>,
}

impl Ranking {
    pub fn from_positions(positions: Vec<usize>) -> Result<Self> {
        let n = positions.len();
        let mut seen = vec![false; n];
        for &p in &positions {
            if p >= n || seen[p] {
                return Err(DuelError::Domain("not a permutation".into()));
            }
            seen[p] = true;
        }
        Ok(Self { positions })
    }

    /// Items listed best to worst.
    pub fn order(&self) -> Vec<usize> {
        let mut order = vec![0; self.positions.len()];
        for (item, &pos) in self.positions.iter().enumerate() {
            order[pos] = item;
        }
        order
    }

    pub fn from_order(order: &[usize]) -> Result<Self> {
        let mut positions = vec![usize::MAX; order.len()];
        for (pos, &item) in order.iter().enumerate() {
            if item >= order.len() || positions[item] != usize::MAX {
                return Err(DuelError::Domain("not a permutation".into()));
            }
            positions[item] = pos;
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, item: usize) -> usize {
        self.positions[item]
    }

    /// The ranking as a 0/1 doubly stochastic matrix.
    pub fn to_matrix<S: Scalar>(&self) -> Vec<Vec<S>> {
        let n = self.positions.len();
        let mut x = vec![vec![S::zero(); n]; n];
        for (item, &pos) in self.positions.iter().enumerate() {
            x[item][pos] = S::one();
        }
        x
    }
}

impl Serialize for Ranking {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            order: Vec<usize>,
        }
        Wire { order: self.order() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ranking {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            order: Vec<usize>,
        }
        let w = Wire::deserialize(d)?;
        Ranking::from_order(&w.order).map_err(serde::de::Error::custom)
    }
}

/// Row/column sum slack for doubly stochastic matrices.
pub const DS_TOL: f64 = 1e-7;

/// An `n x n` nonnegative matrix with unit row and column sums;
/// `x[item][pos]` is the probability of placing `item` at `pos`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoublyStochasticMatrix {
    x: Vec<Vec<f64>>,
}

impl DoublyStochasticMatrix {
    pub fn new(x: Vec<Vec<f64>>) -> Result<Self> {
        let n = x.len();
        if x.iter().any(|r| r.len() != n) {
            return Err(DuelError::Dimension("square matrix required".into()));
        }
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if x[i][j] < -DS_TOL {
                    return Err(DuelError::Domain(format!("negative entry at ({i},{j})")));
                }
                row += x[i][j];
            }
            if (row - 1.0).abs() > DS_TOL {
                return Err(DuelError::Domain(format!("row {i} sums to {row}")));
            }
        }
        for j in 0..n {
            let col: f64 = (0..n).map(|i| x[i][j]).sum();
            if (col - 1.0).abs() > DS_TOL {
                return Err(DuelError::Domain(format!("column {j} sums to {col}")));
            }
        }
        Ok(Self { x })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn entries(&self) -> &Vec<Vec<f64>> {
        &self.x
    }

    pub fn uniform(n: usize) -> Self {
        Self { x: vec![vec![1.0 / n as f64; n]; n] }
    }
}

/// Order items by decreasing probability, ties broken by ascending index.
/// This realizes the vanishing-perturbation selection: the surviving order is
/// exactly what an arbitrarily small index-bias perturbation would make
/// strictly greedy.
pub fn greedy_ranking(p: &DiscreteDistribution) -> Ranking {
    let n = p.len();
    let mut items: Vec<usize> = (0..n).collect();
    items.sort_by(|&a, &b| p.prob(b).cmp(p.prob(a)).then(a.cmp(&b)));
    Ranking::from_order(&items).expect("sorted items form a permutation")
}

fn flat(n: usize, item: usize, pos: usize) -> usize {
    item * n + pos
}

/// The `n^2 x n^2` payoff matrix of the ranking duel over doubly stochastic
/// coordinates: `M[(i,j),(i,k)] = p(i) (1/2 [j=k] + [k>j])`, zero across
/// distinct items.
pub fn ranking_payoff_matrix<S: Scalar>(p: &DiscreteDistribution) -> Vec<Vec<S>> {
    let n = p.len();
    let mut m = vec![vec![S::zero(); n * n]; n * n];
    for item in 0..n {
        let pi = S::from_rational(p.prob(item));
        for j in 0..n {
            for k in 0..n {
                if k > j {
                    m[flat(n, item, j)][flat(n, item, k)] = pi.clone();
                } else if k == j {
                    m[flat(n, item, j)][flat(n, item, k)] = pi.clone() * S::half();
                }
            }
        }
    }
    m
}

/// The Birkhoff polytope as halfspaces over `n^2` coordinates.
pub fn birkhoff_polytope<S: Scalar>(n: usize) -> Polytope<S> {
    let mut eqs = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mut w = vec![S::zero(); n * n];
        for j in 0..n {
            w[flat(n, i, j)] = S::one();
        }
        eqs.push(Halfspace::new(w, S::one()));
    }
    for j in 0..n {
        let mut w = vec![S::zero(); n * n];
        for i in 0..n {
            w[flat(n, i, j)] = S::one();
        }
        eqs.push(Halfspace::new(w, S::one()));
    }
    Polytope::nonneg(n * n, Vec::new(), eqs)
}

/// Exact minmax of the ranking duel. The value of this symmetric duel is 1/2;
/// the returned matrix is whatever vertex the deterministic pivoting lands on,
/// re-validated and certified against its exact best response.
pub fn solve_ranking_duel(p: &DiscreteDistribution) -> Result<(f64, DoublyStochasticMatrix)> {
    let n = p.len();
    if n > 50 {
        return Err(DuelError::Size(format!("ranking duel capped at n = 50, got {n}")));
    }
    let duel = ranking_bilinear_duel::<f64>(p)?;
    let sol: MinmaxSolution<f64> = minmax_bilinear(&duel)?;
    let verdict = verify_minmax(&sol.x, &duel, &sol.value)?;
    if !verdict.ok {
        return Err(DuelError::Domain(format!(
            "solver output failed verification: guarantees {} < {}",
            verdict.worst_value, sol.value
        )));
    }
    let mut x = vec![vec![0.0; n]; n];
    for item in 0..n {
        for j in 0..n {
            x[item][j] = sol.x[flat(n, item, j)].max(0.0);
        }
    }
    Ok((sol.value, DoublyStochasticMatrix::new(x)?))
}

/// The ranking duel in bilinear form.
pub fn ranking_bilinear_duel<S: Scalar>(p: &DiscreteDistribution) -> Result<BilinearDuel<S>> {
    let n = p.len();
    BilinearDuel::new(
        birkhoff_polytope(n),
        birkhoff_polytope(n),
        ranking_payoff_matrix(p),
        1.0,
    )
}

/// Decompose a doubly stochastic matrix into a convex combination of
/// permutation matrices: find a permutation supported on the positive
/// entries, peel off the smallest entry on it, repeat. At most `(n-1)^2 + 1`
/// terms by Birkhoff–von Neumann.
pub fn birkhoff_decompose(x: &DoublyStochasticMatrix) -> Result<Vec<(f64, Ranking)>> {
    const ZERO_CLIP: f64 = 1e-9;
    let n = x.n();
    let mut rem = x.entries().clone();
    let mut remaining = 1.0;
    let mut terms: Vec<(f64, Ranking)> = Vec::new();
    while remaining > ZERO_CLIP {
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| rem[i][j] > ZERO_CLIP).collect())
            .collect();
        let assignment = perfect_matching(&adj, n).ok_or_else(|| {
            DuelError::Domain("support admits no permutation; matrix not doubly stochastic".into())
        })?;
        let weight = assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| rem[i][j])
            .fold(f64::INFINITY, f64::min)
            .min(remaining);
        for (i, &j) in assignment.iter().enumerate() {
            rem[i][j] -= weight;
            if rem[i][j] < ZERO_CLIP {
                rem[i][j] = 0.0;
            }
        }
        terms.push((weight, Ranking::from_positions(assignment)?));
        remaining -= weight;
        if terms.len() > (n.max(2) - 1) * (n.max(2) - 1) + 1 {
            return Err(DuelError::Domain(
                "decomposition exceeded the Birkhoff term bound".into(),
            ));
        }
    }
    Ok(terms)
}

/// Sample a ranking whose position marginals match `x`.
pub fn sample_ranking<R: Rng + ?Sized>(x: &DoublyStochasticMatrix, rng: &mut R) -> Result<Ranking> {
    let terms = birkhoff_decompose(x)?;
    let total: f64 = terms.iter().map(|(w, _)| w).sum();
    let mut u: f64 = rng.gen::<f64>() * total;
    for (w, r) in &terms {
        u -= w;
        if u <= 0.0 {
            return Ok(r.clone());
        }
    }
    Ok(terms.last().expect("nonempty decomposition").1.clone())
}

/// Exact best pure response to an opponent's doubly stochastic matrix:
/// placing item `i` at position `j` is worth `p(i) (x'[i][j]/2 + sum_{k>j}
/// x'[i][k])`, and the optimal ranking is a maximum-weight assignment of
/// items to positions.
pub fn best_response_ranking<S: Scalar>(
    opponent: &[Vec<S>],
    p: &DiscreteDistribution,
) -> Result<(Ranking, S)> {
    let n = p.len();
    if opponent.len() != n || opponent.iter().any(|r| r.len() != n) {
        return Err(DuelError::Dimension("opponent matrix must be n x n".into()));
    }
    let mut weights = vec![vec![S::zero(); n]; n];
    for item in 0..n {
        let pi = S::from_rational(p.prob(item));
        // suffix[j] = sum_{k >= j} x'[item][k]
        let mut suffix = vec![S::zero(); n + 1];
        for j in (0..n).rev() {
            suffix[j] = suffix[j + 1].clone() + opponent[item][j].clone();
        }
        for j in 0..n {
            weights[item][j] =
                pi.clone() * (opponent[item][j].clone() * S::half() + suffix[j + 1].clone());
        }
    }
    let (assignment, total) = max_weight_assignment(&weights);
    Ok((Ranking::from_positions(assignment)?, total))
}

/// Exact rational best-response value against the greedy ranking.
pub fn greedy_beatability(p: &DiscreteDistribution) -> BigRational {
    let greedy = greedy_ranking(p);
    let opponent: Vec<Vec<BigRational>> = greedy.to_matrix();
    let (_, value) = best_response_ranking(&opponent, p).expect("square inputs");
    value
}
