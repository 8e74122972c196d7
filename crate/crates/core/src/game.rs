//! The duel abstraction: payoff semantics, tie rules, and a brute-force
//! matrix-game oracle for exactly solving small finite duels.

use crate::dist::DiscreteDistribution;
use crate::error::{DuelError, Result};
use crate::lp::{self, Halfspace, Polytope, Sense};
use crate::num::{Cost, Scalar};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// How a cost tie scores for player 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieRule {
    /// Ties award half a point to each player.
    SymmetricHalfPoint,
    /// Player 1 collects ties outright (the incumbent variant).
    Player1Wins,
}

impl TieRule {
    fn tie_score<S: Scalar>(&self) -> S {
        match self {
            TieRule::SymmetricHalfPoint => S::half(),
            TieRule::Player1Wins => S::one(),
        }
    }
}

/// A finite two-player constant-sum duel: strategy label lists, per-outcome
/// cost tables, the distribution over outcomes, and a tie rule.
#[derive(Clone, Debug)]
pub struct FiniteDuel {
    pub strategies1: Vec<String>,
    pub strategies2: Vec<String>,
    /// `costs1[s][w]` is the cost of strategy `s` on outcome `w`.
    pub costs1: Vec<Vec<Cost>>,
    pub costs2: Vec<Vec<Cost>>,
    pub dist: DiscreteDistribution,
    pub tie: TieRule,
}

impl FiniteDuel {
    /// A duel in which both players draw from the same strategy set.
    pub fn symmetric(
        strategies: Vec<String>,
        costs: Vec<Vec<Cost>>,
        dist: DiscreteDistribution,
        tie: TieRule,
    ) -> Result<Self> {
        let duel = Self {
            strategies1: strategies.clone(),
            strategies2: strategies,
            costs1: costs.clone(),
            costs2: costs,
            dist,
            tie,
        };
        duel.validate()?;
        Ok(duel)
    }

    pub fn new(
        strategies1: Vec<String>,
        strategies2: Vec<String>,
        costs1: Vec<Vec<Cost>>,
        costs2: Vec<Vec<Cost>>,
        dist: DiscreteDistribution,
        tie: TieRule,
    ) -> Result<Self> {
        let duel = Self { strategies1, strategies2, costs1, costs2, dist, tie };
        duel.validate()?;
        Ok(duel)
    }

    fn validate(&self) -> Result<()> {
        let n_out = self.dist.len();
        if self.costs1.len() != self.strategies1.len() || self.costs2.len() != self.strategies2.len() {
            return Err(DuelError::Dimension("one cost row per strategy required".into()));
        }
        for row in self.costs1.iter().chain(self.costs2.iter()) {
            if row.len() != n_out {
                return Err(DuelError::Dimension(format!(
                    "cost row has {} entries for {} outcomes",
                    row.len(),
                    n_out
                )));
            }
        }
        Ok(())
    }
}

/// Expected payoff to player 1 of cost vector `costs1` against `costs2`:
/// the probability of strictly lower cost plus the tie score on equal cost.
/// Infinite ties infinite.
pub fn payoff_in<S: Scalar>(
    costs1: &[Cost],
    costs2: &[Cost],
    probs: &[S],
    tie: TieRule,
) -> Result<S> {
    if costs1.len() != probs.len() || costs2.len() != probs.len() {
        return Err(DuelError::Dimension(format!(
            "cost vectors of length {}/{} for {} outcomes",
            costs1.len(),
            costs2.len(),
            probs.len()
        )));
    }
    let mut acc = S::zero();
    for ((c1, c2), p) in costs1.iter().zip(costs2).zip(probs) {
        match c1.compare(c2) {
            Ordering::Less => acc = acc + p.clone(),
            Ordering::Equal => acc = acc + p.clone() * tie.tie_score::<S>(),
            Ordering::Greater => {}
        }
    }
    Ok(acc)
}

/// Float-backed [`payoff_in`].
pub fn payoff(costs1: &[Cost], costs2: &[Cost], dist: &DiscreteDistribution, tie: TieRule) -> Result<f64> {
    payoff_in(costs1, costs2, &dist.probs_f64(), tie)
}

/// Default cap on materialized payoff matrices.
pub const MATRIX_ENTRY_CAP: usize = 10_000_000;

/// Materialize the full payoff matrix of a finite duel. Rows are built in
/// parallel; every entry is the same expression as the sequential build, so
/// the result is bit-identical.
pub fn duel_to_matrix(duel: &FiniteDuel) -> Result<Vec<Vec<f64>>> {
    duel_to_matrix_in::<f64>(duel, MATRIX_ENTRY_CAP)
}

pub fn duel_to_matrix_in<S: Scalar + Send + Sync>(
    duel: &FiniteDuel,
    entry_cap: usize,
) -> Result<Vec<Vec<S>>> {
    let rows = duel.strategies1.len();
    let cols = duel.strategies2.len();
    if rows.saturating_mul(cols) > entry_cap {
        return Err(DuelError::Size(format!(
            "{rows} x {cols} matrix exceeds cap of {entry_cap} entries"
        )));
    }
    let probs: Vec<S> = duel.dist.probs().iter().map(S::from_rational).collect();
    (0..rows)
        .into_par_iter()
        .map(|i| {
            (0..cols)
                .map(|j| payoff_in(&duel.costs1[i], &duel.costs2[j], &probs, duel.tie))
                .collect::<Result<Vec<S>>>()
        })
        .collect()
}

/// Value and mixed strategies of a finite matrix game.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixGameSolution<S> {
    pub value: S,
    pub mixed1: Vec<S>,
    pub mixed2: Vec<S>,
}

/// Solve the zero-sum matrix game `M` exactly via two LPs: player 1 maximizes
/// the row guarantee, player 2 minimizes the column exposure.
pub fn solve_matrix_game<S: Scalar>(matrix: &[Vec<S>]) -> Result<MatrixGameSolution<S>> {
    let rows = matrix.len();
    if rows == 0 {
        return Err(DuelError::Domain("empty matrix".into()));
    }
    let cols = matrix[0].len();
    if matrix.iter().any(|r| r.len() != cols) {
        return Err(DuelError::Dimension("ragged matrix".into()));
    }
    if matrix
        .iter()
        .flatten()
        .any(|v| !v.to_f64().is_finite())
    {
        return Err(DuelError::Domain("non-finite payoff entry".into()));
    }

    // Player 1: maximize v s.t. sigma^T M e_j >= v for all j, sigma in simplex.
    // Variables (sigma_1..sigma_rows, v); v is free but bounded by payoffs.
    let dim = rows + 1;
    let mut ineqs = Vec::with_capacity(cols + rows);
    for j in 0..cols {
        let mut w: Vec<S> = (0..rows).map(|i| matrix[i][j].clone()).collect();
        w.push(-S::one());
        ineqs.push(Halfspace::new(w, S::zero()));
    }
    for i in 0..rows {
        let mut w = vec![S::zero(); dim];
        w[i] = S::one();
        ineqs.push(Halfspace::new(w, S::zero()));
    }
    let mut simplex_row = vec![S::one(); rows];
    simplex_row.push(S::zero());
    let region = Polytope::new(dim, ineqs, vec![Halfspace::new(simplex_row, S::one())]);
    let mut objective = vec![S::zero(); rows];
    objective.push(S::one());
    let sol1 = lp::solve_lp(&objective, &region, Sense::Maximize)?;
    let mixed1: Vec<S> = sol1.x[..rows].to_vec();
    let value = sol1.value;

    // Player 2: minimize u s.t. e_i^T M tau <= u for all i.
    let dim2 = cols + 1;
    let mut ineqs2 = Vec::with_capacity(rows + cols);
    for i in 0..rows {
        let mut w: Vec<S> = (0..cols).map(|j| -matrix[i][j].clone()).collect();
        w.push(S::one());
        ineqs2.push(Halfspace::new(w, S::zero()));
    }
    for j in 0..cols {
        let mut w = vec![S::zero(); dim2];
        w[j] = S::one();
        ineqs2.push(Halfspace::new(w, S::zero()));
    }
    let mut simplex_row2 = vec![S::one(); cols];
    simplex_row2.push(S::zero());
    let region2 = Polytope::new(dim2, ineqs2, vec![Halfspace::new(simplex_row2, S::one())]);
    let mut objective2 = vec![S::zero(); cols];
    objective2.push(S::one());
    let sol2 = lp::solve_lp(&objective2, &region2, Sense::Minimize)?;
    let mixed2: Vec<S> = sol2.x[..cols].to_vec();

    Ok(MatrixGameSolution { value, mixed1, mixed2 })
}

/// Best payoff an opponent can secure against a fixed mixed strategy over
/// `strategies1`: `max_{x'} v(x', sigma) = 1 - min_j (sigma^T M)_j`.
pub fn beatability_of(mixed: &[f64], duel: &FiniteDuel) -> Result<f64> {
    beatability_of_in(mixed, duel)
}

pub fn beatability_of_in<S: Scalar + Send + Sync>(mixed: &[S], duel: &FiniteDuel) -> Result<S> {
    if mixed.len() != duel.strategies1.len() {
        return Err(DuelError::Dimension(format!(
            "{} weights for {} strategies",
            mixed.len(),
            duel.strategies1.len()
        )));
    }
    let mut total = S::zero();
    for w in mixed {
        if *w < -S::tol() {
            return Err(DuelError::Domain("negative strategy weight".into()));
        }
        total = total + w.clone();
    }
    if (total - S::one()).abs() > S::from_ratio(1, 1_000_000) {
        return Err(DuelError::Domain("strategy weights do not sum to 1".into()));
    }
    let matrix = duel_to_matrix_in::<S>(duel, MATRIX_ENTRY_CAP)?;
    let cols = duel.strategies2.len();
    let mut worst: Option<S> = None;
    for j in 0..cols {
        let mut v = S::zero();
        for (i, w) in mixed.iter().enumerate() {
            v = v + w.clone() * matrix[i][j].clone();
        }
        worst = Some(match worst {
            None => v,
            Some(cur) if v < cur => v,
            Some(cur) => cur,
        });
    }
    Ok(S::one() - worst.expect("at least one opposing strategy"))
}
