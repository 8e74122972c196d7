//! Exact minmax for bilinear duels.
//!
//! Player strategies are points of polytopes `K` and `K'` and the payoff to
//! player 1 is `x^T M x'`. Instead of one constraint per opposing vertex, the
//! solver maximizes the dual lower bound directly: find `x in K` together
//! with multipliers over `K'`'s constraint rows reconstructing `x^T M`, so
//! the multiplier value is a guarantee against every `x' in K'`. Multipliers
//! on inequality rows must be nonnegative; rows stored as equalities carry
//! sign-free multipliers.

use crate::error::{DuelError, Result};
use crate::lp::{dot, solve_lp, Halfspace, LpSolution, Polytope, Sense};
use crate::num::Scalar;
use serde::{Deserialize, Serialize};

/// Feasibility slack for membership checks.
pub const FEAS_TOL: f64 = 1e-9;
/// Verification slack: two orders looser than the solve.
pub const VERIFY_TOL: f64 = 1e-6;

/// A bilinear duel: strategy polytopes and the payoff matrix for player 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BilinearDuel<S> {
    pub k: Polytope<S>,
    pub kprime: Polytope<S>,
    /// `n x n'` payoff matrix, `v(x, x') = x^T M x'`.
    pub matrix: Vec<Vec<S>>,
    /// Coordinate bound `B`: both polytopes live in `[0, B]^dim` and matrix
    /// entries are bounded by `B` in absolute value.
    pub bound: f64,
}

impl<S: Scalar> BilinearDuel<S> {
    pub fn new(k: Polytope<S>, kprime: Polytope<S>, matrix: Vec<Vec<S>>, bound: f64) -> Result<Self> {
        if matrix.len() != k.dim || matrix.iter().any(|r| r.len() != kprime.dim) {
            return Err(DuelError::Dimension(format!(
                "payoff matrix must be {} x {}",
                k.dim, kprime.dim
            )));
        }
        if matrix.iter().flatten().any(|v| v.to_f64().abs() > bound + FEAS_TOL) {
            return Err(DuelError::Domain(format!("matrix entry exceeds bound {bound}")));
        }
        Ok(Self { k, kprime, matrix, bound })
    }

    /// The duel as player 2 sees it when the total payoff is constant-sum 1:
    /// player 2 maximizes `1 - x^T M x'`, equivalently plays `(K', K, -M^T)`.
    pub fn swapped(&self) -> Self {
        let n = self.k.dim;
        let nprime = self.kprime.dim;
        let mut mt = vec![vec![S::zero(); n]; nprime];
        for i in 0..n {
            for j in 0..nprime {
                mt[j][i] = -self.matrix[i][j].clone();
            }
        }
        Self {
            k: self.kprime.clone(),
            kprime: self.k.clone(),
            matrix: mt,
            bound: self.bound,
        }
    }

    /// `x^T M` as a row vector over `K'` coordinates.
    pub fn left_product(&self, x: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.kprime.dim];
        for (i, xi) in x.iter().enumerate() {
            if xi.is_zero() {
                continue;
            }
            for (j, out_j) in out.iter_mut().enumerate() {
                *out_j = out_j.clone() + xi.clone() * self.matrix[i][j].clone();
            }
        }
        out
    }

    pub fn value_of(&self, x: &[S], xprime: &[S]) -> S {
        dot(&self.left_product(x), xprime)
    }
}

/// A minmax strategy with its dual certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinmaxSolution<S> {
    /// Guaranteed payoff to the maximizing player.
    pub value: S,
    pub x: Vec<S>,
    /// One multiplier per `K'` inequality row, nonnegative.
    pub lambda: Vec<S>,
    /// One sign-free multiplier per `K'` equality row.
    pub nu: Vec<S>,
}

impl<S: Scalar> MinmaxSolution<S> {
    /// Componentwise residual of the dual reconstruction
    /// `x^T M = sum lambda_i w'_i + sum nu_j e'_j`.
    pub fn reconstruction_residual(&self, duel: &BilinearDuel<S>) -> f64 {
        let lhs = duel.left_product(&self.x);
        let mut rhs = vec![S::zero(); duel.kprime.dim];
        for (h, l) in duel.kprime.ineqs.iter().zip(&self.lambda) {
            for (j, rhs_j) in rhs.iter_mut().enumerate() {
                *rhs_j = rhs_j.clone() + l.clone() * h.w[j].clone();
            }
        }
        for (h, m) in duel.kprime.eqs.iter().zip(&self.nu) {
            for (j, rhs_j) in rhs.iter_mut().enumerate() {
                *rhs_j = rhs_j.clone() + m.clone() * h.w[j].clone();
            }
        }
        lhs.iter()
            .zip(&rhs)
            .map(|(a, b)| (a.clone() - b.clone()).abs().to_f64())
            .fold(0.0, f64::max)
    }
}

/// Solve the bilinear duel for player 1 by the dual-multiplier LP.
///
/// Maximizes `sum lambda_i b'_i + sum nu_j c'_j` over `x in K`, `lambda >= 0`
/// and free `nu`, subject to `x^T M` matching the multiplier combination of
/// `K'`'s rows coordinatewise. The optimum is the game value and `x` is a
/// minmax strategy.
pub fn minmax_bilinear<S: Scalar>(duel: &BilinearDuel<S>) -> Result<MinmaxSolution<S>> {
    let n = duel.k.dim;
    let m_ineq = duel.kprime.ineqs.len();
    let m_eq = duel.kprime.eqs.len();
    let dim = n + m_ineq + m_eq;
    let lam = |i: usize| n + i;
    let nu = |j: usize| n + m_ineq + j;

    let mut ineqs: Vec<Halfspace<S>> = Vec::new();
    let mut eqs: Vec<Halfspace<S>> = Vec::new();

    // x in K
    for h in &duel.k.ineqs {
        let mut w = vec![S::zero(); dim];
        w[..n].clone_from_slice(&h.w);
        ineqs.push(Halfspace::new(w, h.b.clone()));
    }
    for h in &duel.k.eqs {
        let mut w = vec![S::zero(); dim];
        w[..n].clone_from_slice(&h.w);
        eqs.push(Halfspace::new(w, h.b.clone()));
    }
    // lambda >= 0
    for i in 0..m_ineq {
        let mut w = vec![S::zero(); dim];
        w[lam(i)] = S::one();
        ineqs.push(Halfspace::new(w, S::zero()));
    }
    // coordinatewise x^T M = sum lambda_i w'_i + sum nu_j e'_j
    for c in 0..duel.kprime.dim {
        let mut w = vec![S::zero(); dim];
        for (r, w_r) in w.iter_mut().enumerate().take(n) {
            *w_r = duel.matrix[r][c].clone();
        }
        for (i, h) in duel.kprime.ineqs.iter().enumerate() {
            w[lam(i)] = -h.w[c].clone();
        }
        for (j, h) in duel.kprime.eqs.iter().enumerate() {
            w[nu(j)] = -h.w[c].clone();
        }
        eqs.push(Halfspace::new(w, S::zero()));
    }

    let mut objective = vec![S::zero(); dim];
    for (i, h) in duel.kprime.ineqs.iter().enumerate() {
        objective[lam(i)] = h.b.clone();
    }
    for (j, h) in duel.kprime.eqs.iter().enumerate() {
        objective[nu(j)] = h.b.clone();
    }

    let region = Polytope::new(dim, ineqs, eqs);
    let sol = solve_lp(&objective, &region, Sense::Maximize).map_err(|e| match e {
        DuelError::Infeasible(msg) => DuelError::Infeasible(format!(
            "minmax LP infeasible (is K nonempty and K' bounded?): {msg}"
        )),
        other => other,
    })?;

    Ok(MinmaxSolution {
        value: sol.value,
        x: sol.x[..n].to_vec(),
        lambda: sol.x[n..n + m_ineq].to_vec(),
        nu: sol.x[n + m_ineq..].to_vec(),
    })
}

/// Player 2's minmax strategy and value, in payoff-to-player-2 units, for a
/// duel whose payoffs sum to 1.
pub fn minmax_bilinear_player2<S: Scalar>(duel: &BilinearDuel<S>) -> Result<MinmaxSolution<S>> {
    let mut sol = minmax_bilinear(&duel.swapped())?;
    sol.value = S::one() + sol.value;
    Ok(sol)
}

/// Outcome of checking a claimed guarantee.
#[derive(Clone, Debug)]
pub struct Verification<S> {
    pub ok: bool,
    /// Exact worst-case payoff of `x` against `K'`.
    pub worst_value: S,
    /// A minimizing opposing point.
    pub worst_response: Vec<S>,
}

/// Check that `x` guarantees at least `claimed` (within [`VERIFY_TOL`]) by
/// solving the exact best-response LP over `K'`.
pub fn verify_minmax<S: Scalar>(
    x: &[S],
    duel: &BilinearDuel<S>,
    claimed: &S,
) -> Result<Verification<S>> {
    let feas = S::from_rational(
        &num_rational::BigRational::from_float(FEAS_TOL).unwrap(),
    );
    let loose = if S::EXACT { S::zero() } else { feas };
    if duel.k.violation(x) > S::from_ratio(1, 1_000_000) + loose {
        return Err(DuelError::Domain("x violates K beyond tolerance".into()));
    }
    let objective = duel.left_product(x);
    let sol: LpSolution<S> = solve_lp(&objective, &duel.kprime, Sense::Minimize)?;
    let slack = S::from_ratio(1, 1_000_000);
    Ok(Verification {
        ok: sol.value >= claimed.clone() - slack,
        worst_value: sol.value,
        worst_response: sol.x,
    })
}
