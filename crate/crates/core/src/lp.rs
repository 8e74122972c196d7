//! Dense primal simplex, generic over the scalar backend.
//!
//! The duel polytopes in this crate are small (at most a few thousand
//! variables), so a self-contained dense tableau is the right trade: it is
//! deterministic, it runs unchanged in exact rational mode, and there is no
//! sparse bookkeeping to get wrong. Pricing is Dantzig's rule with a
//! permanent switch to Bland's rule whenever the objective stalls, which
//! keeps the fast path fast and still rules out cycling.

use crate::error::{DuelError, Result};
use crate::num::Scalar;
use serde::{Deserialize, Serialize};

/// One constraint `w · x >= b`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Halfspace<S> {
    pub w: Vec<S>,
    pub b: S,
}

impl<S: Scalar> Halfspace<S> {
    pub fn new(w: Vec<S>, b: S) -> Self {
        debug_assert!(w.iter().any(|c| !c.is_zero()), "degenerate halfspace");
        Self { w, b }
    }
}

/// A bounded polytope given by inequalities `w · x >= b` and equalities
/// `w · x = b`. Equalities are stored natively so their dual multipliers stay
/// sign-free.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Polytope<S> {
    pub dim: usize,
    pub ineqs: Vec<Halfspace<S>>,
    pub eqs: Vec<Halfspace<S>>,
}

impl<S: Scalar> Polytope<S> {
    pub fn new(dim: usize, ineqs: Vec<Halfspace<S>>, eqs: Vec<Halfspace<S>>) -> Self {
        Self { dim, ineqs, eqs }
    }

    /// Nonnegative orthant slice `x >= 0` plus the given rows.
    pub fn nonneg(dim: usize, mut ineqs: Vec<Halfspace<S>>, eqs: Vec<Halfspace<S>>) -> Self {
        for i in 0..dim {
            let mut w = vec![S::zero(); dim];
            w[i] = S::one();
            ineqs.push(Halfspace::new(w, S::zero()));
        }
        Self { dim, ineqs, eqs }
    }

    /// The standard probability simplex in `dim` coordinates.
    pub fn simplex(dim: usize) -> Self {
        Self::nonneg(dim, Vec::new(), vec![Halfspace::new(vec![S::one(); dim], S::one())])
    }

    /// Total number of constraint rows (inequalities plus equalities).
    pub fn num_rows(&self) -> usize {
        self.ineqs.len() + self.eqs.len()
    }

    pub fn contains(&self, x: &[S], tol: &S) -> bool {
        self.violation(x) <= *tol
    }

    /// Largest constraint violation of `x` (zero when feasible).
    pub fn violation(&self, x: &[S]) -> S {
        let mut worst = S::zero();
        for h in &self.ineqs {
            let s = h.b.clone() - dot(&h.w, x);
            if s > worst {
                worst = s;
            }
        }
        for h in &self.eqs {
            let s = (dot(&h.w, x) - h.b.clone()).abs();
            if s > worst {
                worst = s;
            }
        }
        worst
    }

    /// Check nonemptiness by running a feasibility LP.
    pub fn check_nonempty(&self) -> Result<()> {
        let objective = vec![S::zero(); self.dim];
        solve_lp(&objective, self, Sense::Maximize).map(|_| ())
    }
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        if !x.is_zero() && !y.is_zero() {
            acc = acc + x.clone() * y.clone();
        }
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Debug)]
pub struct LpSolution<S> {
    pub x: Vec<S>,
    pub value: S,
}

/// Optimize `objective · x` over a polytope.
///
/// Rows of the form `x_i >= 0` become intrinsic variable bounds; remaining
/// free variables split into positive and negative parts; inequalities get
/// slacks and a phase-1 pass with artificials finds a basic feasible point.
pub fn solve_lp<S: Scalar>(objective: &[S], region: &Polytope<S>, sense: Sense) -> Result<LpSolution<S>> {
    if objective.len() != region.dim {
        return Err(DuelError::Dimension(format!(
            "objective has {} coefficients for dim {}",
            objective.len(),
            region.dim
        )));
    }
    let dim = region.dim;

    // detect plain nonnegativity rows: a single positive coefficient, zero rhs
    let mut nonneg = vec![false; dim];
    let mut rows: Vec<(&[S], &S, bool)> = Vec::with_capacity(region.num_rows());
    for h in &region.ineqs {
        let mut nz = h.w.iter().enumerate().filter(|(_, c)| !c.is_zero());
        let first = nz.next();
        let single = first.is_some() && nz.next().is_none();
        if single {
            let (i, c) = first.unwrap();
            if *c > S::zero() && h.b.is_zero() {
                nonneg[i] = true;
                continue;
            }
        }
        rows.push((h.w.as_slice(), &h.b, false));
    }
    for h in &region.eqs {
        rows.push((h.w.as_slice(), &h.b, true));
    }

    // column layout: one column per nonneg var, two per free var
    let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(dim);
    let mut n_cols = 0usize;
    for &nn in &nonneg {
        if nn {
            col_of.push((n_cols, None));
            n_cols += 1;
        } else {
            col_of.push((n_cols, Some(n_cols + 1)));
            n_cols += 2;
        }
    }

    let obj_sign_flip = sense == Sense::Minimize;
    let mut c = vec![S::zero(); n_cols];
    for (i, coeff) in objective.iter().enumerate() {
        let v = if obj_sign_flip { -coeff.clone() } else { coeff.clone() };
        let (pos, neg) = col_of[i];
        c[pos] = v.clone();
        if let Some(neg) = neg {
            c[neg] = -v;
        }
    }
    let expanded_rows: Vec<(Vec<S>, S, bool)> = rows
        .iter()
        .map(|(w, b, eq)| {
            let mut row = vec![S::zero(); n_cols];
            for (i, coeff) in w.iter().enumerate() {
                if coeff.is_zero() {
                    continue;
                }
                let (pos, neg) = col_of[i];
                row[pos] = coeff.clone();
                if let Some(neg) = neg {
                    row[neg] = -coeff.clone();
                }
            }
            (row, (*b).clone(), *eq)
        })
        .collect();

    let sol = simplex_standard(&c, &expanded_rows)?;
    let mut x = vec![S::zero(); dim];
    for (i, &(pos, neg)) in col_of.iter().enumerate() {
        x[i] = match neg {
            Some(neg) => sol.x[pos].clone() - sol.x[neg].clone(),
            None => sol.x[pos].clone(),
        };
    }
    let value = dot(objective, &x);
    Ok(LpSolution { x, value })
}

/// Maximize `c · z` subject to `w · z >= / = b`, `z >= 0`.
fn simplex_standard<S: Scalar>(c: &[S], rows: &[(Vec<S>, S, bool)]) -> Result<LpSolution<S>> {
    let n = c.len();
    let m = rows.len();

    // Standard form: every inequality w·z >= b becomes w·z - s = b with
    // s >= 0; flip rows to keep rhs nonnegative; one artificial per row.
    let n_slack = rows.iter().filter(|r| !r.2).count();
    let total = n + n_slack + m;
    let mut a: Vec<Vec<S>> = Vec::with_capacity(m);
    let mut b: Vec<S> = Vec::with_capacity(m);
    let mut slack_idx = 0usize;
    for (w, rhs, eq) in rows {
        let mut row = vec![S::zero(); total];
        let flip = *rhs < S::zero();
        for (j, coeff) in w.iter().enumerate() {
            row[j] = if flip { -coeff.clone() } else { coeff.clone() };
        }
        if !*eq {
            row[n + slack_idx] = if flip { S::one() } else { -S::one() };
            slack_idx += 1;
        }
        b.push(if flip { -rhs.clone() } else { rhs.clone() });
        a.push(row);
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[n + n_slack + i] = S::one();
    }
    let basis: Vec<usize> = (0..m).map(|i| n + n_slack + i).collect();
    let mut in_basis = vec![false; total];
    for &j in &basis {
        in_basis[j] = true;
    }

    // Phase 1: minimize the sum of artificials.
    let mut phase1 = vec![S::zero(); total];
    for j in n + n_slack..total {
        phase1[j] = -S::one();
    }
    let mut tableau = Tableau { a, b, basis, in_basis, n_cols: total };
    tableau.run(&phase1, n + n_slack + m)?;
    let infeas = -tableau.objective_value(&phase1);
    if infeas > S::tol() {
        return Err(DuelError::Infeasible(format!(
            "phase-1 residual {:?} (constraints cannot all hold)",
            infeas.to_f64()
        )));
    }
    tableau.evict_artificials(n + n_slack)?;

    // Phase 2 works on the original columns only.
    let mut phase2 = vec![S::zero(); total];
    phase2[..n].clone_from_slice(c);
    tableau.run(&phase2, n + n_slack)?;

    let mut x = vec![S::zero(); n];
    for (i, &bi) in tableau.basis.iter().enumerate() {
        if bi < n {
            x[bi] = tableau.b[i].clone();
        }
    }
    let value = dot(c, &x);
    Ok(LpSolution { x, value })
}

struct Tableau<S> {
    a: Vec<Vec<S>>,
    b: Vec<S>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    n_cols: usize,
}

impl<S: Scalar> Tableau<S> {
    fn objective_value(&self, c: &[S]) -> S {
        let mut v = S::zero();
        for (i, &bi) in self.basis.iter().enumerate() {
            if !c[bi].is_zero() {
                v = v + c[bi].clone() * self.b[i].clone();
            }
        }
        v
    }

    /// Reduced cost of column `j` under objective `c` (maximization).
    fn reduced_cost(&self, c: &[S], j: usize) -> S {
        let mut z = S::zero();
        for (i, &bi) in self.basis.iter().enumerate() {
            if !self.a[i][j].is_zero() && !c[bi].is_zero() {
                z = z + c[bi].clone() * self.a[i][j].clone();
            }
        }
        c[j].clone() - z
    }

    /// All reduced costs at once through the dual prices `y = c_B` applied to
    /// the tableau rows; one pass over the matrix.
    fn reduced_costs(&self, c: &[S], col_limit: usize) -> Vec<S> {
        let mut red: Vec<S> = c[..col_limit].to_vec();
        for (i, &bi) in self.basis.iter().enumerate() {
            let weight = c[bi].clone();
            if weight.is_zero() {
                continue;
            }
            let row = &self.a[i];
            for (j, r) in red.iter_mut().enumerate() {
                if !row[j].is_zero() {
                    *r = r.clone() - weight.clone() * row[j].clone();
                }
            }
        }
        red
    }

    /// Pivot until no column below `col_limit` improves. Dantzig pricing,
    /// falling back to Bland's rule during degenerate stretches so cycling is
    /// impossible.
    fn run(&mut self, c: &[S], col_limit: usize) -> Result<()> {
        let col_limit = col_limit.min(self.n_cols);
        let stall_limit = 2 * (self.a.len() + col_limit) + 16;
        let mut stall = 0usize;
        let mut last_value = self.objective_value(c);
        loop {
            let bland = stall > stall_limit;
            let entering = if bland {
                let mut found = None;
                for j in 0..col_limit {
                    if !self.in_basis[j] && self.reduced_cost(c, j) > S::tol() {
                        found = Some(j);
                        break;
                    }
                }
                found
            } else {
                let red = self.reduced_costs(c, col_limit);
                let mut best: Option<(usize, S)> = None;
                for (j, r) in red.into_iter().enumerate() {
                    if self.in_basis[j] || r <= S::tol() {
                        continue;
                    }
                    if best.as_ref().map_or(true, |(_, br)| r > *br) {
                        best = Some((j, r));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(enter) = entering else {
                return Ok(());
            };
            // leaving: min ratio, ties by lowest basis variable index
            let mut leave: Option<usize> = None;
            let mut best_ratio: Option<S> = None;
            for i in 0..self.a.len() {
                if self.a[i][enter] > S::tol() {
                    let ratio = self.b[i].clone() / self.a[i][enter].clone();
                    let better = match &best_ratio {
                        None => true,
                        Some(r) => {
                            ratio < *r
                                || (ratio == *r && self.basis[i] < self.basis[leave.unwrap()])
                        }
                    };
                    if better {
                        best_ratio = Some(ratio);
                        leave = Some(i);
                    }
                }
            }
            let Some(row) = leave else {
                return Err(DuelError::Unbounded(format!(
                    "column {enter} improves without bound"
                )));
            };
            self.pivot(row, enter);
            let value = self.objective_value(c);
            if value > last_value {
                stall = 0;
                last_value = value;
            } else {
                stall += 1;
            }
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.a[row][col].clone();
        for v in self.a[row].iter_mut() {
            if !v.is_zero() {
                *v = v.clone() / pivot.clone();
            }
        }
        self.b[row] = self.b[row].clone() / pivot;
        let (pivot_row_a, pivot_row_b) = (self.a[row].clone(), self.b[row].clone());
        for i in 0..self.a.len() {
            if i == row {
                continue;
            }
            let factor = self.a[i][col].clone();
            if factor.is_zero() {
                continue;
            }
            let target = &mut self.a[i];
            for (j, pv) in pivot_row_a.iter().enumerate() {
                if !pv.is_zero() {
                    target[j] = target[j].clone() - factor.clone() * pv.clone();
                }
            }
            self.b[i] = self.b[i].clone() - factor * pivot_row_b.clone();
        }
        self.in_basis[self.basis[row]] = false;
        self.in_basis[col] = true;
        self.basis[row] = col;
    }

    /// After phase 1, pivot remaining artificials out (or confirm their rows
    /// are redundant).
    fn evict_artificials(&mut self, first_artificial: usize) -> Result<()> {
        for i in 0..self.basis.len() {
            if self.basis[i] < first_artificial {
                continue;
            }
            let col = (0..first_artificial).find(|&j| !self.a[i][j].is_negligible());
            match col {
                Some(j) => self.pivot(i, j),
                // all-zero row: redundant constraint, leave the artificial
                // basic at level zero
                None => {
                    if !self.b[i].is_negligible() {
                        return Err(DuelError::Infeasible(
                            "artificial stuck at nonzero level".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
