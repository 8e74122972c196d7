//! Approximate minmax through repeated play with best-response oracles.
//!
//! Each round, a player perturbs the opponent's accumulated play by `N`
//! uniform draws from `[0, R]^dim`, asks the oracle for a best response to
//! each, and plays the average. Low regret of both players turns the
//! time-averaged strategies into approximate minmax strategies: if both
//! regrets are at most `r`, the averages are `2r/T`-minmax.

use crate::error::{DuelError, Result};
use crate::lp::{dot, Polytope};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// An approximate best-response oracle into a convex strategy set.
///
/// `respond` receives a point of `[0, B]^opponent_dim` (a scaled opponent
/// accumulation) and must return a point of the player's own set whose payoff
/// is within `accuracy` of the best. Positive scalings of the input do not
/// change the argmax, which is why sup-norm rescaling below is sound.
pub trait BestResponseOracle: Sync {
    /// Dimension of the player's own strategy set.
    fn self_dim(&self) -> usize;
    /// Dimension of the opponent accumulation the oracle responds to.
    fn opponent_dim(&self) -> usize;
    /// Coordinate bound `B` of the strategy sets.
    fn bound(&self) -> f64;
    /// Additive accuracy `eps` of the response at `[0, B]` input scale.
    fn accuracy(&self) -> f64;
    /// Best response to an opponent point in `[0, B]^opponent_dim`.
    fn respond(&self, opponent: &[f64]) -> Vec<f64>;

    /// The player's feasible polytope, when one is available for checking.
    fn region(&self) -> Option<&Polytope<f64>> {
        None
    }

    /// Oracle extended to the whole nonnegative orthant: rescale the input to
    /// sup-norm `B` before responding; the zero vector passes through.
    fn respond_scaled(&self, accumulation: &[f64]) -> Vec<f64> {
        let max = accumulation.iter().fold(0.0f64, |a, &b| a.max(b));
        if max <= 0.0 {
            return self.respond(&vec![0.0; self.opponent_dim()]);
        }
        let b = self.bound();
        let scaled: Vec<f64> = accumulation.iter().map(|v| v * b / max).collect();
        self.respond(&scaled)
    }
}

/// The repeated-play schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FelParams {
    /// Rounds `T`.
    pub rounds: usize,
    /// Perturbation cube side `R`.
    pub cube_side: f64,
    /// Oracle samples per round `N`.
    pub samples: usize,
    /// Coordinate bound `B`.
    pub bound: f64,
    /// Payoff bound `C = B^3 n n'`.
    pub payoff_bound: f64,
    /// Failure probability `delta`.
    pub delta: f64,
    /// Target accuracy `eps`.
    pub eps: f64,
}

/// The schedule from the regret analysis: `T = (4C sqrt(max(m, m'))/(3
/// eps))^{2/3}` rounded up and clamped to at least `max(m, m')` (so `R/B <=
/// T`), `R = B sqrt(max(m, m') T)`, `N = ln(4TC/delta)/(2 eps^2)`.
#[allow(clippy::too_many_arguments)]
pub fn fel_params_from(
    eps: f64,
    delta: f64,
    m: usize,
    mprime: usize,
    n: usize,
    nprime: usize,
    bound: f64,
) -> FelParams {
    assert!(eps > 0.0 && eps < 1.0, "eps in (0,1)");
    assert!(delta > 0.0 && delta < 1.0, "delta in (0,1)");
    let max_m = m.max(mprime).max(1) as f64;
    let payoff_bound = bound.powi(3) * n as f64 * nprime as f64;
    let t_raw = (4.0 * payoff_bound * max_m.sqrt() / (3.0 * eps)).powf(2.0 / 3.0);
    let rounds = (t_raw.ceil() as usize).max(max_m as usize).max(1);
    let cube_side = bound * (max_m * rounds as f64).sqrt();
    let samples = ((4.0 * rounds as f64 * payoff_bound / delta).ln() / (2.0 * eps * eps))
        .ceil()
        .max(1.0) as usize;
    FelParams { rounds, cube_side, samples, bound, payoff_bound, delta, eps }
}

/// Full history of a repeated-play run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DuelTranscript {
    pub plays1: Vec<Vec<f64>>,
    pub plays2: Vec<Vec<f64>>,
    pub payoffs: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl DuelTranscript {
    pub fn rounds(&self) -> usize {
        self.payoffs.len()
    }

    /// CSV dump with columns `t,payoff,cumulative`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,payoff,cumulative\n");
        for (t, (p, c)) in self.payoffs.iter().zip(&self.cumulative).enumerate() {
            out.push_str(&format!("{},{},{}\n", t + 1, p, c));
        }
        out
    }
}

/// One FEL move: average of `N` oracle responses to the perturbed history.
/// Perturbations are pre-drawn and indexed, so the (parallel) oracle calls
/// combine identically regardless of completion order.
pub fn fel_play(
    oracle: &dyn BestResponseOracle,
    history_sum: &[f64],
    params: &FelParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let dim_in = oracle.opponent_dim();
    if history_sum.len() != dim_in {
        return Err(DuelError::Dimension(format!(
            "history has {} coordinates, oracle expects {dim_in}",
            history_sum.len()
        )));
    }
    if history_sum.iter().any(|v| *v < -1e-12) {
        return Err(DuelError::Domain("negative opponent accumulation".into()));
    }
    let perturbations: Vec<Vec<f64>> = (0..params.samples)
        .map(|_| {
            (0..dim_in)
                .map(|i| rng.gen::<f64>() * params.cube_side + history_sum[i])
                .collect()
        })
        .collect();
    let responses: Vec<Vec<f64>> = perturbations
        .par_iter()
        .map(|p| oracle.respond_scaled(p))
        .collect();
    let dim_out = oracle.self_dim();
    let mut avg = vec![0.0; dim_out];
    for resp in &responses {
        if resp.len() != dim_out {
            return Err(DuelError::OracleContract(format!(
                "oracle returned {} coordinates, expected {dim_out}",
                resp.len()
            )));
        }
        if let Some(region) = oracle.region() {
            if !region.contains(resp, &1e-9) {
                return Err(DuelError::OracleContract(
                    "oracle response violates its feasible set".into(),
                ));
            }
        }
        for (a, r) in avg.iter_mut().zip(resp) {
            *a += r / params.samples as f64;
        }
    }
    Ok(avg)
}

/// Result of mutual FEL play.
#[derive(Clone, Debug)]
pub struct FelOutcome {
    /// Time-averaged strategy for player 1.
    pub sigma: Vec<f64>,
    /// Time-averaged strategy for player 2.
    pub sigma_prime: Vec<f64>,
    /// Mean per-round payoff `(1/T) sum x_t^T M x'_t`.
    pub empirical_value: f64,
    pub regret1: f64,
    pub regret2: f64,
    pub transcript: DuelTranscript,
}

impl FelOutcome {
    /// The certified minmax slack `2 max(r1, r2)/T`.
    pub fn eps_prime(&self) -> f64 {
        2.0 * self.regret1.max(self.regret2).max(0.0) / self.transcript.rounds() as f64
    }
}

/// A bilinear duel visible only through its payoff matrix and two oracles.
pub struct OracleDuel<'a> {
    /// `n x n'` payoff matrix to player 1.
    pub matrix: &'a [Vec<f64>],
    /// Player 1's oracle: maximizes `x^T M y` over `K` given accumulated `y`s.
    pub oracle1: &'a dyn BestResponseOracle,
    /// Player 2's oracle: maximizes `-x^T M y` over `K'` given accumulated `x`s.
    pub oracle2: &'a dyn BestResponseOracle,
}

impl OracleDuel<'_> {
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate() {
            if *xi != 0.0 {
                acc += xi * dot(&self.matrix[i], y);
            }
        }
        acc
    }
}

/// Run `T` rounds of mutual FEL and return the averaged strategies, the
/// empirical value and both players' measured regrets.
pub fn fel_solve(duel: &OracleDuel, params: &FelParams, rng: &mut ChaCha8Rng) -> Result<FelOutcome> {
    let n = duel.oracle1.self_dim();
    let nprime = duel.oracle2.self_dim();
    if duel.matrix.len() != n || duel.matrix.iter().any(|r| r.len() != nprime) {
        return Err(DuelError::Dimension("payoff matrix shape mismatch".into()));
    }
    let mut hist1 = vec![0.0; n];
    let mut hist2 = vec![0.0; nprime];
    let mut transcript = DuelTranscript {
        plays1: Vec::with_capacity(params.rounds),
        plays2: Vec::with_capacity(params.rounds),
        payoffs: Vec::with_capacity(params.rounds),
        cumulative: Vec::with_capacity(params.rounds),
    };
    let mut cum = 0.0;
    for _ in 0..params.rounds {
        let x = fel_play(duel.oracle1, &hist2, params, rng)?;
        let y = fel_play(duel.oracle2, &hist1, params, rng)?;
        let v = duel.value(&x, &y);
        cum += v;
        for (h, xi) in hist1.iter_mut().zip(&x) {
            *h += xi;
        }
        for (h, yi) in hist2.iter_mut().zip(&y) {
            *h += yi;
        }
        transcript.plays1.push(x);
        transcript.plays2.push(y);
        transcript.payoffs.push(v);
        transcript.cumulative.push(cum);
    }
    let t = params.rounds as f64;
    let sigma: Vec<f64> = hist1.iter().map(|v| v / t).collect();
    let sigma_prime: Vec<f64> = hist2.iter().map(|v| v / t).collect();
    let regret1 = regret_of(&transcript, duel, Player::One);
    let regret2 = regret_of(&transcript, duel, Player::Two);
    Ok(FelOutcome {
        sigma,
        sigma_prime,
        empirical_value: cum / t,
        regret1,
        regret2,
        transcript,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Player {
    One,
    Two,
}

/// Hindsight regret of one player: payoff of the (oracle-chosen) best fixed
/// strategy against the opponent's realized sequence, minus the realized
/// total. The best fixed strategy comes from the same approximate oracle, so
/// the report undershoots true regret by at most `eps (T + R/B)`.
pub fn regret_of(transcript: &DuelTranscript, duel: &OracleDuel, player: Player) -> f64 {
    let t = transcript.rounds();
    if t == 0 {
        return 0.0;
    }
    let realized: f64 = transcript.payoffs.iter().sum();
    match player {
        Player::One => {
            let mut opp_sum = vec![0.0; duel.oracle1.opponent_dim()];
            for y in &transcript.plays2 {
                for (s, v) in opp_sum.iter_mut().zip(y) {
                    *s += v;
                }
            }
            let best = duel.oracle1.respond_scaled(&opp_sum);
            duel.value(&best, &opp_sum) - realized
        }
        Player::Two => {
            let mut opp_sum = vec![0.0; duel.oracle2.opponent_dim()];
            for x in &transcript.plays1 {
                for (s, v) in opp_sum.iter_mut().zip(x) {
                    *s += v;
                }
            }
            let best = duel.oracle2.respond_scaled(&opp_sum);
            // player 2's payoff is -x^T M y
            -duel.value(&opp_sum, &best) - (-realized)
        }
    }
}

/// Exact pure-vertex oracle for simplex-polytope duels (used to exercise the
/// learner and by tests as the zero-error reference).
pub struct SimplexVertexOracle<'a> {
    pub matrix: &'a [Vec<f64>],
    pub player: Player,
    region: Polytope<f64>,
}

impl<'a> SimplexVertexOracle<'a> {
    pub fn new(matrix: &'a [Vec<f64>], player: Player) -> Self {
        let dim = match player {
            Player::One => matrix.len(),
            Player::Two => matrix[0].len(),
        };
        Self { matrix, player, region: Polytope::simplex(dim) }
    }
}

impl BestResponseOracle for SimplexVertexOracle<'_> {
    fn self_dim(&self) -> usize {
        match self.player {
            Player::One => self.matrix.len(),
            Player::Two => self.matrix[0].len(),
        }
    }

    fn opponent_dim(&self) -> usize {
        match self.player {
            Player::One => self.matrix[0].len(),
            Player::Two => self.matrix.len(),
        }
    }

    fn bound(&self) -> f64 {
        1.0
    }

    fn accuracy(&self) -> f64 {
        0.0
    }

    fn region(&self) -> Option<&Polytope<f64>> {
        Some(&self.region)
    }

    fn respond(&self, opponent: &[f64]) -> Vec<f64> {
        let dim = self.self_dim();
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..dim {
            let score = match self.player {
                Player::One => dot(&self.matrix[i], opponent),
                Player::Two => -opponent
                    .iter()
                    .enumerate()
                    .map(|(r, x)| x * self.matrix[r][i])
                    .sum::<f64>(),
            };
            if score > best_score + 1e-15 {
                best = i;
                best_score = score;
            }
        }
        let mut v = vec![0.0; dim];
        v[best] = 1.0;
        v
    }
}

/// Both sides of the be-the-leader inequality for player 1 on a transcript:
/// the leader's cumulative payoff with one-step lookahead under a fixed
/// perturbation `r`, and the hindsight optimum minus `2CR/B + T(T + R/B)
/// eps`. The first must dominate the second.
pub fn be_the_leader_sides(
    duel: &OracleDuel,
    transcript: &DuelTranscript,
    perturbation: &[f64],
    params: &FelParams,
) -> (f64, f64) {
    let t = transcript.rounds();
    let mut lhs = 0.0;
    let mut acc = perturbation.to_vec();
    for y in transcript.plays2.iter().take(t) {
        for (a, v) in acc.iter_mut().zip(y) {
            *a += v;
        }
        let leader = duel.oracle1.respond_scaled(&acc);
        lhs += duel.value(&leader, y);
    }
    let mut opp_sum = vec![0.0; duel.oracle1.opponent_dim()];
    for y in &transcript.plays2 {
        for (s, v) in opp_sum.iter_mut().zip(y) {
            *s += v;
        }
    }
    let best_fixed = duel.oracle1.respond_scaled(&opp_sum);
    let hindsight = duel.value(&best_fixed, &opp_sum);
    let c = params.payoff_bound;
    let r_over_b = params.cube_side / params.bound;
    let slack = 2.0 * c * r_over_b / params.bound
        + t as f64 * (t as f64 + r_over_b) * duel.oracle1.accuracy();
    (lhs, hindsight - slack)
}
