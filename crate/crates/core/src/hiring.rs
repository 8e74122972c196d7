//! The hiring duel. Candidates arrive in random order and only projected
//! ranks are observable. The common-pool variant has a threshold equilibrium
//! computed from binomial ratios; the independent-pool variant becomes a
//! bilinear duel over hire-probability flows with a posterior-product payoff
//! tensor.

use crate::bilinear::{minmax_bilinear, verify_minmax, BilinearDuel};
use crate::error::{DuelError, Result};
use crate::lp::{Halfspace, Polytope};
use crate::num::{binomial, Scalar};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Hire probabilities indexed by round `i` and projected rank `j <= i`
/// (both 1-based through the accessors).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiringPolicy {
    pub n: usize,
    /// `pi[i-1][j-1]` for `1 <= j <= i <= n`.
    pub pi: Vec<Vec<f64>>,
}

impl HiringPolicy {
    pub fn zeros(n: usize) -> Self {
        Self { n, pi: (1..=n).map(|i| vec![0.0; i]).collect() }
    }

    pub fn get(&self, round: usize, rank: usize) -> f64 {
        self.pi[round - 1][rank - 1]
    }

    pub fn set(&mut self, round: usize, rank: usize, value: f64) {
        self.pi[round - 1][rank - 1] = value;
    }

    pub fn validate(&self) -> Result<()> {
        if self.pi.len() != self.n || self.pi.iter().enumerate().any(|(i, r)| r.len() != i + 1) {
            return Err(DuelError::Dimension("triangular policy table required".into()));
        }
        if self.pi.iter().flatten().any(|&v| !(0.0..=1.0 + 1e-12).contains(&v)) {
            return Err(DuelError::Domain("hire probability outside [0,1]".into()));
        }
        Ok(())
    }
}

/// A strategy for the common-pool duel: a pre-hire policy used while the
/// opponent is still searching, plus the reaction rule "hire anyone who
/// beats the opponent's employee" once they have hired. The classical
/// algorithm ignores the opponent, so its reaction is disabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommonDuelPolicy {
    pub pre: HiringPolicy,
    pub reaction: bool,
}

/// The symmetric common-duel equilibrium: hire at round `i` on projected
/// rank `j` exactly when `C(i,j)/C(n,j) >= 1/2` (the candidate is at least
/// even money to stay best), and react once the opponent hires.
pub fn common_equilibrium(n: usize) -> CommonDuelPolicy {
    let mut pre = HiringPolicy::zeros(n);
    for i in 1..=n {
        for j in 1..=i {
            if equilibrium_hires(n, i, j) {
                pre.set(i, j, 1.0);
            }
        }
    }
    CommonDuelPolicy { pre, reaction: true }
}

/// `C(i,j)/C(n,j) >= 1/2` by exact integer cross-multiplication.
pub fn equilibrium_hires(n: usize, i: usize, j: usize) -> bool {
    let lhs: BigInt = binomial(i as u64, j as u64) * BigInt::from(2);
    lhs >= binomial(n as u64, j as u64)
}

/// The classical secretary rule: pass on the first `floor(n/e)` candidates,
/// then hire the first one that beats everything seen; failing that, hire the
/// very last candidate so the duel payoff stays defined.
pub fn classical_secretary(n: usize) -> CommonDuelPolicy {
    let skip = (n as f64 / std::f64::consts::E).floor() as usize;
    let mut pre = HiringPolicy::zeros(n);
    for i in skip + 1..=n {
        pre.set(i, 1, 1.0);
    }
    for j in 1..=n {
        pre.set(n, j, 1.0);
    }
    CommonDuelPolicy { pre, reaction: false }
}

/// Monte Carlo estimate of A's payoff in the common duel, with a 99%
/// normal-approximation confidence radius. Trials run in parallel on seeds
/// derived from `(seed, chunk)`, tallied in exact half-points, so the result
/// is schedule-independent.
pub fn simulate_common_duel(
    pol_a: &CommonDuelPolicy,
    pol_b: &CommonDuelPolicy,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    pol_a.pre.validate()?;
    pol_b.pre.validate()?;
    if trials == 0 {
        return Err(DuelError::Domain("need at least one trial".into()));
    }
    const CHUNK: u64 = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let half_points: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(c + 1)));
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(trials);
            let mut acc = 0u64;
            let mut ranks = vec![0usize; n];
            for _ in lo..hi {
                sample_rank_order(&mut ranks, &mut rng);
                acc += common_duel_trial(pol_a, pol_b, &ranks, &mut rng);
            }
            acc
        })
        .sum();
    let rate = half_points as f64 / (2.0 * trials as f64);
    let ci = 2.576 * (rate * (1.0 - rate) / trials as f64).sqrt();
    Ok((rate, ci))
}

/// Fill `ranks` with a uniform permutation of `1..=n` (`ranks[pos]` is the
/// overall rank of the candidate interviewed at `pos + 1`).
fn sample_rank_order<R: Rng + ?Sized>(ranks: &mut [usize], rng: &mut R) {
    let n = ranks.len();
    for (i, r) in ranks.iter_mut().enumerate() {
        *r = i + 1;
    }
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        ranks.swap(i, j);
    }
}

/// Play one common-pool trial; returns A's half-points (0, 1, or 2).
fn common_duel_trial<R: Rng + ?Sized>(
    pol_a: &CommonDuelPolicy,
    pol_b: &CommonDuelPolicy,
    ranks: &[usize],
    rng: &mut R,
) -> u64 {
    let n = ranks.len();
    // hire round and rank per player
    let mut hire: [Option<(usize, usize)>; 2] = [None, None];
    for i in 1..=n {
        let rank_i = ranks[i - 1];
        let projected = 1 + ranks[..i - 1].iter().filter(|&&r| r < rank_i).count();
        let mut decisions = [false, false];
        for (p, pol) in [(0usize, pol_a), (1usize, pol_b)].into_iter() {
            if hire[p].is_some() {
                continue;
            }
            let opp = hire[1 - p];
            decisions[p] = match opp {
                // opponent hired in an earlier round: react if enabled
                Some((h_round, h_rank)) if pol.reaction && h_round < i => rank_i < h_rank,
                _ => {
                    let prob = pol.pre.get(i, projected);
                    prob > 0.0 && (prob >= 1.0 || rng.gen::<f64>() < prob)
                }
            };
        }
        for p in 0..2 {
            if decisions[p] {
                hire[p] = Some((i, rank_i));
            }
        }
    }
    match (hire[0], hire[1]) {
        (None, None) => 1,
        (Some(_), None) => 2,
        (None, Some(_)) => 0,
        (Some((ra, a)), Some((rb, b))) => {
            let _ = (ra, rb);
            match a.cmp(&b) {
                std::cmp::Ordering::Less => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Greater => 0,
            }
        }
    }
}

/// Posterior probability that the candidate seen at round `i` with projected
/// rank `j` has overall rank `r`: by Bayes with `Pr[rank r] = 1/n` and
/// `Pr[projected j at i] = 1/i`,
/// `Pr = (i/n) C(r-1, j-1) C(n-r, i-j) / C(n-1, i-1)`.
pub fn rank_posterior_exact(n: usize, i: usize, j: usize, r: usize) -> Result<BigRational> {
    if !(1 <= j && j <= i && i <= n && 1 <= r && r <= n) {
        return Err(DuelError::Domain(format!("bad posterior query (n={n}, i={i}, j={j}, r={r})")));
    }
    let numer = binomial(r as u64 - 1, j as u64 - 1) * binomial((n - r) as u64, (i - j) as u64);
    if numer.is_zero() {
        return Ok(BigRational::zero());
    }
    let denom = binomial(n as u64 - 1, i as u64 - 1);
    Ok(BigRational::new(numer * BigInt::from(i), denom * BigInt::from(n)))
}

pub fn rank_posterior(n: usize, i: usize, j: usize, r: usize) -> Result<f64> {
    Ok(Scalar::to_f64(&rank_posterior_exact(n, i, j, r)?))
}

/// Flat index for the hire event `(round i, projected rank j)`; the no-hire
/// outcome sits at index `n(n+1)/2`.
pub fn hire_index(i: usize, j: usize) -> usize {
    (i - 1) * i / 2 + (j - 1)
}

pub fn hire_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Cap on tensor size.
pub const TENSOR_CAP: usize = 30;

/// Payoff tensor over hire events plus the no-hire outcome: the probability
/// that A's hire outranks B's, plus half the probability of equal ranks.
/// No hire loses to any hire and ties no hire. Built from posterior suffix
/// sums, `O(n)` per entry pair.
pub fn hiring_payoff_tensor_in<S: Scalar>(n: usize) -> Result<Vec<Vec<S>>> {
    if n > TENSOR_CAP {
        return Err(DuelError::Size(format!("tensor capped at n = {TENSOR_CAP}, got {n}")));
    }
    let d = hire_dim(n);
    // posterior[idx][r-1] and suffix[idx][r] = sum_{r' > r} posterior
    let mut posterior: Vec<Vec<S>> = vec![Vec::new(); d];
    for i in 1..=n {
        for j in 1..=i {
            let mut row = Vec::with_capacity(n);
            for r in 1..=n {
                row.push(S::from_rational(&rank_posterior_exact(n, i, j, r)?));
            }
            posterior[hire_index(i, j)] = row;
        }
    }
    let suffix: Vec<Vec<S>> = posterior
        .iter()
        .map(|row| {
            let mut s = vec![S::zero(); n + 1];
            for r in (0..n).rev() {
                s[r] = s[r + 1].clone() + row[r].clone();
            }
            s
        })
        .collect();
    let mut m = vec![vec![S::zero(); d + 1]; d + 1];
    for a in 0..d {
        for b in 0..d {
            let mut v = S::zero();
            for r in 0..n {
                if posterior[a][r].is_zero() {
                    continue;
                }
                v = v + posterior[a][r].clone()
                    * (suffix[b][r + 1].clone() + posterior[b][r].clone() * S::half());
            }
            m[a][b] = v;
        }
        m[a][d] = S::one();
        // m[d][a] stays zero: no hire loses to a hire
    }
    m[d][d] = S::half();
    Ok(m)
}

pub fn hiring_payoff_tensor(n: usize) -> Result<Vec<Vec<f64>>> {
    hiring_payoff_tensor_in::<f64>(n)
}

/// Total hire probabilities `p_ij` with the derived reach probabilities
/// `q_i` (`q_1 = 1`, `q_{i+1} = q_i - sum_j p_ij`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HiringFlow {
    pub n: usize,
    /// `p[i-1][j-1]` for `j <= i`.
    pub p: Vec<Vec<f64>>,
}

impl HiringFlow {
    pub const TOL: f64 = 1e-9;

    pub fn reach_probs(&self) -> Vec<f64> {
        let mut q = vec![1.0; self.n + 1];
        for i in 1..=self.n {
            let hired: f64 = self.p[i - 1].iter().sum();
            q[i] = q[i - 1] - hired;
        }
        q
    }

    pub fn no_hire_mass(&self) -> f64 {
        self.reach_probs()[self.n]
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.len() != self.n || self.p.iter().enumerate().any(|(i, r)| r.len() != i + 1) {
            return Err(DuelError::Dimension("triangular flow table required".into()));
        }
        let mut q = 1.0;
        for i in 1..=self.n {
            for (j, &pij) in self.p[i - 1].iter().enumerate() {
                if pij < -Self::TOL {
                    return Err(DuelError::Domain(format!("negative flow at ({i},{})", j + 1)));
                }
                if pij > q / i as f64 + Self::TOL {
                    return Err(DuelError::Infeasible(format!(
                        "p_{{{i},{}}} = {pij} exceeds q_{i}/{i} = {}",
                        j + 1,
                        q / i as f64
                    )));
                }
            }
            q -= self.p[i - 1].iter().sum::<f64>();
            if q < -Self::TOL {
                return Err(DuelError::Domain(format!("reach probability q_{} negative", i + 1)));
            }
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(hire_dim(self.n) + 1);
        for row in &self.p {
            out.extend_from_slice(row);
        }
        out.push(self.no_hire_mass());
        out
    }

    pub fn unflatten(v: &[f64], n: usize) -> Result<Self> {
        if v.len() != hire_dim(n) + 1 {
            return Err(DuelError::Dimension("bad flow vector length".into()));
        }
        let mut p = Vec::with_capacity(n);
        let mut at = 0usize;
        for i in 1..=n {
            p.push(v[at..at + i].iter().map(|x| x.max(0.0)).collect());
            at += i;
        }
        Ok(Self { n, p })
    }
}

/// The flow polytope over `hire_dim(n) + 1` coordinates (hire events plus
/// explicit no-hire mass): nonnegativity, total mass one, and
/// `i p_ij <= q_i`, i.e. `i p_ij + sum_{i' < i} p_{i'j'} <= 1`.
pub fn hiring_flow_polytope<S: Scalar>(n: usize) -> Polytope<S> {
    let d = hire_dim(n);
    let dim = d + 1;
    let mut ineqs = Vec::with_capacity(d);
    for i in 1..=n {
        for j in 1..=i {
            let mut w = vec![S::zero(); dim];
            w[hire_index(i, j)] = -S::from_int(i as i64);
            for iprev in 1..i {
                for jprev in 1..=iprev {
                    w[hire_index(iprev, jprev)] = -S::one();
                }
            }
            ineqs.push(Halfspace::new(w, -S::one()));
        }
    }
    let eqs = vec![Halfspace::new(vec![S::one(); dim], S::one())];
    Polytope::nonneg(dim, ineqs, eqs)
}

/// Exact minmax of the independent-pool hiring duel via the bilinear LP.
/// The game is symmetric so the value is 1/2; the flow is certified against
/// its exact best response before being returned.
pub fn solve_independent_hiring(n: usize) -> Result<(f64, HiringFlow)> {
    let duel = hiring_bilinear_duel::<f64>(n)?;
    let sol = minmax_bilinear(&duel)?;
    let verdict = verify_minmax(&sol.x, &duel, &sol.value)?;
    if !verdict.ok {
        return Err(DuelError::Domain(format!(
            "hiring solution failed verification: {} < {}",
            verdict.worst_value, sol.value
        )));
    }
    let flow = HiringFlow::unflatten(&sol.x, n)?;
    flow.validate()?;
    Ok((sol.value, flow))
}

pub fn hiring_bilinear_duel<S: Scalar>(n: usize) -> Result<BilinearDuel<S>> {
    let m = hiring_payoff_tensor_in::<S>(n)?;
    BilinearDuel::new(hiring_flow_polytope(n), hiring_flow_polytope(n), m, 1.0)
}

/// Conditional hire probabilities from total ones: `pi(i,j) = p_ij/(q_i/i)`,
/// zero where the round is unreachable.
pub fn flow_to_policy(flow: &HiringFlow) -> Result<HiringPolicy> {
    flow.validate()?;
    let q = flow.reach_probs();
    let mut policy = HiringPolicy::zeros(flow.n);
    for i in 1..=flow.n {
        for j in 1..=i {
            let pij = flow.p[i - 1][j - 1];
            let cap = q[i - 1] / i as f64;
            let value = if q[i - 1] <= HiringFlow::TOL { 0.0 } else { (pij / cap).clamp(0.0, 1.0) };
            policy.set(i, j, value);
        }
    }
    Ok(policy)
}

/// Total hire probabilities from conditional ones via the reach recursion.
pub fn policy_to_flow(policy: &HiringPolicy) -> Result<HiringFlow> {
    policy.validate()?;
    let n = policy.n;
    let mut p: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut q = 1.0;
    for i in 1..=n {
        let row: Vec<f64> = (1..=i).map(|j| q * policy.get(i, j) / i as f64).collect();
        q -= row.iter().sum::<f64>();
        p.push(row);
    }
    let flow = HiringFlow { n, p };
    flow.validate()?;
    Ok(flow)
}

/// Empirical behavior of a single-player policy.
#[derive(Clone, Debug)]
pub struct PolicySimulation {
    /// Empirical `p_ij`.
    pub hire_freq: Vec<Vec<f64>>,
    /// Histogram of the hired candidate's overall rank (index `rank - 1`).
    pub rank_hist: Vec<f64>,
    pub no_hire: f64,
}

/// Run a policy against random arrival orders, tallying where it hires.
pub fn simulate_policy(
    policy: &HiringPolicy,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<PolicySimulation> {
    policy.validate()?;
    if policy.n != n {
        return Err(DuelError::Dimension("policy size mismatch".into()));
    }
    const CHUNK: u64 = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let tallies: Vec<(Vec<u64>, Vec<u64>, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xd134_2543_de82_ef95u64.wrapping_mul(c + 1)));
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(trials);
            let mut hires = vec![0u64; hire_dim(n)];
            let mut ranks_hist = vec![0u64; n];
            let mut none = 0u64;
            let mut ranks = vec![0usize; n];
            for _ in lo..hi {
                sample_rank_order(&mut ranks, &mut rng);
                let mut hired = false;
                for i in 1..=n {
                    let rank_i = ranks[i - 1];
                    let projected = 1 + ranks[..i - 1].iter().filter(|&&r| r < rank_i).count();
                    let prob = policy.get(i, projected);
                    if prob > 0.0 && (prob >= 1.0 || rng.gen::<f64>() < prob) {
                        hires[hire_index(i, projected)] += 1;
                        ranks_hist[rank_i - 1] += 1;
                        hired = true;
                        break;
                    }
                }
                if !hired {
                    none += 1;
                }
            }
            (hires, ranks_hist, none)
        })
        .collect();
    let mut hires = vec![0u64; hire_dim(n)];
    let mut rank_hist = vec![0u64; n];
    let mut none = 0u64;
    for (h, r, x) in tallies {
        for (a, b) in hires.iter_mut().zip(h) {
            *a += b;
        }
        for (a, b) in rank_hist.iter_mut().zip(r) {
            *a += b;
        }
        none += x;
    }
    let t = trials as f64;
    let mut hire_freq = Vec::with_capacity(n);
    for i in 1..=n {
        hire_freq.push((1..=i).map(|j| hires[hire_index(i, j)] as f64 / t).collect());
    }
    Ok(PolicySimulation {
        hire_freq,
        rank_hist: rank_hist.into_iter().map(|c| c as f64 / t).collect(),
        no_hire: none as f64 / t,
    })
}

/// Exhaustively scan every deterministic threshold deviation against the
/// common-duel equilibrium at small `n`, in exact arithmetic.
///
/// Against the reacting equilibrium, a deviation's payoff on a fixed arrival
/// order depends only on the first round (up to the equilibrium's own hire
/// round) where its thresholds fire, so deviations are scanned as a prefix
/// tree over threshold vectors with per-permutation survival sets. Returns
/// the best payoff in half-points over `2 n!` (so `<= n!` half-points means
/// no deviation beats 1/2).
pub fn common_duel_deviation_scan(n: usize) -> Result<(u64, u64)> {
    if n > 8 {
        return Err(DuelError::Size("deviation scan capped at n = 8".into()));
    }
    let equilibrium = common_equilibrium(n);
    // per permutation: projected ranks, equilibrium fire round, fire values
    struct Info {
        /// `W` in half-points if the deviation first fires at round `i`
        /// (index `i-1`, rounds `1..=e0`).
        fire_value: Vec<u64>,
        /// projected rank at each round `1..=e0`.
        projected: Vec<usize>,
        /// half-points when the deviation never fires by `e0`.
        none_value: u64,
        e0: usize,
    }
    let mut infos = Vec::new();
    let mut ranks: Vec<usize> = (1..=n).collect();
    permute(&mut ranks, 0, &mut |ranks| {
        let mut projected = Vec::with_capacity(n);
        for i in 1..=n {
            let rank_i = ranks[i - 1];
            projected.push(1 + ranks[..i - 1].iter().filter(|&&r| r < rank_i).count());
        }
        let e0 = (1..=n)
            .find(|&i| equilibrium.pre.get(i, projected[i - 1]) >= 1.0)
            .expect("equilibrium always hires by round n");
        let mut fire_value = Vec::with_capacity(e0);
        for i in 1..=e0 {
            if i == e0 {
                // simultaneous hire of the same candidate
                fire_value.push(1);
            } else {
                // deviation hires rank sigma(i); equilibrium reacts and wins
                // unless nothing later beats it
                let r = ranks[i - 1];
                let beaten = ranks[i..].iter().any(|&x| x < r);
                fire_value.push(if beaten { 0 } else { 2 });
            }
        }
        let r = ranks[e0 - 1];
        let beats_later = ranks[e0..].iter().any(|&x| x < r);
        infos.push(Info {
            fire_value,
            projected: projected[..e0].to_vec(),
            none_value: if beats_later { 2 } else { 0 },
            e0,
        });
    });

    // prefix-tree scan: at round i, choosing threshold t fires all surviving
    // permutations with projected rank <= t
    fn scan(infos: &[Info], round: usize, surviving: Vec<u32>, acc: u64, n: usize) -> u64 {
        // permutations whose window closed collect their none-value
        let mut acc = acc;
        let mut open: Vec<u32> = Vec::with_capacity(surviving.len());
        for &s in &surviving {
            let info = &infos[s as usize];
            if round > info.e0 {
                acc += info.none_value;
            } else {
                open.push(s);
            }
        }
        if open.is_empty() || round > n {
            let tail: u64 = open.iter().map(|&s| infos[s as usize].none_value).sum();
            return acc + tail;
        }
        let mut best = 0u64;
        for t in 0..=round {
            let mut fired = 0u64;
            let mut rest: Vec<u32> = Vec::with_capacity(open.len());
            for &s in &open {
                let info = &infos[s as usize];
                if info.projected[round - 1] <= t {
                    fired += info.fire_value[round - 1];
                } else {
                    rest.push(s);
                }
            }
            let total = scan(infos, round + 1, rest, acc + fired, n);
            if total > best {
                best = total;
            }
        }
        best
    }

    let all: Vec<u32> = (0..infos.len() as u32).collect();
    let best = scan(&infos, 1, all, 0, n);
    let factorial: u64 = (1..=n as u64).product();
    Ok((best, factorial))
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}
