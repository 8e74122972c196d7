//! Parallel-edge racing duels. A race between two nodes with parallel edges
//! is the "primal" duel: any finite duel embeds as a race by giving each
//! strategy its own edge and matching delays to costs.

use crate::dist::DiscreteDistribution;
use crate::error::{DuelError, Result};
use crate::game::{duel_to_matrix, FiniteDuel, TieRule};
use crate::num::Cost;
use serde::{Deserialize, Serialize};

/// One correlated state of nature: its probability and the delay realized on
/// every edge.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RaceState {
    pub p: f64,
    pub delays: Vec<f64>,
}

/// A two-node network of parallel edges under correlated delay states.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParallelRace {
    pub states: Vec<RaceState>,
}

impl ParallelRace {
    pub fn new(states: Vec<RaceState>) -> Result<Self> {
        if states.is_empty() {
            return Err(DuelError::Domain("race needs at least one state".into()));
        }
        let n_edges = states[0].delays.len();
        if n_edges == 0 {
            return Err(DuelError::Domain("race needs at least one edge".into()));
        }
        let mut total = 0.0;
        for s in &states {
            if s.delays.len() != n_edges {
                return Err(DuelError::Dimension("ragged delay table".into()));
            }
            if s.p < 0.0 || s.delays.iter().any(|d| !d.is_finite() || *d < 0.0) {
                return Err(DuelError::Domain("negative probability or delay".into()));
            }
            total += s.p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(DuelError::Domain(format!("state probabilities sum to {total}")));
        }
        Ok(Self { states })
    }

    /// Product race over independent per-edge delay distributions
    /// (`edges[e]` lists `(delay, prob)` pairs).
    pub fn from_independent_edges(edges: &[Vec<(f64, f64)>]) -> Result<Self> {
        let mut states = vec![RaceState { p: 1.0, delays: Vec::new() }];
        for dist in edges {
            let mut next = Vec::with_capacity(states.len() * dist.len());
            for s in &states {
                for &(delay, prob) in dist {
                    let mut delays = s.delays.clone();
                    delays.push(delay);
                    next.push(RaceState { p: s.p * prob, delays });
                }
            }
            states = next;
        }
        Self::new(states)
    }

    pub fn num_edges(&self) -> usize {
        self.states[0].delays.len()
    }

    pub fn expected_delay(&self, edge: usize) -> f64 {
        self.states.iter().map(|s| s.p * s.delays[edge]).sum()
    }
}

/// The two-edge family from the shortest-path example: edge `a` takes
/// `eps/2` deterministically, edge `b` takes 0 with probability `1 - eps`
/// and 1 with probability `eps`.
pub fn app_b_race(eps: f64) -> ParallelRace {
    ParallelRace::new(vec![
        RaceState { p: 1.0 - eps, delays: vec![eps / 2.0, 0.0] },
        RaceState { p: eps, delays: vec![eps / 2.0, 1.0] },
    ])
    .expect("valid family for 0 < eps < 1")
}

/// The one-player optimum: the edge of least expected delay, ties to the
/// smallest index.
pub fn shortest_expected_edge(race: &ParallelRace) -> usize {
    let mut best = 0;
    let mut best_delay = race.expected_delay(0);
    for e in 1..race.num_edges() {
        let d = race.expected_delay(e);
        if d < best_delay {
            best = e;
            best_delay = d;
        }
    }
    best
}

/// The race as a finite duel: strategies are edges, costs are delays.
pub fn race_duel(race: &ParallelRace, tie: TieRule) -> Result<FiniteDuel> {
    let n_edges = race.num_edges();
    let probs: Vec<f64> = race.states.iter().map(|s| s.p).collect();
    let dist = DiscreteDistribution::from_f64s(&probs)?;
    let costs: Vec<Vec<Cost>> = (0..n_edges)
        .map(|e| race.states.iter().map(|s| Cost::Finite(s.delays[e])).collect())
        .collect();
    FiniteDuel::symmetric(
        (0..n_edges).map(|e| format!("e{e}")).collect(),
        costs,
        dist,
        tie,
    )
}

/// Encode a finite-cost strategy table as a race: one edge per strategy,
/// state-indexed delays equal to the costs, so the induced duel's payoff
/// matrix reproduces the original exactly.
pub fn encode_duel_as_race(costs: &[Vec<Cost>], dist: &DiscreteDistribution) -> Result<ParallelRace> {
    if costs.is_empty() {
        return Err(DuelError::Domain("need at least one strategy".into()));
    }
    let n_out = dist.len();
    let mut states = Vec::with_capacity(n_out);
    for (w, prob) in dist.probs_f64().iter().enumerate() {
        let delays = costs
            .iter()
            .map(|row| {
                if row.len() != n_out {
                    return Err(DuelError::Dimension("cost row length mismatch".into()));
                }
                match row[w] {
                    Cost::Finite(d) if d >= 0.0 => Ok(d),
                    Cost::Finite(_) => Err(DuelError::Domain("negative cost".into())),
                    Cost::Infinite => {
                        Err(DuelError::Domain("infinite cost cannot race".into()))
                    }
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        states.push(RaceState { p: *prob, delays });
    }
    ParallelRace::new(states)
}

/// The worked price-of-anarchy instance: edge `a` costs `eps`
/// deterministically, edge `b` costs 0 w.p. 3/4 and 1 w.p. 1/4. Edge `b` is
/// strictly dominant in the duel yet its expected cost is 1/4, for an
/// anarchy ratio of `1/(4 eps)`.
#[derive(Clone, Debug)]
pub struct PoaExample {
    pub race: ParallelRace,
    pub dominant_edge: usize,
    pub cost_ratio: f64,
}

pub fn poa_example(eps: f64) -> Result<PoaExample> {
    if !(0.0..0.25).contains(&eps) || eps == 0.0 {
        return Err(DuelError::Domain("eps must lie in (0, 1/4)".into()));
    }
    let race = ParallelRace::new(vec![
        RaceState { p: 0.75, delays: vec![eps, 0.0] },
        RaceState { p: 0.25, delays: vec![eps, 1.0] },
    ])?;
    let duel = race_duel(&race, TieRule::SymmetricHalfPoint)?;
    let m = duel_to_matrix(&duel)?;
    // strict dominance of b over a against both columns
    if !(m[1][0] > m[0][0] && m[1][1] > m[0][1]) {
        return Err(DuelError::Domain("edge b failed the dominance check".into()));
    }
    let cost_ratio = 0.25 / eps;
    Ok(PoaExample { race, dominant_edge: 1, cost_ratio })
}

/// Beatability of the shortest-expected-path choice: the best opposing edge's
/// payoff against it.
pub fn shortest_edge_beatability(race: &ParallelRace, tie: TieRule) -> Result<f64> {
    let duel = race_duel(race, tie)?;
    let chosen = shortest_expected_edge(race);
    let mut mixed = vec![0.0; race.num_edges()];
    mixed[chosen] = 1.0;
    crate::game::beatability_of(&mixed, &duel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{payoff, solve_matrix_game};

    #[test]
    fn shortest_edge_selection() {
        let det = ParallelRace::from_independent_edges(&[
            vec![(1.0, 1.0)],
            vec![(2.0, 1.0)],
        ])
        .unwrap();
        assert_eq!(shortest_expected_edge(&det), 0);

        // the optimization algorithm picks a: E[a] = eps/2 < eps = E[b]
        let race = app_b_race(0.1);
        assert_eq!(shortest_expected_edge(&race), 0);

        let tie = ParallelRace::from_independent_edges(&[
            vec![(1.0, 1.0)],
            vec![(0.0, 0.5), (2.0, 0.5)],
        ])
        .unwrap();
        assert_eq!(shortest_expected_edge(&tie), 0);
    }

    #[test]
    fn race_duel_matrix() {
        let duel = race_duel(&app_b_race(0.1), TieRule::SymmetricHalfPoint).unwrap();
        let m = duel_to_matrix(&duel).unwrap();
        assert_eq!(m[0], vec![0.5, 0.1]);
        assert_eq!(m[1], vec![0.9, 0.5]);
        assert_eq!(payoff(&duel.costs1[1], &duel.costs2[0], &duel.dist, duel.tie).unwrap(), 0.9);
    }

    #[test]
    fn identical_edges_all_half() {
        let race = ParallelRace::new(vec![RaceState { p: 1.0, delays: vec![2.0, 2.0] }]).unwrap();
        let m = duel_to_matrix(&race_duel(&race, TieRule::SymmetricHalfPoint).unwrap()).unwrap();
        assert!(m.iter().flatten().all(|&v| v == 0.5));
    }

    #[test]
    fn deterministic_race_dominated_by_fastest() {
        let race = ParallelRace::new(vec![RaceState { p: 1.0, delays: vec![3.0, 1.0, 2.0] }]).unwrap();
        let m = duel_to_matrix(&race_duel(&race, TieRule::SymmetricHalfPoint).unwrap()).unwrap();
        let sol = solve_matrix_game(&m).unwrap();
        assert!((sol.value - 0.5).abs() < 1e-9);
        assert!((sol.mixed1[1] - 1.0).abs() < 1e-7, "fastest edge carries the strategy");
    }

    #[test]
    fn shortest_edge_is_nearly_always_beaten() {
        for eps in [0.1, 0.01, 0.001] {
            let b = shortest_edge_beatability(&app_b_race(eps), TieRule::SymmetricHalfPoint).unwrap();
            assert_eq!(b, 1.0 - eps);
        }
    }

    #[test]
    fn encoding_round_trips_exactly() {
        // a 3-strategy duel with integer costs
        let dist = DiscreteDistribution::uniform(3);
        let costs = vec![
            vec![Cost::Finite(1.0), Cost::Finite(2.0), Cost::Finite(3.0)],
            vec![Cost::Finite(2.0), Cost::Finite(1.0), Cost::Finite(2.0)],
            vec![Cost::Finite(3.0), Cost::Finite(3.0), Cost::Finite(1.0)],
        ];
        let duel = FiniteDuel::symmetric(
            vec!["a".into(), "b".into(), "c".into()],
            costs.clone(),
            dist.clone(),
            TieRule::SymmetricHalfPoint,
        )
        .unwrap();
        let race = encode_duel_as_race(&costs, &dist).unwrap();
        let back = race_duel(&race, TieRule::SymmetricHalfPoint).unwrap();
        assert_eq!(duel_to_matrix(&duel).unwrap(), duel_to_matrix(&back).unwrap());
    }

    #[test]
    fn one_strategy_duel_is_one_edge_race() {
        let dist = DiscreteDistribution::uniform(2);
        let costs = vec![vec![Cost::Finite(1.0), Cost::Finite(4.0)]];
        let race = encode_duel_as_race(&costs, &dist).unwrap();
        assert_eq!(race.num_edges(), 1);
        let m = duel_to_matrix(&race_duel(&race, TieRule::SymmetricHalfPoint).unwrap()).unwrap();
        assert_eq!(m, vec![vec![0.5]]);
    }

    #[test]
    fn infinite_costs_refused() {
        let dist = DiscreteDistribution::uniform(1);
        assert!(encode_duel_as_race(&[vec![Cost::Infinite]], &dist).is_err());
    }

    #[test]
    fn poa_ratio() {
        let ex = poa_example(0.05).unwrap();
        assert_eq!(ex.cost_ratio, 5.0);
        assert_eq!(ex.dominant_edge, 1);
        // dominance margin: v(b, a) = 3/4
        let m = duel_to_matrix(&race_duel(&ex.race, TieRule::SymmetricHalfPoint).unwrap()).unwrap();
        assert_eq!(m[1][0], 0.75);
        // ratio tends to 1 as eps approaches 1/4
        let near_quarter = poa_example(0.2499).unwrap();
        assert!((near_quarter.cost_ratio - 1.0).abs() < 1e-2);
        assert!(poa_example(0.3).is_err());
        assert!(poa_example(0.0).is_err());
    }
}
