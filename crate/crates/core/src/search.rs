//! The binary search duel. Trees are encoded through a layered state/action
//! graph: states are live intervals with a query counter, actions are
//! queries, and Bayes-consistent flows over the graph are exactly the mixed
//! strategies. The duel then solves as a bilinear LP, and flows round back to
//! trees by sampling one out-edge per state.

use crate::bilinear::{minmax_bilinear, minmax_bilinear_player2, BilinearDuel};
use crate::dist::DiscreteDistribution;
use crate::error::{DuelError, Result};
use crate::lp::{Halfspace, Polytope};
use crate::num::Scalar;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A binary search tree over `1..=n`, stored as its depth vector
/// (`depths[item] = 1` at the root). In-order labeling makes the depth
/// vector a faithful encoding: the unique minimum on any live interval is
/// that subtree's root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinarySearchTree {
    depths: Vec<u32>,
}

impl BinarySearchTree {
    pub fn n(&self) -> usize {
        self.depths.len()
    }

    pub fn depth(&self, item: usize) -> u32 {
        self.depths[item]
    }

    pub fn depths(&self) -> &[u32] {
        &self.depths
    }

    /// Root of the subtree on items `lo..=hi` (0-based inclusive).
    fn subtree_root(&self, lo: usize, hi: usize) -> usize {
        (lo..=hi)
            .min_by_key(|&k| (self.depths[k], k))
            .expect("nonempty interval")
    }
}

impl Serialize for BinarySearchTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            root_order: &'a [u32],
        }
        Wire { root_order: &self.depths }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinarySearchTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            root_order: Vec<u32>,
        }
        let w = Wire::deserialize(d)?;
        depth_vector_to_tree(&w.root_order).map_err(serde::de::Error::custom)
    }
}

/// Recursive depth-vector characterization: exactly one entry equals 1, and
/// the left/right remainders (shifted down one level) are depth vectors.
pub fn depth_vector_check(u: &[u32]) -> bool {
    fn check(u: &[u32], level: u32) -> bool {
        if u.is_empty() {
            return true;
        }
        let mut roots = u.iter().enumerate().filter(|(_, &d)| d == level);
        let Some((root, _)) = roots.next() else { return false };
        if roots.next().is_some() {
            return false;
        }
        check(&u[..root], level + 1) && check(&u[root + 1..], level + 1)
    }
    check(u, 1)
}

/// Build the unique tree realizing a valid depth vector.
pub fn depth_vector_to_tree(u: &[u32]) -> Result<BinarySearchTree> {
    if !depth_vector_check(u) {
        return Err(DuelError::Domain(format!("not a depth vector: {u:?}")));
    }
    Ok(BinarySearchTree { depths: u.to_vec() })
}

/// The one-player optimum for uniform weights: query the lower median and
/// recurse.
pub fn median_search_tree(n: usize) -> BinarySearchTree {
    let mut depths = vec![0u32; n];
    fn fill(depths: &mut [u32], lo: usize, hi: usize, level: u32) {
        if lo > hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        depths[mid] = level;
        if mid > lo {
            fill(depths, lo, mid - 1, level + 1);
        }
        fill(depths, mid + 1, hi, level + 1);
    }
    if n > 0 {
        fill(&mut depths, 0, n - 1, 1);
    }
    BinarySearchTree { depths }
}

/// Uniformly random tree shape: pick a root, recurse (test and sampling
/// helper; not the uniform distribution over trees, but full-support).
pub fn random_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> BinarySearchTree {
    let mut depths = vec![0u32; n];
    fn fill<R: Rng + ?Sized>(depths: &mut [u32], lo: usize, hi: usize, level: u32, rng: &mut R) {
        if lo > hi {
            return;
        }
        let root = rng.gen_range(lo..=hi);
        depths[root] = level;
        if root > lo {
            fill(depths, lo, root - 1, level + 1, rng);
        }
        fill(depths, root + 1, hi, level + 1, rng);
    }
    if n > 0 {
        fill(&mut depths, 0, n - 1, 1, rng);
    }
    BinarySearchTree { depths }
}

/// Enumerate every BST on `n` items (Catalan many).
pub fn enumerate_trees(n: usize) -> Vec<BinarySearchTree> {
    fn rec(lo: usize, hi: usize, level: u32, depths: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if lo > hi {
            out.push(depths.clone());
            return;
        }
        let snapshot = out.len();
        let _ = snapshot;
        let mut partials: Vec<Vec<u32>> = Vec::new();
        for root in lo..=hi {
            depths[root] = level;
            // enumerate left completions, then for each, right completions
            let mut lefts: Vec<Vec<u32>> = Vec::new();
            if root > lo {
                rec(lo, root - 1, level + 1, depths, &mut lefts);
            } else {
                lefts.push(depths.clone());
            }
            for left in lefts {
                let mut d = left;
                let mut rights: Vec<Vec<u32>> = Vec::new();
                if root < hi {
                    rec(root + 1, hi, level + 1, &mut d, &mut rights);
                } else {
                    rights.push(d.clone());
                }
                partials.extend(rights);
            }
        }
        out.extend(partials);
    }
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut depths = vec![0u32; n];
    rec(0, n - 1, 1, &mut depths, &mut out);
    out.into_iter().map(|depths| BinarySearchTree { depths }).collect()
}

/// `V[time-1][item]`: the value of finding `item` at query `time` (1-based).
pub type ValueMatrix<S> = Vec<Vec<S>>;

/// Value matrix of a pure tree: finding an item strictly earlier than the
/// opponent is worth 1, the same query index 1/2, later 0.
pub fn value_matrix_of_tree<S: Scalar>(tree: &BinarySearchTree) -> ValueMatrix<S> {
    let n = tree.n();
    let mut v = vec![vec![S::zero(); n]; n];
    for (time0, row) in v.iter_mut().enumerate() {
        let time = (time0 + 1) as u32;
        for (item, cell) in row.iter_mut().enumerate() {
            let opp = tree.depth(item);
            *cell = if time < opp {
                S::one()
            } else if time == opp {
                S::half()
            } else {
                S::zero()
            };
        }
    }
    v
}

/// `<I, V>_p = sum_{i,j} I[i][j] V[i][j] p(j)`.
pub fn expected_value<S: Scalar>(
    indicator: &[Vec<S>],
    value: &ValueMatrix<S>,
    p: &DiscreteDistribution,
) -> S {
    let mut acc = S::zero();
    for (i, row) in indicator.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            if !x.is_zero() {
                acc = acc + x.clone() * value[i][j].clone() * S::from_rational(p.prob(j));
            }
        }
    }
    acc
}

/// Expected payoff of `tree` against a value matrix.
pub fn tree_value<S: Scalar>(tree: &BinarySearchTree, value: &ValueMatrix<S>, p: &DiscreteDistribution) -> S {
    let mut acc = S::zero();
    for item in 0..tree.n() {
        let t = tree.depth(item) as usize - 1;
        acc = acc + value[t][item].clone() * S::from_rational(p.prob(item));
    }
    acc
}

/// Knowledge state: live interval `lo..=hi` (0-based) after `queries` probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SearchState {
    pub lo: usize,
    pub hi: usize,
    pub queries: u32,
}

/// One state-to-action edge: from `state`, query item `k`.
#[derive(Clone, Copy, Debug)]
pub struct SearchEdge {
    pub state: usize,
    pub k: usize,
    /// Child state reached when the target is left / right of `k`.
    pub left: Option<usize>,
    pub right: Option<usize>,
}

/// The reachable layered graph for `n` items: `O(n^3)` states, `O(n^4)`
/// edges. Structure only; Bayes split fractions depend on `p` and live with
/// the flows.
#[derive(Clone, Debug)]
pub struct StateActionGraph {
    pub n: usize,
    pub states: Vec<SearchState>,
    pub edges: Vec<SearchEdge>,
    /// Outgoing edge indices per state.
    pub out_edges: Vec<Vec<usize>>,
    /// Incoming `(edge, is_left_child)` pairs per state.
    pub in_edges: Vec<Vec<(usize, bool)>>,
    pub start: usize,
}

/// Cap on the graph size.
pub const GRAPH_CAP: usize = 31;

pub fn build_state_action_graph(n: usize) -> Result<StateActionGraph> {
    if n == 0 || n > GRAPH_CAP {
        return Err(DuelError::Size(format!("graph supports 1..={GRAPH_CAP} items, got {n}")));
    }
    let mut states = vec![SearchState { lo: 0, hi: n - 1, queries: 0 }];
    let mut index: HashMap<SearchState, usize> = HashMap::new();
    index.insert(states[0], 0);
    let mut edges: Vec<SearchEdge> = Vec::new();
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new()];
    let mut in_edges: Vec<Vec<(usize, bool)>> = vec![Vec::new()];
    let mut frontier = 0usize;
    while frontier < states.len() {
        let s = states[frontier];
        for k in s.lo..=s.hi {
            let mut resolve = |lo: usize, hi: usize| -> Option<usize> {
                if lo > hi || hi >= n {
                    return None;
                }
                let child = SearchState { lo, hi, queries: s.queries + 1 };
                Some(*index.entry(child).or_insert_with(|| {
                    states.push(child);
                    out_edges.push(Vec::new());
                    in_edges.push(Vec::new());
                    states.len() - 1
                }))
            };
            let left = if k > s.lo { resolve(s.lo, k - 1) } else { None };
            let right = if k < s.hi { resolve(k + 1, s.hi) } else { None };
            let edge_id = edges.len();
            edges.push(SearchEdge { state: frontier, k, left, right });
            out_edges[frontier].push(edge_id);
            if let Some(l) = left {
                in_edges[l].push((edge_id, true));
            }
            if let Some(r) = right {
                in_edges[r].push((edge_id, false));
            }
        }
        frontier += 1;
    }
    Ok(StateActionGraph { n, states, edges, out_edges, in_edges, start: 0 })
}

/// Bayes split of interval mass at a query: fractions of `Pr[lo..=hi]` lying
/// strictly left of `k`, at `k`, and strictly right. A zero-mass interval
/// sends everything to the terminal, keeping conservation trivially exact.
pub fn conditional_splits<S: Scalar>(
    p: &DiscreteDistribution,
    lo: usize,
    hi: usize,
    k: usize,
) -> Result<(S, S, S)> {
    if lo > hi || k < lo || k > hi || hi >= p.len() {
        return Err(DuelError::Domain(format!("bad split query ({lo},{hi},{k})")));
    }
    let mass = |a: usize, b: usize| -> S {
        let mut acc = S::zero();
        for i in a..=b {
            acc = acc + S::from_rational(p.prob(i));
        }
        acc
    };
    let total = mass(lo, hi);
    if total.is_zero() {
        return Ok((S::zero(), S::one(), S::zero()));
    }
    let left = if k > lo { mass(lo, k - 1) } else { S::zero() };
    let right = if k < hi { mass(k + 1, hi) } else { S::zero() };
    let exact = S::from_rational(p.prob(k));
    Ok((left / total.clone(), exact / total.clone(), right / total))
}

/// Flow values on every state-to-action edge of a graph.
#[derive(Clone, Debug)]
pub struct StatefulFlow<S> {
    pub edge_flows: Vec<S>,
}

impl<S: Scalar> StatefulFlow<S> {
    /// Inflow to each state implied by the edge flows and the split rule.
    pub fn state_inflows(&self, graph: &StateActionGraph, p: &DiscreteDistribution) -> Result<Vec<S>> {
        let mut inflow = vec![S::zero(); graph.states.len()];
        inflow[graph.start] = S::one();
        for (e, edge) in graph.edges.iter().enumerate() {
            let s = graph.states[edge.state];
            let (pl, _, pr) = conditional_splits::<S>(p, s.lo, s.hi, edge.k)?;
            if let Some(l) = edge.left {
                inflow[l] = inflow[l].clone() + pl * self.edge_flows[e].clone();
            }
            if let Some(r) = edge.right {
                inflow[r] = inflow[r].clone() + pr * self.edge_flows[e].clone();
            }
        }
        Ok(inflow)
    }

    /// Largest conservation violation across states.
    pub fn conservation_residual(&self, graph: &StateActionGraph, p: &DiscreteDistribution) -> Result<S> {
        let inflow = self.state_inflows(graph, p)?;
        let mut worst = S::zero();
        for (s, outs) in graph.out_edges.iter().enumerate() {
            let mut out = S::zero();
            for &e in outs {
                out = out + self.edge_flows[e].clone();
            }
            let gap = (out - inflow[s].clone()).abs();
            if gap > worst {
                worst = gap;
            }
        }
        Ok(worst)
    }

    /// Terminal inflow `x^in(item, time)`: mass finding `item` at query
    /// `time` (1-based), as a dense `n x n` table indexed `[time-1][item]`.
    pub fn terminal_inflows(&self, graph: &StateActionGraph, p: &DiscreteDistribution) -> Result<Vec<Vec<S>>> {
        let n = graph.n;
        let mut x = vec![vec![S::zero(); n]; n];
        for (e, edge) in graph.edges.iter().enumerate() {
            if self.edge_flows[e].is_zero() {
                continue;
            }
            let s = graph.states[edge.state];
            let (_, pe, _) = conditional_splits::<S>(p, s.lo, s.hi, edge.k)?;
            let time = s.queries as usize; // terminal fires at queries + 1
            x[time][edge.k] = x[time][edge.k].clone() + pe * self.edge_flows[e].clone();
        }
        Ok(x)
    }

    /// The value matrix induced by this flow:
    /// `V[i][j] = (x^in(j,i)/2 + sum_{i'>i} x^in(j,i')) / p(j)`, with
    /// zero-probability items pinned to the neutral 1/2 row.
    pub fn value_matrix(&self, graph: &StateActionGraph, p: &DiscreteDistribution) -> Result<ValueMatrix<S>> {
        let xin = self.terminal_inflows(graph, p)?;
        let n = graph.n;
        let mut v = vec![vec![S::zero(); n]; n];
        for j in 0..n {
            let pj = S::from_rational(p.prob(j));
            if pj.is_zero() {
                for row in v.iter_mut() {
                    row[j] = S::half();
                }
                continue;
            }
            let mut suffix = S::zero();
            for i in (0..n).rev() {
                v[i][j] = (xin[i][j].clone() * S::half() + suffix.clone()) / pj.clone();
                suffix = suffix + xin[i][j].clone();
            }
        }
        Ok(v)
    }
}

/// The deterministic flow of a pure tree: each state routes everything to
/// the tree's root of that interval.
pub fn tree_to_flow<S: Scalar>(
    tree: &BinarySearchTree,
    graph: &StateActionGraph,
    p: &DiscreteDistribution,
) -> Result<StatefulFlow<S>> {
    if tree.n() != graph.n {
        return Err(DuelError::Dimension("tree and graph sizes differ".into()));
    }
    let mut flows = vec![S::zero(); graph.edges.len()];
    // depth-first from the start with the tree's decisions
    let mut pending: Vec<(usize, S)> = vec![(graph.start, S::one())];
    while let Some((sid, inflow)) = pending.pop() {
        if inflow.is_zero() {
            continue;
        }
        let s = graph.states[sid];
        let k = tree.subtree_root(s.lo, s.hi);
        let edge_id = graph.out_edges[sid][k - s.lo];
        debug_assert_eq!(graph.edges[edge_id].k, k);
        flows[edge_id] = flows[edge_id].clone() + inflow.clone();
        let (pl, _, pr) = conditional_splits::<S>(p, s.lo, s.hi, k)?;
        if let Some(l) = graph.edges[edge_id].left {
            pending.push((l, inflow.clone() * pl));
        }
        if let Some(r) = graph.edges[edge_id].right {
            pending.push((r, inflow * pr));
        }
    }
    Ok(StatefulFlow { edge_flows: flows })
}

/// The stateful-flow polytope: edge flows are nonnegative, the start state
/// emits one unit, and every other state's outflow equals its Bayes-weighted
/// inflow.
pub fn stateful_flow_polytope<S: Scalar>(
    graph: &StateActionGraph,
    p: &DiscreteDistribution,
) -> Result<Polytope<S>> {
    let dim = graph.edges.len();
    let mut eqs: Vec<Halfspace<S>> = Vec::with_capacity(graph.states.len());
    for (sid, outs) in graph.out_edges.iter().enumerate() {
        let mut w = vec![S::zero(); dim];
        for &e in outs {
            w[e] = S::one();
        }
        for &(e, is_left) in &graph.in_edges[sid] {
            let edge = graph.edges[e];
            let s = graph.states[edge.state];
            let (pl, _, pr) = conditional_splits::<S>(p, s.lo, s.hi, edge.k)?;
            let coef = if is_left { pl } else { pr };
            w[e] = w[e].clone() - coef;
        }
        let b = if sid == graph.start { S::one() } else { S::zero() };
        eqs.push(Halfspace::new(w, b));
    }
    Ok(Polytope::nonneg(dim, Vec::new(), eqs))
}

/// Payoff matrix over edge-flow coordinates. Each edge deposits
/// `p^E * flow` on one terminal `(item, time)`; two terminals on the same
/// item pay `1`, `1/2`, `0` by time order, scaled by `1/p(item)`.
pub fn bst_payoff_matrix<S: Scalar>(
    graph: &StateActionGraph,
    p: &DiscreteDistribution,
) -> Result<Vec<Vec<S>>> {
    let dim = graph.edges.len();
    let mut contrib: Vec<(usize, u32, S)> = Vec::with_capacity(dim);
    for edge in &graph.edges {
        let s = graph.states[edge.state];
        let (_, pe, _) = conditional_splits::<S>(p, s.lo, s.hi, edge.k)?;
        contrib.push((edge.k, s.queries + 1, pe));
    }
    let mut m = vec![vec![S::zero(); dim]; dim];
    for (a, (ka, ta, pa)) in contrib.iter().enumerate() {
        if pa.is_zero() {
            continue;
        }
        let pk = S::from_rational(p.prob(*ka));
        if pk.is_zero() {
            continue;
        }
        for (b, (kb, tb, pb)) in contrib.iter().enumerate() {
            if ka != kb || pb.is_zero() {
                continue;
            }
            let w = if ta < tb {
                S::one()
            } else if ta == tb {
                S::half()
            } else {
                continue;
            };
            m[a][b] = pa.clone() * pb.clone() * w / pk.clone();
        }
    }
    Ok(m)
}

/// An equilibrium of the binary search duel: the game value together with
/// both players' minmax flows.
pub struct BstEquilibrium {
    pub value: f64,
    pub flow1: StatefulFlow<f64>,
    pub flow2: StatefulFlow<f64>,
    pub graph: StateActionGraph,
}

/// Exact Nash equilibrium of the binary search duel via the bilinear LP over
/// stateful flows, certified by the best-response DP.
pub fn solve_bst_duel(p: &DiscreteDistribution) -> Result<BstEquilibrium> {
    let n = p.len();
    let graph = build_state_action_graph(n)?;
    let polytope = stateful_flow_polytope::<f64>(&graph, p)?;
    let matrix = bst_payoff_matrix::<f64>(&graph, p)?;
    let bound = matrix
        .iter()
        .flatten()
        .fold(1.0f64, |a, &b| a.max(b.abs()));
    let duel = BilinearDuel::new(polytope.clone(), polytope, matrix, bound)?;
    let sol = minmax_bilinear(&duel)?;
    let sol2 = minmax_bilinear_player2(&duel)?;
    let flow1 = StatefulFlow { edge_flows: sol.x.iter().map(|v| v.max(0.0)).collect() };
    let flow2 = StatefulFlow { edge_flows: sol2.x.iter().map(|v| v.max(0.0)).collect() };
    // certify with the exact DP: the best tree against our flow stays at the
    // claimed value
    let value_matrix = flow1.value_matrix(&graph, p)?;
    let (_, best) = best_response_bst(&value_matrix, p);
    if best > 1.0 - sol.value + crate::bilinear::VERIFY_TOL {
        return Err(DuelError::Domain(format!(
            "flow conceded {best} > {}",
            1.0 - sol.value
        )));
    }
    Ok(BstEquilibrium { value: sol.value, flow1, flow2, graph })
}

/// Exact best response to an arbitrary value matrix by interval DP:
/// `best(lo, hi, t) = max_k p(k) V[t][k] + best(lo, k-1, t+1) + best(k+1,
/// hi, t+1)`, ties to the smallest `k`.
pub fn best_response_bst<S: Scalar>(value: &ValueMatrix<S>, p: &DiscreteDistribution) -> (BinarySearchTree, S) {
    let n = p.len();
    assert!(value.len() == n && value.iter().all(|r| r.len() == n), "V must be n x n");
    // memo[(lo, hi, t)] -> (value, best k); intervals indexed half-open
    let mut memo: HashMap<(usize, usize, u32), (S, usize)> = HashMap::new();
    fn solve<S: Scalar>(
        lo: usize,
        hi_excl: usize,
        t: u32,
        n: usize,
        value: &ValueMatrix<S>,
        probs: &[S],
        memo: &mut HashMap<(usize, usize, u32), (S, usize)>,
    ) -> S {
        if lo >= hi_excl {
            return S::zero();
        }
        debug_assert!(t as usize <= n, "depth never exceeds n");
        if let Some((v, _)) = memo.get(&(lo, hi_excl, t)) {
            return v.clone();
        }
        let mut best: Option<(S, usize)> = None;
        for k in lo..hi_excl {
            let here = probs[k].clone() * value[(t - 1) as usize][k].clone();
            let left = solve(lo, k, t + 1, n, value, probs, memo);
            let right = solve(k + 1, hi_excl, t + 1, n, value, probs, memo);
            let total = here + left + right;
            let better = match &best {
                None => true,
                Some((bv, _)) => total > *bv,
            };
            if better {
                best = Some((total, k));
            }
        }
        let (v, k) = best.expect("nonempty interval");
        memo.insert((lo, hi_excl, t), (v.clone(), k));
        v
    }
    let probs: Vec<S> = p.probs().iter().map(S::from_rational).collect();
    let total = solve(0, n, 1, n, value, &probs, &mut memo);
    // rebuild the argmax tree from the memo
    let mut depths = vec![0u32; n];
    let mut stack = vec![(0usize, n, 1u32)];
    while let Some((lo, hi, t)) = stack.pop() {
        if lo >= hi {
            continue;
        }
        let (_, k) = memo[&(lo, hi, t)].clone();
        depths[k] = t;
        stack.push((lo, k, t + 1));
        stack.push((k + 1, hi, t + 1));
    }
    (BinarySearchTree { depths }, total)
}

/// Sample a tree from a flow: fix one out-edge per state proportional to its
/// flow (uniform on unreached states), then read the induced depth vector.
/// The marginals `Pr[depth of item j = i]` equal `x^in(j, i)/p(j)`.
pub fn round_flow<R: Rng + ?Sized>(
    flow: &StatefulFlow<f64>,
    graph: &StateActionGraph,
    rng: &mut R,
) -> BinarySearchTree {
    let n = graph.n;
    // choose an action per state
    let mut choice = vec![0usize; graph.states.len()];
    for (sid, outs) in graph.out_edges.iter().enumerate() {
        let total: f64 = outs.iter().map(|&e| flow.edge_flows[e]).sum();
        if total <= 1e-15 {
            choice[sid] = rng.gen_range(0..outs.len());
            continue;
        }
        let mut u: f64 = rng.gen::<f64>() * total;
        let mut picked = outs.len() - 1;
        for (slot, &e) in outs.iter().enumerate() {
            u -= flow.edge_flows[e];
            if u <= 0.0 {
                picked = slot;
                break;
            }
        }
        choice[sid] = picked;
    }
    // walk the fixed choices to a depth vector
    let mut depths = vec![0u32; n];
    let mut stack = vec![graph.start];
    while let Some(sid) = stack.pop() {
        let s = graph.states[sid];
        let edge = graph.edges[graph.out_edges[sid][choice[sid]]];
        depths[edge.k] = s.queries + 1;
        if let Some(l) = edge.left {
            stack.push(l);
        }
        if let Some(r) = edge.right {
            stack.push(r);
        }
    }
    debug_assert!(depth_vector_check(&depths));
    BinarySearchTree { depths }
}

/// Median-search beatability at `n = 2^r - 1` under uniform weights: the
/// exact best-response value against the median tree, reported next to the
/// budget-relaxation formula `(2^{r-1} - 1 + 2^{r-3})/(2^r - 1)`. The two
/// need not coincide at finite `r`; both are returned so the gap can be
/// logged.
pub struct MedianBeatability {
    pub computed: BigRational,
    pub formula: BigRational,
    pub n: usize,
}

pub fn median_beatability(r: u32) -> Result<MedianBeatability> {
    if r < 3 {
        return Err(DuelError::Domain("median beatability defined for r >= 3".into()));
    }
    let n = (1usize << r) - 1;
    if n > GRAPH_CAP {
        return Err(DuelError::Size(format!("n = {n} exceeds the cap")));
    }
    let p = DiscreteDistribution::uniform(n);
    let median = median_search_tree(n);
    let v: ValueMatrix<BigRational> = value_matrix_of_tree(&median);
    let (_, computed) = best_response_bst(&v, &p);
    let formula = BigRational::from_ratio(
        (1i64 << (r - 1)) - 1 + (1i64 << (r - 3)),
        (1i64 << r) - 1,
    );
    Ok(MedianBeatability { computed, formula, n })
}

/// The budget-relaxation bound behind the median-search upper bound: a
/// bipartite instance with `2^{s-1}` slots of label `s` per side
/// (`s = 1..=r`), edge worth 1 when the adversary's label is strictly
/// smaller, 1/2 on equal labels. The fixed dual assignment (1 on opponent
/// labels up to `r-2`, 1/2 on `r-1`, 1/2 on the adversary's deepest label)
/// is feasible and its value is exactly `2^{r-1} - 1 + 2^{r-3}`.
pub struct RelaxationCertificate {
    /// Dual objective, exactly `2^{r-1} - 1 + 2^{r-3}` when feasible.
    pub dual_value: BigRational,
    pub feasible: bool,
    /// Primal max-matching value (at most the dual by weak duality).
    pub matching_value: BigRational,
}

pub fn median_relaxation_certificate(r: u32) -> Result<RelaxationCertificate> {
    if r < 3 {
        return Err(DuelError::Domain("certificate defined for r >= 3".into()));
    }
    let n = (1usize << r) - 1;
    if n > 63 {
        return Err(DuelError::Size("certificate capped at r = 6".into()));
    }
    let label_of = |slot: usize| -> u32 {
        // slots grouped by label s with multiplicity 2^{s-1}
        let mut s = 1u32;
        let mut offset = slot;
        loop {
            let count = 1usize << (s - 1);
            if offset < count {
                return s;
            }
            offset -= count;
            s += 1;
        }
    };
    let half = BigRational::from_ratio(1, 2);
    let one = BigRational::from_ratio(1, 1);
    let weight = |a: u32, b: u32| -> BigRational {
        if a < b {
            one.clone()
        } else if a == b {
            half.clone()
        } else {
            BigRational::zero()
        }
    };
    // duals: left = adversary slots carry the full ladder, right = median
    // labels carry only the deepest level
    let y_left = |s: u32| {
        if s <= r - 2 {
            one.clone()
        } else if s == r - 1 {
            half.clone()
        } else {
            BigRational::zero()
        }
    };
    let y_right = |s: u32| if s == r { half.clone() } else { BigRational::zero() };
    let mut feasible = true;
    for a in 0..n {
        for b in 0..n {
            let (sa, sb) = (label_of(a), label_of(b));
            if y_left(sa) + y_right(sb) < weight(sa, sb) {
                feasible = false;
            }
        }
    }
    let mut dual_value = BigRational::zero();
    for slot in 0..n {
        let s = label_of(slot);
        dual_value += y_left(s) + y_right(s);
    }
    // primal side via the assignment solver
    let table: Vec<Vec<BigRational>> = (0..n)
        .map(|a| (0..n).map(|b| weight(label_of(a), label_of(b))).collect())
        .collect();
    let (_, matching_value) = crate::matching::max_weight_assignment(&table);
    Ok(RelaxationCertificate { dual_value, feasible, matching_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::families;
    use num_traits::One;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::from_ratio(n, d)
    }

    #[test]
    fn depth_vector_checks() {
        assert!(depth_vector_check(&[2, 1, 2]));
        assert!(!depth_vector_check(&[1, 1, 2]));
        assert!(depth_vector_check(&[1]));
        assert!(!depth_vector_check(&[2]));
        assert!(depth_vector_check(&[3, 2, 3, 1, 3, 2, 3]));
        assert!(depth_vector_to_tree(&[1, 1]).is_err());
    }

    #[test]
    fn median_trees() {
        assert_eq!(median_search_tree(1).depths(), &[1]);
        assert_eq!(median_search_tree(3).depths(), &[2, 1, 2]);
        assert_eq!(median_search_tree(7).depths(), &[3, 2, 3, 1, 3, 2, 3]);
    }

    #[test]
    fn level_budget_claim() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(1..=12);
            let t = random_tree(n, &mut rng);
            assert!(depth_vector_check(t.depths()));
            for s in 1..=n as u32 {
                let count = t.depths().iter().filter(|&&d| d == s).count();
                assert!(count <= 1 << (s - 1), "level {s} holds {count} items");
            }
        }
    }

    #[test]
    fn catalan_enumeration() {
        assert_eq!(enumerate_trees(1).len(), 1);
        assert_eq!(enumerate_trees(3).len(), 5);
        assert_eq!(enumerate_trees(5).len(), 42);
        assert_eq!(enumerate_trees(7).len(), 429);
    }

    #[test]
    fn splits_examples() {
        let p = DiscreteDistribution::uniform(3);
        let (l, e, r) = conditional_splits::<f64>(&p, 0, 2, 1).unwrap();
        assert!((l - 1.0 / 3.0).abs() < 1e-15 && (e - 1.0 / 3.0).abs() < 1e-15 && (r - 1.0 / 3.0).abs() < 1e-15);

        // singleton interval
        let (l, e, r) = conditional_splits::<f64>(&p, 1, 1, 1).unwrap();
        assert_eq!((l, e, r), (0.0, 1.0, 0.0));

        // p = (1/2, 1/4, 1/4), interval {1, 2} (0-based {0,1}), query first:
        // (0, 2/3, 1/3)
        let p = DiscreteDistribution::from_f64s(&[0.5, 0.25, 0.25]).unwrap();
        let (l, e, r) = conditional_splits::<BigRational>(&p, 0, 1, 0).unwrap();
        assert_eq!(l, BigRational::zero());
        assert_eq!(e, q(2, 3));
        assert_eq!(r, q(1, 3));
        // querying the first item of the whole universe: (0, 1/2, 1/2)
        let (l, e, r) = conditional_splits::<BigRational>(&p, 0, 2, 0).unwrap();
        assert_eq!((l, e, r), (BigRational::zero(), q(1, 2), q(1, 2)));
    }

    #[test]
    fn graph_small_shapes() {
        let g = build_state_action_graph(1).unwrap();
        assert_eq!(g.states.len(), 1);
        assert_eq!(g.edges.len(), 1);

        let g = build_state_action_graph(2).unwrap();
        // start (0,1,0); querying 0 leaves (1,1,1); querying 1 leaves (0,0,1)
        assert_eq!(g.states.len(), 3);
        assert_eq!(g.edges.len(), 4);
        let start_edges = &g.out_edges[g.start];
        assert_eq!(start_edges.len(), 2);
        for &e in start_edges {
            let edge = g.edges[e];
            assert!(edge.left.is_some() ^ edge.right.is_some());
        }
    }

    /// Closed-form count of reachable states and edges: interval with `a`
    /// items cut on the left and `b` on the right is reachable at query
    /// counts `max(sign(a) + sign(b), min(1, a + b)) ..= a + b`.
    fn closed_form_counts(n: usize) -> (usize, usize) {
        let mut states = 0usize;
        let mut edges = 0usize;
        for a in 0..n {
            for b in 0..n - a {
                let size = n - a - b;
                let r_min = (a > 0) as usize + (b > 0) as usize;
                let r_count = if a == 0 && b == 0 { 1 } else { a + b - r_min + 1 };
                states += r_count;
                edges += r_count * size;
            }
        }
        (states, edges)
    }

    #[test]
    fn graph_matches_closed_form() {
        for n in 1..=8 {
            let g = build_state_action_graph(n).unwrap();
            let (states, edges) = closed_form_counts(n);
            assert_eq!(g.states.len(), states, "states at n = {n}");
            assert_eq!(g.edges.len(), edges, "edges at n = {n}");
        }
    }

    #[test]
    fn tree_flow_basics() {
        // n = 1: everything reaches terminal (item 0, time 1)
        let p = DiscreteDistribution::uniform(1);
        let g = build_state_action_graph(1).unwrap();
        let t = median_search_tree(1);
        let f = tree_to_flow::<f64>(&t, &g, &p).unwrap();
        let xin = f.terminal_inflows(&g, &p).unwrap();
        assert_eq!(xin[0][0], 1.0);

        // n = 3 uniform balanced: terminals (1@1): 1/3, (0@2): 1/3, (2@2): 1/3
        let p = DiscreteDistribution::uniform(3);
        let g = build_state_action_graph(3).unwrap();
        let t = median_search_tree(3);
        let f = tree_to_flow::<BigRational>(&t, &g, &p).unwrap();
        let xin = f.terminal_inflows(&g, &p).unwrap();
        assert_eq!(xin[0][1], q(1, 3));
        assert_eq!(xin[1][0], q(1, 3));
        assert_eq!(xin[1][2], q(1, 3));
        // conservation and unit mass
        assert!(f.conservation_residual(&g, &p).unwrap().is_zero());
        let total: BigRational = xin.iter().flatten().cloned().sum();
        assert_eq!(total, BigRational::one());
    }

    #[test]
    fn tree_flows_conserve_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=10);
            let p = families::random(n, 20, &mut rng);
            let g = build_state_action_graph(n).unwrap();
            let t = random_tree(n, &mut rng);
            let f = tree_to_flow::<f64>(&t, &g, &p).unwrap();
            assert!(f.conservation_residual(&g, &p).unwrap() < 1e-9);
            // terminal inflow at (item, time) is p(item) iff the tree places
            // it there
            let xin = f.terminal_inflows(&g, &p).unwrap();
            for item in 0..n {
                for time in 1..=n as u32 {
                    let expected = if t.depth(item) == time {
                        Scalar::to_f64(p.prob(item))
                    } else {
                        0.0
                    };
                    assert!((xin[(time - 1) as usize][item] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn value_matrix_pure_tree_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let n = rng.gen_range(1..=7);
            let p = families::random(n, 10, &mut rng);
            if p.probs().iter().any(|q| q.is_zero()) {
                continue;
            }
            let g = build_state_action_graph(n).unwrap();
            let t = random_tree(n, &mut rng);
            let f = tree_to_flow::<BigRational>(&t, &g, &p).unwrap();
            let via_flow = f.value_matrix(&g, &p).unwrap();
            let direct: ValueMatrix<BigRational> = value_matrix_of_tree(&t);
            assert_eq!(via_flow, direct);
        }
    }

    #[test]
    fn value_matrix_mixture_linearity() {
        let p = DiscreteDistribution::uniform(3);
        let g = build_state_action_graph(3).unwrap();
        let t1 = median_search_tree(3);
        let t2 = depth_vector_to_tree(&[1, 2, 3]).unwrap();
        let f1 = tree_to_flow::<f64>(&t1, &g, &p).unwrap();
        let f2 = tree_to_flow::<f64>(&t2, &g, &p).unwrap();
        let mix = StatefulFlow {
            edge_flows: f1
                .edge_flows
                .iter()
                .zip(&f2.edge_flows)
                .map(|(a, b)| 0.5 * a + 0.5 * b)
                .collect(),
        };
        let vm = mix.value_matrix(&g, &p).unwrap();
        let v1 = value_matrix_of_tree::<f64>(&t1);
        let v2 = value_matrix_of_tree::<f64>(&t2);
        for i in 0..3 {
            for j in 0..3 {
                assert!((vm[i][j] - 0.5 * (v1[i][j] + v2[i][j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expected_value_examples() {
        let p = DiscreteDistribution::uniform(3);
        // self-play is 1/2
        let t = median_search_tree(3);
        let v: ValueMatrix<BigRational> = value_matrix_of_tree(&t);
        assert_eq!(tree_value(&t, &v, &p), q(1, 2));
        // balanced vs the descending chain (root = item 2): balanced finds
        // items 0 and 1 strictly earlier, loses item 2
        let chain = depth_vector_to_tree(&[3, 2, 1]).unwrap();
        let vc: ValueMatrix<BigRational> = value_matrix_of_tree(&chain);
        assert_eq!(tree_value(&t, &vc, &p), q(2, 3));
        // all-ones matrix pays 1
        let ones: ValueMatrix<BigRational> = vec![vec![BigRational::one(); 3]; 3];
        assert_eq!(tree_value(&t, &ones, &p), BigRational::one());
    }

    #[test]
    fn best_response_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..=7usize {
            for _ in 0..8 {
                let p = families::random(n, 12, &mut rng);
                // random value matrix in [0, 1]
                let v: ValueMatrix<f64> = (0..n)
                    .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
                    .collect();
                let (tree, dp) = best_response_bst(&v, &p);
                assert!(depth_vector_check(tree.depths()));
                let mut best = f64::NEG_INFINITY;
                for t in enumerate_trees(n) {
                    best = best.max(tree_value(&t, &v, &p));
                }
                assert!((dp - best).abs() < 1e-9, "n={n}: dp {dp} vs enumeration {best}");
            }
        }
    }

    #[test]
    fn best_response_to_flat_matrix() {
        let p = DiscreteDistribution::uniform(4);
        let v: ValueMatrix<f64> = vec![vec![0.5; 4]; 4];
        let (_, value) = best_response_bst(&v, &p);
        assert!((value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn solve_small_duels() {
        for n in [1usize, 3] {
            let p = DiscreteDistribution::uniform(n);
            let eq = solve_bst_duel(&p).unwrap();
            assert!((eq.value - 0.5).abs() < 1e-6, "n={n}: value {}", eq.value);
            // equilibrium flow concedes at most 1/2 to the exact best response
            let vm = eq.flow1.value_matrix(&eq.graph, &p).unwrap();
            let (_, best) = best_response_bst(&vm, &p);
            assert!(best <= 0.5 + 1e-6);
        }
    }

    #[test]
    fn rounding_recovers_pure_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = families::random(5, 9, &mut rng);
        let g = build_state_action_graph(5).unwrap();
        let t = random_tree(5, &mut rng);
        let f = tree_to_flow::<f64>(&t, &g, &p).unwrap();
        for _ in 0..10 {
            assert_eq!(round_flow(&f, &g, &mut rng), t);
        }
    }

    #[test]
    fn rounding_marginals_match_flow() {
        let p = DiscreteDistribution::uniform(3);
        let eq = solve_bst_duel(&p).unwrap();
        let xin = eq.flow1.terminal_inflows(&eq.graph, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let samples = 100_000usize;
        let mut counts = vec![vec![0u64; 3]; 3];
        for _ in 0..samples {
            let t = round_flow(&eq.flow1, &eq.graph, &mut rng);
            assert!(depth_vector_check(t.depths()));
            for item in 0..3 {
                counts[(t.depth(item) - 1) as usize][item] += 1;
            }
        }
        for time in 0..3 {
            for item in 0..3 {
                let expected = xin[time][item] / Scalar::to_f64(p.prob(item));
                let got = counts[time][item] as f64 / samples as f64;
                assert!(
                    (expected - got).abs() < 0.01,
                    "marginal ({time},{item}): flow {expected} vs sampled {got}"
                );
            }
        }
    }

    #[test]
    fn median_beatability_values() {
        let mb = median_beatability(3).unwrap();
        assert_eq!(mb.formula, q(4, 7));
        assert_eq!(mb.n, 7);
        // the computed value must match brute force over all 429 trees
        let p = DiscreteDistribution::uniform(7);
        let v: ValueMatrix<BigRational> = value_matrix_of_tree(&median_search_tree(7));
        let mut best = BigRational::zero();
        for t in enumerate_trees(7) {
            let val = tree_value(&t, &v, &p);
            if val > best {
                best = val;
            }
        }
        assert_eq!(mb.computed, best);
        // the limit of the formula is 5/8
        let tail = median_beatability(4).unwrap();
        assert!(Scalar::to_f64(&tail.formula) < 0.625 + 1e-12);
    }

    #[test]
    fn relaxation_certificate_exact() {
        for r in 3..=5u32 {
            let cert = median_relaxation_certificate(r).unwrap();
            assert!(cert.feasible, "dual infeasible at r = {r}");
            let expected = BigRational::from_ratio((1i64 << (r - 1)) - 1 + (1i64 << (r - 3)), 1);
            assert_eq!(cert.dual_value, expected, "r = {r}");
            assert!(cert.matching_value <= cert.dual_value, "weak duality at r = {r}");
        }
    }

    #[test]
    fn tree_json_round_trip() {
        let t = median_search_tree(7);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"root_order":[3,2,3,1,3,2,3]}"#);
        let back: BinarySearchTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<BinarySearchTree>(r#"{"root_order":[1,1]}"#).is_err());
    }
}
