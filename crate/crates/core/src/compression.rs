//! The compression duel: prefix-code trees compete on where they place a
//! randomly drawn item. Strategies are leaf-depth profiles under the Kraft
//! inequality; the best response to a mixed opponent reduces to a
//! multiple-choice knapsack with dyadic weights.

use crate::dist::DiscreteDistribution;
use crate::error::{DuelError, Result};
use crate::game::{payoff_in, TieRule};
use crate::learning::{fel_params_from, fel_solve, BestResponseOracle, FelOutcome, OracleDuel};
use crate::lp::{Halfspace, Polytope};
use crate::num::{Cost, Scalar};
use num_rational::BigRational;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Whether every item must appear in the tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompressionMode {
    /// Leaf set equals the whole universe; Kraft sum is exactly one.
    NoFail,
    /// Items may be left out of the tree (cost infinity); Kraft sum at most one.
    Fail,
}

/// Per-item leaf depths; `None` marks an item absent from the tree.
///
/// Depth 0 is the singleton tree whose root is a leaf, so it is only feasible
/// when it is the lone present item (anything else overruns the Kraft budget).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepthProfile {
    depths: Vec<Option<u32>>,
}

impl DepthProfile {
    pub fn full(depths: Vec<u32>) -> Self {
        Self { depths: depths.into_iter().map(Some).collect() }
    }

    pub fn with_absent(depths: Vec<Option<u32>>) -> Self {
        Self { depths }
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn depth(&self, item: usize) -> Option<u32> {
        self.depths[item]
    }

    pub fn depths(&self) -> &[Option<u32>] {
        &self.depths
    }

    /// Kraft sum in units of `2^{-max_depth}`: `(sum, unit_exponent)`.
    pub fn kraft_units(&self) -> (u128, u32) {
        let max_d = self
            .depths
            .iter()
            .flatten()
            .copied()
            .max()
            .unwrap_or(0)
            .max(1);
        let sum = self
            .depths
            .iter()
            .flatten()
            .map(|&d| 1u128 << (max_d - d))
            .sum();
        (sum, max_d)
    }

    pub fn validate(&self, mode: CompressionMode) -> Result<()> {
        let n = self.depths.len() as u32;
        if self.depths.is_empty() {
            return Err(DuelError::Domain("empty profile".into()));
        }
        if mode == CompressionMode::NoFail && self.depths.iter().any(Option::is_none) {
            return Err(DuelError::Domain("absent item in no-fail mode".into()));
        }
        if let Some(d) = self.depths.iter().flatten().find(|&&d| d > n) {
            return Err(DuelError::Domain(format!("depth {d} exceeds the cap n = {n}")));
        }
        let (sum, max_d) = self.kraft_units();
        let full = 1u128 << max_d;
        match mode {
            CompressionMode::NoFail => {
                if sum != full {
                    return Err(DuelError::Domain(format!(
                        "Kraft sum {sum}/{full} is not exactly 1"
                    )));
                }
            }
            CompressionMode::Fail => {
                if sum > full {
                    return Err(DuelError::Domain(format!(
                        "Kraft sum {sum}/{full} exceeds 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn costs(&self) -> Vec<Cost> {
        self.depths
            .iter()
            .map(|d| match d {
                Some(d) => Cost::Finite(*d as f64),
                None => Cost::Infinite,
            })
            .collect()
    }
}

impl Serialize for DepthProfile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            depths: Vec<u32>,
            absent: Vec<usize>,
        }
        Wire {
            depths: self.depths.iter().map(|d| d.unwrap_or(0)).collect(),
            absent: self
                .depths
                .iter()
                .enumerate()
                .filter_map(|(i, d)| d.is_none().then_some(i))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DepthProfile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            depths: Vec<u32>,
            #[serde(default)]
            absent: Vec<usize>,
        }
        let w = Wire::deserialize(d)?;
        let mut depths: Vec<Option<u32>> = w.depths.into_iter().map(Some).collect();
        for i in w.absent {
            if i >= depths.len() {
                return Err(serde::de::Error::custom("absent index out of range"));
            }
            depths[i] = None;
        }
        Ok(Self { depths })
    }
}

/// The Huffman merge tree with subtree probabilities, kept around so the
/// structural facts about Huffman trees can be checked node by node.
#[derive(Clone, Debug)]
pub struct HuffTree {
    pub nodes: Vec<HuffNode>,
    pub root: usize,
}

#[derive(Clone, Debug)]
pub struct HuffNode {
    pub prob: BigRational,
    pub children: Option<(usize, usize)>,
    /// Item index for leaves.
    pub item: Option<usize>,
    pub depth: u32,
}

impl HuffTree {
    pub fn leaf_depths(&self, n: usize) -> Vec<u32> {
        let mut out = vec![0u32; n];
        for node in &self.nodes {
            if let Some(item) = node.item {
                out[item] = node.depth;
            }
        }
        out
    }

    fn assign_depths(&mut self) {
        let mut stack = vec![(self.root, 0u32)];
        while let Some((v, d)) = stack.pop() {
            self.nodes[v].depth = d;
            if let Some((l, r)) = self.nodes[v].children {
                stack.push((l, d + 1));
                stack.push((r, d + 1));
            }
        }
    }
}

/// Build the Huffman tree: repeatedly merge the two lowest-probability
/// roots. Probability ties prefer the most recently created node, which keeps
/// merged chains growing (on the geometric families this yields the
/// caterpillar the beatability analysis is written against) and is
/// deterministic.
pub fn huffman_tree(p: &DiscreteDistribution) -> HuffTree {
    let n = p.len();
    let mut nodes: Vec<HuffNode> = (0..n)
        .map(|i| HuffNode { prob: p.prob(i).clone(), children: None, item: Some(i), depth: 0 })
        .collect();
    let mut roots: Vec<usize> = (0..n).collect();
    while roots.len() > 1 {
        // two smallest by (prob, latest creation index)
        let pick = |excl: Option<usize>| {
            let mut best: Option<usize> = None;
            for (slot, &v) in roots.iter().enumerate() {
                if Some(slot) == excl {
                    continue;
                }
                best = match best {
                    None => Some(slot),
                    Some(b) => {
                        let (bv, cv) = (&nodes[roots[b]].prob, &nodes[v].prob);
                        if cv < bv || (cv == bv && v > roots[b]) {
                            Some(slot)
                        } else {
                            Some(b)
                        }
                    }
                };
            }
            best.expect("roots nonempty")
        };
        let first = pick(None);
        let second = pick(Some(first));
        let (a, b) = (roots[first], roots[second]);
        let merged = HuffNode {
            prob: nodes[a].prob.clone() + nodes[b].prob.clone(),
            children: Some((a, b)),
            item: None,
            depth: 0,
        };
        nodes.push(merged);
        let id = nodes.len() - 1;
        let (hi, lo) = if first > second { (first, second) } else { (second, first) };
        roots.remove(hi);
        roots.remove(lo);
        roots.push(id);
    }
    let mut tree = HuffTree { nodes, root: roots[0] };
    tree.assign_depths();
    tree
}

/// Leaf-depth profile of the Huffman tree (the one-player optimum).
pub fn huffman(p: &DiscreteDistribution) -> DepthProfile {
    let tree = huffman_tree(p);
    DepthProfile::full(tree.leaf_depths(p.len()))
}

/// Payoff of profile `a` against profile `b`: the shallower placement of the
/// drawn item wins, absence costs infinity.
pub fn compression_payoff(
    a: &DepthProfile,
    b: &DepthProfile,
    p: &DiscreteDistribution,
    mode: CompressionMode,
) -> Result<f64> {
    compression_payoff_in::<f64>(a, b, p, mode)
}

pub fn compression_payoff_in<S: Scalar>(
    a: &DepthProfile,
    b: &DepthProfile,
    p: &DiscreteDistribution,
    mode: CompressionMode,
) -> Result<S> {
    a.validate(mode)?;
    b.validate(mode)?;
    let probs: Vec<S> = p.probs().iter().map(S::from_rational).collect();
    payoff_in(&a.costs(), &b.costs(), &probs, TieRule::SymmetricHalfPoint)
}

/// A mixed strategy as per-item depth marginals: `x[item][depth]` over depths
/// `0..=n`, plus the probability of leaving the item out entirely.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DepthMatrix {
    n: usize,
    x: Vec<Vec<f64>>,
    absent: Vec<f64>,
    mode: CompressionMode,
}

impl DepthMatrix {
    const ROW_TOL: f64 = 1e-9;

    pub fn new(x: Vec<Vec<f64>>, absent: Vec<f64>, mode: CompressionMode) -> Result<Self> {
        let n = x.len();
        if absent.len() != n || x.iter().any(|r| r.len() != n + 1) {
            return Err(DuelError::Dimension(
                "need n rows of n+1 depth columns plus an absent column".into(),
            ));
        }
        for (i, row) in x.iter().enumerate() {
            if row.iter().chain([&absent[i]]).any(|&v| v < -Self::ROW_TOL) {
                return Err(DuelError::Domain(format!("negative mass in row {i}")));
            }
            let sum: f64 = row.iter().sum::<f64>() + absent[i];
            if (sum - 1.0).abs() > Self::ROW_TOL {
                return Err(DuelError::Domain(format!("row {i} sums to {sum}")));
            }
            if mode == CompressionMode::NoFail && absent[i] > Self::ROW_TOL {
                return Err(DuelError::Domain("absent mass in no-fail mode".into()));
            }
        }
        Ok(Self { n, x, absent, mode })
    }

    pub fn from_profile(profile: &DepthProfile, mode: CompressionMode) -> Result<Self> {
        profile.validate(mode)?;
        let n = profile.len();
        let mut x = vec![vec![0.0; n + 1]; n];
        let mut absent = vec![0.0; n];
        for (i, d) in profile.depths().iter().enumerate() {
            match d {
                Some(d) => x[i][*d as usize] = 1.0,
                None => absent[i] = 1.0,
            }
        }
        Self::new(x, absent, mode)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> CompressionMode {
        self.mode
    }

    pub fn depth_mass(&self, item: usize, depth: usize) -> f64 {
        self.x[item][depth]
    }

    pub fn absent_mass(&self, item: usize) -> f64 {
        self.absent[item]
    }

    /// Coordinates per item in the flattened vector form.
    pub fn stride(n: usize) -> usize {
        n + 2
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * Self::stride(self.n));
        for i in 0..self.n {
            out.extend_from_slice(&self.x[i]);
            out.push(self.absent[i]);
        }
        out
    }

    pub fn unflatten(v: &[f64], n: usize, mode: CompressionMode) -> Result<Self> {
        let stride = Self::stride(n);
        if v.len() != n * stride {
            return Err(DuelError::Dimension("bad flattened length".into()));
        }
        let mut x = Vec::with_capacity(n);
        let mut absent = Vec::with_capacity(n);
        for i in 0..n {
            let row = &v[i * stride..(i + 1) * stride];
            x.push(row[..n + 1].to_vec());
            absent.push(row[n + 1]);
        }
        Self::new(x, absent, mode)
    }
}

/// Row-stochastic polytope over the flattened depth-matrix coordinates.
/// No-fail pins every absent coordinate to zero.
pub fn depth_matrix_polytope(n: usize, mode: CompressionMode) -> Polytope<f64> {
    let stride = DepthMatrix::stride(n);
    let dim = n * stride;
    let mut eqs = Vec::with_capacity(n);
    for i in 0..n {
        let mut w = vec![0.0; dim];
        for c in 0..stride {
            w[i * stride + c] = 1.0;
        }
        eqs.push(Halfspace::new(w, 1.0));
    }
    if mode == CompressionMode::NoFail {
        for i in 0..n {
            let mut w = vec![0.0; dim];
            w[i * stride + n + 1] = 1.0;
            eqs.push(Halfspace::new(w, 0.0));
        }
    }
    Polytope::nonneg(dim, Vec::new(), eqs)
}

/// Payoff matrix over flattened depth-matrix coordinates: within an item,
/// shallower beats deeper, equal depths split, absence loses to any placement
/// and ties absence.
pub fn compression_payoff_matrix(p: &DiscreteDistribution, _mode: CompressionMode) -> Vec<Vec<f64>> {
    let n = p.len();
    let stride = DepthMatrix::stride(n);
    let dim = n * stride;
    let probs = p.probs_f64();
    let absent_col = n + 1;
    let mut m = vec![vec![0.0; dim]; dim];
    for item in 0..n {
        let pi = probs[item];
        let base = item * stride;
        for j in 0..=n {
            for k in 0..=n {
                if k > j {
                    m[base + j][base + k] = pi;
                } else if k == j {
                    m[base + j][base + k] = pi * 0.5;
                }
            }
            // a placed item beats an absent opponent
            m[base + j][base + absent_col] = pi;
        }
        m[base + absent_col][base + absent_col] = pi * 0.5;
    }
    m
}

/// One multiple-choice knapsack item.
#[derive(Clone, Debug)]
pub struct MckpItem<S> {
    pub value: S,
    /// Weight in integer units of `2^{-unit_exp}`.
    pub weight_units: u64,
    /// Depth this item encodes (`None` for the explicit skip option).
    pub depth: Option<u32>,
}

/// Choose exactly one item per list, total weight at most the capacity,
/// maximizing total value. Weights are exact dyadic integers throughout.
#[derive(Clone, Debug)]
pub struct MckpInstance<S> {
    pub lists: Vec<Vec<MckpItem<S>>>,
    pub capacity_units: u64,
    pub unit_exp: u32,
}

/// Chosen item index per list.
pub type MckpSelection = Vec<usize>;

/// Solve the MCKP. `eps = 0` runs the exact dynamic program over weight
/// units; `eps > 0` runs the value-scaling FPTAS (minimum exact weight per
/// rounded value level) and returns a selection worth at least `(1 - eps)`
/// of the optimum.
pub fn mckp_solve<S: Scalar>(inst: &MckpInstance<S>, eps: f64) -> Result<(MckpSelection, S)> {
    if !(0.0..1.0).contains(&eps) {
        return Err(DuelError::Domain("eps must lie in [0, 1)".into()));
    }
    if inst.lists.iter().any(|l| l.is_empty()) {
        return Err(DuelError::Domain("empty choice list".into()));
    }
    let min_total: u64 = inst
        .lists
        .iter()
        .map(|l| l.iter().map(|it| it.weight_units).min().unwrap())
        .sum();
    if min_total > inst.capacity_units {
        return Err(DuelError::Infeasible(format!(
            "lightest selection weighs {min_total} > capacity {}",
            inst.capacity_units
        )));
    }
    let selection = if eps == 0.0 {
        mckp_exact(inst)
    } else {
        mckp_fptas(inst, eps)
    };
    let mut total = S::zero();
    for (list, &choice) in inst.lists.iter().zip(&selection) {
        total = total + list[choice].value.clone();
    }
    Ok((selection, total))
}

/// Exact DP indexed by weight: `best[w]` = max value with total weight <= w.
fn mckp_exact<S: Scalar>(inst: &MckpInstance<S>) -> MckpSelection {
    let cap = inst.capacity_units as usize;
    let mut best: Vec<Option<S>> = vec![None; cap + 1];
    best[0] = Some(S::zero());
    let mut choice: Vec<Vec<Option<usize>>> = Vec::with_capacity(inst.lists.len());
    for list in &inst.lists {
        let mut next: Vec<Option<S>> = vec![None; cap + 1];
        let mut pick: Vec<Option<usize>> = vec![None; cap + 1];
        for w in 0..=cap {
            let Some(prev) = &best[w] else { continue };
            for (idx, item) in list.iter().enumerate() {
                let nw = w + item.weight_units as usize;
                if nw > cap {
                    continue;
                }
                let cand = prev.clone() + item.value.clone();
                // strict improvement keeps the lowest item index on ties,
                // which makes the deepest placement win among equal values
                // because lists are ordered deep-first
                if next[nw].as_ref().map_or(true, |v| cand > *v) {
                    next[nw] = Some(cand);
                    pick[nw] = Some(idx);
                }
            }
        }
        best = next;
        choice.push(pick);
    }
    // best reachable weight
    let mut best_w = 0usize;
    let mut best_v: Option<&S> = None;
    for (w, v) in best.iter().enumerate() {
        if let Some(v) = v {
            if best_v.map_or(true, |b| v > b) {
                best_v = Some(v);
                best_w = w;
            }
        }
    }
    // walk back through the per-list choices
    let mut selection = vec![0usize; inst.lists.len()];
    let mut w = best_w;
    for (li, list) in inst.lists.iter().enumerate().rev() {
        // recompute reachability prefix for lists 0..li
        let pick = &choice[li];
        let idx = pick[w].expect("recorded choice on the optimal path");
        selection[li] = idx;
        w -= list[idx].weight_units as usize;
    }
    debug_assert_eq!(w, 0);
    selection
}

/// Lawler-style value scaling: round values down to multiples of
/// `eps * vmax / lists`, DP on total rounded value minimizing exact weight.
fn mckp_fptas<S: Scalar>(inst: &MckpInstance<S>, eps: f64) -> MckpSelection {
    let lists = inst.lists.len();
    let vmax = inst
        .lists
        .iter()
        .flatten()
        .map(|it| it.value.to_f64())
        .fold(0.0f64, f64::max);
    if vmax <= 0.0 {
        // all values zero: pick the lightest (deepest) item per list
        return inst
            .lists
            .iter()
            .map(|l| {
                l.iter()
                    .enumerate()
                    .min_by_key(|(i, it)| (it.weight_units, *i))
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect();
    }
    let step = eps * vmax / lists as f64;
    let scaled: Vec<Vec<u64>> = inst
        .lists
        .iter()
        .map(|l| l.iter().map(|it| (it.value.to_f64() / step).floor() as u64).collect())
        .collect();
    let max_level: u64 = scaled.iter().map(|l| l.iter().copied().max().unwrap()).sum();
    // min_weight[level] after each list; u64::MAX = unreachable
    let mut min_weight = vec![u64::MAX; (max_level + 1) as usize];
    min_weight[0] = 0;
    let mut choices: Vec<Vec<Option<usize>>> = Vec::with_capacity(lists);
    for (li, list) in inst.lists.iter().enumerate() {
        let mut next = vec![u64::MAX; (max_level + 1) as usize];
        let mut pick: Vec<Option<usize>> = vec![None; (max_level + 1) as usize];
        for (lvl, &w) in min_weight.iter().enumerate() {
            if w == u64::MAX {
                continue;
            }
            for (idx, item) in list.iter().enumerate() {
                let nl = lvl + scaled[li][idx] as usize;
                let nw = w.saturating_add(item.weight_units);
                if nw < next[nl] {
                    next[nl] = nw;
                    pick[nl] = Some(idx);
                }
            }
        }
        min_weight = next;
        choices.push(pick);
    }
    let best_level = (0..min_weight.len())
        .rev()
        .find(|&l| min_weight[l] <= inst.capacity_units)
        .expect("level 0 is always reachable within capacity");
    let mut selection = vec![0usize; lists];
    let mut lvl = best_level;
    for li in (0..lists).rev() {
        let idx = choices[li][lvl].expect("recorded choice");
        selection[li] = idx;
        lvl -= scaled[li][idx] as usize;
    }
    selection
}

/// Build the best-response MCKP for an opponent depth matrix: placing item
/// `i` at depth `j` is worth `p(i) (x'_{ij}/2 + sum_{d>j} x'_{id} +
/// absent'_i)`; leaving it out (fail mode) is worth `p(i) absent'_i / 2`.
/// Lists are ordered deepest-first so value ties resolve to the deepest
/// feasible placement.
pub fn best_response_mckp<S: Scalar>(
    xprime: &DepthMatrix,
    p: &DiscreteDistribution,
    mode: CompressionMode,
) -> MckpInstance<S> {
    let n = p.len();
    let unit_exp = n as u32;
    let mut lists = Vec::with_capacity(n);
    for item in 0..n {
        let pi = S::from_rational(p.prob(item));
        let mut suffix = vec![0.0f64; n + 2];
        for d in (0..=n).rev() {
            suffix[d] = suffix[d + 1] + xprime.depth_mass(item, d);
        }
        let absent_mass = xprime.absent_mass(item);
        let mut list: Vec<MckpItem<S>> = Vec::with_capacity(n + 2);
        // depth n (deepest) down to depth 0 (weight 2^n = full capacity)
        for d in (0..=n as u32).rev() {
            let win = suffix[d as usize + 1] + absent_mass;
            let tie = xprime.depth_mass(item, d as usize);
            let score = S::from_rational(
                &(BigRational::from_float(win).unwrap()
                    + BigRational::from_float(tie).unwrap() * BigRational::from_ratio(1, 2)),
            );
            list.push(MckpItem {
                value: pi.clone() * score,
                weight_units: 1u64 << (unit_exp - d),
                depth: Some(d),
            });
        }
        if mode == CompressionMode::Fail {
            let score = S::from_rational(
                &(BigRational::from_float(absent_mass).unwrap() * BigRational::from_ratio(1, 2)),
            );
            list.push(MckpItem { value: pi * score, weight_units: 0, depth: None });
        }
        lists.push(list);
    }
    MckpInstance { lists, capacity_units: 1u64 << unit_exp, unit_exp }
}

/// Best response to a mixed opponent: exact for `eps = 0`, within a
/// `(1 - eps)` factor otherwise.
///
/// In no-fail mode the knapsack optimum may leave Kraft slack; since an
/// item's value never decreases when it moves shallower, raising items until
/// the sum is exactly one preserves optimality, and the value is recomputed
/// for the completed profile.
pub fn best_response_compression<S: Scalar>(
    xprime: &DepthMatrix,
    p: &DiscreteDistribution,
    eps: f64,
    mode: CompressionMode,
) -> Result<(DepthProfile, S)> {
    let inst = best_response_mckp::<S>(xprime, p, mode);
    let (selection, _) = mckp_solve(&inst, eps)?;
    let mut depths: Vec<Option<u32>> = inst
        .lists
        .iter()
        .zip(&selection)
        .map(|(list, &idx)| list[idx].depth)
        .collect();
    if mode == CompressionMode::NoFail {
        kraft_complete(&mut depths, inst.unit_exp);
    }
    let mut value = S::zero();
    for (item, d) in depths.iter().enumerate() {
        let list = &inst.lists[item];
        let chosen = list
            .iter()
            .find(|it| it.depth == *d)
            .expect("every depth is a list entry");
        value = value + chosen.value.clone();
    }
    let profile = DepthProfile::with_absent(depths);
    profile.validate(mode)?;
    Ok((profile, value))
}

/// Raise items one level at a time until the Kraft sum reaches exactly one.
/// Whenever the sum is short, the slack is a multiple of the smallest present
/// weight, so such a raise always exists. The deepest raisable item moves
/// first, ties to the smallest index.
fn kraft_complete(depths: &mut [Option<u32>], unit_exp: u32) {
    let full: u128 = 1 << unit_exp;
    loop {
        let units: u128 = depths
            .iter()
            .flatten()
            .map(|&d| 1u128 << (unit_exp - d))
            .sum();
        if units >= full {
            return;
        }
        let slack = full - units;
        let mut pick: Option<(usize, u32)> = None;
        for (i, d) in depths.iter().enumerate() {
            let Some(d) = *d else { continue };
            if d == 0 || (1u128 << (unit_exp - d)) > slack {
                continue;
            }
            if pick.map_or(true, |(_, pd)| d > pd) {
                pick = Some((i, d));
            }
        }
        let (i, d) = pick.expect("slack is a multiple of the smallest present weight");
        depths[i] = Some(d - 1);
    }
}

/// A binary code tree in parent-array form, produced by the canonical-code
/// construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CodeTree {
    /// `parent[v]`, `None` at the root.
    pub parent: Vec<Option<usize>>,
    /// Left/right children per node.
    pub children: Vec<[Option<usize>; 2]>,
    /// `leaf_of[item] = node` for present items.
    pub leaf_of: Vec<Option<usize>>,
}

impl CodeTree {
    pub fn depth_of(&self, node: usize) -> u32 {
        let mut d = 0;
        let mut v = node;
        while let Some(p) = self.parent[v] {
            d += 1;
            v = p;
        }
        d
    }
}

/// Realize leaf depths as a binary tree by the canonical-code construction:
/// items sorted by depth (ties by index) receive codewords left to right.
pub fn kraft_to_tree(profile: &DepthProfile) -> Result<CodeTree> {
    let (sum, max_d) = profile.kraft_units();
    if sum > 1u128 << max_d {
        return Err(DuelError::Domain("Kraft inequality violated".into()));
    }
    let mut present: Vec<(u32, usize)> = profile
        .depths()
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.map(|d| (d, i)))
        .collect();
    present.sort();

    let mut tree = CodeTree {
        parent: vec![None],
        children: vec![[None, None]],
        leaf_of: vec![None; profile.len()],
    };
    let mut code: u64 = 0;
    let mut prev_depth: u32 = 0;
    for (k, (depth, item)) in present.iter().enumerate() {
        if k > 0 {
            code = (code + 1) << (depth - prev_depth);
        }
        prev_depth = *depth;
        // walk the codeword, creating nodes as needed
        let mut v = 0usize;
        for bit_pos in (0..*depth).rev() {
            let bit = ((code >> bit_pos) & 1) as usize;
            let next = match tree.children[v][bit] {
                Some(c) => c,
                None => {
                    tree.parent.push(Some(v));
                    tree.children.push([None, None]);
                    let id = tree.parent.len() - 1;
                    tree.children[v][bit] = Some(id);
                    id
                }
            };
            v = next;
        }
        tree.leaf_of[*item] = Some(v);
    }
    Ok(tree)
}

/// Every depth profile realizable with `n` items and depths at most `n`
/// (exactly-one per item, Kraft equality for no-fail / at most one for fail).
/// This is the enumeration oracle the dynamic programs are checked against.
pub fn enumerate_profiles(n: usize, mode: CompressionMode) -> Vec<DepthProfile> {
    let unit_exp = n as u32;
    let full: u128 = 1 << unit_exp;
    let mut out = Vec::new();
    let mut depths: Vec<Option<u32>> = vec![None; n];
    fn rec(
        item: usize,
        n: usize,
        left: u128,
        unit_exp: u32,
        mode: CompressionMode,
        depths: &mut Vec<Option<u32>>,
        out: &mut Vec<DepthProfile>,
    ) {
        if item == n {
            let ok = match mode {
                CompressionMode::NoFail => left == 0,
                CompressionMode::Fail => true,
            };
            if ok {
                out.push(DepthProfile::with_absent(depths.clone()));
            }
            return;
        }
        let items_left = (n - item) as u128;
        for d in (0..=unit_exp).rev() {
            let w = 1u128 << (unit_exp - d);
            if w > left {
                continue;
            }
            // remaining items each need at least one unit in no-fail mode
            if mode == CompressionMode::NoFail && left - w < items_left - 1 {
                continue;
            }
            depths[item] = Some(d);
            rec(item + 1, n, left - w, unit_exp, mode, depths, out);
        }
        if mode == CompressionMode::Fail {
            depths[item] = None;
            rec(item + 1, n, left, unit_exp, mode, depths, out);
        }
        depths[item] = None;
    }
    rec(0, n, full, unit_exp, mode, &mut depths, &mut out);
    out
}

/// Best-response oracle plugging the knapsack reduction into the learner.
pub struct CompressionOracle<'a> {
    p: &'a DiscreteDistribution,
    mode: CompressionMode,
    /// FPTAS accuracy used inside the knapsack; 0 runs the exact DP.
    pub mckp_eps: f64,
    region: Polytope<f64>,
}

impl<'a> CompressionOracle<'a> {
    pub fn new(p: &'a DiscreteDistribution, mode: CompressionMode, mckp_eps: f64) -> Self {
        Self { p, mode, mckp_eps, region: depth_matrix_polytope(p.len(), mode) }
    }
}

impl BestResponseOracle for CompressionOracle<'_> {
    fn self_dim(&self) -> usize {
        self.p.len() * DepthMatrix::stride(self.p.len())
    }

    fn opponent_dim(&self) -> usize {
        self.self_dim()
    }

    fn bound(&self) -> f64 {
        1.0
    }

    fn accuracy(&self) -> f64 {
        self.mckp_eps
    }

    fn region(&self) -> Option<&Polytope<f64>> {
        Some(&self.region)
    }

    fn respond(&self, opponent: &[f64]) -> Vec<f64> {
        let n = self.p.len();
        let stride = DepthMatrix::stride(n);
        // the accumulation is an arbitrary box point, not row-stochastic;
        // feed it into the value table directly
        let mut x = Vec::with_capacity(n);
        let mut absent = Vec::with_capacity(n);
        for i in 0..n {
            let row = &opponent[i * stride..(i + 1) * stride];
            x.push(row[..n + 1].to_vec());
            absent.push(row[n + 1]);
        }
        let raw = DepthMatrix { n, x, absent, mode: self.mode };
        let (profile, _) = best_response_compression::<f64>(&raw, self.p, self.mckp_eps, self.mode)
            .expect("knapsack with the depth cap is always feasible");
        DepthMatrix::from_profile(&profile, self.mode)
            .expect("profile validated")
            .flatten()
    }
}

/// Result of solving the compression duel by repeated play.
pub struct CompressionFel {
    /// Time-averaged depth matrix for player 1.
    pub matrix: DepthMatrix,
    pub outcome: FelOutcome,
}

/// Approximate minmax for the compression duel: both players run the
/// knapsack oracle under the standard schedule derived from `(eps, delta)`.
pub fn fel_solve_compression(
    p: &DiscreteDistribution,
    eps: f64,
    delta: f64,
    mode: CompressionMode,
    rng: &mut ChaCha8Rng,
) -> Result<CompressionFel> {
    let n = p.len();
    let stride = DepthMatrix::stride(n);
    let dim = n * stride;
    let m_rows = depth_matrix_polytope(n, mode).num_rows();
    let params = fel_params_from(eps, delta, m_rows, m_rows, dim, dim, 1.0);
    fel_solve_compression_with_params(p, mode, &params, rng)
}

/// Same as [`fel_solve_compression`] with an explicit schedule (shorter runs
/// still certify themselves through the measured regret).
pub fn fel_solve_compression_with_params(
    p: &DiscreteDistribution,
    mode: CompressionMode,
    params: &crate::learning::FelParams,
    rng: &mut ChaCha8Rng,
) -> Result<CompressionFel> {
    let n = p.len();
    let matrix = compression_payoff_matrix(p, mode);
    let oracle1 = CompressionOracle::new(p, mode, 0.0);
    let oracle2 = CompressionOracle::new(p, mode, 0.0);
    let duel = OracleDuel { matrix: &matrix, oracle1: &oracle1, oracle2: &oracle2 };
    let outcome = fel_solve(&duel, params, rng)?;
    let avg = DepthMatrix::unflatten(&outcome.sigma, n, mode)?;
    Ok(CompressionFel { matrix: avg, outcome })
}

/// Exact best-response value against the Huffman tree.
pub fn huffman_beatability(p: &DiscreteDistribution, mode: CompressionMode) -> Result<f64> {
    Ok(Scalar::to_f64(&huffman_beatability_exact(p, mode)?))
}

pub fn huffman_beatability_exact(
    p: &DiscreteDistribution,
    mode: CompressionMode,
) -> Result<BigRational> {
    let h = huffman(p);
    let x = DepthMatrix::from_profile(&h, CompressionMode::NoFail)?;
    // responses in fail mode may drop items even though Huffman never does
    let x = DepthMatrix { mode, ..x };
    let (_, value) = best_response_compression::<BigRational>(&x, p, 0.0, mode)?;
    Ok(value)
}

/// A violated structural fact, with the witnessing node pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureViolation {
    pub rule: &'static str,
    pub nodes: (usize, usize),
}

/// Check the structural facts every Huffman tree satisfies: deeper nodes are
/// no more probable, sibling probabilities split the rest of the tree, and
/// same-depth probabilities are within a factor of three (when the shallower
/// node is not the sole ancestor of everything deeper).
pub fn verify_huffman_structure(tree: &HuffTree) -> Option<StructureViolation> {
    let ids: Vec<usize> = (0..tree.nodes.len()).collect();

    // depth monotonicity
    for &a in &ids {
        for &b in &ids {
            if tree.nodes[a].depth > tree.nodes[b].depth && tree.nodes[a].prob > tree.nodes[b].prob
            {
                return Some(StructureViolation { rule: "deeper-no-more-probable", nodes: (a, b) });
            }
        }
    }

    // sibling separation
    for &v in &ids {
        if let Some((l, r)) = tree.nodes[v].children {
            let (lo, hi) = if tree.nodes[l].prob <= tree.nodes[r].prob { (l, r) } else { (r, l) };
            for &w in &ids {
                if w == lo || w == hi {
                    continue;
                }
                let pw = &tree.nodes[w].prob;
                if *pw > tree.nodes[lo].prob && *pw < tree.nodes[hi].prob {
                    return Some(StructureViolation { rule: "sibling-separation", nodes: (lo, w) });
                }
            }
        }
    }

    // factor-three bound at equal depth
    let max_depth = tree.nodes.iter().map(|n| n.depth).max().unwrap_or(0);
    let three = BigRational::from_ratio(3, 1);
    for &v in &ids {
        let d = tree.nodes[v].depth;
        if d >= max_depth {
            continue;
        }
        // is v the common ancestor of all nodes deeper than d?
        let mut deeper_outside = false;
        for &w in &ids {
            if tree.nodes[w].depth > d && !is_descendant(tree, w, v) {
                deeper_outside = true;
                break;
            }
        }
        if !deeper_outside {
            continue;
        }
        for &w in &ids {
            if w != v && tree.nodes[w].depth == d && tree.nodes[w].prob > three.clone() * tree.nodes[v].prob.clone() {
                return Some(StructureViolation { rule: "factor-three", nodes: (w, v) });
            }
        }
    }
    None
}

fn is_descendant(tree: &HuffTree, node: usize, ancestor: usize) -> bool {
    let mut v = node;
    loop {
        if v == ancestor {
            return true;
        }
        match parent_of(tree, v) {
            Some(p) => v = p,
            None => return false,
        }
    }
}

fn parent_of(tree: &HuffTree, node: usize) -> Option<usize> {
    tree.nodes
        .iter()
        .position(|n| matches!(n.children, Some((l, r)) if l == node || r == node))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::families;
    use crate::game::solve_matrix_game;
    use num_traits::One;
    use rand::{Rng, SeedableRng};

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::from_ratio(n, d)
    }

    #[test]
    fn huffman_forced_profile() {
        let p = DiscreteDistribution::from_f64s(&[0.5, 0.25, 0.25]).unwrap();
        assert_eq!(huffman(&p), DepthProfile::full(vec![1, 2, 2]));
    }

    #[test]
    fn huffman_dyadic_matches_exponents() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.gen_range(1..=8);
            let profiles = random_dyadic_exponents(n, &mut rng);
            let probs: Vec<BigRational> =
                profiles.iter().map(|&a| crate::num::dyadic(a)).collect();
            let p = DiscreteDistribution::from_probs(probs).unwrap();
            let h = huffman(&p);
            for (i, &a) in profiles.iter().enumerate() {
                assert_eq!(h.depth(i), Some(a), "n={n} profiles {profiles:?}");
            }
        }
    }

    /// Random exponent vector with Kraft equality (a random full tree).
    fn random_dyadic_exponents(n: usize, rng: &mut impl Rng) -> Vec<u32> {
        // split leaves recursively
        fn split(count: usize, depth: u32, rng: &mut impl Rng, out: &mut Vec<u32>) {
            if count == 1 {
                out.push(depth);
                return;
            }
            let left = rng.gen_range(1..count);
            split(left, depth + 1, rng, out);
            split(count - left, depth + 1, rng, out);
        }
        let mut out = Vec::with_capacity(n);
        if n == 1 {
            out.push(0);
        } else {
            split(n, 0, rng, &mut out);
        }
        out
    }

    #[test]
    fn huffman_two_thirds_family_is_caterpillar() {
        let p = families::two_thirds(5);
        assert_eq!(huffman(&p), DepthProfile::full(vec![1, 2, 3, 4, 4]));
        // optimal expected depth among all profiles
        let probs = p.probs();
        let h_cost: BigRational = huffman(&p)
            .depths()
            .iter()
            .enumerate()
            .map(|(i, d)| probs[i].clone() * BigRational::from_ratio(d.unwrap() as i64, 1))
            .sum();
        for profile in enumerate_profiles(5, CompressionMode::NoFail) {
            let cost: BigRational = profile
                .depths()
                .iter()
                .enumerate()
                .map(|(i, d)| probs[i].clone() * BigRational::from_ratio(d.unwrap() as i64, 1))
                .sum();
            assert!(cost >= h_cost, "profile {profile:?} beats Huffman's expected depth");
        }
    }

    #[test]
    fn payoff_examples() {
        let p = families::two_thirds(5);
        let t = DepthProfile::full(vec![1, 2, 3, 4, 4]);
        let v = compression_payoff_in::<BigRational>(&t, &t, &p, CompressionMode::NoFail).unwrap();
        assert_eq!(v, q(1, 2));
        // the shifted tree wins everything but item 1 and ties item n:
        // v = 2/3 - 1/(3 * 2^{n-2}) at n = 5
        let shifted = DepthProfile::full(vec![4, 1, 2, 3, 4]);
        let v = compression_payoff_in::<BigRational>(&shifted, &t, &p, CompressionMode::NoFail)
            .unwrap();
        assert_eq!(v, q(2, 3) - q(1, 24));
    }

    #[test]
    fn fail_mode_singleton_root_wins() {
        let p = DiscreteDistribution::from_f64s(&[1.0, 0.0]).unwrap();
        let h = huffman(&p);
        let singleton = DepthProfile::with_absent(vec![Some(0), None]);
        let v = compression_payoff(&singleton, &h, &p, CompressionMode::Fail).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn profile_validation() {
        assert!(DepthProfile::full(vec![1, 2, 2]).validate(CompressionMode::NoFail).is_ok());
        assert!(DepthProfile::full(vec![1, 2]).validate(CompressionMode::NoFail).is_err());
        assert!(DepthProfile::full(vec![1, 2]).validate(CompressionMode::Fail).is_ok());
        assert!(DepthProfile::full(vec![1, 1, 2]).validate(CompressionMode::Fail).is_err());
        assert!(DepthProfile::with_absent(vec![Some(1), None])
            .validate(CompressionMode::NoFail)
            .is_err());
        // depth cap
        assert!(DepthProfile::full(vec![1, 2, 4]).validate(CompressionMode::Fail).is_err());
    }

    #[test]
    fn kraft_tree_shapes() {
        let t = kraft_to_tree(&DepthProfile::full(vec![1, 2, 2])).unwrap();
        let root_kids = t.children[0];
        assert!(root_kids[0].is_some() && root_kids[1].is_some());
        assert_eq!(t.depth_of(t.leaf_of[0].unwrap()), 1);
        assert_eq!(t.depth_of(t.leaf_of[1].unwrap()), 2);
        assert_eq!(t.depth_of(t.leaf_of[2].unwrap()), 2);

        let t = kraft_to_tree(&DepthProfile::full(vec![2, 2, 2, 2])).unwrap();
        // complete tree of height 2: 7 nodes
        assert_eq!(t.parent.len(), 7);

        assert!(kraft_to_tree(&DepthProfile::full(vec![1, 1, 2])).is_err());
    }

    #[test]
    fn kraft_tree_round_trips_huffman() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.gen_range(1..=9);
            let p = families::random(n, 40, &mut rng);
            let h = huffman(&p);
            let tree = kraft_to_tree(&h).unwrap();
            for i in 0..n {
                assert_eq!(tree.depth_of(tree.leaf_of[i].unwrap()), h.depth(i).unwrap());
            }
        }
    }

    #[test]
    fn mckp_exact_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..30 {
            let lists: Vec<Vec<MckpItem<f64>>> = (0..4)
                .map(|_| {
                    (0..rng.gen_range(2..=5))
                        .map(|_| MckpItem {
                            value: rng.gen::<f64>(),
                            weight_units: rng.gen_range(0..=8),
                            depth: None,
                        })
                        .collect()
                })
                .collect();
            let inst = MckpInstance { lists, capacity_units: 16, unit_exp: 4 };
            let (_, dp) = mckp_solve(&inst, 0.0).unwrap();
            // brute force over all selections
            let mut best = f64::NEG_INFINITY;
            let sizes: Vec<usize> = inst.lists.iter().map(|l| l.len()).collect();
            let mut idx = vec![0usize; 4];
            loop {
                let w: u64 = idx.iter().enumerate().map(|(l, &i)| inst.lists[l][i].weight_units).sum();
                if w <= inst.capacity_units {
                    let v: f64 = idx.iter().enumerate().map(|(l, &i)| inst.lists[l][i].value).sum();
                    best = best.max(v);
                }
                let mut k = 0;
                loop {
                    idx[k] += 1;
                    if idx[k] < sizes[k] {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                    if k == 4 {
                        break;
                    }
                }
                if k == 4 {
                    break;
                }
            }
            assert!((dp - best).abs() < 1e-12, "dp {dp} vs brute {best}");
        }
    }

    #[test]
    fn mckp_single_list_and_ties() {
        let inst = MckpInstance {
            lists: vec![vec![
                MckpItem { value: 1.0, weight_units: 8, depth: Some(1) },
                MckpItem { value: 3.0, weight_units: 4, depth: Some(2) },
                MckpItem { value: 2.0, weight_units: 2, depth: Some(3) },
            ]],
            capacity_units: 16,
            unit_exp: 4,
        };
        let (sel, v) = mckp_solve(&inst, 0.0).unwrap();
        assert_eq!(v, 3.0);
        assert_eq!(sel, vec![1]);

        // equal values: the deepest feasible choice wins deterministically
        let p = DiscreteDistribution::uniform(3);
        let x = DepthMatrix::from_profile(&huffman(&p), CompressionMode::NoFail).unwrap();
        let mut flat = x.flatten();
        for v in flat.iter_mut() {
            *v = 0.0;
        }
        let zero = DepthMatrix::unflatten(&flat, 3, CompressionMode::NoFail);
        // all-zero rows are not stochastic; construct the tie table directly
        assert!(zero.is_err());
        let inst = MckpInstance::<f64> {
            lists: (0..3)
                .map(|_| {
                    (1..=3u32)
                        .rev()
                        .map(|d| MckpItem { value: 0.5, weight_units: 1 << (3 - d), depth: Some(d) })
                        .collect()
                })
                .collect(),
            capacity_units: 8,
            unit_exp: 3,
        };
        let (sel, _) = mckp_solve(&inst, 0.0).unwrap();
        let depths: Vec<u32> = sel
            .iter()
            .enumerate()
            .map(|(l, &i)| inst.lists[l][i].depth.unwrap())
            .collect();
        // deepest-feasible deterministic choice
        assert_eq!(depths, vec![3, 3, 3]);
    }

    #[test]
    fn mckp_fptas_quality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let lists: Vec<Vec<MckpItem<f64>>> = (0..5)
                .map(|_| {
                    (0..4)
                        .map(|_| MckpItem {
                            value: rng.gen::<f64>() * 10.0,
                            weight_units: rng.gen_range(1..=8),
                            depth: None,
                        })
                        .collect()
                })
                .collect();
            let inst = MckpInstance { lists, capacity_units: 20, unit_exp: 5 };
            let (_, exact) = mckp_solve(&inst, 0.0).unwrap();
            for eps in [0.1, 0.3] {
                let (_, approx) = mckp_solve(&inst, eps).unwrap();
                assert!(
                    approx >= (1.0 - eps) * exact - 1e-12,
                    "eps {eps}: {approx} < (1-eps) * {exact}"
                );
            }
        }
    }

    #[test]
    fn best_response_to_huffman_on_dyadic_is_half() {
        let p = families::dyadic_caterpillar(4);
        let v = huffman_beatability_exact(&p, CompressionMode::NoFail).unwrap();
        assert_eq!(v, q(1, 2));
    }

    #[test]
    fn best_response_two_thirds_value() {
        let p = families::two_thirds(5);
        let v = huffman_beatability_exact(&p, CompressionMode::NoFail).unwrap();
        assert_eq!(v, q(2, 3) - q(1, 24));
        assert_eq!(v, q(5, 8));
    }

    #[test]
    fn fail_mode_huffman_fully_beatable() {
        let p = DiscreteDistribution::from_f64s(&[1.0, 0.0]).unwrap();
        let v = huffman_beatability_exact(&p, CompressionMode::Fail).unwrap();
        assert_eq!(v, BigRational::one());
    }

    #[test]
    fn best_response_matches_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for mode in [CompressionMode::NoFail, CompressionMode::Fail] {
            for _ in 0..12 {
                let n = rng.gen_range(2..=5);
                let p = families::random(n, 20, &mut rng);
                // random row-stochastic opponent built from a few profiles
                let profiles = enumerate_profiles(n, mode);
                let mut flat = vec![0.0; n * DepthMatrix::stride(n)];
                for _ in 0..3 {
                    let pr = &profiles[rng.gen_range(0..profiles.len())];
                    let m = DepthMatrix::from_profile(pr, mode).unwrap().flatten();
                    for (f, v) in flat.iter_mut().zip(&m) {
                        *f += v / 3.0;
                    }
                }
                let opp = DepthMatrix::unflatten(&flat, n, mode).unwrap();
                let (_, dp_value) =
                    best_response_compression::<f64>(&opp, &p, 0.0, mode).unwrap();
                let mut best = f64::NEG_INFINITY;
                let m = compression_payoff_matrix(&p, mode);
                for cand in &profiles {
                    let mut v = 0.0;
                    // expected payoff against the mixed opponent via the matrix
                    let cand_flat = DepthMatrix::from_profile(cand, mode).unwrap().flatten();
                    for (r, cr) in cand_flat.iter().enumerate() {
                        if *cr == 0.0 {
                            continue;
                        }
                        for (c, oc) in flat.iter().enumerate() {
                            v += cr * m[r][c] * oc;
                        }
                    }
                    best = best.max(v);
                }
                assert!(
                    (dp_value - best).abs() < 1e-9,
                    "mode {mode:?} n={n}: dp {dp_value} vs enumeration {best}"
                );
            }
        }
    }

    #[test]
    fn payoff_matrix_agrees_with_direct_payoff() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for mode in [CompressionMode::NoFail, CompressionMode::Fail] {
            let n = 4;
            let p = families::random(n, 25, &mut rng);
            let m = compression_payoff_matrix(&p, mode);
            let profiles = enumerate_profiles(n, mode);
            for _ in 0..20 {
                let a = &profiles[rng.gen_range(0..profiles.len())];
                let b = &profiles[rng.gen_range(0..profiles.len())];
                let direct = compression_payoff(a, b, &p, mode).unwrap();
                let fa = DepthMatrix::from_profile(a, mode).unwrap().flatten();
                let fb = DepthMatrix::from_profile(b, mode).unwrap().flatten();
                let via: f64 = fa
                    .iter()
                    .enumerate()
                    .map(|(r, x)| x * fb.iter().enumerate().map(|(c, y)| m[r][c] * y).sum::<f64>())
                    .sum();
                assert!((direct - via).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fel_dyadic_value_near_half() {
        let p = families::dyadic_caterpillar(4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let params = crate::learning::FelParams {
            rounds: 60,
            cube_side: (60.0 * 30.0f64).sqrt(),
            samples: 30,
            bound: 1.0,
            payoff_bound: 1.0,
            delta: 0.2,
            eps: 0.2,
        };
        let sol = fel_solve_compression_with_params(&p, CompressionMode::NoFail, &params, &mut rng)
            .unwrap();
        let eps_prime = sol.outcome.eps_prime();
        assert!(
            (sol.outcome.empirical_value - 0.5).abs() <= eps_prime + 1e-9,
            "value {} vs certified slack {eps_prime}",
            sol.outcome.empirical_value
        );
        // averaged play is a valid depth matrix
        assert_eq!(sol.matrix.n(), 4);
    }

    #[test]
    fn fel_small_duel_matches_matrix_oracle() {
        let p = families::random(3, 15, &mut rand_chacha::ChaCha8Rng::seed_from_u64(37));
        let profiles = enumerate_profiles(3, CompressionMode::NoFail);
        let mut m = vec![vec![0.0; profiles.len()]; profiles.len()];
        for (i, a) in profiles.iter().enumerate() {
            for (j, b) in profiles.iter().enumerate() {
                m[i][j] = compression_payoff(a, b, &p, CompressionMode::NoFail).unwrap();
            }
        }
        let oracle_value = solve_matrix_game(&m).unwrap().value;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let params = crate::learning::FelParams {
            rounds: 80,
            cube_side: (80.0 * 20.0f64).sqrt(),
            samples: 40,
            bound: 1.0,
            payoff_bound: 1.0,
            delta: 0.2,
            eps: 0.2,
        };
        let sol = fel_solve_compression_with_params(&p, CompressionMode::NoFail, &params, &mut rng)
            .unwrap();
        let eps_prime = sol.outcome.eps_prime();
        assert!(
            (sol.outcome.empirical_value - oracle_value).abs() <= eps_prime + 1e-9,
            "fel {} vs oracle {oracle_value} (eps' {eps_prime})",
            sol.outcome.empirical_value
        );
    }

    #[test]
    fn single_item_duel_trivial() {
        let p = DiscreteDistribution::uniform(1);
        let h = huffman(&p);
        assert_eq!(h, DepthProfile::full(vec![0]));
        let v = compression_payoff(&h, &h, &p, CompressionMode::NoFail).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn structure_checks_pass_on_huffman_trees() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(43);
        for _ in 0..25 {
            let n = rng.gen_range(1..=12);
            let p = families::random(n, 60, &mut rng);
            let tree = huffman_tree(&p);
            assert_eq!(verify_huffman_structure(&tree), None);
        }
    }

    #[test]
    fn structure_check_catches_bad_tree() {
        // (0.5, 0.3) merged first: the 0.5-leaf ends deeper than the 0.2-leaf
        let p = [q(1, 2), q(3, 10), q(1, 5)];
        let mut nodes: Vec<HuffNode> = p
            .iter()
            .enumerate()
            .map(|(i, q)| HuffNode { prob: q.clone(), children: None, item: Some(i), depth: 0 })
            .collect();
        nodes.push(HuffNode { prob: q(4, 5), children: Some((0, 1)), item: None, depth: 0 });
        nodes.push(HuffNode { prob: q(1, 1), children: Some((3, 2)), item: None, depth: 0 });
        let mut tree = HuffTree { nodes, root: 4 };
        tree.assign_depths();
        let violation = verify_huffman_structure(&tree).expect("tree violates the depth fact");
        assert_eq!(violation.rule, "deeper-no-more-probable");
    }

    #[test]
    fn single_node_tree_vacuous() {
        let p = DiscreteDistribution::uniform(1);
        assert_eq!(verify_huffman_structure(&huffman_tree(&p)), None);
    }

    #[test]
    fn antichain_weight_brackets_probability() {
        // Lemma: an antichain of weight 2^{-d} has probability between the
        // lightest and heaviest depth-d node
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(47);
        for _ in 0..15 {
            let n = rng.gen_range(2..=10);
            let p = families::random(n, 30, &mut rng);
            let tree = huffman_tree(&p);
            let max_depth = tree.nodes.iter().map(|v| v.depth).max().unwrap();
            // collect all antichains by DFS over include/descend choices
            let mut antichains: Vec<Vec<usize>> = Vec::new();
            collect_antichains(&tree, tree.root, &mut vec![], &mut antichains, 4000);
            for chain in antichains {
                if chain.is_empty() {
                    continue;
                }
                let (units, exp): (u128, u32) = {
                    let max_d = chain.iter().map(|&v| tree.nodes[v].depth).max().unwrap().max(1);
                    (
                        chain.iter().map(|&v| 1u128 << (max_d - tree.nodes[v].depth)).sum(),
                        max_d,
                    )
                };
                // weight must be an exact power of two 2^{-d}
                if !units.is_power_of_two() {
                    continue;
                }
                let d = exp - units.trailing_zeros();
                if d > max_depth {
                    continue;
                }
                let at_depth: Vec<&HuffNode> =
                    tree.nodes.iter().filter(|v| v.depth == d).collect();
                if at_depth.is_empty() {
                    continue;
                }
                let chain_p: BigRational =
                    chain.iter().map(|&v| tree.nodes[v].prob.clone()).sum();
                let min_p = at_depth.iter().map(|v| v.prob.clone()).min().unwrap();
                let max_p = at_depth.iter().map(|v| v.prob.clone()).max().unwrap();
                assert!(
                    chain_p >= min_p && chain_p <= max_p,
                    "antichain weight 2^-{d} prob {chain_p} outside [{min_p}, {max_p}]"
                );
            }
        }
    }

    fn collect_antichains(
        tree: &HuffTree,
        v: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        cap: usize,
    ) {
        if out.len() >= cap {
            return;
        }
        // option 1: take v itself
        current.push(v);
        out.push(current.clone());
        current.pop();
        // option 2: descend into children combinations
        if let Some((l, r)) = tree.nodes[v].children {
            let mut left_sets: Vec<Vec<usize>> = vec![vec![]];
            let mut tmp = Vec::new();
            collect_antichains(tree, l, &mut tmp, &mut left_sets, cap / 2 + 1);
            let mut right_sets: Vec<Vec<usize>> = vec![vec![]];
            let mut tmp = Vec::new();
            collect_antichains(tree, r, &mut tmp, &mut right_sets, cap / 2 + 1);
            for ls in &left_sets {
                for rs in &right_sets {
                    if ls.is_empty() && rs.is_empty() {
                        continue;
                    }
                    if out.len() >= cap {
                        return;
                    }
                    let mut s = ls.clone();
                    s.extend_from_slice(rs);
                    out.push(s);
                }
            }
        }
    }

    #[test]
    fn profile_json_round_trip() {
        let p = DepthProfile::with_absent(vec![Some(1), None, Some(2)]);
        let json = serde_json::to_string(&p).unwrap();
        let back: DepthProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }
}
