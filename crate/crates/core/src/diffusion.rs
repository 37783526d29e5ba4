//! Forward independent-cascade simulation, Monte-Carlo spread and profit
//! estimators, and exhaustive live-edge oracles for desk-scale verification.

use std::collections::BTreeSet;

use rand::Rng;

use crate::exec;
use crate::graph::{CopyGraph, Graph, ProductCatalog, SeedAssignment};
use crate::rng::{child_seed, stream_rng};
use crate::{Error, Result};

/// Edge-count cutoff for the exhaustive live-edge oracles (`2^m` subgraphs).
pub const ORACLE_EDGE_CUTOFF: usize = 22;
/// Node-count cutoff for the all-subsets spread table.
pub const ORACLE_NODE_CUTOFF: usize = 16;
/// Assignment-count cutoff for the exhaustive optimum search.
pub const ORACLE_COMBINATION_CUTOFF: u64 = 10_000_000;

const TRIAL_CHUNK: u64 = 4096;

/// One cascade trial. Seeds activate at timestamp 1; a node activated at
/// timestamp `t` tries each outgoing edge once, activating the head at
/// `t + 1` with the edge's probability.
#[derive(Clone, Debug)]
pub struct DiffusionOutcome {
    /// Activated nodes in activation order (ties in ascending node id).
    pub activated: Vec<u32>,
    /// Per-node activation timestamp, 0 for nodes never activated.
    pub timestamps: Vec<u32>,
}

/// Simulate one cascade. Within a round, activation attempts happen in
/// ascending node-id order (and each node's out-edges in ascending target
/// order), so a fixed RNG yields a reproducible trace.
pub fn simulate_ic<R: Rng>(g: &Graph, seeds: &BTreeSet<u32>, rng: &mut R) -> DiffusionOutcome {
    let mut timestamps = vec![0u32; g.n()];
    let mut activated: Vec<u32> = Vec::new();
    let mut frontier: Vec<u32> = seeds.iter().copied().collect();
    for &s in &frontier {
        timestamps[s as usize] = 1;
    }
    activated.extend_from_slice(&frontier);
    let mut t = 1u32;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &u in &frontier {
            for &(v, p) in g.out_edges(u) {
                if timestamps[v as usize] == 0 && rng.gen::<f64>() < p {
                    timestamps[v as usize] = t + 1;
                    next.push(v);
                }
            }
        }
        next.sort_unstable();
        activated.extend_from_slice(&next);
        frontier = next;
        t += 1;
    }
    DiffusionOutcome {
        activated,
        timestamps,
    }
}

/// Reusable cascade scratch: epoch-stamped visit marks, no per-trial clears.
pub(crate) struct IcScratch {
    stamp: Vec<u32>,
    epoch: u32,
    frontier: Vec<u32>,
    next: Vec<u32>,
}

impl IcScratch {
    pub(crate) fn new(n: usize) -> Self {
        IcScratch {
            stamp: vec![0; n],
            epoch: 0,
            frontier: Vec::new(),
            next: Vec::new(),
        }
    }

    pub(crate) fn cascade_count<R: Rng>(&mut self, g: &Graph, seeds: &[u32], rng: &mut R) -> u64 {
        if self.epoch == u32::MAX {
            self.stamp.fill(0);
            self.epoch = 0;
        }
        self.epoch += 1;
        let e = self.epoch;
        self.frontier.clear();
        for &s in seeds {
            if self.stamp[s as usize] != e {
                self.stamp[s as usize] = e;
                self.frontier.push(s);
            }
        }
        let mut count = self.frontier.len() as u64;
        while !self.frontier.is_empty() {
            self.next.clear();
            for &u in &self.frontier {
                for &(v, p) in g.out_edges(u) {
                    if self.stamp[v as usize] != e && rng.gen::<f64>() < p {
                        self.stamp[v as usize] = e;
                        self.next.push(v);
                    }
                }
            }
            self.next.sort_unstable();
            count += self.next.len() as u64;
            std::mem::swap(&mut self.frontier, &mut self.next);
        }
        count
    }
}

/// Unbiased Monte-Carlo estimate of the expected spread over `trials`
/// independent cascades. Trial `t` always uses stream `t` of `seed`, so the
/// result does not depend on worker count.
pub fn mc_expected_spread(g: &Graph, seeds: &BTreeSet<u32>, trials: u64, seed: u64) -> f64 {
    assert!(trials >= 1, "at least one trial required");
    if seeds.is_empty() {
        return 0.0;
    }
    let seed_list: Vec<u32> = seeds.iter().copied().collect();
    let total: u64 = exec::map_chunks(trials, TRIAL_CHUNK, |start, len| {
        let mut scratch = IcScratch::new(g.n());
        let mut sum = 0u64;
        for t in start..start + len {
            let mut rng = stream_rng(seed, t);
            sum += scratch.cascade_count(g, &seed_list, &mut rng);
        }
        sum
    })
    .into_iter()
    .sum();
    total as f64 / trials as f64
}

/// Monte-Carlo profit estimate plus per-product breakdown and standard error.
#[derive(Clone, Debug)]
pub struct ProfitEvaluation {
    pub profit: f64,
    pub stderr: f64,
    /// Per-product expected profit `p_i * spread_i`.
    pub per_product: Vec<f64>,
    pub trials: u64,
}

/// Evaluate an assignment's expected profit by simulating each component
/// independently: component `i` uses the child stream `("component", i)` of
/// `seed`, so two assignments evaluated with the same seed share trial
/// randomness product by product.
pub fn mc_profit_detailed(
    cg: &CopyGraph,
    cat: &ProductCatalog,
    s: &SeedAssignment,
    trials: u64,
    seed: u64,
) -> ProfitEvaluation {
    assert!(trials >= 1, "at least one trial required");
    assert_eq!(s.q(), cat.q(), "assignment/catalog product count mismatch");
    assert_eq!(cg.q, cat.q(), "copy graph/catalog product count mismatch");
    let g = cg.base;
    let q = cat.q();
    let seeds_per_comp: Vec<Vec<u32>> = (0..q)
        .map(|i| s.component(i).iter().copied().collect())
        .collect();
    let comp_seeds: Vec<u64> = (0..q)
        .map(|i| child_seed(seed, "component", i as u64))
        .collect();
    // (per-product count sums, sum of per-trial profit, sum of squares)
    let chunks = exec::map_chunks(trials, TRIAL_CHUNK, |start, len| {
        let mut scratch = IcScratch::new(g.n());
        let mut counts = vec![0u64; q];
        let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
        for t in start..start + len {
            let mut profit_t = 0.0;
            for i in 0..q {
                if seeds_per_comp[i].is_empty() {
                    continue;
                }
                let mut rng = stream_rng(comp_seeds[i], t);
                let c = scratch.cascade_count(g, &seeds_per_comp[i], &mut rng);
                counts[i] += c;
                profit_t += cat.profit(i) * c as f64;
            }
            sum += profit_t;
            sum_sq += profit_t * profit_t;
        }
        (counts, sum, sum_sq)
    });
    let mut counts = vec![0u64; q];
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for (c, s1, s2) in chunks {
        for i in 0..q {
            counts[i] += c[i];
        }
        sum += s1;
        sum_sq += s2;
    }
    let r = trials as f64;
    let per_product: Vec<f64> = (0..q)
        .map(|i| cat.profit(i) * counts[i] as f64 / r)
        .collect();
    let mean = sum / r;
    let var = (sum_sq / r - mean * mean).max(0.0);
    ProfitEvaluation {
        profit: per_product.iter().sum(),
        stderr: (var / r).sqrt(),
        per_product,
        trials,
    }
}

/// `rho(S) = sum_i p_i * sigma(S_i)` estimated by Monte Carlo.
pub fn mc_expected_profit(
    cg: &CopyGraph,
    cat: &ProductCatalog,
    s: &SeedAssignment,
    trials: u64,
    seed: u64,
) -> f64 {
    mc_profit_detailed(cg, cat, s, trials, seed).profit
}

struct LiveEdgeOracle {
    // out-adjacency split into always-live edges and indexed random edges
    certain: Vec<Vec<u32>>,
    random_adj: Vec<Vec<(usize, u32)>>,
    probs: Vec<f64>,
}

impl LiveEdgeOracle {
    fn new(g: &Graph) -> Result<Self> {
        if g.m() > ORACLE_EDGE_CUTOFF {
            return Err(Error::TooLarge(format!(
                "exhaustive oracle handles at most {ORACLE_EDGE_CUTOFF} edges, graph has {}",
                g.m()
            )));
        }
        let mut certain = vec![Vec::new(); g.n()];
        let mut random_adj = vec![Vec::new(); g.n()];
        let mut probs = Vec::new();
        for (u, v, p) in g.edges() {
            if p >= 1.0 {
                certain[u as usize].push(v);
            } else if p > 0.0 {
                random_adj[u as usize].push((probs.len(), v));
                probs.push(p);
            }
        }
        Ok(LiveEdgeOracle {
            certain,
            random_adj,
            probs,
        })
    }

    fn mask_weight(&self, mask: u64) -> f64 {
        let mut w = 1.0;
        for (b, &p) in self.probs.iter().enumerate() {
            w *= if mask >> b & 1 == 1 { p } else { 1.0 - p };
        }
        w
    }

    /// Nodes reachable from `seeds` in the live subgraph selected by `mask`.
    fn reach_count(&self, mask: u64, seeds: &[u32], stamp: &mut [u32], epoch: u32) -> u64 {
        let mut stack: Vec<u32> = Vec::new();
        let mut count = 0u64;
        for &s in seeds {
            if stamp[s as usize] != epoch {
                stamp[s as usize] = epoch;
                stack.push(s);
                count += 1;
            }
        }
        while let Some(u) = stack.pop() {
            for &v in &self.certain[u as usize] {
                if stamp[v as usize] != epoch {
                    stamp[v as usize] = epoch;
                    stack.push(v);
                    count += 1;
                }
            }
            for &(b, v) in &self.random_adj[u as usize] {
                if mask >> b & 1 == 1 && stamp[v as usize] != epoch {
                    stamp[v as usize] = epoch;
                    stack.push(v);
                    count += 1;
                }
            }
        }
        count
    }
}

/// Exact expected spread by enumerating every live-edge subgraph, weighting
/// each by its probability. Refuses graphs beyond [`ORACLE_EDGE_CUTOFF`].
pub fn exact_spread(g: &Graph, seeds: &BTreeSet<u32>) -> Result<f64> {
    let oracle = LiveEdgeOracle::new(g)?;
    if seeds.is_empty() {
        return Ok(0.0);
    }
    let seed_list: Vec<u32> = seeds.iter().copied().collect();
    let mut stamp = vec![0u32; g.n()];
    let mut total = 0.0;
    let r = oracle.probs.len();
    for mask in 0..1u64 << r {
        let w = oracle.mask_weight(mask);
        if w == 0.0 {
            continue;
        }
        let epoch = mask as u32 + 1;
        total += w * oracle.reach_count(mask, &seed_list, &mut stamp, epoch) as f64;
    }
    Ok(total)
}

/// Exact expected spread of every seed subset of a tiny graph, indexed by
/// node bitmask.
pub struct SpreadTable {
    n: usize,
    table: Vec<f64>,
}

impl SpreadTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spread_mask(&self, seed_mask: u32) -> f64 {
        self.table[seed_mask as usize]
    }

    pub fn spread_set(&self, seeds: &BTreeSet<u32>) -> f64 {
        self.table[mask_of(seeds) as usize]
    }
}

pub fn mask_of(seeds: &BTreeSet<u32>) -> u32 {
    let mut mask = 0u32;
    for &s in seeds {
        mask |= 1 << s;
    }
    mask
}

/// Build the all-subsets spread table by one pass over live-edge subgraphs
/// and a subset DP per subgraph. Independent of the per-call enumeration in
/// [`exact_spread`], which makes the two usable as cross-checks.
pub fn exact_spread_table(g: &Graph) -> Result<SpreadTable> {
    let n = g.n();
    if n > ORACLE_NODE_CUTOFF {
        return Err(Error::TooLarge(format!(
            "spread table handles at most {ORACLE_NODE_CUTOFF} nodes, graph has {n}"
        )));
    }
    let oracle = LiveEdgeOracle::new(g)?;
    let r = oracle.probs.len();
    let subsets = 1usize << n;
    let mut table = vec![0.0f64; subsets];
    let mut node_reach = vec![0u32; n];
    let mut reach_dp = vec![0u32; subsets];
    let mut stamp = vec![0u32; n];
    for mask in 0..1u64 << r {
        let w = oracle.mask_weight(mask);
        if w == 0.0 {
            continue;
        }
        for v in 0..n as u32 {
            let epoch = (mask as u32).wrapping_mul(n as u32).wrapping_add(v + 1);
            let mut bits = 0u32;
            let mut stack = vec![v];
            stamp[v as usize] = epoch;
            while let Some(u) = stack.pop() {
                bits |= 1 << u;
                for &t in &oracle.certain[u as usize] {
                    if stamp[t as usize] != epoch {
                        stamp[t as usize] = epoch;
                        stack.push(t);
                    }
                }
                for &(b, t) in &oracle.random_adj[u as usize] {
                    if mask >> b & 1 == 1 && stamp[t as usize] != epoch {
                        stamp[t as usize] = epoch;
                        stack.push(t);
                    }
                }
            }
            node_reach[v as usize] = bits;
        }
        for s in 1..subsets {
            let low = s.trailing_zeros() as usize;
            reach_dp[s] = reach_dp[s & (s - 1)] | node_reach[low];
            table[s] += w * f64::from(reach_dp[s].count_ones());
        }
    }
    Ok(SpreadTable { n, table })
}

/// Exhaustive optimum of the budgeted multi-product problem on a tiny
/// instance: maximizes `sum_i p_i * sigma(S_i)` over all assignments with
/// `cost(S) <= B`. Returns the first optimum in enumeration order
/// (components in index order, node masks ascending).
pub fn exact_opt(
    cg: &CopyGraph,
    cat: &ProductCatalog,
    budget: f64,
) -> Result<(SeedAssignment, f64)> {
    let g = cg.base;
    let n = g.n();
    let q = cat.q();
    assert_eq!(cg.q, q, "copy graph/catalog product count mismatch");
    let table = exact_spread_table(g)?;
    // per-component candidate masks: size <= k_i, ascending mask order
    let mut candidates: Vec<Vec<u32>> = Vec::with_capacity(q);
    let mut combos: u64 = 1;
    for i in 0..q {
        let k = cat.k_i(budget, i).min(n);
        let masks: Vec<u32> = (0..1u32 << n)
            .filter(|m| m.count_ones() as usize <= k)
            .collect();
        combos = combos.saturating_mul(masks.len() as u64);
        candidates.push(masks);
    }
    if combos > ORACLE_COMBINATION_CUTOFF {
        return Err(Error::TooLarge(format!(
            "{combos} candidate assignments exceed the {ORACLE_COMBINATION_CUTOFF} cutoff"
        )));
    }

    struct Search<'s> {
        cat: &'s ProductCatalog,
        table: &'s SpreadTable,
        candidates: &'s [Vec<u32>],
        budget: f64,
        chosen: Vec<u32>,
        best: Option<(Vec<u32>, f64)>,
    }
    impl Search<'_> {
        // Recompute cost left to right at every level so the comparison is
        // the exact float `cost(S) <= B` used everywhere else.
        fn cost_so_far(&self) -> f64 {
            self.chosen
                .iter()
                .enumerate()
                .map(|(i, m)| self.cat.cost(i) * f64::from(m.count_ones()))
                .sum()
        }
        fn recurse(&mut self, i: usize, profit: f64) {
            if i == self.candidates.len() {
                match &self.best {
                    Some((_, p)) if *p >= profit => {}
                    _ => self.best = Some((self.chosen.clone(), profit)),
                }
                return;
            }
            for &mask in &self.candidates[i] {
                self.chosen.push(mask);
                if self.cost_so_far() <= self.budget {
                    let gain = self.cat.profit(i) * self.table.spread_mask(mask);
                    self.recurse(i + 1, profit + gain);
                }
                self.chosen.pop();
            }
        }
    }

    let mut search = Search {
        cat,
        table: &table,
        candidates: &candidates,
        budget,
        chosen: Vec::new(),
        best: None,
    };
    search.recurse(0, 0.0);
    let (masks, value) = search.best.expect("empty assignment is always feasible");
    let mut s = SeedAssignment::new(q);
    for (i, mask) in masks.iter().enumerate() {
        for v in 0..n as u32 {
            if mask >> v & 1 == 1 {
                s.insert(crate::graph::CopyNode::new(i as u32, v));
            }
        }
    }
    Ok((s, value))
}
