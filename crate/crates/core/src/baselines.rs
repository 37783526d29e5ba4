//! Comparison selectors: uniform random seeding, marginal-profit-per-cost
//! greedy, and the cost-effectiveness selector that hedges a
//! cost-squared-normalized greedy against a raw-marginal greedy.
//!
//! All three share one marginal-evaluation kernel with a pluggable spread
//! estimator, so desk-scale tests can run them against the exhaustive
//! oracle deterministically while large runs use Monte Carlo or a sampled
//! collection.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use rand::Rng;

use crate::diffusion::{mc_expected_spread, mc_profit_detailed, SpreadTable};
use crate::graph::{cost_of_counts, CopyGraph, CopyNode, ProductCatalog, SeedAssignment};
use crate::ris::{CoverageState, RRCollection};
use crate::rng::{child_seed, hash_node_set, stream_rng};

/// How marginal spreads are estimated during selection.
#[derive(Clone, Copy)]
pub enum Estimator<'a> {
    /// Fresh cascade trials per evaluated seed set. Estimates of the same
    /// node set are cached and keyed by set content, so products whose
    /// current seed sets coincide share common random numbers: their
    /// marginals tie exactly instead of flipping on noise.
    MonteCarlo { trials: u64 },
    /// Exhaustive oracle lookups (tiny graphs); fully deterministic.
    Exact(&'a SpreadTable),
    /// Coverage gains on a sampled collection; deterministic given the
    /// collection.
    Coverage(&'a RRCollection),
}

/// Per-round scoring rule of the shared greedy kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionRule {
    /// Marginal profit over cost.
    ProfitPerCost,
    /// Marginal profit over cost squared.
    ProfitPerCostSquared,
    /// Raw marginal profit.
    RawProfit,
}

impl SelectionRule {
    fn ratio(&self, gain: f64, cost: f64) -> f64 {
        match self {
            SelectionRule::ProfitPerCost => gain / cost,
            SelectionRule::ProfitPerCostSquared => gain / (cost * cost),
            SelectionRule::RawProfit => gain,
        }
    }
}

enum EvalKind<'a> {
    MonteCarlo {
        trials: u64,
        sigma_cache: HashMap<u64, f64>,
    },
    Exact(&'a SpreadTable),
    Coverage {
        rc: &'a RRCollection,
        state: CoverageState,
    },
}

struct Evaluator<'a> {
    cg: CopyGraph<'a>,
    kind: EvalKind<'a>,
    seed: u64,
}

impl<'a> Evaluator<'a> {
    fn new(cg: CopyGraph<'a>, estimator: Estimator<'a>, seed: u64) -> Self {
        let kind = match estimator {
            Estimator::MonteCarlo { trials } => EvalKind::MonteCarlo {
                trials,
                sigma_cache: HashMap::new(),
            },
            Estimator::Exact(table) => EvalKind::Exact(table),
            Estimator::Coverage(rc) => {
                let mut state = CoverageState::new(rc);
                state.reset();
                EvalKind::Coverage { rc, state }
            }
        };
        Evaluator { cg, kind, seed }
    }

    /// Spread of a node set, estimator-specific; Monte-Carlo results are
    /// cached by set content so equal sets get equal values.
    fn sigma(&mut self, set: &BTreeSet<u32>) -> f64 {
        match &mut self.kind {
            EvalKind::MonteCarlo {
                trials,
                sigma_cache,
            } => {
                if set.is_empty() {
                    return 0.0;
                }
                let key = hash_node_set(set.iter().copied());
                if let Some(&v) = sigma_cache.get(&key) {
                    return v;
                }
                let v = mc_expected_spread(
                    self.cg.base,
                    set,
                    *trials,
                    child_seed(self.seed, "sigma", key),
                );
                sigma_cache.insert(key, v);
                v
            }
            EvalKind::Exact(table) => table.spread_set(set),
            EvalKind::Coverage { .. } => unreachable!("coverage path uses gains directly"),
        }
    }

    /// Marginal spread of adding `v` to component `comp` whose current seed
    /// set is `current`.
    fn marginal_spread(&mut self, current: &BTreeSet<u32>, comp: u32, v: u32) -> f64 {
        match &mut self.kind {
            EvalKind::Coverage { rc, state } => {
                let nq = (rc.n() * rc.q()) as f64;
                state.gain_count(rc, CopyNode::new(comp, v)) as f64 * nq / rc.theta() as f64
            }
            _ => {
                let base = self.sigma(current);
                let mut with = current.clone();
                with.insert(v);
                self.sigma(&with) - base
            }
        }
    }

    fn commit(&mut self, node: CopyNode) {
        if let EvalKind::Coverage { rc, state } = &mut self.kind {
            state.commit(rc, node);
        }
    }

    /// Whole-assignment profit for final candidate comparison.
    fn assignment_profit(&mut self, cat: &ProductCatalog, s: &SeedAssignment, tag: u64) -> f64 {
        match &mut self.kind {
            EvalKind::MonteCarlo { trials, .. } => mc_profit_detailed(
                &self.cg,
                cat,
                s,
                *trials,
                child_seed(self.seed, "assignment-profit", tag),
            )
            .profit,
            EvalKind::Exact(table) => (0..cat.q())
                .map(|i| cat.profit(i) * table.spread_set(s.component(i)))
                .sum(),
            EvalKind::Coverage { rc, .. } => rc.profit_estimate(cat, s),
        }
    }
}

struct PairEntry {
    ratio: f64,
    gain: f64,
    node: CopyNode,
    version: u64,
}

impl Ord for PairEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // ratio, then raw gain (equal efficiency locks in more profit),
        // then lower component and node
        self.ratio
            .total_cmp(&other.ratio)
            .then_with(|| self.gain.total_cmp(&other.gain))
            .then_with(|| other.node.component.cmp(&self.node.component))
            .then_with(|| other.node.node.cmp(&self.node.node))
    }
}
impl PartialOrd for PairEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl PartialEq for PairEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for PairEntry {}

/// The shared kernel: each round adds the affordable `(node, product)` pair
/// maximizing the rule's score, until nothing affordable has positive
/// marginal profit. Lazily re-evaluates cached scores; a commit to one
/// product only invalidates that product's entries.
fn greedy_select(
    cg: &CopyGraph,
    cat: &ProductCatalog,
    budget: f64,
    estimator: Estimator,
    rule: SelectionRule,
    seed: u64,
) -> SeedAssignment {
    let q = cat.q();
    let n = cg.base.n() as u32;
    let mut eval = Evaluator::new(*cg, estimator, seed);
    let mut s = SeedAssignment::new(q);
    let mut counts = vec![0usize; q];
    let mut versions = vec![1u64; q];
    let mut heap: BinaryHeap<PairEntry> = BinaryHeap::with_capacity(q * n as usize);
    for comp in 0..q as u32 {
        for node in 0..n {
            heap.push(PairEntry {
                ratio: f64::INFINITY,
                gain: f64::INFINITY,
                node: CopyNode::new(comp, node),
                version: 0,
            });
        }
    }
    while let Some(top) = heap.pop() {
        let v = top.node;
        let comp = v.component as usize;
        counts[comp] += 1;
        let affordable = cost_of_counts(cat, &counts) <= budget;
        counts[comp] -= 1;
        if !affordable {
            continue;
        }
        if top.version != versions[comp] {
            let delta_sigma = eval.marginal_spread(s.component(comp), v.component, v.node);
            let gain = cat.profit(comp) * delta_sigma;
            heap.push(PairEntry {
                ratio: rule.ratio(gain, cat.cost(comp)),
                gain,
                node: v,
                version: versions[comp],
            });
            continue;
        }
        if !(top.gain > 0.0) {
            break;
        }
        s.insert(v);
        eval.commit(v);
        counts[comp] += 1;
        versions[comp] += 1;
    }
    s
}

/// Uniform random seeding: draw an affordable product uniformly, then a
/// uniform not-yet-seeded node for it, until nothing is affordable.
pub fn random_baseline(
    cg: &CopyGraph,
    cat: &ProductCatalog,
    budget: f64,
    seed: u64,
) -> SeedAssignment {
    let n = cg.base.n();
    let q = cat.q();
    let mut rng = stream_rng(seed, 0);
    let mut s = SeedAssignment::new(q);
    let mut counts = vec![0usize; q];
    loop {
        let open: Vec<usize> = (0..q)
            .filter(|&i| {
                if counts[i] >= n {
                    return false;
                }
                counts[i] += 1;
                let ok = cost_of_counts(cat, &counts) <= budget;
                counts[i] -= 1;
                ok
            })
            .collect();
        if open.is_empty() {
            break;
        }
        let i = open[rng.gen_range(0..open.len())];
        let mut skip = rng.gen_range(0..n - counts[i]);
        let pick = (0..n as u32)
            .find(|v| {
                if s.component(i).contains(v) {
                    return false;
                }
                if skip == 0 {
                    return true;
                }
                skip -= 1;
                false
            })
            .expect("an unseeded node exists");
        s.insert(CopyNode::new(i as u32, pick));
        counts[i] += 1;
    }
    s
}

/// Greedy by marginal profit over cost with a pluggable estimator.
pub fn greedy_marginal(
    cg: &CopyGraph,
    cat: &ProductCatalog,
    budget: f64,
    estimator: Estimator,
    seed: u64,
) -> SeedAssignment {
    greedy_select(cg, cat, budget, estimator, SelectionRule::ProfitPerCost, seed)
}

/// Greedy by marginal profit over cost, Monte-Carlo marginals.
pub fn greedy_mc(
    cg: &CopyGraph,
    cat: &ProductCatalog,
    budget: f64,
    trials: u64,
    seed: u64,
) -> SeedAssignment {
    greedy_marginal(cg, cat, budget, Estimator::MonteCarlo { trials }, seed)
}

/// Cost-effectiveness selector: build one candidate normalizing marginals by
/// cost squared and one by raw marginals, then keep whichever values higher.
pub fn pmce(
    cg: &CopyGraph,
    cat: &ProductCatalog,
    budget: f64,
    estimator: Estimator,
    seed: u64,
) -> SeedAssignment {
    let cand_cost2 = greedy_select(
        cg,
        cat,
        budget,
        estimator,
        SelectionRule::ProfitPerCostSquared,
        child_seed(seed, "cand-cost2", 0),
    );
    let cand_raw = greedy_select(
        cg,
        cat,
        budget,
        estimator,
        SelectionRule::RawProfit,
        child_seed(seed, "cand-raw", 0),
    );
    // same evaluation stream for both candidates
    let mut eval = Evaluator::new(*cg, estimator, child_seed(seed, "final-eval", 0));
    let p1 = eval.assignment_profit(cat, &cand_cost2, 0);
    let p2 = eval.assignment_profit(cat, &cand_raw, 0);
    if p2 > p1 {
        cand_raw
    } else {
        cand_cost2
    }
}

/// Monte-Carlo convenience wrapper for [`pmce`].
pub fn pmce_mc(
    cg: &CopyGraph,
    cat: &ProductCatalog,
    budget: f64,
    trials: u64,
    seed: u64,
) -> SeedAssignment {
    pmce(cg, cat, budget, Estimator::MonteCarlo { trials }, seed)
}
