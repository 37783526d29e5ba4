//! Directed social graphs, the virtual multi-component copy graph, product
//! catalogs and per-product seed assignments.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::{Error, Result};

/// Immutable directed graph with a propagation probability on every edge.
///
/// Node ids are dense in `[0, n)`; construction compacts arbitrary input ids
/// and keeps the originals for readable output. Adjacency lists are sorted
/// by neighbor id and `in_edges` is the exact transpose of `out_edges`.
#[derive(Clone, Debug)]
pub struct Graph {
    out_edges: Vec<Vec<(u32, f64)>>,
    in_edges: Vec<Vec<(u32, f64)>>,
    m: usize,
    original_ids: Vec<u64>,
}

/// What the edge-list builder dropped or collapsed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EdgeListStats {
    pub self_loops_dropped: usize,
    pub duplicates_collapsed: usize,
    /// True if any input line carried an explicit probability column.
    pub explicit_probabilities: bool,
}

impl Graph {
    /// Build a graph from raw `(u, v, p)` triples with arbitrary node ids.
    ///
    /// Self-loops are dropped and counted. Duplicate `(u, v)` pairs collapse
    /// to one edge keeping the probability seen last. With `directed =
    /// false` every line contributes both directions. A missing probability
    /// defaults to 1.0.
    pub fn from_raw_edges(
        raw: &[(u64, u64, Option<f64>)],
        directed: bool,
    ) -> Result<(Graph, EdgeListStats)> {
        let mut stats = EdgeListStats {
            explicit_probabilities: raw.iter().any(|e| e.2.is_some()),
            ..EdgeListStats::default()
        };
        let mut last: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        let mut ids: BTreeSet<u64> = BTreeSet::new();
        for &(u, v, p) in raw {
            let p = p.unwrap_or(1.0);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invalid(format!(
                    "edge probability {p} out of [0,1] on edge {u} -> {v}"
                )));
            }
            if u == v {
                stats.self_loops_dropped += 1;
                continue;
            }
            ids.insert(u);
            ids.insert(v);
            let mut pairs = vec![(u, v)];
            if !directed {
                pairs.push((v, u));
            }
            for key in pairs {
                if last.insert(key, p).is_some() {
                    stats.duplicates_collapsed += 1;
                }
            }
        }
        let index: BTreeMap<u64, u32> = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i as u32))
            .collect();
        let n = index.len();
        if n > u32::MAX as usize {
            return Err(Error::TooLarge(format!("{n} nodes exceed u32 ids")));
        }
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (&(u, v), &p) in &last {
            let (u, v) = (index[&u], index[&v]);
            out_edges[u as usize].push((v, p));
            in_edges[v as usize].push((u, p));
        }
        for list in out_edges.iter_mut().chain(in_edges.iter_mut()) {
            list.sort_unstable_by_key(|&(w, _)| w);
        }
        Ok((
            Graph {
                out_edges,
                in_edges,
                m: last.len(),
                original_ids: ids.into_iter().collect(),
            },
            stats,
        ))
    }

    /// Build directly from dense-id edges. Panics on out-of-range endpoints,
    /// self-loops, duplicates or probabilities outside [0, 1].
    pub fn from_edges(n: usize, edges: &[(u32, u32, f64)]) -> Graph {
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        let mut keys = BTreeSet::new();
        for &(u, v, p) in edges {
            assert!((u as usize) < n && (v as usize) < n, "endpoint out of range");
            assert_ne!(u, v, "self-loop");
            assert!((0.0..=1.0).contains(&p), "probability out of [0,1]");
            assert!(keys.insert((u, v)), "duplicate edge ({u}, {v})");
            out_edges[u as usize].push((v, p));
            in_edges[v as usize].push((u, p));
        }
        for list in out_edges.iter_mut().chain(in_edges.iter_mut()) {
            list.sort_unstable_by_key(|&(w, _)| w);
        }
        Graph {
            out_edges,
            in_edges,
            m: edges.len(),
            original_ids: (0..n as u64).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.out_edges.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn out_edges(&self, v: u32) -> &[(u32, f64)] {
        &self.out_edges[v as usize]
    }

    pub fn in_edges(&self, v: u32) -> &[(u32, f64)] {
        &self.in_edges[v as usize]
    }

    pub fn in_degree(&self, v: u32) -> u32 {
        self.in_edges[v as usize].len() as u32
    }

    /// The input file's id for dense node `v`.
    pub fn original_id(&self, v: u32) -> u64 {
        self.original_ids[v as usize]
    }

    /// All edges as `(u, v, p)`, ordered by `(u, v)`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |&(v, p)| (u as u32, v, p)))
    }
}

/// Load a whitespace-separated edge list: `u v` or `u v p` per line,
/// `#`-prefixed comment lines ignored.
pub fn load_edge_list<P: AsRef<Path>>(path: P, directed: bool) -> Result<(Graph, EdgeListStats)> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let display = path.display().to_string();
    let mut raw = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut it = text.split_whitespace();
        let parse_err = |msg: String| Error::Parse {
            path: display.clone(),
            line: lineno + 1,
            msg,
        };
        let u: u64 = it
            .next()
            .ok_or_else(|| parse_err("missing source id".into()))?
            .parse()
            .map_err(|e| parse_err(format!("bad source id: {e}")))?;
        let v: u64 = it
            .next()
            .ok_or_else(|| parse_err("missing target id".into()))?
            .parse()
            .map_err(|e| parse_err(format!("bad target id: {e}")))?;
        let p = match it.next() {
            Some(tok) => {
                let p: f64 = tok
                    .parse()
                    .map_err(|e| parse_err(format!("bad probability: {e}")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(parse_err(format!("probability {p} out of [0,1]")));
                }
                Some(p)
            }
            None => None,
        };
        if it.next().is_some() {
            return Err(parse_err("trailing tokens after `u v p`".into()));
        }
        raw.push((u, v, p));
    }
    Graph::from_raw_edges(&raw, directed)
}

/// Weighted-cascade probabilities: every edge into `v` gets `1 / in_degree(v)`.
pub fn assign_wc_probabilities(g: &Graph) -> Graph {
    let mut out_edges = g.out_edges.clone();
    let mut in_edges = g.in_edges.clone();
    for list in out_edges.iter_mut() {
        for e in list.iter_mut() {
            e.1 = 1.0 / f64::from(g.in_degree(e.0));
        }
    }
    for (v, list) in in_edges.iter_mut().enumerate() {
        let p = 1.0 / f64::from(g.in_degree(v as u32));
        for e in list.iter_mut() {
            e.1 = p;
        }
    }
    Graph {
        out_edges,
        in_edges,
        m: g.m,
        original_ids: g.original_ids.clone(),
    }
}

/// A node of the virtual copy graph: base node `node` in component
/// `component`. Ordering is `(component, node)`, which is also the tie-break
/// order used by every greedy selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CopyNode {
    pub component: u32,
    pub node: u32,
}

impl CopyNode {
    pub fn new(component: u32, node: u32) -> Self {
        CopyNode { component, node }
    }
}

/// View of the copy graph made of `q` disjoint copies of `base`, one per
/// product. Kept virtual: no adjacency is ever duplicated, a copy node is
/// just a `(component, node)` pair and no edge crosses components.
#[derive(Clone, Copy)]
pub struct CopyGraph<'a> {
    pub base: &'a Graph,
    pub q: usize,
}

impl<'a> CopyGraph<'a> {
    pub fn new(base: &'a Graph, q: usize) -> Self {
        assert!(q >= 1, "copy graph needs at least one component");
        CopyGraph { base, q }
    }

    pub fn node_count(&self) -> u64 {
        self.q as u64 * self.base.n() as u64
    }

    pub fn edge_count(&self) -> u64 {
        self.q as u64 * self.base.m() as u64
    }

    /// Forward reachability between copy nodes. Distinct components are
    /// never connected.
    pub fn reachable(&self, from: CopyNode, to: CopyNode) -> bool {
        if from.component != to.component {
            return false;
        }
        let mut seen = vec![false; self.base.n()];
        let mut stack = vec![from.node];
        seen[from.node as usize] = true;
        while let Some(u) = stack.pop() {
            if u == to.node {
                return true;
            }
            for &(v, _) in self.base.out_edges(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    stack.push(v);
                }
            }
        }
        false
    }
}

/// Per-product activation costs and profits.
#[derive(Clone, Debug)]
pub struct ProductCatalog {
    profits: Vec<f64>,
    costs: Vec<f64>,
}

impl ProductCatalog {
    pub fn new(profits: Vec<f64>, costs: Vec<f64>) -> Result<Self> {
        if profits.is_empty() || profits.len() != costs.len() {
            return Err(Error::Invalid(
                "catalog needs one (profit, cost) pair per product".into(),
            ));
        }
        for (i, (&p, &c)) in profits.iter().zip(&costs).enumerate() {
            if !(p > 0.0) || !(c > 0.0) || !p.is_finite() || !c.is_finite() {
                return Err(Error::Invalid(format!(
                    "product {}: profit and cost must be positive finite, got ({p}, {c})",
                    i + 1
                )));
            }
        }
        Ok(ProductCatalog { profits, costs })
    }

    /// Load a catalog file: one `profit cost` pair per line, `#` comments
    /// ignored.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let file = File::open(path)?;
        let mut profits = Vec::new();
        let mut costs = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = text.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(Error::Parse {
                    path: display,
                    line: lineno + 1,
                    msg: format!("expected `profit cost`, got {} tokens", toks.len()),
                });
            }
            let parse = |tok: &str| -> Result<f64> {
                tok.parse().map_err(|e| Error::Parse {
                    path: display.clone(),
                    line: lineno + 1,
                    msg: format!("bad number: {e}"),
                })
            };
            profits.push(parse(toks[0])?);
            costs.push(parse(toks[1])?);
        }
        ProductCatalog::new(profits, costs)
    }

    pub fn q(&self) -> usize {
        self.profits.len()
    }

    pub fn profit(&self, i: usize) -> f64 {
        self.profits[i]
    }

    pub fn cost(&self, i: usize) -> f64 {
        self.costs[i]
    }

    pub fn profits(&self) -> &[f64] {
        &self.profits
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn p_min(&self) -> f64 {
        self.profits.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn p_max(&self) -> f64 {
        self.profits
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn c_min(&self) -> f64 {
        self.costs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Max seeds of product `i` affordable under `budget`: floor(B / c_i),
    /// evaluated in plain f64 arithmetic.
    pub fn k_i(&self, budget: f64, i: usize) -> usize {
        let k = (budget / self.costs[i]).floor();
        if k <= 0.0 {
            0
        } else {
            k.min(u32::MAX as f64) as usize
        }
    }

    /// Max seeds affordable overall: floor(B / c_min).
    pub fn k_star(&self, budget: f64) -> usize {
        let k = (budget / self.c_min()).floor();
        if k <= 0.0 {
            0
        } else {
            k.min(u32::MAX as f64) as usize
        }
    }
}

/// A per-product partition of copy-graph seeds. A base node may appear in
/// several components but at most once per component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedAssignment {
    components: Vec<BTreeSet<u32>>,
}

impl SeedAssignment {
    pub fn new(q: usize) -> Self {
        SeedAssignment {
            components: vec![BTreeSet::new(); q],
        }
    }

    pub fn from_parts(components: Vec<BTreeSet<u32>>) -> Self {
        SeedAssignment { components }
    }

    pub fn q(&self) -> usize {
        self.components.len()
    }

    /// Returns false if the copy node was already assigned.
    pub fn insert(&mut self, node: CopyNode) -> bool {
        self.components[node.component as usize].insert(node.node)
    }

    pub fn contains(&self, node: CopyNode) -> bool {
        self.components[node.component as usize].contains(&node.node)
    }

    pub fn component(&self, i: usize) -> &BTreeSet<u32> {
        &self.components[i]
    }

    pub fn total_seeds(&self) -> usize {
        self.components.iter().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.components.iter().all(BTreeSet::is_empty)
    }

    pub fn copy_nodes(&self) -> impl Iterator<Item = CopyNode> + '_ {
        self.components.iter().enumerate().flat_map(|(i, set)| {
            set.iter()
                .map(move |&v| CopyNode::new(i as u32, v))
        })
    }

    /// Total activation cost, summed component by component in index order.
    /// Budget feasibility everywhere in this crate is `cost(S) <= B` in
    /// plain f64 arithmetic, with no tolerance.
    pub fn cost(&self, catalog: &ProductCatalog) -> f64 {
        assert_eq!(
            self.components.len(),
            catalog.q(),
            "assignment has {} components but catalog has {} products",
            self.components.len(),
            catalog.q()
        );
        self.components
            .iter()
            .enumerate()
            .map(|(i, set)| catalog.cost(i) * set.len() as f64)
            .sum()
    }
}

/// Spec'd accessor form of [`SeedAssignment::cost`].
pub fn assignment_cost(s: &SeedAssignment, catalog: &ProductCatalog) -> f64 {
    s.cost(catalog)
}

/// Cost of an assignment given only per-component seed counts, in the same
/// summation order as [`SeedAssignment::cost`] so feasibility tests agree
/// bit for bit.
pub(crate) fn cost_of_counts(catalog: &ProductCatalog, counts: &[usize]) -> f64 {
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| catalog.cost(i) * c as f64)
        .sum()
}
