//! Reverse-reachable set sampling over the copy graph, coverage indexing,
//! the coverage-based profit estimator and the sample-count formula.
//!
//! A sample is drawn by picking a uniform copy node as root and walking the
//! base graph's in-edges backwards, keeping each encountered edge with its
//! propagation probability. Seeds that intersect a sampled set would have
//! activated its root, so coverage fractions estimate spreads: for a set
//! `S_i` inside component `i`, `E[n*q*F(S_i)] = sigma(S_i)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::exec;
use crate::graph::{CopyGraph, CopyNode, Graph, ProductCatalog, SeedAssignment};
use crate::rng::stream_rng;
use crate::{Error, Result};

const SET_CHUNK: u64 = 4096;
const MAGIC: &[u8; 8] = b"RRCOLL1\0";

/// One sampled reverse-reachable set, tagged with the component its root
/// copy node lives in. `nodes` are base-node ids, sorted ascending, always
/// containing `root`. `width` counts the copy-graph edges pointing into the
/// set, i.e. the in-degrees of its nodes; it is the coin-flip cost of having
/// sampled the set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RRSet {
    pub component: u32,
    pub root: u32,
    pub nodes: Vec<u32>,
    pub width: u64,
}

impl RRSet {
    /// Build a set by hand, computing the width from the graph.
    pub fn from_nodes(g: &Graph, component: u32, root: u32, mut nodes: Vec<u32>) -> RRSet {
        nodes.sort_unstable();
        nodes.dedup();
        assert!(nodes.binary_search(&root).is_ok(), "root must be in nodes");
        let width = nodes.iter().map(|&v| u64::from(g.in_degree(v))).sum();
        RRSet {
            component,
            root,
            nodes,
            width,
        }
    }
}

struct ReverseBfs {
    stamp: Vec<u32>,
    epoch: u32,
    queue: Vec<u32>,
}

impl ReverseBfs {
    fn new(n: usize) -> Self {
        ReverseBfs {
            stamp: vec![0; n],
            epoch: 0,
            queue: Vec::new(),
        }
    }

    /// Reverse BFS from `root`, flipping each encountered in-edge once.
    /// Fills `nodes` (sorted ascending) and returns the width.
    fn run<R: Rng>(&mut self, g: &Graph, root: u32, rng: &mut R, nodes: &mut Vec<u32>) -> u64 {
        if self.epoch == u32::MAX {
            self.stamp.fill(0);
            self.epoch = 0;
        }
        self.epoch += 1;
        let e = self.epoch;
        self.queue.clear();
        self.queue.push(root);
        self.stamp[root as usize] = e;
        let mut width = u64::from(g.in_degree(root));
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            for &(u, p) in g.in_edges(v) {
                if self.stamp[u as usize] != e && rng.gen::<f64>() < p {
                    self.stamp[u as usize] = e;
                    self.queue.push(u);
                    width += u64::from(g.in_degree(u));
                }
            }
        }
        nodes.clear();
        nodes.extend_from_slice(&self.queue);
        nodes.sort_unstable();
        width
    }
}

/// Sample one set rooted at a uniform copy node: component uniform in
/// `[0, q)`, then base node uniform in `[0, n)`, which is uniform over all
/// `n*q` copy nodes.
pub fn generate_rr_set<R: Rng>(cg: &CopyGraph, rng: &mut R) -> RRSet {
    let component = rng.gen_range(0..cg.q as u32);
    let node = rng.gen_range(0..cg.base.n() as u32);
    generate_rr_set_from(cg, CopyNode::new(component, node), rng)
}

/// Sample one set from a fixed root copy node (test hook; the public
/// sampler draws the root first from the same stream).
pub fn generate_rr_set_from<R: Rng>(cg: &CopyGraph, root: CopyNode, rng: &mut R) -> RRSet {
    let mut bfs = ReverseBfs::new(cg.base.n());
    let mut nodes = Vec::new();
    let width = bfs.run(cg.base, root.node, rng, &mut nodes);
    RRSet {
        component: root.component,
        root: root.node,
        nodes,
        width,
    }
}

/// An indexed collection of sampled sets. Stored flat: per-set node lists in
/// one arena plus an inverted index from `(component, base node)` to the ids
/// of the sets containing it, both in ascending order.
pub struct RRCollection {
    n: u32,
    q: u32,
    theta: u64,
    set_offsets: Vec<u32>,
    set_nodes: Vec<u32>,
    set_component: Vec<u16>,
    set_root: Vec<u32>,
    set_width: Vec<u32>,
    idx_offsets: Vec<u32>,
    idx_sets: Vec<u32>,
}

/// Borrowed view of one set inside a collection.
#[derive(Clone, Copy, Debug)]
pub struct RRSetRef<'a> {
    pub component: u32,
    pub root: u32,
    pub width: u64,
    pub nodes: &'a [u32],
}

impl RRCollection {
    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn q(&self) -> usize {
        self.q as usize
    }

    pub fn theta(&self) -> u64 {
        self.theta
    }

    pub fn set(&self, id: u32) -> RRSetRef<'_> {
        let lo = self.set_offsets[id as usize] as usize;
        let hi = self.set_offsets[id as usize + 1] as usize;
        RRSetRef {
            component: u32::from(self.set_component[id as usize]),
            root: self.set_root[id as usize],
            width: u64::from(self.set_width[id as usize]),
            nodes: &self.set_nodes[lo..hi],
        }
    }

    pub fn sets(&self) -> impl Iterator<Item = RRSetRef<'_>> + '_ {
        (0..self.theta as u32).map(|id| self.set(id))
    }

    /// Ids of the sets containing `(component, node)`, ascending.
    pub fn covering_sets(&self, component: u32, node: u32) -> &[u32] {
        let key = component as usize * self.n as usize + node as usize;
        let lo = self.idx_offsets[key] as usize;
        let hi = self.idx_offsets[key + 1] as usize;
        &self.idx_sets[lo..hi]
    }

    pub fn mean_width(&self) -> f64 {
        let total: u64 = self.set_width.iter().map(|&w| u64::from(w)).sum();
        total as f64 / self.theta as f64
    }

    /// Per-product estimator scale `n * q * p_i / theta`: the profit
    /// estimate is this scale times the covered-set count. Every estimator
    /// in the crate multiplies counts by these exact values so that equal
    /// counts compare equal.
    pub fn scales(&self, cat: &ProductCatalog) -> Vec<f64> {
        assert_eq!(self.q as usize, cat.q(), "collection/catalog q mismatch");
        let nq = self.n as f64 * self.q as f64;
        cat.profits()
            .iter()
            .map(|&p| nq * p / self.theta as f64)
            .collect()
    }

    /// Number of sets in component `component` hit by `nodes`.
    pub fn coverage_count<I: IntoIterator<Item = u32>>(&self, component: u32, nodes: I) -> u64 {
        let mut ids: Vec<u32> = Vec::new();
        for v in nodes {
            ids.extend_from_slice(self.covering_sets(component, v));
        }
        ids.sort_unstable();
        ids.dedup();
        ids.len() as u64
    }

    /// Fraction of the whole collection covered by `nodes` inside one
    /// component. Sets of other components are never hit (seeds of product
    /// `i` live in component `i`), but the denominator is always `theta`.
    pub fn coverage_fraction<I: IntoIterator<Item = u32>>(&self, component: u32, nodes: I) -> f64 {
        assert!(self.theta > 0);
        self.coverage_count(component, nodes) as f64 / self.theta as f64
    }

    /// Unbiased profit estimate `sum_i n*q*p_i*F(S_i)`.
    pub fn profit_estimate(&self, cat: &ProductCatalog, s: &SeedAssignment) -> f64 {
        assert_eq!(s.q(), cat.q(), "assignment/catalog q mismatch");
        let scales = self.scales(cat);
        (0..cat.q())
            .map(|i| {
                scales[i] * self.coverage_count(i as u32, s.component(i).iter().copied()) as f64
            })
            .sum()
    }

    /// Assemble a collection from explicit sets (mainly for tests and the
    /// cache loader). Validates component/node ranges and root membership.
    pub fn from_sets(n: usize, q: usize, sets: Vec<RRSet>) -> Result<RRCollection> {
        if sets.is_empty() {
            return Err(Error::Invalid("a collection needs at least one set".into()));
        }
        if n == 0 || q == 0 || n > u32::MAX as usize || q > u16::MAX as usize {
            return Err(Error::Invalid(format!("bad collection shape n={n} q={q}")));
        }
        let theta = sets.len() as u64;
        if theta > u32::MAX as u64 {
            return Err(Error::TooLarge("more than u32::MAX sets".into()));
        }
        let mut set_offsets = Vec::with_capacity(sets.len() + 1);
        let mut set_nodes = Vec::new();
        let mut set_component = Vec::with_capacity(sets.len());
        let mut set_root = Vec::with_capacity(sets.len());
        let mut set_width = Vec::with_capacity(sets.len());
        set_offsets.push(0u32);
        for s in &sets {
            if s.component as usize >= q {
                return Err(Error::Invalid(format!(
                    "set component {} out of range",
                    s.component
                )));
            }
            if s.nodes.iter().any(|&v| v as usize >= n) {
                return Err(Error::Invalid("set node out of range".into()));
            }
            if !s.nodes.contains(&s.root) {
                return Err(Error::Invalid("set root not among its nodes".into()));
            }
            if s.width > u32::MAX as u64 {
                return Err(Error::TooLarge("set width exceeds u32".into()));
            }
            let mut nodes = s.nodes.clone();
            nodes.sort_unstable();
            set_nodes.extend_from_slice(&nodes);
            if set_nodes.len() > u32::MAX as usize {
                return Err(Error::TooLarge("collection node arena exceeds u32".into()));
            }
            set_offsets.push(set_nodes.len() as u32);
            set_component.push(s.component as u16);
            set_root.push(s.root);
            set_width.push(s.width as u32);
        }
        Ok(Self::assemble(
            n as u32,
            q as u32,
            theta,
            set_offsets,
            set_nodes,
            set_component,
            set_root,
            set_width,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        n: u32,
        q: u32,
        theta: u64,
        set_offsets: Vec<u32>,
        set_nodes: Vec<u32>,
        set_component: Vec<u16>,
        set_root: Vec<u32>,
        set_width: Vec<u32>,
    ) -> RRCollection {
        let keys = n as usize * q as usize;
        let mut counts = vec![0u32; keys + 1];
        for id in 0..theta as usize {
            let comp = set_component[id] as usize;
            let lo = set_offsets[id] as usize;
            let hi = set_offsets[id + 1] as usize;
            for &v in &set_nodes[lo..hi] {
                counts[comp * n as usize + v as usize + 1] += 1;
            }
        }
        for k in 0..keys {
            counts[k + 1] += counts[k];
        }
        let idx_offsets = counts;
        let mut cursor = idx_offsets.clone();
        let mut idx_sets = vec![0u32; set_nodes.len()];
        for id in 0..theta as usize {
            let comp = set_component[id] as usize;
            let lo = set_offsets[id] as usize;
            let hi = set_offsets[id + 1] as usize;
            for &v in &set_nodes[lo..hi] {
                let key = comp * n as usize + v as usize;
                idx_sets[cursor[key] as usize] = id as u32;
                cursor[key] += 1;
            }
        }
        RRCollection {
            n,
            q,
            theta,
            set_offsets,
            set_nodes,
            set_component,
            set_root,
            set_width,
            idx_offsets,
            idx_sets,
        }
    }

    /// Binary dump: magic, `n`, `q`, `theta`, then per set component, root,
    /// width and the length-prefixed node list, all little-endian.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.n.to_le_bytes())?;
        w.write_all(&self.q.to_le_bytes())?;
        w.write_all(&self.theta.to_le_bytes())?;
        for id in 0..self.theta as u32 {
            let s = self.set(id);
            w.write_all(&(s.component as u16).to_le_bytes())?;
            w.write_all(&s.root.to_le_bytes())?;
            w.write_all(&(s.width as u32).to_le_bytes())?;
            w.write_all(&(s.nodes.len() as u32).to_le_bytes())?;
            for &v in s.nodes {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn dump_to_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.dump(BufWriter::new(File::create(path)?))
    }

    pub fn load<R: Read>(mut r: R) -> Result<RRCollection> {
        fn read_exact<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
            let mut buf = [0u8; K];
            r.read_exact(&mut buf)
                .map_err(|e| Error::Cache(format!("truncated: {e}")))?;
            Ok(buf)
        }
        let magic = read_exact::<8>(&mut r)?;
        if &magic != MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let n = u32::from_le_bytes(read_exact::<4>(&mut r)?);
        let q = u32::from_le_bytes(read_exact::<4>(&mut r)?);
        let theta = u64::from_le_bytes(read_exact::<8>(&mut r)?);
        if n == 0 || q == 0 || theta == 0 || theta > u32::MAX as u64 {
            return Err(Error::Cache(format!("bad header n={n} q={q} theta={theta}")));
        }
        let mut set_offsets = Vec::with_capacity(theta as usize + 1);
        set_offsets.push(0u32);
        let mut set_nodes = Vec::new();
        let mut set_component = Vec::with_capacity(theta as usize);
        let mut set_root = Vec::with_capacity(theta as usize);
        let mut set_width = Vec::with_capacity(theta as usize);
        for _ in 0..theta {
            let comp = u16::from_le_bytes(read_exact::<2>(&mut r)?);
            if u32::from(comp) >= q {
                return Err(Error::Cache("component out of range".into()));
            }
            let root = u32::from_le_bytes(read_exact::<4>(&mut r)?);
            let width = u32::from_le_bytes(read_exact::<4>(&mut r)?);
            let len = u32::from_le_bytes(read_exact::<4>(&mut r)?);
            let mut prev: Option<u32> = None;
            let mut seen_root = false;
            for _ in 0..len {
                let v = u32::from_le_bytes(read_exact::<4>(&mut r)?);
                if v >= n || prev.is_some_and(|p| p >= v) {
                    return Err(Error::Cache("node list not sorted in range".into()));
                }
                seen_root |= v == root;
                prev = Some(v);
                set_nodes.push(v);
            }
            if !seen_root {
                return Err(Error::Cache("root missing from node list".into()));
            }
            if set_nodes.len() > u32::MAX as usize {
                return Err(Error::TooLarge("collection node arena exceeds u32".into()));
            }
            set_offsets.push(set_nodes.len() as u32);
            set_component.push(comp);
            set_root.push(root);
            set_width.push(width);
        }
        let mut tail = [0u8; 1];
        if r.read(&mut tail).map_err(|e| Error::Cache(e.to_string()))? != 0 {
            return Err(Error::Cache("trailing bytes".into()));
        }
        Ok(Self::assemble(
            n,
            q,
            theta,
            set_offsets,
            set_nodes,
            set_component,
            set_root,
            set_width,
        ))
    }

    pub fn load_from_path<P: AsRef<Path>>(path: P) -> Result<RRCollection> {
        Self::load(BufReader::new(File::open(path)?))
    }
}

/// Generate `theta` independent sets over the copy graph. Set `t` uses
/// stream `t` of `seed`, so the collection is identical for any worker
/// count; chunks only batch allocation.
pub fn generate_collection(cg: &CopyGraph, theta: u64, seed: u64) -> Result<RRCollection> {
    if theta == 0 {
        return Err(Error::Invalid("theta must be at least 1".into()));
    }
    if theta > u32::MAX as u64 {
        return Err(Error::TooLarge(format!("theta {theta} exceeds u32 set ids")));
    }
    let n = cg.base.n();
    if n == 0 {
        return Err(Error::Invalid("graph has no nodes".into()));
    }
    struct Chunk {
        offsets: Vec<u32>,
        nodes: Vec<u32>,
        component: Vec<u16>,
        root: Vec<u32>,
        width: Vec<u32>,
    }
    let q = cg.q as u32;
    let base = cg.base;
    let chunks = exec::map_chunks(theta, SET_CHUNK, |start, len| {
        let mut bfs = ReverseBfs::new(n);
        let mut chunk = Chunk {
            offsets: Vec::with_capacity(len as usize),
            nodes: Vec::new(),
            component: Vec::with_capacity(len as usize),
            root: Vec::with_capacity(len as usize),
            width: Vec::with_capacity(len as usize),
        };
        let mut scratch = Vec::new();
        for t in start..start + len {
            let mut rng = stream_rng(seed, t);
            let component = rng.gen_range(0..q);
            let root = rng.gen_range(0..n as u32);
            let width = bfs.run(base, root, &mut rng, &mut scratch);
            chunk.nodes.extend_from_slice(&scratch);
            chunk.offsets.push(chunk.nodes.len() as u32);
            chunk.component.push(component as u16);
            chunk.root.push(root);
            chunk.width.push(width.min(u64::from(u32::MAX)) as u32);
        }
        chunk
    });
    let mut set_offsets = Vec::with_capacity(theta as usize + 1);
    set_offsets.push(0u32);
    let mut set_nodes = Vec::new();
    let mut set_component = Vec::with_capacity(theta as usize);
    let mut set_root = Vec::with_capacity(theta as usize);
    let mut set_width = Vec::with_capacity(theta as usize);
    for chunk in chunks {
        let base_off = set_nodes.len() as u64;
        if base_off + chunk.nodes.len() as u64 > u64::from(u32::MAX) {
            return Err(Error::TooLarge(
                "collection node arena exceeds u32 offsets; lower theta".into(),
            ));
        }
        set_nodes.extend_from_slice(&chunk.nodes);
        for off in chunk.offsets {
            set_offsets.push(base_off as u32 + off);
        }
        set_component.extend_from_slice(&chunk.component);
        set_root.extend_from_slice(&chunk.root);
        set_width.extend_from_slice(&chunk.width);
    }
    Ok(RRCollection::assemble(
        n as u32,
        q,
        theta,
        set_offsets,
        set_nodes,
        set_component,
        set_root,
        set_width,
    ))
}

/// Incremental coverage bookkeeping for greedy selection: which sets the
/// current assignment already covers, with per-component covered counts.
/// Reset is O(1) via epoch stamps, so exhaustive greedy restarts are cheap.
pub struct CoverageState {
    stamp: Vec<u32>,
    epoch: u32,
    per_component: Vec<u64>,
    total: u64,
}

impl CoverageState {
    pub fn new(rc: &RRCollection) -> Self {
        CoverageState {
            stamp: vec![0; rc.theta as usize],
            epoch: 0,
            per_component: vec![0; rc.q as usize],
            total: 0,
        }
    }

    pub fn reset(&mut self) {
        if self.epoch == u32::MAX {
            self.stamp.fill(0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.per_component.fill(0);
        self.total = 0;
    }

    pub fn total_covered(&self) -> u64 {
        self.total
    }

    pub fn covered_count(&self, component: u32) -> u64 {
        self.per_component[component as usize]
    }

    /// Sets newly covered if `node` were added; no state change.
    pub fn gain_count(&self, rc: &RRCollection, node: CopyNode) -> u64 {
        rc.covering_sets(node.component, node.node)
            .iter()
            .filter(|&&id| self.stamp[id as usize] != self.epoch)
            .count() as u64
    }

    /// Add `node`: mark its sets covered, returning how many were new.
    pub fn commit(&mut self, rc: &RRCollection, node: CopyNode) -> u64 {
        let mut new = 0;
        for &id in rc.covering_sets(node.component, node.node) {
            if self.stamp[id as usize] != self.epoch {
                self.stamp[id as usize] = self.epoch;
                new += 1;
            }
        }
        self.per_component[node.component as usize] += new;
        self.total += new;
        new
    }

    /// Reset and replay a whole assignment.
    pub fn sync_to(&mut self, rc: &RRCollection, s: &SeedAssignment) {
        self.reset();
        for node in s.copy_nodes() {
            self.commit(rc, node);
        }
    }

    /// Profit estimate of the synced assignment.
    pub fn rho_hat(&self, rc: &RRCollection, cat: &ProductCatalog) -> f64 {
        let scales = rc.scales(cat);
        scales
            .iter()
            .enumerate()
            .map(|(i, &sc)| sc * self.per_component[i] as f64)
            .sum()
    }
}

/// Marginal profit-estimate gain of adding `candidate` to the assignment the
/// state is synced to: `rho_hat(S + v) - rho_hat(S)` in time proportional to
/// the candidate's covering-set list.
pub fn marginal_gain(
    rc: &RRCollection,
    cat: &ProductCatalog,
    s: &SeedAssignment,
    candidate: CopyNode,
    state: &CoverageState,
) -> f64 {
    if s.contains(candidate) {
        return 0.0;
    }
    let scales = rc.scales(cat);
    scales[candidate.component as usize] * state.gain_count(rc, candidate) as f64
}

/// `ln C(n, k)` by summing `ln((n - j + 1) / j)`; no overflow for any size.
pub fn log_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n, "binomial needs k <= n");
    (1..=k).map(|j| (((n - j + 1) as f64) / j as f64).ln()).sum()
}

/// The sample-count numerator
/// `(8q + 2*eps) * n * q^2 * p_max * (l*ln(nq) + ln(2qk*) + ln C(nq, k*)) / eps^2`.
/// When `k*` exceeds `nq/2` the binomial term is replaced by the `2^(nq)`
/// bound on the number of feasible sets, which is never smaller.
pub fn lambda(n: usize, q: usize, p_max: f64, k_star: usize, eps: f64, l: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Invalid(format!("eps must be in (0,1), got {eps}")));
    }
    if !(l > 0.0) {
        return Err(Error::Invalid(format!("l must be positive, got {l}")));
    }
    if k_star == 0 {
        return Err(Error::Infeasible(
            "budget below cheapest product: no seed affordable".into(),
        ));
    }
    let nq = n as u64 * q as u64;
    let log_sets = if (k_star as u64) <= nq / 2 {
        log_binomial(nq, k_star as u64)
    } else {
        nq as f64 * std::f64::consts::LN_2
    };
    let logs = l * (nq as f64).ln() + (2.0 * q as f64 * k_star as f64).ln() + log_sets;
    Ok((8.0 * q as f64 + 2.0 * eps) * n as f64 * (q * q) as f64 * p_max * logs / (eps * eps))
}

/// Sets needed for the additive-error guarantee given a positive lower bound
/// `opt_lower_bound` on the optimum: `ceil(lambda / u)`.
pub fn required_theta(
    n: usize,
    q: usize,
    cat: &ProductCatalog,
    budget: f64,
    eps: f64,
    l: f64,
    opt_lower_bound: f64,
) -> Result<u64> {
    if !(opt_lower_bound > 0.0) {
        return Err(Error::Invalid(format!(
            "OPT lower bound must be positive, got {opt_lower_bound}"
        )));
    }
    let lam = lambda(n, q, cat.p_max(), cat.k_star(budget), eps, l)?;
    Ok((lam / opt_lower_bound).ceil().max(1.0) as u64)
}
