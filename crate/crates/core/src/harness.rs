//! Experiment harness: budget sweeps over selectable algorithms with a
//! shared-randomness final evaluation, synthetic instance generation, and
//! deterministic CSV emission.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;

use crate::baselines::{greedy_marginal, pmce, random_baseline, Estimator};
use crate::diffusion::mc_profit_detailed;
use crate::graph::{assign_wc_probabilities, CopyGraph, Graph, ProductCatalog, SeedAssignment};
use crate::ris::generate_collection;
use crate::rmg::{rmg_pipeline, RmgConfig};
use crate::rng::child_seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Algorithm {
    Rmg,
    Random,
    GreedyMc,
    Pmce,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Rmg,
        Algorithm::Random,
        Algorithm::GreedyMc,
        Algorithm::Pmce,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Rmg => "rmg",
            Algorithm::Random => "random",
            Algorithm::GreedyMc => "greedy_mc",
            Algorithm::Pmce => "pmce",
        }
    }

    pub fn parse(s: &str) -> Option<Algorithm> {
        match s {
            "rmg" => Some(Algorithm::Rmg),
            "random" => Some(Algorithm::Random),
            "greedy_mc" => Some(Algorithm::GreedyMc),
            "pmce" => Some(Algorithm::Pmce),
            _ => None,
        }
    }
}

/// How the Monte-Carlo baselines estimate marginals during selection.
#[derive(Clone, Copy, Debug)]
pub enum BaselineSelection {
    /// Cascade trials per evaluation (the classical, slow route).
    MonteCarlo,
    /// A sampled collection of this size per cell (fast, deterministic).
    Coverage { theta: u64 },
}

/// One sweep: a prepared instance, a budget grid and an algorithm set.
#[derive(Clone)]
pub struct ExperimentSpec {
    pub dataset_name: String,
    /// Graph with propagation probabilities already assigned.
    pub graph: Graph,
    pub catalog: ProductCatalog,
    /// Strictly increasing budget grid.
    pub budgets: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    /// Trials of the final shared-randomness profit evaluation.
    pub eval_trials: u64,
    pub seed: u64,
    pub rmg: RmgConfig,
    /// Trials per marginal for the Monte-Carlo baseline estimator.
    pub baseline_trials: u64,
    pub baseline_selection: BaselineSelection,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.budgets.is_empty() {
            return Err(Error::Invalid("empty budget list".into()));
        }
        if !self.budgets.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Invalid("budgets must be strictly increasing".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Invalid("no algorithms selected".into()));
        }
        if self.eval_trials == 0 || self.baseline_trials == 0 {
            return Err(Error::Invalid("trial counts must be positive".into()));
        }
        self.rmg.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RecordKind {
    Profit,
    Allocation,
    OptBound,
}

impl RecordKind {
    fn name(&self) -> &'static str {
        match self {
            RecordKind::Profit => "profit",
            RecordKind::Allocation => "allocation",
            RecordKind::OptBound => "optbound",
        }
    }
}

/// One output row; unused fields stay empty in the CSV.
#[derive(Clone, Debug, Default)]
pub struct SweepRow {
    pub record: Option<RecordKind>,
    pub algorithm: &'static str,
    pub budget: f64,
    pub product: Option<usize>,
    pub profit: Option<f64>,
    pub profit_stderr: Option<f64>,
    pub budget_spent: Option<f64>,
    pub u_star: Option<f64>,
    pub u_refined: Option<f64>,
    pub u_final: Option<f64>,
    pub theta: Option<u64>,
    pub note: Option<String>,
}

pub struct SweepResult {
    pub dataset: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    /// Wall time per `(budget, algorithm)` cell, selection plus evaluation.
    pub cell_ms: Vec<(f64, &'static str, u128)>,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str = "record,dataset,algorithm,budget,seed,product,profit,\
                                          profit_stderr,budget_spent,u_star,u_refined,u_final,theta,note";

    /// Deterministic CSV. Wall times are appended as an extra column only on
    /// request: they vary run to run, while everything else is
    /// byte-identical for a fixed spec and seed.
    pub fn to_csv(&self, include_timings: bool) -> String {
        fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or(String::new(), |x| x.to_string())
        }
        let mut out = String::new();
        out.push_str(Self::CSV_HEADER);
        if include_timings {
            out.push_str(",wall_ms");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                row.record.map_or("", |r| r.name()),
                self.dataset,
                row.algorithm,
                row.budget,
                self.seed,
                opt(&row.product),
                opt(&row.profit),
                opt(&row.profit_stderr),
                opt(&row.budget_spent),
                opt(&row.u_star),
                opt(&row.u_refined),
                opt(&row.u_final),
                opt(&row.theta),
                row.note.as_deref().unwrap_or(""),
            );
            if include_timings {
                let ms = match row.record {
                    Some(RecordKind::Profit) => self
                        .cell_ms
                        .iter()
                        .find(|(b, a, _)| *b == row.budget && *a == row.algorithm)
                        .map(|(_, _, ms)| ms.to_string())
                        .unwrap_or_default(),
                    _ => String::new(),
                };
                let _ = write!(out, ",{ms}");
            }
            out.push('\n');
        }
        out
    }
}

/// Run every `(budget, algorithm)` cell. Within one budget all algorithms'
/// selections are re-evaluated on the same Monte-Carlo streams and trial
/// count, so profit comparisons are never skewed by evaluation noise; the
/// reported profit is always this independent re-estimate, never the
/// selector's own estimator value.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cat = &spec.catalog;
    let q = cat.q();
    let cg = CopyGraph::new(&spec.graph, q);
    let mut algorithms = spec.algorithms.clone();
    algorithms.sort();
    algorithms.dedup();
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut cell_ms = Vec::new();
    for (b_idx, &budget) in spec.budgets.iter().enumerate() {
        let eval_seed = child_seed(spec.seed, "eval", b_idx as u64);
        for &alg in &algorithms {
            let select_seed = child_seed(spec.seed, alg.name(), b_idx as u64);
            let started = Instant::now();
            if cat.k_star(budget) == 0 {
                rows.push(SweepRow {
                    record: Some(RecordKind::Profit),
                    algorithm: alg.name(),
                    budget,
                    profit: Some(0.0),
                    profit_stderr: Some(0.0),
                    note: Some("infeasible: budget below cheapest product".into()),
                    ..SweepRow::default()
                });
                cell_ms.push((budget, alg.name(), started.elapsed().as_millis()));
                continue;
            }
            let mut opt_row: Option<SweepRow> = None;
            let assignment: SeedAssignment = match alg {
                Algorithm::Rmg => {
                    let mut config = spec.rmg.clone();
                    config.eval_trials = spec.eval_trials;
                    let (s, report) = rmg_pipeline(&spec.graph, cat, budget, &config, select_seed)?;
                    opt_row = Some(SweepRow {
                        record: Some(RecordKind::OptBound),
                        algorithm: alg.name(),
                        budget,
                        u_star: Some(report.u_star),
                        u_refined: Some(report.u_double_star),
                        u_final: Some(report.u_prime),
                        theta: Some(report.theta),
                        note: report.theta_capped.then(|| "theta capped".into()),
                        ..SweepRow::default()
                    });
                    s
                }
                Algorithm::Random => random_baseline(&cg, cat, budget, select_seed),
                Algorithm::GreedyMc | Algorithm::Pmce => {
                    let coverage_rc = match spec.baseline_selection {
                        BaselineSelection::MonteCarlo => None,
                        BaselineSelection::Coverage { theta } => Some(generate_collection(
                            &cg,
                            theta,
                            child_seed(select_seed, "selection-collection", 0),
                        )?),
                    };
                    let estimator = match &coverage_rc {
                        None => Estimator::MonteCarlo {
                            trials: spec.baseline_trials,
                        },
                        Some(rc) => Estimator::Coverage(rc),
                    };
                    if alg == Algorithm::GreedyMc {
                        greedy_marginal(&cg, cat, budget, estimator, select_seed)
                    } else {
                        pmce(&cg, cat, budget, estimator, select_seed)
                    }
                }
            };
            let eval = mc_profit_detailed(&cg, cat, &assignment, spec.eval_trials, eval_seed);
            rows.push(SweepRow {
                record: Some(RecordKind::Profit),
                algorithm: alg.name(),
                budget,
                profit: Some(eval.profit),
                profit_stderr: Some(eval.stderr),
                ..SweepRow::default()
            });
            for i in 0..q {
                rows.push(SweepRow {
                    record: Some(RecordKind::Allocation),
                    algorithm: alg.name(),
                    budget,
                    product: Some(i + 1),
                    profit: Some(eval.per_product[i]),
                    budget_spent: Some(cat.cost(i) * assignment.component(i).len() as f64),
                    ..SweepRow::default()
                });
            }
            if let Some(r) = opt_row {
                rows.push(r);
            }
            cell_ms.push((budget, alg.name(), started.elapsed().as_millis()));
        }
    }
    rows.sort_by(|a, b| {
        a.budget
            .total_cmp(&b.budget)
            .then_with(|| a.algorithm.cmp(b.algorithm))
            .then_with(|| a.record.cmp(&b.record))
            .then_with(|| a.product.cmp(&b.product))
    });
    Ok(SweepResult {
        dataset: spec.dataset_name.clone(),
        seed: spec.seed,
        rows,
        cell_ms,
    })
}

/// Random directed graph with expected average out-degree `avg_degree`:
/// every ordered pair is an edge independently with `avg_degree / (n - 1)`,
/// sampled by geometric gap-skipping, then weighted-cascade probabilities.
/// Deterministic per seed.
pub fn gen_synthetic(n: usize, avg_degree: f64, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::Invalid("need at least one node".into()));
    }
    let pairs = n as u64 * (n as u64 - 1);
    let p = if n > 1 {
        avg_degree / (n as f64 - 1.0)
    } else {
        0.0
    };
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!(
            "average degree {avg_degree} out of range for {n} nodes"
        )));
    }
    let mut edges: Vec<(u32, u32, f64)> = Vec::new();
    if p > 0.0 {
        let mut rng = crate::rng::stream_rng(seed, 0);
        let log1p = (1.0 - p).ln();
        let mut cell: u64 = 0;
        while cell < pairs {
            // gap to the next selected pair
            if p < 1.0 {
                let u: f64 = rng.gen::<f64>();
                let skip = ((1.0 - u).ln() / log1p).floor() as u64;
                cell = cell.saturating_add(skip);
                if cell >= pairs {
                    break;
                }
            }
            let u = (cell / (n as u64 - 1)) as u32;
            let off = (cell % (n as u64 - 1)) as u32;
            let v = if off < u { off } else { off + 1 };
            edges.push((u, v, 0.0));
            cell += 1;
        }
    }
    let g = Graph::from_edges(n, &edges);
    Ok(assign_wc_probabilities(&g))
}

/// Write a graph as a loadable edge list (`u v p` per line, original ids).
/// Nodes with no incident edges do not appear.
pub fn write_edge_list<W: std::io::Write>(g: &Graph, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# directed edge list: {} nodes, {} edges", g.n(), g.m())?;
    for (u, v, p) in g.edges() {
        writeln!(w, "{} {} {}", g.original_id(u), g.original_id(v), p)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::exact_spread_table;
    use crate::graph::Graph;
    use crate::optbound::MatrixMode;
    use crate::rmg::GreedyMode;

    fn tiny_spec() -> ExperimentSpec {
        let graph = assign_wc_probabilities(&Graph::from_edges(
            3,
            &[(0, 1, 0.0), (1, 2, 0.0)],
        ));
        ExperimentSpec {
            dataset_name: "tiny".into(),
            graph,
            catalog: ProductCatalog::new(vec![1.0, 2.0], vec![1.0, 2.0]).unwrap(),
            budgets: vec![1.0],
            algorithms: vec![Algorithm::Random],
            eval_trials: 500,
            seed: 7,
            rmg: RmgConfig {
                eps: 0.4,
                eps_prime: 0.4,
                eps_bar: 0.4,
                theta_eval: 1000,
                mode: GreedyMode::Fast,
                matrix_mode: MatrixMode::Prefix,
                ..RmgConfig::default()
            },
            baseline_trials: 100,
            baseline_selection: BaselineSelection::Coverage { theta: 5_000 },
        }
    }

    #[test]
    fn single_cell_emits_profit_plus_allocation_rows() {
        let result = run_sweep(&tiny_spec()).unwrap();
        let profits: Vec<_> = result
            .rows
            .iter()
            .filter(|r| r.record == Some(RecordKind::Profit))
            .collect();
        let allocs: Vec<_> = result
            .rows
            .iter()
            .filter(|r| r.record == Some(RecordKind::Allocation))
            .collect();
        assert_eq!(profits.len(), 1);
        assert_eq!(allocs.len(), 2);
        assert!(allocs.iter().all(|r| r.budget_spent.is_some()));
        let csv = result.to_csv(false);
        assert!(csv.starts_with(SweepResult::CSV_HEADER));
        assert_eq!(csv.lines().count(), 1 + result.rows.len());
    }

    #[test]
    fn rmg_cells_emit_bound_rows_and_infeasible_budgets_annotate() {
        let mut spec = tiny_spec();
        spec.budgets = vec![0.5, 1.0];
        spec.algorithms = vec![Algorithm::Rmg];
        let result = run_sweep(&spec).unwrap();
        let infeasible: Vec<_> = result
            .rows
            .iter()
            .filter(|r| r.budget == 0.5)
            .collect();
        assert_eq!(infeasible.len(), 1);
        assert_eq!(infeasible[0].profit, Some(0.0));
        assert!(infeasible[0].note.as_deref().unwrap().contains("infeasible"));
        let bound: Vec<_> = result
            .rows
            .iter()
            .filter(|r| r.record == Some(RecordKind::OptBound))
            .collect();
        assert_eq!(bound.len(), 1);
        assert!(bound[0].u_final.unwrap() >= bound[0].u_star.unwrap());
        assert!(bound[0].theta.is_some());
    }

    #[test]
    fn sweep_csv_is_reproducible() {
        let mut spec = tiny_spec();
        spec.algorithms = vec![Algorithm::Random, Algorithm::GreedyMc, Algorithm::Pmce];
        let a = run_sweep(&spec).unwrap().to_csv(false);
        let b = run_sweep(&spec).unwrap().to_csv(false);
        assert_eq!(a, b);
        // timings column excluded from the deterministic output
        assert!(!a.contains("wall_ms"));
        assert!(run_sweep(&spec).unwrap().to_csv(true).contains("wall_ms"));
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut spec = tiny_spec();
        spec.budgets = vec![2.0, 1.0];
        assert!(run_sweep(&spec).is_err());
        let mut spec = tiny_spec();
        spec.budgets.clear();
        assert!(run_sweep(&spec).is_err());
        let mut spec = tiny_spec();
        spec.algorithms.clear();
        assert!(run_sweep(&spec).is_err());
    }

    #[test]
    fn synthetic_generator_examples() {
        let g = gen_synthetic(10, 0.0, 1).unwrap();
        assert_eq!((g.n(), g.m()), (10, 0));

        let g = gen_synthetic(1000, 4.0, 2).unwrap();
        let m = g.m() as f64;
        assert!((m - 4000.0).abs() < 200.0, "m = {m}");

        let a = gen_synthetic(200, 3.0, 3).unwrap();
        let b = gen_synthetic(200, 3.0, 3).unwrap();
        let ea: Vec<_> = a.edges().collect();
        let eb: Vec<_> = b.edges().collect();
        assert_eq!(ea, eb);
        assert!(gen_synthetic(0, 1.0, 1).is_err());
        assert!(gen_synthetic(5, 9.0, 1).is_err());
    }

    #[test]
    fn edge_list_round_trips_through_writer() {
        let g = gen_synthetic(50, 2.0, 9).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(tmp.path(), &buf).unwrap();
        let (loaded, stats) = crate::graph::load_edge_list(tmp.path(), true).unwrap();
        assert!(stats.explicit_probabilities);
        assert_eq!(loaded.m(), g.m());
        let a: Vec<_> = g.edges().collect();
        let b: Vec<_> = loaded
            .edges()
            .map(|(u, v, p)| (loaded.original_id(u) as u32, loaded.original_id(v) as u32, p))
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_profit_is_nondecreasing_in_budget_for_greedy_family() {
        let graph = assign_wc_probabilities(&Graph::from_edges(
            6,
            &[
                (0, 1, 0.0),
                (1, 2, 0.0),
                (2, 3, 0.0),
                (3, 0, 0.0),
                (4, 0, 0.0),
                (5, 4, 0.0),
            ],
        ));
        let cat = ProductCatalog::new(vec![1.0, 2.0], vec![1.0, 2.0]).unwrap();
        let table = exact_spread_table(&graph).unwrap();
        let exact_profit = |s: &SeedAssignment| -> f64 {
            (0..2)
                .map(|i| cat.profit(i) * table.spread_set(s.component(i)))
                .sum()
        };
        let budgets = [1.0, 2.0, 3.0];
        for alg in [Algorithm::Rmg, Algorithm::GreedyMc, Algorithm::Pmce] {
            let mut means = Vec::new();
            for &b in &budgets {
                let mut total = 0.0;
                for seed in 0..12u64 {
                    let mut spec = tiny_spec();
                    spec.graph = graph.clone();
                    spec.catalog = cat.clone();
                    spec.budgets = vec![b];
                    spec.algorithms = vec![alg];
                    spec.seed = seed;
                    // evaluate selections exactly to isolate selection noise
                    let cg = CopyGraph::new(&spec.graph, 2);
                    let s = match alg {
                        Algorithm::Rmg => {
                            rmg_pipeline(&spec.graph, &cat, b, &spec.rmg, seed).unwrap().0
                        }
                        Algorithm::GreedyMc => {
                            let rc = generate_collection(&cg, 20_000, seed).unwrap();
                            greedy_marginal(&cg, &cat, b, Estimator::Coverage(&rc), seed)
                        }
                        Algorithm::Pmce => {
                            let rc = generate_collection(&cg, 20_000, seed).unwrap();
                            pmce(&cg, &cat, b, Estimator::Coverage(&rc), seed)
                        }
                        Algorithm::Random => unreachable!(),
                    };
                    total += exact_profit(&s);
                }
                means.push(total / 12.0);
            }
            assert!(
                means.windows(2).all(|w| w[1] >= w[0] - 1e-9),
                "{alg:?}: {means:?}"
            );
        }
    }
}
