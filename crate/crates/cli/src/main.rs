//! Command line for budgeted multi-product influence maximization: budget
//! sweeps, optimum lower-bound reports, exhaustive tiny-instance optima,
//! synthetic instance generation and sampled-collection caching.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use profitmax::diffusion::exact_opt;
use profitmax::graph::{
    assign_wc_probabilities, load_edge_list, CopyGraph, Graph, ProductCatalog,
};
use profitmax::harness::{
    gen_synthetic, run_sweep, write_edge_list, Algorithm, BaselineSelection, ExperimentSpec,
};
use profitmax::optbound::{build_profit_matrix, opt_estimation, refine_opt, MatrixMode};
use profitmax::ris::{generate_collection, required_theta, RRCollection};
use profitmax::rmg::{failure_split_l, GreedyMode, RmgConfig};
use profitmax::rng::child_seed;

#[derive(Parser)]
#[command(name = "profitmax", version, about)]
struct Cli {
    /// Worker threads for the parallel kernels (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a budget sweep over the selected algorithms and emit CSV.
    Run(RunArgs),
    /// Report the optimum lower bounds (first and refined) per budget.
    OptBound(OptBoundArgs),
    /// Exhaustive optimum of a tiny instance (enumeration oracle).
    Oracle(OracleArgs),
    /// Generate a synthetic random digraph as an edge list.
    Gen(GenArgs),
    /// Sample a reverse-reachable collection to a cache file, or inspect one.
    RrCache(RrCacheArgs),
}

#[derive(Args)]
struct InstanceArgs {
    /// Edge list: `u v` or `u v p` per line, `#` comments ignored.
    #[arg(long)]
    dataset: PathBuf,
    /// Treat each line as an undirected edge (two arcs, doubling m).
    #[arg(long)]
    undirected: bool,
    /// Product catalog: one `profit cost` pair per line.
    #[arg(long)]
    catalog: PathBuf,
}

impl InstanceArgs {
    /// Load graph and catalog. Edge lists without an explicit probability
    /// column get weighted-cascade probabilities `1/in_degree`.
    fn load(&self) -> anyhow::Result<(String, Graph, ProductCatalog)> {
        let (graph, stats) = load_edge_list(&self.dataset, !self.undirected)
            .with_context(|| format!("loading {}", self.dataset.display()))?;
        if stats.self_loops_dropped > 0 || stats.duplicates_collapsed > 0 {
            log::info!(
                "dropped {} self-loops, collapsed {} duplicate edges",
                stats.self_loops_dropped,
                stats.duplicates_collapsed
            );
        }
        let graph = if stats.explicit_probabilities {
            graph
        } else {
            log::info!("no probability column: assigning weighted-cascade probabilities");
            assign_wc_probabilities(&graph)
        };
        let catalog = ProductCatalog::load(&self.catalog)
            .with_context(|| format!("loading {}", self.catalog.display()))?;
        let name = self
            .dataset
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Ok((name, graph, catalog))
    }
}

#[derive(Args)]
struct KnobArgs {
    /// Estimator accuracy for the main sample.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Accuracy of the per-product bound runs.
    #[arg(long, default_value_t = 0.1)]
    eps_prime: f64,
    /// Accuracy of the bound-refinement sample.
    #[arg(long, default_value_t = 0.1)]
    eps_bar: f64,
    /// Failure exponent of the main estimator union bound.
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    /// Failure exponent of the per-product bound runs.
    #[arg(long, default_value_t = 1.0)]
    l_prime: f64,
    /// Overall success probability target; sets l and l' and overrides them.
    #[arg(long)]
    success_prob: Option<f64>,
    /// Hard cap on the main sample size (binding it voids the guarantee).
    #[arg(long, default_value_t = 100_000_000)]
    theta_cap: u64,
    /// Size of the independent bound-evaluation collection.
    #[arg(long, default_value_t = 100_000)]
    theta_eval: u64,
    /// Profit-matrix construction: prefix | literal.
    #[arg(long, default_value = "prefix")]
    matrix_mode: String,
}

impl KnobArgs {
    fn rmg_config(&self, n: usize, q: usize, mode: GreedyMode) -> anyhow::Result<RmgConfig> {
        let (l, l_prime) = match self.success_prob {
            Some(p) => {
                if !(p > 0.0 && p < 1.0) {
                    bail!("--success-prob must be in (0,1)");
                }
                failure_split_l(n, q, 1.0 - p)
            }
            None => (self.l, self.l_prime),
        };
        Ok(RmgConfig {
            eps: self.eps,
            l,
            eps_prime: self.eps_prime,
            eps_bar: self.eps_bar,
            l_prime,
            mode,
            matrix_mode: parse_matrix_mode(&self.matrix_mode)?,
            theta_cap: self.theta_cap,
            theta_eval: self.theta_eval,
            ..RmgConfig::default()
        })
    }
}

fn parse_matrix_mode(s: &str) -> anyhow::Result<MatrixMode> {
    match s {
        "prefix" => Ok(MatrixMode::Prefix),
        "literal" => Ok(MatrixMode::Literal),
        other => bail!("unknown matrix mode `{other}` (expected prefix|literal)"),
    }
}

fn parse_budgets(raw: &[f64]) -> anyhow::Result<Vec<f64>> {
    if raw.is_empty() {
        bail!("--budget-list must name at least one budget");
    }
    Ok(raw.to_vec())
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Comma-separated, strictly increasing budgets.
    #[arg(long, value_delimiter = ',', required = true)]
    budget_list: Vec<f64>,
    /// Comma-separated subset of rmg,random,greedy_mc,pmce.
    #[arg(long, value_delimiter = ',', default_value = "rmg,random,greedy_mc,pmce")]
    algorithms: Vec<String>,
    #[command(flatten)]
    knobs: KnobArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Selector mode: exact (cubic restarts) | fast.
    #[arg(long, default_value = "fast")]
    mode: String,
    /// Trials of the shared final profit evaluation.
    #[arg(long, default_value_t = 10_000)]
    eval_trials: u64,
    /// Trials per marginal for Monte-Carlo baseline selection.
    #[arg(long, default_value_t = 10_000)]
    baseline_trials: u64,
    /// Baseline marginal estimator: mc | coverage:<theta>.
    #[arg(long, default_value = "mc")]
    baseline_estimator: String,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append a wall_ms column (timings vary run to run).
    #[arg(long)]
    timings: bool,
}

fn parse_mode(s: &str) -> anyhow::Result<GreedyMode> {
    match s {
        "exact" => Ok(GreedyMode::Exact),
        "fast" => Ok(GreedyMode::Fast),
        other => bail!("unknown mode `{other}` (expected exact|fast)"),
    }
}

fn parse_baseline_estimator(s: &str) -> anyhow::Result<BaselineSelection> {
    if s == "mc" {
        return Ok(BaselineSelection::MonteCarlo);
    }
    if let Some(theta) = s.strip_prefix("coverage:") {
        let theta: u64 = theta
            .parse()
            .with_context(|| format!("bad coverage size in `{s}`"))?;
        return Ok(BaselineSelection::Coverage { theta });
    }
    bail!("unknown baseline estimator `{s}` (expected mc|coverage:<theta>)")
}

fn write_output(out: &Option<PathBuf>, contents: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            let mut f = BufWriter::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            f.write_all(contents.as_bytes())?;
            f.flush()?;
        }
        None => print!("{contents}"),
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let (dataset_name, graph, catalog) = args.instance.load()?;
    let budgets = parse_budgets(&args.budget_list)?;
    let mut algorithms = Vec::new();
    for name in &args.algorithms {
        let alg = Algorithm::parse(name)
            .ok_or_else(|| anyhow::anyhow!("unknown algorithm `{name}`"))?;
        algorithms.push(alg);
    }
    if catalog.k_star(*budgets.last().unwrap()) == 0 {
        return Err(profitmax::Error::Infeasible(format!(
            "largest budget {} is below the cheapest product cost {}",
            budgets.last().unwrap(),
            catalog.c_min()
        ))
        .into());
    }
    let rmg = args
        .knobs
        .rmg_config(graph.n(), catalog.q(), parse_mode(&args.mode)?)?;
    let spec = ExperimentSpec {
        dataset_name,
        graph,
        catalog,
        budgets,
        algorithms,
        eval_trials: args.eval_trials,
        seed: args.seed,
        rmg,
        baseline_trials: args.baseline_trials,
        baseline_selection: parse_baseline_estimator(&args.baseline_estimator)?,
    };
    let result = run_sweep(&spec)?;
    for (budget, alg, ms) in &result.cell_ms {
        log::info!("cell budget={budget} algorithm={alg}: {ms} ms");
    }
    write_output(&args.out, &result.to_csv(args.timings))
}

#[derive(Args)]
struct OptBoundArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    budget_list: Vec<f64>,
    #[command(flatten)]
    knobs: KnobArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Dump the profit matrix per budget next to the report (CSV).
    #[arg(long)]
    matrix_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_opt_bound(args: OptBoundArgs) -> anyhow::Result<()> {
    let (dataset_name, graph, catalog) = args.instance.load()?;
    let budgets = parse_budgets(&args.budget_list)?;
    if catalog.k_star(*budgets.last().unwrap()) == 0 {
        return Err(profitmax::Error::Infeasible(
            "largest budget below cheapest product".into(),
        )
        .into());
    }
    let config = args.knobs.rmg_config(graph.n(), catalog.q(), GreedyMode::Fast)?;
    let cg = CopyGraph::new(&graph, catalog.q());
    let mut csv =
        String::from("dataset,budget,seed,u_star,u_refined,u_final,theta_required\n");
    let mut matrix_csv = String::new();
    for (b_idx, &budget) in budgets.iter().enumerate() {
        if catalog.k_star(budget) == 0 {
            csv.push_str(&format!(
                "{dataset_name},{budget},{},,,,\n",
                args.seed
            ));
            continue;
        }
        let seed = child_seed(args.seed, "opt-bound", b_idx as u64);
        let est = opt_estimation(
            &cg,
            &catalog,
            budget,
            config.eps_prime,
            config.eps_bar,
            config.l_prime,
            seed,
        )?;
        let pm = build_profit_matrix(
            &cg,
            &catalog,
            budget,
            config.eps_prime,
            config.eps_bar,
            config.l_prime,
            config.matrix_mode,
            child_seed(seed, "matrix", 0),
        )?;
        let eval = generate_collection(&cg, config.theta_eval, child_seed(seed, "eval", 0))?;
        let refined = refine_opt(&pm, &catalog, budget, &eval, config.eps_prime, est.u_star);
        let theta = required_theta(
            graph.n(),
            catalog.q(),
            &catalog,
            budget,
            config.eps,
            config.l,
            refined.u_prime,
        )?;
        csv.push_str(&format!(
            "{dataset_name},{budget},{},{},{},{},{theta}\n",
            args.seed, refined.u_star, refined.u_double_star, refined.u_prime
        ));
        if args.matrix_out.is_some() {
            matrix_csv.push_str(&format!("# budget {budget}\n"));
            matrix_csv.push_str(&pm.to_csv());
        }
    }
    if let Some(path) = &args.matrix_out {
        std::fs::write(path, matrix_csv)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    write_output(&args.out, &csv)
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    budget: f64,
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<()> {
    let (_, graph, catalog) = args.instance.load()?;
    let cg = CopyGraph::new(&graph, catalog.q());
    let (assignment, value) = exact_opt(&cg, &catalog, args.budget)?;
    println!("optimum: {value}");
    println!("cost: {}", assignment.cost(&catalog));
    for i in 0..catalog.q() {
        let seeds: Vec<String> = assignment
            .component(i)
            .iter()
            .map(|&v| graph.original_id(v).to_string())
            .collect();
        println!("product {}: [{}]", i + 1, seeds.join(", "));
    }
    Ok(())
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    avg_degree: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_gen(args: GenArgs) -> anyhow::Result<()> {
    let g = gen_synthetic(args.nodes, args.avg_degree, args.seed)?;
    let f = BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    write_edge_list(&g, f)?;
    log::info!("wrote {} nodes, {} edges to {}", g.n(), g.m(), args.out.display());
    Ok(())
}

#[derive(Args)]
struct RrCacheArgs {
    #[command(subcommand)]
    action: RrCacheAction,
}

#[derive(Subcommand)]
enum RrCacheAction {
    /// Sample a collection over the copy graph and dump it.
    Dump {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        theta: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a cache file and print its header and summary statistics.
    Info {
        #[arg(long)]
        file: PathBuf,
    },
}

fn cmd_rr_cache(args: RrCacheArgs) -> anyhow::Result<()> {
    match args.action {
        RrCacheAction::Dump {
            instance,
            theta,
            seed,
            out,
        } => {
            let (_, graph, catalog) = instance.load()?;
            let cg = CopyGraph::new(&graph, catalog.q());
            let rc = generate_collection(&cg, theta, seed)?;
            rc.dump_to_path(&out)?;
            log::info!("dumped {} sets to {}", rc.theta(), out.display());
            Ok(())
        }
        RrCacheAction::Info { file } => {
            let rc = RRCollection::load_from_path(&file)?;
            let mean_size: f64 = rc.sets().map(|s| s.nodes.len() as f64).sum::<f64>()
                / rc.theta() as f64;
            println!("n: {}", rc.n());
            println!("q: {}", rc.q());
            println!("theta: {}", rc.theta());
            println!("mean_width: {}", rc.mean_width());
            println!("mean_size: {mean_size}");
            Ok(())
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<profitmax::Error>() {
        Some(profitmax::Error::Infeasible(_)) => 3,
        _ => 2,
    }
}

fn real_main(cli: Cli) -> anyhow::Result<()> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .context("configuring worker pool")?;
    }
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::OptBound(args) => cmd_opt_bound(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Gen(args) => cmd_gen(args),
        Command::RrCache(args) => cmd_rr_cache(args),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(err) = real_main(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code_for(&err));
    }
}
