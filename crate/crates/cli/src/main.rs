use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nsg_core::analysis::{check_msnet, estimate_delta_r, graph_report, scc_count, GraphReport};
use nsg_core::bench::{
    compute_ground_truth, grid_search, holdout_split, run_sweep, GridPoint, GroundTruth, Objective,
    RecallCurvePoint,
};
use nsg_core::io::{
    generate_synthetic, load_graph, load_index, read_fvecs, save_graph, save_index, write_fvecs,
    write_ivecs, SyntheticKind,
};
use nsg_core::knn::{exact_knn_graph, nn_descent, KnnGraph, NnDescentParams};
use nsg_core::mrng::build_mrng;
use nsg_core::nsg::{build_nsg, BuildParams};
use nsg_core::search::{search_batch, SearchParams};
use nsg_core::{Dataset, DirectedGraph, Error};

/// Exact-MRNG and NSG graph indices for approximate nearest neighbor search.
#[derive(Parser)]
#[command(name = "nsg", version)]
struct Cli {
    /// Worker threads for builds and analysis (timed search is always single-threaded).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic fvecs dataset.
    GenData(GenData),
    /// Hold out a random fraction of a dataset as queries.
    Split(Split),
    /// Build a kNN graph.
    BuildKnn(BuildKnn),
    /// Build an NSG from a dataset and its kNN graph.
    BuildNsg(BuildNsg),
    /// Build the exact MRNG (quadratic; small datasets only).
    BuildMrng(BuildMrng),
    /// Search an index; ids go to an ivecs file, stats to stderr.
    Search(Search),
    /// Exact K nearest neighbors for every query.
    GroundTruth(GroundTruthCmd),
    /// Precision and throughput sweep over pool sizes, as CSV.
    Bench(Bench),
    /// Degree, NN% and connectivity statistics of a graph.
    Analyze(Analyze),
    /// Check that every ordered pair is joined by a monotonic path.
    CheckMsnet(CheckMsnet),
    /// Minimum side-length difference over non-isosceles triangles.
    DeltaR(DeltaR),
    /// Pick build parameters reaching a target precision.
    GridSearch(GridSearchCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Uniform,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Exact,
    Nndescent,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Csv,
    Text,
}

#[derive(Args)]
struct GenData {
    #[arg(long, value_enum, default_value = "uniform")]
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Standard deviation of the Gaussian kind.
    #[arg(long, default_value_t = 3.0)]
    std_dev: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Split {
    #[arg(long)]
    base: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Remaining base points.
    #[arg(long)]
    out: PathBuf,
    /// Held-out queries.
    #[arg(long)]
    query: PathBuf,
}

#[derive(Args)]
struct BuildKnn {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    k: usize,
    /// Defaults to exact for n <= 10000 and nndescent above.
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Sampling rate of nn-descent.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Early-termination threshold of nn-descent.
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    #[arg(long, default_value_t = 12)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildNsg {
    #[arg(long)]
    base: PathBuf,
    /// kNN graph written by build-knn.
    #[arg(long)]
    knn: PathBuf,
    #[arg(long)]
    l_build: usize,
    #[arg(long)]
    m: usize,
    /// Candidate pool cap; defaults to max(l_build, 2m).
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildMrng {
    #[arg(long)]
    base: PathBuf,
    /// Allow datasets above 20000 points.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Search {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    l: usize,
    #[arg(long = "K")]
    top_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GroundTruthCmd {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long = "K")]
    top_k: usize,
    /// ids as ivecs
    #[arg(long)]
    out: PathBuf,
    /// Optional distances as fvecs.
    #[arg(long)]
    distances: Option<PathBuf>,
}

#[derive(Args)]
struct Bench {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    l: Vec<usize>,
    #[arg(long = "K", alias = "recall-at", default_value_t = 10)]
    top_k: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Analyze {
    /// Any graph or index file.
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    base: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct CheckMsnet {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    base: PathBuf,
}

#[derive(Args)]
struct DeltaR {
    #[arg(long)]
    base: PathBuf,
    /// Allow more than 2000 points (cubic cost).
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct GridSearchCmd {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    l_build: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    m: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    l: Vec<usize>,
    #[arg(long = "K", default_value_t = 10)]
    top_k: usize,
    #[arg(long, default_value_t = 0.95)]
    target: f64,
    /// Rank by distance computations instead of measured QPS.
    #[arg(long)]
    by_distance_computations: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

const EXACT_KNN_DEFAULT_LIMIT: usize = 10_000;
const MRNG_LIMIT: usize = 20_000;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Usage(_)) => 2,
        Some(Error::Format(_) | Error::Corruption(_)) => 3,
        Some(Error::Infeasible(_)) => 4,
        _ => 1,
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Usage(msg.into()).into()
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Split(a) => split(a),
        Command::BuildKnn(a) => build_knn(a),
        Command::BuildNsg(a) => build_nsg_cmd(a),
        Command::BuildMrng(a) => build_mrng_cmd(a),
        Command::Search(a) => search(a),
        Command::GroundTruth(a) => ground_truth(a),
        Command::Bench(a) => bench(a),
        Command::Analyze(a) => analyze(a),
        Command::CheckMsnet(a) => check(a),
        Command::DeltaR(a) => delta_r(a),
        Command::GridSearch(a) => grid(a),
    }
}

fn load(path: &Path) -> Result<Dataset> {
    Ok(read_fvecs(path)?)
}

fn print_report(r: &GraphReport) {
    eprintln!(
        "n={} AOD={:.3} MOD={} NN%={:.2} SCC={} reachable_from_nav={}",
        r.n,
        r.aod,
        r.mod_,
        100.0 * r.nn_percent,
        r.scc_count,
        r.reachable_from_nav
            .map_or_else(|| "-".to_string(), |x| x.to_string())
    );
}

fn gen_data(a: GenData) -> Result<()> {
    if a.n == 0 || a.d == 0 {
        return Err(usage("--n and --d must be positive"));
    }
    let kind = match a.kind {
        Kind::Uniform => SyntheticKind::Uniform,
        Kind::Gaussian => {
            if !(a.std_dev > 0.0 && a.std_dev.is_finite()) {
                return Err(usage("--std-dev must be positive"));
            }
            SyntheticKind::Gaussian { std_dev: a.std_dev }
        }
    };
    let ds = generate_synthetic(kind, a.n, a.d, a.seed)?;
    write_fvecs(&ds, &a.out)?;
    eprintln!("wrote {} points of dimension {} to {}", a.n, a.d, a.out.display());
    Ok(())
}

fn split(a: Split) -> Result<()> {
    let ds = load(&a.base)?;
    let (base, queries) = holdout_split(&ds, a.fraction, a.seed)?;
    write_fvecs(&base, &a.out)?;
    write_fvecs(&queries, &a.query)?;
    eprintln!("{} base points, {} queries", base.len(), queries.len());
    Ok(())
}

fn build_knn(a: BuildKnn) -> Result<()> {
    if a.k == 0 {
        return Err(usage("--k must be positive"));
    }
    let ds = load(&a.base)?;
    let method = a.method.unwrap_or(if ds.len() <= EXACT_KNN_DEFAULT_LIMIT {
        Method::Exact
    } else {
        Method::Nndescent
    });
    let t = Instant::now();
    let knn = match method {
        Method::Exact => exact_knn_graph(&ds, a.k)?,
        Method::Nndescent => nn_descent(
            &ds,
            NnDescentParams {
                sample_rate: a.rho,
                max_iters: a.iters,
                delta: a.delta,
                ..NnDescentParams::new(a.k, a.seed)
            },
        )?,
    };
    eprintln!("t1 (kNN graph) = {:.3}s", t.elapsed().as_secs_f64());
    print_report(&graph_report(knn.graph(), &ds, None)?);
    save_graph(knn.graph(), ds.dim(), None, &a.out)?;
    Ok(())
}

fn build_nsg_cmd(a: BuildNsg) -> Result<()> {
    if a.m == 0 {
        return Err(usage("--m must be at least 1"));
    }
    if a.l_build == 0 {
        return Err(usage("--l-build must be at least 1"));
    }
    let ds = load(&a.base)?;
    let file = load_graph(&a.knn)?;
    if file.graph.len() != ds.len() || file.dim != ds.dim() {
        bail!(Error::Format(format!(
            "{} describes {} points of dimension {}, but {} has {} of dimension {}",
            a.knn.display(),
            file.graph.len(),
            file.dim,
            a.base.display(),
            ds.len(),
            ds.dim()
        )));
    }
    let knn = KnnGraph::from_graph(&file.graph, &ds)?;
    let params = BuildParams {
        candidate_cap: a.candidates,
        ..BuildParams::new(a.l_build, a.m, a.seed)
    };
    let t = Instant::now();
    let index = build_nsg(&knn, &ds, params)?;
    eprintln!("t2 (NSG build) = {:.3}s", t.elapsed().as_secs_f64());
    if let Some(info) = &index.build {
        eprintln!(
            "navigating node {}, pre-repair max out-degree {}, {} repair edges",
            index.navigating_node, info.pre_repair_max_out_degree, info.repair_edges
        );
    }
    print_report(&graph_report(&index.graph, &ds, Some(index.navigating_node))?);
    save_index(&index, &a.out)?;
    Ok(())
}

fn build_mrng_cmd(a: BuildMrng) -> Result<()> {
    let ds = load(&a.base)?;
    if ds.len() > MRNG_LIMIT && !a.force {
        return Err(usage(format!(
            "exact MRNG is quadratic; {} points exceeds {MRNG_LIMIT} (pass --force to proceed)",
            ds.len()
        )));
    }
    let t = Instant::now();
    let g = build_mrng(&ds)?;
    eprintln!("MRNG build = {:.3}s", t.elapsed().as_secs_f64());
    print_report(&graph_report(&g, &ds, None)?);
    save_graph(&g, ds.dim(), None, &a.out)?;
    Ok(())
}

fn search(a: Search) -> Result<()> {
    if a.top_k == 0 || a.top_k > a.l {
        return Err(usage(format!("--K must lie in 1..=l (got K={}, l={})", a.top_k, a.l)));
    }
    let index = load_index(&a.index)?;
    let ds = load(&a.base)?;
    index.check_dataset(&ds)?;
    let queries = load(&a.query)?;
    let params = SearchParams::new(a.l, a.top_k, index.navigating_node);
    let t = Instant::now();
    let stats = search_batch(&index.graph, &ds, &queries, params, true)?;
    let secs = t.elapsed().as_secs_f64();
    let rows: Vec<Vec<i32>> = stats
        .iter()
        .map(|s| s.ids().into_iter().map(|i| i as i32).collect())
        .collect();
    write_ivecs(&rows, &a.out)?;
    let q = stats.len().max(1) as f64;
    eprintln!(
        "queries={} mean_hops={:.3} mean_distance_computations={:.3} seconds={:.3}",
        stats.len(),
        stats.iter().map(|s| s.hops as f64).sum::<f64>() / q,
        stats.iter().map(|s| s.distance_computations as f64).sum::<f64>() / q,
        secs
    );
    Ok(())
}

fn ground_truth(a: GroundTruthCmd) -> Result<()> {
    let ds = load(&a.base)?;
    let queries = load(&a.query)?;
    let truth = compute_ground_truth(&ds, &queries, a.top_k)?;
    truth.save(&a.out, a.distances.as_deref())?;
    eprintln!("ground truth for {} queries, K={}", truth.len(), a.top_k);
    Ok(())
}

fn sweep_table(points: &[RecallCurvePoint], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut s = format!("{}\n", RecallCurvePoint::CSV_HEADER);
            for p in points {
                s.push_str(&p.csv_row());
                s.push('\n');
            }
            s
        }
        Format::Text => points
            .iter()
            .map(|p| {
                format!(
                    "l={:<5} precision={:.4} qps={:.0} dist_comps={:.1} hops={:.2}\n",
                    p.l, p.precision, p.qps, p.mean_distance_computations, p.mean_hops
                )
            })
            .collect(),
    }
}

fn bench(a: Bench) -> Result<()> {
    if let Some(&bad) = a.l.iter().find(|&&l| l < a.top_k) {
        return Err(usage(format!("every l must be at least K={} (got {bad})", a.top_k)));
    }
    let index = load_index(&a.index)?;
    let ds = load(&a.base)?;
    index.check_dataset(&ds)?;
    let queries = load(&a.query)?;
    let truth = GroundTruth::load(&a.gt, None)?;
    let points = run_sweep(&index, &ds, &queries, &truth, &a.l, a.top_k)?;
    let table = sweep_table(&points, a.format);
    match &a.out {
        Some(p) => std::fs::write(p, table).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{table}"),
    }
    Ok(())
}

fn load_any_graph(path: &Path, ds: &Dataset) -> Result<(DirectedGraph, Option<u32>)> {
    let file = load_graph(path)?;
    if file.graph.len() != ds.len() || file.dim != ds.dim() {
        bail!(Error::Format(format!(
            "{} does not match the dataset ({} points of dimension {} vs {} of {})",
            path.display(),
            file.graph.len(),
            file.dim,
            ds.len(),
            ds.dim()
        )));
    }
    Ok((file.graph, file.navigating_node))
}

fn analyze(a: Analyze) -> Result<()> {
    let ds = load(&a.base)?;
    let (graph, nav) = load_any_graph(&a.index, &ds)?;
    let report = graph_report(&graph, &ds, nav)?;
    match a.format {
        Format::Csv => println!("{}\n{}", GraphReport::CSV_HEADER, report.csv_row()),
        Format::Text => {
            println!("n {}", report.n);
            println!("AOD {:.4}", report.aod);
            println!("MOD {}", report.mod_);
            println!("NN% {:.4}", 100.0 * report.nn_percent);
            println!("SCC {}", report.scc_count);
            if let Some(r) = report.reachable_from_nav {
                println!("reachable_from_nav {r}");
            }
        }
    }
    debug_assert_eq!(report.scc_count, scc_count(&graph));
    Ok(())
}

fn check(a: CheckMsnet) -> Result<()> {
    let ds = load(&a.base)?;
    let (graph, _) = load_any_graph(&a.index, &ds)?;
    let outcome = check_msnet(&graph, &ds)?;
    if outcome.holds {
        println!("HOLDS");
    } else {
        let c = outcome.counterexample.expect("failed check carries a counterexample");
        println!(
            "FAILS source={} target={} stuck_at={}",
            c.source, c.target, c.stuck
        );
    }
    Ok(())
}

fn delta_r(a: DeltaR) -> Result<()> {
    let ds = load(&a.base)?;
    println!("{:e}", estimate_delta_r(&ds, a.force)?);
    Ok(())
}

fn grid(a: GridSearchCmd) -> Result<()> {
    let ds = load(&a.base)?;
    let queries = load(&a.query)?;
    let truth = GroundTruth::load(&a.gt, None)?;
    let mut points = Vec::new();
    for &k in &a.k {
        for &l_build in &a.l_build {
            for &m in &a.m {
                if k == 0 || l_build == 0 || m == 0 {
                    return Err(usage("grid values must be positive"));
                }
                points.push(GridPoint { k, l_build, m });
            }
        }
    }
    let objective = if a.by_distance_computations {
        Objective::DistanceComputations
    } else {
        Objective::Qps
    };
    let out = grid_search(
        &ds, &queries, &truth, &points, &a.l, a.top_k, a.target, a.seed, objective,
    )?;
    for e in &out.evaluations {
        match &e.at_target {
            Some(p) => eprintln!(
                "k={} l_build={} m={}: l={} precision={:.4} qps={:.0} dist_comps={:.1}",
                e.params.k, e.params.l_build, e.params.m, p.l, p.precision, p.qps,
                p.mean_distance_computations
            ),
            None => eprintln!(
                "k={} l_build={} m={}: target not reached",
                e.params.k, e.params.l_build, e.params.m
            ),
        }
    }
    println!("k,l_build,m,{}", RecallCurvePoint::CSV_HEADER);
    println!(
        "{},{},{},{}",
        out.best.k,
        out.best.l_build,
        out.best.m,
        out.best_point.csv_row()
    );
    Ok(())
}
