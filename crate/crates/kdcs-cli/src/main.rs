//! `kdcs`: build, persist, and query kernel density coreset indexes, plus a
//! statistical selftest suite and a benchmark harness.
//!
//! Machine-readable output (JSON lines or CSV) goes to standard output;
//! human summaries go to standard error. Exit codes: 0 success (including
//! queries answered with Fail status), 1 usage/config error, 2 data error,
//! 3 selftest violation.

mod bench;
mod index;
mod pointfile;
mod selftest;
mod synth;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kdcs::core::{BuildParams, Dataset};
use kdcs::kernels::RadialKernel;
use kdcs::oracle::exact_kde;
use kdcs::tree::{build_forest, query_forest, Status};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Violation(String),
}

impl CliError {
    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Violation(m) => m,
        }
    }

    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Violation(_) => 3,
        }
    }
}

/// Library errors about the data itself map to the data exit code; anything
/// else is a configuration problem.
pub fn lib_err(e: kdcs::Error) -> CliError {
    match e {
        kdcs::Error::NonFinite(_)
        | kdcs::Error::DimensionMismatch { .. }
        | kdcs::Error::EmptyDataset => CliError::Data(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

#[derive(Parser)]
#[command(name = "kdcs", version, about = "Kernel density coreset index")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build an index from a CSV point file.
    Build(BuildArgs),
    /// Answer queries from a CSV file against a saved index.
    Query(QueryArgs),
    /// Run a fixed-seed statistical suite.
    Selftest(SelftestArgs),
    /// Build and query a synthetic dataset, reporting one CSV row.
    Bench(BenchArgs),
}

#[derive(Args)]
struct KernelArgs {
    /// Kernel descriptor: cauchy, rq:<beta>, or expmix:<w>:<t>,...
    #[arg(long, default_value = "cauchy")]
    kernel: String,
    /// Smoothness parameters "L,t"; required for expmix kernels.
    #[arg(long)]
    smooth: Option<String>,
}

impl KernelArgs {
    fn build(&self) -> Result<RadialKernel, CliError> {
        let k = RadialKernel::parse_descriptor(&self.kernel)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        match &self.smooth {
            None => Ok(k),
            Some(s) => {
                let (l, t) = s
                    .split_once(',')
                    .ok_or_else(|| CliError::Usage("--smooth expects \"L,t\"".into()))?;
                let l: f64 = l
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad smoothness L {l:?}")))?;
                let t: f64 = t
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad smoothness t {t:?}")))?;
                k.with_smoothness(l, t).map_err(|e| CliError::Usage(e.to_string()))
            }
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    /// Input CSV point file.
    #[arg(long)]
    input: PathBuf,
    /// Output index path.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    /// Embedding accuracy; mutually exclusive with --tau.
    #[arg(long, conflicts_with = "tau")]
    xi: Option<f64>,
    /// Additive density accuracy; sets xi = eps*tau/4.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    trees: usize,
    /// Aspect-ratio bound; computed exactly when omitted (small inputs only).
    #[arg(long)]
    phi: Option<f64>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    /// CSV file of query points.
    #[arg(long)]
    queries: PathBuf,
    /// Also compute the exact density (needs --data) and report errors.
    #[arg(long, requires = "data")]
    exact_check: bool,
    /// Original CSV point file, used only by --exact-check.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, value_enum)]
    suite: selftest::Suite,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    xi: f64,
    #[arg(long, value_enum)]
    dist: synth::Dist,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    trees: usize,
    /// Aspect-ratio bound; computed exactly when omitted (small inputs only).
    #[arg(long)]
    phi: Option<f64>,
}

fn resolve_xi(eps: f64, xi: Option<f64>, tau: Option<f64>) -> f64 {
    match (xi, tau) {
        (Some(x), _) => x,
        (None, Some(t)) => eps * t / 4.0,
        (None, None) => 1e-4,
    }
}

fn cmd_build(a: BuildArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let kernel = a.kernel.build()?;
    let pts = pointfile::read_points(&a.input)?;
    let arena = Arc::new(Dataset::new(pts).map_err(lib_err)?);
    let params = BuildParams {
        eps: a.eps,
        xi: resolve_xi(a.eps, a.xi, a.tau),
        delta: a.delta,
        alpha_override: None,
        phi: a.phi,
        seed: a.seed,
        num_trees: a.trees,
    };
    let forest = build_forest(arena.clone(), kernel, params).map_err(lib_err)?;
    index::save(&a.output, &forest)?;
    let index_bytes = std::fs::metadata(&a.output)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.output.display())))?
        .len();
    let nodes: usize = forest.stats.iter().map(|s| s.nodes).sum();
    let max_depth = forest.stats.iter().map(|s| s.max_depth).max().unwrap_or(0);
    let coreset_points: usize = forest.stats.iter().map(|s| s.coreset_points).sum();
    let max_coreset = forest.stats.iter().map(|s| s.max_coreset).max().unwrap_or(0);
    let violations: usize = forest.stats.iter().map(|s| s.size_bound_violations).sum();
    let wall_s = start.elapsed().as_secs_f64();
    println!(
        "{}",
        json!({
            "event": "build",
            "n": arena.len(),
            "dim": arena.dim(),
            "trees": forest.trees.len(),
            "nodes": nodes,
            "max_depth": max_depth,
            "depth_cap": forest.stats[0].depth_cap,
            "coreset_points": coreset_points,
            "max_coreset": max_coreset,
            "size_bound_violations": violations,
            "alpha": forest.stats[0].alpha,
            "phi": forest.stats[0].phi,
            "index_bytes": index_bytes,
            "wall_s": wall_s,
        })
    );
    eprintln!(
        "built {} tree(s) over {} points (dim {}) in {wall_s:.2}s -> {} ({index_bytes} bytes)",
        forest.trees.len(),
        arena.len(),
        arena.dim(),
        a.output.display()
    );
    Ok(())
}

fn cmd_query(a: QueryArgs) -> Result<(), CliError> {
    let forest = index::load(&a.index)?;
    let dim = forest.trees[0].cen.len();
    let queries = pointfile::read_points(&a.queries)?;
    let exact_arena = match (&a.data, a.exact_check) {
        (Some(p), true) => {
            Some(Dataset::new(pointfile::read_points(p)?).map_err(lib_err)?)
        }
        _ => None,
    };
    let mut ok = 0usize;
    let mut fails = 0usize;
    let mut rel_errs = Vec::new();
    for (i, q) in queries.iter().enumerate() {
        if q.len() != dim {
            return Err(CliError::Data(format!(
                "query {} has dimension {}, index expects {dim}",
                i + 1,
                q.len()
            )));
        }
        let r = query_forest(q, &forest).map_err(lib_err)?;
        let mut line = json!({
            "query": i,
            "status": match r.status { Status::Ok => "ok", Status::Fail => "fail" },
            "estimate": r.estimate,
            "nodes_visited": r.stats.nodes_visited,
            "coresets_touched": r.stats.coresets_touched,
        });
        match r.status {
            Status::Ok => ok += 1,
            Status::Fail => fails += 1,
        }
        if let Some(arena) = &exact_arena {
            let exact = exact_kde(arena, q, &forest.kernel).map_err(lib_err)?.value;
            line["exact"] = json!(exact);
            if let Some(est) = r.estimate {
                let rel = (est - exact).abs() / exact;
                line["rel_error"] = json!(rel);
                rel_errs.push(rel);
            }
        }
        println!("{line}");
    }
    if rel_errs.is_empty() {
        eprintln!("{ok} ok, {fails} fail over {} queries", queries.len());
    } else {
        rel_errs.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| rel_errs[((rel_errs.len() as f64 * p) as usize).min(rel_errs.len() - 1)];
        eprintln!(
            "{ok} ok, {fails} fail over {} queries; relative error p50={:.4} p95={:.4} max={:.4}",
            queries.len(),
            q(0.5),
            q(0.95),
            rel_errs[rel_errs.len() - 1]
        );
    }
    Ok(())
}

fn cmd_selftest(a: SelftestArgs) -> Result<(), CliError> {
    let checks = selftest::run(a.suite);
    let mut failed = 0usize;
    for c in &checks {
        println!(
            "{}",
            json!({
                "suite": format!("{:?}", a.suite).to_lowercase(),
                "check": c.name,
                "pass": c.pass,
                "observed": c.observed,
                "bound": c.bound,
            })
        );
        if !c.pass {
            failed += 1;
        }
    }
    eprintln!("{}/{} checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        return Err(CliError::Violation(format!("{failed} selftest check(s) failed")));
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let kernel = a.kernel.build()?;
    bench::run(bench::BenchConfig {
        n: a.n,
        d: a.d,
        kernel_name: a.kernel.kernel.clone(),
        kernel,
        eps: a.eps,
        xi: a.xi,
        dist: a.dist,
        seed: a.seed,
        trees: a.trees,
        phi: a.phi,
    })
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Build(a) => cmd_build(a),
        Cmd::Query(a) => cmd_query(a),
        Cmd::Selftest(a) => cmd_selftest(a),
        Cmd::Bench(a) => cmd_bench(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are successes; everything else is a
            // usage error.
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    // Deep recursion in build/load on adversarial datasets wants more stack
    // than the default main thread provides.
    let worker = std::thread::Builder::new()
        .stack_size(256 << 20)
        .spawn(move || match dispatch(cli) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {}", e.message());
                e.code()
            }
        })
        .expect("spawn worker");
    std::process::exit(worker.join().expect("worker panicked"));
}
