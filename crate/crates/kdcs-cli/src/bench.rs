//! Benchmark harness: builds an index over a synthetic dataset and reports a
//! single CSV row of build/query statistics.

use std::sync::Arc;
use std::time::Instant;

use kdcs::core::{BuildParams, Dataset};
use kdcs::kernels::RadialKernel;
use kdcs::oracle::exact_kde;
use kdcs::tree::{build_forest, query_forest, Status};

use crate::synth::{self, Dist};
use crate::{index, lib_err, CliError};

pub struct BenchConfig {
    pub n: usize,
    pub d: usize,
    pub kernel: RadialKernel,
    pub kernel_name: String,
    pub eps: f64,
    pub xi: f64,
    pub dist: Dist,
    pub seed: u64,
    pub trees: usize,
    pub phi: Option<f64>,
}

pub fn run(cfg: BenchConfig) -> Result<(), CliError> {
    let pts = synth::points(cfg.dist, cfg.n, cfg.d, cfg.seed);
    let arena = Arc::new(Dataset::new(pts).map_err(lib_err)?);
    let params = BuildParams {
        eps: cfg.eps,
        xi: cfg.xi,
        delta: 0.01,
        alpha_override: None,
        phi: cfg.phi,
        seed: cfg.seed,
        num_trees: cfg.trees,
    };
    let t0 = Instant::now();
    let forest = build_forest(arena.clone(), cfg.kernel.clone(), params).map_err(lib_err)?;
    let build_s = t0.elapsed().as_secs_f64();
    let index_bytes = index::serialize(&forest).len();

    let queries = synth::queries(cfg.dist, 200, cfg.d, cfg.seed);
    let mut times = Vec::with_capacity(queries.len());
    let mut results = Vec::with_capacity(queries.len());
    for q in &queries {
        let t = Instant::now();
        let r = query_forest(q, &forest).map_err(lib_err)?;
        times.push(t.elapsed().as_secs_f64());
        results.push(r);
    }
    times.sort_by(|a, b| a.total_cmp(b));
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let median = times[times.len() / 2];
    let p95 = times[(times.len() as f64 * 0.95) as usize];

    // Exact answers for the first 100 queries only: the oracle is quadratic.
    let mut rel_errs = Vec::new();
    let mut fails = 0usize;
    for (q, r) in queries.iter().zip(&results).take(100) {
        match r.status {
            Status::Fail => fails += 1,
            Status::Ok => {
                let exact = exact_kde(&arena, q, &cfg.kernel).map_err(lib_err)?.value;
                rel_errs.push((r.estimate.unwrap() - exact).abs() / exact);
            }
        }
    }
    let mean_rel_err = if rel_errs.is_empty() {
        f64::NAN
    } else {
        rel_errs.iter().sum::<f64>() / rel_errs.len() as f64
    };

    let dist = match cfg.dist {
        Dist::UniformBall => "uniform-ball",
        Dist::TwoClusters => "two-clusters",
        Dist::Shells => "shells",
    };
    println!(
        "n,d,kernel,eps,dist,build_s,index_bytes,query_mean_s,query_median_s,query_p95_s,mean_rel_err,fail_count"
    );
    println!(
        "{},{},{},{},{dist},{build_s:.6},{index_bytes},{mean:.9},{median:.9},{p95:.9},{mean_rel_err:.6},{fails}",
        cfg.n, cfg.d, cfg.kernel_name, cfg.eps
    );
    eprintln!(
        "bench: n={} d={} built in {build_s:.2}s, index {index_bytes} bytes, \
         p95 query {p95:.6}s, mean relative error {mean_rel_err:.4} ({fails} fails)",
        cfg.n, cfg.d
    );
    Ok(())
}
