//! Statistical selftest suites with fixed seeds. Each check compares an
//! empirical frequency against its analytic budget; any violation makes the
//! whole run exit nonzero.

use std::sync::Arc;

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kdcs::balance::{self, GramOracle};
use kdcs::carving::{alpha_for, CarvingParams, HashValue};
use kdcs::core::{dist, dot, norm_sq, BuildParams, Dataset, ShellGeometry};
use kdcs::embedding::{EmbeddingOracle, Side};
use kdcs::farfield::far_radius;
use kdcs::kernels::RadialKernel;
use kdcs::oracle::exact_kde;
use kdcs::tree::{build_forest, query_forest, Status};

use crate::synth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Carving,
    Walk,
    Embedding,
    Farfield,
    E2e,
}

pub struct Check {
    pub name: String,
    pub pass: bool,
    pub observed: f64,
    pub bound: f64,
}

impl Check {
    fn le(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Check { name: name.into(), pass: observed <= bound, observed, bound }
    }

    fn ge(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Check { name: name.into(), pass: observed >= bound, observed, bound }
    }
}

pub fn run(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::Carving => carving(),
        Suite::Walk => walk(),
        Suite::Embedding => embedding(),
        Suite::Farfield => farfield(),
        Suite::E2e => e2e(),
    }
}

fn carving() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let d = 50usize;
    let big_r = 1.0;
    let alpha = alpha_for(2, 1.0, 0.1, None);
    let trials = 20_000usize;
    let (mut separated, mut boundary) = (0usize, 0usize);
    for _ in 0..trials {
        let carve = CarvingParams::sample(d, big_r, alpha, &mut rng).unwrap();
        let (x, y) = loop {
            let x = synth::ball_vec(d, big_r, &mut rng);
            let y = synth::ball_vec(d, big_r, &mut rng);
            if dist(&x, &y) >= big_r / 100.0 {
                break (x, y);
            }
        };
        let (hx, hy) = (carve.eval(&x), carve.eval(&y));
        if hx != hy && hx != HashValue::Boundary && hy != HashValue::Boundary {
            separated += 1;
        }
        if carve.eval(&synth::ball_vec(d, big_r, &mut rng)) == HashValue::Boundary {
            boundary += 1;
        }
    }
    let sqrt_d = (d as f64).sqrt();
    let bnd_budget = alpha / sqrt_d;
    let sigma = (bnd_budget * (1.0 - bnd_budget) / trials as f64).sqrt();
    vec![
        Check::ge("separation_frequency", separated as f64 / trials as f64, 0.01 / sqrt_d),
        Check::le(
            "boundary_frequency",
            boundary as f64 / trials as f64,
            bnd_budget + 3.0 * sigma,
        ),
    ]
}

struct MatGram(Vec<Vec<f64>>);

impl GramOracle for MatGram {
    fn len(&self) -> usize {
        self.0.len()
    }
    fn dot(&self, i: usize, j: usize) -> kdcs::Result<f64> {
        Ok(self.0[i][j])
    }
}

fn walk() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(602);
    let (n, d, delta) = (128usize, 32usize, 0.01);
    let vecs: Vec<Vec<f64>> = (0..n).map(|_| synth::unit_vec(d, &mut rng)).collect();
    let dirs: Vec<Vec<f64>> = (0..5).map(|_| synth::unit_vec(d, &mut rng)).collect();
    let gram = MatGram(
        (0..n).map(|i| (0..n).map(|j| dot(&vecs[i], &vecs[j])).collect()).collect(),
    );
    let uprod: Vec<Vec<f64>> =
        dirs.iter().map(|u| vecs.iter().map(|v| dot(v, u)).collect()).collect();
    let c = 30.0 * (n as f64 / delta).ln();
    let trials = 2000usize;
    let mut exceed = vec![0usize; dirs.len()];
    for _ in 0..trials {
        let signs = balance::self_balancing_walk(&gram, delta, &mut rng).unwrap();
        for (k, up) in uprod.iter().enumerate() {
            let s: f64 = signs.iter().zip(up).map(|(&sg, &u)| f64::from(sg) * u).sum();
            if s.abs() > c {
                exceed[k] += 1;
            }
        }
    }
    exceed
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            Check::le(format!("tail_frequency_direction_{k}"), e as f64 / trials as f64, 0.02)
        })
        .collect()
}

fn embedding() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(603);
    let mut violations = 0usize;
    let trials = 2000usize;
    for t in 0..trials {
        let scale = (rng.random_range((0.05f64).ln()..(20.0f64).ln())).exp();
        let xi = (-rng.random_range(std::f64::consts::LN_2..12.0)).exp();
        let kernel = match t % 3 {
            0 => RadialKernel::cauchy(),
            1 => RadialKernel::rational_quadratic(rng.random_range(1.0..4.0)).unwrap(),
            _ => RadialKernel::exp_mixture(vec![
                (0.6, rng.random_range(0.1..2.0)),
                (0.4, rng.random_range(0.01..0.1)),
            ])
            .unwrap(),
        };
        // Carving-style shell: thin band around a radius in (R/100, 3R).
        let big_r = scale;
        let alpha = alpha_for(1000, 1e4, 0.1, None);
        let m = alpha * big_r / (8.0f64).sqrt();
        let r = rng.random_range((big_r / 100.0 + m) * 1.001..(3.0 * big_r - m) * 0.999);
        let geom =
            ShellGeometry::new(vec![0.0; 8], big_r / 100.0, r - m, r + m, 3.0 * big_r)
                .unwrap();
        let oracle = EmbeddingOracle::new(kernel.clone(), geom, xi).unwrap();
        let (ilo, ihi) = oracle.band(Side::Inner);
        let (olo, ohi) = oracle.band(Side::Outer);
        let scale_to = |v: Vec<f64>, r: f64| {
            let n = norm_sq(&v).sqrt().max(1e-12);
            v.iter().map(|x| x * r / n).collect::<Vec<f64>>()
        };
        let y = scale_to(
            synth::unit_vec(8, &mut rng),
            rng.random_range(ilo * (1.0 + 1e-12)..ihi * (1.0 - 1e-12)),
        );
        let x = scale_to(
            synth::unit_vec(8, &mut rng),
            rng.random_range(olo * (1.0 + 1e-12)..ohi * (1.0 - 1e-12)),
        );
        let emb = oracle.emb_inner(&x, Side::Outer, &y, Side::Inner).unwrap();
        let k = kernel.kernel_eval(&x, &y).unwrap();
        if !(k - emb >= 0.0 && k - emb <= xi) {
            violations += 1;
        }
    }
    vec![Check::le("sandwich_violations", violations as f64, 0.0)]
}

fn farfield() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(604);
    let d = 6usize;
    let trials = 200usize;
    let mut bad = 0usize;
    for _ in 0..trials {
        let r = (rng.random_range((0.5f64).ln()..(5.0f64).ln())).exp();
        let eps = rng.random_range(0.1..0.9);
        let xi = (-rng.random_range(2.0..8.0f64)).exp();
        let kernel = RadialKernel::cauchy();
        let n = rng.random_range(20..60usize);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| synth::ball_vec(d, r, &mut rng)).collect();
        let arena = Dataset::new(pts).unwrap();
        let q: Vec<f64> = synth::unit_vec(d, &mut rng)
            .iter()
            .map(|v| v * far_radius(r, eps, xi))
            .collect();
        let exact = exact_kde(&arena, &q, &kernel).unwrap().value;
        let collapsed = n as f64 * kernel.kernel_eval(&q, &vec![0.0; d]).unwrap();
        let slack = 2.0 * xi * n as f64;
        if !(collapsed >= (1.0 - eps) * exact - slack
            && collapsed <= (1.0 + eps) * exact + slack)
        {
            bad += 1;
        }
    }
    vec![Check::le("collapse_violations", bad as f64, 0.0)]
}

fn e2e() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(605);
    let (n, d, eps, xi) = (500usize, 10usize, 0.3, 1e-4);
    let pts: Vec<Vec<f64>> = (0..n).map(|_| synth::gaussian_vec(d, &mut rng)).collect();
    let arena = Arc::new(Dataset::new(pts).unwrap());
    let kernel = RadialKernel::cauchy();
    let params = BuildParams { eps, xi, delta: 0.01, seed: 7, ..BuildParams::default() };
    let forest = build_forest(arena.clone(), kernel.clone(), params).unwrap();
    let mut good = 0usize;
    let queries = 50usize;
    for _ in 0..queries {
        let q = synth::gaussian_vec(d, &mut rng);
        let r = query_forest(&q, &forest).unwrap();
        if r.status != Status::Ok {
            continue;
        }
        let est = r.estimate.unwrap();
        let exact = exact_kde(&arena, &q, &kernel).unwrap().value;
        if est >= (1.0 - eps) * exact - 2.0 * xi * n as f64
            && est <= (1.0 + eps) * exact + 2.0 * xi * n as f64
        {
            good += 1;
        }
    }
    vec![Check::ge("queries_within_bounds", good as f64 / queries as f64, 0.9)]
}
