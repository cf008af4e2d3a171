//! Synthetic dataset families for the bench and selftest commands.

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dist {
    /// Uniform in the unit ball.
    UniformBall,
    /// Two tight clusters 10 apart (aspect-ratio stress).
    TwoClusters,
    /// Two concentric spheres of radius 0.5 and 1.
    Shells,
}

pub fn gaussian_vec(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn unit_vec(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v = gaussian_vec(dim, rng);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.iter().map(|x| x / n).collect()
}

pub fn ball_vec(dim: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let u = unit_vec(dim, rng);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    u.iter().map(|x| x * r).collect()
}

fn one(dist: Dist, i: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match dist {
        Dist::UniformBall => ball_vec(dim, 1.0, rng),
        Dist::TwoClusters => {
            let mut p = ball_vec(dim, 0.01, rng);
            if i % 2 == 1 {
                p[0] += 10.0;
            }
            p
        }
        Dist::Shells => {
            let r = if i % 2 == 0 { 0.5 } else { 1.0 };
            unit_vec(dim, rng).iter().map(|x| x * r).collect()
        }
    }
}

/// `n` points from the family; deterministic in the seed.
pub fn points(dist: Dist, n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| one(dist, i, dim, &mut rng)).collect()
}

/// Query points drawn from the same family on an independent stream.
pub fn queries(dist: Dist, m: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x71);
    (0..m).map(|i| one(dist, i, dim, &mut rng)).collect()
}
