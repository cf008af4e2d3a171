//! Far-field handling: geometric rings of coresets for queries far outside
//! the dataset's ball, and the radius beyond which the whole dataset
//! collapses to a single representative point.
//!
//! The dataset sits in a small ball around a shifted center; queries at
//! distance `[2^h·base_r, 2^{h+1}·base_r]` are served by the `h`-th ring's
//! coreset, and queries beyond the last ring by `|P|·K(q, cen)`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::balance::{halving_rounds, process_captured, query_captured, Coreset};
use crate::core::{dist, norm_sq, Dataset, ShellGeometry};
use crate::embedding::{EmbeddingOracle, Side};
use crate::kernels::RadialKernel;
use crate::{Error, Result};

/// Distance beyond which a single representative point carries the whole
/// dataset: `8·r·ln(1/ξ)/ε`.
pub fn far_radius(r: f64, eps: f64, xi: f64) -> f64 {
    8.0 * r * (1.0 / xi).ln() / eps
}

/// Number of rebuild attempts before a persistent band violation (an event
/// excluded with high probability) is surfaced as an error.
const MAX_RESAMPLES: usize = 64;

/// Ring structure for queries far from the dataset ball. Ring `h` serves
/// queries at distance `[2^h·base_r, 2^{h+1}·base_r]`. Rings whose halving
/// count is zero would all store the same point list under geometries that
/// are a pure function of `h`, so they are materialized on demand at query
/// time instead of being stored; only halved rings keep a built coreset.
#[derive(Debug, Clone)]
pub struct FarFieldDS {
    /// Shifted center `c + c₀`.
    pub cen: Vec<f64>,
    /// Lower edge of the dataset band around `cen`.
    pub r_min: f64,
    /// Upper edge of the dataset band: `4/3` of the original ball radius.
    pub r_in: f64,
    /// Inner radius of ring 0.
    pub base_r: f64,
    /// Number of points covered.
    pub size: usize,
    /// Number of rings before the collapse regime.
    pub ring_count: usize,
    /// Point list shared by every unhalved ring.
    pub idx: Arc<Vec<u32>>,
    pub arena: Arc<Dataset>,
    /// Embedding accuracy, needed to rebuild ring oracles on demand.
    pub xi: f64,
    /// Eagerly built coresets for the rings with a positive halving count,
    /// keyed by ring index.
    pub halved: Vec<(usize, Coreset)>,
    /// How many times `c₀` was re-drawn before all bands validated.
    pub resamples: usize,
}

/// The `h`-th ring's shell geometry around the shifted center.
pub fn ring_geom(f: &FarFieldDS, h: usize) -> Result<ShellGeometry> {
    let lo = (1u64 << h) as f64 * f.base_r;
    ShellGeometry::new(f.cen.clone(), f.r_min, f.r_in, lo, 2.0 * lo)
}

/// Draws a point uniformly from the ball of the given radius.
fn sample_in_ball<G: Rng>(dim: usize, radius: f64, rng: &mut G) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = norm_sq(&dir).sqrt().max(f64::MIN_POSITIVE);
    let u: f64 = rng.random::<f64>();
    let scale = radius * u.powf(1.0 / dim as f64) / n;
    dir.iter().map(|v| v * scale).collect()
}

/// Builds the far-field structure for points `idx` (indices into `arena`)
/// contained in the ball `B(c, r_in)`, where `r ≥ 2·r_in` is the enclosing
/// scale the caller partitions at.
#[allow(clippy::too_many_arguments)]
pub fn preprocess_far<G: Rng>(
    arena: Arc<Dataset>,
    idx: Arc<Vec<u32>>,
    c: &[f64],
    r_in: f64,
    r: f64,
    kernel: &RadialKernel,
    eps: f64,
    xi: f64,
    delta: f64,
    rng: &mut G,
) -> Result<FarFieldDS> {
    let dim = arena.dim();
    if c.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
    }
    if !(r_in > 0.0 && r >= 2.0 * r_in) {
        return Err(Error::InvalidGeometry(format!(
            "far-field needs 0 < r_in and r >= 2*r_in, got r_in={r_in}, r={r}"
        )));
    }
    for &i in idx.iter() {
        let d = dist(arena.point(i as usize), c);
        if d > r_in * (1.0 + 1e-9) {
            return Err(Error::InvalidGeometry(format!(
                "point {i} at distance {d} outside containment ball of radius {r_in}"
            )));
        }
    }
    let r_min = r_in / 100.0;
    let band_hi = 4.0 * r_in / 3.0;
    let base_r = r - r_in / 3.0;
    // Ring h covers [2^h·base_r, 2^{h+1}·base_r]; the count is fixed by the
    // far radius, whose ratio to base_r depends only on eps and xi.
    let ring_count = (far_radius(base_r, eps, xi) / base_r).log2().ceil().max(0.0) as usize + 1;
    let smooth = kernel.smoothness_params()?;
    let shared_idx = idx;
    let n = shared_idx.len();
    let mut resamples = 0usize;
    'attempt: loop {
        let c0 = sample_in_ball(dim, r_in / 3.0, rng);
        let cen: Vec<f64> = c.iter().zip(&c0).map(|(a, b)| a + b).collect();
        // All rings share the same dataset band around the shifted center;
        // validate it once. A point landing inside r_min of the shifted
        // center is a low-probability event; redraw c₀ and rebuild.
        for &i in shared_idx.iter() {
            let d = dist(arena.point(i as usize), &cen);
            if d < r_min * (1.0 - 1e-9) || d > band_hi * (1.0 + 1e-9) {
                if resamples < MAX_RESAMPLES {
                    resamples += 1;
                    continue 'attempt;
                }
                return Err(Error::SideContract {
                    side: "inner",
                    norm: d,
                    lo: r_min,
                    hi: band_hi,
                });
            }
        }
        let mut halved = Vec::new();
        for h in 0..ring_count {
            let lo = (1u64 << h) as f64 * base_r;
            let geom = ShellGeometry::new(cen.clone(), r_min, band_hi, lo, 2.0 * lo)?;
            if n == 0 || halving_rounds(n, eps, delta, xi, &geom, smooth) == 0 {
                // Unhalved ring: served straight from the shared list, with
                // the geometry rebuilt from h on demand. Nothing to store.
                continue;
            }
            let built = process_captured(
                arena.clone(),
                (*shared_idx).clone(),
                kernel.clone(),
                geom,
                Side::Inner,
                eps,
                xi,
                delta,
                rng,
            );
            match built {
                Ok(cs) => halved.push((h, cs)),
                Err(Error::SideContract { .. }) if resamples < MAX_RESAMPLES => {
                    resamples += 1;
                    continue 'attempt;
                }
                Err(e) => return Err(e),
            }
        }
        return Ok(FarFieldDS {
            cen,
            r_min,
            r_in: band_hi,
            base_r,
            size: n,
            ring_count,
            idx: shared_idx,
            arena,
            xi,
            halved,
            resamples,
        });
    }
}

/// Answers a far query: picks the ring containing `‖q − cen‖` (ties go to
/// the lower ring) or collapses to `size·K(q, cen)` beyond the last ring.
pub fn query_far(q: &[f64], f: &FarFieldDS, k: &RadialKernel) -> Result<f64> {
    if q.len() != f.cen.len() {
        return Err(Error::DimensionMismatch { expected: f.cen.len(), got: q.len() });
    }
    let d = dist(q, &f.cen);
    if d < f.base_r * (1.0 - 1e-9) {
        return Err(Error::InvalidGeometry(format!(
            "far query at distance {d} inside base radius {}",
            f.base_r
        )));
    }
    let ratio = d / f.base_r;
    let h = if ratio <= 1.0 { 0 } else { (ratio.log2().ceil() as i64 - 1).max(0) as usize };
    if h >= f.ring_count {
        return Ok(f.size as f64 * k.kernel_eval(q, &f.cen)?);
    }
    if let Some((_, cs)) = f.halved.iter().find(|(i, _)| *i == h) {
        return query_captured(cs, q);
    }
    let cs = Coreset {
        idx: f.idx.clone(),
        arena: f.arena.clone(),
        weight_log2: 0,
        side: Side::Inner,
        oracle: EmbeddingOracle::new(k.clone(), ring_geom(f, h)?, f.xi)?,
        source_size: f.size,
    };
    query_captured(&cs, q)
}
