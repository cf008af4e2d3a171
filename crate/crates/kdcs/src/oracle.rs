//! Ground-truth references: exact kernel sums, exhaustive minimum
//! discrepancy on tiny instances, and a truncated-series evaluation of the
//! embedding inner product. These are deliberately independent of the fast
//! paths they validate.

use statrs::function::gamma::gamma;

use crate::core::{dist_sq, dot, norm_sq, sub, Dataset, ShellGeometry};
use crate::embedding::{EmbeddingOracle, Side};
use crate::kernels::{Family, RadialKernel};
use crate::{Error, Result};

/// An exact kernel sum together with the number of summed terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactAnswer {
    pub value: f64,
    pub terms: usize,
}

/// Exact KDE value `Σ_{p∈P} K(p, q)` with Kahan-compensated summation.
pub fn exact_kde(p: &Dataset, q: &[f64], k: &RadialKernel) -> Result<ExactAnswer> {
    if q.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: q.len() });
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in p.iter() {
        let v = k.g_unchecked(dist_sq(x, q));
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok(ExactAnswer { value: sum, terms: p.len() })
}

/// Largest instance the exhaustive discrepancy search accepts.
pub const MAX_EXHAUSTIVE: usize = 20;

/// Minimum over all `2^n` sign colorings of `|Σ χ_i·u_i|`, where `u_i` is
/// the inner product of the `i`-th feature vector with the test direction.
///
/// Uses a Gray-code walk so each coloring costs O(1).
pub fn exact_min_discrepancy(u_products: &[f64]) -> Result<f64> {
    let n = u_products.len();
    if n > MAX_EXHAUSTIVE {
        return Err(Error::TooLarge(format!(
            "exhaustive discrepancy limited to {MAX_EXHAUSTIVE} points, got {n}"
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    // Start from the all-plus coloring and flip one sign per step.
    let mut sum: f64 = u_products.iter().sum();
    let mut signs = vec![1.0f64; n];
    let mut best = sum.abs();
    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize; // Gray-code flip position
        signs[i] = -signs[i];
        sum += 2.0 * signs[i] * u_products[i];
        best = best.min(sum.abs());
    }
    Ok(best)
}

/// Truncated exponential series `Σ_{k=0}^{k_max} z^k/k!`, returning the sum
/// and the magnitude of the last term for convergence diagnostics.
fn truncated_exp(z: f64, k_max: usize) -> (f64, f64) {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..=k_max {
        term *= z / k as f64;
        sum += term;
    }
    (sum, term.abs())
}

/// Direct truncated-series evaluation of the embedding inner product:
/// `Σ_k ∫₀^{t₀} e^{−t(‖x‖²+‖y‖²)}·(2t·s)^k·⟨x,y⟩^k/k! · μ(dt)`,
/// with `s` the side-dependent scaling. Independent of the closed-form `Ψ`
/// path: the measure is integrated numerically with composite Simpson.
#[allow(clippy::too_many_arguments)]
pub fn series_embedding_inner(
    k: &RadialKernel,
    geom: &ShellGeometry,
    xi: f64,
    x: &[f64],
    sx: Side,
    y: &[f64],
    sy: Side,
    k_max: usize,
    quad_nodes: usize,
) -> Result<f64> {
    if k_max < 40 {
        return Err(Error::InvalidParameter(format!("k_max must be >= 40, got {k_max}")));
    }
    if quad_nodes < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "quad_nodes must be >= 10000, got {quad_nodes}"
        )));
    }
    let oracle = EmbeddingOracle::new(k.clone(), geom.clone(), xi)?;
    let zx = sub(x, &geom.center);
    let zy = sub(y, &geom.center);
    oracle.check_side(&zx, sx)?;
    oracle.check_side(&zy, sy)?;
    let rho = oracle.rho();
    let s = match (sx, sy) {
        (Side::Outer, Side::Outer) => rho * rho,
        (Side::Inner, Side::Inner) => 1.0 / (rho * rho),
        _ => 1.0,
    };
    let t0 = oracle.t0();
    let n2 = norm_sq(&zx) + norm_sq(&zy);
    let z_base = 2.0 * s * dot(&zx, &zy);
    let mut worst_tail = 0.0f64;
    // Per-node integrand value: e^{−t·n2} · Σ_k (z_base·t)^k/k!.
    let mut f = |t: f64| -> f64 {
        let (series, tail) = truncated_exp(z_base * t, k_max);
        let damp = (-t * n2).exp();
        worst_tail = worst_tail.max(tail * damp);
        damp * series
    };
    let value = match k.family() {
        Family::Cauchy => simpson(0.0, t0, quad_nodes, |t| f(t) * (-t).exp()),
        Family::RationalQuadratic { beta } => {
            // Substitute t = u² to keep the integrand smooth at the origin.
            let g = gamma(*beta);
            let beta = *beta;
            simpson(0.0, t0.sqrt(), quad_nodes, |u| {
                2.0 * u.powf(2.0 * beta - 1.0) * (-u * u).exp() * f(u * u) / g
            })
        }
        Family::ExpMixture { nodes } => {
            nodes.iter().filter(|(_, t)| *t <= t0).map(|&(w, t)| w * f(t)).sum()
        }
    };
    if worst_tail > 1e-9 * (1.0 + value.abs()) {
        return Err(Error::Quadrature(format!(
            "series tail {worst_tail:.3e} did not converge within {k_max} terms"
        )));
    }
    Ok(value)
}

/// Composite Simpson's rule with `intervals` subintervals (rounded up to
/// even).
fn simpson(lo: f64, hi: f64, intervals: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let n = intervals + intervals % 2;
    let h = (hi - lo) / n as f64;
    let mut sum = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(lo + i as f64 * h);
    }
    sum * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_kde_examples() {
        let k = RadialKernel::cauchy();
        let p = Dataset::new(vec![vec![0.3, -0.4]]).unwrap();
        assert_eq!(exact_kde(&p, &[0.3, -0.4], &k).unwrap().value, 1.0);
        let p = Dataset::new(vec![vec![1.0, 2.0]; 7]).unwrap();
        let a = exact_kde(&p, &[1.0, 2.0], &k).unwrap();
        assert_eq!(a.value, 7.0);
        assert_eq!(a.terms, 7);
        let p = Dataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(exact_kde(&p, &[0.0, 0.0], &k).unwrap().value, 1.0);
    }

    #[test]
    fn exact_kde_permutation_invariant_and_additive() {
        let k = RadialKernel::rational_quadratic(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec<f64>> =
            (0..50).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let q = vec![0.1, 0.2, -0.3, 0.4];
        let whole = exact_kde(&Dataset::new(pts.clone()).unwrap(), &q, &k).unwrap().value;
        let mut rev = pts.clone();
        rev.reverse();
        let permuted = exact_kde(&Dataset::new(rev).unwrap(), &q, &k).unwrap().value;
        assert_relative_eq!(whole, permuted, epsilon = 1e-12);
        let a = exact_kde(&Dataset::new(pts[..20].to_vec()).unwrap(), &q, &k).unwrap().value;
        let b = exact_kde(&Dataset::new(pts[20..].to_vec()).unwrap(), &q, &k).unwrap().value;
        assert_relative_eq!(whole, a + b, epsilon = 1e-12);
    }

    /// Second, structurally different exhaustive search: recomputes each
    /// coloring's sum from scratch by bit mask.
    fn min_discrepancy_by_mask(u: &[f64]) -> f64 {
        let n = u.len();
        let mut best = f64::INFINITY;
        for mask in 0u64..(1u64 << n) {
            let mut s = 0.0;
            for (i, &v) in u.iter().enumerate() {
                s += if mask >> i & 1 == 1 { v } else { -v };
            }
            best = best.min(s.abs());
        }
        best
    }

    #[test]
    fn min_discrepancy_examples() {
        assert_eq!(exact_min_discrepancy(&[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(exact_min_discrepancy(&[3.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(exact_min_discrepancy(&[0.0; 21]), Err(Error::TooLarge(_))));
    }

    #[test]
    fn min_discrepancy_matches_independent_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let u: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = exact_min_discrepancy(&u).unwrap();
            let b = min_discrepancy_by_mask(&u);
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    fn shell_geom() -> ShellGeometry {
        ShellGeometry::new(vec![0.0, 0.0, 0.0], 0.5, 1.0, 2.0, 4.0).unwrap()
    }

    #[test]
    fn series_orthogonal_points_reduce_to_zeroth_term() {
        let k = RadialKernel::cauchy();
        let geom = shell_geom();
        let xi = 1e-3;
        let x = [3.0, 0.0, 0.0];
        let y = [0.0, 0.8, 0.0];
        let got = series_embedding_inner(
            &k, &geom, xi, &x, Side::Outer, &y, Side::Inner, 60, 20_000,
        )
        .unwrap();
        // ⟨x,y⟩ = 0 leaves only ∫ e^{−t(‖x‖²+‖y‖²)} μ(dt) = Ψ(9.64, t₀).
        let oracle = EmbeddingOracle::new(k, geom, xi).unwrap();
        let want = oracle.kernel().psi(9.0 + 0.64, oracle.t0()).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-8);
    }

    #[test]
    fn series_matches_norm_on_inner_side() {
        for k in [RadialKernel::cauchy(), RadialKernel::rational_quadratic(1.5).unwrap()] {
            let geom = shell_geom();
            let xi = 1e-2;
            let z = [0.5, 0.5, 0.5];
            let got = series_embedding_inner(
                &k, &geom, xi, &z, Side::Inner, &z, Side::Inner, 60, 40_000,
            )
            .unwrap();
            let oracle = EmbeddingOracle::new(k, geom, xi).unwrap();
            let want = oracle.emb_norm_sq(&z, Side::Inner).unwrap();
            assert_relative_eq!(got, want, epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn series_mixed_pairs_land_in_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let k = RadialKernel::cauchy();
        let geom = shell_geom();
        let xi = 1e-2;
        for _ in 0..20 {
            let dir = |rng: &mut ChaCha8Rng, r: f64| -> Vec<f64> {
                let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = norm_sq(&v).sqrt().max(1e-9);
                v.iter().map(|t| t * r / n).collect()
            };
            let ry = rng.random_range(0.5..1.0);
            let y = dir(&mut rng, ry);
            let rx = rng.random_range(2.0..4.0);
            let x = dir(&mut rng, rx);
            let got = series_embedding_inner(
                &k, &geom, xi, &x, Side::Outer, &y, Side::Inner, 120, 20_000,
            )
            .unwrap();
            let kv = k.kernel_eval(&x, &y).unwrap();
            assert!(got <= kv + 1e-8);
            assert!(got >= kv - xi - 1e-8);
            // Cross-check against the closed-form inner product.
            let oracle = EmbeddingOracle::new(k.clone(), geom.clone(), xi).unwrap();
            let fast = oracle.emb_inner(&x, Side::Outer, &y, Side::Inner).unwrap();
            assert_relative_eq!(got, fast, epsilon = 1e-8, max_relative = 1e-8);
        }
    }
}
