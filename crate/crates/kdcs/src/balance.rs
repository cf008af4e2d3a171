//! Self-balancing signed walk and repeated-halving coresets.
//!
//! The walk assigns each point a sign in `{-1, +1}` while keeping every
//! running inner-product sum `s_j = Σ_{i<j} σ_i·⟨φ_i, φ_j⟩` small; the sign
//! probabilities are tilted against the current sum so the walk self-corrects.
//! Repeated halving keeps the smaller sign class for `T` rounds and doubles
//! the weight each time, producing a coreset whose weighted kernel sum tracks
//! that of the full captured set.

use std::sync::Arc;

use rand::Rng;

use crate::core::{dot, sub, Dataset, ShellGeometry};
use crate::embedding::{EmbeddingOracle, Side};
use crate::kernels::RadialKernel;
use crate::{Error, Result};

/// Pairwise inner-product access for the balancing walk. Implementations
/// expose a Gram matrix without materializing feature vectors.
pub trait GramOracle {
    /// Number of points.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inner product of the `i`-th and `j`-th feature vectors.
    fn dot(&self, i: usize, j: usize) -> Result<f64>;
}

/// Gram oracle over the shell embedding of a subset of an arena dataset.
///
/// Coordinates are centered on the shell once at construction and band
/// membership is validated for every point, so `dot` is pure arithmetic.
pub struct EmbeddingGram {
    oracle: EmbeddingOracle,
    side: Side,
    dim: usize,
    centered: Vec<f64>,
    norms_sq: Vec<f64>,
}

impl EmbeddingGram {
    pub fn new(
        oracle: EmbeddingOracle,
        arena: &Dataset,
        idx: &[u32],
        side: Side,
    ) -> Result<Self> {
        let dim = arena.dim();
        if oracle.geom().center.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: oracle.geom().center.len(),
            });
        }
        let mut centered = Vec::with_capacity(idx.len() * dim);
        let mut norms_sq = Vec::with_capacity(idx.len());
        for &i in idx {
            let z = sub(arena.point(i as usize), &oracle.geom().center);
            let n2 = oracle.check_side(&z, side)?;
            centered.extend_from_slice(&z);
            norms_sq.push(n2);
        }
        Ok(EmbeddingGram { oracle, side, dim, centered, norms_sq })
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.centered[i * self.dim..(i + 1) * self.dim]
    }
}

impl GramOracle for EmbeddingGram {
    fn len(&self) -> usize {
        self.norms_sq.len()
    }

    fn dot(&self, i: usize, j: usize) -> Result<f64> {
        self.oracle.inner_from_parts(
            self.norms_sq[i],
            self.norms_sq[j],
            dot(self.point(i), self.point(j)),
            self.side,
            self.side,
        )
    }
}

/// Runs the self-balancing walk, returning one sign per point.
///
/// With `c = 30·ln(n/δ)` and inner products normalized by the largest
/// squared feature norm, point `i` gets sign `+1` with probability
/// `clamp(1/2 − s_i/(2c), 0, 1)` where `s_i` is the running correlation of
/// earlier signed points with point `i`.
pub fn self_balancing_walk<G: GramOracle, R: Rng>(
    g: &G,
    delta: f64,
    rng: &mut R,
) -> Result<Vec<i8>> {
    let n = g.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta}")));
    }
    let mut diag_max: f64 = 0.0;
    for i in 0..n {
        let d = g.dot(i, i)?;
        if !d.is_finite() || d < 0.0 {
            return Err(Error::InvalidParameter(format!("gram diagonal g({i},{i}) = {d}")));
        }
        diag_max = diag_max.max(d);
    }
    let c = 30.0 * (n as f64 / delta).ln();
    let mut s = vec![0.0f64; n];
    let mut signs = vec![0i8; n];
    for i in 0..n {
        let p = if diag_max > 0.0 { (0.5 - s[i] / (2.0 * c)).clamp(0.0, 1.0) } else { 0.5 };
        let sigma: i8 = if rng.random::<f64>() < p { 1 } else { -1 };
        signs[i] = sigma;
        if diag_max > 0.0 {
            for j in (i + 1)..n {
                s[j] += f64::from(sigma) * g.dot(i, j)? / diag_max;
            }
        }
    }
    Ok(signs)
}

/// A weighted subset standing in for a captured point set on one side of a
/// shell. Point coordinates live in the shared arena; only indices are kept.
#[derive(Debug, Clone)]
pub struct Coreset {
    /// Indices into the arena, shared so far-field rings can alias the full
    /// index list when no halving happens.
    pub idx: Arc<Vec<u32>>,
    pub arena: Arc<Dataset>,
    /// Each surviving point counts for `2^weight_log2` originals.
    pub weight_log2: u32,
    /// Side of the shell the captured points lie on.
    pub side: Side,
    pub oracle: EmbeddingOracle,
    /// Size of the captured set before halving.
    pub source_size: usize,
}

/// Number of halving rounds `T` for a captured set of size `n`.
///
/// `T = max(0, ⌊log₂(ε·n/ln²(n/δ) · (1/L) · γ^t)⌋)` where
/// `γ = (r_out−r_in)/(2·r_max) · r_min/r_in · 1/√ln(1/ξ)` and `(L, t)` are
/// the kernel smoothness parameters, additionally capped at `⌊log₂ n⌋`.
pub fn halving_rounds(
    n: usize,
    eps: f64,
    delta: f64,
    xi: f64,
    geom: &ShellGeometry,
    smooth: (f64, f64),
) -> u32 {
    if n <= 1 {
        return 0;
    }
    let (l, t) = smooth;
    let gamma = (geom.r_out - geom.r_in) / (2.0 * geom.r_max) * (geom.r_min / geom.r_in)
        / (1.0 / xi).ln().sqrt();
    let log_sq = (n as f64 / delta).ln().powi(2);
    let budget = eps * n as f64 / log_sq / l * gamma.powf(t);
    if !(budget > 1.0) {
        return 0;
    }
    let t_rounds = budget.log2().floor() as u32;
    t_rounds.min((n as f64).log2().floor() as u32)
}

/// Upper bound on the coreset size implied by the halving analysis:
/// `ln²(n/δ)/ε · L · (2·r_max/(r_out−r_in) · r_in/r_min · √ln(1/ξ))^t`.
pub fn coreset_size_bound(
    n: usize,
    eps: f64,
    delta: f64,
    xi: f64,
    geom: &ShellGeometry,
    smooth: (f64, f64),
) -> f64 {
    let (l, t) = smooth;
    let inv_gamma = 2.0 * geom.r_max / (geom.r_out - geom.r_in) * (geom.r_in / geom.r_min)
        * (1.0 / xi).ln().sqrt();
    (n as f64 / delta).ln().powi(2) / eps * l * inv_gamma.powf(t)
}

/// Builds a coreset for the points of `idx` captured on `side` of the shell.
///
/// Runs `T` halving rounds, each a balancing walk with failure budget `δ/T`;
/// the smaller sign class survives (ties keep the `+1` class) and the weight
/// doubles. Every captured point must lie in its declared band.
#[allow(clippy::too_many_arguments)]
pub fn process_captured<R: Rng>(
    arena: Arc<Dataset>,
    idx: Vec<u32>,
    kernel: RadialKernel,
    geom: ShellGeometry,
    side: Side,
    eps: f64,
    xi: f64,
    delta: f64,
    rng: &mut R,
) -> Result<Coreset> {
    let oracle = EmbeddingOracle::new(kernel, geom, xi)?;
    let smooth = oracle.kernel().smoothness_params()?;
    let source_size = idx.len();
    if source_size == 0 {
        return Ok(Coreset {
            idx: Arc::new(idx),
            arena,
            weight_log2: 0,
            side,
            oracle,
            source_size,
        });
    }
    let t_rounds = halving_rounds(source_size, eps, delta, xi, oracle.geom(), smooth);
    if t_rounds == 0 {
        // Still validate the side contract so bad captures surface at build.
        EmbeddingGram::new(oracle.clone(), &arena, &idx, side)?;
        return Ok(Coreset {
            idx: Arc::new(idx),
            arena,
            weight_log2: 0,
            side,
            oracle,
            source_size,
        });
    }
    let round_delta = delta / f64::from(t_rounds);
    let mut current = idx;
    let mut done = 0u32;
    for _ in 0..t_rounds {
        let gram = EmbeddingGram::new(oracle.clone(), &arena, &current, side)?;
        let signs = self_balancing_walk(&gram, round_delta, rng)?;
        let plus: Vec<u32> = current
            .iter()
            .zip(&signs)
            .filter(|(_, &s)| s > 0)
            .map(|(&i, _)| i)
            .collect();
        let minus: Vec<u32> = current
            .iter()
            .zip(&signs)
            .filter(|(_, &s)| s < 0)
            .map(|(&i, _)| i)
            .collect();
        current = if plus.len() <= minus.len() { plus } else { minus };
        done += 1;
        if current.is_empty() {
            break;
        }
    }
    Ok(Coreset {
        idx: Arc::new(current),
        arena,
        weight_log2: done,
        side,
        oracle,
        source_size,
    })
}

/// Weighted kernel sum of the coreset at a query on the opposite side:
/// `2^T · Σ_{p ∈ S} K(p, q)`. The query must lie in the band opposite the
/// coreset's side.
pub fn query_captured(cs: &Coreset, q: &[f64]) -> Result<f64> {
    if q.len() != cs.arena.dim() {
        return Err(Error::DimensionMismatch { expected: cs.arena.dim(), got: q.len() });
    }
    let z = sub(q, &cs.oracle.geom().center);
    cs.oracle.check_side(&z, cs.side.opposite())?;
    if cs.idx.is_empty() {
        return Ok(0.0);
    }
    let weight = (2.0f64).powi(cs.weight_log2 as i32);
    let mut sum = 0.0;
    let mut comp = 0.0; // Kahan compensation
    for &i in cs.idx.iter() {
        let v = cs.oracle.kernel().g_unchecked(crate::core::dist_sq(cs.arena.point(i as usize), q));
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok(weight * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::norm_sq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct DiagGram(usize);
    impl GramOracle for DiagGram {
        fn len(&self) -> usize {
            self.0
        }
        fn dot(&self, i: usize, j: usize) -> Result<f64> {
            Ok(if i == j { 1.0 } else { 0.0 })
        }
    }

    fn shell_points(
        geom: &ShellGeometry,
        side_lo: f64,
        side_hi: f64,
        n: usize,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let nrm = norm_sq(&dir).sqrt().max(1e-12);
                let r = rng.random_range(side_lo..side_hi);
                dir.iter().zip(&geom.center).map(|(v, c)| c + v * r / nrm).collect()
            })
            .collect()
    }

    #[test]
    fn walk_on_orthogonal_points_is_fair_coin() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let signs = self_balancing_walk(&DiagGram(2000), 0.01, &mut rng).unwrap();
        assert_eq!(signs.len(), 2000);
        assert!(signs.iter().all(|&s| s == 1 || s == -1));
        let plus = signs.iter().filter(|&&s| s > 0).count();
        // Unbiased coins: the count concentrates around n/2.
        assert!((plus as i64 - 1000).abs() < 150, "plus count {plus}");
    }

    #[test]
    fn walk_keeps_running_sums_bounded() {
        // On real shell data the normalized running sums must stay within
        // the reflecting band [-c, c] enforced by the clamped probabilities.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let geom = ShellGeometry::new(vec![0.0; 4], 0.5, 1.0, 2.0, 4.0).unwrap();
        let pts = shell_points(&geom, 0.5, 1.0, 300, 4, &mut rng);
        let arena = Dataset::new(pts).unwrap();
        let idx: Vec<u32> = (0..300).collect();
        let oracle =
            EmbeddingOracle::new(RadialKernel::cauchy(), geom, 1e-3).unwrap();
        let gram = EmbeddingGram::new(oracle, &arena, &idx, Side::Inner).unwrap();
        let n = gram.len();
        let mut diag_max: f64 = 0.0;
        for i in 0..n {
            diag_max = diag_max.max(gram.dot(i, i).unwrap());
        }
        let delta = 0.01;
        let c = 30.0 * (n as f64 / delta).ln();
        let signs = self_balancing_walk(&gram, delta, &mut rng).unwrap();
        let mut s = vec![0.0f64; n];
        for i in 0..n {
            assert!(s[i].abs() <= c + 1.0, "running sum escaped the band: {}", s[i]);
            for j in (i + 1)..n {
                s[j] += f64::from(signs[i]) * gram.dot(i, j).unwrap() / diag_max;
            }
        }
    }

    #[test]
    fn no_halving_keeps_full_set_with_unit_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let geom = ShellGeometry::new(vec![0.0; 3], 0.5, 1.0, 2.0, 4.0).unwrap();
        let pts = shell_points(&geom, 0.5, 1.0, 40, 3, &mut rng);
        let arena = Arc::new(Dataset::new(pts).unwrap());
        let idx: Vec<u32> = (0..40).collect();
        let cs = process_captured(
            arena,
            idx.clone(),
            RadialKernel::cauchy(),
            geom,
            Side::Inner,
            0.2,
            1e-4,
            0.01,
            &mut rng,
        )
        .unwrap();
        assert_eq!(cs.weight_log2, 0);
        assert_eq!(cs.idx.as_slice(), idx.as_slice());
        assert_eq!(cs.source_size, 40);
    }

    #[test]
    fn aggressive_parameters_force_halving() {
        // Wide shell, large eps/xi/delta: the round count is positive and the
        // surviving set shrinks roughly geometrically.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let geom = ShellGeometry::new(vec![0.0; 3], 1.0, 1.0, 2.0, 2.0).unwrap();
        let n = 4096usize;
        let t = halving_rounds(n, 0.9, 0.5, 0.9, &geom, (1.0, 2.0));
        assert!(t >= 2, "expected at least two rounds, got {t}");
        let pts = shell_points(&geom, 1.0, 1.0 + 1e-12, n, 3, &mut rng);
        let arena = Arc::new(Dataset::new(pts).unwrap());
        let idx: Vec<u32> = (0..n as u32).collect();
        let cs = process_captured(
            arena.clone(),
            idx,
            RadialKernel::cauchy(),
            geom.clone(),
            Side::Inner,
            0.9,
            0.9,
            0.5,
            &mut rng,
        )
        .unwrap();
        assert_eq!(cs.weight_log2, t);
        assert!(cs.idx.len() <= n / (1 << (t - 1)), "coreset too large: {}", cs.idx.len());
        // Flooring the round count can leave up to twice the analytic size.
        let bound = coreset_size_bound(n, 0.9, 0.5, 0.9, &geom, (1.0, 2.0));
        assert!((cs.idx.len() as f64) <= 2.0 * bound, "size bound violated: {}", cs.idx.len());
        // The weighted estimate tracks the exact sum at an outer query.
        let q = vec![2.0, 0.0, 0.0];
        let est = query_captured(&cs, &q).unwrap();
        let exact: f64 = arena
            .iter()
            .map(|p| RadialKernel::cauchy().g_unchecked(crate::core::dist_sq(p, &q)))
            .sum();
        assert!(
            (est - exact).abs() <= 0.9 * exact + 2.0 * 0.9 * n as f64,
            "estimate {est} vs exact {exact}"
        );
    }

    #[test]
    fn query_side_contract_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let geom = ShellGeometry::new(vec![0.0; 3], 0.5, 1.0, 2.0, 4.0).unwrap();
        let pts = shell_points(&geom, 0.5, 1.0, 10, 3, &mut rng);
        let arena = Arc::new(Dataset::new(pts).unwrap());
        let cs = process_captured(
            arena,
            (0..10).collect(),
            RadialKernel::cauchy(),
            geom,
            Side::Inner,
            0.2,
            1e-4,
            0.01,
            &mut rng,
        )
        .unwrap();
        // Query inside the gap violates the opposite-band requirement.
        let q = vec![1.5, 0.0, 0.0];
        assert!(matches!(query_captured(&cs, &q), Err(Error::SideContract { .. })));
        let q = vec![3.0, 0.0, 0.0];
        assert!(query_captured(&cs, &q).is_ok());
    }

    #[test]
    fn mixture_without_smoothness_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let geom = ShellGeometry::new(vec![0.0; 2], 0.5, 1.0, 2.0, 4.0).unwrap();
        let arena = Arc::new(Dataset::new(vec![vec![0.6, 0.0]]).unwrap());
        let k = RadialKernel::exp_mixture(vec![(0.5, 1.0), (0.5, 2.0)]).unwrap();
        let r = process_captured(
            arena,
            vec![0],
            k,
            geom,
            Side::Inner,
            0.2,
            1e-4,
            0.01,
            &mut rng,
        );
        assert!(matches!(r, Err(Error::KernelConfig(_))));
    }

    #[test]
    fn empty_capture_yields_zero_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let geom = ShellGeometry::new(vec![0.0; 2], 0.5, 1.0, 2.0, 4.0).unwrap();
        let arena = Arc::new(Dataset::new(vec![vec![0.6, 0.0]]).unwrap());
        let cs = process_captured(
            arena,
            vec![],
            RadialKernel::cauchy(),
            geom,
            Side::Inner,
            0.2,
            1e-4,
            0.01,
            &mut rng,
        )
        .unwrap();
        assert_eq!(query_captured(&cs, &[3.0, 0.0]).unwrap(), 0.0);
    }
}
