//! Shell-scaled truncated feature embeddings.
//!
//! For a shell with radii `r_min ≤ r_in < r_out ≤ r_max` and an additive
//! budget `ξ`, points with norm in `[r_min, r_in]` (the *Inner* band) and
//! points with norm in `[r_out, r_max]` (the *Outer* band) are mapped into a
//! Hilbert space where
//!
//! * mixed-band inner products approximate the kernel one-sidedly:
//!   `K(x, y) − ξ ≤ ⟨φ(x), φ(y)⟩ ≤ K(x, y)`, and
//! * norms shrink with the distance of the band from the shell, which is
//!   what buys the balancing walk its discrepancy bound.
//!
//! No feature vectors are materialized: with
//! `t₀ = ln(1/ξ)/(r_out − r_in)²` and `ρ = 1 − min{1/(t₀·r_in²), 1/2}`,
//! every inner product reduces to one `Ψ` evaluation at a shifted argument.
//! All points handed to this module are in shell-centered coordinates
//! (callers subtract the shell center first).

use crate::core::{dot, norm_sq, ShellGeometry};
use crate::kernels::RadialKernel;
use crate::{Error, Result};

/// Which radius band of the shell a point lies in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Norm in `[r_min, r_in]`.
    Inner,
    /// Norm in `[r_out, r_max]`.
    Outer,
}

impl Side {
    /// The band queries must lie in when the dataset lies in `self`.
    pub fn opposite(self) -> Side {
        match self {
            Side::Inner => Side::Outer,
            Side::Outer => Side::Inner,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Inner => "inner",
            Side::Outer => "outer",
        }
    }
}

/// Relative tolerance used when checking band membership, absorbing the
/// round-off introduced by centering coordinates.
pub const SIDE_TOL: f64 = 1e-9;

/// Inner products and squared norms of the shell embedding, all computed
/// through [`RadialKernel::psi`].
#[derive(Debug, Clone)]
pub struct EmbeddingOracle {
    kernel: RadialKernel,
    geom: ShellGeometry,
    xi: f64,
    t0: f64,
    rho: f64,
}

impl EmbeddingOracle {
    /// Builds the oracle, deriving `t₀` and `ρ` from the geometry and `ξ`.
    pub fn new(kernel: RadialKernel, geom: ShellGeometry, xi: f64) -> Result<Self> {
        geom.validate()?;
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::InvalidParameter(format!("xi must lie in (0,1), got {xi}")));
        }
        let width = geom.r_out - geom.r_in;
        if width <= 0.0 {
            return Err(Error::InvalidGeometry("r_out must exceed r_in".into()));
        }
        let t0 = (1.0 / xi).ln() / (width * width);
        let rho = 1.0 - (1.0 / (t0 * geom.r_in * geom.r_in)).min(0.5);
        Ok(EmbeddingOracle { kernel, geom, xi, t0, rho })
    }

    pub fn kernel(&self) -> &RadialKernel {
        &self.kernel
    }

    pub fn geom(&self) -> &ShellGeometry {
        &self.geom
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Band bounds `[lo, hi]` for a side.
    pub fn band(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Inner => (self.geom.r_min, self.geom.r_in),
            Side::Outer => (self.geom.r_out, self.geom.r_max),
        }
    }

    /// Checks that a shell-centered point lies in its declared band and
    /// returns its squared norm.
    pub fn check_side(&self, z: &[f64], side: Side) -> Result<f64> {
        let n2 = norm_sq(z);
        let n = n2.sqrt();
        let (lo, hi) = self.band(side);
        if n < lo * (1.0 - SIDE_TOL) || n > hi * (1.0 + SIDE_TOL) {
            return Err(Error::SideContract { side: side.name(), norm: n, lo, hi });
        }
        Ok(n2)
    }

    /// `⟨φ(x), φ(y)⟩` for shell-centered points on their declared sides.
    pub fn emb_inner(&self, x: &[f64], sx: Side, y: &[f64], sy: Side) -> Result<f64> {
        let nx2 = self.check_side(x, sx)?;
        let ny2 = self.check_side(y, sy)?;
        if sx != sy {
            // With unit scaling the argument is exactly ‖x − y‖²; computing
            // it directly avoids the cancellation of the expanded form and
            // matches the kernel's own distance path bit for bit.
            return self.kernel.psi(crate::core::dist_sq(x, y), self.t0);
        }
        self.inner_from_parts(nx2, ny2, dot(x, y), sx, sy)
    }

    /// `⟨φ(x), φ(y)⟩` from precomputed squared norms and dot product.
    /// Callers must have validated band membership.
    pub(crate) fn inner_from_parts(
        &self,
        nx2: f64,
        ny2: f64,
        dot_xy: f64,
        sx: Side,
        sy: Side,
    ) -> Result<f64> {
        // The ρ-scaling on the Outer side and 1/ρ on the Inner side cancel
        // for mixed pairs and compound for same-side pairs.
        let s = match (sx, sy) {
            (Side::Outer, Side::Outer) => self.rho * self.rho,
            (Side::Inner, Side::Inner) => 1.0 / (self.rho * self.rho),
            _ => 1.0,
        };
        let a = nx2 + ny2 - 2.0 * s * dot_xy;
        self.kernel.psi(a, self.t0)
    }

    /// `‖φ(z)‖²` for a shell-centered point on its declared side.
    pub fn emb_norm_sq(&self, z: &[f64], side: Side) -> Result<f64> {
        let n2 = self.check_side(z, side)?;
        self.norm_sq_from_parts(n2, side)
    }

    /// `‖φ(z)‖²` from a precomputed squared norm.
    pub(crate) fn norm_sq_from_parts(&self, n2: f64, side: Side) -> Result<f64> {
        let a = match side {
            Side::Outer => 2.0 * (1.0 - self.rho * self.rho) * n2,
            Side::Inner => -2.0 * (1.0 / (self.rho * self.rho) - 1.0) * n2,
        };
        self.kernel.psi(a, self.t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn geom(r_min: f64, r_in: f64, r_out: f64, r_max: f64) -> ShellGeometry {
        ShellGeometry::new(vec![0.0, 0.0, 0.0], r_min, r_in, r_out, r_max).unwrap()
    }

    #[test]
    fn oracle_parameters_from_geometry() {
        let k = RadialKernel::cauchy();
        // r_in = 1, r_out = 2, xi = e^-4: t0 = 4, rho = 1 - 1/4.
        let o = EmbeddingOracle::new(k.clone(), geom(0.5, 1.0, 2.0, 4.0), (-4.0f64).exp()).unwrap();
        assert_relative_eq!(o.t0(), 4.0, epsilon = 1e-12);
        assert_relative_eq!(o.rho(), 0.75, epsilon = 1e-12);
        // r_in = 0.1, r_out = 0.2, xi = e^-1: t0 = 100, the min clamps at 1/2.
        let o =
            EmbeddingOracle::new(k.clone(), geom(0.05, 0.1, 0.2, 0.4), (-1.0f64).exp()).unwrap();
        assert_relative_eq!(o.t0(), 100.0, epsilon = 1e-9);
        assert_relative_eq!(o.rho(), 0.5, epsilon = 1e-12);
        // r_in = 10, r_out = 11, xi = e^-1: t0 = 1, rho = 0.99.
        let o =
            EmbeddingOracle::new(k.clone(), geom(1.0, 10.0, 11.0, 20.0), (-1.0f64).exp()).unwrap();
        assert_relative_eq!(o.t0(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(o.rho(), 0.99, epsilon = 1e-12);
        // Degenerate width is rejected at geometry construction.
        assert!(ShellGeometry::new(vec![0.0], 0.5, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn mixed_sides_sandwich_cauchy() {
        // ‖x−y‖² = 3 with t0 = 4 (r_in=1, r_out=2, xi=e^-4):
        // Ψ(3, 4) = (1 − e^{−16})/4, and K = 0.25.
        let k = RadialKernel::cauchy();
        let xi = (-4.0f64).exp();
        let o = EmbeddingOracle::new(k.clone(), geom(0.5, 1.0, 2.0, 4.0), xi).unwrap();
        let y = [1.0, 0.0, 0.0]; // inner band
        let x = [2.0, 1.0, 1.0]; // norm sqrt(6) in outer band; ‖x−y‖² = 3
        let got = o.emb_inner(&x, Side::Outer, &y, Side::Inner).unwrap();
        assert_relative_eq!(got, (1.0 - (-16.0f64).exp()) / 4.0, epsilon = 1e-14);
        let kv = k.kernel_eval(&x, &y).unwrap();
        assert!(got <= kv && got >= kv - xi);
    }

    #[test]
    fn inner_norm_consistency_with_self_inner_product() {
        let k = RadialKernel::rational_quadratic(2.0).unwrap();
        let o = EmbeddingOracle::new(k, geom(0.5, 1.0, 2.0, 4.0), 1e-3).unwrap();
        let y = [0.4, 0.5, 0.6]; // norm ~0.877 in [0.5, 1]
        let via_inner = o.emb_inner(&y, Side::Inner, &y, Side::Inner).unwrap();
        let via_norm = o.emb_norm_sq(&y, Side::Inner).unwrap();
        assert_relative_eq!(via_inner, via_norm, epsilon = 1e-12);
    }

    #[test]
    fn outer_norm_matches_cauchy_closed_form() {
        // For the Cauchy kernel, Ψ(a, t0) = (1 − e^{−t0(a+1)})/(a+1) with
        // a = 2(1 − ρ²)‖z‖² on the outer side.
        let k = RadialKernel::cauchy();
        let o = EmbeddingOracle::new(k, geom(0.5, 1.0, 2.0, 4.0), (-4.0f64).exp()).unwrap();
        let z = [3.0, 0.0, 0.0];
        let a = 2.0 * (1.0 - o.rho() * o.rho()) * 9.0;
        let want = (1.0 - (-o.t0() * (a + 1.0)).exp()) / (a + 1.0);
        let got = o.emb_norm_sq(&z, Side::Outer).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-13);
        assert!(got <= 1.0 + 1e-12);
    }

    #[test]
    fn inner_exponent_stays_bounded() {
        // Across a grid of geometries, the Ψ argument for inner-side norms
        // satisfies t0·|a| ≤ 12, so evaluation never overflows.
        let k = RadialKernel::cauchy();
        for &(r_in, width, ln_inv_xi) in &[
            (1.0, 0.1, 0.5),
            (1.0, 1.0, 8.0),
            (0.1, 0.05, 2.0),
            (10.0, 0.5, 12.0),
            (3.0, 6.0, 1.0),
        ] {
            let g = geom(r_in / 100.0, r_in, r_in + width, 4.0 * (r_in + width));
            let o = EmbeddingOracle::new(k.clone(), g, (-ln_inv_xi as f64).exp()).unwrap();
            let z = [r_in, 0.0, 0.0];
            let a = 2.0 * (1.0 / (o.rho() * o.rho()) - 1.0) * r_in * r_in;
            assert!(o.t0() * a <= 12.0 + 1e-9, "exponent {} too large", o.t0() * a);
            assert!(o.emb_norm_sq(&z, Side::Inner).is_ok());
        }
    }

    #[test]
    fn side_contract_enforced() {
        let o = EmbeddingOracle::new(RadialKernel::cauchy(), geom(0.5, 1.0, 2.0, 4.0), 1e-3)
            .unwrap();
        let too_small = [0.1, 0.0, 0.0];
        assert!(matches!(
            o.emb_norm_sq(&too_small, Side::Inner),
            Err(Error::SideContract { .. })
        ));
        let in_gap = [1.5, 0.0, 0.0];
        assert!(o.emb_norm_sq(&in_gap, Side::Inner).is_err());
        assert!(o.emb_norm_sq(&in_gap, Side::Outer).is_err());
    }

    #[test]
    fn same_side_gram_matrices_are_psd() {
        let k = RadialKernel::cauchy();
        let o = EmbeddingOracle::new(k, geom(0.5, 1.0, 2.0, 4.0), 1e-4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for side in [Side::Inner, Side::Outer] {
            let (lo, hi) = o.band(side);
            let pts: Vec<Vec<f64>> = (0..8)
                .map(|_| {
                    let dir: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let n = norm_sq(&dir).sqrt();
                    let r = rng.random_range(lo..hi);
                    dir.iter().map(|v| v * r / n).collect()
                })
                .collect();
            let m = pts.len();
            let mut g = vec![vec![0.0; m]; m];
            for i in 0..m {
                for j in 0..m {
                    g[i][j] = o.emb_inner(&pts[i], side, &pts[j], side).unwrap();
                }
            }
            // Smallest eigenvalue via shifted power iteration on (cI - G).
            let trace: f64 = (0..m).map(|i| g[i][i]).sum();
            let c = trace; // upper bound on the largest eigenvalue
            let mut v = vec![1.0; m];
            for _ in 0..500 {
                let mut w = vec![0.0; m];
                for i in 0..m {
                    for j in 0..m {
                        w[i] += (if i == j { c } else { 0.0 } - g[i][j]) * v[j];
                    }
                }
                let n = norm_sq(&w).sqrt();
                v = w.iter().map(|x| x / n).collect();
            }
            let mut gv = vec![0.0; m];
            for i in 0..m {
                for j in 0..m {
                    gv[i] += g[i][j] * v[j];
                }
            }
            let lambda_min = dot(&v, &gv);
            assert!(lambda_min >= -1e-8, "gram matrix not PSD: λ_min = {lambda_min}");
        }
    }

    #[test]
    fn mixed_side_sandwich_randomized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let k = RadialKernel::rational_quadratic(1.5).unwrap();
        for _ in 0..500 {
            let r_in: f64 = rng.random_range(0.2..5.0);
            let width: f64 = r_in * rng.random_range(0.05..1.0);
            let r_out = r_in + width;
            let g = geom(r_in / 50.0, r_in, r_out, r_out * rng.random_range(1.5..4.0));
            let xi = (-rng.random_range(0.5..10.0f64)).exp();
            let o = EmbeddingOracle::new(k.clone(), g, xi).unwrap();
            let mut sample = |lo: f64, hi: f64| -> Vec<f64> {
                let dir: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = norm_sq(&dir).sqrt().max(1e-12);
                let r = rng.random_range(lo..hi);
                dir.iter().map(|v| v * r / n).collect()
            };
            let (ilo, ihi) = o.band(Side::Inner);
            let (olo, ohi) = o.band(Side::Outer);
            let y = sample(ilo, ihi);
            let x = sample(olo, ohi);
            let got = o.emb_inner(&x, Side::Outer, &y, Side::Inner).unwrap();
            let kv = k.kernel_eval(&x, &y).unwrap();
            assert!(got <= kv + 1e-12, "inner product {got} above kernel {kv}");
            assert!(got >= kv - xi - 1e-12, "inner product {got} below K - ξ");
        }
    }
}
