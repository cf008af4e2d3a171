//! Positive-definite (L,t)-smooth radial kernels.
//!
//! A kernel is `K(x, y) = G(‖x − y‖²)` for a completely monotone `G` with
//! `G(0) = 1`. Complete monotonicity gives a nonnegative measure `μ` with
//! `G(λ) = ∫₀^∞ e^{−tλ} μ(dt)`; the only primitive the embedding layer needs
//! from a kernel is the truncated transform
//!
//! ```text
//! Ψ(a, t₀) = ∫₀^{t₀} e^{−t·a} μ(dt).
//! ```
//!
//! Three families are supported, each with an analytic `μ`:
//!
//! * `Cauchy`: `G(λ) = 1/(1+λ)`, `μ(dt) = e^{−t} dt`.
//! * `RationalQuadratic(β)`: `G(λ) = (1+λ)^{−β}`, `μ` the Gamma(β, 1) density.
//! * `ExpMixture`: `G(λ) = Σ wᵢ e^{−tᵢ λ}`, an escape hatch for approximating
//!   other kernels by a finite mixture of exponentials.

use std::sync::OnceLock;

use statrs::function::gamma::{gamma, gamma_lr};

use crate::core::dist_sq;
use crate::{Error, Result};

/// Maximum admissible value of `t₀ · max(0, −a)` in [`RadialKernel::psi`];
/// beyond this the integrand overflows and callers are in breach of the
/// embedding-layer contract that keeps exponents bounded.
pub const PSI_EXPONENT_CAP: f64 = 50.0;

/// Kernel family descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Cauchy,
    RationalQuadratic { beta: f64 },
    /// Nodes are `(weight, rate)` pairs with nonnegative entries and weights
    /// summing to at most 1.
    ExpMixture { nodes: Vec<(f64, f64)> },
}

/// A positive-definite radial kernel together with its smoothness
/// parameters `(L, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialKernel {
    family: Family,
    smooth: Option<(f64, f64)>,
}

impl RadialKernel {
    /// The Cauchy kernel `G(λ) = 1/(1+λ)`; smoothness `(1, 2)`.
    pub fn cauchy() -> Self {
        RadialKernel { family: Family::Cauchy, smooth: Some((1.0, 2.0)) }
    }

    /// The rational-quadratic kernel `G(λ) = (1+λ)^{−β}` for `β ≥ 1`;
    /// smoothness `(1, 2β)`.
    pub fn rational_quadratic(beta: f64) -> Result<Self> {
        if !(beta >= 1.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be >= 1, got {beta}")));
        }
        Ok(RadialKernel {
            family: Family::RationalQuadratic { beta },
            smooth: Some((1.0, 2.0 * beta)),
        })
    }

    /// A finite mixture of exponentials. Smoothness parameters cannot be
    /// derived automatically; attach them with [`RadialKernel::with_smoothness`]
    /// or calls to [`RadialKernel::smoothness_params`] will fail.
    pub fn exp_mixture(nodes: Vec<(f64, f64)>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::KernelConfig("mixture needs at least one node".into()));
        }
        let mut total = 0.0;
        for &(w, t) in &nodes {
            if !(w >= 0.0) || !(t >= 0.0) || !w.is_finite() || !t.is_finite() {
                return Err(Error::KernelConfig(format!(
                    "mixture nodes need finite nonnegative entries, got ({w}, {t})"
                )));
            }
            total += w;
        }
        if total <= 0.0 || total > 1.0 + 1e-12 {
            return Err(Error::KernelConfig(format!(
                "mixture weights must sum to a value in (0, 1], got {total}"
            )));
        }
        Ok(RadialKernel { family: Family::ExpMixture { nodes }, smooth: None })
    }

    /// Attaches user-supplied smoothness parameters `(L, t)`, both `≥ 1`.
    pub fn with_smoothness(mut self, l: f64, t: f64) -> Result<Self> {
        if !(l >= 1.0 && t >= 1.0) || !l.is_finite() || !t.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "smoothness parameters must be >= 1, got ({l}, {t})"
            )));
        }
        self.smooth = Some((l, t));
        Ok(self)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// `G(λ)` for `λ ≥ 0`. Values lie in `[0, 1]` and `G(0) ≤ 1` with
    /// equality whenever the measure has total mass 1.
    pub fn eval_g(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(self.g_unchecked(lambda))
    }

    #[inline]
    pub(crate) fn g_unchecked(&self, lambda: f64) -> f64 {
        match &self.family {
            Family::Cauchy => 1.0 / (1.0 + lambda),
            Family::RationalQuadratic { beta } => (1.0 + lambda).powf(-beta),
            Family::ExpMixture { nodes } => {
                nodes.iter().map(|&(w, t)| w * (-t * lambda).exp()).sum()
            }
        }
    }

    /// `K(x, y) = G(‖x − y‖²)`.
    pub fn kernel_eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        Ok(self.g_unchecked(dist_sq(x, y)))
    }

    /// The truncated transform `Ψ(a, t₀) = ∫₀^{t₀} e^{−t·a} μ(dt)`.
    ///
    /// Closed forms are used wherever available; the rational-quadratic
    /// family falls back to adaptive Gauss–Legendre quadrature when
    /// `a + 1 ≤ 0` (where the incomplete-gamma form does not apply).
    pub fn psi(&self, a: f64, t0: f64) -> Result<f64> {
        if !(t0 > 0.0) || !t0.is_finite() {
            return Err(Error::InvalidParameter(format!("t0 must be finite and > 0, got {t0}")));
        }
        if t0 * (-a).max(0.0) > PSI_EXPONENT_CAP {
            return Err(Error::InvalidParameter(format!(
                "psi exponent t0*max(0,-a) = {} exceeds cap {PSI_EXPONENT_CAP}",
                t0 * (-a).max(0.0)
            )));
        }
        let raw = match &self.family {
            Family::Cauchy => Ok(t0 * em1_ratio(t0 * (a + 1.0))),
            Family::RationalQuadratic { beta } => {
                let s = a + 1.0;
                if s > 0.0 {
                    // γ(β, t0·s) / (Γ(β)·s^β), written as G(a)·P(β, t0·s);
                    // since the regularized P is in [0, 1], Ψ ≤ G holds
                    // exactly in floating point.
                    Ok((1.0 + a).powf(-beta) * gamma_lr(*beta, t0 * s))
                } else if s == 0.0 {
                    Ok(t0.powf(*beta) / (beta * gamma(*beta)))
                } else {
                    // Quadrature of t^{β−1} e^{−t·s} / Γ(β) under t = u²,
                    // which removes the endpoint singularity for β ≥ 1.
                    let b = *beta;
                    let gamma_b = gamma(b);
                    adaptive_gauss_legendre(0.0, t0.sqrt(), 1e-12, |u| {
                        if u <= 0.0 {
                            0.0
                        } else {
                            2.0 * u.powf(2.0 * b - 1.0) * (-u * u * s).exp() / gamma_b
                        }
                    })
                }
            }
            // The mixture's measure is discrete (an atom of mass w_i at
            // each rate t_i), so the truncated transform keeps exactly the
            // atoms with t_i <= t0.
            Family::ExpMixture { nodes } => Ok(nodes
                .iter()
                .filter(|&&(_, ti)| ti <= t0)
                .map(|&(w, ti)| w * (-ti * a).exp())
                .sum()),
        }?;
        // Ψ(a, t0) ≤ G(a) holds for the underlying integrals; clamp so the
        // inequality also survives the differing rounding paths.
        if a >= 0.0 {
            Ok(raw.min(self.g_unchecked(a)))
        } else {
            Ok(raw)
        }
    }

    /// The smoothness parameters `(L, t)` of the kernel.
    pub fn smoothness_params(&self) -> Result<(f64, f64)> {
        self.smooth.ok_or_else(|| {
            Error::KernelConfig(
                "mixture kernels need user-supplied smoothness parameters".into(),
            )
        })
    }

    /// Textual descriptor: `cauchy`, `rq:<beta>`, or
    /// `expmix:<w1>:<t1>,<w2>:<t2>,...`.
    pub fn descriptor(&self) -> String {
        match &self.family {
            Family::Cauchy => "cauchy".into(),
            Family::RationalQuadratic { beta } => format!("rq:{beta}"),
            Family::ExpMixture { nodes } => {
                let body: Vec<String> =
                    nodes.iter().map(|(w, t)| format!("{w}:{t}")).collect();
                format!("expmix:{}", body.join(","))
            }
        }
    }

    /// Parses a descriptor produced by [`RadialKernel::descriptor`].
    pub fn parse_descriptor(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "cauchy" {
            return Ok(Self::cauchy());
        }
        if let Some(beta) = s.strip_prefix("rq:") {
            let beta: f64 = beta
                .parse()
                .map_err(|_| Error::KernelConfig(format!("bad beta in descriptor {s:?}")))?;
            return Self::rational_quadratic(beta);
        }
        if let Some(body) = s.strip_prefix("expmix:") {
            let mut nodes = Vec::new();
            for part in body.split(',') {
                let (w, t) = part.split_once(':').ok_or_else(|| {
                    Error::KernelConfig(format!("bad mixture node {part:?} in descriptor"))
                })?;
                let w: f64 = w.parse().map_err(|_| {
                    Error::KernelConfig(format!("bad mixture weight {w:?} in descriptor"))
                })?;
                let t: f64 = t.parse().map_err(|_| {
                    Error::KernelConfig(format!("bad mixture rate {t:?} in descriptor"))
                })?;
                nodes.push((w, t));
            }
            return Self::exp_mixture(nodes);
        }
        Err(Error::KernelConfig(format!("unknown kernel descriptor {s:?}")))
    }
}

/// `(1 − e^{−s})/s`, the unit building block of the closed-form Ψ values,
/// evaluated without cancellation near `s = 0`.
#[inline]
fn em1_ratio(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else if s.abs() < 1e-6 {
        // Series expansion; three terms give full double precision here.
        1.0 - s / 2.0 + s * s / 6.0
    } else {
        -(-s).exp_m1() / s
    }
}

const GL_ORDER: usize = 16;

fn gl_nodes() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static NODES: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    NODES.get_or_init(|| {
        // Newton iteration on Legendre polynomials for nodes on [-1, 1].
        let mut x = [0.0; GL_ORDER];
        let mut w = [0.0; GL_ORDER];
        let n = GL_ORDER;
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, 0.0);
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
                }
                let dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let z_new = z - p0 / dp;
                if (z_new - z).abs() < 1e-15 {
                    z = z_new;
                    let weight = 2.0 / ((1.0 - z * z) * dp * dp);
                    x[i] = -z;
                    x[n - 1 - i] = z;
                    w[i] = weight;
                    w[n - 1 - i] = weight;
                    break;
                }
                z = z_new;
            }
        }
        (x, w)
    })
}

/// Composite 16-point Gauss–Legendre quadrature with panel doubling until two
/// successive estimates agree to `rel_tol` relative error, capped at 2²⁰
/// total nodes.
pub(crate) fn adaptive_gauss_legendre<F: Fn(f64) -> f64>(
    lo: f64,
    hi: f64,
    rel_tol: f64,
    f: F,
) -> Result<f64> {
    let (nodes, weights) = gl_nodes();
    let eval = |panels: usize| -> f64 {
        let h = (hi - lo) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let a = lo + p as f64 * h;
            let mid = a + h / 2.0;
            let half = h / 2.0;
            let mut acc = 0.0;
            for (x, w) in nodes.iter().zip(weights) {
                acc += w * f(mid + half * x);
            }
            total += acc * half;
        }
        total
    };
    let mut panels = 1usize;
    let mut prev = eval(panels);
    while panels * GL_ORDER <= (1 << 20) / 2 {
        panels *= 2;
        let cur = eval(panels);
        if (cur - prev).abs() <= rel_tol * cur.abs().max(f64::MIN_POSITIVE) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!(
        "no convergence to relative {rel_tol} within {} nodes on [{lo}, {hi}]",
        1 << 20
    )))
}
