//! Foundational data types and geometric helpers.
//!
//! Datasets are stored flat (row-major) so that coresets and tree nodes can
//! reference points by index without copying coordinates.

use crate::{Error, Result};

/// Dot product of two equal-length coordinate slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean norm.
#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Squared Euclidean distance.
#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Euclidean distance.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// Component-wise difference `a - b` as a new vector.
#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// A nonempty set of `d`-dimensional points with finite coordinates,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from a list of points, validating that the list is
    /// nonempty, rectangular, and free of NaN/Inf coordinates.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptyDataset)?.len();
        if dim == 0 {
            return Err(Error::InvalidParameter("points must have dimension >= 1".into()));
        }
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            data.extend_from_slice(p);
        }
        Self::from_flat(dim, data)
    }

    /// Builds a dataset from row-major flat storage.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, got: data.len() % dim });
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Dataset { dim, data })
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty datasets
    }

    /// Coordinate dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates of the `i`-th point.
    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterator over point slices.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Parameters governing a build of the partition tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildParams {
    /// Multiplicative error budget, in (0, 1).
    pub eps: f64,
    /// Additive per-point error budget, in (0, 1).
    pub xi: f64,
    /// Per-subroutine failure probability, in (0, 1).
    pub delta: f64,
    /// Overrides the derived boundary half-width parameter when set.
    pub alpha_override: Option<f64>,
    /// Aspect-ratio bound; when `None` it is computed exactly for datasets
    /// of at most 20 000 points and required otherwise.
    pub phi: Option<f64>,
    /// Seed for all randomness in the build.
    pub seed: u64,
    /// Number of independently built trees kept for query retry.
    pub num_trees: usize,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            eps: 0.2,
            xi: 1e-4,
            delta: 0.01,
            alpha_override: None,
            phi: None,
            seed: 0,
            num_trees: 3,
        }
    }
}

impl BuildParams {
    /// Checks all scalar ranges.
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0 && v.is_finite();
        if !in_unit(self.eps) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0,1), got {}", self.eps)));
        }
        if !in_unit(self.xi) {
            return Err(Error::InvalidParameter(format!("xi must lie in (0,1), got {}", self.xi)));
        }
        if !in_unit(self.delta) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if let Some(phi) = self.phi {
            if !(phi >= 1.0) || !phi.is_finite() {
                return Err(Error::InvalidParameter(format!("phi must be >= 1, got {phi}")));
            }
        }
        if let Some(a) = self.alpha_override {
            if !(a > 0.0 && a < 0.25) {
                return Err(Error::InvalidParameter(format!(
                    "alpha override must lie in (0, 1/4), got {a}"
                )));
            }
        }
        if self.num_trees == 0 {
            return Err(Error::InvalidParameter("num_trees must be >= 1".into()));
        }
        Ok(())
    }
}

/// A well-separated shell configuration: a center together with radii
/// `0 < r_min <= r_in < r_out <= r_max`. Datasets live in one radius band
/// and queries in the other.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellGeometry {
    pub center: Vec<f64>,
    pub r_min: f64,
    pub r_in: f64,
    pub r_out: f64,
    pub r_max: f64,
}

impl ShellGeometry {
    pub fn new(center: Vec<f64>, r_min: f64, r_in: f64, r_out: f64, r_max: f64) -> Result<Self> {
        let g = ShellGeometry { center, r_min, r_in, r_out, r_max };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let rs = [self.r_min, self.r_in, self.r_out, self.r_max];
        if rs.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidGeometry("radii must be finite".into()));
        }
        if !(0.0 < self.r_min && self.r_min <= self.r_in && self.r_in < self.r_out
            && self.r_out <= self.r_max)
        {
            return Err(Error::InvalidGeometry(format!(
                "need 0 < r_min <= r_in < r_out <= r_max, got ({}, {}, {}, {})",
                self.r_min, self.r_in, self.r_out, self.r_max
            )));
        }
        Ok(())
    }
}

/// Approximate minimum enclosing ball: the first point is the center and the
/// radius is the maximum distance to it. This is a 2-approximation of the
/// optimal radius and is deterministic given the dataset order.
pub fn approx_meb(p: &Dataset) -> (Vec<f64>, f64) {
    let center = p.point(0).to_vec();
    let radius = p.iter().map(|q| dist(&center, q)).fold(0.0, f64::max);
    (center, radius)
}

/// Exact aspect ratio: maximum pairwise distance over minimum nonzero
/// pairwise distance, by an O(n²) scan. Returns 1 when all points coincide.
pub fn aspect_ratio_bound(p: &Dataset) -> f64 {
    let n = p.len();
    let mut max_d: f64 = 0.0;
    let mut min_d = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(p.point(i), p.point(j));
            if d > 0.0 {
                max_d = max_d.max(d);
                min_d = min_d.min(d);
            }
        }
    }
    if !min_d.is_finite() || max_d == 0.0 {
        1.0
    } else {
        max_d / min_d
    }
}
