//! The recursive partition tree: preprocessing (Algorithm-1 style carving
//! plus per-side coresets plus far field) and querying (Algorithm-2 style
//! root-to-leaf descent), with a multi-tree retry wrapper.
//!
//! Each non-leaf node carves its enclosing ball with a random sphere. Points
//! decisively inside become the captured set for outside queries and vice
//! versa; points in the boundary band are replicated into both children. A
//! query walks one root-to-leaf path, collecting one coreset estimate per
//! level, and aborts with `Fail` if it ever lands in a boundary band.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::balance::{coreset_size_bound, process_captured, query_captured, Coreset};
use crate::carving::{alpha_for, CarvingParams, HashValue, DEFAULT_C1};
use crate::core::{aspect_ratio_bound, dist, sub, BuildParams, Dataset, ShellGeometry};
use crate::embedding::Side;
use crate::farfield::{preprocess_far, query_far, FarFieldDS};
use crate::kernels::RadialKernel;
use crate::{Error, Result};

/// Largest dataset for which the aspect ratio is computed exactly when not
/// supplied in the build parameters.
pub const MAX_EXACT_PHI: usize = 20_000;

/// Carving redraws allowed per node before a persistent geometry or band
/// violation (a with-high-probability-excluded event) becomes a build error.
const MAX_CARVE_RESAMPLES: usize = 64;

/// One node of the partition tree.
#[derive(Debug, Clone)]
pub struct TreeNode {
    /// Approximate minimum-enclosing-ball center of the node's points.
    pub cen: Vec<f64>,
    /// Approximate minimum-enclosing-ball radius.
    pub rad: f64,
    /// Carving scale `R = 2·rad`.
    pub big_r: f64,
    /// Number of points this node covers.
    pub size: usize,
    /// Carving draw; absent on leaves.
    pub carve: Option<CarvingParams>,
    /// Shifted carving center `cen + carve.center`; absent on leaves.
    pub newcen: Option<Vec<f64>>,
    /// Shell radii around `newcen`; absent on leaves.
    pub geom: Option<ShellGeometry>,
    /// `inner_ball[b]` answers queries that hash to `b`: it holds the points
    /// with hash `1 − b` (the opposite region).
    pub inner_ball: [Option<Box<Coreset>>; 2],
    /// `child[b]` covers the points not captured for `b`-side queries.
    pub child: [Option<Box<TreeNode>>; 2],
    /// Far-field rings for queries outside `B(cen, R)`; absent on leaves.
    pub far_ds: Option<FarFieldDS>,
}

/// Aggregate statistics from one tree build.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildStats {
    pub nodes: usize,
    pub max_depth: usize,
    /// Total stored coreset points across node coresets and far-field rings
    /// (far rings aliasing one shared list are counted once).
    pub coreset_points: usize,
    pub max_coreset: usize,
    /// Carving and far-field center redraws.
    pub resamples: usize,
    /// Built coresets exceeding the analytic size bound.
    pub size_bound_violations: usize,
    /// Boundary half-width parameter used for every carving.
    pub alpha: f64,
    /// Aspect-ratio bound used for depth and alpha.
    pub phi: f64,
    /// Recursion depth cap.
    pub depth_cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Fail,
}

/// Per-query trace counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub nodes_visited: usize,
    pub coresets_touched: usize,
    pub fail_depth: Option<usize>,
}

/// Outcome of one query: the estimate is present exactly when the descent
/// never hit a boundary band or contract violation.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub estimate: Option<f64>,
    pub status: Status,
    pub stats: QueryStats,
}

/// Depth cap `20·√d·ln(n·max(ln Φ, e))·max(ln Φ, e)`.
pub fn depth_cap(n: usize, dim: usize, phi: f64) -> usize {
    let lp = phi.ln().max(std::f64::consts::E);
    (20.0 * (dim as f64).sqrt() * (n as f64 * lp).ln() * lp).ceil() as usize
}

struct Builder<'a, G: Rng> {
    arena: Arc<Dataset>,
    kernel: RadialKernel,
    params: &'a BuildParams,
    smooth: (f64, f64),
    alpha: f64,
    cap: usize,
    stats: BuildStats,
    rng: &'a mut G,
}

impl<G: Rng> Builder<'_, G> {
    /// First-point approximate minimum enclosing ball of a subset.
    fn meb(&self, idx: &[u32]) -> (Vec<f64>, f64) {
        let cen = self.arena.point(idx[0] as usize).to_vec();
        let rad = idx
            .iter()
            .map(|&i| dist(&cen, self.arena.point(i as usize)))
            .fold(0.0, f64::max);
        (cen, rad)
    }

    fn record_coreset(&mut self, cs: &Coreset, bound: f64) {
        self.stats.coreset_points += cs.idx.len();
        self.stats.max_coreset = self.stats.max_coreset.max(cs.idx.len());
        if cs.idx.len() as f64 > bound {
            self.stats.size_bound_violations += 1;
        }
    }

    fn build(&mut self, idx: Arc<Vec<u32>>, depth: usize) -> Result<TreeNode> {
        self.stats.nodes += 1;
        self.stats.max_depth = self.stats.max_depth.max(depth);
        let (cen, rad) = self.meb(&idx);
        let idx_ref: &[u32] = &idx;
        let big_r = 2.0 * rad;
        let size = idx.len();
        if rad == 0.0 {
            return Ok(TreeNode {
                cen,
                rad,
                big_r,
                size,
                carve: None,
                newcen: None,
                geom: None,
                inner_ball: [None, None],
                child: [None, None],
                far_ds: None,
            });
        }
        if depth >= self.cap {
            return Err(Error::DepthExceeded { cap: self.cap, size });
        }
        let dim = self.arena.dim();
        let p = self.params;
        let mut attempt = 0usize;
        let (carve, newcen, geom, caps) = loop {
            let carve = CarvingParams::sample(dim, big_r, self.alpha, self.rng)?;
            let m = carve.margin();
            let r_min = big_r / 100.0;
            let r_in = carve.r - m;
            let r_out = carve.r + m;
            let r_max = 3.0 * big_r;
            let newcen: Vec<f64> = cen.iter().zip(&carve.center).map(|(a, b)| a + b).collect();
            // A draw too close to 0 or 3R leaves no valid shell; redraw.
            if !(r_min <= r_in && r_out <= r_max) {
                attempt += 1;
                self.stats.resamples += 1;
                if attempt > MAX_CARVE_RESAMPLES {
                    return Err(Error::InvalidGeometry(format!(
                        "no valid carving after {MAX_CARVE_RESAMPLES} draws at node of size {size}"
                    )));
                }
                continue;
            }
            let geom = ShellGeometry::new(newcen.clone(), r_min, r_in, r_out, r_max)?;
            // Cap(b) holds the points with hash 1 − b.
            let mut caps: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
            let mut bands_ok = true;
            for &i in idx_ref {
                let z = sub(self.arena.point(i as usize), &cen);
                match carve.eval(&z) {
                    HashValue::Inside => {
                        // Inside points must also clear r_min around newcen.
                        if dist(self.arena.point(i as usize), &newcen) < r_min {
                            bands_ok = false;
                            break;
                        }
                        caps[1].push(i);
                    }
                    HashValue::Outside => {
                        if dist(self.arena.point(i as usize), &newcen) > r_max {
                            bands_ok = false;
                            break;
                        }
                        caps[0].push(i);
                    }
                    HashValue::Boundary => {}
                }
            }
            if !bands_ok {
                attempt += 1;
                self.stats.resamples += 1;
                if attempt > MAX_CARVE_RESAMPLES {
                    return Err(Error::InvalidGeometry(format!(
                        "captured points kept violating shell bands at node of size {size}"
                    )));
                }
                continue;
            }
            break (carve, newcen, geom, caps);
        };
        let [cap0, cap1] = caps;
        let mut inner_ball: [Option<Box<Coreset>>; 2] = [None, None];
        let mut remainder: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
        // child[b] covers P ∖ Cap(b): boundary points go to both sides.
        for &i in idx_ref {
            let z = sub(self.arena.point(i as usize), &cen);
            match carve.eval(&z) {
                HashValue::Inside => remainder[0].push(i),
                HashValue::Outside => remainder[1].push(i),
                HashValue::Boundary => {
                    remainder[0].push(i);
                    remainder[1].push(i);
                }
            }
        }
        for (b, cap_b, side) in [(0usize, cap0, Side::Outer), (1, cap1, Side::Inner)] {
            if cap_b.is_empty() {
                continue;
            }
            let bound =
                coreset_size_bound(cap_b.len(), p.eps, p.delta, p.xi, &geom, self.smooth);
            let cs = process_captured(
                self.arena.clone(),
                cap_b,
                self.kernel.clone(),
                geom.clone(),
                side,
                p.eps,
                p.xi,
                p.delta,
                self.rng,
            )?;
            self.record_coreset(&cs, bound);
            inner_ball[b] = Some(Box::new(cs));
        }
        let far = preprocess_far(
            self.arena.clone(),
            idx.clone(),
            &cen,
            rad,
            big_r,
            &self.kernel,
            p.eps,
            p.xi,
            p.delta,
            self.rng,
        )?;
        self.stats.resamples += far.resamples;
        // Unhalved rings share one point list: count it once.
        if far.halved.len() < far.ring_count {
            self.stats.coreset_points += far.idx.len();
            self.stats.max_coreset = self.stats.max_coreset.max(far.idx.len());
        }
        for (_, cs) in &far.halved {
            self.stats.coreset_points += cs.idx.len();
            self.stats.max_coreset = self.stats.max_coreset.max(cs.idx.len());
        }
        let mut child: [Option<Box<TreeNode>>; 2] = [None, None];
        for (b, rem) in remainder.into_iter().enumerate() {
            if !rem.is_empty() {
                // A no-progress draw leaves the child set identical to the
                // parent's; alias the list instead of duplicating it.
                let rem =
                    if rem.len() == idx.len() { idx.clone() } else { Arc::new(rem) };
                child[b] = Some(Box::new(self.build(rem, depth + 1)?));
            }
        }
        Ok(TreeNode {
            cen,
            rad,
            big_r,
            size,
            carve: Some(carve),
            newcen: Some(newcen),
            geom: Some(geom),
            inner_ball,
            child,
            far_ds: Some(far),
        })
    }
}

/// Builds one partition tree over the whole arena.
pub fn preprocess<G: Rng>(
    arena: Arc<Dataset>,
    kernel: &RadialKernel,
    params: &BuildParams,
    phi: f64,
    rng: &mut G,
) -> Result<(TreeNode, BuildStats)> {
    params.validate()?;
    let n = arena.len();
    let smooth = kernel.smoothness_params()?;
    let alpha = alpha_for(n, phi, DEFAULT_C1, params.alpha_override);
    let cap = depth_cap(n, arena.dim(), phi);
    let mut builder = Builder {
        arena: arena.clone(),
        kernel: kernel.clone(),
        params,
        smooth,
        alpha,
        cap,
        stats: BuildStats { alpha, phi, depth_cap: cap, ..BuildStats::default() },
        rng,
    };
    let idx = Arc::new((0..n as u32).collect::<Vec<u32>>());
    let root = builder.build(idx, 0)?;
    Ok((root, builder.stats))
}

/// Resolves the aspect-ratio bound: the explicit parameter wins; otherwise
/// it is computed exactly for datasets up to [`MAX_EXACT_PHI`] points.
pub fn resolve_phi(arena: &Dataset, params: &BuildParams) -> Result<f64> {
    if let Some(phi) = params.phi {
        return Ok(phi);
    }
    if arena.len() > MAX_EXACT_PHI {
        return Err(Error::InvalidParameter(format!(
            "datasets above {MAX_EXACT_PHI} points need an explicit aspect-ratio bound"
        )));
    }
    Ok(aspect_ratio_bound(arena))
}

/// A set of independently built trees over the same dataset.
#[derive(Debug, Clone)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
    pub kernel: RadialKernel,
    pub params: BuildParams,
    pub stats: Vec<BuildStats>,
}

/// Builds `params.num_trees` trees with independent, deterministically
/// derived randomness streams.
pub fn build_forest(
    arena: Arc<Dataset>,
    kernel: RadialKernel,
    params: BuildParams,
) -> Result<Forest> {
    params.validate()?;
    let phi = resolve_phi(&arena, &params)?;
    let mut trees = Vec::with_capacity(params.num_trees);
    let mut stats = Vec::with_capacity(params.num_trees);
    for t in 0..params.num_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(t as u64 + 1);
        let (tree, st) = preprocess(arena.clone(), &kernel, &params, phi, &mut rng)?;
        trees.push(tree);
        stats.push(st);
    }
    Ok(Forest { trees, kernel, params, stats })
}

fn fail(stats: QueryStats, depth: usize) -> QueryResult {
    QueryResult {
        estimate: None,
        status: Status::Fail,
        stats: QueryStats { fail_depth: Some(depth), ..stats },
    }
}

fn query_rec(
    q: &[f64],
    u: &TreeNode,
    k: &RadialKernel,
    depth: usize,
    stats: &mut QueryStats,
) -> std::result::Result<f64, usize> {
    stats.nodes_visited += 1;
    if u.rad == 0.0 {
        return Ok(u.size as f64 * k.g_unchecked(crate::core::dist_sq(q, &u.cen)));
    }
    let d = dist(q, &u.cen);
    if d > u.big_r {
        let far = u.far_ds.as_ref().ok_or(depth)?;
        stats.coresets_touched += 1;
        return query_far(q, far, k).map_err(|_| depth);
    }
    let carve = u.carve.as_ref().ok_or(depth)?;
    let z = sub(q, &u.cen);
    let b = match carve.eval(&z).bit() {
        Some(b) => b as usize,
        None => return Err(depth),
    };
    let mut est = 0.0;
    if let Some(cs) = &u.inner_ball[b] {
        stats.coresets_touched += 1;
        est += query_captured(cs, q).map_err(|_| depth)?;
    }
    if let Some(c) = &u.child[b] {
        est += query_rec(q, c, k, depth + 1, stats)?;
    }
    Ok(est)
}

/// Queries one tree. A boundary-band hit or a contract violation anywhere on
/// the path yields `Fail`.
pub fn query(q: &[f64], u: &TreeNode, k: &RadialKernel) -> Result<QueryResult> {
    if q.len() != u.cen.len() {
        return Err(Error::DimensionMismatch { expected: u.cen.len(), got: q.len() });
    }
    let mut stats = QueryStats::default();
    match query_rec(q, u, k, 0, &mut stats) {
        Ok(v) => Ok(QueryResult { estimate: Some(v), status: Status::Ok, stats }),
        Err(depth) => Ok(fail(stats, depth)),
    }
}

/// Queries trees in order and returns the first `Ok`; `Fail` only if every
/// tree fails. Counters accumulate across the attempted trees.
pub fn query_forest(q: &[f64], forest: &Forest) -> Result<QueryResult> {
    if forest.trees.is_empty() {
        return Err(Error::InvalidParameter("query_forest needs at least one tree".into()));
    }
    let mut acc = QueryStats::default();
    let mut last_fail_depth = None;
    for tree in &forest.trees {
        let r = query(q, tree, &forest.kernel)?;
        acc.nodes_visited += r.stats.nodes_visited;
        acc.coresets_touched += r.stats.coresets_touched;
        match r.status {
            Status::Ok => {
                return Ok(QueryResult {
                    estimate: r.estimate,
                    status: Status::Ok,
                    stats: QueryStats { fail_depth: None, ..acc },
                });
            }
            Status::Fail => last_fail_depth = r.stats.fail_depth,
        }
    }
    Ok(QueryResult {
        estimate: None,
        status: Status::Fail,
        stats: QueryStats { fail_depth: last_fail_depth, ..acc },
    })
}
