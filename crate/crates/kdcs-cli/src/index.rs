//! Binary index persistence.
//!
//! Layout (all integers and floats little-endian):
//! magic "KDCS", version u32, kernel descriptor (u32 length + UTF-8),
//! smoothness (L, t) as two f64, build parameters, dimension, a table of
//! point lists (coreset points stored inline as f64), then one stats record
//! and one preorder node stream per tree.
//!
//! Coreset geometry is not stored: a node coreset always uses the node's
//! shell, and a halved far ring's shell is a pure function of the ring index,
//! so both are rebuilt exactly on load.

use std::collections::HashMap;
use std::io::{Cursor, Read};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use kdcs::balance::Coreset;
use kdcs::carving::CarvingParams;
use kdcs::core::{BuildParams, Dataset, ShellGeometry};
use kdcs::embedding::{EmbeddingOracle, Side};
use kdcs::farfield::FarFieldDS;
use kdcs::kernels::RadialKernel;
use kdcs::tree::{BuildStats, Forest, TreeNode};

use crate::CliError;

const MAGIC: &[u8; 4] = b"KDCS";
const VERSION: u32 = 1;

const FLAG_NONLEAF: u8 = 1;
const FLAG_IB0: u8 = 2;
const FLAG_IB1: u8 = 4;
const FLAG_CHILD0: u8 = 8;
const FLAG_CHILD1: u8 = 16;

fn corrupt(what: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("corrupt index: {what}"))
}

/// Deduplicated point lists, ordered by first appearance in the preorder
/// walk so that serialization is deterministic.
#[derive(Default)]
struct ListTable {
    ids: HashMap<usize, u32>,
    lists: Vec<(Arc<Vec<u32>>, Arc<Dataset>)>,
}

impl ListTable {
    fn id(&mut self, idx: &Arc<Vec<u32>>, arena: &Arc<Dataset>) -> u32 {
        let key = Arc::as_ptr(idx) as usize;
        *self.ids.entry(key).or_insert_with(|| {
            self.lists.push((idx.clone(), arena.clone()));
            (self.lists.len() - 1) as u32
        })
    }

    fn collect(&mut self, node: &TreeNode) {
        for cs in node.inner_ball.iter().flatten() {
            self.id(&cs.idx, &cs.arena);
        }
        if let Some(far) = &node.far_ds {
            self.id(&far.idx, &far.arena);
            for (_, cs) in &far.halved {
                self.id(&cs.idx, &cs.arena);
            }
        }
        for c in node.child.iter().flatten() {
            self.collect(c);
        }
    }
}

fn write_vec(out: &mut Vec<u8>, v: &[f64]) {
    for &x in v {
        out.write_f64::<LE>(x).unwrap();
    }
}

fn write_coreset(out: &mut Vec<u8>, cs: &Coreset, table: &mut ListTable) {
    out.write_u32::<LE>(table.id(&cs.idx, &cs.arena)).unwrap();
    out.write_u32::<LE>(cs.weight_log2).unwrap();
    out.push(match cs.side {
        Side::Inner => 0,
        Side::Outer => 1,
    });
    out.write_u64::<LE>(cs.source_size as u64).unwrap();
}

fn write_node(out: &mut Vec<u8>, node: &TreeNode, table: &mut ListTable) {
    let mut flags = 0u8;
    if node.carve.is_some() {
        flags |= FLAG_NONLEAF;
    }
    if node.inner_ball[0].is_some() {
        flags |= FLAG_IB0;
    }
    if node.inner_ball[1].is_some() {
        flags |= FLAG_IB1;
    }
    if node.child[0].is_some() {
        flags |= FLAG_CHILD0;
    }
    if node.child[1].is_some() {
        flags |= FLAG_CHILD1;
    }
    out.push(flags);
    write_vec(out, &node.cen);
    out.write_f64::<LE>(node.rad).unwrap();
    out.write_f64::<LE>(node.big_r).unwrap();
    out.write_u64::<LE>(node.size as u64).unwrap();
    if let (Some(carve), Some(geom), Some(far)) = (&node.carve, &node.geom, &node.far_ds) {
        write_vec(out, &carve.center);
        out.write_f64::<LE>(carve.r).unwrap();
        out.write_f64::<LE>(carve.big_r).unwrap();
        out.write_f64::<LE>(carve.alpha).unwrap();
        // geom.center is the shifted center newcen; stored once.
        write_vec(out, &geom.center);
        out.write_f64::<LE>(geom.r_min).unwrap();
        out.write_f64::<LE>(geom.r_in).unwrap();
        out.write_f64::<LE>(geom.r_out).unwrap();
        out.write_f64::<LE>(geom.r_max).unwrap();
        for cs in node.inner_ball.iter().flatten() {
            write_coreset(out, cs, table);
        }
        write_vec(out, &far.cen);
        out.write_f64::<LE>(far.r_min).unwrap();
        out.write_f64::<LE>(far.r_in).unwrap();
        out.write_f64::<LE>(far.base_r).unwrap();
        out.write_u64::<LE>(far.size as u64).unwrap();
        out.write_u32::<LE>(far.ring_count as u32).unwrap();
        out.write_f64::<LE>(far.xi).unwrap();
        out.write_u64::<LE>(far.resamples as u64).unwrap();
        out.write_u32::<LE>(table.id(&far.idx, &far.arena)).unwrap();
        out.write_u32::<LE>(far.halved.len() as u32).unwrap();
        for (h, cs) in &far.halved {
            out.write_u32::<LE>(*h as u32).unwrap();
            write_coreset(out, cs, table);
        }
    }
    for c in node.child.iter().flatten() {
        write_node(out, c, table);
    }
}

pub fn serialize(forest: &Forest) -> Vec<u8> {
    let mut table = ListTable::default();
    for t in &forest.trees {
        table.collect(t);
    }
    let dim = forest.trees[0].cen.len();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LE>(VERSION).unwrap();
    let desc = forest.kernel.descriptor();
    out.write_u32::<LE>(desc.len() as u32).unwrap();
    out.extend_from_slice(desc.as_bytes());
    // A built forest always has resolved smoothness parameters.
    let (l, t) = forest.kernel.smoothness_params().expect("built forest has smoothness");
    out.write_f64::<LE>(l).unwrap();
    out.write_f64::<LE>(t).unwrap();
    let p = &forest.params;
    out.write_f64::<LE>(p.eps).unwrap();
    out.write_f64::<LE>(p.xi).unwrap();
    out.write_f64::<LE>(p.delta).unwrap();
    out.push(p.alpha_override.is_some() as u8);
    out.write_f64::<LE>(p.alpha_override.unwrap_or(0.0)).unwrap();
    out.push(p.phi.is_some() as u8);
    out.write_f64::<LE>(p.phi.unwrap_or(0.0)).unwrap();
    out.write_u64::<LE>(p.seed).unwrap();
    out.write_u32::<LE>(p.num_trees as u32).unwrap();
    out.write_u32::<LE>(dim as u32).unwrap();
    out.write_u32::<LE>(table.lists.len() as u32).unwrap();
    for (idx, arena) in &table.lists {
        out.write_u32::<LE>(idx.len() as u32).unwrap();
        for &i in idx.iter() {
            write_vec(&mut out, arena.point(i as usize));
        }
    }
    // The collect pass registered every list in preorder, so the ids handed
    // out while writing nodes below match the table just serialized.
    for (tree, st) in forest.trees.iter().zip(&forest.stats) {
        for v in [
            st.nodes,
            st.max_depth,
            st.coreset_points,
            st.max_coreset,
            st.resamples,
            st.size_bound_violations,
            st.depth_cap,
        ] {
            out.write_u64::<LE>(v as u64).unwrap();
        }
        out.write_f64::<LE>(st.alpha).unwrap();
        out.write_f64::<LE>(st.phi).unwrap();
        write_node(&mut out, tree, &mut table);
    }
    out
}

pub fn save(path: &Path, forest: &Forest) -> Result<(), CliError> {
    std::fs::write(path, serialize(forest))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

struct Loader {
    dim: usize,
    kernel: RadialKernel,
    xi: f64,
    lists: Vec<(Arc<Vec<u32>>, Arc<Dataset>)>,
}

fn read_vec(r: &mut Cursor<&[u8]>, dim: usize) -> Result<Vec<f64>, CliError> {
    let mut v = vec![0.0; dim];
    for x in &mut v {
        *x = r.read_f64::<LE>().map_err(|_| corrupt("truncated vector"))?;
    }
    Ok(v)
}

impl Loader {
    fn coreset(
        &self,
        r: &mut Cursor<&[u8]>,
        geom: ShellGeometry,
    ) -> Result<Coreset, CliError> {
        let list = r.read_u32::<LE>().map_err(|_| corrupt("coreset"))? as usize;
        let weight_log2 = r.read_u32::<LE>().map_err(|_| corrupt("coreset"))?;
        let side = match r.read_u8().map_err(|_| corrupt("coreset"))? {
            0 => Side::Inner,
            1 => Side::Outer,
            b => return Err(corrupt(format!("side byte {b}"))),
        };
        let source_size = r.read_u64::<LE>().map_err(|_| corrupt("coreset"))? as usize;
        let (idx, arena) =
            self.lists.get(list).ok_or_else(|| corrupt(format!("list id {list}")))?;
        let oracle = EmbeddingOracle::new(self.kernel.clone(), geom, self.xi)
            .map_err(|e| corrupt(e))?;
        Ok(Coreset {
            idx: idx.clone(),
            arena: arena.clone(),
            weight_log2,
            side,
            oracle,
            source_size,
        })
    }

    fn node(&self, r: &mut Cursor<&[u8]>) -> Result<TreeNode, CliError> {
        let flags = r.read_u8().map_err(|_| corrupt("node flags"))?;
        let cen = read_vec(r, self.dim)?;
        let rad = r.read_f64::<LE>().map_err(|_| corrupt("node"))?;
        let big_r = r.read_f64::<LE>().map_err(|_| corrupt("node"))?;
        let size = r.read_u64::<LE>().map_err(|_| corrupt("node"))? as usize;
        let mut node = TreeNode {
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
        };
        if flags & FLAG_NONLEAF != 0 {
            let center = read_vec(r, self.dim)?;
            let cr = r.read_f64::<LE>().map_err(|_| corrupt("carve"))?;
            let cbig_r = r.read_f64::<LE>().map_err(|_| corrupt("carve"))?;
            let alpha = r.read_f64::<LE>().map_err(|_| corrupt("carve"))?;
            node.carve = Some(CarvingParams { center, r: cr, big_r: cbig_r, alpha });
            let newcen = read_vec(r, self.dim)?;
            let r_min = r.read_f64::<LE>().map_err(|_| corrupt("shell"))?;
            let r_in = r.read_f64::<LE>().map_err(|_| corrupt("shell"))?;
            let r_out = r.read_f64::<LE>().map_err(|_| corrupt("shell"))?;
            let r_max = r.read_f64::<LE>().map_err(|_| corrupt("shell"))?;
            let geom = ShellGeometry::new(newcen.clone(), r_min, r_in, r_out, r_max)
                .map_err(|e| corrupt(e))?;
            node.newcen = Some(newcen);
            for b in [0usize, 1] {
                let present = [FLAG_IB0, FLAG_IB1][b];
                if flags & present != 0 {
                    node.inner_ball[b] = Some(Box::new(self.coreset(r, geom.clone())?));
                }
            }
            let fcen = read_vec(r, self.dim)?;
            let fr_min = r.read_f64::<LE>().map_err(|_| corrupt("far"))?;
            let fr_in = r.read_f64::<LE>().map_err(|_| corrupt("far"))?;
            let base_r = r.read_f64::<LE>().map_err(|_| corrupt("far"))?;
            let fsize = r.read_u64::<LE>().map_err(|_| corrupt("far"))? as usize;
            let ring_count = r.read_u32::<LE>().map_err(|_| corrupt("far"))? as usize;
            let xi = r.read_f64::<LE>().map_err(|_| corrupt("far"))?;
            let resamples = r.read_u64::<LE>().map_err(|_| corrupt("far"))? as usize;
            let list = r.read_u32::<LE>().map_err(|_| corrupt("far"))? as usize;
            let (fidx, farena) =
                self.lists.get(list).ok_or_else(|| corrupt(format!("list id {list}")))?;
            let mut far = FarFieldDS {
                cen: fcen,
                r_min: fr_min,
                r_in: fr_in,
                base_r,
                size: fsize,
                ring_count,
                idx: fidx.clone(),
                arena: farena.clone(),
                xi,
                halved: Vec::new(),
                resamples,
            };
            let halved = r.read_u32::<LE>().map_err(|_| corrupt("far"))? as usize;
            for _ in 0..halved {
                let h = r.read_u32::<LE>().map_err(|_| corrupt("ring"))? as usize;
                let rgeom = kdcs::farfield::ring_geom(&far, h).map_err(|e| corrupt(e))?;
                let cs = self.coreset(r, rgeom)?;
                far.halved.push((h, cs));
            }
            node.far_ds = Some(far);
            node.geom = Some(geom);
        }
        for b in [0usize, 1] {
            let present = [FLAG_CHILD0, FLAG_CHILD1][b];
            if flags & present != 0 {
                node.child[b] = Some(Box::new(self.node(r)?));
            }
        }
        Ok(node)
    }
}

pub fn load(path: &Path) -> Result<Forest, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut r = Cursor::new(bytes.as_slice());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt("missing magic"))?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.read_u32::<LE>().map_err(|_| corrupt("version"))?;
    if version != VERSION {
        return Err(CliError::Data(format!(
            "unsupported index version {version} (expected {VERSION})"
        )));
    }
    let dlen = r.read_u32::<LE>().map_err(|_| corrupt("descriptor"))? as usize;
    let mut dbuf = vec![0u8; dlen];
    r.read_exact(&mut dbuf).map_err(|_| corrupt("descriptor"))?;
    let desc = String::from_utf8(dbuf).map_err(|_| corrupt("descriptor utf-8"))?;
    let l = r.read_f64::<LE>().map_err(|_| corrupt("smoothness"))?;
    let t = r.read_f64::<LE>().map_err(|_| corrupt("smoothness"))?;
    let kernel = RadialKernel::parse_descriptor(&desc)
        .and_then(|k| k.with_smoothness(l, t))
        .map_err(|e| corrupt(e))?;
    let eps = r.read_f64::<LE>().map_err(|_| corrupt("params"))?;
    let xi = r.read_f64::<LE>().map_err(|_| corrupt("params"))?;
    let delta = r.read_f64::<LE>().map_err(|_| corrupt("params"))?;
    let has_alpha = r.read_u8().map_err(|_| corrupt("params"))? != 0;
    let alpha = r.read_f64::<LE>().map_err(|_| corrupt("params"))?;
    let has_phi = r.read_u8().map_err(|_| corrupt("params"))? != 0;
    let phi = r.read_f64::<LE>().map_err(|_| corrupt("params"))?;
    let seed = r.read_u64::<LE>().map_err(|_| corrupt("params"))?;
    let num_trees = r.read_u32::<LE>().map_err(|_| corrupt("params"))? as usize;
    let params = BuildParams {
        eps,
        xi,
        delta,
        alpha_override: has_alpha.then_some(alpha),
        phi: has_phi.then_some(phi),
        seed,
        num_trees,
    };
    let dim = r.read_u32::<LE>().map_err(|_| corrupt("dim"))? as usize;
    if dim == 0 {
        return Err(corrupt("zero dimension"));
    }
    let nlists = r.read_u32::<LE>().map_err(|_| corrupt("lists"))? as usize;
    let mut lists = Vec::with_capacity(nlists);
    for _ in 0..nlists {
        let len = r.read_u32::<LE>().map_err(|_| corrupt("list"))? as usize;
        let mut flat = vec![0.0f64; len * dim];
        for x in &mut flat {
            *x = r.read_f64::<LE>().map_err(|_| corrupt("list points"))?;
        }
        let arena = if len == 0 {
            // Empty lists never occur in well-formed indices, but guard anyway.
            return Err(corrupt("empty point list"));
        } else {
            Arc::new(Dataset::from_flat(dim, flat).map_err(|e| corrupt(e))?)
        };
        lists.push((Arc::new((0..len as u32).collect::<Vec<u32>>()), arena));
    }
    let loader = Loader { dim, kernel: kernel.clone(), xi, lists };
    let mut trees = Vec::with_capacity(num_trees);
    let mut stats = Vec::with_capacity(num_trees);
    for _ in 0..num_trees {
        let mut vals = [0u64; 7];
        for v in &mut vals {
            *v = r.read_u64::<LE>().map_err(|_| corrupt("stats"))?;
        }
        let alpha = r.read_f64::<LE>().map_err(|_| corrupt("stats"))?;
        let phi = r.read_f64::<LE>().map_err(|_| corrupt("stats"))?;
        stats.push(BuildStats {
            nodes: vals[0] as usize,
            max_depth: vals[1] as usize,
            coreset_points: vals[2] as usize,
            max_coreset: vals[3] as usize,
            resamples: vals[4] as usize,
            size_bound_violations: vals[5] as usize,
            depth_cap: vals[6] as usize,
            alpha,
            phi,
        });
        trees.push(loader.node(&mut r)?);
    }
    if r.position() != bytes.len() as u64 {
        return Err(corrupt("trailing bytes"));
    }
    Ok(Forest { trees, kernel, params, stats })
}
