//! Incident-to-field trace maps and the sibling iteration.

use std::fs;
use std::path::PathBuf;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::medium_grid::l2;
use crate::quadtree::{sibling_routing, BlockId, RoutingTable, Tree};
use crate::source_transfer::{
    apply_g, check_progress, contraction_factor, restrict_field, BlockKit,
};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Dense map from a block's incident vector (all channels) to its field trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceMap {
    pub block: BlockId,
    pub rows: usize,
    pub cols: usize,
    /// column-major
    pub data: Vec<C64>,
}

impl TraceMap {
    pub fn from_columns(block: BlockId, rows: usize, columns: Vec<Vec<C64>>) -> Self {
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            debug_assert_eq!(c.len(), rows);
            data.extend(c);
        }
        TraceMap {
            block,
            rows,
            cols,
            data,
        }
    }

    pub fn column(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn max_abs_diff(&self, other: &TraceMap) -> Option<f64> {
        (self.rows == other.rows && self.cols == other.cols).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }
}

pub fn apply_map(map: &TraceMap, incident: &[C64]) -> Result<Vec<C64>> {
    if incident.len() != map.cols {
        return Err(Error::Dimension {
            expected: map.cols,
            got: incident.len(),
        });
    }
    let mut out = vec![ZERO; map.rows];
    for (j, &s) in incident.iter().enumerate() {
        if s == ZERO {
            continue;
        }
        for (o, a) in out.iter_mut().zip(map.column(j)) {
            *o += *a * s;
        }
    }
    Ok(out)
}

/// Map of a block built column by column with its own factorization.
pub fn build_map_level0(tree: &Tree, kit: &BlockKit) -> Result<TraceMap> {
    let b = tree.block(kit.block);
    let columns = (0..b.n_incident)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![ZERO; b.n_incident];
            e[j] = C64::new(1.0, 0.0);
            let u = apply_g(tree, kit, &e)?;
            Ok(restrict_field(tree, kit.block, &u)?.values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceMap::from_columns(kit.block, b.skeleton.len(), columns))
}

/// Routing, parent accumulation and incident splitting for one non-leaf block.
#[derive(Clone, Debug)]
pub struct SiblingPlan {
    pub parent: BlockId,
    pub children: Vec<BlockId>,
    pub routing: RoutingTable,
    /// per child: (child skeleton index, parent skeleton index)
    pub accumulate: Vec<Vec<(usize, usize)>>,
    /// per child: (parent incident index, child incident index)
    pub split: Vec<Vec<(usize, usize)>>,
    /// child position of each route's sender and receiver
    route_ends: Vec<(usize, usize)>,
}

impl SiblingPlan {
    pub fn new(tree: &Tree, parent: BlockId, diagonal_exchange: bool) -> Result<Self> {
        let p = tree.block(parent);
        let children = p.children.clone();
        let routing = sibling_routing(tree, parent, diagonal_exchange);
        let pos = |b: BlockId| children.iter().position(|&c| c == b).unwrap();
        let route_ends = routing
            .routes
            .iter()
            .map(|r| (pos(r.sender), pos(r.receiver)))
            .collect();
        let mut accumulate = Vec::with_capacity(children.len());
        let mut split = Vec::with_capacity(children.len());
        for &c in &children {
            let cb = tree.block(c);
            let ce = cb.extent.extended;
            let mut acc = Vec::new();
            for (k, n) in p.skeleton.iter().enumerate() {
                if let Some(&ck) = cb.skeleton_index.get(n) {
                    acc.push((ck, k));
                } else if ce.is_unknown(n.0, n.1) {
                    return Err(Error::Grid(format!(
                        "skeleton node {n:?} of {} is inside {} but off its skeleton",
                        p.label(),
                        cb.label()
                    )));
                }
            }
            accumulate.push(acc);
            let mut sp = Vec::new();
            for pch in &p.channels {
                let Some(cch) = cb.channel_from(pch.sender) else {
                    continue;
                };
                for (k, n) in cch.nodes.iter().enumerate() {
                    let pk = pch.nodes.iter().position(|m| m == n).ok_or_else(|| {
                        Error::Grid(format!(
                            "channel node {n:?} of {} missing from parent {}",
                            cb.label(),
                            p.label()
                        ))
                    })?;
                    sp.push((pch.offset + pk, cch.offset + k));
                }
            }
            split.push(sp);
        }
        Ok(SiblingPlan {
            parent,
            children,
            routing,
            accumulate,
            split,
            route_ends,
        })
    }

    /// Children's shares of a parent incident vector; a node feeds every child that uses it.
    pub fn split_incident(&self, tree: &Tree, incident: &[C64]) -> Vec<Vec<C64>> {
        self.children
            .iter()
            .zip(&self.split)
            .map(|(&c, sp)| {
                let mut v = vec![ZERO; tree.block(c).n_incident];
                for &(pk, ck) in sp {
                    v[ck] = incident[pk];
                }
                v
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationState {
    /// current field trace per child
    pub fields: Vec<Vec<C64>>,
    /// accumulated incident vectors per child
    pub incident_sums: Vec<Vec<C64>>,
    pub parent_trace: Vec<C64>,
    pub sweeps: usize,
    /// total field-trace norm per sweep, starting with the initial traces
    pub norms: Vec<f64>,
}

/// Exchange field traces among the children of `plan.parent` until the total
/// trace norm drops below `tol` times its initial value.
pub fn sibling_iteration(
    tree: &Tree,
    plan: &SiblingPlan,
    child_maps: &[&TraceMap],
    initial: Vec<Vec<C64>>,
    tol: f64,
    max_sweeps: usize,
) -> Result<IterationState> {
    let p = tree.block(plan.parent);
    let nc = plan.children.len();
    if child_maps.len() != nc || initial.len() != nc {
        return Err(Error::Dimension {
            expected: nc,
            got: child_maps.len().min(initial.len()),
        });
    }
    let mut parent_trace = vec![ZERO; p.skeleton.len()];
    let accumulate = |trace: &mut Vec<C64>, fields: &[Vec<C64>]| {
        for (f, acc) in fields.iter().zip(&plan.accumulate) {
            for &(ck, pk) in acc {
                trace[pk] += f[ck];
            }
        }
    };
    let mut incident_sums: Vec<Vec<C64>> = plan
        .children
        .iter()
        .map(|&c| vec![ZERO; tree.block(c).n_incident])
        .collect();
    let mut fields = initial;
    accumulate(&mut parent_trace, &fields);
    let total = |f: &[Vec<C64>]| f.iter().map(|v| l2(v)).sum::<f64>();
    let n0 = total(&fields);
    let mut norms = vec![n0];
    if n0 == 0.0 {
        return Ok(IterationState {
            fields,
            incident_sums,
            parent_trace,
            sweeps: 0,
            norms,
        });
    }
    loop {
        let mut inc: Vec<Vec<C64>> = plan
            .children
            .iter()
            .map(|&c| vec![ZERO; tree.block(c).n_incident])
            .collect();
        for (route, &(s, r)) in plan.routing.routes.iter().zip(&plan.route_ends) {
            for &(sk, rk) in &route.pairs {
                inc[r][rk] += fields[s][sk];
            }
        }
        let mut next = Vec::with_capacity(nc);
        for c in 0..nc {
            for (a, v) in incident_sums[c].iter_mut().zip(&inc[c]) {
                *a += *v;
            }
            next.push(apply_map(child_maps[c], &inc[c])?);
        }
        accumulate(&mut parent_trace, &next);
        fields = next;
        let n = total(&fields);
        norms.push(n);
        if n <= tol * n0 {
            break;
        }
        if let Err(reason) = check_progress(&norms, max_sweeps) {
            return Err(Error::Stagnation {
                level: p.level,
                block: p.label(),
                sweeps: norms.len() - 1,
                reason,
            });
        }
    }
    Ok(IterationState {
        fields,
        incident_sums,
        parent_trace,
        sweeps: norms.len() - 1,
        norms,
    })
}

/// Sweep counts and contraction factors gathered over many sibling iterations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationStats {
    pub runs: usize,
    pub total_sweeps: usize,
    pub max_sweeps: usize,
    contraction_sum: f64,
    contraction_runs: usize,
}

impl IterationStats {
    pub fn record(&mut self, st: &IterationState) {
        if st.sweeps == 0 {
            return;
        }
        self.runs += 1;
        self.total_sweeps += st.sweeps;
        self.max_sweeps = self.max_sweeps.max(st.sweeps);
        if let Some(c) = contraction_factor(&st.norms) {
            self.contraction_sum += c;
            self.contraction_runs += 1;
        }
    }

    pub fn merge(&mut self, o: &IterationStats) {
        self.runs += o.runs;
        self.total_sweeps += o.total_sweeps;
        self.max_sweeps = self.max_sweeps.max(o.max_sweeps);
        self.contraction_sum += o.contraction_sum;
        self.contraction_runs += o.contraction_runs;
    }

    pub fn mean_sweeps(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.total_sweeps as f64 / self.runs as f64
        }
    }

    pub fn mean_contraction(&self) -> Option<f64> {
        (self.contraction_runs > 0).then(|| self.contraction_sum / self.contraction_runs as f64)
    }
}

/// Parent map assembled from the children's maps.
pub fn build_map_from_children(
    tree: &Tree,
    plan: &SiblingPlan,
    child_maps: &[&TraceMap],
    tol: f64,
    max_sweeps: usize,
) -> Result<(TraceMap, IterationStats)> {
    let p = tree.block(plan.parent);
    let runs = (0..p.n_incident)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![ZERO; p.n_incident];
            e[j] = C64::new(1.0, 0.0);
            let shares = plan.split_incident(tree, &e);
            let init = shares
                .iter()
                .zip(child_maps)
                .map(|(s, m)| apply_map(m, s))
                .collect::<Result<Vec<_>>>()?;
            sibling_iteration(tree, plan, child_maps, init, tol, max_sweeps)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stats = IterationStats::default();
    let columns = runs
        .into_iter()
        .map(|st| {
            stats.record(&st);
            st.parent_trace
        })
        .collect();
    Ok((TraceMap::from_columns(plan.parent, p.skeleton.len(), columns), stats))
}

/// On-disk store of trace maps keyed by a content hash.
#[derive(Clone, Debug)]
pub struct MapCache {
    pub dir: PathBuf,
    pub key: String,
}

impl MapCache {
    pub fn new(dir: impl Into<PathBuf>, key: impl Into<String>) -> Self {
        MapCache {
            dir: dir.into(),
            key: key.into(),
        }
    }

    fn path(&self, tree: &Tree, block: BlockId) -> PathBuf {
        let b = tree.block(block);
        self.dir
            .join(format!("{}_l{}_{}_{}.tmap", self.key, b.level, b.i, b.j))
    }

    pub fn load(&self, tree: &Tree, block: BlockId) -> Option<TraceMap> {
        let bytes = fs::read(self.path(tree, block)).ok()?;
        let map = decode_tmap(&bytes).ok()?;
        let b = tree.block(block);
        (map.block == block && map.rows == b.skeleton.len() && map.cols == b.n_incident)
            .then_some(map)
    }

    pub fn store(&self, tree: &Tree, map: &TraceMap) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path(tree, map.block);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, encode_tmap(map)).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

/// `TMAP`, u64 block id, u64 rows, u64 cols, then column-major (re, im) pairs.
pub fn encode_tmap(map: &TraceMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + 16 * map.data.len());
    out.extend_from_slice(b"TMAP");
    for v in [map.block as u64, map.rows as u64, map.cols as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for z in &map.data {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode_tmap(bytes: &[u8]) -> Result<TraceMap> {
    let bad = |msg: String| Error::Format {
        format: "TMAP",
        msg,
    };
    if bytes.len() < 28 || &bytes[..4] != b"TMAP" {
        return Err(bad("missing TMAP header".into()));
    }
    let u = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
    let (block, rows, cols) = (u(4), u(12), u(20));
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| bad("dimension overflow".into()))?;
    if bytes.len() != 28 + 16 * n {
        return Err(bad(format!("expected {} entries", n)));
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let data = (0..n)
        .map(|k| C64::new(f(28 + 16 * k), f(36 + 16 * k)))
        .collect();
    Ok(TraceMap {
        block,
        rows,
        cols,
        data,
    })
}

pub fn default_cache_dir() -> Option<PathBuf> {
    std::env::var_os("HELMPROP_CACHE_DIR").map(PathBuf::from)
}
