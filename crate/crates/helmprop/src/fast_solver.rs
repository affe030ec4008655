//! Setup of all trace maps, the two-phase solve and the direct reference solver.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::direct_solver::factorize;
use crate::error::{Error, Result};
use crate::medium_grid::{l2, DiscreteOperator, GridSpec, Medium, NodeField, PmlProfile, VelocityModel};
use crate::quadtree::{build_tree, leaf_owner, BlockId, Tree};
use crate::source_transfer::{
    apply_g, channel_data, check_progress, local_source, restrict_field, BlockKit,
};
use crate::trace_engine::{
    apply_map, build_map_from_children, build_map_level0, sibling_iteration, IterationStats,
    MapCache, SiblingPlan, TraceMap,
};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Bumped whenever the map layout or construction changes, to invalidate caches.
const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub n_levels: usize,
    pub block_cells: usize,
    pub w_pml: usize,
    pub t_nonabs: usize,
    pub sigma0: f64,
    pub tol_trace: f64,
    pub max_sweeps: usize,
    pub diagonal_exchange: bool,
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_levels: 1,
            block_cells: 32,
            w_pml: 8,
            t_nonabs: 0,
            sigma0: 40.0,
            tol_trace: 1e-8,
            max_sweeps: 200,
            diagonal_exchange: true,
            workers: 1,
            cache_dir: None,
        }
    }
}

impl SolverConfig {
    pub fn margin(&self) -> usize {
        self.w_pml + self.t_nonabs
    }

    /// Interior cells per side of the root block.
    pub fn interior_cells(&self) -> usize {
        self.block_cells << self.n_levels
    }

    pub fn profile(&self, model: &VelocityModel, omega: f64) -> Result<PmlProfile> {
        PmlProfile::new(
            self.w_pml,
            self.t_nonabs,
            self.sigma0,
            omega / model.c_max(),
            [model.grid.hx, model.grid.hy],
        )
    }

    fn validate(&self) -> Result<()> {
        if self.w_pml == 0 {
            return Err(Error::InvalidArgument("w_pml must be positive".into()));
        }
        if !(self.tol_trace > 0.0 && self.tol_trace < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tol_trace must lie in (0, 1), got {}",
                self.tol_trace
            )));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be positive".into()));
        }
        Ok(())
    }
}

/// Work done on one level of the tree during setup or a solve phase.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelLog {
    pub level: usize,
    pub blocks: usize,
    pub seconds: f64,
    pub stats: IterationStats,
    pub cache_hits: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub setup: Vec<LevelLog>,
    pub source_up: Vec<LevelLog>,
    pub solution_down: Vec<LevelLog>,
    pub local_seconds: f64,
    pub assemble_seconds: f64,
    pub residual: f64,
}

impl SolveReport {
    /// Line-oriented `key = value` text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut phase = |name: &str, logs: &[LevelLog]| {
            for l in logs {
                let key = format!("{name}.level{}", l.level);
                let contraction = l
                    .stats
                    .mean_contraction()
                    .map_or("n/a".to_string(), |c| format!("{c:.4}"));
                out.push_str(&format!("{key}.blocks = {}\n", l.blocks));
                out.push_str(&format!("{key}.seconds = {:.4}\n", l.seconds));
                out.push_str(&format!("{key}.iterations = {}\n", l.stats.runs));
                out.push_str(&format!("{key}.mean_sweeps = {:.2}\n", l.stats.mean_sweeps()));
                out.push_str(&format!("{key}.max_sweeps = {}\n", l.stats.max_sweeps));
                out.push_str(&format!("{key}.contraction = {contraction}\n"));
                if name == "setup" {
                    out.push_str(&format!("{key}.cache_hits = {}\n", l.cache_hits));
                }
            }
        };
        phase("setup", &self.setup);
        phase("source_up", &self.source_up);
        phase("solution_down", &self.solution_down);
        out.push_str(&format!("local_seconds = {:.4}\n", self.local_seconds));
        out.push_str(&format!("assemble_seconds = {:.4}\n", self.assemble_seconds));
        out.push_str(&format!("residual = {:.6e}\n", self.residual));
        out
    }
}

/// Intermediate state after the upward pass.
#[derive(Clone, Debug)]
pub struct SourceUp {
    /// local solutions of the leaves, indexed by block id
    pub local: Vec<Vec<C64>>,
    /// accumulated incident vectors, indexed by block id
    pub sums: Vec<Vec<C64>>,
    /// field traces, indexed by block id
    pub traces: Vec<Vec<C64>>,
    pub logs: Vec<LevelLog>,
    pub local_seconds: f64,
}

pub struct FastSolver {
    pub config: SolverConfig,
    pub omega: f64,
    pub tree: Tree,
    pub medium: Medium,
    pub root_op: DiscreteOperator,
    pub setup_log: Vec<LevelLog>,
    kits: Vec<Option<BlockKit>>,
    maps: Vec<Option<TraceMap>>,
    plans: Vec<Option<SiblingPlan>>,
    pool: rayon::ThreadPool,
}

/// Hash of everything a trace map depends on.
pub fn cache_key(model: &VelocityModel, omega: f64, config: &SolverConfig) -> String {
    let mut h = Sha256::new();
    h.update(CACHE_VERSION.to_le_bytes());
    h.update(model.to_velm_bytes());
    h.update(omega.to_le_bytes());
    for v in [config.n_levels, config.block_cells, config.w_pml, config.t_nonabs, config.max_sweeps] {
        h.update((v as u64).to_le_bytes());
    }
    h.update(config.sigma0.to_le_bytes());
    h.update(config.tol_trace.to_le_bytes());
    h.update([config.diagonal_exchange as u8]);
    h.finalize()
        .iter()
        .take(12)
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn tree_for(model: &VelocityModel, omega: f64, config: &SolverConfig) -> Result<Tree> {
    build_tree(&model.grid, config.n_levels, config.block_cells, config.profile(model, omega)?)
}

/// Build the tree, factor every leaf and build every trace map bottom-up.
pub fn setup(model: &VelocityModel, omega: f64, config: &SolverConfig) -> Result<FastSolver> {
    config.validate()?;
    let tree = tree_for(model, omega, config)?;
    let medium = Medium::new(model, omega, tree.root_rect, tree.model_offset as i64)?;
    let root = tree.block(tree.root());
    let root_op = DiscreteOperator::from_stretch(root.extent.extended, &root.stretch, &medium)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let cache = config
        .cache_dir
        .as_ref()
        .map(|d| MapCache::new(d, cache_key(model, omega, config)));
    let nb = tree.blocks.len();
    let mut kits: Vec<Option<BlockKit>> = (0..nb).map(|_| None).collect();
    let mut maps: Vec<Option<TraceMap>> = vec![None; nb];
    let mut plans: Vec<Option<SiblingPlan>> = vec![None; nb];
    let mut setup_log = Vec::new();

    let t0 = Instant::now();
    let leaves = tree.level_blocks(0).to_vec();
    let built = pool.install(|| {
        leaves
            .par_iter()
            .map(|&b| {
                let kit = BlockKit::new(&tree, &medium, b)
                    .map_err(|e| e.in_block(tree.block(b).label()))?;
                if let Some(m) = cache.as_ref().and_then(|c| c.load(&tree, b)) {
                    return Ok((kit, m, true));
                }
                let m = build_map_level0(&tree, &kit).map_err(|e| e.in_block(tree.block(b).label()))?;
                Ok((kit, m, false))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut log = LevelLog {
        level: 0,
        blocks: leaves.len(),
        ..Default::default()
    };
    for (&b, (kit, m, hit)) in leaves.iter().zip(built) {
        if hit {
            log.cache_hits += 1;
        } else if let Some(c) = &cache {
            c.store(&tree, &m)?;
        }
        kits[b] = Some(kit);
        maps[b] = Some(m);
    }
    log.seconds = t0.elapsed().as_secs_f64();
    setup_log.push(log);

    for level in 1..=config.n_levels {
        let t0 = Instant::now();
        let blocks = tree.level_blocks(level).to_vec();
        let is_root = level == config.n_levels;
        let built = pool.install(|| {
            blocks
                .par_iter()
                .map(|&p| {
                    let plan = SiblingPlan::new(&tree, p, config.diagonal_exchange)?;
                    if is_root {
                        return Ok((plan, None, IterationStats::default(), false));
                    }
                    if let Some(m) = cache.as_ref().and_then(|c| c.load(&tree, p)) {
                        return Ok((plan, Some(m), IterationStats::default(), true));
                    }
                    let child_maps: Vec<&TraceMap> = plan
                        .children
                        .iter()
                        .map(|&c| maps[c].as_ref().expect("child map built"))
                        .collect();
                    let (m, stats) = build_map_from_children(
                        &tree,
                        &plan,
                        &child_maps,
                        config.tol_trace,
                        config.max_sweeps,
                    )?;
                    Ok((plan, Some(m), stats, false))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut log = LevelLog {
            level,
            blocks: blocks.len(),
            ..Default::default()
        };
        for (&p, (plan, m, stats, hit)) in blocks.iter().zip(built) {
            log.stats.merge(&stats);
            if hit {
                log.cache_hits += 1;
            } else if let (Some(c), Some(m)) = (&cache, &m) {
                c.store(&tree, m)?;
            }
            plans[p] = Some(plan);
            maps[p] = m;
        }
        log.seconds = t0.elapsed().as_secs_f64();
        setup_log.push(log);
    }
    Ok(FastSolver {
        config: config.clone(),
        omega,
        tree,
        medium,
        root_op,
        setup_log,
        kits,
        maps,
        plans,
        pool,
    })
}

impl FastSolver {
    pub fn map(&self, block: BlockId) -> Option<&TraceMap> {
        self.maps[block].as_ref()
    }

    pub fn plan(&self, block: BlockId) -> Option<&SiblingPlan> {
        self.plans[block].as_ref()
    }

    fn kit(&self, block: BlockId) -> &BlockKit {
        self.kits[block].as_ref().expect("leaf kit")
    }

    fn child_maps(&self, plan: &SiblingPlan) -> Vec<&TraceMap> {
        plan.children
            .iter()
            .map(|&c| self.maps[c].as_ref().expect("child map"))
            .collect()
    }

    fn check_rhs(&self, f: &NodeField) -> Result<()> {
        if f.rect != self.tree.root_rect {
            return Err(Error::Dimension {
                expected: self.tree.root_rect.n_nodes(),
                got: f.values.len(),
            });
        }
        if let Some(k) = f.values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            let w = f.rect.cells_x() + 1;
            let (x, y) = (f.rect.x0 + k % w, f.rect.y0 + k / w);
            return Err(Error::NonFinite(x, y));
        }
        Ok(())
    }

    fn local_solves(&self, f: &NodeField) -> Result<Vec<(BlockId, Vec<C64>)>> {
        let tree = &self.tree;
        let owner = |n: (usize, usize)| leaf_owner(tree, n).unwrap_or(usize::MAX);
        let leaves = tree.level_blocks(0);
        self.pool.install(|| {
            leaves
                .par_iter()
                .map(|&b| {
                    let rhs = local_source(tree, b, f, owner);
                    let u = if rhs.iter().all(|v| *v == ZERO) {
                        rhs
                    } else {
                        self.kit(b).fact.solve(&rhs)?
                    };
                    Ok((b, u))
                })
                .collect()
        })
    }

    /// Local solves on the leaves, then sibling iterations from level 1 up to the root.
    pub fn source_up(&self, f: &NodeField) -> Result<SourceUp> {
        self.check_rhs(f)?;
        let tree = &self.tree;
        let nb = tree.blocks.len();
        let t0 = Instant::now();
        let mut local = vec![Vec::new(); nb];
        let mut traces = vec![Vec::new(); nb];
        for (b, u) in self.local_solves(f)? {
            traces[b] = restrict_field(tree, b, &u)?.values;
            local[b] = u;
        }
        let local_seconds = t0.elapsed().as_secs_f64();
        let mut sums: Vec<Vec<C64>> = tree
            .blocks
            .iter()
            .map(|b| vec![ZERO; b.n_incident])
            .collect();
        let mut logs = Vec::new();
        for level in 1..=self.config.n_levels {
            let t0 = Instant::now();
            let blocks = tree.level_blocks(level);
            let results = self.pool.install(|| {
                blocks
                    .par_iter()
                    .map(|&p| {
                        let plan = self.plans[p].as_ref().expect("plan");
                        let init = plan.children.iter().map(|&c| traces[c].clone()).collect();
                        sibling_iteration(
                            tree,
                            plan,
                            &self.child_maps(plan),
                            init,
                            self.config.tol_trace,
                            self.config.max_sweeps,
                        )
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let mut log = LevelLog {
                level,
                blocks: blocks.len(),
                ..Default::default()
            };
            for (&p, st) in blocks.iter().zip(results) {
                log.stats.record(&st);
                let plan = self.plans[p].as_ref().unwrap();
                for (&c, s) in plan.children.iter().zip(&st.incident_sums) {
                    add_into(&mut sums[c], s);
                }
                traces[p] = st.parent_trace;
            }
            log.seconds = t0.elapsed().as_secs_f64();
            logs.push(log);
        }
        Ok(SourceUp {
            local,
            sums,
            traces,
            logs,
            local_seconds,
        })
    }

    /// Push incident data from the root down to the leaves and assemble the field.
    pub fn solution_down(&self, up: SourceUp) -> Result<(NodeField, Vec<LevelLog>, f64)> {
        let tree = &self.tree;
        let SourceUp { local, mut sums, .. } = up;
        let mut logs = Vec::new();
        for level in (1..=self.config.n_levels).rev() {
            let t0 = Instant::now();
            let blocks = tree.level_blocks(level);
            let results = self.pool.install(|| {
                blocks
                    .par_iter()
                    .map(|&p| {
                        let plan = self.plans[p].as_ref().expect("plan");
                        let shares = plan.split_incident(tree, &sums[p]);
                        if shares.iter().all(|s| s.iter().all(|v| *v == ZERO)) {
                            return Ok((shares, None));
                        }
                        let maps = self.child_maps(plan);
                        let init = shares
                            .iter()
                            .zip(&maps)
                            .map(|(s, m)| apply_map(m, s))
                            .collect::<Result<Vec<_>>>()?;
                        let st = sibling_iteration(
                            tree,
                            plan,
                            &maps,
                            init,
                            self.config.tol_trace,
                            self.config.max_sweeps,
                        )?;
                        Ok((shares, Some(st)))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let mut log = LevelLog {
                level,
                blocks: blocks.len(),
                ..Default::default()
            };
            for (&p, (shares, st)) in blocks.iter().zip(results) {
                let plan = self.plans[p].as_ref().unwrap();
                for (k, &c) in plan.children.iter().enumerate() {
                    if let Some(st) = &st {
                        add_into(&mut sums[c], &st.incident_sums[k]);
                    }
                    add_into(&mut sums[c], &shares[k]);
                }
                if let Some(st) = &st {
                    log.stats.record(st);
                }
            }
            log.seconds = t0.elapsed().as_secs_f64();
            logs.push(log);
        }
        let t0 = Instant::now();
        let leaves = tree.level_blocks(0);
        let fields = self.pool.install(|| {
            leaves
                .par_iter()
                .map(|&b| {
                    let mut u = apply_g(tree, self.kit(b), &sums[b])?;
                    add_into(&mut u, &local[b]);
                    Ok(u)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut u = NodeField::zeros(tree.root_rect);
        for (&b, ub) in leaves.iter().zip(&fields) {
            u.accumulate_unknowns(&tree.block(b).extent.extended, ub);
        }
        Ok((u, logs, t0.elapsed().as_secs_f64()))
    }

    pub fn solve(&self, f: &NodeField) -> Result<(NodeField, SolveReport)> {
        let up = self.source_up(f)?;
        let source_up = up.logs.clone();
        let local_seconds = up.local_seconds;
        let (u, solution_down, assemble_seconds) = self.solution_down(up)?;
        let residual = self.residual(&u, f)?;
        Ok((
            u,
            SolveReport {
                setup: self.setup_log.clone(),
                source_up,
                solution_down,
                local_seconds,
                assemble_seconds,
                residual,
            },
        ))
    }

    /// Relative residual of the global discrete problem.
    pub fn residual(&self, u: &NodeField, f: &NodeField) -> Result<f64> {
        relative_residual(&self.root_op, u, f)
    }

    /// Single-level iteration with actual subdomain solves, for `n_levels == 1`.
    pub fn flat_solve(&self, f: &NodeField) -> Result<(NodeField, usize)> {
        if self.config.n_levels != 1 {
            return Err(Error::InvalidArgument(
                "flat iteration needs exactly one level".into(),
            ));
        }
        self.check_rhs(f)?;
        let tree = &self.tree;
        let leaves = tree.level_blocks(0).to_vec();
        let mut u = NodeField::zeros(tree.root_rect);
        let mut fields: Vec<Vec<C64>> = vec![Vec::new(); tree.blocks.len()];
        for (b, ub) in self.local_solves(f)? {
            u.accumulate_unknowns(&tree.block(b).extent.extended, &ub);
            fields[b] = ub;
        }
        let trace_norm = |fields: &[Vec<C64>]| -> Result<f64> {
            let mut n = 0.0;
            for &b in &leaves {
                n += l2(&restrict_field(tree, b, &fields[b])?.values);
            }
            Ok(n)
        };
        let routing = &self.plans[tree.root()].as_ref().expect("root plan").routing;
        let mut norms = vec![trace_norm(&fields)?];
        if norms[0] == 0.0 {
            return Ok((u, 0));
        }
        loop {
            let mut inc: Vec<Vec<C64>> = tree
                .blocks
                .iter()
                .map(|b| vec![ZERO; b.n_incident])
                .collect();
            for route in &routing.routes {
                let rb = tree.block(route.receiver);
                let ch = rb.channel_from(route.sender).expect("sibling channel");
                let data = channel_data(tree, route.sender, &fields[route.sender], ch);
                add_into(&mut inc[route.receiver][ch.range()], &data);
            }
            let next = self.pool.install(|| {
                leaves
                    .par_iter()
                    .map(|&b| apply_g(tree, self.kit(b), &inc[b]))
                    .collect::<Result<Vec<_>>>()
            })?;
            for (&b, ub) in leaves.iter().zip(next) {
                u.accumulate_unknowns(&tree.block(b).extent.extended, &ub);
                fields[b] = ub;
            }
            norms.push(trace_norm(&fields)?);
            if *norms.last().unwrap() <= self.config.tol_trace * norms[0] {
                break;
            }
            if let Err(reason) = check_progress(&norms, self.config.max_sweeps) {
                return Err(Error::Stagnation {
                    level: 1,
                    block: tree.block(tree.root()).label(),
                    sweeps: norms.len() - 1,
                    reason,
                });
            }
        }
        Ok((u, norms.len() - 1))
    }

    /// Map of any block built with its own factorization instead of from its children.
    pub fn direct_map(&self, block: BlockId) -> Result<TraceMap> {
        let kit = BlockKit::new(&self.tree, &self.medium, block)?;
        build_map_level0(&self.tree, &kit)
    }

    /// Point source of unit strength at a solver node, scaled as a discrete delta.
    pub fn point_source(&self, node: (usize, usize)) -> Result<NodeField> {
        point_source(&self.tree, node)
    }
}

fn add_into(a: &mut [C64], b: &[C64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += *y;
    }
}

pub fn point_source(tree: &Tree, node: (usize, usize)) -> Result<NodeField> {
    let r = tree.root_rect;
    if !r.is_unknown(node.0, node.1) {
        return Err(Error::InvalidArgument(format!(
            "source node {node:?} is not an interior node"
        )));
    }
    let mut f = NodeField::zeros(r);
    f.set(node.0, node.1, C64::new(1.0 / (tree.hx * tree.hy), 0.0));
    Ok(f)
}

/// Reference solution of the global discrete problem by one band factorization.
pub fn direct_solve(
    model: &VelocityModel,
    omega: f64,
    config: &SolverConfig,
    f: &NodeField,
) -> Result<NodeField> {
    direct_solve_tree(&tree_for(model, omega, config)?, model, omega, f)
}

/// Direct solve with the root operator of an existing tree.
pub fn direct_solve_tree(
    tree: &Tree,
    model: &VelocityModel,
    omega: f64,
    f: &NodeField,
) -> Result<NodeField> {
    let medium = Medium::new(model, omega, tree.root_rect, tree.model_offset as i64)?;
    let root = tree.block(tree.root());
    let op = DiscreteOperator::from_stretch(root.extent.extended, &root.stretch, &medium)?;
    if f.rect != tree.root_rect {
        return Err(Error::Dimension {
            expected: tree.root_rect.n_nodes(),
            got: f.values.len(),
        });
    }
    let r = tree.root_rect;
    let sol = factorize(&op)?.solve(&f.unknowns_of(&r))?;
    let mut u = NodeField::zeros(r);
    u.accumulate_unknowns(&r, &sol);
    Ok(u)
}

/// Global residual of a field under the root operator of a tree.
pub fn tree_residual(
    tree: &Tree,
    model: &VelocityModel,
    omega: f64,
    u: &NodeField,
    f: &NodeField,
) -> Result<f64> {
    let medium = Medium::new(model, omega, tree.root_rect, tree.model_offset as i64)?;
    let root = tree.block(tree.root());
    let op = DiscreteOperator::from_stretch(root.extent.extended, &root.stretch, &medium)?;
    relative_residual(&op, u, f)
}

fn relative_residual(op: &DiscreteOperator, u: &NodeField, f: &NodeField) -> Result<f64> {
    let r = op.rect;
    let au = op.apply(&u.unknowns_of(&r))?;
    let fu = f.unknowns_of(&r);
    let num: Vec<C64> = au.iter().zip(&fu).map(|(a, b)| a - b).collect();
    let den = l2(&fu);
    Ok(if den == 0.0 { l2(&num) } else { l2(&num) / den })
}

/// Relative l2 difference over all nodes.
pub fn relative_error(u: &NodeField, reference: &NodeField) -> f64 {
    let d: Vec<C64> = u
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| a - b)
        .collect();
    l2(&d) / l2(&reference.values).max(f64::MIN_POSITIVE)
}

/// Model grid matching a configuration, including the PML band.
pub fn padded_grid(config: &SolverConfig, h: f64) -> Result<GridSpec> {
    let n = config.interior_cells() + 2 * config.margin();
    let off = -(config.margin() as f64) * h;
    GridSpec::new(n, n, h, h, [off, off])
}

/// `FLD2`, u32 nx, u32 ny, f64 hx, f64 hy, then interleaved f64 (re, im), x fastest.
/// `nx`, `ny` count samples.
pub fn encode_fld2(u: &NodeField, hx: f64, hy: f64) -> Vec<u8> {
    let r = u.rect;
    let mut out = Vec::with_capacity(28 + 16 * u.values.len());
    out.extend_from_slice(b"FLD2");
    out.extend_from_slice(&((r.cells_x() + 1) as u32).to_le_bytes());
    out.extend_from_slice(&((r.cells_y() + 1) as u32).to_le_bytes());
    out.extend_from_slice(&hx.to_le_bytes());
    out.extend_from_slice(&hy.to_le_bytes());
    for z in &u.values {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode_fld2(bytes: &[u8]) -> Result<(NodeField, f64, f64)> {
    let bad = |msg: &str| Error::Format {
        format: "FLD2",
        msg: msg.to_string(),
    };
    if bytes.len() < 28 || &bytes[..4] != b"FLD2" {
        return Err(bad("missing FLD2 header"));
    }
    let u32at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (nx, ny) = (u32at(4), u32at(8));
    let (hx, hy) = (f64at(12), f64at(20));
    if nx == 0 || ny == 0 {
        return Err(bad("empty field"));
    }
    let n = nx * ny;
    if bytes.len() != 28 + 16 * n {
        return Err(bad("payload size does not match header"));
    }
    let rect = crate::medium_grid::Rect::new(0, nx - 1, 0, ny - 1);
    let values = (0..n)
        .map(|k| C64::new(f64at(28 + 16 * k), f64at(36 + 16 * k)))
        .collect();
    Ok((NodeField { rect, values }, hx, hy))
}

pub fn write_fld2(path: &Path, u: &NodeField, hx: f64, hy: f64) -> Result<()> {
    fs::write(path, encode_fld2(u, hx, hy)).map_err(|e| Error::io(path, e))
}

pub fn read_fld2(path: &Path) -> Result<(NodeField, f64, f64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fld2(&bytes)
}

/// Relative l2 difference over the nodes of `region`.
pub fn relative_error_on(u: &NodeField, reference: &NodeField, region: &crate::medium_grid::Rect) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for y in region.y0..=region.y1 {
        for x in region.x0..=region.x1 {
            let r = reference.get(x, y);
            num += (u.get(x, y) - r).norm_sqr();
            den += r.norm_sqr();
        }
    }
    num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE)
}
