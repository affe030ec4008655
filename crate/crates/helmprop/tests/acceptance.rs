//! Acceptance criteria, one PASS/FAIL/INFO line each. Exits nonzero when a gating
//! criterion fails.

use std::time::Instant;

use helmprop::cli::checks::{green_check, map_check, omega_for_ppw, pipeline_check, twosub_check, Check};
use helmprop::cli::{bench, fitted_exponent};
use helmprop::fast_solver::{padded_grid, relative_error, relative_error_on, setup, SolverConfig};
use helmprop::medium_grid::{NodeField, VelocityModel};
use helmprop::Result;

const C_REF: f64 = 1500.0;
const H: f64 = 1.0;
const PPW: f64 = 10.0;

type CriterionFn = fn() -> Result<Vec<Check>>;

/// One criterion summarised from its sub-checks.
struct Criterion {
    number: usize,
    title: &'static str,
    checks: Vec<Check>,
}

impl Criterion {
    fn failed(&self) -> bool {
        self.checks.iter().any(Check::failed)
    }

    fn line(&self) -> String {
        let tag = if self.checks.iter().all(|c| !c.gating) {
            "INFO"
        } else if self.failed() {
            "FAIL"
        } else {
            "PASS"
        };
        let parts: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                let mut s = format!("{} {:.3e}", c.name, c.measured);
                if c.gating {
                    s.push_str(&format!(" (<= {:.1e}{})", c.threshold, if c.failed() { " FAILED" } else { "" }));
                }
                if !c.detail.is_empty() {
                    s.push_str(&format!(" [{}]", c.detail));
                }
                s
            })
            .collect();
        format!("{tag} criterion {} {}: {}", self.number, self.title, parts.join("; "))
    }
}

fn omega() -> f64 {
    omega_for_ppw(C_REF, H, PPW)
}

fn seconds(name: &str, t: f64, limit: f64) -> Check {
    Check::at_most(name, t, limit)
}

fn free_space() -> Result<Vec<Check>> {
    let o = green_check(C_REF, 256, H, omega(), 8, 40.0)?;
    Ok(vec![
        Check::at_most("rms relative error", o.rms, 0.05)
            .with_detail(format!("{} nodes, r in [{}, {}]", o.nodes, o.r_min, o.r_max)),
        seconds("runtime s", o.seconds, 30.0),
    ])
}

fn two_subdomains() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let cells = 128 + 16;
    let grid = padded_grid(
        &SolverConfig { n_levels: 0, block_cells: 128, ..Default::default() },
        H,
    )?;
    assert_eq!(grid.nx, cells);
    for (name, speeds) in [("constant", vec![C_REF]), ("layered", vec![2000.0, 1500.0, 2000.0])] {
        let model = VelocityModel::layered(grid.clone(), &speeds)?;
        let o = twosub_check(&model, omega(), 8, 0, 40.0, (cells / 3, cells / 4), 1e-8, 200)?;
        let c = o.contraction.unwrap_or(f64::INFINITY);
        out.push(Check::at_most(format!("{name} error"), o.rel_error, 1e-6));
        out.push(Check::at_most(format!("{name} contraction"), c, 1.0 - f64::EPSILON));
        out.push(Check::at_most(format!("{name} sweeps"), o.sweeps as f64, 200.0));
    }
    Ok(out)
}

fn keystone() -> Result<Vec<Check>> {
    let config = SolverConfig { n_levels: 2, block_cells: 32, ..Default::default() };
    let model = VelocityModel::layered(padded_grid(&config, H)?, &[2000.0, 1500.0, 2000.0])?;
    let o = map_check(&model, omega(), &config)?;
    Ok(vec![Check::at_most("max entry difference", o.max_diff, 1e-6).with_detail(format!(
        "{} level-1 blocks of an N_L=2 tree, largest entry {:.2e}",
        o.blocks, o.max_entry
    ))])
}

fn source_at(config: &SolverConfig, fx: f64, fy: f64) -> (usize, usize) {
    let m = config.margin();
    let n = config.interior_cells() as f64;
    (m + (fx * n) as usize, m + (fy * n) as usize)
}

fn flat_vs_hierarchical() -> Result<Vec<Check>> {
    let config = SolverConfig { n_levels: 1, block_cells: 32, ..Default::default() };
    let model = VelocityModel::layered(padded_grid(&config, H)?, &[2000.0, 1500.0, 2000.0])?;
    let solver = setup(&model, omega(), &config)?;
    let f = solver.point_source(source_at(&config, 0.3, 0.6))?;
    let (u, _) = solver.solve(&f)?;
    let (flat, sweeps) = solver.flat_solve(&f)?;
    Ok(vec![Check::at_most("relative difference", relative_error(&u, &flat), 1e-10)
        .with_detail(format!("flat iteration {sweeps} sweeps"))])
}

fn pipeline() -> Result<Vec<Check>> {
    let config = SolverConfig { n_levels: 2, block_cells: 32, tol_trace: 1e-7, ..Default::default() };
    let grid = padded_grid(&config, H)?;
    let media = [
        ("constant", VelocityModel::constant(grid.clone(), C_REF)?),
        ("layered", VelocityModel::layered(grid.clone(), &[2000.0, 1500.0, 2000.0])?),
        ("lens", VelocityModel::lens(grid, 2000.0, 1500.0, 0.25)?),
    ];
    let mut out = Vec::new();
    for (name, model) in &media {
        // 10 points per wavelength at the slowest speed
        let omega = omega_for_ppw(model.c_min(), H, PPW);
        let tree = helmprop::quadtree::build_tree(
            &model.grid,
            config.n_levels,
            config.block_cells,
            config.profile(model, omega)?,
        )?;
        let f = helmprop::fast_solver::point_source(&tree, source_at(&config, 0.35, 0.7))?;
        let o = pipeline_check(model, omega, &config, &f)?;
        out.push(Check::at_most(format!("{name} residual"), o.residual, 1e-5));
        out.push(Check::at_most(format!("{name} error"), o.rel_error, 1e-5));
        out.push(seconds(&format!("{name} runtime s"), o.seconds, 300.0));
    }
    Ok(out)
}

fn determinism_and_linearity() -> Result<Vec<Check>> {
    let base = SolverConfig { n_levels: 2, block_cells: 16, ..Default::default() };
    let model = VelocityModel::lens(padded_grid(&base, H)?, 2000.0, 1500.0, 0.25)?;
    let omega = omega_for_ppw(model.c_min(), H, PPW);
    let mut fields: Vec<NodeField> = Vec::new();
    let mut f1 = None;
    for workers in [1, 2, 4] {
        let solver = setup(&model, omega, &SolverConfig { workers, ..base.clone() })?;
        let f = solver.point_source(source_at(&base, 0.2, 0.45))?;
        fields.push(solver.solve(&f)?.0);
        f1 = Some((solver, f));
    }
    let mismatches = fields.iter().filter(|u| u.values != fields[0].values).count();
    let (solver, f1) = f1.expect("at least one run");
    let f2 = solver.point_source(source_at(&base, 0.7, 0.3))?;
    let mut sum = f1.clone();
    for (s, v) in sum.values.iter_mut().zip(&f2.values) {
        *s += *v;
    }
    let u1 = &fields[2];
    let (u2, _) = solver.solve(&f2)?;
    let (u12, _) = solver.solve(&sum)?;
    let mut combined = u12.clone();
    for (c, (a, b)) in combined.values.iter_mut().zip(u1.values.iter().zip(&u2.values)) {
        *c = *a + *b;
    }
    let lin = relative_error_on(&u12, &combined, &solver.tree.root_rect);
    Ok(vec![
        Check::at_most("runs differing from 1 worker", mismatches as f64, 0.0)
            .with_detail("workers 1, 2, 4 compared bit for bit"),
        Check::at_most("linearity", lin, 1e-9),
    ])
}

fn complexity() -> Result<Vec<Check>> {
    let base = SolverConfig { block_cells: 16, ..Default::default() };
    let rows = bench(&base, C_REF, omega(), 4)?;
    let xs: Vec<f64> = rows.iter().map(|r| r.unknowns as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.setup_seconds).collect();
    let mut out = vec![Check::info("setup time exponent", fitted_exponent(&xs, &ys).unwrap_or(f64::NAN))
        .with_detail(format!("fitted over N = {:?}", xs))];
    let last = rows.last().expect("bench rows");
    // the root has no incident channels, so only levels 1..N_L-1 build maps from children
    let inner = &last.level_seconds[1..last.n_levels];
    let per_level = last
        .level_seconds
        .iter()
        .map(|t| format!("{t:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    let increasing = inner.windows(2).filter(|w| w[1] > w[0]).count();
    out.push(
        Check::info("inner level steps with increasing setup time", increasing as f64).with_detail(
            format!(
                "of {}; N_L={} per-level seconds [{per_level}]",
                inner.len().saturating_sub(1),
                last.n_levels
            ),
        ),
    );
    Ok(out)
}

fn main() {
    let t0 = Instant::now();
    let criteria: [(usize, &str, CriterionFn); 7] = [
        (1, "free-space Green's function", free_space),
        (2, "two-subdomain iteration", two_subdomains),
        (3, "keystone map equivalence", keystone),
        (4, "flat vs hierarchical", flat_vs_hierarchical),
        (5, "end-to-end pipeline", pipeline),
        (6, "determinism and linearity", determinism_and_linearity),
        (7, "complexity report", complexity),
    ];
    let mut failed = false;
    for (number, title, run) in criteria {
        let checks = match run() {
            Ok(c) => c,
            Err(e) => vec![Check::at_most("error", f64::INFINITY, 0.0).with_detail(e.to_string())],
        };
        let c = Criterion { number, title, checks };
        println!("{}", c.line());
        failed |= c.failed();
    }
    println!("acceptance finished in {:.1} s", t0.elapsed().as_secs_f64());
    if failed {
        std::process::exit(1);
    }
}
