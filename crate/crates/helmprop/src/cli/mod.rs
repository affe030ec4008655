//! Batch command-line interface.

pub mod checks;
pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fast_solver::{read_fld2, setup, write_fld2, SolverConfig};
use crate::medium_grid::{GridSpec, NodeField, Rect, VelocityModel};
use crate::quadtree::Tree;
use checks::{green_check, map_check, pipeline_check, twosub_check, Check};
pub use config::{Frequency, ModelKind, RunConfig, SliceAxis, SourceSpec};

#[derive(Parser, Debug)]
#[command(name = "helmprop", version, about = "Hierarchical domain-decomposition Helmholtz solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// run configuration (key = value lines)
    #[arg(long)]
    pub config: PathBuf,
    /// worker threads, overriding the configuration
    #[arg(long)]
    pub workers: Option<usize>,
    /// directory for output files
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Case {
    Green,
    Twosub,
    Mapcheck,
    Pipeline,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Set up and solve, writing the field and a report
    Solve(Common),
    /// Run validation cases against the reference solvers
    Validate {
        /// case to run; all cases when omitted
        #[arg(value_enum)]
        case: Option<Case>,
        #[command(flatten)]
        common: Common,
    },
    /// Setup and solve timings over increasing tree depth
    Bench(Common),
    /// Write a synthetic velocity model to the configured model path
    GenModel(Common),
    /// Write one grid line of a field file as CSV
    ExportSlice(Common),
}

pub const EXIT_FAIL: i32 = 1;

/// Exit status for an error, one code per error family.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::InvalidArgument(_) | Error::Dimension { .. } | Error::Grid(_) => 4,
        Error::Singular { .. } | Error::NonFinite(..) => 5,
        Error::Stagnation { .. } => 6,
        Error::Block { source, .. } => exit_code(source),
    }
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut out = std::io::stdout();
    match run(&cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(Error::InvalidArgument("--workers must be positive".into()));
        }
        cfg.workers = w;
    }
    Ok(cfg)
}

/// Output location: `--out` keeps only the file name of a configured path.
fn resolve_path(common: &Common, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
    match (&common.out, explicit) {
        (Some(dir), Some(p)) => dir.join(p.file_name().unwrap_or(p.as_os_str())),
        (Some(dir), None) => dir.join(default),
        (None, Some(p)) => p.clone(),
        (None, None) => PathBuf::from(default),
    }
}

fn out_path(common: &Common, explicit: &Option<PathBuf>, default: &str) -> Result<PathBuf> {
    let path = resolve_path(common, explicit, default);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(path)
}

fn emit(out: &mut dyn std::io::Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

pub fn run(command: &Command, out: &mut dyn std::io::Write) -> Result<i32> {
    match command {
        Command::Solve(c) => cmd_solve(c, out),
        Command::Validate { case, common } => cmd_validate(*case, common, out),
        Command::Bench(c) => cmd_bench(c, out),
        Command::GenModel(c) => cmd_gen_model(c, out),
        Command::ExportSlice(c) => cmd_export_slice(c, out),
    }
}

/// Right-hand side on the solver grid for the configured source.
pub fn build_source(cfg: &RunConfig, model: &VelocityModel, tree: &Tree) -> Result<NodeField> {
    let off = tree.model_offset;
    let g = &model.grid;
    let mut f = NodeField::zeros(tree.root_rect);
    match cfg.source.clone().unwrap_or(SourceSpec::Delta(g.nx / 2, g.ny / 2)) {
        SourceSpec::Delta(i, j) => {
            if i > g.nx || j > g.ny {
                return Err(Error::InvalidArgument(format!(
                    "source node ({i}, {j}) outside the {}x{} model",
                    g.nx, g.ny
                )));
            }
            let (x, y) = (i + off, j + off);
            if !tree.root_rect.is_unknown(x, y) {
                return Err(Error::InvalidArgument(format!(
                    "source node ({i}, {j}) lies on the outer boundary"
                )));
            }
            f.set(x, y, C64::new(1.0 / (g.hx * g.hy), 0.0));
        }
        SourceSpec::File(path) => {
            let (rhs, _, _) = read_fld2(&path)?;
            if rhs.rect.cells_x() != g.nx || rhs.rect.cells_y() != g.ny {
                return Err(Error::Format {
                    format: "FLD2",
                    msg: format!(
                        "right-hand side has {}x{} samples, model has {}x{}",
                        rhs.rect.cells_x() + 1,
                        rhs.rect.cells_y() + 1,
                        g.nx + 1,
                        g.ny + 1
                    ),
                });
            }
            for j in 0..=g.ny {
                for i in 0..=g.nx {
                    let v = rhs.get(i, j);
                    if !(v.re.is_finite() && v.im.is_finite()) {
                        return Err(Error::NonFinite(i, j));
                    }
                    f.set(i + off, j + off, v);
                }
            }
        }
    }
    Ok(f)
}

/// Solver field restricted to the model's nodes.
pub fn model_field(u: &NodeField, model: &VelocityModel, tree: &Tree) -> NodeField {
    let off = tree.model_offset;
    let g = &model.grid;
    let mut m = NodeField::zeros(Rect::new(0, g.nx, 0, g.ny));
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            m.set(i, j, u.get(i + off, j + off));
        }
    }
    m
}

fn cmd_solve(common: &Common, out: &mut dyn std::io::Write) -> Result<i32> {
    let cfg = load(common)?;
    let model = VelocityModel::read_velm(&cfg.model)?;
    let omega = cfg.omega();
    let t0 = Instant::now();
    let solver = setup(&model, omega, &cfg.solver_config())?;
    let f = build_source(&cfg, &model, &solver.tree)?;
    let (u, report) = solver.solve(&f)?;
    let seconds = t0.elapsed().as_secs_f64();
    let field_path = out_path(common, &cfg.output, "field.fld2")?;
    write_fld2(&field_path, &model_field(&u, &model, &solver.tree), model.grid.hx, model.grid.hy)?;
    let pass = report.residual <= cfg.tol_residual;
    let mut text = String::new();
    let _ = writeln!(text, "omega = {omega:?}");
    let _ = writeln!(text, "n_levels = {}", cfg.n_levels);
    let _ = writeln!(text, "block_cells = {}", cfg.block_cells);
    let _ = writeln!(text, "workers = {}", cfg.workers);
    text.push_str(&report.to_text());
    let _ = writeln!(text, "tol_residual = {:e}", cfg.tol_residual);
    let _ = writeln!(text, "residual_ok = {pass}");
    let _ = writeln!(text, "total_seconds = {seconds:.4}");
    let _ = writeln!(text, "field = {}", field_path.display());
    let report_path = out_path(common, &cfg.report, "report.txt")?;
    fs::write(&report_path, &text).map_err(|e| Error::io(&report_path, e))?;
    emit(out, &text)?;
    Ok(if pass { 0 } else { EXIT_FAIL })
}

fn cmd_validate(case: Option<Case>, common: &Common, out: &mut dyn std::io::Write) -> Result<i32> {
    let cfg = load(common)?;
    let model = VelocityModel::read_velm(&cfg.model)?;
    let omega = cfg.omega();
    let cases = match case {
        Some(c) => vec![c],
        None => vec![Case::Green, Case::Twosub, Case::Mapcheck, Case::Pipeline],
    };
    let mut failed = false;
    for case in cases {
        let results = validate_case(case, &cfg, &model, omega)?;
        for c in &results {
            emit(out, &format!("{c}\n"))?;
            failed |= c.failed();
        }
    }
    Ok(if failed { EXIT_FAIL } else { 0 })
}

/// Checks of one validation case on the configured model.
pub fn validate_case(
    case: Case,
    cfg: &RunConfig,
    model: &VelocityModel,
    omega: f64,
) -> Result<Vec<Check>> {
    let g = &model.grid;
    let centre = (g.nx / 2, g.ny / 2);
    Ok(match case {
        Case::Green => {
            if model.c_max() != model.c_min() || g.nx != g.ny || g.hx != g.hy {
                return Err(Error::InvalidArgument(
                    "the green case needs a constant, square model with square cells".into(),
                ));
            }
            let o = green_check(model.c_max(), g.nx, g.hx, omega, cfg.w_pml, cfg.sigma0)?;
            vec![Check::at_most("green annulus rms", o.rms, 0.05).with_detail(format!(
                "{} nodes, r in [{:.1}, {:.1}], {:.2} s",
                o.nodes, o.r_min, o.r_max, o.seconds
            ))]
        }
        Case::Twosub => {
            let src = cfg_source_node(cfg, centre)?;
            let o = twosub_check(
                model,
                omega,
                cfg.w_pml,
                cfg.t_nonabs,
                cfg.sigma0,
                src,
                cfg.tol_trace,
                cfg.max_sweeps,
            )?;
            let c = o.contraction.unwrap_or(f64::NAN);
            vec![
                Check::at_most("twosub error vs direct", o.rel_error, 1e-6)
                    .with_detail(format!("{} sweeps", o.sweeps)),
                Check {
                    pass: c < 1.0,
                    ..Check::at_most("twosub contraction", c, 1.0)
                },
                Check::at_most("twosub sweeps", o.sweeps as f64, cfg.max_sweeps as f64),
            ]
        }
        Case::Mapcheck => {
            let sc = cfg.solver_config();
            if sc.n_levels < 2 {
                return Err(Error::InvalidArgument(
                    "mapcheck needs n_levels >= 2 so that inner blocks exist".into(),
                ));
            }
            let o = map_check(model, omega, &sc)?;
            vec![Check::at_most("mapcheck max entry difference", o.max_diff, 1e-6).with_detail(
                format!("{} blocks, largest entry {:.3e}", o.blocks, o.max_entry),
            )]
        }
        Case::Pipeline => {
            let sc = cfg.solver_config();
            let tree = crate::quadtree::build_tree(
                &model.grid,
                sc.n_levels,
                sc.block_cells,
                sc.profile(model, omega)?,
            )?;
            let f = build_source(cfg, model, &tree)?;
            let o = pipeline_check(model, omega, &sc, &f)?;
            vec![
                Check::at_most("pipeline residual", o.residual, 1e-5)
                    .with_detail(format!("{:.2} s", o.seconds)),
                Check::at_most("pipeline error vs direct", o.rel_error, 1e-5),
                Check::at_most(
                    "pipeline residual consistency",
                    (o.residual - o.independent_residual).abs(),
                    1e-12 + 1e-6 * o.residual,
                ),
            ]
        }
    })
}

fn cfg_source_node(cfg: &RunConfig, default: (usize, usize)) -> Result<(usize, usize)> {
    match &cfg.source {
        None => Ok(default),
        Some(SourceSpec::Delta(i, j)) => Ok((*i, *j)),
        Some(SourceSpec::File(_)) => Err(Error::InvalidArgument(
            "the twosub case needs a point source".into(),
        )),
    }
}

/// Grid of a generated model: the tree layout including PML unless overridden.
fn generated_grid(cfg: &RunConfig) -> Result<GridSpec> {
    let sc = cfg.solver_config();
    let cells = cfg
        .model_cells
        .unwrap_or(sc.interior_cells() + 2 * sc.margin());
    let c_min = cfg
        .model_speeds
        .iter()
        .cloned()
        .chain((cfg.model_kind == ModelKind::Lens).then_some(cfg.lens_speed))
        .fold(f64::INFINITY, f64::min);
    let h = match cfg.model_h {
        Some(h) => h,
        None => 2.0 * std::f64::consts::PI * c_min / (10.0 * cfg.omega()),
    };
    let off = -(sc.margin() as f64) * h;
    GridSpec::new(cells, cells, h, h, [off, off])
}

pub fn generate_model(cfg: &RunConfig) -> Result<VelocityModel> {
    let grid = generated_grid(cfg)?;
    match cfg.model_kind {
        ModelKind::Constant => VelocityModel::constant(grid, cfg.model_speeds[0]),
        ModelKind::Layered => VelocityModel::layered(grid, &cfg.model_speeds),
        ModelKind::Lens => {
            VelocityModel::lens(grid, cfg.model_speeds[0], cfg.lens_speed, cfg.lens_radius)
        }
    }
}

fn cmd_gen_model(common: &Common, out: &mut dyn std::io::Write) -> Result<i32> {
    let cfg = load(common)?;
    let model = generate_model(&cfg)?;
    // the model goes where later runs read it, regardless of --out
    let path = cfg.model.clone();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    model.write_velm(&path)?;
    emit(
        out,
        &format!(
            "model = {}\ncells = {}\nh = {:?}\nc_min = {}\nc_max = {}\n",
            path.display(),
            model.grid.nx,
            model.grid.hx,
            model.c_min(),
            model.c_max()
        ),
    )?;
    Ok(0)
}

/// `coord,re,im,abs` rows along one grid line of a field.
pub fn slice_csv(field: &NodeField, hx: f64, hy: f64, axis: SliceAxis, index: usize) -> Result<String> {
    let r = field.rect;
    let (n, m, h) = match axis {
        SliceAxis::X => (r.cells_x(), r.cells_y(), hx),
        SliceAxis::Y => (r.cells_y(), r.cells_x(), hy),
    };
    if index > m {
        return Err(Error::InvalidArgument(format!(
            "slice index {index} out of range 0..={m}"
        )));
    }
    let mut s = String::from("coord,re,im,abs\n");
    for k in 0..=n {
        let v = match axis {
            SliceAxis::X => field.get(r.x0 + k, r.y0 + index),
            SliceAxis::Y => field.get(r.x0 + index, r.y0 + k),
        };
        let _ = writeln!(s, "{:?},{:?},{:?},{:?}", k as f64 * h, v.re, v.im, v.norm());
    }
    Ok(s)
}

/// Parse `coord,re,im,abs` text back into (coord, value) pairs.
pub fn parse_slice_csv(text: &str) -> Result<Vec<(f64, C64)>> {
    let bad = |line: usize, msg: &str| Error::Format {
        format: "CSV",
        msg: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "coord,re,im,abs")) => {}
        _ => return Err(bad(1, "missing header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(k + 1, "bad number"))?;
            if v.len() != 4 {
                return Err(bad(k + 1, "expected four columns"));
            }
            Ok((v[0], C64::new(v[1], v[2])))
        })
        .collect()
}

fn cmd_export_slice(common: &Common, out: &mut dyn std::io::Write) -> Result<i32> {
    let cfg = load(common)?;
    let field_path = match &cfg.slice_field {
        Some(p) => p.clone(),
        None => resolve_path(common, &cfg.output, "field.fld2"),
    };
    let (field, hx, hy) = read_fld2(&field_path)?;
    let csv = slice_csv(&field, hx, hy, cfg.slice_axis, cfg.slice_index)?;
    let path = out_path(common, &cfg.slice_out, "slice.csv")?;
    fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
    emit(
        out,
        &format!("slice = {}\nrows = {}\n", path.display(), csv.lines().count() - 1),
    )?;
    Ok(0)
}

/// Least-squares slope of log(y) against log(x).
pub fn fitted_exponent(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.max(1e-9).ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (den > 0.0).then(|| num / den)
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub n_levels: usize,
    pub cells: usize,
    pub unknowns: usize,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
    pub level_seconds: Vec<f64>,
    pub residual: f64,
}

/// Setup and solve on constant media of growing depth at fixed block size.
pub fn bench(base: &SolverConfig, speed: f64, omega: f64, max_levels: usize) -> Result<Vec<BenchRow>> {
    let h = 2.0 * std::f64::consts::PI * speed / (10.0 * omega);
    let mut rows = Vec::new();
    for nl in 1..=max_levels.max(1) {
        let sc = SolverConfig {
            n_levels: nl,
            cache_dir: None,
            ..base.clone()
        };
        let cells = sc.interior_cells() + 2 * sc.margin();
        let off = -(sc.margin() as f64) * h;
        let model = VelocityModel::constant(GridSpec::new(cells, cells, h, h, [off, off])?, speed)?;
        let t0 = Instant::now();
        let solver = setup(&model, omega, &sc)?;
        let setup_seconds = t0.elapsed().as_secs_f64();
        let m = sc.margin();
        let f = crate::fast_solver::point_source(&solver.tree, (m + 1 + sc.interior_cells() / 7, m + 1 + sc.interior_cells() / 5))?;
        let t1 = Instant::now();
        let (_, report) = solver.solve(&f)?;
        rows.push(BenchRow {
            n_levels: nl,
            cells,
            unknowns: (cells - 1) * (cells - 1),
            setup_seconds,
            solve_seconds: t1.elapsed().as_secs_f64(),
            level_seconds: solver.setup_log.iter().map(|l| l.seconds).collect(),
            residual: report.residual,
        });
    }
    Ok(rows)
}

pub fn bench_text(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let key = format!("bench.n_levels{}", r.n_levels);
        let _ = writeln!(s, "{key}.cells = {}", r.cells);
        let _ = writeln!(s, "{key}.unknowns = {}", r.unknowns);
        let _ = writeln!(s, "{key}.setup_seconds = {:.4}", r.setup_seconds);
        let _ = writeln!(s, "{key}.solve_seconds = {:.4}", r.solve_seconds);
        let _ = writeln!(s, "{key}.residual = {:.3e}", r.residual);
        for (l, t) in r.level_seconds.iter().enumerate() {
            let _ = writeln!(s, "{key}.setup_level{l}_seconds = {t:.4}");
        }
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.unknowns as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.setup_seconds).collect();
    if let Some(p) = fitted_exponent(&xs, &ys) {
        let _ = writeln!(s, "bench.setup_exponent = {p:.3}");
    }
    s
}

fn cmd_bench(common: &Common, out: &mut dyn std::io::Write) -> Result<i32> {
    let cfg = load(common)?;
    let model = VelocityModel::read_velm(&cfg.model)?;
    let rows = bench(&cfg.solver_config(), model.c_min(), cfg.omega(), cfg.n_levels)?;
    let text = bench_text(&rows);
    let path = out_path(common, &None, "bench.txt")?;
    fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    emit(out, &text)?;
    Ok(0)
}
