//! Line-oriented `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fast_solver::SolverConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Frequency {
    Hz(f64),
    Omega(f64),
}

impl Frequency {
    pub fn omega(&self) -> f64 {
        match *self {
            Frequency::Hz(f) => 2.0 * std::f64::consts::PI * f,
            Frequency::Omega(w) => w,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceSpec {
    /// model node (i, j), amplitude 1/(hx hy)
    Delta(usize, usize),
    /// FLD2 right-hand side sampled on the model nodes
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Constant,
    Layered,
    Lens,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceAxis {
    /// along x at fixed y
    X,
    /// along y at fixed x
    Y,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: PathBuf,
    pub frequency: Frequency,
    pub n_levels: usize,
    pub block_cells: usize,
    pub w_pml: usize,
    pub t_nonabs: usize,
    pub sigma0: f64,
    pub tol_trace: f64,
    pub tol_residual: f64,
    pub diagonal_exchange: bool,
    pub max_sweeps: usize,
    pub workers: usize,
    pub source: Option<SourceSpec>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub model_kind: ModelKind,
    /// cells per side of a generated model; defaults to the tree layout
    pub model_cells: Option<usize>,
    /// spacing of a generated model; defaults to 10 points per wavelength
    pub model_h: Option<f64>,
    pub model_speeds: Vec<f64>,
    pub lens_speed: f64,
    pub lens_radius: f64,
    pub slice_field: Option<PathBuf>,
    pub slice_axis: SliceAxis,
    pub slice_index: usize,
    pub slice_out: Option<PathBuf>,
}

pub const KEYS: &[&str] = &[
    "model",
    "frequency",
    "omega",
    "n_levels",
    "block_cells",
    "w_pml",
    "t_nonabs",
    "sigma0",
    "tol_trace",
    "tol_residual",
    "diagonal_exchange",
    "max_sweeps",
    "workers",
    "source",
    "source_file",
    "output",
    "report",
    "model_kind",
    "model_cells",
    "model_h",
    "model_speeds",
    "lens_speed",
    "lens_radius",
    "slice_field",
    "slice_axis",
    "slice_index",
    "slice_out",
];

fn cfg_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| cfg_err(line, format!("bad value {v:?} for {key}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(cfg_err(line, format!("bad boolean {v:?} for {key}"))),
    }
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_num::<f64>(line, key, s.trim()))
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // relative paths are taken from the config file's directory
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.model);
        if let Some(SourceSpec::File(p)) = &mut self.source {
            fix(p);
        }
        for p in [
            &mut self.output,
            &mut self.report,
            &mut self.slice_field,
            &mut self.slice_out,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: Vec<(&str, usize)> = Vec::new();
        let mut model = None;
        let mut frequency = None;
        let mut n_levels = None;
        let mut block_cells = None;
        let mut cfg = RunConfig {
            model: PathBuf::new(),
            frequency: Frequency::Hz(0.0),
            n_levels: 0,
            block_cells: 0,
            w_pml: 8,
            t_nonabs: 0,
            sigma0: 40.0,
            tol_trace: 1e-8,
            tol_residual: 1e-7,
            diagonal_exchange: true,
            max_sweeps: 200,
            workers: 1,
            source: None,
            output: None,
            report: None,
            model_kind: ModelKind::Constant,
            model_cells: None,
            model_h: None,
            model_speeds: vec![1500.0],
            lens_speed: 1200.0,
            lens_radius: 0.2,
            slice_field: None,
            slice_axis: SliceAxis::X,
            slice_index: 0,
            slice_out: None,
        };
        let last_line = text.lines().count().max(1);
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| cfg_err(line, format!("expected key = value, got {content:?}")))?;
            let (key, v) = (key.trim(), value.trim());
            let Some(&key) = KEYS.iter().find(|&&k| k == key) else {
                return Err(cfg_err(line, format!("unknown key {key:?}")));
            };
            if let Some(&(_, prev)) = seen.iter().find(|(k, _)| *k == key) {
                return Err(cfg_err(line, format!("duplicate key {key:?} (first on line {prev})")));
            }
            seen.push((key, line));
            if v.is_empty() {
                return Err(cfg_err(line, format!("empty value for {key}")));
            }
            match key {
                "model" => model = Some(PathBuf::from(v)),
                "frequency" | "omega" => {
                    if frequency.is_some() {
                        return Err(cfg_err(line, "give either frequency or omega, not both"));
                    }
                    let x: f64 = parse_num(line, key, v)?;
                    if !(x > 0.0 && x.is_finite()) {
                        return Err(cfg_err(line, format!("{key} must be positive")));
                    }
                    frequency = Some(if key == "omega" {
                        Frequency::Omega(x)
                    } else {
                        Frequency::Hz(x)
                    });
                }
                "n_levels" => n_levels = Some(parse_num(line, key, v)?),
                "block_cells" => block_cells = Some(parse_num(line, key, v)?),
                "w_pml" => cfg.w_pml = parse_num(line, key, v)?,
                "t_nonabs" => cfg.t_nonabs = parse_num(line, key, v)?,
                "sigma0" => cfg.sigma0 = parse_num(line, key, v)?,
                "tol_trace" | "tol_residual" => {
                    let x: f64 = parse_num(line, key, v)?;
                    if !(x > 0.0 && x < 1.0) {
                        return Err(cfg_err(line, format!("{key} must lie in (0, 1)")));
                    }
                    if key == "tol_trace" {
                        cfg.tol_trace = x;
                    } else {
                        cfg.tol_residual = x;
                    }
                }
                "diagonal_exchange" => cfg.diagonal_exchange = parse_bool(line, key, v)?,
                "max_sweeps" => cfg.max_sweeps = parse_num(line, key, v)?,
                "workers" => {
                    cfg.workers = parse_num(line, key, v)?;
                    if cfg.workers == 0 {
                        return Err(cfg_err(line, "workers must be positive"));
                    }
                }
                "source" | "source_file" => {
                    if cfg.source.is_some() {
                        return Err(cfg_err(line, "give exactly one of source and source_file"));
                    }
                    cfg.source = Some(if key == "source" {
                        let (i, j) = v
                            .split_once(',')
                            .ok_or_else(|| cfg_err(line, "source must be \"i, j\""))?;
                        SourceSpec::Delta(
                            parse_num(line, key, i.trim())?,
                            parse_num(line, key, j.trim())?,
                        )
                    } else {
                        SourceSpec::File(PathBuf::from(v))
                    });
                }
                "output" => cfg.output = Some(PathBuf::from(v)),
                "report" => cfg.report = Some(PathBuf::from(v)),
                "model_kind" => {
                    cfg.model_kind = match v {
                        "constant" => ModelKind::Constant,
                        "layered" => ModelKind::Layered,
                        "lens" => ModelKind::Lens,
                        _ => return Err(cfg_err(line, format!("unknown model_kind {v:?}"))),
                    }
                }
                "model_cells" => cfg.model_cells = Some(parse_num(line, key, v)?),
                "model_h" => {
                    let h: f64 = parse_num(line, key, v)?;
                    if !(h > 0.0 && h.is_finite()) {
                        return Err(cfg_err(line, "model_h must be positive"));
                    }
                    cfg.model_h = Some(h);
                }
                "model_speeds" => {
                    cfg.model_speeds = parse_list(line, key, v)?;
                    if cfg.model_speeds.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                        return Err(cfg_err(line, "speeds must be positive"));
                    }
                }
                "lens_speed" => cfg.lens_speed = parse_num(line, key, v)?,
                "lens_radius" => cfg.lens_radius = parse_num(line, key, v)?,
                "slice_field" => cfg.slice_field = Some(PathBuf::from(v)),
                "slice_axis" => {
                    cfg.slice_axis = match v {
                        "x" => SliceAxis::X,
                        "y" => SliceAxis::Y,
                        _ => return Err(cfg_err(line, format!("slice_axis must be x or y, got {v:?}"))),
                    }
                }
                "slice_index" => cfg.slice_index = parse_num(line, key, v)?,
                "slice_out" => cfg.slice_out = Some(PathBuf::from(v)),
                _ => unreachable!("key listed in KEYS"),
            }
        }
        let missing = |k: &str| cfg_err(last_line, format!("missing required key {k:?}"));
        cfg.model = model.ok_or_else(|| missing("model"))?;
        cfg.frequency = frequency.ok_or_else(|| missing("frequency"))?;
        cfg.n_levels = n_levels.ok_or_else(|| missing("n_levels"))?;
        cfg.block_cells = block_cells.ok_or_else(|| missing("block_cells"))?;
        if cfg.w_pml == 0 {
            return Err(cfg_err(last_line, "w_pml must be positive"));
        }
        Ok(cfg)
    }

    /// Text that parses back to an identical configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = |p: &Path| p.display().to_string();
        let _ = writeln!(s, "model = {}", p(&self.model));
        match self.frequency {
            Frequency::Hz(f) => writeln!(s, "frequency = {f:?}"),
            Frequency::Omega(w) => writeln!(s, "omega = {w:?}"),
        }
        .unwrap();
        let _ = writeln!(s, "n_levels = {}", self.n_levels);
        let _ = writeln!(s, "block_cells = {}", self.block_cells);
        let _ = writeln!(s, "w_pml = {}", self.w_pml);
        let _ = writeln!(s, "t_nonabs = {}", self.t_nonabs);
        let _ = writeln!(s, "sigma0 = {:?}", self.sigma0);
        let _ = writeln!(s, "tol_trace = {:?}", self.tol_trace);
        let _ = writeln!(s, "tol_residual = {:?}", self.tol_residual);
        let _ = writeln!(s, "diagonal_exchange = {}", self.diagonal_exchange);
        let _ = writeln!(s, "max_sweeps = {}", self.max_sweeps);
        let _ = writeln!(s, "workers = {}", self.workers);
        match &self.source {
            Some(SourceSpec::Delta(i, j)) => {
                let _ = writeln!(s, "source = {i}, {j}");
            }
            Some(SourceSpec::File(f)) => {
                let _ = writeln!(s, "source_file = {}", p(f));
            }
            None => {}
        }
        for (k, v) in [
            ("output", &self.output),
            ("report", &self.report),
            ("slice_field", &self.slice_field),
            ("slice_out", &self.slice_out),
        ] {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {}", p(v));
            }
        }
        let kind = match self.model_kind {
            ModelKind::Constant => "constant",
            ModelKind::Layered => "layered",
            ModelKind::Lens => "lens",
        };
        let _ = writeln!(s, "model_kind = {kind}");
        if let Some(c) = self.model_cells {
            let _ = writeln!(s, "model_cells = {c}");
        }
        if let Some(h) = self.model_h {
            let _ = writeln!(s, "model_h = {h:?}");
        }
        let speeds: Vec<String> = self.model_speeds.iter().map(|c| format!("{c:?}")).collect();
        let _ = writeln!(s, "model_speeds = {}", speeds.join(", "));
        let _ = writeln!(s, "lens_speed = {:?}", self.lens_speed);
        let _ = writeln!(s, "lens_radius = {:?}", self.lens_radius);
        let axis = match self.slice_axis {
            SliceAxis::X => "x",
            SliceAxis::Y => "y",
        };
        let _ = writeln!(s, "slice_axis = {axis}");
        let _ = writeln!(s, "slice_index = {}", self.slice_index);
        s
    }

    pub fn omega(&self) -> f64 {
        self.frequency.omega()
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            n_levels: self.n_levels,
            block_cells: self.block_cells,
            w_pml: self.w_pml,
            t_nonabs: self.t_nonabs,
            sigma0: self.sigma0,
            tol_trace: self.tol_trace,
            max_sweeps: self.max_sweeps,
            diagonal_exchange: self.diagonal_exchange,
            workers: self.workers,
            cache_dir: crate::trace_engine::default_cache_dir(),
        }
    }
}
