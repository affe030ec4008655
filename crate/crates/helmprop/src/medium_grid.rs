//! Grids, velocity models, PML stretching and the discrete UPML Helmholtz operator.
//!
//! The operator is the symmetrized form `div(A grad u) + J k^2 u` with
//! `A = diag(ay/ax, ax/ay)` and `J = ax*ay`, discretized with a 5-point stencil.
//! Unknowns are the strictly interior nodes of a rectangle; its boundary is
//! homogeneous Dirichlet.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type Node = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 1 || ny < 1 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least one cell per direction, got {nx}x{ny}"
            )));
        }
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad spacing hx={hx} hy={hy}")));
        }
        Ok(GridSpec { nx, ny, hx, hy, origin })
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn node_coord(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.hx,
            self.origin[1] + j as f64 * self.hy,
        ]
    }
}

/// Wave speed sampled at the grid nodes, x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityModel {
    pub grid: GridSpec,
    pub c: Vec<f64>,
}

impl VelocityModel {
    pub fn new(grid: GridSpec, c: Vec<f64>) -> Result<Self> {
        if c.len() != grid.n_nodes() {
            return Err(Error::Dimension {
                expected: grid.n_nodes(),
                got: c.len(),
            });
        }
        if let Some(bad) = c.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "wave speed at sample {bad} is {}",
                c[bad]
            )));
        }
        Ok(VelocityModel { grid, c })
    }

    pub fn constant(grid: GridSpec, speed: f64) -> Result<Self> {
        let n = grid.n_nodes();
        Self::new(grid, vec![speed; n])
    }

    /// Horizontal layers of equal thickness, listed bottom to top.
    pub fn layered(grid: GridSpec, speeds: &[f64]) -> Result<Self> {
        if speeds.is_empty() {
            return Err(Error::InvalidArgument("layered model needs at least one speed".into()));
        }
        let nl = speeds.len();
        let mut c = Vec::with_capacity(grid.n_nodes());
        for j in 0..=grid.ny {
            let layer = ((j * nl) / (grid.ny + 1)).min(nl - 1);
            c.extend(std::iter::repeat_n(speeds[layer], grid.nx + 1));
        }
        Self::new(grid, c)
    }

    /// Smooth Gaussian lens centred in the grid; `radius` is a fraction of the side.
    pub fn lens(grid: GridSpec, background: f64, center_speed: f64, radius: f64) -> Result<Self> {
        let cx = grid.nx as f64 / 2.0;
        let cy = grid.ny as f64 / 2.0;
        let r0 = radius * grid.nx.min(grid.ny) as f64;
        let mut c = Vec::with_capacity(grid.n_nodes());
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                let r2 = ((i as f64 - cx).powi(2) + (j as f64 - cy).powi(2)) / (r0 * r0);
                c.push(background + (center_speed - background) * (-r2).exp());
            }
        }
        Self::new(grid, c)
    }

    /// Speed at a node index, clamped to the model edge.
    pub fn speed(&self, i: i64, j: i64) -> f64 {
        let i = i.clamp(0, self.grid.nx as i64) as usize;
        let j = j.clamp(0, self.grid.ny as i64) as usize;
        self.c[i + (self.grid.nx + 1) * j]
    }

    pub fn c_max(&self) -> f64 {
        self.c.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn c_min(&self) -> f64 {
        self.c.iter().cloned().fold(f64::MAX, f64::min)
    }

    pub fn read_velm(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        Self::from_velm_bytes(&bytes)
    }

    pub fn from_velm_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Format {
            format: "VELM",
            msg: msg.to_string(),
        };
        if bytes.len() < 44 || &bytes[0..4] != b"VELM" {
            return Err(bad("missing VELM header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (sx, sy) = (u32_at(4), u32_at(8));
        if sx < 2 || sy < 2 {
            return Err(bad("need at least 2 samples per direction"));
        }
        let (hx, hy, ox, oy) = (f64_at(12), f64_at(20), f64_at(28), f64_at(36));
        let n = sx * sy;
        if bytes.len() != 44 + 4 * n {
            return Err(bad(&format!(
                "expected {} payload bytes, found {}",
                4 * n,
                bytes.len() - 44
            )));
        }
        let c = bytes[44..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let grid = GridSpec::new(sx - 1, sy - 1, hx, hy, [ox, oy])?;
        Self::new(grid, c)
    }

    pub fn to_velm_bytes(&self) -> Vec<u8> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(44 + 4 * self.c.len());
        out.extend_from_slice(b"VELM");
        out.extend_from_slice(&((g.nx + 1) as u32).to_le_bytes());
        out.extend_from_slice(&((g.ny + 1) as u32).to_le_bytes());
        for v in [g.hx, g.hy, g.origin[0], g.origin[1]] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.c {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn write_velm(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_velm_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmlProfile {
    pub w_pml: usize,
    pub t_nonabs: usize,
    pub sigma0: f64,
    pub k_ref: f64,
    /// grid spacing per axis; the layer is `w_pml * h` thick
    pub h: [f64; 2],
}

impl PmlProfile {
    pub fn new(w_pml: usize, t_nonabs: usize, sigma0: f64, k_ref: f64, h: [f64; 2]) -> Result<Self> {
        if w_pml < 1 {
            return Err(Error::InvalidArgument("w_pml must be at least 1".into()));
        }
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma0 must be positive, got {sigma0}")));
        }
        if !(k_ref > 0.0 && k_ref.is_finite()) {
            return Err(Error::InvalidArgument(format!("k_ref must be positive, got {k_ref}")));
        }
        if !h.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad grid spacing {h:?}")));
        }
        Ok(PmlProfile {
            w_pml,
            t_nonabs,
            sigma0,
            k_ref,
            h,
        })
    }

    /// Overlap margin in cells.
    pub fn margin(&self) -> usize {
        self.w_pml + self.t_nonabs
    }
}

/// Closed rectangle of node indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl Rect {
    pub fn new(x0: usize, x1: usize, y0: usize, y1: usize) -> Self {
        debug_assert!(x0 <= x1 && y0 <= y1);
        Rect { x0, x1, y0, y1 }
    }

    pub fn cells_x(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn cells_y(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    /// Strictly inside, i.e. an unknown of a Dirichlet problem on this rectangle.
    pub fn is_unknown(&self, x: usize, y: usize) -> bool {
        x > self.x0 && x < self.x1 && y > self.y0 && y < self.y1
    }

    pub fn unknowns_x(&self) -> usize {
        self.cells_x().saturating_sub(1)
    }

    pub fn unknowns_y(&self) -> usize {
        self.cells_y().saturating_sub(1)
    }

    pub fn n_unknowns(&self) -> usize {
        self.unknowns_x() * self.unknowns_y()
    }

    /// Position of an unknown in x-fastest storage.
    pub fn unknown_index(&self, x: usize, y: usize) -> Option<usize> {
        if self.is_unknown(x, y) {
            Some((x - self.x0 - 1) + self.unknowns_x() * (y - self.y0 - 1))
        } else {
            None
        }
    }

    pub fn unknown_node(&self, idx: usize) -> Node {
        let nx = self.unknowns_x();
        (self.x0 + 1 + idx % nx, self.y0 + 1 + idx / nx)
    }

    pub fn node_index(&self, x: usize, y: usize) -> usize {
        (x - self.x0) + (self.cells_x() + 1) * (y - self.y0)
    }

    pub fn n_nodes(&self) -> usize {
        (self.cells_x() + 1) * (self.cells_y() + 1)
    }

    pub fn intersect(&self, o: &Rect) -> Option<Rect> {
        let (x0, x1) = (self.x0.max(o.x0), self.x1.min(o.x1));
        let (y0, y1) = (self.y0.max(o.y0), self.y1.min(o.y1));
        (x0 <= x1 && y0 <= y1).then(|| Rect::new(x0, x1, y0, y1))
    }
}

/// Interior and PML-extended rectangles of one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockExtent {
    pub interior: Rect,
    pub extended: Rect,
    /// left, right, bottom, top
    pub absorbing: [bool; 4],
}

impl BlockExtent {
    pub fn new(interior: Rect, margin: usize, root: Rect) -> Self {
        let extended = Rect::new(
            interior.x0.saturating_sub(margin).max(root.x0),
            (interior.x1 + margin).min(root.x1),
            interior.y0.saturating_sub(margin).max(root.y0),
            (interior.y1 + margin).min(root.y1),
        );
        BlockExtent {
            interior,
            extended,
            absorbing: [true; 4],
        }
    }
}

/// Quadratic damping ramp over normalized depth `d`.
pub fn pml_sigma(d: f64, profile: &PmlProfile) -> f64 {
    if d <= 0.0 {
        0.0
    } else if d >= 1.0 {
        profile.sigma0
    } else {
        profile.sigma0 * d * d
    }
}

fn depth_outside(v: usize, lo: usize, hi: usize) -> usize {
    lo.saturating_sub(v) + v.saturating_sub(hi)
}

/// Complex stretch factor `1 + i sigma / k_ref` at a node index along one axis, with
/// `sigma = pml_sigma(d) / (w_pml h)` in 1/m so the layer's effect does not depend on units.
pub fn alpha(node: usize, axis: Axis, extent: &BlockExtent, profile: &PmlProfile) -> Result<C64> {
    let (lo, hi, elo, ehi, h) = match axis {
        Axis::X => (
            extent.interior.x0,
            extent.interior.x1,
            extent.extended.x0,
            extent.extended.x1,
            profile.h[0],
        ),
        Axis::Y => (
            extent.interior.y0,
            extent.interior.y1,
            extent.extended.y0,
            extent.extended.y1,
            profile.h[1],
        ),
    };
    if node < elo || node > ehi {
        return Err(Error::InvalidArgument(format!(
            "node {node} outside extended range [{elo}, {ehi}] along {axis:?}"
        )));
    }
    let delta = depth_outside(node, lo, hi) as f64;
    let d = (delta - profile.t_nonabs as f64) / profile.w_pml as f64;
    let sigma = pml_sigma(d, profile) / (profile.w_pml as f64 * h);
    Ok(C64::new(1.0, sigma / profile.k_ref))
}

/// Stretch factors of one block along both axes, indexed from the extended corner.
#[derive(Clone, Debug, PartialEq)]
pub struct Stretch {
    pub rect: Rect,
    pub ax: Vec<C64>,
    pub ay: Vec<C64>,
}

impl Stretch {
    pub fn new(extent: &BlockExtent, profile: &PmlProfile) -> Self {
        let r = extent.extended;
        let ax = (r.x0..=r.x1)
            .map(|x| alpha(x, Axis::X, extent, profile).unwrap())
            .collect();
        let ay = (r.y0..=r.y1)
            .map(|y| alpha(y, Axis::Y, extent, profile).unwrap())
            .collect();
        Stretch { rect: r, ax, ay }
    }

    #[inline]
    pub fn ax(&self, x: usize) -> C64 {
        self.ax[x - self.rect.x0]
    }

    #[inline]
    pub fn ay(&self, y: usize) -> C64 {
        self.ay[y - self.rect.y0]
    }
}

/// Nearest-node wavenumber, clamping outside the model.
pub fn sample_k(model: &VelocityModel, node: (i64, i64), omega: f64) -> f64 {
    omega / model.speed(node.0, node.1)
}

/// Squared wavenumber on the solver grid. Solver node `g` reads model node `g - offset`.
#[derive(Clone, Debug)]
pub struct Medium {
    pub omega: f64,
    pub hx: f64,
    pub hy: f64,
    pub offset: i64,
    pub rect: Rect,
    k2: Vec<f64>,
}

impl Medium {
    pub fn new(model: &VelocityModel, omega: f64, rect: Rect, offset: i64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidArgument(format!("omega must be positive, got {omega}")));
        }
        let mut k2 = Vec::with_capacity(rect.n_nodes());
        for y in rect.y0..=rect.y1 {
            for x in rect.x0..=rect.x1 {
                let k = sample_k(model, (x as i64 - offset, y as i64 - offset), omega);
                k2.push(k * k);
            }
        }
        Ok(Medium {
            omega,
            hx: model.grid.hx,
            hy: model.grid.hy,
            offset,
            rect,
            k2,
        })
    }

    #[inline]
    pub fn k2(&self, x: usize, y: usize) -> f64 {
        self.k2[self.rect.node_index(x, y)]
    }

    pub fn k_min(&self) -> f64 {
        self.k2.iter().cloned().fold(f64::MAX, f64::min).sqrt()
    }
}

/// Flux coefficient of the x-edge `(x, y)-(x+1, y)`.
#[inline]
pub fn edge_x(s: &Stretch, m: &Medium, x: usize, y: usize) -> C64 {
    s.ay(y) * 0.5 * (s.ax(x).inv() + s.ax(x + 1).inv()) / (m.hx * m.hx)
}

/// Flux coefficient of the y-edge `(x, y)-(x, y+1)`.
#[inline]
pub fn edge_y(s: &Stretch, m: &Medium, x: usize, y: usize) -> C64 {
    s.ax(x) * 0.5 * (s.ay(y).inv() + s.ay(y + 1).inv()) / (m.hy * m.hy)
}

#[inline]
pub fn mass(s: &Stretch, m: &Medium, x: usize, y: usize) -> C64 {
    s.ax(x) * s.ay(y) * m.k2(x, y)
}

/// Assembled 5-point operator on the unknowns of `rect`.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub rect: Rect,
    pub omega: f64,
    /// x-edges, `cells_x * (cells_y + 1)`, x fastest
    pub ex: Vec<C64>,
    /// y-edges, `(cells_x + 1) * cells_y`, x fastest
    pub ey: Vec<C64>,
    /// `J k^2` per node of `rect`
    pub jk: Vec<C64>,
}

impl DiscreteOperator {
    /// Operator on `rect` using the stretch of the block that owns it.
    pub fn from_stretch(rect: Rect, stretch: &Stretch, medium: &Medium) -> Result<Self> {
        let (cx, cy) = (rect.cells_x(), rect.cells_y());
        let mut ex = Vec::with_capacity(cx * (cy + 1));
        let mut ey = Vec::with_capacity((cx + 1) * cy);
        let mut jk = Vec::with_capacity(rect.n_nodes());
        for y in rect.y0..=rect.y1 {
            for x in rect.x0..rect.x1 {
                ex.push(edge_x(stretch, medium, x, y));
            }
        }
        for y in rect.y0..rect.y1 {
            for x in rect.x0..=rect.x1 {
                ey.push(edge_y(stretch, medium, x, y));
            }
        }
        for y in rect.y0..=rect.y1 {
            for x in rect.x0..=rect.x1 {
                let v = mass(stretch, medium, x, y);
                if !v.is_finite() {
                    return Err(Error::NonFinite(x, y));
                }
                jk.push(v);
            }
        }
        if let Some(p) = ex.iter().chain(ey.iter()).position(|v| !v.is_finite()) {
            let _ = p;
            return Err(Error::NonFinite(rect.x0, rect.y0));
        }
        Ok(DiscreteOperator {
            rect,
            omega: medium.omega,
            ex,
            ey,
            jk,
        })
    }

    #[inline]
    pub fn ex_at(&self, x: usize, y: usize) -> C64 {
        self.ex[(x - self.rect.x0) + self.rect.cells_x() * (y - self.rect.y0)]
    }

    #[inline]
    pub fn ey_at(&self, x: usize, y: usize) -> C64 {
        self.ey[(x - self.rect.x0) + (self.rect.cells_x() + 1) * (y - self.rect.y0)]
    }

    #[inline]
    pub fn jk_at(&self, x: usize, y: usize) -> C64 {
        self.jk[self.rect.node_index(x, y)]
    }

    /// Diagonal entry at an unknown (edges to the Dirichlet boundary included).
    pub fn center(&self, x: usize, y: usize) -> C64 {
        self.jk_at(x, y)
            - self.ex_at(x, y)
            - self.ex_at(x - 1, y)
            - self.ey_at(x, y)
            - self.ey_at(x, y - 1)
    }

    /// Matrix entry between two unknowns given by node coordinates.
    pub fn entry(&self, p: Node, q: Node) -> C64 {
        let (px, py) = p;
        let (qx, qy) = q;
        if p == q {
            self.center(px, py)
        } else if py == qy && px + 1 == qx {
            self.ex_at(px, py)
        } else if py == qy && qx + 1 == px {
            self.ex_at(qx, py)
        } else if px == qx && py + 1 == qy {
            self.ey_at(px, py)
        } else if px == qx && qy + 1 == py {
            self.ey_at(px, qy)
        } else {
            C64::new(0.0, 0.0)
        }
    }

    pub fn n_unknowns(&self) -> usize {
        self.rect.n_unknowns()
    }

    /// `A u` on the unknowns (x-fastest storage).
    pub fn apply(&self, u: &[C64]) -> Result<Vec<C64>> {
        let n = self.n_unknowns();
        if u.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: u.len(),
            });
        }
        let r = self.rect;
        let nx = r.unknowns_x();
        let ny = r.unknowns_y();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for j in 0..ny {
            let y = r.y0 + 1 + j;
            for i in 0..nx {
                let x = r.x0 + 1 + i;
                let k = i + nx * j;
                let mut acc = self.center(x, y) * u[k];
                if i > 0 {
                    acc += self.ex_at(x - 1, y) * u[k - 1];
                }
                if i + 1 < nx {
                    acc += self.ex_at(x, y) * u[k + 1];
                }
                if j > 0 {
                    acc += self.ey_at(x, y - 1) * u[k - nx];
                }
                if j + 1 < ny {
                    acc += self.ey_at(x, y) * u[k + nx];
                }
                out[k] = acc;
            }
        }
        Ok(out)
    }

    /// Right-hand side contribution `-A_IB g` of Dirichlet data given on all nodes of `rect`.
    pub fn dirichlet_rhs(&self, boundary: &[C64]) -> Vec<C64> {
        let r = self.rect;
        let mut rhs = vec![C64::new(0.0, 0.0); self.n_unknowns()];
        if r.unknowns_x() == 0 || r.unknowns_y() == 0 {
            return rhs;
        }
        let g = |x: usize, y: usize| boundary[r.node_index(x, y)];
        for y in r.y0 + 1..r.y1 {
            let left = r.unknown_index(r.x0 + 1, y).unwrap();
            rhs[left] -= self.ex_at(r.x0, y) * g(r.x0, y);
            let right = r.unknown_index(r.x1 - 1, y).unwrap();
            rhs[right] -= self.ex_at(r.x1 - 1, y) * g(r.x1, y);
        }
        for x in r.x0 + 1..r.x1 {
            let bottom = r.unknown_index(x, r.y0 + 1).unwrap();
            rhs[bottom] -= self.ey_at(x, r.y0) * g(x, r.y0);
            let top = r.unknown_index(x, r.y1 - 1).unwrap();
            rhs[top] -= self.ey_at(x, r.y1 - 1) * g(x, r.y1);
        }
        rhs
    }
}

/// Operator of a block on its extended extent.
pub fn assemble_operator(
    extent: &BlockExtent,
    medium: &Medium,
    profile: &PmlProfile,
) -> Result<DiscreteOperator> {
    if medium.rect.intersect(&extent.extended) != Some(extent.extended) {
        return Err(Error::InvalidArgument(
            "block extent does not fit the medium grid".into(),
        ));
    }
    let stretch = Stretch::new(extent, profile);
    DiscreteOperator::from_stretch(extent.extended, &stretch, medium)
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Crossover between the power series and the large-argument expansion.
pub const HANKEL_CROSSOVER: f64 = 12.0;

/// `H0^(1)(z)` from the ascending series for `J0` and `Y0`.
pub fn hankel0_series(z: f64) -> C64 {
    let q = z * z / 4.0;
    let mut term = 1.0;
    let mut j0 = 1.0;
    let mut harmonic = 0.0;
    let mut ysum = 0.0;
    let mut k = 1.0;
    loop {
        term *= -q / (k * k);
        harmonic += 1.0 / k;
        j0 += term;
        ysum -= harmonic * term;
        if term.abs() < 1e-18 * j0.abs().max(1e-300) && k > q {
            break;
        }
        k += 1.0;
    }
    let y0 = 2.0 / std::f64::consts::PI * (((z / 2.0).ln() + EULER_GAMMA) * j0 + ysum);
    C64::new(j0, y0)
}

/// `H0^(1)(z)` from its asymptotic expansion, truncated at the smallest term.
pub fn hankel0_asymptotic(z: f64) -> C64 {
    let mut sum = C64::new(1.0, 0.0);
    let mut term = C64::new(1.0, 0.0);
    let mut last = 1.0;
    let i = C64::new(0.0, 1.0);
    for k in 1..200 {
        let kf = k as f64;
        let a = -((2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * z);
        let next = term * i * a;
        let mag = next.norm();
        if mag >= last {
            break;
        }
        term = next;
        sum += term;
        last = mag;
        if mag < 1e-17 {
            break;
        }
    }
    let phase = C64::new(0.0, z - std::f64::consts::FRAC_PI_4).exp();
    (2.0 / (std::f64::consts::PI * z)).sqrt() * phase * sum
}

pub fn hankel0(z: f64) -> C64 {
    if z < HANKEL_CROSSOVER {
        hankel0_series(z)
    } else {
        hankel0_asymptotic(z)
    }
}

/// Free-space outgoing Green's function `(i/4) H0^(1)(k r)`.
pub fn analytic_green(k: f64, r: f64) -> Result<C64> {
    if r.is_nan() || k.is_nan() || r <= 0.0 || k <= 0.0 {
        return Err(Error::InvalidArgument(format!("need k > 0 and r > 0, got k={k} r={r}")));
    }
    Ok(C64::new(0.0, 0.25) * hankel0(k * r))
}

/// Complex values on every node of a rectangle, x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeField {
    pub rect: Rect,
    pub values: Vec<C64>,
}

impl NodeField {
    pub fn zeros(rect: Rect) -> Self {
        NodeField {
            rect,
            values: vec![C64::new(0.0, 0.0); rect.n_nodes()],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> C64 {
        self.values[self.rect.node_index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: C64) {
        let k = self.rect.node_index(x, y);
        self.values[k] = v;
    }

    #[inline]
    pub fn add(&mut self, x: usize, y: usize, v: C64) {
        let k = self.rect.node_index(x, y);
        self.values[k] += v;
    }

    pub fn norm(&self) -> f64 {
        l2(&self.values)
    }

    /// Values at the unknowns of `inner` (x fastest); `inner` must lie within `rect`.
    pub fn unknowns_of(&self, inner: &Rect) -> Vec<C64> {
        let mut out = Vec::with_capacity(inner.n_unknowns());
        for y in inner.y0 + 1..inner.y1 {
            for x in inner.x0 + 1..inner.x1 {
                out.push(self.get(x, y));
            }
        }
        out
    }

    /// Add unknown values of `inner` (x fastest) into this field.
    pub fn accumulate_unknowns(&mut self, inner: &Rect, u: &[C64]) {
        let mut k = 0;
        for y in inner.y0 + 1..inner.y1 {
            for x in inner.x0 + 1..inner.x1 {
                self.add(x, y, u[k]);
                k += 1;
            }
        }
    }
}

pub fn l2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
