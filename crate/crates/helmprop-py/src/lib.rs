//! Python bindings: build a synthetic model, solve for point sources, compare
//! against the global direct solve and read field files.

use ::helmprop::fast_solver::{self, padded_grid, FastSolver, SolverConfig};
use ::helmprop::medium_grid::{NodeField, VelocityModel};
use ::helmprop::{Error, C64};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Config { .. }
        | Error::InvalidArgument(_)
        | Error::Dimension { .. }
        | Error::Grid(_)
        | Error::Format { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Rows of `(ny + 1)` lists of `(nx + 1)` complex samples, y outermost.
fn rows(u: &NodeField) -> Vec<Vec<C64>> {
    let r = u.rect;
    (r.y0..=r.y1)
        .map(|y| (r.x0..=r.x1).map(|x| u.get(x, y)).collect())
        .collect()
}

/// Hierarchical solver on a synthetic layered or lens medium.
#[pyclass(name = "Solver")]
struct PySolver {
    model: VelocityModel,
    inner: FastSolver,
}

#[pymethods]
impl PySolver {
    /// `speeds` gives layers from bottom to top; `lens_speed` replaces the model by a
    /// lens of that speed in a background of `speeds[0]`.
    #[new]
    #[pyo3(signature = (speeds, n_levels=1, block_cells=32, h=1.0, ppw=10.0, w_pml=8, workers=1, lens_speed=None, lens_radius=0.25))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        py: Python<'_>,
        speeds: Vec<f64>,
        n_levels: usize,
        block_cells: usize,
        h: f64,
        ppw: f64,
        w_pml: usize,
        workers: usize,
        lens_speed: Option<f64>,
        lens_radius: f64,
    ) -> PyResult<Self> {
        if speeds.is_empty() {
            return Err(PyValueError::new_err("speeds must not be empty"));
        }
        let config = SolverConfig {
            n_levels,
            block_cells,
            w_pml,
            workers,
            ..Default::default()
        };
        let grid = padded_grid(&config, h).map_err(py_err)?;
        let model = match lens_speed {
            Some(c) => VelocityModel::lens(grid, speeds[0], c, lens_radius),
            None => VelocityModel::layered(grid, &speeds),
        }
        .map_err(py_err)?;
        let omega = 2.0 * std::f64::consts::PI * model.c_min() / (ppw * h);
        let inner = py
            .detach(|| fast_solver::setup(&model, omega, &config))
            .map_err(py_err)?;
        Ok(PySolver { model, inner })
    }

    /// Angular frequency in rad/s.
    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }

    /// Cells per side, PML included; fields have one more sample per side.
    #[getter]
    fn cells(&self) -> usize {
        self.inner.tree.n_total()
    }

    /// First and last node index of the interior along each axis.
    #[getter]
    fn interior(&self) -> (usize, usize) {
        (self.inner.tree.interior.x0, self.inner.tree.interior.x1)
    }

    /// Field of a unit point source at node `(i, j)`, with the relative residual.
    fn solve(&self, py: Python<'_>, i: usize, j: usize) -> PyResult<(Vec<Vec<C64>>, f64)> {
        let (u, report) = py
            .detach(|| {
                let f = self.inner.point_source((i, j))?;
                self.inner.solve(&f)
            })
            .map_err(py_err)?;
        Ok((rows(&u), report.residual))
    }

    /// The same point source solved with one global band factorization.
    fn direct(&self, py: Python<'_>, i: usize, j: usize) -> PyResult<Vec<Vec<C64>>> {
        let u = py
            .detach(|| {
                let f = self.inner.point_source((i, j))?;
                fast_solver::direct_solve_tree(&self.inner.tree, &self.model, self.inner.omega, &f)
            })
            .map_err(py_err)?;
        Ok(rows(&u))
    }
}

/// Read an FLD2 field file as `(rows, hx, hy)`.
#[pyfunction]
fn read_fld2(path: std::path::PathBuf) -> PyResult<(Vec<Vec<C64>>, f64, f64)> {
    let (u, hx, hy) = fast_solver::read_fld2(&path).map_err(py_err)?;
    Ok((rows(&u), hx, hy))
}

#[pymodule]
fn helmprop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySolver>()?;
    m.add_function(wrap_pyfunction!(read_fld2, m)?)?;
    Ok(())
}
