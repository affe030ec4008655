use std::f64::consts::PI;

use helmprop::fast_solver::{direct_solve, padded_grid, point_source, relative_error, setup, SolverConfig};
use helmprop::medium_grid::VelocityModel;

fn omega_for(c: f64, h: f64, ppw: f64) -> f64 {
    2.0 * PI * c / (ppw * h)
}

fn check(n_levels: usize, block_cells: usize, speeds: &[f64]) -> (f64, f64) {
    let config = SolverConfig {
        n_levels,
        block_cells,
        ..Default::default()
    };
    let grid = padded_grid(&config, 1.0).unwrap();
    let model = VelocityModel::layered(grid, speeds).unwrap();
    let omega = omega_for(1500.0, 1.0, 10.0);
    let solver = setup(&model, omega, &config).unwrap();
    let m = config.margin();
    let n = config.interior_cells();
    let f = point_source(&solver.tree, (m + n / 3, m + 2 * n / 3 + 1)).unwrap();
    let (u, report) = solver.solve(&f).unwrap();
    let reference = direct_solve(&model, omega, &config, &f).unwrap();
    (relative_error(&u, &reference), report.residual)
}

#[test]
fn one_level_matches_direct() {
    let (err, res) = check(1, 16, &[1500.0]);
    assert!(err < 1e-7 && res < 1e-7, "err {err:e} residual {res:e}");
}

#[test]
fn two_levels_layered_matches_direct() {
    let (err, res) = check(2, 16, &[2000.0, 1500.0, 2000.0]);
    assert!(err < 1e-7 && res < 1e-7, "err {err:e} residual {res:e}");
}
