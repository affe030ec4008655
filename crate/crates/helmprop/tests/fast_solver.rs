use std::f64::consts::PI;

use helmprop::fast_solver::*;
use helmprop::medium_grid::{NodeField, VelocityModel};
use helmprop::C64;

const OMEGA: f64 = 2.0 * PI * 1500.0 / 10.0;

fn config(n_levels: usize, workers: usize) -> SolverConfig {
    SolverConfig {
        n_levels,
        block_cells: 12,
        w_pml: 6,
        workers,
        ..Default::default()
    }
}

fn layered(c: &SolverConfig) -> VelocityModel {
    VelocityModel::layered(padded_grid(c, 1.0).unwrap(), &[2000.0, 1500.0, 2000.0]).unwrap()
}

fn source(s: &FastSolver, frac: (usize, usize)) -> NodeField {
    let m = s.config.margin();
    let n = s.config.interior_cells();
    s.point_source((m + frac.0 * n / 5, m + frac.1 * n / 5)).unwrap()
}

#[test]
fn zero_source_gives_zero_field() {
    let c = config(2, 1);
    let s = setup(&layered(&c), OMEGA, &c).unwrap();
    let f = NodeField::zeros(s.tree.root_rect);
    let (u, report) = s.solve(&f).unwrap();
    assert!(u.values.iter().all(|v| v.norm() == 0.0));
    assert_eq!(report.residual, 0.0);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let c1 = config(2, 1);
    let model = layered(&c1);
    let s1 = setup(&model, OMEGA, &c1).unwrap();
    let f = source(&s1, (2, 3));
    let (u1, _) = s1.solve(&f).unwrap();
    for w in [2, 4] {
        let s = setup(&model, OMEGA, &config(2, w)).unwrap();
        let (u, _) = s.solve(&f).unwrap();
        assert_eq!(u.values, u1.values, "workers {w}");
    }
}

#[test]
fn solve_is_linear_in_the_source() {
    let c = config(2, 2);
    let s = setup(&layered(&c), OMEGA, &c).unwrap();
    let (f1, f2) = (source(&s, (1, 1)), source(&s, (3, 4)));
    let (a, b) = (C64::new(0.7, 0.2), C64::new(-1.5, 1.0));
    let mut f = f1.clone();
    for (v, (p, q)) in f.values.iter_mut().zip(f1.values.iter().zip(&f2.values)) {
        *v = a * p + b * q;
    }
    let (u1, _) = s.solve(&f1).unwrap();
    let (u2, _) = s.solve(&f2).unwrap();
    let (u, _) = s.solve(&f).unwrap();
    let mut comb = u.clone();
    for (v, (p, q)) in comb.values.iter_mut().zip(u1.values.iter().zip(&u2.values)) {
        *v = a * p + b * q;
    }
    assert!(relative_error(&u, &comb) < 1e-9);
}

#[test]
fn hierarchical_and_flat_one_level_agree() {
    let c = config(1, 1);
    let model = layered(&c);
    let s = setup(&model, OMEGA, &c).unwrap();
    let f = source(&s, (1, 2));
    let (u, _) = s.solve(&f).unwrap();
    let (flat, sweeps) = s.flat_solve(&f).unwrap();
    assert!(sweeps > 0);
    let reference = direct_solve(&model, OMEGA, &c, &f).unwrap();
    assert!(relative_error(&u, &reference) < 1e-7);
    assert!(relative_error(&flat, &reference) < 1e-7);
    let c2 = config(2, 1);
    let s2 = setup(&layered(&c2), OMEGA, &c2).unwrap();
    assert!(s2.flat_solve(&source(&s2, (1, 2))).is_err());
}

#[test]
fn report_has_every_phase_and_level() {
    let c = config(2, 1);
    let s = setup(&layered(&c), OMEGA, &c).unwrap();
    let (_, report) = s.solve(&source(&s, (2, 2))).unwrap();
    assert!(report.residual < 1e-6);
    let text = report.to_text();
    for key in [
        "setup.level0.blocks = 16",
        "setup.level1.blocks = 4",
        "source_up.level1",
        "solution_down.level1",
        "residual = ",
    ] {
        assert!(text.contains(key), "missing {key}:\n{text}");
    }
    assert!(text.lines().all(|l| l.contains(" = ")));
}

#[test]
fn cached_maps_are_reused() {
    let dir = tempfile::tempdir().unwrap();
    let c = SolverConfig {
        cache_dir: Some(dir.path().to_path_buf()),
        ..config(2, 2)
    };
    let model = layered(&c);
    let first = setup(&model, OMEGA, &c).unwrap();
    assert!(first.setup_log.iter().all(|l| l.cache_hits == 0));
    let second = setup(&model, OMEGA, &c).unwrap();
    assert!(second.setup_log.iter().map(|l| l.cache_hits).sum::<usize>() > 0);
    let f = source(&first, (2, 1));
    assert_eq!(first.solve(&f).unwrap().0.values, second.solve(&f).unwrap().0.values);
    assert_ne!(cache_key(&model, OMEGA, &c), cache_key(&model, OMEGA * 1.01, &c));
}

#[test]
fn invalid_configurations_are_rejected() {
    let c = config(1, 1);
    let model = layered(&c);
    for bad in [
        SolverConfig { workers: 0, ..c.clone() },
        SolverConfig { tol_trace: 0.0, ..c.clone() },
        SolverConfig { w_pml: 0, ..c.clone() },
        SolverConfig { block_cells: 13, ..c.clone() },
    ] {
        assert!(setup(&model, OMEGA, &bad).is_err());
    }
    let s = setup(&model, OMEGA, &c).unwrap();
    assert!(s.point_source((0, 0)).is_err());
}

#[test]
fn fld2_round_trip() {
    let c = config(1, 1);
    let s = setup(&layered(&c), OMEGA, &c).unwrap();
    let (u, _) = s.solve(&source(&s, (2, 2))).unwrap();
    let bytes = encode_fld2(&u, 1.0, 0.5);
    assert_eq!(&bytes[..4], b"FLD2");
    let (v, hx, hy) = decode_fld2(&bytes).unwrap();
    assert_eq!((v.values, hx, hy), (u.values.clone(), 1.0, 0.5));
    assert_eq!(v.rect, u.rect);
    assert!(decode_fld2(&bytes[..bytes.len() - 8]).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.fld2");
    write_fld2(&path, &u, 1.0, 1.0).unwrap();
    assert_eq!(read_fld2(&path).unwrap().0.values, u.values);
    assert!(read_fld2(&dir.path().join("missing.fld2")).is_err());
}
