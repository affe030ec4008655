use std::f64::consts::PI;

use helmprop::direct_solver::*;
use helmprop::medium_grid::*;
use helmprop::{Error, C64};
use rand::{Rng, SeedableRng};

fn random_vec(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect()
}

fn rel(a: &[C64], b: &[C64]) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    l2(&d) / l2(b)
}

/// Helmholtz operator on a rectangle of `nx` by `ny` cells with PML all round.
fn operator(nx: usize, ny: usize, model: &VelocityModel, omega: f64) -> DiscreteOperator {
    let m = 4;
    let root = Rect::new(0, nx, 0, ny);
    let extent = BlockExtent::new(Rect::new(m, nx - m, m, ny - m), m, root);
    let p = PmlProfile::new(m, 0, 40.0, omega / model.c_max(), [model.grid.hx, model.grid.hy]).unwrap();
    let medium = Medium::new(model, omega, root, 0).unwrap();
    assemble_operator(&extent, &medium, &p).unwrap()
}

#[test]
fn band_matrix_diagonal_solve() {
    let mut a = BandMatrix::zeros(5, 1, 1);
    for i in 0..5 {
        a.set(i, i, C64::new(i as f64 + 1.0, 1.0));
    }
    let f = factorize_band(a.clone()).unwrap();
    let rhs = random_vec(5, 1);
    let x = f.solve(&rhs).unwrap();
    for i in 0..5 {
        assert!((x[i] - rhs[i] / a.get(i, i)).norm() < 1e-15);
    }
}

#[test]
fn general_band_round_trip_with_pivoting() {
    let n = 40;
    let (kl, ku) = (3, 2);
    let mut a = BandMatrix::zeros(n, kl, ku);
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    for i in 0..n {
        for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
            // weak diagonal forces row interchanges
            let s = if i == j { 1e-3 } else { 1.0 };
            a.set(i, j, C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * s);
        }
    }
    let v = random_vec(n, 4);
    let b = a.matvec(&v);
    let x = factorize_band(a).unwrap().solve(&b).unwrap();
    assert!(rel(&x, &v) < 1e-10, "{}", rel(&x, &v));
}

#[test]
fn helmholtz_round_trip_both_orderings() {
    let model = VelocityModel::lens(GridSpec::new(40, 40, 1.0, 1.0, [0.0, 0.0]).unwrap(), 2000.0, 1500.0, 0.2).unwrap();
    let omega = 2.0 * PI * 1500.0 / 10.0;
    for (nx, ny) in [(20, 32), (32, 20), (24, 24)] {
        let op = operator(nx, ny, &model, omega);
        let fact = factorize(&op).unwrap();
        let v = random_vec(op.n_unknowns(), 5);
        let b = op.apply(&v).unwrap();
        let x = fact.solve(&b).unwrap();
        assert!(rel(&x, &v) < 1e-10, "{nx}x{ny}: {}", rel(&x, &v));
        let ax = op.apply(&x).unwrap();
        assert!(rel(&ax, &b) < 1e-10);
        // shorter side innermost
        assert_eq!(fact.bandwidth().0, nx.min(ny) - 1);
    }
}

#[test]
fn zero_rhs_gives_zero() {
    let model = VelocityModel::constant(GridSpec::new(16, 16, 1.0, 1.0, [0.0, 0.0]).unwrap(), 1500.0).unwrap();
    let op = operator(16, 16, &model, 0.6);
    let x = factorize(&op).unwrap().solve(&vec![C64::new(0.0, 0.0); op.n_unknowns()]).unwrap();
    assert!(x.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn factorization_is_deterministic_and_batch_matches_single() {
    let model = VelocityModel::layered(GridSpec::new(20, 20, 1.0, 1.0, [0.0, 0.0]).unwrap(), &[2000.0, 1500.0]).unwrap();
    let op = operator(20, 20, &model, 0.7);
    let a = factorize(&op).unwrap();
    let b = factorize(&op).unwrap();
    assert_eq!(a.factors(), b.factors());
    let rhs: Vec<Vec<C64>> = (0..4).map(|s| random_vec(op.n_unknowns(), s)).collect();
    let batch = a.solve_batch(&rhs).unwrap();
    for (r, x) in rhs.iter().zip(&batch) {
        assert_eq!(&a.solve(r).unwrap(), x);
    }
}

#[test]
fn singular_and_mismatched_inputs_are_errors() {
    let mut a = BandMatrix::zeros(3, 1, 1);
    a.set(0, 0, C64::new(1.0, 0.0));
    a.set(2, 2, C64::new(1.0, 0.0));
    assert!(matches!(factorize_band(a), Err(Error::Singular { row: 1, .. })));
    let mut d = BandMatrix::zeros(2, 0, 0);
    d.set(0, 0, C64::new(1.0, 0.0));
    d.set(1, 1, C64::new(1.0, 0.0));
    let f = factorize_band(d).unwrap();
    assert!(matches!(f.solve(&[C64::new(1.0, 0.0)]), Err(Error::Dimension { .. })));
}
