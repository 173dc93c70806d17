use nalgebra::DVector;
use sparse_pce::basis::{Basis, MeasurementMatrix, SampleSet};
use sparse_pce::harness::relative_l2_error;
use sparse_pce::kdv::{
    integrated_force, kdv_solve, kl_eigenpairs, random_force, soliton, KdVGrid, KdvParams, KdvSolver, QoiModel, QOI_X,
};
use sparse_pce::Error;

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(lo) < 0.0) == (f(mid) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Roots of `(l^2 w^2 - 1) sin(w T) - 2 l w cos(w T)`, the eigen-frequencies
/// of the exponential kernel on `[0, T]`.
fn exponential_kernel_frequencies(l: f64, horizon: f64, count: usize) -> Vec<f64> {
    let g = |w: f64| (l * l * w * w - 1.0) * (w * horizon).sin() - 2.0 * l * w * (w * horizon).cos();
    let mut roots = Vec::new();
    let h = 1e-3;
    let mut w = h;
    while roots.len() < count {
        if (g(w) < 0.0) != (g(w + h) < 0.0) {
            roots.push(bisect(g, w, w + h));
        }
        w += h;
    }
    roots
}

#[test]
fn kl_matches_closed_form_eigenpairs() {
    let l = 0.25;
    let kl = kl_eigenpairs(l, 1.0, 4, 200).unwrap();
    let freqs = exponential_kernel_frequencies(l, 1.0, 4);
    for (i, &w) in freqs.iter().enumerate() {
        let lambda = 2.0 * l / (1.0 + l * l * w * w);
        assert!((kl.eigenvalues()[i] - lambda).abs() < 1e-8, "mode {i}");

        let shape = |t: f64| l * w * (w * t).cos() + (w * t).sin();
        let fine: Vec<f64> = (0..=20_000).map(|k| k as f64 / 20_000.0).collect();
        let norm = (fine.windows(2).map(|p| 0.5 * (p[1] - p[0]) * (shape(p[0]).powi(2) + shape(p[1]).powi(2))).sum::<f64>()).sqrt();
        for &t in &[0.0, 0.13, 0.5, 0.91, 1.0] {
            let exact = shape(t) / norm;
            assert!((kl.eigenfunction(i, t).unwrap() - exact).abs() < 1e-5, "mode {i} at {t}");
        }
    }
}

#[test]
fn unforced_soliton_translates() {
    let grid = KdVGrid::new(256, 1e-4, 1.0).unwrap();
    let kl = kl_eigenpairs(0.25, 1.0, 2, 64).unwrap().with_sigma(0.0);
    let sol = kdv_solve(&grid, 1.0, 0.0, &kl, &[0.3, -0.2]).unwrap();
    let exact = grid.nodes().map(|x| soliton(x, 1.0, 1.0));
    let err = (&sol.u - &exact).norm() / exact.norm();
    assert!(err < 1e-3, "{err}");
    assert_eq!(sol.steps, 10_000);
}

#[test]
fn uniform_force_gives_galilean_shift() {
    let c = 0.3;
    let solver = KdvSolver::new(KdVGrid::new(256, 1e-4, 1.0).unwrap()).unwrap();
    let u0 = solver.initial_state(1.0, -2.0).unwrap();
    let sol = solver.run(&u0, &|t| Ok(c * t)).unwrap();
    let exact = solver.grid().nodes().map(|x| c + soliton(x, 1.0, -2.0 + 1.0 + c));
    let err = (&sol.u - &exact).norm() / exact.norm();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn time_step_halving_is_second_order() {
    let kl = kl_eigenpairs(0.25, 1.0, 2, 64).unwrap().with_sigma(0.0);
    let q: Vec<f64> = [1e-4, 5e-5, 2.5e-5]
        .iter()
        .map(|&dt| {
            let grid = KdVGrid::new(256, dt, 1.0).unwrap();
            let sol = kdv_solve(&grid, 1.0, 0.0, &kl, &[0.0, 0.0]).unwrap();
            grid.interpolate(sol.u.as_slice(), QOI_X).unwrap()
        })
        .collect();
    let ratio = (q[0] - q[1]) / (q[1] - q[2]);
    assert!((3.0..=5.0).contains(&ratio), "{ratio} from {q:?}");
}

#[test]
fn forced_mass_balance() {
    let grid = KdVGrid::new(256, 1e-4, 1.0).unwrap();
    let kl = kl_eigenpairs(0.25, 1.0, 2, 128).unwrap().with_sigma(0.1);
    let xi = [0.9, -0.6];
    let w = grid.quadrature_weights();
    let mass = |u: &DVector<f64>| u.iter().zip(&w).map(|(u, w)| u * w).sum::<f64>();
    let u0 = grid.nodes().map(|x| soliton(x, 1.0, 0.0));
    let sol = kdv_solve(&grid, 1.0, 0.0, &kl, &xi).unwrap();
    let injected = 2.0 * grid.half_width() * integrated_force(&kl, &xi, 1.0).unwrap();
    assert!(injected.abs() > 1e-2);
    let drift = mass(&sol.u) - mass(&u0) - injected;
    assert!(drift.abs() < 1e-3, "{drift}");
}

#[test]
fn zero_input_is_the_unforced_run() {
    let grid = KdVGrid::new(64, 1e-3, 0.2).unwrap();
    let kl = kl_eigenpairs(0.25, 1.0, 2, 64).unwrap().with_sigma(0.1);
    let silent = kl.clone().with_sigma(0.0);
    let a = kdv_solve(&grid, 1.0, 0.0, &kl, &[0.0, 0.0]).unwrap();
    let b = kdv_solve(&grid, 1.0, 0.0, &silent, &[0.7, 0.1]).unwrap();
    assert_eq!(a.u, b.u);
    for t in [0.0, 0.3, 1.0] {
        assert_eq!(random_force(&kl, &[0.0, 0.0], t).unwrap(), 0.0);
    }
}

#[test]
fn blowup_is_reported_with_its_step() {
    let solver = KdvSolver::new(KdVGrid::new(64, 2e-2, 1.0).unwrap()).unwrap();
    let u0 = solver.grid().nodes().map(|x| 200.0 / (x / 10.0).cosh().powi(2));
    match solver.run(&u0, &|_| Ok(0.0)) {
        Err(Error::Blowup { step }) => assert!((1..=50).contains(&step)),
        other => panic!("expected blowup, got {other:?}"),
    }
}

#[test]
fn rejects_mismatched_inputs() {
    let grid = KdVGrid::new(32, 1e-3, 1.0).unwrap();
    let kl = kl_eigenpairs(0.25, 1.0, 2, 16).unwrap();
    assert!(kdv_solve(&grid, 1.0, 0.0, &kl, &[0.1]).is_err());
    assert!(kdv_solve(&grid, -1.0, 0.0, &kl, &[0.1, 0.2]).is_err());
    let short = kl_eigenpairs(0.25, 0.5, 2, 16).unwrap();
    assert!(kdv_solve(&grid, 1.0, 0.0, &short, &[0.1, 0.2]).is_err());
}

#[test]
fn least_squares_surrogate_of_the_qoi() {
    let params = KdvParams {
        n_x: 128,
        dt: 5e-4,
        ..KdvParams::default()
    };
    let model = QoiModel::new(params, 2).unwrap();
    let basis = Basis::total_degree(2, 3).unwrap();
    let train = SampleSet::uniform(2, 3 * basis.len(), 1).unwrap();
    let test = SampleSet::uniform(2, 20, 2).unwrap();
    let a = MeasurementMatrix::assemble(&basis, &train, false).unwrap();
    let b = DVector::from_vec(model.eval_all(&train).unwrap());
    let coeffs = a.entries().clone().svd(true, true).solve(&b, 1e-12).unwrap();
    let fitted = (a.entries() * &coeffs - &b).norm() / b.norm();
    let v = MeasurementMatrix::assemble(&basis, &test, false).unwrap();
    let truth = model.eval_all(&test).unwrap();
    let err = relative_l2_error((v.entries() * &coeffs).as_slice(), &truth).unwrap();
    assert!(fitted < 1e-3 && err < 1e-3, "{fitted} {err}");
}
