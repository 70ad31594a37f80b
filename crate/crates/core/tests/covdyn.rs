use covlmi::covdyn::{build_m, CovarianceDynamics};
use covlmi::matlib::{kron, SymMatrix};
use covlmi::{Mat, SymMat};

fn atoms() -> (Vec<f64>, Vec<Mat>) {
    let a1 = Mat::from_rows(&[vec![0.3, -0.1], vec![0.2, 0.0]]).unwrap();
    let a2 = Mat::from_rows(&[vec![-0.1, 0.2], vec![0.0, -0.3]]).unwrap();
    (vec![0.5, 0.5], vec![a1.clone(), a2.clone()])
}

fn setup() -> (Mat, Mat, Mat, Mat, SymMat) {
    let a = Mat::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.95]]).unwrap();
    let b = Mat::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
    let k = Mat::from_rows(&[vec![-0.6, -0.3]]).unwrap();
    let (w, at) = atoms();
    let cpa = &kron(&at[0], &at[0]).scale(w[0]) + &kron(&at[1], &at[1]).scale(w[1]);
    let wn = SymMat::from_symmetrized(&Mat::from_rows(&[vec![0.5, 0.1], vec![0.1, 0.3]]).unwrap()).unwrap();
    (a, b, k, cpa, wn)
}

#[test]
fn cov_step_matches_direct_expectation() {
    // F Σ Fᵀ + Σ_a w_a Ā_a (Σ + z zᵀ) Ā_aᵀ + W, summed over the atoms.
    let (a, b, k, cpa, w) = setup();
    let dynm = CovarianceDynamics::new(&a, &b, &k, &cpa, &w).unwrap();
    let sigma = Mat::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
    let z = [0.7, -1.2];
    let f = &a + &(&b * &k);
    let zz = &Mat::column(&z) * &Mat::column(&z).transpose();
    let mut want = &(&(&f * &sigma) * &f.transpose()) + w.as_matrix();
    let (wt, at) = atoms();
    for (p, ab) in wt.iter().zip(&at) {
        want = &want + &(&(ab * &(&sigma + &zz)) * &ab.transpose()).scale(*p);
    }
    let got = dynm.cov_step(&SymMat::from_symmetrized(&sigma).unwrap(), &z).unwrap();
    assert!((got.as_matrix() - &want).max_abs() < 1e-14);
}

#[test]
fn steady_state_is_a_fixed_point() {
    let (a, b, k, cpa, w) = setup();
    let dynm = CovarianceDynamics::new(&a, &b, &k, &cpa, &w).unwrap();
    assert!(dynm.spectral_radius().unwrap() < 1.0);
    let ss = dynm.steady_state_cov().unwrap();
    let next = dynm.cov_step_uncoupled(&ss).unwrap();
    assert!((next.as_matrix() - ss.as_matrix()).max_abs() < 1e-12);
    let mut it = SymMat::zeros(2);
    for _ in 0..2000 {
        it = dynm.cov_step(&it, &[0.0, 0.0]).unwrap();
    }
    assert!((it.as_matrix() - ss.as_matrix()).max_abs() < 1e-10);
}

#[test]
fn unstable_loop_has_no_steady_state() {
    let (a, b, _, cpa, w) = setup();
    let dynm = CovarianceDynamics::new(&a, &b, &Mat::zeros(1, 2), &cpa, &w).unwrap();
    assert!(dynm.spectral_radius().unwrap() >= 1.0);
    assert!(dynm.steady_state_cov().is_err());
}

#[test]
fn m_operator_layout() {
    let (a, b, k, cpa, _) = setup();
    let f = &a + &(&b * &k);
    let m = build_m(&a, &b, &k, &cpa).unwrap();
    assert!((&m - &(&kron(&f, &f) + &cpa)).max_abs() < 1e-15);
    assert!(build_m(&a, &b, &Mat::zeros(2, 2), &cpa).is_err());
}

#[test]
fn single_precision_agrees() {
    let (a, b, k, cpa, w) = setup();
    let ss64 = CovarianceDynamics::new(&a, &b, &k, &cpa, &w).unwrap().steady_state_cov().unwrap();
    let to32 = |m: &Mat| covlmi::Mat32::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] as f32);
    let w32 = SymMatrix::from_symmetrized(&to32(w.as_matrix())).unwrap();
    let d32 = covlmi::covdyn::CovarianceDynamics::<f32>::new(&to32(&a), &to32(&b), &to32(&k), &to32(&cpa), &w32).unwrap();
    let ss32 = d32.steady_state_cov().unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let (x, y) = (ss64.as_matrix()[(i, j)], ss32.as_matrix()[(i, j)] as f64);
            assert!((x - y).abs() <= 1e-4 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }
}
