use covlmi::matlib::kron;
use covlmi::moments::{
    cpa_analytic, cpa_monte_carlo, factorize_second_moment, second_moment_matrix, EntryDistribution, Sampler,
    UncertaintyModel,
};
use covlmi::Mat;

#[test]
fn iid_cpa_is_rank_one() {
    // E[Ā ⊗ Ā] for i.i.d. entries is σ² vec(I) vec(I)ᵀ.
    let n = 3;
    let cpa = cpa_analytic(&UncertaintyModel::iid(n, 1, 0.07).unwrap()).unwrap();
    let mut want = Mat::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            want[(i * (n + 1), j * (n + 1))] = 0.07;
        }
    }
    assert!((&cpa - &want).max_abs() < 1e-15);
}

#[test]
fn atom_cpa_matches_kronecker_average() {
    let a1 = Mat::from_rows(&[vec![0.3, -0.1], vec![0.2, 0.0]]).unwrap();
    let a2 = Mat::from_rows(&[vec![-0.2, 0.4], vec![0.0, 0.5]]).unwrap();
    let w = [0.25, 0.75];
    let model = UncertaintyModel::sampled(
        2,
        1,
        Sampler::Atoms {
            weights: w.to_vec(),
            atoms_a: vec![a1.clone(), a2.clone()],
            atoms_b: None,
        },
    )
    .unwrap();
    let want = &kron(&a1, &a1).scale(w[0]) + &kron(&a2, &a2).scale(w[1]);
    assert!((&model.cpa() - &want).max_abs() < 1e-15);
}

#[test]
fn monte_carlo_agrees_with_analytic() {
    let v = Mat::from_rows(&[vec![0.1, 0.02], vec![0.05, 0.2]]).unwrap();
    for dist in [EntryDistribution::Gaussian, EntryDistribution::Uniform] {
        let model = UncertaintyModel::sampled(
            2,
            1,
            Sampler::Entries {
                dist,
                var_a: v.clone(),
                var_b: None,
            },
        )
        .unwrap();
        let exact = model.cpa();
        let indep = UncertaintyModel::independent(2, 1, v.clone()).unwrap();
        assert_eq!(cpa_analytic(&indep).unwrap(), exact);
        let mc = cpa_monte_carlo(&model, 200_000, 9).unwrap();
        // Entries are products of two noise terms; standard error ≈ 0.2 × 0.2 × √3 / √N.
        assert!((&mc - &exact).max_abs() < 0.003, "{dist:?}");
        assert_eq!(mc, cpa_monte_carlo(&model, 200_000, 9).unwrap());
    }
}

#[test]
fn second_moment_factorization_reconstructs() {
    let model = UncertaintyModel::independent(2, 1, Mat::from_rows(&[vec![0.1, 0.0], vec![0.03, 0.2]]).unwrap()).unwrap();
    let a = Mat::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.95]]).unwrap();
    let b = Mat::from_rows(&[vec![1.0], vec![0.5]]).unwrap();
    let sigma = second_moment_matrix(&model, &a, &b).unwrap();
    let f = factorize_second_moment(&sigma, 2, 1e-12).unwrap();
    assert!(f.reconstruction_error() < 1e-12);
}

#[test]
fn rejects_invalid_models() {
    assert!(UncertaintyModel::iid(2, 1, -0.1).is_err());
    assert!(UncertaintyModel::independent(2, 1, Mat::zeros(3, 3)).is_err());
    let bad_weights = Sampler::Atoms {
        weights: vec![0.5, 0.6],
        atoms_a: vec![Mat::zeros(2, 2), Mat::zeros(2, 2)],
        atoms_b: None,
    };
    assert!(UncertaintyModel::sampled(2, 1, bad_weights).is_err());
}
