use covlmi::matlib::{inverse, kron, solve_linear, spectral_radius, sym_eig, unvec, vec, Lu};
use covlmi::{Mat, Mat32, SymMat};
use proptest::prelude::*;

fn mat(r: usize, c: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-2.0f64..2.0, r * c).prop_map(move |d| Mat::from_col_major(r, c, d).unwrap())
}

fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
    (a - b).max_abs() <= tol * (1.0 + a.max_abs().max(b.max_abs()))
}

proptest! {
    #[test]
    fn kron_mixed_product(a in mat(2, 3), b in mat(2, 2), c in mat(3, 2), d in mat(2, 1)) {
        let lhs = &kron(&a, &b) * &kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn vec_of_product(a in mat(3, 2), x in mat(2, 2), b in mat(2, 3)) {
        let lhs = vec(&(&(&a * &x) * &b));
        let rhs = kron(&b.transpose(), &a).mul_vec(&vec(&x));
        prop_assert!(close(&Mat::column(&lhs), &Mat::column(&rhs), 1e-12));
        prop_assert_eq!(unvec(&vec(&x), 2).unwrap(), x);
    }

    #[test]
    fn lu_solves_dominant_systems(a in mat(4, 4), b in mat(4, 2)) {
        let a = &a + &Mat::identity(4).scale(10.0);
        let x = solve_linear(&a, &b).unwrap();
        prop_assert!(close(&(&a * &x), &b, 1e-12));
        prop_assert!(Lu::new(&a).unwrap().rcond() > 0.1);
        prop_assert!(close(&(&a * &inverse(&a).unwrap()), &Mat::identity(4), 1e-12));
    }

    #[test]
    fn sym_eig_reconstructs(g in mat(4, 4)) {
        let s = SymMat::from_symmetrized(&(&g + &g.transpose())).unwrap();
        let e = sym_eig(&s).unwrap();
        let v = &e.vectors;
        prop_assert!(close(&(&v.transpose() * v), &Mat::identity(4), 1e-12));
        let back = &(v * &Mat::from_diag(&e.values)) * &v.transpose();
        prop_assert!(close(&back, s.as_matrix(), 1e-12));
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn spectral_radius_of_similar_triangular(diag in prop::collection::vec(-1.5f64..1.5, 3), upper in mat(3, 3), p in mat(3, 3)) {
        // P T P⁻¹ with T upper triangular has the diagonal of T as spectrum.
        let mut t = Mat::from_diag(&diag);
        for j in 0..3 {
            for i in 0..j {
                t[(i, j)] = upper[(i, j)];
            }
        }
        let p = &p.scale(0.2) + &Mat::identity(3);
        let m = &(&p * &t) * &inverse(&p).unwrap();
        let want = diag.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        prop_assert!((spectral_radius(&m).unwrap() - want).abs() <= 1e-6 * (1.0 + want));
    }
}

#[test]
fn single_precision_alias() {
    let a = Mat32::from_rows(&[vec![4.0, 1.0], vec![2.0, 3.0]]).unwrap();
    let inv = inverse(&a).unwrap();
    assert!((&(&a * &inv) - &Mat32::identity(2)).max_abs() < 1e-6);
    assert!((spectral_radius(&a).unwrap() - 5.0).abs() < 1e-5);
}

#[test]
fn rejects_mismatched_shapes() {
    let a = Mat::zeros(2, 3);
    assert!(a.try_mul(&Mat::zeros(2, 3)).is_err());
    assert!(Mat::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    assert!(Lu::new(&Mat::zeros(2, 2)).is_err() || Lu::new(&Mat::zeros(2, 2)).unwrap().rcond() == 0.0);
}
