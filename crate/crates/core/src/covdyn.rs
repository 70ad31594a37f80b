//! Exact covariance dynamics of the stochastic closed loop.
//!
//! With `e⁺ = (A + Ā + BK) e + Ā z + w` the error covariance obeys
//!
//! ```text
//! vec(C⁺) = M vec(C) + C_p^A vec(z zᵀ) + vec(W),   M = (A+BK)⊗(A+BK) + C_p^A
//! ```
//!
//! and, when `ρ(M) < 1` and `z → 0`, converges to `unvec((I − M)⁻¹ vec W)`.

use thiserror::Error;

use crate::matlib::{kron, spectral_radius, unvec, vec, Lu, MatError, Matrix, SymMatrix};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("lifted dynamics not Schur stable: spectral radius {rho}")]
    Unstable { rho: f64 },
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// `(A+BK)⊗(A+BK) + C_p^A`.
pub fn build_m<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, k: &Matrix<T>, cpa: &Matrix<T>) -> Result<Matrix<T>, CovError> {
    let acl = closed_loop(a, b, k)?;
    let n = a.rows();
    if cpa.shape() != (n * n, n * n) {
        return Err(CovError::Dimension(format!(
            "C_p^A must be {0}x{0}, got {1}x{2}",
            n * n,
            cpa.rows(),
            cpa.cols()
        )));
    }
    Ok(&kron(&acl, &acl) + cpa)
}

fn closed_loop<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, k: &Matrix<T>) -> Result<Matrix<T>, CovError> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n || k.shape() != (b.cols(), n) {
        return Err(CovError::Dimension(format!(
            "A {}x{}, B {}x{}, K {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
            k.rows(),
            k.cols()
        )));
    }
    Ok(a + &(b * k))
}

/// Immutable lifted model of one closed loop.
#[derive(Clone, Debug)]
pub struct CovarianceDynamics<T> {
    n: usize,
    closed_loop: Matrix<T>,
    cpa: Matrix<T>,
    big_m: Matrix<T>,
    w_vec: Vec<T>,
}

impl<T: Scalar> CovarianceDynamics<T> {
    pub fn new(
        a: &Matrix<T>,
        b: &Matrix<T>,
        k: &Matrix<T>,
        cpa: &Matrix<T>,
        w: &SymMatrix<T>,
    ) -> Result<Self, CovError> {
        let big_m = build_m(a, b, k, cpa)?;
        let n = a.rows();
        if w.dim() != n {
            return Err(CovError::Dimension(format!("W must be {n}x{n}, got {0}x{0}", w.dim())));
        }
        Ok(Self {
            n,
            closed_loop: closed_loop(a, b, k)?,
            cpa: cpa.clone(),
            big_m,
            w_vec: vec(w.as_matrix()),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn closed_loop(&self) -> &Matrix<T> {
        &self.closed_loop
    }

    pub fn cpa(&self) -> &Matrix<T> {
        &self.cpa
    }

    pub fn big_m(&self) -> &Matrix<T> {
        &self.big_m
    }

    pub fn w_vec(&self) -> &[T] {
        &self.w_vec
    }

    pub fn spectral_radius(&self) -> Result<T, CovError> {
        Ok(spectral_radius(&self.big_m)?)
    }

    /// One step of the covariance recursion; `z` is the nominal state.
    pub fn cov_step(&self, cov_e: &SymMatrix<T>, z: &[T]) -> Result<SymMatrix<T>, CovError> {
        self.step_impl(cov_e, z, true)
    }

    /// Same recursion without the `C_p^A vec(z zᵀ)` coupling. Only meaningful
    /// as an ablation: it is wrong whenever `z ≠ 0`.
    pub fn cov_step_uncoupled(&self, cov_e: &SymMatrix<T>) -> Result<SymMatrix<T>, CovError> {
        self.step_impl(cov_e, &vec![T::zero(); self.n], false)
    }

    fn step_impl(&self, cov_e: &SymMatrix<T>, z: &[T], couple: bool) -> Result<SymMatrix<T>, CovError> {
        let n = self.n;
        if cov_e.dim() != n || z.len() != n {
            return Err(CovError::Dimension(format!(
                "expected {n}x{n} covariance and length-{n} z, got {} and {}",
                cov_e.dim(),
                z.len()
            )));
        }
        let acl = &self.closed_loop;
        let mut out = &(acl * cov_e.as_matrix()) * &acl.transpose();
        let mut src = cov_e.as_matrix().clone();
        if couple {
            for j in 0..n {
                for i in 0..n {
                    src[(i, j)] += z[i] * z[j];
                }
            }
        }
        let lifted = unvec(&self.cpa.mul_vec(&vec(&src)), n)?;
        out += &lifted;
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] += self.w_vec[j * n + i];
            }
        }
        Ok(SymMatrix::from_symmetrized(&out)?)
    }

    /// `unvec((I − M)⁻¹ vec W)`; one round of iterative refinement when the
    /// residual exceeds `1e-10` relative.
    pub fn steady_state_cov(&self) -> Result<SymMatrix<T>, CovError> {
        let rho = self.spectral_radius()?;
        if rho >= T::one() {
            return Err(CovError::Unstable {
                rho: rho.to_f64().unwrap_or(f64::NAN),
            });
        }
        let nn = self.n * self.n;
        let lhs = &Matrix::identity(nn) - &self.big_m;
        let lu = Lu::new(&lhs)?;
        let mut x = lu.solve_vec(&self.w_vec)?;
        let resid: Vec<T> = lhs.mul_vec(&x).iter().zip(&self.w_vec).map(|(ax, w)| *w - *ax).collect();
        let rnorm = resid.iter().fold(T::zero(), |m, r| m.max(r.abs()));
        let scale = self.w_vec.iter().fold(T::zero(), |m, r| m.max(r.abs()));
        if rnorm > T::lit(1e-10) * scale.max(T::min_positive_value()) {
            let dx = lu.solve_vec(&resid)?;
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        Ok(SymMatrix::from_symmetrized(&unvec(&x, self.n)?)?)
    }
}

/// `tr(cov) + ‖mean‖²`, the second moment `E[‖x‖²]`.
pub fn second_moment_trace<T: Scalar>(cov_x: &SymMatrix<T>, mean_x: &[T]) -> Result<T, CovError> {
    if cov_x.dim() != mean_x.len() {
        return Err(CovError::Dimension(format!(
            "covariance is {0}x{0}, mean has length {1}",
            cov_x.dim(),
            mean_x.len()
        )));
    }
    Ok(cov_x.as_matrix().trace() + mean_x.iter().map(|v| *v * *v).sum::<T>())
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    fn scalar(x: f64) -> M {
        M::from_diag(&[x])
    }

    #[test]
    fn scalar_m_and_steady_state() {
        let m = build_m(&scalar(0.5), &scalar(1.0), &scalar(-0.2), &scalar(0.1)).unwrap();
        assert!((m[(0, 0)] - 0.19).abs() < 1e-15);
        let w = SymMatrix::identity(1);
        let d = CovarianceDynamics::new(&scalar(0.5), &scalar(1.0), &scalar(-0.2), &scalar(0.1), &w).unwrap();
        let ss = d.steady_state_cov().unwrap();
        assert!((ss[(0, 0)] - 1.0 / 0.81).abs() < 1e-14);
    }

    #[test]
    fn unstable_rejected() {
        let d = CovarianceDynamics::new(&scalar(1.0), &scalar(0.0), &scalar(0.0), &scalar(0.2), &SymMatrix::identity(1)).unwrap();
        match d.steady_state_cov() {
            Err(CovError::Unstable { rho }) => assert!((rho - 1.2).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_step_is_zero() {
        let a = M::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.9]]).unwrap();
        let b = M::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let k = M::zeros(1, 2);
        let d = CovarianceDynamics::new(&a, &b, &k, &M::identity(4), &SymMatrix::zeros(2)).unwrap();
        let c = d.cov_step(&SymMatrix::zeros(2), &[0.0, 0.0]).unwrap();
        assert_eq!(c.as_matrix().max_abs(), 0.0);
    }

    #[test]
    fn trace_identity() {
        assert_eq!(second_moment_trace(&SymMatrix::<f64>::identity(2), &[0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(second_moment_trace(&SymMatrix::<f64>::zeros(2), &[3.0, 4.0]).unwrap(), 25.0);
    }

    #[test]
    fn single_precision_step() {
        let a = Matrix::<f32>::from_diag(&[0.5, 0.25]);
        let b = Matrix::<f32>::zeros(2, 1);
        let k = Matrix::<f32>::zeros(1, 2);
        let d = CovarianceDynamics::new(&a, &b, &k, &Matrix::zeros(4, 4), &SymMatrix::identity(2)).unwrap();
        let ss = d.steady_state_cov().unwrap();
        assert!((ss[(0, 0)] - 1.0 / 0.75).abs() < 1e-5);
        assert!((ss[(1, 1)] - 1.0 / 0.9375).abs() < 1e-5);
    }
}
