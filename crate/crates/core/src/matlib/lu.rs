use super::{MatError, Matrix};
use crate::scalar::Scalar;

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
    norm_one: T,
}

impl<T: Scalar> Lu<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self, MatError> {
        if !a.is_square() {
            return Err(MatError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            if pivot == T::zero() {
                continue;
            }
            for i in (k + 1)..n {
                lu[(i, k)] /= pivot;
            }
            for j in (k + 1)..n {
                let f = lu[(k, j)];
                if f == T::zero() {
                    continue;
                }
                for i in (k + 1)..n {
                    let l = lu[(i, k)];
                    lu[(i, j)] -= l * f;
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            norm_one: a.norm_one(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    fn has_zero_pivot(&self) -> bool {
        (0..self.dim()).any(|i| self.lu[(i, i)] == T::zero())
    }

    fn solve_vec_unchecked(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            let xj = x[j];
            if xj != T::zero() {
                for i in (j + 1)..n {
                    x[i] -= self.lu[(i, j)] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            x[j] /= self.lu[(j, j)];
            let xj = x[j];
            if xj != T::zero() {
                for i in 0..j {
                    x[i] -= self.lu[(i, j)] * xj;
                }
            }
        }
        x
    }

    fn solve_transpose_vec_unchecked(&self, b: &[T]) -> Vec<T> {
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = b, Lᵀ v = w, x = Pᵀ v.
        let n = self.dim();
        let mut w = b.to_vec();
        for j in 0..n {
            let mut s = w[j];
            for i in 0..j {
                s -= self.lu[(i, j)] * w[i];
            }
            w[j] = s / self.lu[(j, j)];
        }
        for j in (0..n).rev() {
            let mut s = w[j];
            for i in (j + 1)..n {
                s -= self.lu[(i, j)] * w[i];
            }
            w[j] = s;
        }
        let mut x = vec![T::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = w[k];
        }
        x
    }

    /// Hager's estimate of the reciprocal 1-norm condition number.
    pub fn rcond(&self) -> T {
        let n = self.dim();
        if n == 0 {
            return T::one();
        }
        if self.has_zero_pivot() || self.norm_one == T::zero() {
            return T::zero();
        }
        let mut x = vec![T::one() / T::lit(n as f64); n];
        let mut est = T::zero();
        for it in 0..5 {
            let y = self.solve_vec_unchecked(&x);
            est = y.iter().map(|v| v.abs()).sum();
            if !est.is_finite() {
                return T::zero();
            }
            let xi: Vec<T> = y
                .iter()
                .map(|&v| if v >= T::zero() { T::one() } else { -T::one() })
                .collect();
            let z = self.solve_transpose_vec_unchecked(&xi);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .fold((0, T::zero()), |(bj, bv), (j, &v)| {
                    if v.abs() > bv {
                        (j, v.abs())
                    } else {
                        (bj, bv)
                    }
                });
            let ztx: T = z.iter().zip(&x).map(|(&a, &b)| a * b).sum();
            if it > 0 && zmax <= ztx {
                break;
            }
            x = vec![T::zero(); n];
            x[jmax] = T::one();
        }
        T::one() / (self.norm_one * est)
    }

    fn check_singular(&self) -> Result<(), MatError> {
        let rcond = self.rcond();
        if rcond < T::singular_rcond() {
            return Err(MatError::Singular {
                rcond: rcond.to_f64().unwrap_or(0.0),
            });
        }
        Ok(())
    }

    pub fn solve(&self, b: &Matrix<T>) -> Result<Matrix<T>, MatError> {
        if b.rows() != self.dim() {
            return Err(MatError::DimensionMismatch {
                op: "solve",
                expected: format!("{} rows", self.dim()),
                found: format!("{} rows", b.rows()),
            });
        }
        self.check_singular()?;
        let mut data = Vec::with_capacity(b.rows() * b.cols());
        for j in 0..b.cols() {
            data.extend(self.solve_vec_unchecked(b.col(j)));
        }
        Matrix::from_col_major(b.rows(), b.cols(), data)
    }

    pub fn solve_vec(&self, b: &[T]) -> Result<Vec<T>, MatError> {
        Ok(self.solve(&Matrix::column(b))?.into_vec())
    }
}

/// Solves `a · x = b` by LU with partial pivoting.
pub fn solve_linear<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>, MatError> {
    Lu::new(a)?.solve(b)
}

pub fn inverse<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>, MatError> {
    Lu::new(a)?.solve(&Matrix::identity(a.rows()))
}

/// Lower Cholesky factor `L` with `a = L Lᵀ`, reading the lower triangle.
/// Returns `None` when `a` is not numerically positive definite.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.rows();
    if !a.is_square() {
        return None;
    }
    let mut l = Matrix::zeros(n, n);
    let ld = l.as_mut_slice();
    let mut col = vec![T::zero(); n];
    // left-looking, column by column, so every inner loop is contiguous
    for j in 0..n {
        let c = &mut col[..n - j];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = a[(j + i, j)];
        }
        for k in 0..j {
            let ljk = ld[k * n + j];
            if ljk == T::zero() {
                continue;
            }
            for (ci, &lik) in c.iter_mut().zip(&ld[k * n + j..(k + 1) * n]) {
                *ci -= lik * ljk;
            }
        }
        let d = c[0];
        if d.is_nan() || d <= T::zero() {
            return None;
        }
        let d = d.sqrt();
        ld[j * n + j] = d;
        for i in 1..n - j {
            ld[j * n + j + i] = c[i] / d;
        }
    }
    Some(l)
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn forward_subst<T: Scalar>(l: &Matrix<T>, b: &mut [T]) {
    let n = l.rows();
    for j in 0..n {
        b[j] /= l[(j, j)];
        let bj = b[j];
        if bj != T::zero() {
            for i in (j + 1)..n {
                b[i] -= l[(i, j)] * bj;
            }
        }
    }
}

/// Solves `Lᵀ x = b` in place for lower-triangular `L`.
pub fn backward_subst_transpose<T: Scalar>(l: &Matrix<T>, b: &mut [T]) {
    let n = l.rows();
    for j in (0..n).rev() {
        let mut s = b[j];
        for i in (j + 1)..n {
            s -= l[(i, j)] * b[i];
        }
        b[j] = s / l[(j, j)];
    }
}

/// `L⁻¹` for lower-triangular `L`.
pub fn lower_inverse<T: Scalar>(l: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    let mut out = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        forward_subst(l, &mut e);
        for i in 0..n {
            out[(i, j)] = e[i];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal_solves() {
        let b = Matrix::column(&[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(solve_linear(&Matrix::identity(4), &b).unwrap(), b);
        let x = solve_linear(&Matrix::from_diag(&[2.0, 4.0]), &Matrix::column(&[2.0, 8.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn singular_is_reported() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            solve_linear(&a, &Matrix::column(&[1.0, 1.0])),
            Err(MatError::Singular { .. })
        ));
        let nearly = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-15]]).unwrap();
        assert!(solve_linear(&nearly, &Matrix::column(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn rcond_of_scaled_identity_is_one() {
        let lu = Lu::new(&Matrix::<f64>::identity(5).scale(3.0)).unwrap();
        assert!((lu.rcond() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cholesky_roundtrip_and_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert!((&(&l * &l.transpose()) - &a).max_abs() < 1e-14);
        assert!(cholesky(&Matrix::from_diag(&[1.0, -1.0])).is_none());
        let li = lower_inverse(&l);
        assert!((&(&li * &l) - &Matrix::identity(2)).max_abs() < 1e-14);
    }
}
