//! Symmetric eigendecomposition: Householder tridiagonalization followed by
//! the implicit QL iteration with Wilkinson-style shifts (EISPACK tred2/tql2).

use super::{MatError, Matrix, SymMatrix};
use crate::scalar::Scalar;

/// `s = V · diag(values) · Vᵀ` with eigenvalues in ascending order.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Scalar> SymEigen<T> {
    pub fn min(&self) -> T {
        self.values.first().copied().unwrap_or_else(T::zero)
    }

    pub fn max(&self) -> T {
        self.values.last().copied().unwrap_or_else(T::zero)
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let fl = f(l);
            for i in 0..n {
                scaled[(i, j)] *= fl;
            }
        }
        let mut out = Matrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v: T = (0..n).map(|k| scaled[(i, k)] * self.vectors[(j, k)]).sum();
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

pub fn sym_eig<T: Scalar>(s: &SymMatrix<T>) -> Result<SymEigen<T>, MatError> {
    sym_eig_matrix(s.as_matrix())
}

/// Same as [`sym_eig`] but reads only the lower triangle of a square matrix.
pub(crate) fn sym_eig_matrix<T: Scalar>(a: &Matrix<T>) -> Result<SymEigen<T>, MatError> {
    let n = a.rows();
    let (d, v) = decompose(a, true)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| d[x].partial_cmp(&d[y]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[i * n + order[j]]);
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues only, ascending; reads the lower triangle.
pub(crate) fn sym_eigvals_matrix<T: Scalar>(a: &Matrix<T>) -> Result<Vec<T>, MatError> {
    let (mut d, _) = decompose(a, false)?;
    d.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok(d)
}

/// Unsorted eigenvalues and, when `vectors` is set, the row-major
/// eigenvector buffer.
fn decompose<T: Scalar>(a: &Matrix<T>, vectors: bool) -> Result<(Vec<T>, Vec<T>), MatError> {
    let n = a.rows();
    if !a.is_square() {
        return Err(MatError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if n == 0 {
        return Ok((vec![], vec![]));
    }
    // Work row-major in a flat buffer: v[i * n + j] is V(i, j).
    let mut v: Vec<T> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            if i >= j {
                a[(i, j)]
            } else {
                a[(j, i)]
            }
        })
        .collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(n, &mut v, &mut d, &mut e, vectors);
    tql2(n, &mut v, &mut d, &mut e, vectors)?;
    Ok((d, v))
}

fn tred2<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T], vectors: bool) {
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
                v[idx(j, i)] = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    if !vectors {
        // the tridiagonal's diagonal sits on the diagonal of v
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = v[idx(j, j)];
        }
        e[0] = T::zero();
        return;
    }
    for i in 0..n.saturating_sub(1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = T::zero();
    }
    v[idx(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

fn tql2<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T], vectors: bool) -> Result<(), MatError> {
    let idx = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let max_iter = 30 * n.max(1);
    let mut total_iter = 0usize;
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    let two = T::lit(2.0);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] is zero, so m < n always holds here
        if m > l {
            loop {
                total_iter += 1;
                if total_iter > max_iter {
                    return Err(MatError::NoConvergence {
                        what: "symmetric eigensolver",
                        iterations: max_iter,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..if vectors { n } else { 0 } {
                        h = v[idx(k, i + 1)];
                        v[idx(k, i + 1)] = s * v[idx(k, i)] + c * h;
                        v[idx(k, i)] = c * v[idx(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}
