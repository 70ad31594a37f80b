use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use super::MatError;
use crate::scalar::Scalar;

/// Dense real matrix stored in column-major order.
///
/// Public constructors reject non-finite entries. Arithmetic operators panic on
/// dimension mismatch; use the `try_*` variants at API boundaries.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: std::fmt::Debug> std::fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:?} ", self.data[j * self.rows + i])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Column vector from a slice.
    pub fn column(v: &[T]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, MatError> {
        if data.len() != rows * cols {
            return Err(MatError::DimensionMismatch {
                op: "from_col_major",
                expected: format!("{} entries", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MatError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row-major nested rows (the on-disk convention).
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, MatError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|row| row.len() != c) {
            return Err(MatError::DimensionMismatch {
                op: "from_rows",
                expected: format!("{c} columns"),
                found: format!("{} columns in row {bad}", rows[bad].len()),
            });
        }
        let m = Self::from_fn(r, c, |i, j| rows[i][j]);
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(MatError::NonFinite);
        }
        Ok(m)
    }

    /// Row-major nested rows, the inverse of [`Matrix::from_rows`].
    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)]).collect())
            .collect()
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Column-major entries.
    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        assert!(self.is_square(), "symmetrize needs a square matrix");
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)]) * half
        })
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|j| self.col(j).iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |a, v| a.max(v.abs()))
    }

    /// Frobenius inner product `tr(Aᵀ B)`.
    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "dot: shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        assert!(
            r0 + b.rows <= self.rows && c0 + b.cols <= self.cols,
            "set_block out of range"
        );
        for j in 0..b.cols {
            for i in 0..b.rows {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    /// Assembles a matrix from a grid of blocks; `None` entries are zero blocks
    /// whose size is inferred from their row and column neighbours.
    pub fn from_blocks(grid: &[Vec<Option<&Self>>]) -> Result<Self, MatError> {
        let nr = grid.len();
        let nc = grid.first().map_or(0, Vec::len);
        let mut heights = vec![None; nr];
        let mut widths = vec![None; nc];
        for (bi, row) in grid.iter().enumerate() {
            if row.len() != nc {
                return Err(MatError::DimensionMismatch {
                    op: "from_blocks",
                    expected: format!("{nc} block columns"),
                    found: format!("{} in block row {bi}", row.len()),
                });
            }
            for (bj, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    for (slot, size, what) in [
                        (&mut heights[bi], b.rows, "row"),
                        (&mut widths[bj], b.cols, "column"),
                    ] {
                        match *slot {
                            None => *slot = Some(size),
                            Some(s) if s != size => {
                                return Err(MatError::DimensionMismatch {
                                    op: "from_blocks",
                                    expected: format!("block {what} size {s}"),
                                    found: format!("{size} at block ({bi},{bj})"),
                                })
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        let heights: Vec<usize> = heights.into_iter().map(|h| h.unwrap_or(0)).collect();
        let widths: Vec<usize> = widths.into_iter().map(|w| w.unwrap_or(0)).collect();
        let mut out = Self::zeros(heights.iter().sum(), widths.iter().sum());
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (bj, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    out.set_block(r0, c0, b);
                }
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        Ok(out)
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self, MatError> {
        if self.cols != rhs.rows {
            return Err(MatError::DimensionMismatch {
                op: "mul",
                expected: format!("lhs cols = rhs rows = {}", self.cols),
                found: format!("{}x{} * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            });
        }
        Ok(self.matmul(rhs))
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self, MatError> {
        if self.shape() != rhs.shape() {
            return Err(MatError::DimensionMismatch {
                op: "add",
                expected: format!("{}x{}", self.rows, self.cols),
                found: format!("{}x{}", rhs.rows, rhs.cols),
            });
        }
        Ok(self + rhs)
    }

    fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul: dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let oc = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for k in 0..self.cols {
                let b = rhs.data[j * rhs.rows + k];
                if b == T::zero() {
                    continue;
                }
                let ac = &self.data[k * self.rows..(k + 1) * self.rows];
                for (o, &a) in oc.iter_mut().zip(ac) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · v` for a plain vector.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec: dimension mismatch");
        let mut out = vec![T::zero(); self.rows];
        for (j, &b) in v.iter().enumerate() {
            if b == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.col(j)) {
                *o += a * b;
            }
        }
        out
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn tr_mul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "tr_mul: dimension mismatch");
        Self::from_fn(self.cols, other.cols, |i, j| {
            self.col(i)
                .iter()
                .zip(other.col(j))
                .map(|(&a, &b)| a * b)
                .sum()
        })
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: Self) -> Matrix<T> {
        self.matmul(rhs)
    }
}

impl<T: Scalar> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: Self) -> Matrix<T> {
        assert_eq!(self.shape(), rhs.shape(), "add: shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Scalar> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: Self) -> Matrix<T> {
        assert_eq!(self.shape(), rhs.shape(), "sub: shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: Scalar> Neg for &Matrix<T> {
    type Output = Matrix<T>;
    fn neg(self) -> Matrix<T> {
        self.map(|v| -v)
    }
}

impl<T: Scalar> AddAssign<&Matrix<T>> for Matrix<T> {
    fn add_assign(&mut self, rhs: &Matrix<T>) {
        assert_eq!(self.shape(), rhs.shape(), "add_assign: shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl<T: Scalar> SubAssign<&Matrix<T>> for Matrix<T> {
    fn sub_assign(&mut self, rhs: &Matrix<T>) {
        assert_eq!(self.shape(), rhs.shape(), "sub_assign: shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

/// Kronecker product; block `(r, s)` of the result is `a[r,s] · b`.
pub fn kron<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for s in 0..ac {
        for r in 0..ar {
            let f = a[(r, s)];
            if f == T::zero() {
                continue;
            }
            for j in 0..bc {
                for i in 0..br {
                    out[(r * br + i, s * bc + j)] = f * b[(i, j)];
                }
            }
        }
    }
    out
}

/// Column-major stacking, so that `vec(A X Bᵀ) = (B ⊗ A) vec(X)`.
pub fn vec<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    m.as_slice().to_vec()
}

/// Inverse of [`vec`].
pub fn unvec<T: Scalar>(v: &[T], rows: usize) -> Result<Matrix<T>, MatError> {
    if rows == 0 || !v.len().is_multiple_of(rows) {
        return Err(MatError::DimensionMismatch {
            op: "unvec",
            expected: format!("length divisible by {rows}"),
            found: format!("length {}", v.len()),
        });
    }
    Matrix::from_col_major(rows, v.len() / rows, v.to_vec())
}

/// Symmetric matrix whose entries are exactly mirrored across the diagonal.
#[derive(Clone, PartialEq, Debug)]
pub struct SymMatrix<T>(Matrix<T>);

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    /// Takes the upper triangle of `m` and mirrors it.
    pub fn from_upper(m: &Matrix<T>) -> Result<Self, MatError> {
        if !m.is_square() {
            return Err(MatError::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let n = m.rows();
        Ok(Self(Matrix::from_fn(n, n, |i, j| {
            if i <= j {
                m[(i, j)]
            } else {
                m[(j, i)]
            }
        })))
    }

    /// Averages `m` with its transpose.
    pub fn from_symmetrized(m: &Matrix<T>) -> Result<Self, MatError> {
        if !m.is_square() {
            return Err(MatError::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        // averaging can leave a one-ulp skew, so mirror the upper triangle afterwards
        Self::from_upper(&m.symmetrize())
    }

    /// Accepts `m` only if it is exactly symmetric.
    pub fn try_from_exact(m: Matrix<T>) -> Result<Self, MatError> {
        if !m.is_square() {
            return Err(MatError::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let n = m.rows();
        for j in 0..n {
            for i in 0..j {
                if m[(i, j)] != m[(j, i)] {
                    return Err(MatError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self(m))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }
}

impl<T> Index<(usize, usize)> for SymMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, idx: (usize, usize)) -> &T {
        &self.0[idx]
    }
}
