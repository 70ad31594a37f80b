//! The S-variable synthesis condition, its polytopic extension, and the
//! necessary-and-sufficient baseline condition.

use super::{LmiBuilder, LmiError, LmiProblem};
use crate::covdyn::build_m;
use crate::matlib::{kron, spectral_radius};
use crate::moments::SecondMomentFactorization;
use crate::Mat;

/// Fixed multiplier `N₀ = [[−I, 0], [C₀, I⊗A₀], [A₀⊗I, −I]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct N0Choice {
    pub a0: Mat,
    pub c0: Mat,
}

impl N0Choice {
    pub fn n(&self) -> usize {
        self.a0.rows()
    }

    /// The `3n² × 2n²` matrix `N₀`.
    pub fn matrix(&self) -> Mat {
        let n = self.n();
        let nn = n * n;
        let i_n = Mat::identity(n);
        let neg_i = Mat::identity(nn).scale(-1.0);
        let mut out = Mat::zeros(3 * nn, 2 * nn);
        out.set_block(0, 0, &neg_i);
        out.set_block(nn, 0, &self.c0);
        out.set_block(nn, nn, &kron(&i_n, &self.a0));
        out.set_block(2 * nn, 0, &kron(&self.a0, &i_n));
        out.set_block(2 * nn, nn, &neg_i);
        out
    }

    /// `A₀⊗A₀ + C₀`, which must be Schur stable for the condition to be
    /// feasible.
    pub fn lifted(&self) -> Mat {
        &kron(&self.a0, &self.a0) + &self.c0
    }
}

/// `A₀ = 0, C₀ = 0`.
pub fn n0_zero(n: usize) -> N0Choice {
    N0Choice {
        a0: Mat::zeros(n, n),
        c0: Mat::zeros(n * n, n * n),
    }
}

/// `A₀ = A + B K₀, C₀ = C_p^A`. Logs a warning when the induced lifted
/// matrix is not Schur stable.
pub fn n0_from_guess(a: &Mat, b: &Mat, k0: &Mat, cpa: &Mat) -> Result<N0Choice, LmiError> {
    let m = build_m(a, b, k0, cpa).map_err(|e| LmiError::Dimension(e.to_string()))?;
    match spectral_radius(&m) {
        Ok(rho) if rho < 1.0 => {}
        Ok(rho) => log::warn!("N0 guess gives a lifted matrix with spectral radius {rho} >= 1; the condition is infeasible"),
        Err(e) => log::warn!("N0 guess: spectral radius unavailable ({e})"),
    }
    Ok(N0Choice {
        a0: a + &(b * k0),
        c0: cpa.clone(),
    })
}

fn check_dims(a: &Mat, b: &Mat, cpa: &Mat, n0: &N0Choice) -> Result<(usize, usize), LmiError> {
    let n = a.rows();
    let m = b.cols();
    let ok = a.is_square()
        && b.rows() == n
        && cpa.shape() == (n * n, n * n)
        && n0.a0.shape() == (n, n)
        && n0.c0.shape() == (n * n, n * n);
    if !ok {
        return Err(LmiError::Dimension(format!(
            "A {}x{}, B {}x{}, C_p^A {}x{}, A0 {}x{}, C0 {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
            cpa.rows(),
            cpa.cols(),
            n0.a0.rows(),
            n0.a0.cols(),
            n0.c0.rows(),
            n0.c0.cols()
        )));
    }
    Ok((n, m))
}

/// Value of the main block `He(N(S,T) N₀ᵀ) − diag(X, −X, 0)` with
/// `N(S,T) = [[−S⊗I, 0], [C_p^A (S⊗I), I⊗(AS+BT)], [(AS+BT)⊗I, −I⊗S]]`.
pub fn theorem2_block(a: &Mat, b: &Mat, cpa: &Mat, n0t: &Mat, x: &Mat, s: &Mat, t: &Mat) -> Mat {
    let n = a.rows();
    let nn = n * n;
    let i_n = Mat::identity(n);
    let p = &(a * s) + &(b * t);
    let s_kron = kron(s, &i_n);
    let mut nst = Mat::zeros(3 * nn, 2 * nn);
    nst.set_block(0, 0, &s_kron.scale(-1.0));
    nst.set_block(nn, 0, &(cpa * &s_kron));
    nst.set_block(nn, nn, &kron(&i_n, &p));
    nst.set_block(2 * nn, 0, &kron(&p, &i_n));
    nst.set_block(2 * nn, nn, &kron(&i_n, s).scale(-1.0));
    let q = &nst * n0t;
    let mut out = &q + &q.transpose();
    for j in 0..nn {
        for i in 0..nn {
            out[(i, j)] -= x[(i, j)];
            out[(nn + i, nn + j)] += x[(i, j)];
        }
    }
    out
}

/// Single-vertex S-variable condition over `X` (symmetric n²×n²), `S` (n×n),
/// `T` (m×n). Blocks: `main` (3n²) and `X` (n²). `eps = None` selects the
/// data-scaled default.
pub fn build_theorem2(a: &Mat, b: &Mat, cpa: &Mat, n0: &N0Choice, eps: Option<f64>) -> Result<LmiProblem, LmiError> {
    build_corollary_polytopic(&[(a.clone(), b.clone())], cpa, n0, eps)
}

/// One main block per vertex with its own `X⁽ⁱ⁾` and shared `S`, `T`. With a
/// single vertex this is exactly [`build_theorem2`]; otherwise variables and
/// blocks are suffixed by the 1-based vertex index (`X1`, `main1`, ...).
pub fn build_corollary_polytopic(
    vertices: &[(Mat, Mat)],
    cpa: &Mat,
    n0: &N0Choice,
    eps: Option<f64>,
) -> Result<LmiProblem, LmiError> {
    let (a1, b1) = vertices.first().ok_or(LmiError::NoVertices)?;
    let (n, m) = check_dims(a1, b1, cpa, n0)?;
    for (a, b) in vertices {
        let dims = check_dims(a, b, cpa, n0)?;
        if dims != (n, m) {
            return Err(LmiError::Dimension("vertices differ in dimension".into()));
        }
    }
    let nn = n * n;
    let l = vertices.len();
    let suffix = |i: usize| if l == 1 { String::new() } else { (i + 1).to_string() };
    let mut bld = LmiBuilder::new();
    let xs: Vec<usize> = (0..l).map(|i| bld.symmetric(&format!("X{}", suffix(i)), nn)).collect();
    let sv = bld.full("S", n, n);
    let tv = bld.full("T", m, n);
    let n0t = n0.matrix().transpose();
    for (i, (a, b)) in vertices.iter().enumerate() {
        let (a, b, cpa, n0t, xv) = (a.clone(), b.clone(), cpa.clone(), n0t.clone(), xs[i]);
        bld.block(&format!("main{}", suffix(i)), 3 * nn, true, eps, move |v| {
            theorem2_block(&a, &b, &cpa, &n0t, &v[xv], &v[sv], &v[tv])
        });
        bld.block(&format!("X{}", suffix(i)), nn, true, eps, move |v| v[xv].clone());
    }
    bld.build()
}

/// Baseline condition over `X` (symmetric n×n) and `Y` (m×n):
///
/// ```text
/// [[X, colᵀ], [col, I_n̄ ⊗ X]] ≻ 0,   col = [A_1 X + B_1 Y; …; A_n̄ X + B_n̄ Y]
/// ```
///
/// with `(A_i, B_i)` the slices of the truncated second-moment factorization.
/// By a Schur complement this is `P − Σ (A_i + B_i F)ᵀ P (A_i + B_i F) ≻ 0`
/// for `P = X⁻¹`, `F = Y X⁻¹`. Blocks: `main` (n + n·n̄) and `X` (n).
pub fn build_baseline_theorem1(fact: &SecondMomentFactorization, eps: Option<f64>) -> Result<LmiProblem, LmiError> {
    let (n, m, nbar) = (fact.n, fact.m, fact.nbar);
    let mut bld = LmiBuilder::new();
    let xv = bld.symmetric("X", n);
    let yv = bld.full("Y", m, n);
    let sa = fact.slices_a.clone();
    let sb = fact.slices_b.clone();
    let dim = n + n * nbar;
    bld.block("main", dim, true, eps, move |v| {
        let (x, y) = (&v[xv], &v[yv]);
        let mut out = Mat::zeros(dim, dim);
        out.set_block(0, 0, x);
        for i in 0..nbar {
            let c = &(&sa[i] * x) + &(&sb[i] * y);
            let r0 = n + i * n;
            out.set_block(r0, 0, &c);
            out.set_block(0, r0, &c.transpose());
            out.set_block(r0, r0, x);
        }
        out
    });
    bld.block("X", n, true, eps, move |v| v[xv].clone());
    bld.build()
}
