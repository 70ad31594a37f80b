//! Max-margin feasibility solver for [`LmiProblem`]s and SDPA sparse I/O.
//!
//! `solve_feasibility` maximizes `t` subject to `F_b(x) − ε_b I − t I ⪰ 0` for
//! every block and `|x_i| ≤ R` (a box that keeps the homogeneous problems of
//! the [`crate::lmi`] builders bounded). The verdict is never read off the
//! optimizer's internal state:
//!
//! * `Feasible` requires re-evaluating every block at the returned point and
//!   finding `λ_min(F_b(x)) − ε_b ≥ tol` for all of them;
//! * `Infeasible` requires a checked Farkas certificate `Z_b ⪰ 0` with
//!   `Σ_b ⟨Z_b, A_{b,i}⟩ ≈ 0` for every scalar variable and
//!   `Σ_b ⟨Z_b, C_b − ε_b I⟩ < 0`;
//! * anything else is `Indeterminate`.

mod sdpa;
mod solver;

use std::collections::BTreeMap;

use crate::lmi::LmiProblem;
use crate::matlib::sym_eigvals_matrix;
use crate::Mat;

pub use sdpa::{export_sdpa, import_sdpa, read_sdpa, write_sdpa, SdpaError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    Indeterminate,
}

impl SdpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SdpStatus::Feasible => "feasible",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::Indeterminate => "indeterminate",
        }
    }
}

impl std::fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Margin a point must reach to be declared feasible.
    pub tol: f64,
    /// Radius of the box `|x_i| ≤ R` on every scalar variable.
    pub box_radius: f64,
    /// Relative duality gap and residual level at which iterations stop.
    pub gap_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-7,
            box_radius: 1.0,
            gap_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Variable values at the returned point (zero when none was found).
    pub assignments: BTreeMap<String, Mat>,
    /// Scalar vector behind `assignments`.
    pub x: Vec<f64>,
    /// `min_b (λ_min(F_b(x)) − ε_b)` re-evaluated at `x`.
    pub margin: f64,
    /// Optimal `t` reported by the interior-point iterations.
    pub solver_t: f64,
    pub iterations: usize,
    /// Wall time of the interior-point loop, in seconds.
    pub solve_time: f64,
    /// Normalized Farkas multipliers, one per block, when infeasible.
    pub certificate: Option<Vec<Mat>>,
    pub diagnostic: String,
}

impl SdpSolution {
    pub fn is_feasible(&self) -> bool {
        self.status == SdpStatus::Feasible
    }
}

/// `min_b (λ_min(F_b(x)) − ε_b)` and the per-block minimum eigenvalues.
pub fn evaluate_margin(p: &LmiProblem, x: &[f64]) -> (f64, Vec<f64>) {
    let mut margin = f64::INFINITY;
    let mut mins = Vec::with_capacity(p.blocks().len());
    for b in p.blocks() {
        let lmin = if b.dim == 0 {
            f64::INFINITY
        } else {
            sym_eigvals_matrix(&b.evaluate(x)).map_or(f64::NEG_INFINITY, |e| e[0])
        };
        mins.push(lmin);
        margin = margin.min(lmin - b.shift());
    }
    (margin, mins)
}

/// Residual data of a candidate Farkas certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificateCheck {
    /// `max_i |Σ_b ⟨Z_b, A_{b,i}⟩| / (‖Z‖_F ‖A_i‖_F)`.
    pub relative_residual: f64,
    /// `Σ_b ⟨Z_b, C_b − ε_b I⟩ / ‖Z‖_F`.
    pub objective: f64,
    pub min_eigenvalue: f64,
}

impl CertificateCheck {
    pub fn is_valid(&self) -> bool {
        self.relative_residual <= 1e-6 && self.objective < 0.0 && self.min_eigenvalue >= -1e-12
    }
}

/// Checks multipliers `z` (one symmetric matrix per block) as a Farkas
/// certificate of infeasibility, independently of how they were produced.
pub fn check_certificate(p: &LmiProblem, z: &[Mat]) -> CertificateCheck {
    let znorm = z.iter().map(|m| m.frobenius_norm().powi(2)).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 0..p.num_scalars() {
        let mut r = 0.0;
        let mut an = 0.0;
        for (b, zb) in p.blocks().iter().zip(z) {
            r += b.coeffs[i].dot(zb);
            an += b.coeffs[i].frobenius_norm().powi(2);
        }
        if an > 0.0 {
            worst = worst.max(r.abs() / (znorm * an.sqrt()));
        }
    }
    let mut obj = 0.0;
    let mut lmin = f64::INFINITY;
    for (b, zb) in p.blocks().iter().zip(z) {
        obj += b.constant.dot(zb) - b.shift() * zb.trace();
        if b.dim > 0 {
            lmin = lmin.min(sym_eigvals_matrix(zb).map_or(f64::NEG_INFINITY, |e| e[0] / znorm));
        }
    }
    CertificateCheck {
        relative_residual: worst,
        objective: obj / znorm,
        min_eigenvalue: lmin,
    }
}

/// Solves the max-margin problem and classifies it; deterministic for
/// identical inputs.
pub fn solve_feasibility(p: &LmiProblem, opts: &SolveOptions) -> SdpSolution {
    let start = std::time::Instant::now();
    let out = solver::run(p, opts);
    let solve_time = start.elapsed().as_secs_f64();

    let mut candidates = vec![out.y_final.clone()];
    if let Some(best) = &out.y_best {
        candidates.push(best.clone());
    }
    let np = p.num_scalars();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for y in &candidates {
        let x = &y[..np];
        let (margin, _) = evaluate_margin(p, x);
        if best.as_ref().is_none_or(|(m, _)| margin > *m) {
            best = Some((margin, x.to_vec()));
        }
    }
    let (margin, x) = best.expect("at least one candidate");
    let assignments = p.assignments(&x);
    let mut sol = SdpSolution {
        status: SdpStatus::Indeterminate,
        assignments,
        x,
        margin,
        solver_t: out.y_final[np],
        iterations: out.iterations,
        solve_time,
        certificate: None,
        diagnostic: out.diagnostic,
    };
    if margin >= opts.tol {
        sol.status = SdpStatus::Feasible;
        return sol;
    }
    if let Some(z) = out.x_blocks {
        let chk = check_certificate(p, &z);
        if chk.is_valid() {
            let tr: f64 = z.iter().map(Mat::trace).sum();
            sol.certificate = Some(z.iter().map(|m| m.scale(1.0 / tr)).collect());
            sol.status = SdpStatus::Infeasible;
        } else {
            sol.diagnostic = format!(
                "{}; certificate rejected (residual {:.2e}, objective {:.2e})",
                sol.diagnostic, chk.relative_residual, chk.objective
            );
        }
    }
    sol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::{Block, LmiBuilder, SparseSym, Variable, VarKind};

    #[test]
    fn single_scalar_block_feasible() {
        let mut b = LmiBuilder::new();
        let x = b.full("x", 1, 1);
        b.block("pos", 1, true, None, move |v| v[x].clone());
        let p = b.build().unwrap();
        let s = solve_feasibility(&p, &SolveOptions::default());
        assert_eq!(s.status, SdpStatus::Feasible);
        // optimum is x = R = 1
        assert!((s.margin - (1.0 - 1e-7)).abs() < 1e-6, "{}", s.margin);
        let wide = solve_feasibility(&p, &SolveOptions { box_radius: 3.0, ..Default::default() });
        assert!(wide.margin > s.margin + 1.0);
    }

    #[test]
    fn constant_negative_block_has_identity_certificate() {
        let blk = Block {
            name: "neg".into(),
            dim: 2,
            constant: SparseSym { dim: 2, entries: vec![(0, 0, -1.0), (1, 1, -1.0)] },
            coeffs: vec![],
            strict: true,
            eps: 1e-7,
        };
        let p = LmiProblem::from_parts(vec![], vec![blk]).unwrap();
        let s = solve_feasibility(&p, &SolveOptions::default());
        assert_eq!(s.status, SdpStatus::Infeasible);
        let z = &s.certificate.unwrap()[0];
        assert!((z - &Mat::identity(2).scale(0.5)).max_abs() < 1e-6);
    }

    #[test]
    fn homogeneous_infeasible_pair() {
        // x ≻ 0 and −x ≻ 0
        let var = Variable { name: "x".into(), kind: VarKind::Full(1, 1), offset: 0 };
        let mk = |name: &str, s: f64| Block {
            name: name.into(),
            dim: 1,
            constant: SparseSym::zeros(1),
            coeffs: vec![SparseSym { dim: 1, entries: vec![(0, 0, s)] }],
            strict: true,
            eps: 1e-7,
        };
        let p = LmiProblem::from_parts(vec![var], vec![mk("a", 1.0), mk("b", -1.0)]).unwrap();
        let s = solve_feasibility(&p, &SolveOptions::default());
        assert_eq!(s.status, SdpStatus::Infeasible, "{}", s.diagnostic);
    }

    #[test]
    fn deterministic() {
        let mut b = LmiBuilder::new();
        let x = b.symmetric("X", 2);
        b.block("a", 2, true, None, move |v| &v[x] - &Mat::identity(2).scale(0.3));
        let p = b.build().unwrap();
        let s1 = solve_feasibility(&p, &SolveOptions::default());
        let s2 = solve_feasibility(&p, &SolveOptions::default());
        assert_eq!(s1.margin.to_bits(), s2.margin.to_bits());
        assert_eq!(s1.x, s2.x);
    }
}
