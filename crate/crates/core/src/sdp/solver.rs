//! Infeasible-start primal-dual path following with Nesterov–Todd scaling and
//! Mehrotra predictor-corrector steps.
//!
//! Standard form, with `y = (x, t)`:
//!
//! ```text
//! primal:  min ⟨C, X⟩  s.t.  ⟨A_i, X⟩ = b_i,  X ⪰ 0
//! dual:    max bᵀy     s.t.  C − Σ y_i A_i = Z ⪰ 0
//! ```
//!
//! Per LMI block `C = C_b − ε_b I`, `A_i = −A_{b,i}` for the problem scalars
//! and `A_t = I`; `b = e_t`. The box `|x_i| ≤ R` is a nonnegative-orthant block
//! of size `2p`.

use crate::lmi::{LmiProblem, SparseSym};
use crate::matlib::{cholesky, lower_inverse, sym_eig_matrix, sym_eigvals_matrix};
use crate::Mat;

use super::SolveOptions;

/// Fraction-to-boundary `0.9 + 0.09·min(α_p, α_d)`.
const STEP_BASE: f64 = 0.9;
const STEP_SLOPE: f64 = 0.09;

pub(super) struct RunOutput {
    pub y_final: Vec<f64>,
    /// Last iterate with `t ≥ tol`, if any.
    pub y_best: Option<Vec<f64>>,
    /// Primal multipliers of the LMI blocks at exit.
    pub x_blocks: Option<Vec<Mat>>,
    pub iterations: usize,
    pub diagnostic: String,
}

struct SBlock {
    dim: usize,
    c: Mat,
    /// Coefficient of each `y_i` (length `q`).
    a: Vec<SparseSym>,
}

struct Scaling {
    /// Cholesky factor of `X`.
    l: Mat,
    w: Mat,
    g: Mat,
    g_inv: Mat,
    d: Vec<f64>,
}

/// `G = L V D^{-1/2}` with `Lᵀ Z L = V D² Vᵀ`, so `Gᵀ Z G = G⁻¹ X G⁻ᵀ = D`.
fn nt_scaling(x: &Mat, z: &Mat) -> Option<Scaling> {
    let n = x.rows();
    if n == 0 {
        let e = Mat::zeros(0, 0);
        return Some(Scaling { l: e.clone(), w: e.clone(), g: e.clone(), g_inv: e, d: vec![] });
    }
    let l = cholesky(x)?;
    let lzl = &l.tr_mul(&(z * &l)).symmetrize();
    let e = sym_eig_matrix(lzl).ok()?;
    if e.min() <= 0.0 || !e.min().is_finite() {
        return None;
    }
    let d: Vec<f64> = e.values.iter().map(|v| v.sqrt()).collect();
    let mut v_scaled = e.vectors.clone();
    let mut v_inv = e.vectors.transpose();
    for j in 0..n {
        let s = d[j].sqrt();
        for i in 0..n {
            v_scaled[(i, j)] /= s;
            v_inv[(j, i)] *= s;
        }
    }
    let g = &l * &v_scaled;
    let g_inv = &v_inv * &lower_inverse(&l);
    let w = (&g * &g.transpose()).symmetrize();
    Some(Scaling { l, w, g, g_inv, d })
}

/// Largest `α ≤ cap` keeping `s + α ds ⪰ 0`, given the Cholesky factor of `s`.
fn max_step_psd(l_inv: &Mat, ds: &Mat) -> f64 {
    let m = (&(l_inv * ds) * &l_inv.transpose()).symmetrize();
    match sym_eigvals_matrix(&m) {
        Ok(e) if e[0] < 0.0 => -1.0 / e[0],
        Ok(_) => f64::INFINITY,
        Err(_) => 0.0,
    }
}

fn max_step_lp(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

/// `W S W` for sparse symmetric `S`, upper triangle only.
fn congruence_upper(w: &Mat, s: &SparseSym, out: &mut Mat) {
    let d = w.rows();
    let wd = w.as_slice();
    let od = out.as_mut_slice();
    for c in 0..d {
        od[c * d..c * d + c + 1].iter_mut().for_each(|v| *v = 0.0);
    }
    for &(k, l, v) in &s.entries {
        let wk = &wd[k * d..(k + 1) * d];
        let wl = &wd[l * d..(l + 1) * d];
        for c in 0..d {
            let col = &mut od[c * d..c * d + c + 1];
            if k == l {
                let f = v * wk[c];
                for (o, &a) in col.iter_mut().zip(wk) {
                    *o += a * f;
                }
            } else {
                let fl = v * wl[c];
                let fk = v * wk[c];
                for ((o, &a), &b) in col.iter_mut().zip(wk).zip(wl) {
                    *o += a * fl + b * fk;
                }
            }
        }
    }
}

fn dense_dot(a: &Mat, b: &Mat) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Solves `H v = r` given the Cholesky factor of `H`.
fn chol_solve(l: &Mat, r: &[f64]) -> Vec<f64> {
    let mut v = r.to_vec();
    crate::matlib::forward_subst(l, &mut v);
    crate::matlib::backward_subst_transpose(l, &mut v);
    v
}

struct State {
    y: Vec<f64>,
    xs: Vec<Mat>,
    zs: Vec<Mat>,
    xl: Vec<f64>,
    zl: Vec<f64>,
}

struct Problem {
    p: usize,
    q: usize,
    blocks: Vec<SBlock>,
    radius: f64,
}

struct Direction {
    dy: Vec<f64>,
    dxs: Vec<Mat>,
    dzs: Vec<Mat>,
    dxl: Vec<f64>,
    dzl: Vec<f64>,
}

impl Problem {
    fn from_lmi(lmi: &LmiProblem, radius: f64) -> Self {
        let p = lmi.num_scalars();
        let q = p + 1;
        let blocks = lmi
            .blocks()
            .iter()
            .map(|b| {
                let mut c = b.constant.to_dense();
                for i in 0..b.dim {
                    c[(i, i)] -= b.shift();
                }
                let mut a: Vec<SparseSym> = b
                    .coeffs
                    .iter()
                    .map(|s| SparseSym {
                        dim: s.dim,
                        entries: s.entries.iter().map(|&(i, j, v)| (i, j, -v)).collect(),
                    })
                    .collect();
                a.push(SparseSym::identity(b.dim));
                SBlock { dim: b.dim, c, a }
            })
            .collect();
        Self { p, q, blocks, radius }
    }

    /// `A(X)` over all cones.
    fn apply_a(&self, xs: &[Mat], xl: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.q];
        for (b, x) in self.blocks.iter().zip(xs) {
            for (o, a) in out.iter_mut().zip(&b.a) {
                if !a.is_empty() {
                    *o += a.dot(x);
                }
            }
        }
        for i in 0..self.p {
            out[i] += xl[i] - xl[self.p + i];
        }
        out
    }

    /// `Σ y_i A_i` per LMI block, and the LP part.
    fn apply_at(&self, y: &[f64]) -> (Vec<Mat>, Vec<f64>) {
        let mats = self
            .blocks
            .iter()
            .map(|b| {
                let mut m = Mat::zeros(b.dim, b.dim);
                for (a, yi) in b.a.iter().zip(y) {
                    if *yi != 0.0 && !a.is_empty() {
                        a.add_to(&mut m, *yi);
                    }
                }
                m
            })
            .collect();
        let mut lp = vec![0.0; 2 * self.p];
        for i in 0..self.p {
            lp[i] = y[i];
            lp[self.p + i] = -y[i];
        }
        (mats, lp)
    }

    fn initial(&self) -> State {
        let mut lmin = 0.0f64;
        for b in &self.blocks {
            if let Ok(e) = sym_eigvals_matrix(&b.c) {
                lmin = lmin.min(e.first().copied().unwrap_or(0.0));
            }
        }
        let t0 = -(lmin.abs() + 1.0);
        let mut y = vec![0.0; self.q];
        y[self.p] = t0;
        let zs = self
            .blocks
            .iter()
            .map(|b| {
                let mut z = b.c.clone();
                for i in 0..b.dim {
                    z[(i, i)] -= t0;
                }
                z
            })
            .collect();
        State {
            y,
            xs: self.blocks.iter().map(|b| Mat::identity(b.dim)).collect(),
            zs,
            xl: vec![1.0; 2 * self.p],
            zl: vec![self.radius; 2 * self.p],
        }
    }

    fn cone_size(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum::<usize>() + 2 * self.p
    }

    /// Schur complement `H_ij = ⟨A_i, W A_j W⟩ + LP diagonal`.
    fn schur(&self, sc: &[Scaling], xl: &[f64], zl: &[f64]) -> Mat {
        let q = self.q;
        let mut h = Mat::zeros(q, q);
        for (b, s) in self.blocks.iter().zip(sc) {
            let mut m = Mat::zeros(b.dim, b.dim);
            let nonempty: Vec<usize> = (0..q).filter(|&i| !b.a[i].is_empty()).collect();
            for (jj, &j) in nonempty.iter().enumerate() {
                congruence_upper(&s.w, &b.a[j], &mut m);
                for &i in &nonempty[..=jj] {
                    h[(i, j)] += b.a[i].dot(&m);
                }
            }
        }
        for i in 0..self.p {
            h[(i, i)] += xl[i] / zl[i] + xl[self.p + i] / zl[self.p + i];
        }
        for j in 0..q {
            for i in 0..j {
                h[(j, i)] = h[(i, j)];
            }
        }
        h
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        hl: &Mat,
        sc: &[Scaling],
        st: &State,
        rp: &[f64],
        rds: &[Mat],
        rdl: &[f64],
        rcs: Vec<Mat>,
        rcl: Vec<f64>,
    ) -> Direction {
        let wrdw: Vec<Mat> = sc.iter().zip(rds).map(|(s, rd)| &(&s.w * rd) * &s.w).collect();
        let wl: Vec<f64> = st.xl.iter().zip(&st.zl).map(|(x, z)| x / z).collect();
        let wrdl: Vec<f64> = wl.iter().zip(rdl).map(|(w, r)| w * r).collect();
        let a_rc = self.apply_a(&rcs, &rcl);
        let a_wrdw = self.apply_a(&wrdw, &wrdl);
        let rhs: Vec<f64> = (0..self.q).map(|i| rp[i] - a_rc[i] + a_wrdw[i]).collect();
        let dy = chol_solve(hl, &rhs);
        let (aty, atyl) = self.apply_at(&dy);
        let dzs: Vec<Mat> = rds.iter().zip(&aty).map(|(rd, a)| rd - a).collect();
        let dzl: Vec<f64> = rdl.iter().zip(&atyl).map(|(r, a)| r - a).collect();
        let dxs: Vec<Mat> = rcs
            .iter()
            .zip(sc)
            .zip(&dzs)
            .map(|((rc, s), dz)| (rc - &(&(&s.w * dz) * &s.w)).symmetrize())
            .collect();
        let dxl: Vec<f64> = rcl.iter().zip(&wl).zip(&dzl).map(|((r, w), d)| r - w * d).collect();
        Direction { dy, dxs, dzs, dxl, dzl }
    }
}

fn step_lengths(st: &State, dir: &Direction, lx: &[Mat], lz: &[Mat]) -> (f64, f64) {
    let mut ap = max_step_lp(&st.xl, &dir.dxl);
    let mut ad = max_step_lp(&st.zl, &dir.dzl);
    for (li, dx) in lx.iter().zip(&dir.dxs) {
        ap = ap.min(max_step_psd(li, dx));
    }
    for (li, dz) in lz.iter().zip(&dir.dzs) {
        ad = ad.min(max_step_psd(li, dz));
    }
    (ap, ad)
}

pub(super) fn run(lmi: &LmiProblem, opts: &SolveOptions) -> RunOutput {
    let pr = Problem::from_lmi(lmi, opts.box_radius);
    let (p, q) = (pr.p, pr.q);
    let ncone = pr.cone_size() as f64;
    let mut st = pr.initial();
    let mut y_best = None;
    let mut diagnostic = String::from("iteration cap reached");
    let mut iterations = 0;
    let cnorm = 1.0 + pr.blocks.iter().fold(pr.radius, |m, b| m.max(b.c.max_abs()));

    for it in 0..opts.max_iter {
        iterations = it;
        // residuals
        let ax = pr.apply_a(&st.xs, &st.xl);
        let rp: Vec<f64> = (0..q).map(|i| if i == p { 1.0 } else { 0.0 } - ax[i]).collect();
        let (aty, atyl) = pr.apply_at(&st.y);
        let rds: Vec<Mat> = pr
            .blocks
            .iter()
            .zip(&st.zs)
            .zip(&aty)
            .map(|((b, z), a)| &(&b.c - z) - a)
            .collect();
        let rdl: Vec<f64> = (0..2 * p).map(|k| pr.radius - st.zl[k] - atyl[k]).collect();
        let pobj: f64 = pr.blocks.iter().zip(&st.xs).map(|(b, x)| dense_dot(&b.c, x)).sum::<f64>()
            + pr.radius * st.xl.iter().sum::<f64>();
        let dobj = st.y[p];
        let xz: f64 = st.xs.iter().zip(&st.zs).map(|(x, z)| dense_dot(x, z)).sum::<f64>()
            + st.xl.iter().zip(&st.zl).map(|(x, z)| x * z).sum::<f64>();
        let mu = xz / ncone;
        let pinf = rp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dinf = rds.iter().fold(rdl.iter().fold(0.0f64, |m, v| m.max(v.abs())), |m, r| m.max(r.max_abs())) / cnorm;
        let gap = (pobj - dobj).abs().max(xz) / (1.0 + pobj.abs() + dobj.abs());
        log::trace!("it {it}: t={dobj:.9e} pobj={pobj:.9e} mu={mu:.2e} pinf={pinf:.2e} dinf={dinf:.2e}");

        if dobj >= opts.tol && dinf <= opts.gap_tol {
            y_best = Some(st.y.clone());
        }
        if gap <= opts.gap_tol && pinf <= opts.gap_tol && dinf <= opts.gap_tol {
            diagnostic = format!("converged in {it} iterations");
            break;
        }

        // scaling and Schur complement
        let mut sc = Vec::with_capacity(pr.blocks.len());
        let mut lx = Vec::with_capacity(pr.blocks.len());
        let mut lz = Vec::with_capacity(pr.blocks.len());
        let mut ok = true;
        for (x, z) in st.xs.iter().zip(&st.zs) {
            match (nt_scaling(x, z), cholesky(z)) {
                (Some(s), Some(l2)) => {
                    lx.push(lower_inverse(&s.l));
                    lz.push(lower_inverse(&l2));
                    sc.push(s);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            diagnostic = format!("iterate lost definiteness at iteration {it} (relative gap {gap:.1e})");
            break;
        }
        let mut h = pr.schur(&sc, &st.xl, &st.zl);
        let hmax = (0..q).fold(0.0f64, |m, i| m.max(h[(i, i)]));
        let mut hl = cholesky(&h);
        let mut reg = 1e-14 * hmax.max(1e-300);
        while hl.is_none() && reg < 1e-6 * hmax {
            for i in 0..q {
                h[(i, i)] += reg;
            }
            hl = cholesky(&h);
            reg *= 100.0;
        }
        let Some(hl) = hl else {
            diagnostic = format!("Newton system singular at iteration {it} (relative gap {gap:.1e})");
            break;
        };

        // predictor
        let rcs: Vec<Mat> = st.xs.iter().map(|x| x.scale(-1.0)).collect();
        let rcl: Vec<f64> = st.xl.iter().map(|x| -x).collect();
        let aff = pr.direction(&hl, &sc, &st, &rp, &rds, &rdl, rcs, rcl);
        let (ap, ad) = step_lengths(&st, &aff, &lx, &lz);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut xz_aff = 0.0;
        for k in 0..st.xs.len() {
            let xa = &st.xs[k] + &aff.dxs[k].scale(ap);
            let za = &st.zs[k] + &aff.dzs[k].scale(ad);
            xz_aff += dense_dot(&xa, &za);
        }
        for k in 0..2 * p {
            xz_aff += (st.xl[k] + ap * aff.dxl[k]) * (st.zl[k] + ad * aff.dzl[k]);
        }
        let amin = ap.min(ad);
        // SDPT3 centering exponent: damp when the affine step was short
        let expon = if mu > 1e-6 && amin < 1.0 / 3f64.sqrt() { 1.0 } else { (3.0 * amin * amin).max(1.0) };
        let sigma = (xz_aff / xz).clamp(0.0, 1.0).powf(expon);

        // corrector in the scaled space
        let target = sigma * mu;
        let mut rcs = Vec::with_capacity(sc.len());
        for (k, s) in sc.iter().enumerate() {
            let dxt = &(&s.g_inv * &aff.dxs[k]) * &s.g_inv.transpose();
            let dzt = &(&s.g.transpose() * &aff.dzs[k]) * &s.g;
            let prod = (&dxt * &dzt).symmetrize();
            let n = s.d.len();
            let u = Mat::from_fn(n, n, |i, j| {
                let mut r = -prod[(i, j)];
                if i == j {
                    r += target - s.d[i] * s.d[i];
                }
                2.0 * r / (s.d[i] + s.d[j])
            });
            rcs.push((&(&s.g * &u) * &s.g.transpose()).symmetrize());
        }
        let rcl: Vec<f64> = (0..2 * p)
            .map(|k| (target - st.xl[k] * st.zl[k] - aff.dxl[k] * aff.dzl[k]) / st.zl[k])
            .collect();
        let dir = pr.direction(&hl, &sc, &st, &rp, &rds, &rdl, rcs, rcl);
        let (ap, ad) = step_lengths(&st, &dir, &lx, &lz);
        let frac = STEP_BASE + STEP_SLOPE * ap.min(ad).min(1.0);
        let ap = (frac * ap).min(1.0);
        let ad = (frac * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            diagnostic = format!("step length collapsed at iteration {it}");
            break;
        }

        for k in 0..st.xs.len() {
            st.xs[k] = (&st.xs[k] + &dir.dxs[k].scale(ap)).symmetrize();
            st.zs[k] = (&st.zs[k] + &dir.dzs[k].scale(ad)).symmetrize();
        }
        for k in 0..2 * p {
            st.xl[k] += ap * dir.dxl[k];
            st.zl[k] += ad * dir.dzl[k];
        }
        for (yi, d) in st.y.iter_mut().zip(&dir.dy) {
            *yi += ad * d;
        }
        iterations = it + 1;
    }

    RunOutput {
        y_final: st.y,
        y_best,
        x_blocks: Some(st.xs),
        iterations,
        diagnostic,
    }
}
