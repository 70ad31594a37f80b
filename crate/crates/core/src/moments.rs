//! Second-moment objects of the parametric noise.
//!
//! Two deterministic objects are derived from an [`UncertaintyModel`]:
//!
//! * `C_p^A = E[Ā ⊗ Ā]` (n²×n²), which drives the lifted covariance recursion;
//! * `Σ = E[g gᵀ]` with `g = [vec Ã; vec B̃]`, together with its truncated
//!   eigen-factorization `Σ ≈ Gᵀ G`, which feeds the baseline LMI.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::matlib::{kron, sym_eig, unvec, vec, MatError, Matrix};
use crate::rng::{self, Purpose};
use crate::{Mat, SymMat};

/// Default relative eigenvalue cutoff for [`factorize_second_moment`].
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

const MC_CHUNK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("operation needs {needed}, model is {found}")]
    WrongMode { needed: &'static str, found: &'static str },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid variance table: {0}")]
    InvalidVariance(String),
    #[error("second-moment matrix is indefinite (lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e})")]
    Indefinite { lambda_min: f64, lambda_max: f64 },
    #[error("explicit C_p^A cannot be sampled: rearranged covariance not PSD (lambda_min = {0:e})")]
    NotSamplable(f64),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Per-entry distribution family of a sampled model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryDistribution {
    Gaussian,
    /// Symmetric uniform with the requested variance (`half-width = √(3v)`).
    Uniform,
}

/// Sampling description of the parametric noise.
#[derive(Clone, Debug, PartialEq)]
pub enum Sampler {
    /// Mutually independent zero-mean entries with the given variance tables.
    Entries {
        dist: EntryDistribution,
        var_a: Mat,
        var_b: Option<Mat>,
    },
    /// Finite distribution over matrix atoms. Atoms are used as given; no
    /// centering is applied, so a non-zero mean shows up in the moments.
    Atoms {
        weights: Vec<f64>,
        atoms_a: Vec<Mat>,
        atoms_b: Option<Vec<Mat>>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum UncertaintyMode {
    /// Independent zero-mean entries of `Ā` with variances `v[i,j]`.
    IndependentEntries { v: Mat },
    /// User-supplied `C_p^A`; no PSD requirement (it is a rearranged covariance).
    ExplicitCpa { cpa: Mat },
    SampledEntries(Sampler),
}

impl UncertaintyMode {
    fn label(&self) -> &'static str {
        match self {
            Self::IndependentEntries { .. } => "IndependentEntries",
            Self::ExplicitCpa { .. } => "ExplicitCpa",
            Self::SampledEntries(_) => "SampledEntries",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyModel {
    n: usize,
    m: usize,
    mode: UncertaintyMode,
}

fn check_variances(v: &Mat, rows: usize, cols: usize, what: &str) -> Result<(), MomentError> {
    if v.shape() != (rows, cols) {
        return Err(MomentError::Dimension(format!(
            "{what} must be {rows}x{cols}, got {}x{}",
            v.rows(),
            v.cols()
        )));
    }
    if let Some(x) = v.as_slice().iter().find(|x| **x < 0.0) {
        return Err(MomentError::InvalidVariance(format!("{what} has negative entry {x}")));
    }
    Ok(())
}

impl UncertaintyModel {
    /// Every entry of `Ā` independent with common variance `sigma2`.
    pub fn iid(n: usize, m: usize, sigma2: f64) -> Result<Self, MomentError> {
        Self::independent(n, m, Matrix::from_fn(n, n, |_, _| sigma2))
    }

    pub fn independent(n: usize, m: usize, v: Mat) -> Result<Self, MomentError> {
        check_variances(&v, n, n, "variance table V")?;
        Ok(Self { n, m, mode: UncertaintyMode::IndependentEntries { v } })
    }

    pub fn explicit_cpa(n: usize, m: usize, cpa: Mat) -> Result<Self, MomentError> {
        if cpa.shape() != (n * n, n * n) {
            return Err(MomentError::Dimension(format!(
                "C_p^A must be {0}x{0}, got {1}x{2}",
                n * n,
                cpa.rows(),
                cpa.cols()
            )));
        }
        Ok(Self { n, m, mode: UncertaintyMode::ExplicitCpa { cpa } })
    }

    pub fn sampled(n: usize, m: usize, sampler: Sampler) -> Result<Self, MomentError> {
        match &sampler {
            Sampler::Entries { var_a, var_b, .. } => {
                check_variances(var_a, n, n, "var_a")?;
                if let Some(vb) = var_b {
                    check_variances(vb, n, m, "var_b")?;
                }
            }
            Sampler::Atoms { weights, atoms_a, atoms_b } => {
                if weights.is_empty() || weights.len() != atoms_a.len() {
                    return Err(MomentError::Dimension("one weight per atom required".into()));
                }
                if weights.iter().any(|w| *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(MomentError::InvalidVariance("atom weights must be a probability vector".into()));
                }
                if atoms_a.iter().any(|a| a.shape() != (n, n)) {
                    return Err(MomentError::Dimension(format!("A atoms must be {n}x{n}")));
                }
                if let Some(bs) = atoms_b {
                    if bs.len() != atoms_a.len() || bs.iter().any(|b| b.shape() != (n, m)) {
                        return Err(MomentError::Dimension(format!("B atoms must be {n}x{m}, one per A atom")));
                    }
                }
            }
        }
        Ok(Self { n, m, mode: UncertaintyMode::SampledEntries(sampler) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn mode(&self) -> &UncertaintyMode {
        &self.mode
    }

    /// Whether the input matrix carries noise.
    pub fn has_stochastic_b(&self) -> bool {
        match &self.mode {
            UncertaintyMode::SampledEntries(Sampler::Entries { var_b, .. }) => {
                var_b.as_ref().is_some_and(|v| v.as_slice().iter().any(|x| *x > 0.0))
            }
            UncertaintyMode::SampledEntries(Sampler::Atoms { atoms_b, .. }) => {
                atoms_b.as_ref().is_some_and(|bs| bs.iter().any(|b| b.max_abs() > 0.0))
            }
            _ => false,
        }
    }

    /// Exact `C_p^A` for any mode.
    pub fn cpa(&self) -> Mat {
        match &self.mode {
            UncertaintyMode::IndependentEntries { v } => cpa_from_variances(v),
            UncertaintyMode::ExplicitCpa { cpa } => cpa.clone(),
            UncertaintyMode::SampledEntries(Sampler::Entries { var_a, .. }) => cpa_from_variances(var_a),
            UncertaintyMode::SampledEntries(Sampler::Atoms { weights, atoms_a, .. }) => {
                let nn = self.n * self.n;
                let mut acc = Mat::zeros(nn, nn);
                for (w, a) in weights.iter().zip(atoms_a) {
                    acc += &kron(a, a).scale(*w);
                }
                acc
            }
        }
    }

    /// `E[vec Ā vec Āᵀ]`, the covariance of the vectorized state noise.
    pub fn sigma_aa(&self) -> Mat {
        cpa_to_sigma_aa(&self.cpa(), self.n)
    }

    /// Joint second moment of `[vec Ā; vec B̃]` (the noise part only).
    fn noise_second_moment(&self) -> Mat {
        let (n, m) = (self.n, self.m);
        let d = n * (n + m);
        let mut out = Mat::zeros(d, d);
        match &self.mode {
            UncertaintyMode::SampledEntries(Sampler::Entries { var_a, var_b, .. }) => {
                for (k, v) in vec(var_a).into_iter().enumerate() {
                    out[(k, k)] = v;
                }
                if let Some(vb) = var_b {
                    for (k, v) in vec(vb).into_iter().enumerate() {
                        out[(n * n + k, n * n + k)] = v;
                    }
                }
            }
            UncertaintyMode::SampledEntries(Sampler::Atoms { weights, atoms_a, atoms_b }) => {
                for (idx, (w, a)) in weights.iter().zip(atoms_a).enumerate() {
                    let mut g = vec(a);
                    match atoms_b {
                        Some(bs) => g.extend(vec(&bs[idx])),
                        None => g.extend(std::iter::repeat_n(0.0, n * m)),
                    }
                    for j in 0..d {
                        for i in 0..d {
                            out[(i, j)] += w * g[i] * g[j];
                        }
                    }
                }
            }
            _ => out.set_block(0, 0, &self.sigma_aa()),
        }
        out
    }

    fn sampler(&self) -> Result<ParametricSampler, MomentError> {
        let n = self.n;
        Ok(match &self.mode {
            UncertaintyMode::IndependentEntries { v } => ParametricSampler::Entries {
                dist: EntryDistribution::Gaussian,
                sd_a: v.map(f64::sqrt),
                sd_b: None,
            },
            UncertaintyMode::SampledEntries(Sampler::Entries { dist, var_a, var_b }) => ParametricSampler::Entries {
                dist: *dist,
                sd_a: var_a.map(f64::sqrt),
                sd_b: var_b.as_ref().map(|v| v.map(f64::sqrt)),
            },
            UncertaintyMode::SampledEntries(Sampler::Atoms { weights, atoms_a, atoms_b }) => {
                let mut cdf = Vec::with_capacity(weights.len());
                let mut c = 0.0;
                for w in weights {
                    c += w;
                    cdf.push(c);
                }
                ParametricSampler::Atoms {
                    cdf,
                    atoms_a: atoms_a.clone(),
                    atoms_b: atoms_b.clone(),
                }
            }
            UncertaintyMode::ExplicitCpa { cpa } => {
                let s = SymMat::from_symmetrized(&cpa_to_sigma_aa(cpa, n))?;
                let e = sym_eig(&s)?;
                let scale = e.max().abs().max(f64::MIN_POSITIVE);
                if e.min() < -1e-10 * scale {
                    return Err(MomentError::NotSamplable(e.min()));
                }
                ParametricSampler::Correlated {
                    factor: e.reconstruct_with(|l| l.max(0.0).sqrt()),
                }
            }
        })
    }

    /// Draws one realization of the noise matrices.
    pub fn noise_sampler(&self) -> Result<NoiseSampler, MomentError> {
        Ok(NoiseSampler {
            n: self.n,
            m: self.m,
            inner: self.sampler()?,
        })
    }
}

/// Drawing handle for the parametric noise of a model.
#[derive(Clone, Debug)]
pub struct NoiseSampler {
    n: usize,
    m: usize,
    inner: ParametricSampler,
}

#[derive(Clone, Debug)]
enum ParametricSampler {
    Entries {
        dist: EntryDistribution,
        sd_a: Mat,
        sd_b: Option<Mat>,
    },
    Atoms {
        cdf: Vec<f64>,
        atoms_a: Vec<Mat>,
        atoms_b: Option<Vec<Mat>>,
    },
    Correlated {
        factor: Mat,
    },
}

fn draw_entry<R: Rng>(dist: EntryDistribution, sd: f64, rng: &mut R) -> f64 {
    match dist {
        EntryDistribution::Gaussian => {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        }
        EntryDistribution::Uniform => sd * 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
    }
}

impl EntryDistribution {
    /// `E[x⁴] / E[x²]²` of a zero-mean draw.
    pub fn kurtosis(self) -> f64 {
        match self {
            Self::Gaussian => 3.0,
            Self::Uniform => 1.8,
        }
    }
}

impl NoiseSampler {
    /// `E[Π_t ā_{p_t}]` for indices into `vec Ā`, up to fourth order.
    pub(crate) fn joint_moment(&self, idx: &[usize]) -> f64 {
        match &self.inner {
            ParametricSampler::Entries { dist, sd_a, .. } => {
                let mut sorted = idx.to_vec();
                sorted.sort_unstable();
                let sd = sd_a.as_slice();
                let mut out = 1.0;
                for run in sorted.chunk_by(|a, b| a == b) {
                    let s2 = sd[run[0]] * sd[run[0]];
                    out *= match run.len() {
                        2 => s2,
                        4 => dist.kurtosis() * s2 * s2,
                        _ => 0.0,
                    };
                }
                out
            }
            ParametricSampler::Atoms { cdf, atoms_a, .. } => {
                let mut prev = 0.0;
                let mut out = 0.0;
                for (c, a) in cdf.iter().zip(atoms_a) {
                    let a = a.as_slice();
                    out += (c - prev) * idx.iter().map(|&p| a[p]).product::<f64>();
                    prev = *c;
                }
                out
            }
            ParametricSampler::Correlated { factor } => {
                let cov = |p: usize, q: usize| (0..factor.cols()).map(|t| factor[(p, t)] * factor[(q, t)]).sum::<f64>();
                match idx {
                    [] => 1.0,
                    [p, q] => cov(*p, *q),
                    [a, b, c, d] => cov(*a, *b) * cov(*c, *d) + cov(*a, *c) * cov(*b, *d) + cov(*a, *d) * cov(*b, *c),
                    _ => 0.0,
                }
            }
        }
    }

    /// Returns `(Ā, B̃)`; `B̃` is zero when the input matrix is deterministic.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> (Mat, Mat) {
        let (n, m) = (self.n, self.m);
        match &self.inner {
            ParametricSampler::Entries { dist, sd_a, sd_b } => {
                let mut one = |s: f64| if s > 0.0 { draw_entry(*dist, s, rng) } else { 0.0 };
                let a = Mat::from_fn(n, n, |i, j| one(sd_a[(i, j)]));
                let b = match sd_b {
                    Some(sb) => Mat::from_fn(n, m, |i, j| one(sb[(i, j)])),
                    None => Mat::zeros(n, m),
                };
                (a, b)
            }
            ParametricSampler::Atoms { cdf, atoms_a, atoms_b } => {
                let u: f64 = rng.random();
                let k = cdf.iter().position(|c| u < *c).unwrap_or(cdf.len() - 1);
                let b = atoms_b.as_ref().map_or_else(|| Mat::zeros(n, m), |bs| bs[k].clone());
                (atoms_a[k].clone(), b)
            }
            ParametricSampler::Correlated { factor } => {
                let z: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
                let a = unvec(&factor.mul_vec(&z), n).expect("factor is n²×n²");
                (a, Mat::zeros(n, m))
            }
        }
    }
}

/// `C_p^A` of independent zero-mean entries with variance table `v`: the only
/// non-zeros are `v[p,q]` at row `p·n+p`, column `q·n+q` (0-based).
pub fn cpa_from_variances(v: &Mat) -> Mat {
    let n = v.rows();
    let mut c = Mat::zeros(n * n, n * n);
    for q in 0..n {
        for p in 0..n {
            c[(p * n + p, q * n + q)] = v[(p, q)];
        }
    }
    c
}

/// Analytic `C_p^A`; only defined for independent entries.
pub fn cpa_analytic(model: &UncertaintyModel) -> Result<Mat, MomentError> {
    match &model.mode {
        UncertaintyMode::IndependentEntries { v } => Ok(cpa_from_variances(v)),
        other => Err(MomentError::WrongMode {
            needed: "IndependentEntries",
            found: other.label(),
        }),
    }
}

/// Sample mean of `Ā ⊗ Ā` over `samples` draws.
///
/// Draws are split into fixed chunks, each with its own stream, and reduced
/// in chunk order, so the result is bit-identical for any thread count.
pub fn cpa_monte_carlo(model: &UncertaintyModel, samples: usize, seed: u64) -> Result<Mat, MomentError> {
    let sampler = model.noise_sampler()?;
    let nn = model.n * model.n;
    let chunks = samples.max(1).div_ceil(MC_CHUNK);
    let partial: Vec<Mat> = rng::with_pool(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut r = rng::stream(seed, c as u64, Purpose::Parametric);
                let count = MC_CHUNK.min(samples - c * MC_CHUNK);
                let mut acc = Mat::zeros(nn, nn);
                for _ in 0..count {
                    let (a, _) = sampler.draw(&mut r);
                    acc += &kron(&a, &a);
                }
                acc
            })
            .collect()
    });
    let mut total = Mat::zeros(nn, nn);
    for p in &partial {
        total += p;
    }
    Ok(total.scale(1.0 / samples.max(1) as f64))
}

/// Rearranges `C_p^A` into the covariance of `vec Ā`:
/// `Σ_AA[j1·n+i1, j2·n+i2] = C_p^A[i1·n+i2, j1·n+j2]`.
pub fn cpa_to_sigma_aa(cpa: &Mat, n: usize) -> Mat {
    let mut s = Mat::zeros(n * n, n * n);
    for j2 in 0..n {
        for i2 in 0..n {
            for j1 in 0..n {
                for i1 in 0..n {
                    s[(j1 * n + i1, j2 * n + i2)] = cpa[(i1 * n + i2, j1 * n + j2)];
                }
            }
        }
    }
    s
}

/// `Σ = E[g gᵀ]` for `g = [vec(A + Ā); vec(B + B̃)]`.
pub fn second_moment_matrix(model: &UncertaintyModel, mean_a: &Mat, mean_b: &Mat) -> Result<SymMat, MomentError> {
    let (n, m) = (model.n, model.m);
    if mean_a.shape() != (n, n) || mean_b.shape() != (n, m) {
        return Err(MomentError::Dimension(format!(
            "model is n={n}, m={m}; got A {}x{}, B {}x{}",
            mean_a.rows(),
            mean_a.cols(),
            mean_b.rows(),
            mean_b.cols()
        )));
    }
    let mut v = vec(mean_a);
    v.extend(vec(mean_b));
    let mut s = model.noise_second_moment();
    // atoms are not centered, so their mean couples with the nominal part
    if let UncertaintyMode::SampledEntries(Sampler::Atoms { weights, atoms_a, atoms_b }) = &model.mode {
        let mut mu = vec![0.0; v.len()];
        for (k, w) in weights.iter().enumerate() {
            for (i, x) in vec(&atoms_a[k]).into_iter().enumerate() {
                mu[i] += w * x;
            }
            if let Some(bs) = atoms_b {
                for (i, x) in vec(&bs[k]).into_iter().enumerate() {
                    mu[n * n + i] += w * x;
                }
            }
        }
        for j in 0..v.len() {
            for i in 0..v.len() {
                s[(i, j)] += v[i] * mu[j] + mu[i] * v[j];
            }
        }
    }
    for j in 0..v.len() {
        for i in 0..v.len() {
            s[(i, j)] += v[i] * v[j];
        }
    }
    Ok(SymMat::from_symmetrized(&s)?)
}

/// Truncated factorization `Σ ≈ Gᵀ G` and its per-row reshaping into
/// `(A_i, B_i)` slices.
#[derive(Clone, Debug)]
pub struct SecondMomentFactorization {
    pub sigma: SymMat,
    /// `nbar × n(n+m)`.
    pub g: Mat,
    pub nbar: usize,
    pub n: usize,
    pub m: usize,
    pub slices_a: Vec<Mat>,
    pub slices_b: Vec<Mat>,
}

impl SecondMomentFactorization {
    /// Relative Frobenius error of `Gᵀ G` against `Σ`.
    pub fn reconstruction_error(&self) -> f64 {
        let gtg = self.g.tr_mul(&self.g);
        let scale = self.sigma.as_matrix().frobenius_norm().max(f64::MIN_POSITIVE);
        (&gtg - self.sigma.as_matrix()).frobenius_norm() / scale
    }
}

/// Keeps eigenpairs with `λ > tol·λ_max`; `g` rows are `√λ_i u_iᵀ` ordered by
/// decreasing eigenvalue. `n` is the state dimension (`Σ` has dimension
/// `n(n+m)`).
pub fn factorize_second_moment(sigma: &SymMat, n: usize, tol: f64) -> Result<SecondMomentFactorization, MomentError> {
    let d = sigma.dim();
    if n == 0 || !d.is_multiple_of(n) || d < n * n {
        return Err(MomentError::Dimension(format!("dimension {d} is not n(n+m) for n={n}")));
    }
    let m = d / n - n;
    let e = sym_eig(sigma)?;
    let lmax = e.max().max(0.0);
    if e.min() < -tol * lmax {
        return Err(MomentError::Indefinite {
            lambda_min: e.min(),
            lambda_max: e.max(),
        });
    }
    let kept: Vec<usize> = (0..d).rev().filter(|&k| e.values[k] > tol * lmax && lmax > 0.0).collect();
    let nbar = kept.len();
    let g = Mat::from_fn(nbar, d, |r, c| e.values[kept[r]].sqrt() * e.vectors[(c, kept[r])]);
    let mut slices_a = Vec::with_capacity(nbar);
    let mut slices_b = Vec::with_capacity(nbar);
    for r in 0..nbar {
        let row: Vec<f64> = (0..d).map(|c| g[(r, c)]).collect();
        slices_a.push(unvec(&row[..n * n], n)?);
        slices_b.push(if m > 0 { unvec(&row[n * n..], n)? } else { Mat::zeros(n, 0) });
    }
    Ok(SecondMomentFactorization {
        sigma: sigma.clone(),
        g,
        nbar,
        n,
        m,
        slices_a,
        slices_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn scalar_cpa_is_variance() {
        let m = UncertaintyModel::iid(1, 1, 0.3).unwrap();
        assert_eq!(cpa_analytic(&m).unwrap().as_slice(), &[0.3]);
    }

    #[test]
    fn iid_cpa_is_scaled_vec_identity_outer() {
        let m = UncertaintyModel::iid(2, 1, 0.05).unwrap();
        let c = cpa_analytic(&m).unwrap();
        let vi = vec(&Mat::identity(2));
        let expect = Mat::from_fn(4, 4, |i, j| 0.05 * vi[i] * vi[j]);
        assert_eq!(c, expect);
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert_eq!(c[(i, j)], 0.05);
        }
    }

    #[test]
    fn wrong_mode_rejected() {
        let m = UncertaintyModel::explicit_cpa(1, 1, mat(&[&[0.1]])).unwrap();
        assert!(matches!(cpa_analytic(&m), Err(MomentError::WrongMode { .. })));
        assert!(UncertaintyModel::iid(2, 1, -0.1).is_err());
    }

    #[test]
    fn atom_samplers() {
        let a0 = mat(&[&[0.3, -0.1], &[0.2, 0.5]]);
        let one = UncertaintyModel::sampled(
            2,
            1,
            Sampler::Atoms { weights: vec![1.0], atoms_a: vec![a0.clone()], atoms_b: None },
        )
        .unwrap();
        let est = cpa_monte_carlo(&one, 100, 1).unwrap();
        assert!((&est - &kron(&a0, &a0)).max_abs() < 1e-14);
        let zero = UncertaintyModel::sampled(
            2,
            1,
            Sampler::Atoms { weights: vec![1.0], atoms_a: vec![Mat::zeros(2, 2)], atoms_b: None },
        )
        .unwrap();
        assert_eq!(cpa_monte_carlo(&zero, 100, 1).unwrap(), Mat::zeros(4, 4));
    }

    #[test]
    fn sigma_aa_rearrangement_matches_outer_product() {
        // deterministic single atom: Σ_AA = vec(a) vec(a)ᵀ
        let a = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let s = cpa_to_sigma_aa(&kron(&a, &a), 2);
        let va = vec(&a);
        assert_eq!(s, Mat::from_fn(4, 4, |i, j| va[i] * va[j]));
    }

    #[test]
    fn scalar_second_moment() {
        let m = UncertaintyModel::iid(1, 1, 0.2).unwrap();
        let s = second_moment_matrix(&m, &mat(&[&[0.7]]), &mat(&[&[2.0]])).unwrap();
        let expect = [0.49 + 0.2, 1.4, 1.4, 4.0];
        for (x, y) in s.as_matrix().as_slice().iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn factorization_of_identity_and_rank_one() {
        let f = factorize_second_moment(&SymMat::identity(2), 1, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(f.nbar, 2);
        assert!(f.reconstruction_error() < 1e-15);

        let v = [3.0, 4.0];
        let s = SymMat::try_from_exact(Mat::from_fn(2, 2, |i, j| v[i] * v[j])).unwrap();
        let f = factorize_second_moment(&s, 1, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(f.nbar, 1);
        let sign = f.g[(0, 0)].signum();
        assert!((sign * f.g[(0, 0)] - 3.0).abs() < 1e-12 && (sign * f.g[(0, 1)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn indefinite_rejected() {
        let s = SymMat::try_from_exact(Mat::from_diag(&[1.0, -0.5])).unwrap();
        assert!(matches!(
            factorize_second_moment(&s, 1, DEFAULT_RANK_TOL),
            Err(MomentError::Indefinite { .. })
        ));
    }
}
