//! Monte Carlo simulation of the tube-decomposed closed loop.
//!
//! Each trial propagates, on the same noise draws,
//!
//! ```text
//! z⁺ = A z + B v                      (nominal part, deterministic)
//! e⁺ = (A + Ā + B K) e + Ā z + w      (error part)
//! x⁺ = (A + Ā) x + B (K e + v) + w    (true state, x₀ = z₀, e₀ = 0)
//! ```
//!
//! and the per-step sample moments of `e` and `x` are compared with the
//! analytic covariance recursion.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::covdyn::CovError;
use crate::matlib::{sym_eig, MatError};
use crate::moments::{EntryDistribution, MomentError, NoiseSampler};
use crate::rng::{self, Purpose};
use crate::system::SystemSpec;
use crate::{CovarianceDynamics, Mat, SymMat};

mod fourth;

use fourth::FourthMoments;

/// Trials per work unit. Chunk boundaries are fixed, so the reduction order
/// does not depend on the number of threads.
const TRIAL_CHUNK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("provided z sequence has {got} entries, horizon {horizon} needs {}", horizon + 1)]
    ShortSequence { got: usize, horizon: usize },
    #[error("simulation requires a deterministic input matrix")]
    StochasticInput,
    #[error(transparent)]
    Moments(#[from] MomentError),
    #[error(transparent)]
    Cov(#[from] CovError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// How the nominal trajectory `z_k` is generated.
#[derive(Clone, Debug, PartialEq)]
pub enum ZPolicy {
    /// `z ≡ 0`; isolates the covariance recursion.
    Zero,
    /// Explicit `z_0, …, z_horizon`.
    Provided(Vec<Vec<f64>>),
    /// `v_k = K̄ z_k` from `z_0`.
    NominalFeedback { kbar: Mat, z0: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub z_policy: ZPolicy,
    /// Distribution of the whitened additive noise; `w = W^{1/2} u`.
    pub w_dist: EntryDistribution,
}

impl SimConfig {
    pub fn new(horizon: usize, trials: usize, seed: u64) -> Self {
        Self {
            horizon,
            trials,
            seed,
            z_policy: ZPolicy::Zero,
            w_dist: EntryDistribution::Gaussian,
        }
    }

    pub fn with_z_policy(mut self, z_policy: ZPolicy) -> Self {
        self.z_policy = z_policy;
        self
    }
}

/// Covariance estimator convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    /// `Σ e eᵀ / N`, valid because `E[e] = 0` is known.
    KnownZeroMean,
    /// `Σ (e − ē)(e − ē)ᵀ / (N − 1)`.
    MeanCorrected,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::KnownZeroMean => "known-zero-mean",
            Self::MeanCorrected => "mean-corrected",
        }
    }
}

/// Sample moments of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub k: usize,
    pub z: Vec<f64>,
    pub cov_e: SymMat,
    /// Standard error of each entry of `cov_e`.
    pub se_cov_e: Mat,
    pub mean_e: Vec<f64>,
    pub cov_x: SymMat,
    pub mean_x: Vec<f64>,
    /// Sample mean of `‖x‖²` and its standard error.
    pub second_moment_x: f64,
    pub se_second_moment_x: f64,
    /// `tr(S) + ‖x̄‖² − mean ‖x‖²` with `S` the divide-by-N central covariance.
    /// Zero up to rounding.
    pub trace_identity_gap: f64,
    /// Largest `|x − z − e|` over all trials.
    pub decomposition_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub estimator: Estimator,
    pub trials: usize,
    /// Steps `0..=horizon`.
    pub steps: Vec<StepStats>,
}

/// Running sums over trials for one step.
#[derive(Clone, Debug)]
struct Acc {
    n: usize,
    sum_e: Vec<f64>,
    // column-major n×n
    sum_ee: Vec<f64>,
    sum_ee2: Vec<f64>,
    sum_x: Vec<f64>,
    sum_xx: Vec<f64>,
    sum_x2: f64,
    sum_x4: f64,
    gap: f64,
}

impl Acc {
    fn new(n: usize) -> Self {
        Self {
            n,
            sum_e: vec![0.0; n],
            sum_ee: vec![0.0; n * n],
            sum_ee2: vec![0.0; n * n],
            sum_x: vec![0.0; n],
            sum_xx: vec![0.0; n * n],
            sum_x2: 0.0,
            sum_x4: 0.0,
            gap: 0.0,
        }
    }

    fn push(&mut self, e: &[f64], x: &[f64], z: &[f64]) {
        let n = self.n;
        for j in 0..n {
            self.sum_e[j] += e[j];
            self.sum_x[j] += x[j];
            for i in 0..n {
                let p = e[i] * e[j];
                self.sum_ee[j * n + i] += p;
                self.sum_ee2[j * n + i] += p * p;
                self.sum_xx[j * n + i] += x[i] * x[j];
            }
            self.gap = self.gap.max((x[j] - z[j] - e[j]).abs());
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        self.sum_x2 += r2;
        self.sum_x4 += r2 * r2;
    }

    fn merge(mut self, o: &Self) -> Self {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.sum_e, &o.sum_e);
        add(&mut self.sum_ee, &o.sum_ee);
        add(&mut self.sum_ee2, &o.sum_ee2);
        add(&mut self.sum_x, &o.sum_x);
        add(&mut self.sum_xx, &o.sum_xx);
        self.sum_x2 += o.sum_x2;
        self.sum_x4 += o.sum_x4;
        self.gap = self.gap.max(o.gap);
        self
    }
}

/// Fixed-shape pairwise reduction.
fn pairwise(mut parts: Vec<Vec<Acc>>) -> Vec<Acc> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a.into_iter().zip(&b).map(|(x, y)| x.merge(y)).collect()),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

fn nominal_path(system: &SystemSpec, cfg: &SimConfig) -> Result<Vec<Vec<f64>>, SimError> {
    let n = system.n();
    let (a, b) = system.nominal();
    let len = cfg.horizon + 1;
    match &cfg.z_policy {
        ZPolicy::Zero => Ok(vec![vec![0.0; n]; len]),
        ZPolicy::Provided(seq) => {
            if seq.len() < len {
                return Err(SimError::ShortSequence {
                    got: seq.len(),
                    horizon: cfg.horizon,
                });
            }
            if let Some(i) = seq.iter().position(|z| z.len() != n) {
                return Err(SimError::Dimension(format!("z[{i}] has length {}, expected {n}", seq[i].len())));
            }
            Ok(seq[..len].to_vec())
        }
        ZPolicy::NominalFeedback { kbar, z0 } => {
            if kbar.shape() != (system.m(), n) || z0.len() != n {
                return Err(SimError::Dimension(format!(
                    "K̄ must be {}x{n} and z0 length {n}, got {}x{} and {}",
                    system.m(),
                    kbar.rows(),
                    kbar.cols(),
                    z0.len()
                )));
            }
            let acl = &a + &(&b * kbar);
            let mut out = Vec::with_capacity(len);
            out.push(z0.clone());
            for k in 1..len {
                out.push(acl.mul_vec(&out[k - 1]));
            }
            Ok(out)
        }
    }
}

fn draw_white<R: Rng>(dist: EntryDistribution, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| match dist {
            EntryDistribution::Gaussian => StandardNormal.sample(rng),
            EntryDistribution::Uniform => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
        })
        .collect()
}

fn axpy(y: &mut [f64], a: &Mat, x: &[f64]) {
    for (yi, v) in y.iter_mut().zip(a.mul_vec(x)) {
        *yi += v;
    }
}

struct Plan<'a> {
    a: Mat,
    b: Mat,
    k: &'a Mat,
    w_half: Option<Mat>,
    sampler: NoiseSampler,
    z: Vec<Vec<f64>>,
}

impl Plan<'_> {
    fn trial(&self, cfg: &SimConfig, t: usize, accs: &mut [Acc]) {
        let n = self.a.rows();
        let mut rp = rng::stream(cfg.seed, t as u64, Purpose::Parametric);
        let mut rw = rng::stream(cfg.seed, t as u64, Purpose::Additive);
        let mut e = vec![0.0; n];
        let mut x = self.z[0].clone();
        accs[0].push(&e, &x, &self.z[0]);
        for k in 0..cfg.horizon {
            let (abar, _) = self.sampler.draw(&mut rp);
            let w = match &self.w_half {
                Some(l) => l.mul_vec(&draw_white(cfg.w_dist, n, &mut rw)),
                None => vec![0.0; n],
            };
            let z = &self.z[k];
            // B v_k, recovered from the nominal path
            let mut bv = self.z[k + 1].clone();
            axpy(&mut bv, &self.a.scale(-1.0), z);

            let ke = self.k.mul_vec(&e);
            let mut e_next = w.clone();
            axpy(&mut e_next, &self.a, &e);
            axpy(&mut e_next, &abar, &e);
            axpy(&mut e_next, &self.b, &ke);
            axpy(&mut e_next, &abar, z);

            let mut x_next = w;
            axpy(&mut x_next, &self.a, &x);
            axpy(&mut x_next, &abar, &x);
            axpy(&mut x_next, &self.b, &ke);
            for (xi, v) in x_next.iter_mut().zip(&bv) {
                *xi += v;
            }
            e = e_next;
            x = x_next;
            accs[k + 1].push(&e, &x, &self.z[k + 1]);
        }
    }
}

fn w_sqrt(system: &SystemSpec) -> Result<Option<Mat>, SimError> {
    let w = system.w();
    Ok(if w.as_matrix().max_abs() > 0.0 {
        Some(sym_eig(w)?.reconstruct_with(|l| l.max(0.0).sqrt()))
    } else {
        None
    })
}

fn plan<'a>(system: &SystemSpec, k_gain: &'a Mat, cfg: &SimConfig) -> Result<Plan<'a>, SimError> {
    if cfg.trials == 0 {
        return Err(SimError::NoTrials);
    }
    if system.uncertainty().has_stochastic_b() {
        return Err(SimError::StochasticInput);
    }
    let n = system.n();
    if k_gain.shape() != (system.m(), n) {
        return Err(SimError::Dimension(format!(
            "K must be {}x{n}, got {}x{}",
            system.m(),
            k_gain.rows(),
            k_gain.cols()
        )));
    }
    let (a, b) = system.nominal();
    let w_half = w_sqrt(system)?;
    Ok(Plan {
        a,
        b,
        k: k_gain,
        w_half,
        sampler: system.uncertainty().noise_sampler()?,
        z: nominal_path(system, cfg)?,
    })
}

fn finish(acc: &Acc, k: usize, z: &[f64], trials: usize, est: Estimator) -> Result<StepStats, SimError> {
    let n = acc.n;
    let nt = trials as f64;
    let mean_e: Vec<f64> = acc.sum_e.iter().map(|s| s / nt).collect();
    let mean_x: Vec<f64> = acc.sum_x.iter().map(|s| s / nt).collect();
    let central = |sum_xx: &[f64], mean: &[f64], div: f64| {
        Mat::from_fn(n, n, |i, j| (sum_xx[j * n + i] - nt * mean[i] * mean[j]) / div)
    };
    let (cov_e, cov_x) = match est {
        Estimator::KnownZeroMean => (
            Mat::from_fn(n, n, |i, j| acc.sum_ee[j * n + i] / nt),
            Mat::from_fn(n, n, |i, j| acc.sum_xx[j * n + i] / nt),
        ),
        Estimator::MeanCorrected => {
            let div = (nt - 1.0).max(1.0);
            (central(&acc.sum_ee, &mean_e, div), central(&acc.sum_xx, &mean_x, div))
        }
    };
    // Standard error of the product e_i e_j about its (zero-mean) expectation.
    let se_cov_e = Mat::from_fn(n, n, |i, j| {
        let m1 = acc.sum_ee[j * n + i] / nt;
        let m2 = acc.sum_ee2[j * n + i] / nt;
        ((m2 - m1 * m1).max(0.0) / nt).sqrt()
    });
    let second = acc.sum_x2 / nt;
    let se_second = ((acc.sum_x4 / nt - second * second).max(0.0) / nt).sqrt();
    let biased = central(&acc.sum_xx, &mean_x, nt);
    let trace_identity_gap = biased.trace() + mean_x.iter().map(|v| v * v).sum::<f64>() - second;
    Ok(StepStats {
        k,
        z: z.to_vec(),
        cov_e: SymMat::from_symmetrized(&cov_e)?,
        se_cov_e,
        mean_e,
        cov_x: SymMat::from_symmetrized(&cov_x)?,
        mean_x,
        second_moment_x: second,
        se_second_moment_x: se_second,
        trace_identity_gap,
        decomposition_gap: acc.gap,
    })
}

/// Runs `cfg.trials` independent trajectories and returns the per-step sample
/// moments. Trial `t` draws `Ā` from its own parametric stream and `w` from
/// its own additive stream, so results are bit-identical for any thread count.
pub fn simulate_error_cov(system: &SystemSpec, k_gain: &Mat, cfg: &SimConfig) -> Result<SimResult, SimError> {
    let plan = plan(system, k_gain, cfg)?;
    let n = system.n();
    let chunks = cfg.trials.div_ceil(TRIAL_CHUNK);
    let parts: Vec<Vec<Acc>> = rng::with_pool(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut accs = vec![Acc::new(n); cfg.horizon + 1];
                let end = ((c + 1) * TRIAL_CHUNK).min(cfg.trials);
                for t in c * TRIAL_CHUNK..end {
                    plan.trial(cfg, t, &mut accs);
                }
                accs
            })
            .collect()
    });
    let total = pairwise(parts);
    let estimator = match cfg.z_policy {
        ZPolicy::Zero => Estimator::KnownZeroMean,
        _ => Estimator::MeanCorrected,
    };
    let steps = total
        .iter()
        .enumerate()
        .map(|(k, acc)| finish(acc, k, &plan.z[k], cfg.trials, estimator))
        .collect::<Result<_, _>>()?;
    Ok(SimResult {
        estimator,
        trials: cfg.trials,
        steps,
    })
}

/// Empirical against analytic covariance at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct RecursionRow {
    pub k: usize,
    pub empirical: SymMat,
    pub analytic: SymMat,
    /// Exact standard error of each entry of `empirical`,
    /// `√(Var(e_i e_j) / N)` from the propagated fourth moments.
    pub se: Mat,
    /// `(empirical − analytic) / se`, entrywise. Zero where both agree
    /// exactly, infinite where they differ with zero standard error.
    pub z_scores: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecursionReport {
    pub estimator: Estimator,
    pub rows: Vec<RecursionRow>,
    /// Largest `|z|` over the upper triangle and all steps, with its location.
    pub max_z: f64,
    pub argmax: (usize, usize, usize),
    /// Largest `|z|` against the recursion without the `C_p^A vec(z zᵀ)` term.
    pub max_z_uncoupled: f64,
    /// Largest `|z|` using the sample standard errors instead. Unreliable
    /// when the fourth moments of `e` grow without bound, where sample
    /// standard errors are biased low.
    pub max_z_sample: f64,
    pub max_trace_identity_gap: f64,
    pub max_decomposition_gap: f64,
}

fn z_score(emp: f64, ana: f64, se: f64) -> f64 {
    let d = emp - ana;
    if d == 0.0 {
        0.0
    } else if se > 0.0 {
        d / se
    } else {
        f64::INFINITY.copysign(d)
    }
}

/// Compares the simulated `cov(e_k)` with the covariance recursion iterated
/// from `cov(e_0) = 0` along the same `z` path.
///
/// Standard errors come from the exact fourth moments of `e_k`, propagated
/// alongside the covariance. The cost per step grows like `n⁸`, which is
/// fine for the small systems this is meant for. For the mean-corrected
/// estimator the variance is exact to leading order in `1/N`.
pub fn validate_recursion(system: &SystemSpec, k_gain: &Mat, cfg: &SimConfig) -> Result<RecursionReport, SimError> {
    let sim = simulate_error_cov(system, k_gain, cfg)?;
    let n = system.n();
    let (a, b) = system.nominal();
    let dynm = CovarianceDynamics::new(&a, &b, k_gain, &system.cpa(), system.w())?;
    let mut coupled = SymMat::zeros(n);
    let mut uncoupled = SymMat::zeros(n);
    let sampler = system.uncertainty().noise_sampler()?;
    let kurt = cfg.w_dist.kurtosis();
    let mut fourth = FourthMoments::new(dynm.closed_loop(), w_sqrt(system)?.map(|l| (l, kurt)), &sampler);
    let nt = sim.trials as f64;
    let mut rows = Vec::with_capacity(sim.steps.len());
    let (mut max_z, mut argmax, mut max_zu, mut max_zs) = (0.0f64, (0, 0, 0), 0.0f64, 0.0f64);
    let (mut tgap, mut dgap) = (0.0f64, 0.0f64);
    for (k, st) in sim.steps.iter().enumerate() {
        if k > 0 {
            coupled = dynm.cov_step(&coupled, &sim.steps[k - 1].z)?;
            uncoupled = dynm.cov_step_uncoupled(&uncoupled)?;
            fourth.step(&sim.steps[k - 1].z);
        }
        let se = Mat::from_fn(n, n, |i, j| (fourth.product_variance(i, j) / nt).sqrt());
        let zs = Mat::from_fn(n, n, |i, j| z_score(st.cov_e[(i, j)], coupled[(i, j)], se[(i, j)]));
        for j in 0..n {
            for i in 0..=j {
                if zs[(i, j)].abs() > max_z {
                    max_z = zs[(i, j)].abs();
                    argmax = (k, i, j);
                }
                let zu = z_score(st.cov_e[(i, j)], uncoupled[(i, j)], se[(i, j)]);
                max_zu = max_zu.max(zu.abs());
                let zsample = z_score(st.cov_e[(i, j)], coupled[(i, j)], st.se_cov_e[(i, j)]);
                max_zs = max_zs.max(zsample.abs());
            }
        }
        tgap = tgap.max(st.trace_identity_gap.abs());
        dgap = dgap.max(st.decomposition_gap);
        rows.push(RecursionRow {
            k,
            empirical: st.cov_e.clone(),
            analytic: coupled.clone(),
            se,
            z_scores: zs,
        });
    }
    Ok(RecursionReport {
        estimator: sim.estimator,
        rows,
        max_z,
        argmax,
        max_z_uncoupled: max_zu,
        max_z_sample: max_zs,
        max_trace_identity_gap: tgap,
        max_decomposition_gap: dgap,
    })
}
