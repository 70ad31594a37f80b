//! Synthesis workflows: gain extraction, variance sweeps, timing comparison
//! and independent gain verification.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use thiserror::Error;

use crate::covdyn::{build_m, CovError};
use crate::lmi::{
    build_baseline_theorem1, build_corollary_polytopic, build_theorem2, n0_from_guess, n0_zero, LmiError, LmiProblem,
    N0Choice,
};
use crate::matlib::{kron, spectral_radius, sym_eig, unvec, vec, Lu, MatError};
use crate::moments::{factorize_second_moment, second_moment_matrix, MomentError, SecondMomentFactorization, DEFAULT_RANK_TOL};
use crate::rng::{self, Purpose};
use crate::sdp::{solve_feasibility, SdpSolution, SdpStatus, SolveOptions};
use crate::system::{SystemError, SystemSpec};
use crate::{CovarianceDynamics, Mat, SymMat};

/// Smallest reciprocal condition number accepted for `S` (or `X`) when
/// extracting a gain.
pub const MIN_RCOND: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("method {method} does not apply: {reason}")]
    Scope { method: Method, reason: String },
    #[error("condition {status}: {diagnostic}")]
    NotFeasible {
        status: SdpStatus,
        diagnostic: String,
        solution: Box<SdpSolution>,
    },
    #[error("cannot extract gain: {which} is singular (rcond {rcond:.2e})")]
    SingularSlack { which: &'static str, rcond: f64 },
    #[error("feasible solution gives unstable covariance dynamics (spectral radius {rho})")]
    Unsound { rho: f64 },
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Moments(#[from] MomentError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Cov(#[from] CovError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Theorem2,
    Corollary5,
    BaselineTheorem1,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Theorem2 => "thm2",
            Method::Corollary5 => "polytopic",
            Method::BaselineTheorem1 => "baseline",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "thm2" => Ok(Method::Theorem2),
            "polytopic" => Ok(Method::Corollary5),
            "baseline" => Ok(Method::BaselineTheorem1),
            _ => Err(format!("unknown method {s:?} (expected thm2, polytopic or baseline)")),
        }
    }
}

/// How `N₀` is chosen. `Guess` is resolved against the system it is applied
/// to, so a sweep rebuilds `C₀ = C_p^A` at every variance.
#[derive(Clone, Debug, PartialEq)]
pub enum N0Strategy {
    Zero,
    Guess(Mat),
}

impl N0Strategy {
    pub fn resolve(&self, system: &SystemSpec) -> Result<N0Choice, SynthError> {
        match self {
            N0Strategy::Zero => Ok(n0_zero(system.n())),
            N0Strategy::Guess(k0) => {
                let (a, b) = system.nominal();
                Ok(n0_from_guess(&a, &b, k0, &system.cpa())?)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct GainResult {
    pub k_gain: Mat,
    pub method: Method,
    /// `ρ(M(K))` at the nominal parameters.
    pub rho_m: f64,
    /// `ρ(M(θ⁽ⁱ⁾, K))` per vertex, for the polytopic condition.
    pub per_vertex_rho: Option<Vec<f64>>,
    pub solution: SdpSolution,
    /// Reciprocal condition number of `S` (or `X` for the baseline).
    pub s_condition: f64,
}

/// `K = T S⁻¹` and the reciprocal condition number of `S`.
pub fn gain_from_slack(s: &Mat, t: &Mat) -> Result<(Mat, f64), SynthError> {
    let lu = Lu::new(&s.transpose())?;
    let rcond = lu.rcond();
    if !(rcond >= MIN_RCOND) {
        return Err(SynthError::SingularSlack { which: "S", rcond });
    }
    // K S = T  ⇔  Sᵀ Kᵀ = Tᵀ
    Ok((lu.solve(&t.transpose())?.transpose(), rcond))
}

/// Second-moment factorization of the nominal system (mean matrices from
/// [`SystemSpec::nominal`]).
pub fn baseline_factorization(system: &SystemSpec) -> Result<SecondMomentFactorization, SynthError> {
    let (a, b) = system.nominal();
    let sigma = second_moment_matrix(system.uncertainty(), &a, &b)?;
    Ok(factorize_second_moment(&sigma, system.n(), DEFAULT_RANK_TOL)?)
}

/// Builds the LMI problem of `method` for `system`.
pub fn build_condition(system: &SystemSpec, method: Method, n0: &N0Strategy) -> Result<LmiProblem, SynthError> {
    let scope = |reason: &str| SynthError::Scope {
        method,
        reason: reason.into(),
    };
    match method {
        Method::Theorem2 | Method::Corollary5 => {
            if system.uncertainty().has_stochastic_b() {
                return Err(scope("the input matrix must be deterministic"));
            }
            let n0 = n0.resolve(system)?;
            let cpa = system.cpa();
            if method == Method::Theorem2 {
                if system.vertices().len() != 1 {
                    return Err(scope("system has more than one vertex; use the polytopic condition"));
                }
                let (a, b) = &system.vertices()[0];
                Ok(build_theorem2(a, b, &cpa, &n0, None)?)
            } else {
                Ok(build_corollary_polytopic(system.vertices(), &cpa, &n0, None)?)
            }
        }
        Method::BaselineTheorem1 => Ok(build_baseline_theorem1(&baseline_factorization(system)?, None)?),
    }
}

fn lifted_rho(a: &Mat, b: &Mat, k: &Mat, cpa: &Mat) -> Result<f64, SynthError> {
    Ok(spectral_radius(&build_m(a, b, k, cpa)?)?)
}

/// Builds and solves the condition, extracts the gain and checks
/// `ρ(M(K)) < 1` at the nominal parameters (and at every vertex for the
/// polytopic condition).
pub fn synthesize(
    system: &SystemSpec,
    method: Method,
    n0: &N0Strategy,
    opts: &SolveOptions,
) -> Result<GainResult, SynthError> {
    let problem = build_condition(system, method, n0)?;
    let solution = solve_feasibility(&problem, opts);
    if solution.status != SdpStatus::Feasible {
        return Err(SynthError::NotFeasible {
            status: solution.status,
            diagnostic: solution.diagnostic.clone(),
            solution: Box::new(solution),
        });
    }
    let get = |name: &str| solution.assignments.get(name).cloned().expect("variable present by construction");
    let (k_gain, s_condition) = match method {
        Method::Theorem2 | Method::Corollary5 => gain_from_slack(&get("S"), &get("T"))?,
        Method::BaselineTheorem1 => {
            let x = get("X");
            let lu = Lu::new(&x)?;
            let rcond = lu.rcond();
            if !(rcond >= MIN_RCOND) {
                return Err(SynthError::SingularSlack { which: "X", rcond });
            }
            // F = Y X⁻¹ with X symmetric: solve X Fᵀ = Yᵀ
            (lu.solve(&get("Y").transpose())?.transpose(), rcond)
        }
    };
    let cpa = system.cpa();
    let (a, b) = system.nominal();
    let rho_m = lifted_rho(&a, &b, &k_gain, &cpa)?;
    let per_vertex_rho = if method == Method::Corollary5 {
        Some(
            system
                .vertices()
                .iter()
                .map(|(a, b)| lifted_rho(a, b, &k_gain, &cpa))
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };
    let worst = per_vertex_rho.iter().flatten().fold(rho_m, |m, r| m.max(*r));
    // the baseline only controls M when B is deterministic
    let checked = method != Method::BaselineTheorem1 || !system.uncertainty().has_stochastic_b();
    if checked && !(worst < 1.0) {
        log::error!("{method}: feasible solution with spectral radius {worst}");
        return Err(SynthError::Unsound { rho: worst });
    }
    Ok(GainResult {
        k_gain,
        method,
        rho_m,
        per_vertex_rho,
        solution,
        s_condition,
    })
}

/// Uniform grid `start, start + step, …, ≤ stop`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaGrid {
    pub start: f64,
    pub step: f64,
    pub stop: f64,
}

impl Default for SigmaGrid {
    fn default() -> Self {
        Self {
            start: 0.01,
            step: 0.01,
            stop: 0.30,
        }
    }
}

impl SigmaGrid {
    /// Grid points, computed as `start + i·step` and rounded to 12 decimals so
    /// they print as the values a user typed.
    pub fn points(&self) -> Vec<f64> {
        if !(self.step > 0.0) || self.stop < self.start {
            return vec![];
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

impl FromStr for SigmaGrid {
    type Err = String;

    /// `start:step:stop`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, step, stop] = parts.as_slice() else {
            return Err(format!("grid must be start:step:stop, got {s:?}"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad grid value {t:?}: {e}"));
        let g = Self {
            start: num(start)?,
            step: num(step)?,
            stop: num(stop)?,
        };
        if !(g.step > 0.0) || !g.start.is_finite() || !g.stop.is_finite() || g.stop < g.start {
            return Err(format!("grid needs step > 0 and stop >= start, got {s:?}"));
        }
        Ok(g)
    }
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub sigma2: f64,
    pub status: SdpStatus,
    pub margin: f64,
    pub rho_m: Option<f64>,
    /// Set when the point was not accepted as feasible for a reason other
    /// than the solver verdict.
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn accepted(&self) -> bool {
        self.status == SdpStatus::Feasible && self.error.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub method: Method,
    pub points: Vec<SweepPoint>,
    /// Largest accepted grid point.
    pub sigma_max: Option<f64>,
    pub gain_at_max: Option<GainResult>,
    /// Bisection estimate of the threshold between `sigma_max` and its grid
    /// successor, when refinement was requested.
    pub refined: Option<f64>,
    /// Non-monotone patterns and indeterminate points.
    pub anomalies: Vec<String>,
}

fn sweep_point(
    family: &SystemSpec,
    sigma2: f64,
    method: Method,
    n0: &N0Strategy,
    opts: &SolveOptions,
) -> (SweepPoint, Option<GainResult>) {
    let outcome = family
        .with_sigma2(sigma2)
        .map_err(SynthError::from)
        .and_then(|sys| synthesize(&sys, method, n0, opts));
    match outcome {
        Ok(g) => (
            SweepPoint {
                sigma2,
                status: SdpStatus::Feasible,
                margin: g.solution.margin,
                rho_m: Some(g.rho_m),
                error: None,
            },
            Some(g),
        ),
        Err(SynthError::NotFeasible { status, solution, .. }) => (
            SweepPoint {
                sigma2,
                status,
                margin: solution.margin,
                rho_m: None,
                error: None,
            },
            None,
        ),
        Err(e) => (
            SweepPoint {
                sigma2,
                status: SdpStatus::Indeterminate,
                margin: f64::NAN,
                rho_m: None,
                error: Some(e.to_string()),
            },
            None,
        ),
    }
}

/// Feasibility of `method` over a variance grid applied to `family` (its iid
/// entry variance is replaced at each point). Points are solved in parallel
/// and assembled in grid order; indeterminate points count as infeasible.
pub fn sweep_sigma_max(
    family: &SystemSpec,
    method: Method,
    n0: &N0Strategy,
    grid: &SigmaGrid,
    opts: &SolveOptions,
    refine: bool,
) -> SweepResult {
    let pts = grid.points();
    let results: Vec<(SweepPoint, Option<GainResult>)> =
        rng::with_pool(|| pts.par_iter().map(|&s| sweep_point(family, s, method, n0, opts)).collect());
    let mut anomalies = vec![];
    for p in &results {
        if p.0.status == SdpStatus::Indeterminate || p.0.error.is_some() {
            let why = p.0.error.clone().unwrap_or_else(|| "indeterminate solver verdict".into());
            log::warn!("sweep {method} at sigma2 = {}: {why}", p.0.sigma2);
            anomalies.push(format!("sigma2 = {}: {why}", p.0.sigma2));
        }
    }
    let last = results.iter().rposition(|p| p.0.accepted());
    if let Some(li) = last {
        if let Some(gap) = results[..li].iter().find(|p| !p.0.accepted()) {
            let msg = format!(
                "non-monotone: sigma2 = {} infeasible below feasible sigma2 = {}",
                gap.0.sigma2, results[li].0.sigma2
            );
            log::warn!("sweep {method}: {msg}");
            anomalies.push(msg);
        }
    }
    let refined = match (refine, last) {
        (true, Some(li)) if li + 1 < results.len() => {
            let (mut lo, mut hi) = (results[li].0.sigma2, results[li + 1].0.sigma2);
            while hi - lo > 1e-3 {
                let mid = 0.5 * (lo + hi);
                if sweep_point(family, mid, method, n0, opts).0.accepted() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(lo)
        }
        _ => None,
    };
    let sigma_max = last.map(|i| results[i].0.sigma2);
    let mut gain_at_max = None;
    let mut points = Vec::with_capacity(results.len());
    for (i, (p, g)) in results.into_iter().enumerate() {
        if Some(i) == last {
            gain_at_max = g;
        }
        points.push(p);
    }
    SweepResult {
        method,
        points,
        sigma_max,
        gain_at_max,
        refined,
        anomalies,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub n: usize,
    /// Mean solver-only time of the S-variable condition, in seconds.
    pub mean_t_thm2: f64,
    /// Mean solver-only time of the size-reduced baseline, in seconds.
    pub mean_t_baseline: f64,
    pub trials: usize,
    /// Matrices drawn, including rejected ones.
    pub attempts: usize,
    /// Main block sizes of the two conditions.
    pub block_thm2: usize,
    pub block_baseline: usize,
    /// True when rejection sampling ran out before `trials` instances.
    pub skipped: bool,
}

/// Variance of the entry noise in timing instances.
pub const TIMING_SIGMA2: f64 = 0.05;
/// Rejection-sampling cap per trial.
pub const TIMING_MAX_ATTEMPTS: usize = 200;

/// Random nominal `A` for a timing instance: uniform entries on `[−1, 1]`
/// rescaled to spectral radius 0.9.
pub fn random_timing_matrix<R: Rng>(n: usize, rng: &mut R) -> Result<Mat, SynthError> {
    let mut a = Mat::zeros(n, n);
    for v in a.as_mut_slice() {
        *v = rng.random_range(-1.0..=1.0);
    }
    let rho = spectral_radius(&a)?;
    Ok(if rho > 0.0 { a.scale(0.9 / rho) } else { a })
}

/// One timing instance: `(A, t_thm2, t_baseline, block sizes)` or `None` when
/// either condition is not feasible.
fn timing_instance(a: Mat, opts: &SolveOptions) -> Result<Option<(f64, f64, usize, usize)>, SynthError> {
    let n = a.rows();
    let sys = SystemSpec::nominal_iid(a, Mat::identity(n), TIMING_SIGMA2)?;
    let p2 = build_condition(&sys, Method::Theorem2, &N0Strategy::Zero)?;
    let pb = build_condition(&sys, Method::BaselineTheorem1, &N0Strategy::Zero)?;
    let s2 = solve_feasibility(&p2, opts);
    if !s2.is_feasible() {
        return Ok(None);
    }
    let sb = solve_feasibility(&pb, opts);
    if !sb.is_feasible() {
        return Ok(None);
    }
    Ok(Some((s2.solve_time, sb.solve_time, p2.blocks()[0].dim, pb.blocks()[0].dim)))
}

/// Mean solver-only times of the S-variable condition (`N₀ = 0`) and the
/// size-reduced baseline over `trials` random instances per size with
/// `B = Iₙ`, `σ² = 0.05`. Instances come from [`random_timing_matrix`] with
/// the stream for (size, attempt) derived from `seed`, so the matrices are
/// reproducible; solves run sequentially to keep wall times comparable.
pub fn timing_compare(sizes: &[usize], trials: usize, seed: u64, opts: &SolveOptions) -> Result<Vec<TimingRow>, SynthError> {
    let trials = trials.max(1);
    let mut rows = vec![];
    for &n in sizes {
        let (mut t2, mut tb, mut done, mut attempts) = (0.0, 0.0, 0usize, 0usize);
        let (mut d2, mut db) = (3 * n * n, 0);
        while done < trials && attempts < TIMING_MAX_ATTEMPTS * trials {
            let mut r = rng::stream(seed, ((n as u64) << 32) | attempts as u64, Purpose::Aux);
            attempts += 1;
            let a = random_timing_matrix(n, &mut r)?;
            if let Some((a2, ab, s2, sb)) = timing_instance(a, opts)? {
                t2 += a2;
                tb += ab;
                d2 = s2;
                db = sb;
                done += 1;
            }
        }
        let skipped = done < trials;
        if skipped {
            log::warn!("timing: only {done} feasible instances of size {n} after {attempts} attempts");
        }
        let den = done.max(1) as f64;
        rows.push(TimingRow {
            n,
            mean_t_thm2: t2 / den,
            mean_t_baseline: tb / den,
            trials: done,
            attempts,
            block_thm2: d2,
            block_baseline: db,
            skipped,
        });
    }
    Ok(rows)
}

/// Outcome of [`verify_gain`]. Failures are carried in the report.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    /// `ρ(M(θ⁽ⁱ⁾, K))` per vertex.
    pub vertex_rho: Vec<f64>,
    /// Largest `ρ(M(θ, K))` over the simplex samples (and vertices).
    pub sample_rho_max: f64,
    pub samples: usize,
    /// `ρ(M(K))` at the designated true parameters.
    pub nominal_rho: f64,
    /// Steady-state error covariance at the true parameters.
    pub steady_state: Option<SymMat>,
    pub steady_state_error: Option<String>,
    /// `ρ(E[(Ã + B̃K) ⊗ (Ã + B̃K)])` from the full second moment, which also
    /// accounts for a stochastic input matrix.
    pub moment_rho: f64,
    /// `λ_max(E[(Ã + B̃K)ᵀ P (Ã + B̃K)] − P) / λ_max(P)` for the Lyapunov
    /// matrix `P` solving `P − E[…] = I`; negative when the closed loop is
    /// quadratically stable. `None` when `P` does not exist.
    pub lyapunov_residual: Option<f64>,
}

impl VerifyReport {
    /// Every spectral radius below one.
    pub fn stable(&self) -> bool {
        self.sample_rho_max < 1.0 && self.nominal_rho < 1.0 && self.moment_rho < 1.0
    }
}

/// Default seed for simplex sampling in [`verify_gain`].
pub const VERIFY_SEED: u64 = 0x5eed;
/// Default number of simplex samples.
pub const VERIFY_SAMPLES: usize = 1000;

/// Uniform point of the probability simplex with `l` vertices.
pub fn simplex_sample<R: Rng>(l: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..l).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn verify_gain(system: &SystemSpec, k: &Mat) -> Result<VerifyReport, SynthError> {
    verify_gain_with(system, k, VERIFY_SAMPLES, VERIFY_SEED)
}

pub fn verify_gain_with(system: &SystemSpec, k: &Mat, samples: usize, seed: u64) -> Result<VerifyReport, SynthError> {
    let (n, m) = (system.n(), system.m());
    if k.shape() != (m, n) {
        return Err(SynthError::Cov(CovError::Dimension(format!(
            "gain must be {m}x{n}, got {}x{}",
            k.rows(),
            k.cols()
        ))));
    }
    let cpa = system.cpa();
    let rho_at = |a: &Mat, b: &Mat| -> Result<f64, SynthError> { Ok(spectral_radius(&build_m(a, b, k, &cpa)?)?) };
    let vertex_rho = system
        .vertices()
        .iter()
        .map(|(a, b)| rho_at(a, b))
        .collect::<Result<Vec<_>, _>>()?;
    let mut sample_rho_max = vertex_rho.iter().fold(f64::NEG_INFINITY, |m, r| m.max(*r));
    let l = system.vertices().len();
    let mut r = rng::stream(seed, 0, Purpose::Aux);
    for _ in 0..samples {
        let th = simplex_sample(l, &mut r);
        let (a, b) = system.at(&th);
        sample_rho_max = sample_rho_max.max(rho_at(&a, &b)?);
    }

    let (a, b) = system.nominal();
    let dynamics = CovarianceDynamics::new(&a, &b, k, &cpa, system.w())?;
    let nominal_rho = dynamics.spectral_radius()?;
    let (steady_state, steady_state_error) = match dynamics.steady_state_cov() {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };

    // full-moment contraction: E[F ⊗ F] with F = Ã + B̃K = Σ_i F_i ⊗ F_i
    let fact = baseline_factorization(system)?;
    let nn = n * n;
    let mut lifted = Mat::zeros(nn, nn);
    let fs: Vec<Mat> = (0..fact.nbar).map(|i| &fact.slices_a[i] + &(&fact.slices_b[i] * k)).collect();
    for f in &fs {
        lifted += &kron(f, f);
    }
    let moment_rho = spectral_radius(&lifted)?;
    let lyapunov_residual = if moment_rho < 1.0 {
        // P − Σ F_iᵀ P F_i = I  ⇔  (I − Σ F_iᵀ⊗F_iᵀ) vec P = vec I
        let lhs = &Mat::identity(nn) - &lifted.transpose();
        let p = unvec(&Lu::new(&lhs)?.solve_vec(&vec(&Mat::identity(n)))?, n)?;
        let mut e = Mat::zeros(n, n);
        for f in &fs {
            e += &(&(&f.transpose() * &p) * f);
        }
        let p_sym = SymMat::from_symmetrized(&p)?;
        let pmax = sym_eig(&p_sym)?.max();
        let res = SymMat::from_symmetrized(&(&e - &p))?;
        Some(sym_eig(&res)?.max() / pmax)
    } else {
        None
    };
    Ok(VerifyReport {
        vertex_rho,
        sample_rho_max,
        samples,
        nominal_rho,
        steady_state,
        steady_state_error,
        moment_rho,
        lyapunov_residual,
    })
}
