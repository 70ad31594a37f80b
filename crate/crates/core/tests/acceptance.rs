//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line to the
//! terminal (bypassing output capture) and then asserts. Tolerances are the
//! constants below.
//!
//! The criteria share one lock so they run one at a time; the timing
//! criterion measures wall clock and must not compete with the others.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use covlmi::bench::{fixture_dir, load_scenarios, run_suite, Procedure};
use covlmi::mcsim::{validate_recursion, SimConfig};
use covlmi::report::{sim_csv, sweep_csv};
use covlmi::sdp::{read_sdpa, solve_feasibility, write_sdpa, SdpStatus, SolveOptions};
use covlmi::synth::{
    build_condition, sweep_sigma_max, synthesize, timing_compare, verify_gain, Method, N0Strategy, SigmaGrid,
    SynthError,
};
use covlmi::system::SystemSpec;
use covlmi::system_file::parse_system_file;
use covlmi::{CovarianceDynamics, Mat, SymMat};

const THRESHOLD_TOL: f64 = 0.02;
const SWEEP_BUDGET_S: f64 = 120.0;
const SIMPLEX_SAMPLES: usize = 1000;
const TIMING_TRIALS: usize = 20;
const SOUNDNESS_INSTANCES: usize = 100;
const SCALAR_BAND: f64 = 1e-3;
const STEADY_STATE_REL: f64 = 0.05;
const Z_MAX: f64 = 4.0;
const SIM_BUDGET_S: f64 = 60.0;
const LYAPUNOV_REL: f64 = 1e-8;
const LYAPUNOV_INSTANCES: usize = 20;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("acceptance {id:>2} {verdict} {name}: {detail}\n");
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn fixture(name: &str) -> SystemSpec {
    parse_system_file(fixture_dir().join(name)).unwrap()
}

fn kron(a: &Mat, b: &Mat) -> Mat {
    let (p, q) = (b.rows(), b.cols());
    let mut out = Mat::zeros(a.rows() * p, a.cols() * q);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            for k in 0..p {
                for l in 0..q {
                    out[(i * p + k, j * q + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `M(K)` for i.i.d. entry noise of variance `s2`:
/// `F ⊗ F + s2 vec(I) vec(I)ᵀ` with `F = A + BK`.
fn m_iid(a: &Mat, b: &Mat, k: &Mat, s2: f64) -> Mat {
    let f = a + &(b * k);
    let n = a.rows();
    let mut m = kron(&f, &f);
    for i in 0..n {
        for j in 0..n {
            m[(i * (n + 1), j * (n + 1))] += s2;
        }
    }
    m
}

/// Gelfand's formula `lim ‖M^(2^j)‖^(1/2^j)` by repeated normalized squaring.
fn gelfand_rho(m: &Mat) -> f64 {
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return 0.0;
    }
    let mut p = m.scale(1.0 / norm);
    let mut log = norm.ln();
    let mut pow = 1.0f64;
    for _ in 0..40 {
        let sq = &p * &p;
        let s = sq.frobenius_norm();
        if s == 0.0 {
            return 0.0;
        }
        p = sq.scale(1.0 / s);
        log = 2.0 * log + s.ln();
        pow *= 2.0;
    }
    (log / pow).exp()
}

fn random_mat(r: usize, c: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Mat {
    let mut m = Mat::zeros(r, c);
    for v in m.as_mut_slice() {
        *v = rng.random_range(lo..=hi);
    }
    m
}

#[test]
fn criterion_01_threshold_table() {
    let _g = serial();
    let start = Instant::now();
    let cases = [
        ("gamma1.json", Method::BaselineTheorem1, Some(0.09)),
        ("gamma2.json", Method::BaselineTheorem1, Some(0.16)),
        ("gamma3.json", Method::BaselineTheorem1, Some(0.2)),
        ("gamma1.json", Method::Theorem2, None),
        ("gamma2.json", Method::Theorem2, Some(0.09)),
        ("gamma3.json", Method::Theorem2, Some(0.16)),
    ];
    let mut ok = true;
    let mut parts = vec![];
    for (file, method, expected) in cases {
        let r = sweep_sigma_max(
            &fixture(file),
            method,
            &N0Strategy::Zero,
            &SigmaGrid::default(),
            &SolveOptions::default(),
            false,
        );
        let hit = match (r.sigma_max, expected) {
            (Some(got), Some(want)) => (got - want).abs() <= THRESHOLD_TOL,
            (None, None) => true,
            _ => false,
        };
        ok &= hit;
        let got = r.sigma_max.map_or("none".into(), |s| s.to_string());
        let want = expected.map_or("none".into(), |s| s.to_string());
        parts.push(format!("{} {} {got} (want {want})", file.trim_end_matches(".json"), method.as_str()));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= SWEEP_BUDGET_S;
    report(1, "sweep thresholds", ok, &format!("{}; {secs:.1} s", parts.join(", ")));
    assert!(ok);
}

#[test]
fn criterion_02_warm_start() {
    let _g = serial();
    let sys = fixture("gamma3.json").with_sigma2(0.2).unwrap();
    let opts = SolveOptions::default();
    let k0 = synthesize(&sys, Method::BaselineTheorem1, &N0Strategy::Zero, &opts)
        .unwrap()
        .k_gain;
    let res = synthesize(&sys, Method::Theorem2, &N0Strategy::Guess(k0.clone()), &opts);
    let (ok, detail) = match res {
        Ok(g) => {
            let (a, b) = sys.nominal();
            let rho = gelfand_rho(&m_iid(&a, &b, &g.k_gain, 0.2));
            (
                rho < 1.0,
                format!(
                    "baseline K0 {:?}, feasible, margin {:.3e}, rho(M) {rho:.4}",
                    k0.as_slice(),
                    g.solution.margin
                ),
            )
        }
        Err(e) => (false, e.to_string()),
    };
    report(2, "warm start at 0.2", ok, &detail);
    assert!(ok);
}

#[test]
fn criterion_03_polytopic() {
    let _g = serial();
    let sys = fixture("polytopic.json").with_sigma2(0.15).unwrap();
    let g = synthesize(&sys, Method::Corollary5, &N0Strategy::Zero, &SolveOptions::default()).unwrap();
    let ours = verify_gain(&sys, &g.k_gain).unwrap();
    let oracle_max = sys
        .vertices()
        .iter()
        .map(|(a, b)| gelfand_rho(&m_iid(a, b, &g.k_gain, 0.15)))
        .fold(0.0, f64::max);
    let reference = Mat::from_rows(&[vec![-0.7783, -0.2162]]).unwrap();
    let theirs = verify_gain(&sys, &reference).unwrap();
    let theirs_max = theirs.vertex_rho.iter().copied().fold(0.0, f64::max);
    let ok = ours.samples == SIMPLEX_SAMPLES
        && ours.vertex_rho.iter().all(|r| *r < 1.0)
        && ours.sample_rho_max < 1.0
        && oracle_max < 1.0
        && theirs_max < 1.0;
    report(
        3,
        "polytopic synthesis",
        ok,
        &format!(
            "K {:?}, vertex rho max {oracle_max:.4}, {} simplex samples max {:.4}; reference K vertex rho max {theirs_max:.4}",
            g.k_gain.as_slice(),
            ours.samples,
            ours.sample_rho_max
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_04_timing_trend() {
    let _g = serial();
    let rows = timing_compare(&[2, 3, 4], TIMING_TRIALS, 42, &SolveOptions::default()).unwrap();
    let mut ok = true;
    let mut parts = vec![];
    for r in &rows {
        let ratio = r.mean_t_thm2 / r.mean_t_baseline;
        if r.n >= 3 {
            ok &= !r.skipped && r.trials >= TIMING_TRIALS && r.mean_t_thm2 <= r.mean_t_baseline;
        }
        parts.push(format!(
            "n={} {:.2e}/{:.2e} s (ratio {ratio:.3}, {} trials)",
            r.n, r.mean_t_thm2, r.mean_t_baseline, r.trials
        ));
    }
    report(4, "timing trend", ok, &parts.join(", "));
    assert!(ok);
}

#[test]
fn criterion_05_soundness() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = SolveOptions::default();
    let (mut found, mut violations, mut attempts, mut singular) = (0, 0, 0, 0);
    let mut worst: f64 = 0.0;
    while found < SOUNDNESS_INSTANCES && attempts < 50 * SOUNDNESS_INSTANCES {
        attempts += 1;
        let n = 2 + attempts % 2;
        let m = rng.random_range(1..=n);
        let a = random_mat(n, n, -1.5, 1.5, &mut rng);
        let b = random_mat(n, m, -1.0, 1.0, &mut rng);
        let s2 = rng.random_range(0.005..=0.1);
        let sys = SystemSpec::nominal_iid(a.clone(), b.clone(), s2).unwrap();
        match synthesize(&sys, Method::Theorem2, &N0Strategy::Zero, &opts) {
            Ok(g) => {
                found += 1;
                let rho = gelfand_rho(&m_iid(&a, &b, &g.k_gain, s2));
                worst = worst.max(rho);
                if rho >= 1.0 {
                    violations += 1;
                }
            }
            Err(SynthError::Unsound { .. }) => {
                found += 1;
                violations += 1;
            }
            Err(SynthError::SingularSlack { .. }) => singular += 1,
            Err(_) => {}
        }
    }
    let ok = found == SOUNDNESS_INSTANCES && violations == 0;
    report(
        5,
        "thm2 soundness",
        ok,
        &format!("{found} feasible of {attempts} drawn, {violations} violations, max rho {worst:.4}, {singular} singular S"),
    );
    assert!(ok);
}

#[test]
fn criterion_06_scalar_oracle() {
    let _g = serial();
    // b = 1: k = −a cancels the nominal part, so mean-square stabilizable iff σ² < 1.
    let a_grid: Vec<f64> = (0..=16).map(|i| -2.0 + 0.25 * i as f64).collect();
    let mut s_grid: Vec<f64> = (0..=30).map(|i| 0.05 * i as f64).collect();
    s_grid.extend([0.99, 0.995, 0.998, 0.9995, 1.0005, 1.002, 1.005, 1.01]);
    let opts = SolveOptions::default();
    let (mut checked, mut disagree, mut banded) = (0, vec![], 0);
    for &a in &a_grid {
        for &s2 in &s_grid {
            if (s2 - 1.0).abs() <= SCALAR_BAND {
                banded += 1;
                continue;
            }
            let sys = SystemSpec::nominal_iid(Mat::from_diag(&[a]), Mat::from_diag(&[1.0]), s2).unwrap();
            let feasible = match synthesize(&sys, Method::BaselineTheorem1, &N0Strategy::Zero, &opts) {
                Ok(_) => true,
                Err(SynthError::NotFeasible { .. }) => false,
                Err(e) => {
                    disagree.push(format!("a={a} s2={s2}: {e}"));
                    continue;
                }
            };
            checked += 1;
            if feasible != (s2 < 1.0) {
                disagree.push(format!("a={a} s2={s2}: feasible={feasible}"));
            }
        }
    }
    let ok = disagree.is_empty();
    report(
        6,
        "scalar oracle",
        ok,
        &format!(
            "{checked} points, {banded} inside the band skipped, {} disagreements {:?}",
            disagree.len(),
            disagree.iter().take(3).collect::<Vec<_>>()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_07_covariance_validation() {
    let _g = serial();
    let sys = fixture("gamma2_noisy.json");
    let k = synthesize(&sys, Method::Theorem2, &N0Strategy::Zero, &SolveOptions::default())
        .unwrap()
        .k_gain;
    let (a, b) = sys.nominal();
    let ss = CovarianceDynamics::new(&a, &b, &k, &sys.cpa(), sys.w())
        .unwrap()
        .steady_state_cov()
        .unwrap();
    let start = Instant::now();
    let rep = validate_recursion(&sys, &k, &SimConfig::new(200, 10_000, 42)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let last = &rep.rows.last().unwrap().empirical;
    let rel = (last.as_matrix() - ss.as_matrix()).frobenius_norm() / ss.as_matrix().frobenius_norm();
    let ok = rel <= STEADY_STATE_REL && rep.max_z <= Z_MAX && secs <= SIM_BUDGET_S;
    let (zk, zi, zj) = rep.argmax;
    report(
        7,
        "covariance validation",
        ok,
        &format!(
            "steady-state rel error {rel:.4} (limit {STEADY_STATE_REL}), max |z| {:.3} at k={zk} ({},{}) (limit {Z_MAX}), {secs:.1} s",
            rep.max_z,
            zi + 1,
            zj + 1
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_08_lyapunov_degeneration() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for t in 0..LYAPUNOV_INSTANCES {
        let n = 1 + t % 4;
        let m = rng.random_range(1..=n);
        let mut a = random_mat(n, n, -1.0, 1.0, &mut rng);
        let b = random_mat(n, m, -1.0, 1.0, &mut rng);
        let mut k = random_mat(m, n, -1.0, 1.0, &mut rng);
        let rho = gelfand_rho(&(&a + &(&b * &k)));
        let target = rng.random_range(0.3..0.95);
        if rho > 0.0 {
            a = a.scale(target / rho);
            k = k.scale(target / rho);
        }
        let g = random_mat(n, n, -1.0, 1.0, &mut rng);
        let w = &g * &g.transpose();
        let dynm = CovarianceDynamics::new(
            &a,
            &b,
            &k,
            &Mat::zeros(n * n, n * n),
            &SymMat::from_symmetrized(&w).unwrap(),
        )
        .unwrap();
        let got = dynm.steady_state_cov().unwrap();

        let f = &a + &(&b * &k);
        let ft = f.transpose();
        let mut x = w.clone();
        for _ in 0..200_000 {
            let next = &(&(&f * &x) * &ft) + &w;
            let step = (&next - &x).frobenius_norm();
            x = next;
            if step <= 1e-16 * x.frobenius_norm() {
                break;
            }
        }
        let rel = (got.as_matrix() - &x).frobenius_norm() / x.frobenius_norm();
        worst = worst.max(rel);
    }
    let ok = worst <= LYAPUNOV_REL;
    report(
        8,
        "Lyapunov degeneration",
        ok,
        &format!("{LYAPUNOV_INSTANCES} instances, max rel error {worst:.2e} (limit {LYAPUNOV_REL:e})"),
    );
    assert!(ok);
}

fn external_verdicts(files: &[PathBuf]) -> Option<Vec<String>> {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/sdpa_crosscheck.py");
    let probe = Command::new("python3").args(["-c", "import cvxpy"]).output().ok()?;
    if !probe.status.success() || !script.exists() {
        return None;
    }
    let out = Command::new("python3").arg(&script).args(files).output().ok()?;
    if !out.status.success() {
        return Some(vec![format!("script failed: {}", String::from_utf8_lossy(&out.stderr))]);
    }
    Some(
        String::from_utf8_lossy(&out.stdout)
            .lines()
            .map(|l| l.split_whitespace().nth(1).unwrap_or("").to_string())
            .collect(),
    )
}

#[test]
fn criterion_09_sdpa_cross_check() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let base = fixture("gamma2.json");
    let mut ok = true;
    let mut parts = vec![];
    let mut files = vec![];
    let expected = [(0.05, Some(SdpStatus::Feasible)), (0.09, None), (0.12, Some(SdpStatus::Infeasible))];
    for (s2, want) in expected {
        let p = build_condition(&base.with_sigma2(s2).unwrap(), Method::Theorem2, &N0Strategy::Zero).unwrap();
        let text = write_sdpa(&p);
        let back = read_sdpa(&text).unwrap();
        let same = write_sdpa(&back) == text;
        let status = solve_feasibility(&back, &SolveOptions::default()).status;
        ok &= same && want.is_none_or(|w| w == status);
        parts.push(format!(
            "{s2}: round trip {}, {}",
            if same { "identical" } else { "DIFFERS" },
            status.as_str()
        ));
        let path = dir.path().join(format!("gamma2_{s2}.dat-s"));
        std::fs::write(&path, &text).unwrap();
        files.push(path);
    }
    match external_verdicts(&files) {
        Some(v) => {
            let agree = v.len() == 3 && v[0] == "feasible" && v[2] == "infeasible";
            ok &= agree;
            parts.push(format!("external solver {v:?}"));
        }
        None => parts.push("external solver unavailable".into()),
    }
    report(9, "SDPA cross-check", ok, &parts.join(", "));
    assert!(ok);
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[test]
fn criterion_10_determinism() {
    let _g = serial();
    let opts = SolveOptions::default();
    let gamma2 = fixture("gamma2.json");
    let noisy = fixture("gamma2_noisy.json");
    let k = Mat::from_rows(&[vec![-0.44, -0.3]]).unwrap();
    let artifacts = |threads: usize| -> Vec<String> {
        pool(threads).install(|| {
            let sweep = sweep_sigma_max(
                &gamma2,
                Method::BaselineTheorem1,
                &N0Strategy::Zero,
                &SigmaGrid::default(),
                &opts,
                true,
            );
            let sim = validate_recursion(&noisy, &k, &SimConfig::new(50, 3000, 42)).unwrap();
            let scenarios: Vec<_> = load_scenarios(fixture_dir().join("scenarios.json"))
                .unwrap()
                .into_iter()
                .filter(|s| !matches!(s.procedure, Procedure::Timing { .. }))
                .collect();
            let bench = run_suite(&scenarios, &fixture_dir(), None, &opts);
            vec![sweep_csv(&sweep), sim_csv(&sim), bench.to_csv()]
        })
    };
    let first = artifacts(1);
    let second = artifacts(4);
    let names = ["sweep.csv", "sim.csv", "bench.csv"];
    let differing: Vec<&str> = names
        .iter()
        .zip(first.iter().zip(&second))
        .filter(|(_, (a, b))| a != b)
        .map(|(n, _)| *n)
        .collect();
    let ok = differing.is_empty();
    report(
        10,
        "determinism",
        ok,
        &format!(
            "{} compared across 1 and 4 worker threads, differing: {differing:?}",
            names.join(", ")
        ),
    );
    assert!(ok);
}
