//! Scripted reproduction scenarios with tolerance bands.
//!
//! Scenarios are JSON documents naming a system file, a procedure and an
//! expectation:
//!
//! ```json
//! {"name": "sweep-gamma3-thm2", "system": "gamma3.json", "basis": "reported",
//!  "procedure": {"kind": "sweep", "method": "thm2"},
//!  "expect": {"kind": "band", "value": 0.16, "tol": 0.02}}
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;
use thiserror::Error;

use crate::report::num;
use crate::sdp::SolveOptions;
use crate::synth::{
    synthesize, sweep_sigma_max, timing_compare, verify_gain_with, Method, N0Strategy, SigmaGrid, VERIFY_SEED,
};
use crate::system_file::{parse_system_file, SystemFileError};
use crate::Mat;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("scenario file: {0}")]
    Json(String),
}

/// Whether an expectation is a reference value or one derived here.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Reported,
    Derived,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Procedure {
    /// Variance sweep; the observation is the largest feasible grid point.
    Sweep { method: String, grid: Option<String> },
    /// S-variable condition with `N₀` built from a baseline gain computed at
    /// the same variance (or from `gain` when given).
    Warmstart { sigma2: f64, gain: Option<Vec<Vec<f64>>> },
    /// Polytopic condition, then spectral checks at the vertices and at
    /// `samples` uniform simplex points.
    Polytopic { sigma2: f64, samples: usize },
    /// Spectral checks of a fixed gain.
    Verify {
        sigma2: Option<f64>,
        gain: Vec<Vec<f64>>,
        samples: usize,
    },
    /// Timing ratio `thm2 / baseline` at the largest size.
    Timing { sizes: Vec<usize>, trials: usize, seed: u64 },
}

impl Procedure {
    fn label(&self) -> &'static str {
        match self {
            Self::Sweep { .. } => "sweep",
            Self::Warmstart { .. } => "warmstart",
            Self::Polytopic { .. } => "polytopic",
            Self::Verify { .. } => "verify",
            Self::Timing { .. } => "timing",
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expect {
    /// Observation within `value ± tol`.
    Band { value: f64, tol: f64 },
    /// No feasible point at all.
    NoneFeasible,
    /// The procedure's check succeeds.
    Holds,
    /// Observation `≤ value`.
    AtMost { value: f64 },
}

impl Expect {
    fn describe(&self) -> String {
        match self {
            Self::Band { value, tol } => {
                let r = |x: f64| num((x * 1e12).round() / 1e12);
                format!("[{}, {}]", r(value - tol), r(value + tol))
            }
            Self::NoneFeasible => "none feasible".into(),
            Self::Holds => "holds".into(),
            Self::AtMost { value } => format!("<= {}", num(*value)),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// System file, relative to the fixture directory. Unused by `timing`.
    pub system: Option<String>,
    pub basis: Basis,
    pub procedure: Procedure,
    pub expect: Expect,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub procedure: &'static str,
    pub basis: Basis,
    pub passed: bool,
    pub observed: String,
    pub expected: String,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteReport {
    pub results: Vec<ScenarioResult>,
}

/// Directory of the shipped system and scenario fixtures.
pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>, BenchError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| BenchError::Json(e.to_string()))
}

struct Observation {
    /// Number compared against the expectation, if any.
    value: Option<f64>,
    /// Outcome of a pass/fail check.
    ok: bool,
    observed: String,
    detail: String,
}

fn gain(rows: &[Vec<f64>]) -> Result<Mat, String> {
    Mat::from_rows(rows).map_err(|e| e.to_string())
}

fn run_one(sc: &Scenario, fixtures: &Path, opts: &SolveOptions) -> Result<Observation, String> {
    let system = || -> Result<_, String> {
        let file = sc.system.as_ref().ok_or("no system file")?;
        parse_system_file(fixtures.join(file)).map_err(|e: SystemFileError| e.to_string())
    };
    match &sc.procedure {
        Procedure::Sweep { method, grid } => {
            let method: Method = method.parse()?;
            let grid: SigmaGrid = grid.as_deref().map_or(Ok(SigmaGrid::default()), str::parse)?;
            let r = sweep_sigma_max(&system()?, method, &N0Strategy::Zero, &grid, opts, false);
            Ok(Observation {
                value: r.sigma_max,
                ok: true,
                observed: r.sigma_max.map_or("none".into(), num),
                detail: format!("{} anomalies", r.anomalies.len()),
            })
        }
        Procedure::Warmstart { sigma2, gain: k0 } => {
            let sys = system()?.with_sigma2(*sigma2).map_err(|e| e.to_string())?;
            let k0 = match k0 {
                Some(rows) => gain(rows)?,
                None => {
                    synthesize(&sys, Method::BaselineTheorem1, &N0Strategy::Zero, opts)
                        .map_err(|e| format!("baseline: {e}"))?
                        .k_gain
                }
            };
            let out = synthesize(&sys, Method::Theorem2, &N0Strategy::Guess(k0.clone()), opts);
            Ok(match out {
                Ok(g) => Observation {
                    value: None,
                    ok: true,
                    observed: format!("feasible, margin {}", num(g.solution.margin)),
                    detail: format!("K0 {:?}, K {:?}, rho {}", k0.to_rows(), g.k_gain.to_rows(), num(g.rho_m)),
                },
                Err(e) => Observation {
                    value: None,
                    ok: false,
                    observed: e.to_string(),
                    detail: format!("K0 {:?}", k0.to_rows()),
                },
            })
        }
        Procedure::Polytopic { sigma2, samples } => {
            let sys = system()?.with_sigma2(*sigma2).map_err(|e| e.to_string())?;
            match synthesize(&sys, Method::Corollary5, &N0Strategy::Zero, opts) {
                Ok(g) => {
                    let v = verify_gain_with(&sys, &g.k_gain, *samples, VERIFY_SEED).map_err(|e| e.to_string())?;
                    Ok(Observation {
                        value: Some(v.sample_rho_max),
                        ok: v.sample_rho_max < 1.0,
                        observed: format!("max rho {}", num(v.sample_rho_max)),
                        detail: format!("K {:?}, margin {}", g.k_gain.to_rows(), num(g.solution.margin)),
                    })
                }
                Err(e) => Ok(Observation {
                    value: None,
                    ok: false,
                    observed: e.to_string(),
                    detail: String::new(),
                }),
            }
        }
        Procedure::Verify { sigma2, gain: k, samples } => {
            let mut sys = system()?;
            if let Some(s) = sigma2 {
                sys = sys.with_sigma2(*s).map_err(|e| e.to_string())?;
            }
            let v = verify_gain_with(&sys, &gain(k)?, *samples, VERIFY_SEED).map_err(|e| e.to_string())?;
            let rhos: Vec<String> = v.vertex_rho.iter().map(|r| num(*r)).collect();
            Ok(Observation {
                value: Some(v.sample_rho_max),
                ok: v.stable(),
                observed: format!("max rho {}", num(v.sample_rho_max)),
                detail: format!("vertex rho [{}]", rhos.join(" ")),
            })
        }
        Procedure::Timing { sizes, trials, seed } => {
            let rows = timing_compare(sizes, *trials, *seed, opts).map_err(|e| e.to_string())?;
            let last = rows.last().ok_or("no sizes")?;
            if last.skipped {
                return Err(format!("only {} feasible instances at n = {}", last.trials, last.n));
            }
            let ratio = last.mean_t_thm2 / last.mean_t_baseline;
            let detail: Vec<String> = rows
                .iter()
                .map(|r| format!("n={}: {}/{}", r.n, num(r.mean_t_thm2), num(r.mean_t_baseline)))
                .collect();
            Ok(Observation {
                value: Some(ratio),
                ok: true,
                observed: num(ratio),
                detail: detail.join("; "),
            })
        }
    }
}

fn judge(expect: &Expect, obs: &Observation) -> bool {
    match expect {
        Expect::Band { value, tol } => obs.ok && obs.value.is_some_and(|v| (v - value).abs() <= tol + 1e-12),
        Expect::NoneFeasible => obs.ok && obs.value.is_none(),
        Expect::Holds => obs.ok,
        Expect::AtMost { value } => obs.ok && obs.value.is_some_and(|v| v <= *value),
    }
}

/// Runs every scenario whose name contains `filter`, in file order.
/// Failures, including scenarios that could not run, are results.
pub fn run_suite(scenarios: &[Scenario], fixtures: &Path, filter: Option<&str>, opts: &SolveOptions) -> SuiteReport {
    let mut results = vec![];
    for sc in scenarios.iter().filter(|s| filter.is_none_or(|f| s.name.contains(f))) {
        let start = Instant::now();
        let (passed, observed, detail) = match run_one(sc, fixtures, opts) {
            Ok(obs) => (judge(&sc.expect, &obs), obs.observed, obs.detail),
            Err(e) => (false, "error".into(), e),
        };
        results.push(ScenarioResult {
            name: sc.name.clone(),
            procedure: sc.procedure.label(),
            basis: sc.basis,
            passed,
            observed,
            expected: sc.expect.describe(),
            detail,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    SuiteReport { results }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| !r.passed).count()
    }

    /// `name,procedure,basis,passed,observed,expected,detail`. Wall times are
    /// left to the JUnit file.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
        w.write_record(["name", "procedure", "basis", "passed", "observed", "expected", "detail"])
            .expect("in-memory write");
        for r in &self.results {
            let basis = match r.basis {
                Basis::Reported => "reported",
                Basis::Derived => "derived",
            };
            w.write_record([
                r.name.as_str(),
                r.procedure,
                basis,
                if r.passed { "true" } else { "false" },
                &r.observed,
                &r.expected,
                &r.detail,
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }

    pub fn to_junit(&self) -> String {
        let total: f64 = self.results.iter().map(|r| r.seconds).sum();
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        out += &format!(
            "<testsuite name=\"covlmi-bench\" tests=\"{}\" failures=\"{}\" time=\"{:.3}\">\n",
            self.results.len(),
            self.failures(),
            total
        );
        for r in &self.results {
            out += &format!(
                "  <testcase classname=\"{}\" name=\"{}\" time=\"{:.3}\"",
                r.procedure,
                xml_escape(&r.name),
                r.seconds
            );
            if r.passed {
                out += "/>\n";
            } else {
                out += &format!(
                    ">\n    <failure message=\"observed {}, expected {}\">{}</failure>\n  </testcase>\n",
                    xml_escape(&r.observed),
                    xml_escape(&r.expected),
                    xml_escape(&r.detail)
                );
            }
        }
        out + "</testsuite>\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_scenarios_parse() {
        let sc = load_scenarios(fixture_dir().join("scenarios.json")).unwrap();
        assert!(sc.len() >= 8);
        for s in &sc {
            if let Some(f) = &s.system {
                parse_system_file(fixture_dir().join(f)).unwrap();
            }
        }
    }

    #[test]
    fn judging() {
        let obs = |value, ok| Observation {
            value,
            ok,
            observed: String::new(),
            detail: String::new(),
        };
        let band = Expect::Band { value: 0.16, tol: 0.02 };
        assert!(judge(&band, &obs(Some(0.18), true)));
        assert!(!judge(&band, &obs(Some(0.19), true)));
        assert!(!judge(&band, &obs(None, true)));
        assert!(judge(&Expect::NoneFeasible, &obs(None, true)));
        assert!(!judge(&Expect::Holds, &obs(None, false)));
        assert!(judge(&Expect::AtMost { value: 1.0 }, &obs(Some(0.9), true)));
    }

    #[test]
    fn junit_escapes_and_counts() {
        let r = SuiteReport {
            results: vec![ScenarioResult {
                name: "a<b".into(),
                procedure: "sweep",
                basis: Basis::Derived,
                passed: false,
                observed: "none".into(),
                expected: "[0.14, 0.18]".into(),
                detail: "x & y".into(),
                seconds: 0.5,
            }],
        };
        let x = r.to_junit();
        assert!(x.contains("failures=\"1\""));
        assert!(x.contains("name=\"a&lt;b\""));
        assert!(x.contains("x &amp; y"));
        assert!(r.to_csv().starts_with("name,procedure,basis,passed"));
    }

    #[test]
    fn unknown_procedure_rejected() {
        let text = r#"[{"name": "x", "basis": "derived", "procedure": {"kind": "dance"}, "expect": {"kind": "holds"}}]"#;
        assert!(serde_json::from_str::<Vec<Scenario>>(text).is_err());
    }
}
