//! `covlmi`: batch front end for synthesis, sweeps, timing, simulation,
//! verification, SDPA export and the reproduction bench.
//!
//! Exit codes: 0 on success, 2 when the requested synthesis is infeasible (or
//! a verification or bench verdict is negative), 1 on any error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use covlmi::bench::{fixture_dir, load_scenarios, run_suite};
use covlmi::mcsim::{validate_recursion, SimConfig, ZPolicy};
use covlmi::report::{sim_csv, sweep_csv, timing_csv, Summary};
use covlmi::sdp::{read_sdpa, write_sdpa, SolveOptions};
use covlmi::synth::{
    build_condition, sweep_sigma_max, synthesize, timing_compare, verify_gain_with, Method, N0Strategy, SigmaGrid,
    SynthError,
};
use covlmi::system::SystemSpec;
use covlmi::system_file::{gain_to_json, parse_gain_file, parse_system_file};
use covlmi::{CovarianceDynamics, Mat};

#[derive(Parser)]
#[command(name = "covlmi", version, about = "Covariance-control synthesis and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Directory for CSV and other artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct Design {
    /// System JSON file.
    #[arg(long)]
    config: PathBuf,
    /// thm2 | polytopic | baseline. Defaults to thm2 for one vertex and
    /// polytopic otherwise.
    #[arg(long)]
    method: Option<Method>,
    /// zero | guess=<gain.json>
    #[arg(long, default_value = "zero")]
    n0: String,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one design condition and write the gain.
    Synth {
        #[command(flatten)]
        design: Design,
        #[command(flatten)]
        output: Output,
    },
    /// Feasibility over a variance grid.
    Sweep {
        #[command(flatten)]
        design: Design,
        /// start:step:stop
        #[arg(long, default_value = "0.01:0.01:0.30")]
        grid: SigmaGrid,
        /// Bisect the threshold to 1e-3 after the grid pass.
        #[arg(long)]
        refine: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Solver-time comparison on random systems.
    Timing {
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Monte Carlo check of the covariance recursion.
    Simulate {
        #[command(flatten)]
        design: Design,
        /// Gain JSON file; synthesized with --method when absent.
        #[arg(long)]
        gain: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Initial nominal state, comma separated. Without it z is zero.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        z0: Option<Vec<f64>>,
        /// Nominal feedback gain file for the z trajectory (default: the gain).
        #[arg(long)]
        kbar: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Spectral and steady-state checks of a gain.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gain: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Write the design condition in SDPA sparse format.
    ExportSdpa {
        #[command(flatten)]
        design: Design,
        #[arg(long, default_value = "problem.dat-s")]
        file: String,
        #[command(flatten)]
        output: Output,
    },
    /// Run the reproduction scenarios.
    Bench {
        /// Only scenarios whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        /// Directory holding the system files named by the scenarios.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Scenario file (default: scenarios.json in the fixture directory).
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
}

enum Verdict {
    Ok,
    Negative,
}

fn load_system(path: &Path) -> Result<SystemSpec> {
    parse_system_file(path).with_context(|| format!("reading system {}", path.display()))
}

fn load_gain(path: &Path) -> Result<Mat> {
    parse_gain_file(path).with_context(|| format!("reading gain {}", path.display()))
}

fn parse_n0(s: &str) -> Result<N0Strategy> {
    if s == "zero" {
        return Ok(N0Strategy::Zero);
    }
    match s.strip_prefix("guess=").or_else(|| s.strip_prefix("guess:")) {
        Some(path) if !path.is_empty() => Ok(N0Strategy::Guess(load_gain(Path::new(path))?)),
        _ => bail!("--n0 must be zero or guess=<gain.json>, got {s:?}"),
    }
}

fn method_for(design: &Design, system: &SystemSpec) -> Method {
    design.method.unwrap_or(if system.vertices().len() > 1 {
        Method::Corollary5
    } else {
        Method::Theorem2
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn finish(summary: &Summary, out: &Path) -> Result<()> {
    write(out, "summary.csv", &summary.to_csv())?;
    print!("{}", summary.to_text());
    Ok(())
}

fn put_matrix(s: &mut Summary, name: &str, m: &Mat) {
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            s.num(&format!("{name}_{}{}", i + 1, j + 1), m[(i, j)]);
        }
    }
}

fn synth_cmd(design: &Design, out: &Path) -> Result<Verdict> {
    let system = load_system(&design.config)?;
    let method = method_for(design, &system);
    let n0 = parse_n0(&design.n0)?;
    let mut s = Summary::new();
    s.text("method", method.as_str());
    match synthesize(&system, method, &n0, &SolveOptions::default()) {
        Ok(g) => {
            s.text("status", "feasible")
                .num("margin", g.solution.margin)
                .num("rho_M", g.rho_m)
                .num("rcond_S", g.s_condition)
                .text("iterations", g.solution.iterations.to_string());
            for (i, r) in g.per_vertex_rho.iter().flatten().enumerate() {
                s.num(&format!("rho_M_vertex{}", i + 1), *r);
            }
            put_matrix(&mut s, "K", &g.k_gain);
            write(out, "gain.json", &gain_to_json(&g.k_gain))?;
            finish(&s, out)?;
            Ok(Verdict::Ok)
        }
        Err(SynthError::NotFeasible {
            status,
            diagnostic,
            solution,
        }) => {
            s.text("status", status.as_str())
                .num("margin", solution.margin)
                .text("iterations", solution.iterations.to_string())
                .text("diagnostic", diagnostic);
            finish(&s, out)?;
            Ok(Verdict::Negative)
        }
        Err(e) => Err(e.into()),
    }
}

fn sweep_cmd(design: &Design, grid: &SigmaGrid, refine: bool, out: &Path) -> Result<Verdict> {
    let system = load_system(&design.config)?;
    let method = method_for(design, &system);
    let n0 = parse_n0(&design.n0)?;
    let r = sweep_sigma_max(&system, method, &n0, grid, &SolveOptions::default(), refine);
    write(out, "sweep.csv", &sweep_csv(&r))?;
    let mut s = Summary::new();
    s.text("method", method.as_str()).opt("sigma_max", r.sigma_max);
    if refine {
        s.opt("sigma_max_refined", r.refined);
    }
    if let Some(g) = &r.gain_at_max {
        s.num("rho_M_at_max", g.rho_m);
        put_matrix(&mut s, "K_at_max", &g.k_gain);
    }
    s.text("anomalies", r.anomalies.len().to_string());
    for (i, a) in r.anomalies.iter().enumerate() {
        s.text(&format!("anomaly{}", i + 1), a.clone());
    }
    finish(&s, out)?;
    Ok(Verdict::Ok)
}

fn timing_cmd(sizes: &[usize], trials: usize, seed: u64, out: &Path) -> Result<Verdict> {
    if sizes.is_empty() || sizes.contains(&0) {
        bail!("--sizes needs positive state dimensions");
    }
    let rows = timing_compare(sizes, trials, seed, &SolveOptions::default())?;
    write(out, "timing.csv", &timing_csv(&rows))?;
    let mut s = Summary::new();
    for r in &rows {
        s.num(&format!("ratio_n{}", r.n), r.mean_t_thm2 / r.mean_t_baseline)
            .text(&format!("trials_n{}", r.n), r.trials.to_string());
    }
    finish(&s, out)?;
    Ok(Verdict::Ok)
}

struct SimArgs<'a> {
    design: &'a Design,
    gain: Option<&'a Path>,
    horizon: usize,
    trials: usize,
    seed: u64,
    z0: Option<&'a [f64]>,
    kbar: Option<&'a Path>,
}

fn simulate_cmd(a: SimArgs, out: &Path) -> Result<Verdict> {
    let system = load_system(&a.design.config)?;
    let k = match a.gain {
        Some(p) => load_gain(p)?,
        None => {
            let method = method_for(a.design, &system);
            match synthesize(&system, method, &parse_n0(&a.design.n0)?, &SolveOptions::default()) {
                Ok(g) => g.k_gain,
                Err(SynthError::NotFeasible { status, .. }) => {
                    let mut s = Summary::new();
                    s.text("method", method.as_str()).text("status", status.as_str());
                    finish(&s, out)?;
                    return Ok(Verdict::Negative);
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    let policy = match a.z0 {
        None => ZPolicy::Zero,
        Some(z0) => ZPolicy::NominalFeedback {
            kbar: a.kbar.map_or_else(|| Ok(k.clone()), load_gain)?,
            z0: z0.to_vec(),
        },
    };
    let zero_policy = policy == ZPolicy::Zero;
    let cfg = SimConfig::new(a.horizon, a.trials, a.seed).with_z_policy(policy);
    let rep = validate_recursion(&system, &k, &cfg)?;
    write(out, "sim.csv", &sim_csv(&rep))?;

    let mut s = Summary::new();
    put_matrix(&mut s, "K", &k);
    s.text("trials", a.trials.to_string())
        .text("horizon", a.horizon.to_string())
        .text("seed", a.seed.to_string())
        .text("estimator", rep.estimator.as_str())
        .num("max_z", rep.max_z)
        .text("max_z_step", rep.argmax.0.to_string())
        .text("max_z_entry", format!("{}{}", rep.argmax.1 + 1, rep.argmax.2 + 1))
        .num("max_z_sample_se", rep.max_z_sample)
        .num("max_z_uncoupled", rep.max_z_uncoupled)
        .num("max_trace_identity_gap", rep.max_trace_identity_gap)
        .num("max_decomposition_gap", rep.max_decomposition_gap);
    if zero_policy {
        let (am, bm) = system.nominal();
        let dynm = CovarianceDynamics::new(&am, &bm, &k, &system.cpa(), system.w())?;
        match dynm.steady_state_cov() {
            Ok(ss) => {
                if let Some(last) = rep.rows.last() {
                    let d = last.empirical.as_matrix() - ss.as_matrix();
                    let den = ss.as_matrix().frobenius_norm();
                    s.num("steady_state_rel_error", d.frobenius_norm() / den);
                }
            }
            Err(e) => {
                s.text("steady_state", e.to_string());
            }
        }
    }
    finish(&s, out)?;
    Ok(Verdict::Ok)
}

fn verify_cmd(config: &Path, gain: &Path, samples: usize, seed: u64, out: &Path) -> Result<Verdict> {
    let system = load_system(config)?;
    let k = load_gain(gain)?;
    let v = verify_gain_with(&system, &k, samples, seed)?;
    let mut s = Summary::new();
    for (i, r) in v.vertex_rho.iter().enumerate() {
        s.num(&format!("rho_M_vertex{}", i + 1), *r);
    }
    s.num("rho_M_sample_max", v.sample_rho_max)
        .text("samples", v.samples.to_string())
        .num("rho_M_nominal", v.nominal_rho)
        .num("rho_full_moment", v.moment_rho)
        .opt("lyapunov_residual", v.lyapunov_residual);
    match (&v.steady_state, &v.steady_state_error) {
        (Some(ss), _) => put_matrix(&mut s, "steady_state", ss.as_matrix()),
        (None, Some(e)) => {
            s.text("steady_state", e.clone());
        }
        _ => {}
    }
    s.text("stable", v.stable().to_string());
    finish(&s, out)?;
    Ok(if v.stable() { Verdict::Ok } else { Verdict::Negative })
}

fn export_cmd(design: &Design, file: &str, out: &Path) -> Result<Verdict> {
    let system = load_system(&design.config)?;
    let method = method_for(design, &system);
    let problem = build_condition(&system, method, &parse_n0(&design.n0)?)?;
    let text = write_sdpa(&problem);
    let round_trip = read_sdpa(&text).map(|p| write_sdpa(&p) == text).unwrap_or(false);
    write(out, file, &text)?;
    let mut s = Summary::new();
    s.text("method", method.as_str())
        .text("file", file)
        .text("scalar_variables", problem.num_scalars().to_string())
        .text("blocks", problem.blocks().len().to_string())
        .text("round_trip", round_trip.to_string());
    finish(&s, out)?;
    if !round_trip {
        bail!("exported file does not read back identically");
    }
    Ok(Verdict::Ok)
}

fn bench_cmd(filter: Option<&str>, fixtures: Option<&Path>, scenarios: Option<&Path>, out: &Path) -> Result<Verdict> {
    let dir = fixtures.map_or_else(fixture_dir, Path::to_path_buf);
    let file = scenarios.map_or_else(|| dir.join("scenarios.json"), Path::to_path_buf);
    let list = load_scenarios(&file)?;
    let report = run_suite(&list, &dir, filter, &SolveOptions::default());
    write(out, "bench.csv", &report.to_csv())?;
    write(out, "junit.xml", &report.to_junit())?;
    let mut s = Summary::new();
    for r in &report.results {
        let verdict = if r.passed { "pass" } else { "FAIL" };
        s.text(&r.name, format!("{verdict}: observed {}, expected {}", r.observed, r.expected));
    }
    s.text("passed", (report.results.len() - report.failures()).to_string())
        .text("failed", report.failures().to_string());
    finish(&s, out)?;
    Ok(if report.all_passed() { Verdict::Ok } else { Verdict::Negative })
}

fn run(cli: Cli) -> Result<Verdict> {
    match &cli.command {
        Command::Synth { design, output } => synth_cmd(design, &output.out),
        Command::Sweep {
            design,
            grid,
            refine,
            output,
        } => sweep_cmd(design, grid, *refine, &output.out),
        Command::Timing {
            sizes,
            trials,
            seed,
            output,
        } => timing_cmd(sizes, *trials, *seed, &output.out),
        Command::Simulate {
            design,
            gain,
            horizon,
            trials,
            seed,
            z0,
            kbar,
            output,
        } => simulate_cmd(
            SimArgs {
                design,
                gain: gain.as_deref(),
                horizon: *horizon,
                trials: *trials,
                seed: *seed,
                z0: z0.as_deref(),
                kbar: kbar.as_deref(),
            },
            &output.out,
        ),
        Command::Verify {
            config,
            gain,
            samples,
            seed,
            output,
        } => verify_cmd(config, gain, *samples, *seed, &output.out),
        Command::ExportSdpa { design, file, output } => export_cmd(design, file, &output.out),
        Command::Bench {
            filter,
            fixtures,
            scenarios,
            output,
        } => bench_cmd(filter.as_deref(), fixtures.as_deref(), scenarios.as_deref(), &output.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::Negative) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
