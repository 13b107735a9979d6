//! `eigbounds` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, ValueEnum};
use eigbounds::bounds::{BoundsReport, NuProvenance};
use eigbounds::driver::{adapt, run_homotopy, AdaptiveConfig, HomotopyPlan, RunTrace, ShiftMode};
use eigbounds::eigensolve::EigenOptions;
use eigbounds::synthetic::run_harness;
use eigbounds::ProblemSpec;
use serde_json::json;

/// Shifts sampled per index range in the synthetic harness.
const NU_GRID: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// One solve on the initial mesh.
    Single,
    /// Adaptive refinement up to the dof budget.
    Adaptive,
    /// Nested-domain chain from a plan file.
    Homotopy,
    /// Randomized check of the lower-bound formulas on dense pencils.
    SyntheticValidate,
}

#[derive(Debug, Parser)]
#[command(name = "eigbounds", version, about = "Two-sided eigenvalue bounds for 2D elliptic operators")]
struct Cli {
    /// Problem file (TOML).
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Homotopy plan file (TOML).
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "adaptive")]
    mode: Mode,
    /// Index range r:s, 1-based and inclusive.
    #[arg(long, default_value = "1:1", value_parser = parse_range)]
    eigs: (usize, usize),
    /// Bulk marking fraction.
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Stop before the number of free dofs would exceed this.
    #[arg(long, default_value_t = 100_000)]
    max_dofs: usize,
    /// Fixed shift ν ≤ λ_{s+1}. Bounds from a user shift are not flagged as guaranteed.
    #[arg(long)]
    nu: Option<f64>,
    /// Lower bound on the first eigenvalue, for problems without a positive reaction term.
    #[arg(long)]
    lambda1_lower: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of synthetic trials.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Refine every element instead of bulk marking.
    #[arg(long)]
    uniform: bool,
    /// Write mesh_NNN.txt for every iteration.
    #[arg(long)]
    mesh_snapshots: bool,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected r:s, got {s:?}"))?;
    let r = a.trim().parse().map_err(|e| format!("bad r in {s:?}: {e}"))?;
    let t = b.trim().parse().map_err(|e| format!("bad s in {s:?}: {e}"))?;
    Ok((r, t))
}

enum Failure {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    fn classify(e: eigbounds::Error) -> Failure {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Numerical(e.into())
        }
    }
}

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display())).map_err(config)?;
    let eigen = EigenOptions { seed: cli.seed, ..Default::default() };
    match cli.mode {
        Mode::Single | Mode::Adaptive => run_adaptive(cli, eigen),
        Mode::Homotopy => run_chain(cli, eigen),
        Mode::SyntheticValidate => run_synthetic(cli),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(config)
}

fn run_adaptive(cli: &Cli, eigen: EigenOptions) -> Result<(), Failure> {
    let path = cli.problem.as_ref().ok_or_else(|| config(anyhow!("--problem is required in this mode")))?;
    let spec = ProblemSpec::from_file(path).with_context(|| format!("reading {}", path.display())).map_err(config)?;
    let mode = match cli.nu {
        Some(nu) => ShiftMode::Fixed { nu, provenance: NuProvenance::User },
        None => ShiftMode::Combination,
    };
    let cfg = AdaptiveConfig {
        r: cli.eigs.0,
        s: cli.eigs.1,
        theta: cli.theta,
        max_dofs: cli.max_dofs,
        mode,
        lambda1_lower: cli.lambda1_lower,
        uniform: cli.uniform,
        max_iterations: if cli.mode == Mode::Single { 1 } else { AdaptiveConfig::default().max_iterations },
        eigen,
        snapshots: cli.mesh_snapshots,
    };
    let (trace, error) = match adapt(&spec, &cfg) {
        Ok(t) => (t, None),
        Err(f) => (f.trace, Some(f.error)),
    };
    write_trace(&cli.out, "", &trace)?;
    let report = json!({
        "mode": format!("{:?}", cli.mode).to_lowercase(),
        "problem": path.display().to_string(),
        "config": cfg,
        "final": trace.final_report(),
        "error": error.as_ref().map(|e| e.to_string()),
        "trace": trace,
    });
    write(&cli.out.join("report.json"), &pretty(&report))?;
    if let Some(last) = trace.last() {
        print!("{}", summary(&last.report, last.dofs, last.kato_note.as_deref()));
    }
    match error {
        Some(e) => Err(Failure::classify(e)),
        None => Ok(()),
    }
}

fn run_chain(cli: &Cli, eigen: EigenOptions) -> Result<(), Failure> {
    let path = cli.plan.as_ref().ok_or_else(|| config(anyhow!("--plan is required in homotopy mode")))?;
    let plan = HomotopyPlan::from_file(path).with_context(|| format!("reading {}", path.display())).map_err(config)?;
    let (result, failing, error) = match run_homotopy(&plan, &eigen) {
        Ok(r) => (r, None, None),
        Err(f) => (f.partial, f.trace, Some(f.error)),
    };
    println!("stage 0 (analytic): nu = {:.11e}", result.initial_nu);
    for st in &result.stages {
        let k = st.stage;
        write_trace(&cli.out, &format!("stage{k}_"), &st.trace)?;
        let last = st.trace.last().expect("completed stages have iterations");
        println!("stage {k} ({}): nu = {:.11e} [{:?}]", st.name, st.nu, st.nu_provenance);
        print!("{}", summary(&last.report, last.dofs, last.kato_note.as_deref()));
        if let Some(t) = st.transferred {
            println!("  transferred lower bound: {t:.11e}");
        }
    }
    if let Some(tr) = &failing {
        write_trace(&cli.out, &format!("stage{}_", result.stages.len() + 1), tr)?;
    }
    if let Some(last) = result.stages.last() {
        write(&cli.out.join("trace.csv"), &last.trace.to_csv())?;
    }
    let report = json!({
        "mode": "homotopy",
        "plan": path.display().to_string(),
        "final": result.final_report(),
        "error": error.as_ref().map(|e| e.to_string()),
        "result": result,
        "failing_stage_trace": failing,
    });
    write(&cli.out.join("report.json"), &pretty(&report))?;
    match error {
        Some(e) => Err(Failure::classify(e)),
        None => Ok(()),
    }
}

fn run_synthetic(cli: &Cli) -> Result<(), Failure> {
    if cli.trials == 0 {
        return Err(config(anyhow!("--trials must be positive")));
    }
    let rep = run_harness(cli.trials, cli.seed, NU_GRID);
    let report = json!({ "mode": "synthetic-validate", "seed": cli.seed, "nu_grid": NU_GRID, "passed": rep.passed(), "harness": rep });
    write(&cli.out.join("report.json"), &pretty(&report))?;
    println!("trials {}", rep.trials);
    println!("kato: {} checks, {} violations", rep.kato_checks, rep.kato_violations);
    println!("weinstein: {} checks, {} violations", rep.weinstein_checks, rep.weinstein_violations);
    println!("distance: {} checks, {} violations", rep.distance_checks, rep.distance_violations);
    if rep.passed() {
        Ok(())
    } else {
        Err(Failure::Numerical(anyhow!("synthetic harness found violations")))
    }
}

fn write_trace(out: &Path, prefix: &str, trace: &RunTrace) -> Result<(), Failure> {
    write(&out.join(format!("{prefix}trace.csv")), &trace.to_csv())?;
    for it in &trace.iterations {
        if let Some(text) = &it.mesh_text {
            write(&out.join(format!("{prefix}mesh_{:03}.txt", it.iter)), text)?;
        }
    }
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn summary(rep: &BoundsReport, dofs: usize, note: Option<&str>) -> String {
    let mut s = format!("  dofs {dofs}\n  {:>3}  {:>18}  {:>18}  {:>18}  guaranteed\n", "n", "lower", "upper", "rel. width");
    for e in &rep.entries {
        let w = (e.upper - e.lower) / e.lower;
        let _ = writeln!(s, "  {:>3}  {:>18.11e}  {:>18.11e}  {:>18.11e}  {}", e.n, e.lower, e.upper, w, e.guaranteed);
    }
    let gaps: Vec<String> = rep.gaps.iter().map(|g| format!("{g:.11e}")).collect();
    let _ = writeln!(s, "  gaps: {}", gaps.join(" "));
    if let Some(n) = note {
        let _ = writeln!(s, "  note: {n}");
    }
    s
}
