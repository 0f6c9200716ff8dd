//! `bearing-swarm`: validate scenario files, run tracking simulations,
//! and sweep protocol parameters.
//!
//! Exit codes: 0 success, 1 failed validation or aborted run, 2 usage.
//! The environment variable `BEARING_SWARM_SEED` is reserved for future
//! stochastic extensions; the current simulator is fully deterministic
//! and ignores it.

mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use bearing_swarm::engine::{self, SweepParam};
use bearing_swarm::scenario::{
    self, ScenarioConfig, ScenarioError, ScenarioMetrics, ValidationReport,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bearing-swarm", version, about = "Distributed bearing-only target tracking simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scenario file and print the full validation report.
    Validate {
        /// Scenario JSON file.
        scenario: PathBuf,
    },
    /// Simulate a scenario and write records, summary, and plots.
    Run {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Record every k-th step (overrides the scenario's setting).
        #[arg(long)]
        decimate: Option<usize>,
        /// Run even if validation fails (gain studies).
        #[arg(long)]
        force: bool,
    },
    /// Re-run a scenario over a list of parameter values.
    Sweep {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Which knob to vary.
        #[arg(long)]
        param: ParamArg,
        /// Comma-separated values, e.g. --values 1e-3,1e-4.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Output directory for the sweep table.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    Beta,
    H,
    #[value(name = "lambda2_hat")]
    Lambda2Hat,
}

impl From<ParamArg> for SweepParam {
    fn from(p: ParamArg) -> SweepParam {
        match p {
            ParamArg::Beta => SweepParam::Beta,
            ParamArg::H => SweepParam::H,
            ParamArg::Lambda2Hat => SweepParam::Lambda2Hat,
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Validate { scenario } => cmd_validate(&scenario),
        Cmd::Run {
            scenario,
            out,
            decimate,
            force,
        } => cmd_run(&scenario, &out, decimate, force),
        Cmd::Sweep {
            scenario,
            param,
            values,
            out,
        } => cmd_sweep(&scenario, param.into(), &values, &out),
    }
}

fn load(path: &std::path::Path) -> Result<ScenarioConfig, ScenarioError> {
    ScenarioConfig::from_path(path)
}

fn fail(err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::FAILURE
}

fn print_report(report: &ValidationReport) {
    println!("checks:");
    for check in &report.checks {
        let status = if check.passed {
            "pass"
        } else if check.detail.starts_with("not evaluated") {
            "skip"
        } else if check.required {
            "FAIL"
        } else {
            "warn"
        };
        println!("  [{status}] {:<22} {}", check.name, check.detail);
    }
    if let Some(m) = &report.metrics {
        print_metrics(m);
    }
}

fn print_metrics(m: &ScenarioMetrics) {
    println!("derived quantities:");
    println!("  nodes                {} (claimed bound {})", m.n, m.n_hat);
    println!(
        "  lambda2              {:.6} (claimed bound {:.6})",
        m.lambda2, m.lambda2_hat
    );
    println!(
        "  signal rate gamma    measured {:.6e}, certified {:.6e}",
        m.gamma_raw, m.gamma_certified
    );
    println!(
        "  gain beta            {:.3} (required {:.3})",
        m.beta, m.beta_required
    );
    println!(
        "  target clearance     {:.4} (observability margin {:.4})",
        m.min_clearance, m.min_sigma
    );
    println!(
        "  initial error        {:.4}, certified settling time t* = {:.4}",
        m.initial_error_norm, m.t_star_certified
    );
}

fn cmd_validate(path: &std::path::Path) -> ExitCode {
    let cfg = match load(path) {
        Ok(cfg) => cfg,
        Err(err) => return fail(err),
    };
    let report = match scenario::validate_scenario(&cfg) {
        Ok(report) => report,
        Err(err) => return fail(err),
    };
    println!("scenario: {}", path.display());
    print_report(&report);
    if report.ok() {
        println!("result: PASS");
        ExitCode::SUCCESS
    } else {
        let names: Vec<&str> = report.failed_required().iter().map(|c| c.name).collect();
        println!("result: FAIL ({})", names.join(", "));
        ExitCode::FAILURE
    }
}

fn cmd_run(
    path: &std::path::Path,
    out_dir: &std::path::Path,
    decimate: Option<usize>,
    force: bool,
) -> ExitCode {
    let mut cfg = match load(path) {
        Ok(cfg) => cfg,
        Err(err) => return fail(err),
    };
    if let Some(k) = decimate {
        if k == 0 {
            return fail("--decimate must be at least 1");
        }
        cfg.output.decimate = k;
    }
    let prepared = if force {
        scenario::prepare_forced(&cfg)
    } else {
        scenario::prepare(&cfg)
    };
    let prep = match prepared {
        Ok(prep) => prep,
        Err(ScenarioError::ValidationFailed(report)) => {
            println!("scenario: {}", path.display());
            print_report(&report);
            eprintln!("error: validation failed (use --force to run anyway)");
            return ExitCode::FAILURE;
        }
        Err(err) => return fail(err),
    };
    if force && !prep.report.ok() {
        eprintln!("warning: running despite failed validation (--force)");
    }
    let out = engine::run(&prep);
    let bundle = match output::write_bundle(out_dir, &prep, &out, force) {
        Ok(bundle) => bundle,
        Err(err) => return fail(err),
    };
    println!("wrote {}", bundle.records.display());
    println!("wrote {}", bundle.summary.display());
    for plot in &bundle.plots {
        println!("wrote {}", plot.display());
    }
    let s = &out.summary;
    println!(
        "steps: {}, beta = {:.3}, chatter floor = {:.3e}",
        s.steps, s.beta, s.chatter_floor
    );
    match s.t_cross {
        Some(t) => println!(
            "consensus floor reached at t = {:.4} (certified t* = {:.4})",
            t, s.t_star_certified
        ),
        None => println!(
            "consensus floor never reached (certified t* = {:.4})",
            s.t_star_certified
        ),
    }
    println!(
        "steady-state rmse max = {:.4e}, msce max = {:.4e}, conservation max = {:.3e}",
        s.steady_state_rmse_max, s.steady_state_msce_max, s.max_conservation_residual
    );
    if let Some(msg) = &s.aborted {
        eprintln!("error: run aborted: {msg} (partial outputs written)");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

fn cmd_sweep(
    path: &std::path::Path,
    param: SweepParam,
    values: &[f64],
    out_dir: &std::path::Path,
) -> ExitCode {
    let cfg = match load(path) {
        Ok(cfg) => cfg,
        Err(err) => return fail(err),
    };
    let rows = match engine::sweep(&cfg, param, values) {
        Ok(rows) => rows,
        Err(ScenarioError::ValidationFailed(report)) => {
            print_report(&report);
            eprintln!("error: a sweep configuration failed validation");
            return ExitCode::FAILURE;
        }
        Err(err) => return fail(err),
    };
    print!("{}", output::sweep_table(param.name(), &rows));
    if let Err(err) = std::fs::create_dir_all(out_dir) {
        return fail(err);
    }
    let csv_path = out_dir.join("sweep.csv");
    if let Err(err) = std::fs::write(&csv_path, output::sweep_csv(param.name(), &rows)) {
        return fail(err);
    }
    println!("wrote {}", csv_path.display());
    ExitCode::SUCCESS
}
