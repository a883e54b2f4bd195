//! Batch runner for the viscous vortex-sheet laboratory.

mod config;
mod io;
mod scenario;

use anyhow::Result;
use clap::{Parser, Subcommand};
use config::ScenarioConfig;
use scenario::RunContext;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "vsheet",
    about = "Viscous vortex-sheet waves for the compressible Navier-Stokes equations: \
             scenario runs, decay fits and plot data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analytic profile audits (ODE residual, heat identity,
    /// kernel masses, weight identities, residual refinement).
    VerifyProfiles {
        /// Optional scenario configuration (defaults are used otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs/profile-verify")]
        out: PathBuf,
        /// Fixed summation order (runs are single-threaded and bitwise
        /// reproducible; this also caps --threads at 1).
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Execute the scenario described by a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to runs/<kind>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Fit a decay model to one ledger series of a completed run.
    Fit {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        series: String,
        #[arg(long, default_value = "power")]
        model: String,
        /// Fit window `a b` (defaults to the full series span).
        #[arg(long, num_args = 2)]
        window: Option<Vec<f64>>,
    },
    /// Print a run report and verify its file inventory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Emit tidy (t, value) series, profile slices and the shift history
    /// from a completed run.
    EmitPlots {
        #[arg(long)]
        run: PathBuf,
        /// Output directory (defaults to <run>/plots).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn main_inner() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::VerifyProfiles { config, out, deterministic, threads } => {
            let cfg = match config {
                Some(path) => {
                    let mut c = ScenarioConfig::load(&path)?;
                    c.kind = config::ScenarioKind::ProfileVerify;
                    c
                }
                None => {
                    let c: ScenarioConfig = toml::from_str("kind = \"profile-verify\"")?;
                    c
                }
            };
            let ctx = RunContext {
                out_dir: out,
                deterministic,
                threads: if deterministic { 1 } else { threads.max(1) },
            };
            let report = scenario::run_scenario(&cfg, &ctx)?;
            print_summary(&report, &ctx.out_dir);
            Ok(report.pass)
        }
        Command::Run { config, out, deterministic, threads } => {
            let cfg = ScenarioConfig::load(&config)?;
            let out_dir = out.unwrap_or_else(|| {
                PathBuf::from("runs").join(match cfg.kind {
                    config::ScenarioKind::ProfileVerify => "profile-verify",
                    config::ScenarioKind::TorusDecay => "torus-decay",
                    config::ScenarioKind::PeriodicSheet => "periodic-sheet",
                    config::ScenarioKind::LocalizedSheet => "localized-sheet",
                    config::ScenarioKind::ConvergenceStudy => "convergence-study",
                })
            });
            let ctx = RunContext {
                out_dir,
                deterministic,
                threads: if deterministic { 1 } else { threads.max(1) },
            };
            let report = scenario::run_scenario(&cfg, &ctx)?;
            print_summary(&report, &ctx.out_dir);
            Ok(report.pass)
        }
        Command::Fit { run, series, model, window } => {
            let window = window.map(|w| (w[0], w[1]));
            let value = scenario::fit_series(&run, &series, &model, window)?;
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(true)
        }
        Command::Report { run } => scenario::verify_report(&run),
        Command::EmitPlots { run, out } => {
            let out = out.unwrap_or_else(|| run.join("plots"));
            let written = scenario::emit_plots(&run, &out)?;
            println!("wrote {} plot files to {}", written.len(), out.display());
            Ok(true)
        }
    }
}

fn print_summary(report: &io::RunReport, out_dir: &std::path::Path) {
    for v in &report.verdicts {
        println!("[{}] {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    for f in &report.fits {
        match &f.outcome {
            io::FitOutcomeReport::Fitted { model, slope, r2, .. } => {
                println!("fit {}: {model} slope {slope:.4} r2 {r2:.5}", f.series);
            }
            io::FitOutcomeReport::Skipped { skipped } => {
                println!("fit {}: skipped ({skipped})", f.series);
            }
        }
    }
    println!(
        "{}: {} ({} steps, {:.1}s) -> {}",
        report.kind,
        if report.pass { "PASS" } else { "FAIL" },
        report.steps,
        report.wall_time_s,
        out_dir.display()
    );
}
