use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use singcert::reporting::{emit, init_thread_pool, run_check, run_sweep, OverallVerdict, RunOutput};
use singcert::{RunConfig, SpaceForm, SweepParam};

/// Sufficient-condition checks for singular minimum-time extremals.
///
/// Exit status: 0 certified, 2 refuted or failed checks, 1 operational error.
/// SINGCERT_THREADS sets the worker-pool size.
#[derive(Parser)]
#[command(name = "singcert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a JSON config.
    Check { config: PathBuf },
    /// Rerun the pipeline for each value of one parameter (N, horizon, rho, K).
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// Default configuration of the Dubins problem on a space form.
    Dubins {
        #[arg(long = "N", default_value_t = 3)]
        n: usize,
        #[arg(long, default_value = "euclidean")]
        space: SpaceForm,
        /// Print the configuration with all defaults instead of running it.
        #[arg(long)]
        emit_config: bool,
    },
}

fn summarize(out: &RunOutput) {
    for s in &out.report.stages {
        eprintln!("{:<12} {:<8} {}", s.stage, format!("{:?}", s.status).to_lowercase(), s.detail);
    }
    for t in &out.timings {
        eprintln!("{:<12} {:.3} s", t.stage, t.seconds);
    }
    eprintln!("verdict: {}", serde_json::to_string(&out.report.verdict).unwrap_or_default().trim_matches('"'));
}

/// Writes configured artifacts; the report goes to stdout when no path is set.
fn finish(out: &RunOutput) -> Result<OverallVerdict> {
    summarize(out);
    for path in emit(out)? {
        eprintln!("wrote {path}");
    }
    if out.report.config.outputs.report.is_none() {
        println!("{}", out.report.to_json()?);
    }
    Ok(out.report.verdict)
}

fn run(cli: Cli) -> Result<i32> {
    init_thread_pool()?;
    match cli.command {
        Command::Check { config } => {
            let cfg = RunConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            Ok(finish(&run_check(&cfg)?)?.exit_code())
        }
        Command::Sweep { config, param, values } => {
            let cfg = RunConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            let outs = run_sweep(&cfg, param, &values)?;
            for o in &outs {
                summarize(o);
            }
            let reports: Vec<_> = outs.iter().map(|o| &o.report).collect();
            let text = serde_json::to_string_pretty(&reports)?;
            match &cfg.outputs.report {
                Some(p) => {
                    std::fs::write(p, text).with_context(|| format!("writing {p}"))?;
                    eprintln!("wrote {p}");
                }
                None => println!("{text}"),
            }
            let all = outs.iter().all(|o| o.report.verdict.exit_code() == 0);
            Ok(if all { 0 } else { 2 })
        }
        Command::Dubins { n, space, emit_config } => {
            let cfg = RunConfig::dubins(space, n);
            cfg.validate()?;
            if emit_config {
                println!("{}", cfg.to_json()?);
                return Ok(0);
            }
            Ok(finish(&run_check(&cfg)?)?.exit_code())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
