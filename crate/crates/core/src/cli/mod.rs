//! Command-line front end: `run`, `verify` and `reproduce`.

mod manifest;
mod reproduce;
mod run;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::analysis::{count_failures, run_suite, CheckReport, Suite};
use crate::error::{Error, Result};

pub use manifest::{CheckSpec, ExperimentManifest, NamedRun};
pub use reproduce::{
    fig2_config, fig3_config, fig4_configs, fig5_configs, reproduce, Figure, FigureOutput, Scale, FIG4_REWARDS,
    FIG5_ALPHAS, FIGURE_SEED,
};
pub use run::{run_summary, write_run_outputs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILURES: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "PGRATES_THREADS";

#[derive(Debug, Parser)]
#[command(name = "pgrates", version, about = "Exact softmax policy-gradient dynamics and rate checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one optimizer config, or every run and check of a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// CSV path for a single run; output directory for a manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a randomized verification suite and print JSON-lines reports.
    Verify {
        #[arg(value_name = "SUITE", conflicts_with = "suite")]
        suite_pos: Option<String>,
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Regenerate the traces and fits of one simulation figure.
    Reproduce {
        #[arg(value_name = "FIGURE", conflicts_with = "figure")]
        figure_pos: Option<String>,
        #[arg(long)]
        figure: Option<String>,
        #[arg(long, value_enum, default_value_t = Scale::Full)]
        scale: Scale,
        #[arg(long, default_value = "pgrates-out")]
        out: PathBuf,
    },
}

/// Maps a library error onto the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite { .. } | Error::Internal(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Default trial count of each suite.
pub fn default_trials(suite: Suite) -> usize {
    match suite {
        Suite::Smoothness => 10_000,
        Suite::Gradcheck => 100,
        Suite::Degree => 500,
        Suite::Fixtures => 0,
        _ => 1000,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::config(THREADS_ENV, format!("expected a positive integer, got `{v}`")))?;
    // A pool may already exist when the CLI is driven from tests.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn print_reports(out: &mut dyn Write, reports: &[CheckReport]) -> Result<()> {
    for r in reports {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}

pub fn cmd_verify(
    suite: &str,
    trials: Option<usize>,
    seed: u64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let suite: Suite = suite.parse()?;
    let trials = trials.unwrap_or_else(|| default_trials(suite));
    let reports = run_suite(suite, trials, seed)?;
    print_reports(out, &reports)?;
    let failures = count_failures(&reports);
    writeln!(err, "{suite}: {} checks, {failures} failures (seed {seed})", reports.len())?;
    Ok(if failures == 0 { EXIT_OK } else { EXIT_CHECK_FAILURES })
}

pub fn cmd_reproduce(
    figure: &str,
    scale: Scale,
    out_dir: &std::path::Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let figure: Figure = figure.parse()?;
    let res = reproduce(figure, scale, out_dir)?;
    print_reports(out, &res.checks)?;
    for f in &res.files {
        writeln!(err, "wrote {}", f.display())?;
    }
    Ok(if count_failures(&res.checks) == 0 { EXIT_OK } else { EXIT_CHECK_FAILURES })
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, out: path } => run::cmd_run(&config, path.as_deref(), out, err),
        Command::Verify { suite_pos, suite, trials, seed } => {
            let name = suite_pos.or(suite).ok_or_else(|| Error::config("suite", "a suite name is required"))?;
            cmd_verify(&name, trials, seed, out, err)
        }
        Command::Reproduce { figure_pos, figure, scale, out: dir } => {
            let name = figure_pos.or(figure).ok_or_else(|| Error::config("figure", "a figure id is required"))?;
            cmd_reproduce(&name, scale, &dir, out, err)
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
