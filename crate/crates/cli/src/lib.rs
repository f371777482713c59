//! Command-line front end: instance ingestion, analysis subcommands,
//! deterministic CSV / JSON reports and the golden-value suite.

pub mod config;
pub mod error;
pub mod format;
pub mod input;
pub mod run;
pub mod verify;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use crate::config::{Cli, Command, RunConfig};
use crate::error::{CliError, Result};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "IM_THREADS";

/// Parses `args`, runs the command and maps the outcome to the exit-code
/// contract.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match configure_threads()
        .and_then(|()| RunConfig::resolve(cli))
        .and_then(|cfg| dispatch(&cfg))
    {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("imvote: {e}");
            e.to_exit()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Some(value) = std::env::var_os(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .to_str()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer")))?;
    // A pool that already exists (e.g. in tests) keeps its size.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn dispatch(cfg: &RunConfig) -> Result<()> {
    if cfg.command == Command::VerifyPaper {
        let goldens = verify::load_goldens(cfg.goldens.as_deref())?;
        let report = verify::verify(&goldens, cfg.only.as_deref())?;
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        emit(cfg, &text)?;
        return match report.failed {
            0 => Ok(()),
            failed => Err(CliError::VerificationFailed {
                failed,
                total: report.total,
            }),
        };
    }
    let text = run::execute(cfg)?;
    emit(cfg, &text)
}

fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}
