//! `aecurv`: batch driver for curvature evaluation, identity checks, flux
//! sweeps and decay estimates.

mod config;
mod run;

use std::io::Write;
use std::process::ExitCode;

use aecurv_core::Error;
use clap::Parser;

use config::{Command, Format};

#[derive(Parser)]
#[command(
    name = "aecurv",
    version,
    about = "Fourth-order curvature and energy fluxes of asymptotically Euclidean metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

const EXIT_BREACH: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DOMAIN: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    if e.is_config_error() || matches!(e, Error::Io(_) | Error::Json(_)) {
        EXIT_CONFIG
    } else {
        EXIT_DOMAIN
    }
}

fn init_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("AECURV_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Invalid(format!(
                "AECURV_THREADS must be a positive integer, got `{v}`"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Invalid(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

/// Loads the configuration recorded in an earlier JSON output.
fn replay_config(path: &std::path::Path) -> Result<Command, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let config = doc
        .get("config")
        .cloned()
        .ok_or_else(|| Error::Invalid(format!("{} has no recorded config", path.display())))?;
    Ok(serde_json::from_value(config)?)
}

fn execute(mut cmd: Command) -> Result<Option<String>, Error> {
    if let Command::Replay(r) = &cmd {
        let out = r.out.clone();
        cmd = replay_config(&r.file)?;
        cmd.set_out(out);
    }
    let report = run::run(&cmd)?;
    let (out, format) = cmd.output();
    let body = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&run::envelope(&cmd, &report))?;
            s.push('\n');
            s
        }
        Format::Csv => report.csv.clone(),
    };
    match out {
        Some(path) => std::fs::write(path, body)?,
        None => std::io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(report.breach)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let name = cli.command.name();
    match execute(cli.command) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(breach)) => {
            eprintln!("{name}: tolerance breach: {breach}");
            ExitCode::from(EXIT_BREACH)
        }
        Err(e) => {
            eprintln!("{name}: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
