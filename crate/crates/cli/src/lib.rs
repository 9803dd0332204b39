//! Batch front end for the `mgarch` library.

pub mod args;
pub mod commands;
pub mod error;
pub mod panel;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use args::*;
use commands::Output;
pub use error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "MGARCH_OUT";

#[derive(Debug, Parser)]
#[command(name = "mgarch", version, about = "Multivariate log-GARCH estimation, inference and VaR backtesting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory (default: $MGARCH_OUT, else ./mgarch-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON object holding the subcommand's options; explicit flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a return panel from a catalog process or a parameter file.
    Simulate(SimulateArgs),
    /// Estimate the model on a return panel.
    Fit(FitArgs),
    /// BIC order selection over the (r, s) grid.
    Select(SelectArgs),
    /// Asymptotic covariance and standard errors of a fit.
    Infer(InferArgs),
    /// Spillover z-tests for every off-diagonal entry of Φ1.
    Spillover(InferArgs),
    /// Stationarity condition under the 1, ∞ and 2 norms.
    Stationarity(StationarityArgs),
    /// One-step covariance forecast and MV portfolio weights.
    Forecast(ForecastArgs),
    /// Rolling one-step VaR with coverage backtests.
    Backtest(BacktestArgs),
}

/// Overlays flags given on the command line onto the config object.
fn resolve<A: Serialize + DeserializeOwned>(
    parsed: A,
    m: &ArgMatches,
    config: Option<&Value>,
) -> Result<A, CliError> {
    let Some(base) = config else { return Ok(parsed) };
    let Value::Object(mut base) = base.clone() else {
        return Err(CliError::Config("config file must hold a JSON object".into()));
    };
    if let Value::Object(flags) = serde_json::to_value(&parsed).map_err(CliError::json)? {
        for (k, v) in flags {
            if m.value_source(&k) == Some(ValueSource::CommandLine) {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(CliError::json)
}

fn run_with<A: Serialize + DeserializeOwned>(
    parsed: A,
    m: &ArgMatches,
    config: Option<&Value>,
    f: fn(&A) -> Result<Output, CliError>,
) -> Result<(Value, Result<Output, CliError>), CliError> {
    let a = resolve(parsed, m, config)?;
    let v = serde_json::to_value(&a).map_err(CliError::json)?;
    Ok((v, f(&a)))
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("mgarch-out"))
}

fn write_artifacts(
    dir: &Path,
    command: &str,
    config: Value,
    started: (u64, Instant),
    threads: usize,
    result: &Result<Output, CliError>,
    exit_code: i32,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut names = Vec::new();
    if let Ok(out) = result {
        for (name, bytes) in &out.artifacts {
            panel::write_bytes(&dir.join(name), bytes)?;
            names.push(name.clone());
        }
    }
    let manifest = json!({
        "command": command,
        "seed": config.get("seed").cloned().unwrap_or(Value::Null),
        "config": config,
        "versions": {
            "mgarch-cli": env!("CARGO_PKG_VERSION"),
            "mgarch-core": mgarch::VERSION,
        },
        "threads": threads,
        "started_unix": started.0,
        "wall_time_seconds": started.1.elapsed().as_secs_f64(),
        "exit_code": exit_code,
        "artifacts": names,
        "error": result.as_ref().err().map(|e| e.to_string()),
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(CliError::json)?;
    bytes.push(b'\n');
    panel::write_bytes(&dir.join("manifest.json"), &bytes)
}

/// Runs the CLI on `argv` and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    match execute(cli, &matches) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli, matches: &ArgMatches) -> Result<i32, CliError> {
    let started = (
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        Instant::now(),
    );
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // a pool may already exist when run() is called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Some(serde_json::from_str::<Value>(&text).map_err(|e| CliError::io(path, e))?)
        }
        None => None,
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let cfg = config.as_ref();
    let (resolved, result) = match cli.command {
        Command::Simulate(a) => run_with(a, sub, cfg, commands::simulate_cmd)?,
        Command::Fit(a) => run_with(a, sub, cfg, commands::fit_cmd)?,
        Command::Select(a) => run_with(a, sub, cfg, commands::select_cmd)?,
        Command::Infer(a) => run_with(a, sub, cfg, commands::infer_cmd)?,
        Command::Spillover(a) => run_with(a, sub, cfg, commands::spillover_cmd)?,
        Command::Stationarity(a) => run_with(a, sub, cfg, commands::stationarity_cmd)?,
        Command::Forecast(a) => run_with(a, sub, cfg, commands::forecast_cmd)?,
        Command::Backtest(a) => run_with(a, sub, cfg, commands::backtest_cmd)?,
    };
    let code = match &result {
        Ok(out) if out.converged => 0,
        Ok(_) => 2,
        Err(e) if e.is_convergence() => 2,
        Err(_) => 1,
    };
    let result = match result {
        Err(e) if code == 1 => return Err(e),
        other => other,
    };
    let dir = out_dir(cli.out);
    let threads = rayon::current_num_threads();
    write_artifacts(&dir, name, resolved, started, threads, &result, code)?;
    match &result {
        Ok(out) => {
            println!("{}", out.summary.trim_end());
            if code == 2 {
                eprintln!("warning: estimation did not converge; artifacts written to {}", dir.display());
            }
        }
        Err(e) => eprintln!("error: {e}; manifest written to {}", dir.display()),
    }
    Ok(code)
}
