mod args;
mod commands;
mod output;

use args::{Cli, Command};
use clap::Parser;
use commands::Status;
use output::{CliError, Output};
use serde::Serialize;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Serialize)]
struct Versions {
    xcforge: &'static str,
    cli: &'static str,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'static str,
    config: serde_json::Value,
    seed: Option<u64>,
    versions: Versions,
    outputs: &'a [String],
    started_unix: u64,
    wall_clock_seconds: f64,
}

fn threads_from_env() -> Result<(), CliError> {
    let Ok(v) = std::env::var("XCFORGE_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Usage(format!("XCFORGE_THREADS=`{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<Status, CliError> {
    threads_from_env()?;
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let (name, config, seed) = match &cli.command {
        Command::Random(a) => ("random", serde_json::to_value(a)?, Some(a.seed)),
        Command::Cyclic(a) => ("cyclic", serde_json::to_value(a)?, Some(a.seed)),
        Command::Separation(a) => ("separation", serde_json::to_value(a)?, None),
        Command::Verify(a) => ("verify", serde_json::to_value(a)?, None),
        Command::HexagonDemo(a) => ("hexagon-demo", serde_json::to_value(a)?, Some(a.seed)),
    };
    let mut out = Output::new(&cli.out, name, cli.csv);
    let status = match &cli.command {
        Command::Random(a) => commands::random(a, &mut out)?,
        Command::Cyclic(a) => commands::cyclic(a, &mut out)?,
        Command::Separation(a) => commands::separation(a, &mut out)?,
        Command::Verify(a) => commands::verify(a, &mut out)?,
        Command::HexagonDemo(a) => commands::hexagon(a, &mut out)?,
    };
    let mut outputs = out.files.clone();
    outputs.push(out.path("manifest.json").display().to_string());
    let manifest = RunManifest {
        subcommand: name,
        config,
        seed,
        versions: Versions { xcforge: xcforge::VERSION, cli: env!("CARGO_PKG_VERSION") },
        outputs: &outputs,
        started_unix,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    out.json("manifest.json", &manifest)?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Failure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
