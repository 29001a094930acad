use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ruelle_cli::emit::to_json_string;
use ruelle_cli::{CliError, JobConfig};

/// Run one thermodynamic-formalism job described by a TOML config.
#[derive(Parser, Debug)]
#[command(name = "ruelle", version)]
struct Args {
    /// Job config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to RUELLE_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Check solver invariants after the job and fail if any is violated.
    #[arg(long)]
    verify: bool,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("RUELLE_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("RUELLE_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn run(args: &Args) -> Result<PathBuf, CliError> {
    if let Some(n) = thread_count(args.threads)? {
        if n == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = JobConfig::load(&args.config)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| cfg.base_dir.join(o)))
        .unwrap_or_else(|| PathBuf::from("out"));
    ruelle_cli::run::run_job(&cfg, &out, args.verify)?;
    Ok(out)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(out) => {
            println!("{}", out.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = to_json_string(&e.to_json());
            eprint!("{body}");
            if let Some(out) = &args.out {
                if out.is_dir() {
                    let _ = std::fs::write(out.join("error.json"), &body);
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
