//! `superdrift synth|pde|sde|report`: config-driven experiment runs.
//!
//! Exit status is 0 on success, 1 when a check fails, 2 for configuration
//! and input errors and 3 for numerical breakdown. Failures that happen
//! after the output directory exists also leave a `failure.json` there.
//!
//! Seeds: the config's root seed is split by name into `drift`,
//! `ensemble`, `krylov`, `cauchy` and `vortex` children; each manifest lists
//! the children it used.

mod commands;
mod config;
mod failure;
mod manifest;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use failure::Failure;
use manifest::Run;

#[derive(Parser)]
#[command(name = "superdrift", version, about = "Singular-drift SDE experiments on periodic grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the drift and fit its block-norm decay.
    Synth(Common),
    /// Solve the Kolmogorov / Fokker-Planck equations and report energies.
    Pde(Common),
    /// Simulate the SDE ensemble and run the configured checks.
    Sde(Common),
    /// Merge the checks of all runs below a directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `run.output`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to SUPERDRIFT_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding run directories; defaults to the config's output.
    runs: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where the summary goes; defaults to `<runs>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn init_threads(threads: Option<usize>) -> Result<(), Failure> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("SUPERDRIFT_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Failure::Config(format!("SUPERDRIFT_THREADS = {v:?} is not a count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(())
}

fn output_dir(cli_out: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli_out
        .or_else(|| cfg.run.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_failure(dir: &Path, f: &Failure) {
    if dir.is_dir() {
        let text = serde_json::to_string_pretty(&f.record()).expect("serializable");
        let _ = std::fs::write(dir.join("failure.json"), text + "\n");
    }
}

fn run_common(name: &str, args: Common) -> Result<(), (Option<PathBuf>, Failure)> {
    init_threads(args.threads).map_err(|e| (None, e))?;
    let mut cfg = ExperimentConfig::load(&args.config).map_err(|e| (None, e))?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let out = output_dir(args.out, &cfg);
    let run = Run::create(&out, name, &cfg.to_toml()).map_err(|e| (None, e))?;
    let result = match name {
        "synth" => commands::synth_command(&cfg, &base, run),
        "pde" => commands::pde_command(&cfg, &base, run),
        _ => commands::sde_command(&cfg, &base, run),
    };
    result.map_err(|e| (Some(out), e))
}

fn run_report(args: ReportArgs) -> Result<(), (Option<PathBuf>, Failure)> {
    init_threads(args.threads).map_err(|e| (None, e))?;
    let root = match (args.runs, &args.config) {
        (Some(r), _) => r,
        (None, Some(c)) => {
            let cfg = ExperimentConfig::load(c).map_err(|e| (None, e))?;
            output_dir(None, &cfg)
        }
        (None, None) => {
            return Err((None, Failure::Config("report needs a run directory or --config".into())));
        }
    };
    if !root.is_dir() {
        return Err((None, Failure::Config(format!("{} is not a directory", root.display()))));
    }
    let out_dir = args.out.unwrap_or_else(|| root.join("report"));
    let out = Run::create(&out_dir, "report", "").map_err(|e| (None, e))?;
    report::report_command(&root, out).map_err(|e| (Some(out_dir), e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => run_common("synth", a),
        Command::Pde(a) => run_common("pde", a),
        Command::Sde(a) => run_common("sde", a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((dir, f)) => {
            eprintln!("superdrift: {f}");
            if let Some(d) = dir {
                write_failure(&d, &f);
            }
            ExitCode::from(f.exit_code())
        }
    }
}
