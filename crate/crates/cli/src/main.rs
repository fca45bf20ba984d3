use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qes_cli::{run_task, CliError, RunConfig, Task};
use qes_core::exec::{configure_threads, set_mode, ExecMode};

/// Quasi-exact solvability computations for the BC_N elliptic model.
#[derive(Debug, Parser)]
#[command(name = "qes", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Task to run; overrides `task` in the configuration.
    #[arg(long)]
    task: Option<String>,
    /// Output directory for `<task>.csv` and `<task>.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker pool size; 1 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
    /// Pass threshold for the task's residual assertions.
    #[arg(long)]
    tol: Option<f64>,
}

fn init_logging() -> Result<(), CliError> {
    let level = match std::env::var("QES_LOG").as_deref() {
        Err(_) | Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        Ok(other) => {
            return Err(CliError::Config(format!(
                "QES_LOG must be quiet, info or debug, got {other:?}"
            )))
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    Ok(())
}

fn resolve(args: &Args) -> Result<(Task, RunConfig), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(t) = &args.task {
        cfg.task = Some(t.clone());
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.threads {
        cfg.threads = Some(n);
    }
    if let Some(t) = args.tol {
        cfg.tol = Some(t);
    }
    let task: Task = cfg
        .task
        .as_deref()
        .ok_or_else(|| {
            CliError::Config("no task given (use --task or `task` in the config)".into())
        })?
        .parse()?;
    Ok((task, cfg))
}

fn run(args: &Args) -> Result<bool, CliError> {
    init_logging()?;
    let (task, cfg) = resolve(args)?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        if n == 1 {
            set_mode(ExecMode::Sequential);
        } else {
            configure_threads(n);
        }
    }
    let report = run_task(task, &cfg)?;
    let (csv, json) = report.write(&cfg, &args.out)?;
    log::info!("wrote {} and {}", csv.display(), json.display());
    for a in report.failures() {
        eprintln!("assertion failed: {}", a.describe());
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
