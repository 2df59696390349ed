use branchlab::experiment::{load_config, report, run_path, RunError};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "branchlab", version, about = "Run, validate and report branch-set experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifact directory.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize one run directory or a directory of runs.
    Report { dir: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("BRANCHLAB_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("BRANCHLAB_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("BRANCHLAB_THREADS must be a positive integer, got 0".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn config_failure(e: RunError) -> ExitCode {
    match e {
        RunError::Config(c) => {
            eprintln!("{}", c.to_json());
            ExitCode::from(EXIT_CONFIG)
        }
        other => {
            eprintln!("{other}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_threads() {
        eprintln!("{}", serde_json::json!({ "error": "config", "key": "BRANCHLAB_THREADS", "message": msg }));
        return ExitCode::from(EXIT_CONFIG);
    }
    match cli.command {
        Command::Validate { config } => match load_config(&config) {
            Ok((cfg, _, n)) => {
                println!("ok: {} experiment in dimension {n}", cfg.experiment.kind());
                ExitCode::SUCCESS
            }
            Err(e) => config_failure(e),
        },
        Command::Run { config, out } => match run_path(&config, out.as_deref()) {
            Ok(o) => {
                let s = &o.summary;
                let green = s.checks.iter().filter(|c| c.status.is_green()).count();
                println!("{}: {green}/{} checks green, {} files in {}", s.kind, s.checks.len(), o.manifest.files.len(), o.dir.display());
                for st in s.stages.iter().filter(|st| !st.ok) {
                    eprintln!("stage {} failed: {}", st.stage, st.error.as_deref().unwrap_or(""));
                }
                if o.stage_failed() {
                    ExitCode::from(EXIT_NUMERICAL)
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => config_failure(e),
        },
        Command::Report { dir } => match report(&dir) {
            Ok(r) => {
                print!("{}", r.render());
                if r.all_green() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_NUMERICAL)
                }
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}
