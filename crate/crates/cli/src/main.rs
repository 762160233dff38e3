//! `uclt`: batch front end. Exit codes: 0 success, 1 usage or config error,
//! 2 check failure.

mod config;
mod covering;
mod export;
mod inequalities;
mod output;
mod theorem;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{config_hash, load, CoveringConfig, InequalityConfig, Overrides, RunConfig, TheoremConfig};
use output::{Provenance, RunDir};

#[derive(Parser)]
#[command(name = "uclt", version, about = "Uniform CLT hypothesis checks for martingale-difference fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Replication count; replaces every per-section count.
    #[arg(long)]
    reps: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker cap; results do not depend on it.
    #[arg(long, env = "UCLT_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Power- and exponential-level hypothesis checks for one model.
    CheckTheorem(RunArgs),
    /// Moment inequality, tail domination and diagnostics over a model suite.
    Inequalities(RunArgs),
    /// Covering numbers and entropy integrals of a finite metric space.
    Covering(RunArgs),
    /// Consolidated CSVs from a completed run directory.
    Export {
        #[arg(long)]
        run: PathBuf,
    },
}

const EXIT_ERROR: u8 = 1;
const EXIT_FAILED: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::CheckTheorem(a) => execute::<TheoremConfig>("check-theorem", &a, |c, out| theorem::run(c, out, a.threads)),
        Command::Inequalities(a) => {
            execute::<InequalityConfig>("inequalities", &a, |c, out| inequalities::run(c, out, a.threads))
        }
        Command::Covering(a) => execute::<CoveringConfig>("covering", &a, covering::run),
        Command::Export { run } => export::run(&run).map(|files| {
            for f in files {
                println!("{}", run.join(export::EXPORT_DIR).join(f).display());
            }
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn execute<C: RunConfig + Clone + Sync>(
    command: &str,
    args: &RunArgs,
    body: impl FnOnce(&C, &mut RunDir) -> anyhow::Result<bool> + Send,
) -> anyhow::Result<u8> {
    let overrides = Overrides {
        seed: args.seed,
        reps: args.reps,
        out: args.out.clone(),
    };
    let cfg: C = load(&args.config, &overrides)?;
    let hash = config_hash(&cfg);
    let dir = cfg
        .out()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{command}-{}", &hash[..12])));
    let mut out = RunDir::create(
        &dir,
        Provenance {
            config_hash: hash,
            seed: cfg.seed(),
        },
    )?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build()?;
    let passed = pool.install(|| body(&cfg, &mut out))?;
    let code = if passed { 0 } else { EXIT_FAILED };
    out.finish(command, code)?;
    println!("{}", dir.display());
    Ok(code)
}
