use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;

use clap::{Parser, Subcommand};

use robochain::harness::{self, HarnessError};

#[derive(Parser)]
#[command(
    name = "robochain",
    version,
    about = "Ledger-backed pick-and-place cell simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run experiments (preset labels A-D or config files) into run directories.
    Run {
        #[arg(required = true)]
        experiments: Vec<String>,
        /// Override the RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Extra `key = value` settings layered over each experiment.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Parent directory; each run goes to <out>/<label>.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Check chain integrity, image anchors and artifact digests of a run.
    Verify { run_dir: PathBuf },
    /// Print the velocity table for four runs.
    Table {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the latest contract storage recorded in a run's chain.
    DumpStorage {
        run_dir: PathBuf,
        #[arg(long)]
        address: Option<String>,
    },
}

fn run(
    experiments: &[String],
    seed: Option<u64>,
    config: Option<PathBuf>,
    out: PathBuf,
) -> Result<(), HarnessError> {
    let overrides = match &config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|source| HarnessError::Io {
                path: p.clone(),
                source,
            })?,
        ),
        None => None,
    };
    let cfgs = experiments
        .iter()
        .map(|e| harness::resolve_experiment(e, overrides.as_deref(), seed))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|cfg| {
                let dir = out.join(&cfg.label);
                s.spawn(move || harness::cmd_run(cfg, &dir).map(|m| (dir, m)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    for r in results {
        let (dir, m) = r?;
        println!("{}\t{}\t{}", m.label, dir.display(), m.head_hash);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            experiments,
            seed,
            config,
            out,
        } => run(&experiments, seed, config, out),
        Command::Verify { run_dir } => match harness::cmd_verify(&run_dir) {
            Ok(v) if v.is_valid() => {
                println!("{v}");
                Ok(())
            }
            Ok(v) => {
                eprintln!("{v}");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
        Command::Table { run_dirs, out } => harness::cmd_table(&run_dirs).and_then(|t| {
            print!("{t}");
            match out {
                Some(p) => {
                    std::fs::write(&p, &t).map_err(|source| HarnessError::Io { path: p, source })
                }
                None => Ok(()),
            }
        }),
        Command::DumpStorage { run_dir, address } => {
            harness::cmd_dump_storage(&run_dir, address.as_deref()).map(|t| print!("{t}"))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
