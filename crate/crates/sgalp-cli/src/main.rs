use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgalp::experiment::{emit_table, exit_code, instance_json, load_config, run_experiment};

#[derive(Parser)]
#[command(name = "sgalp", version, about = "Random-basis ALP experiments")]
struct Cli {
    /// Worker threads for the parallel parts (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config (or a run manifest) and write a run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Min/median/max gap table over run directories, as CSV on stdout.
    Summarize {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
    },
    /// Parse and check a config without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the parameters of `toy`, `pic:<id>` or `gjr:<J>:<scheme>:<z>`.
    PrintInstance {
        problem: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match cli.command {
        Command::Run { config, seed } => {
            let outcome = load_config(&config).and_then(|mut cfg| {
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                run_experiment(&cfg)
            });
            match &outcome {
                Ok(o) => {
                    println!("{}", o.dir.display());
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&o.bounds).unwrap_or_default()
                    );
                }
                Err(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&outcome) as u8)
        }
        Command::Summarize { run_dirs } => match emit_table(&run_dirs) {
            Ok(csv) => {
                print!("{csv}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::ValidateConfig { config } => match load_config(&config) {
            Ok(_) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::PrintInstance { problem, seed } => match instance_json(&problem, seed) {
            Ok(s) => {
                println!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
