use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fgddf::app::{self, Overrides};
use fgddf::fusion::FusionAlgorithm;
use fgddf::scenarios::ScenarioConfig;

#[derive(Parser)]
#[command(name = "fgddf", version, about = "Decentralized factor-graph fusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo batch and write CSV and SVG artifacts.
    Run(RunArgs),
    /// Print a default scenario file.
    Config {
        #[arg(value_enum)]
        scenario: Scenario,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Tracking,
    Cl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Hscf,
    Hsci,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    algo: Option<Algo>,
    #[arg(long, value_enum)]
    conservative: Option<Switch>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Probability that a message is lost.
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Skip the SVG figures.
    #[arg(long)]
    no_plots: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Config { scenario } => {
            let cfg = match scenario {
                Scenario::Tracking => ScenarioConfig::tracking_default(),
                Scenario::Cl => ScenarioConfig::cl_default(),
            };
            match cfg.to_toml_string() {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(app::exit_code(&e) as u8)
                }
            }
        }
        Command::Run(args) => {
            let overrides = Overrides {
                algo: args.algo.map(|a| match a {
                    Algo::Hscf => FusionAlgorithm::HsCf,
                    Algo::Hsci => FusionAlgorithm::HsCi,
                }),
                conservative: args.conservative.map(|s| matches!(s, Switch::On)),
                runs: args.runs,
                seed: args.seed,
                dropout: args.dropout,
                steps: args.steps,
            };
            match app::run(&args.config, &overrides, &args.out, !args.no_plots) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(app::exit_code(&e) as u8)
                }
            }
        }
    }
}
