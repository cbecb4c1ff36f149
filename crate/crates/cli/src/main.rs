use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use unlearn_cli::commands::{self, BreakArgs, Mode, PoisonArgs};
use unlearn_cli::config::{parse_number, Method};
use unlearn_core::Error;

#[derive(Parser)]
#[command(name = "unlearn", version, about = "Generate, protect and break toy image datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Errmax,
    Errmin,
    Synthetic,
    Ar,
    Ops,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Nonlinear,
    Opa,
    Advtrain,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/val/test splits of the procedural glyph dataset.
    GenData {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturb `<in>/train.uds` with one protection method.
    Poison {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// l-inf budget, e.g. `8/255`.
        #[arg(long, value_parser = epsilon)]
        epsilon: Option<f64>,
        #[arg(long)]
        class_wise: bool,
        #[arg(long)]
        cfg: Option<PathBuf>,
    },
    /// Run one defense and record its accuracy.
    Break {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        cfg: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate break runs into one comparison table.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn epsilon(s: &str) -> Result<f64, String> {
    parse_number(s).ok_or_else(|| format!("`{s}` is not a number or fraction"))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData { spec, out } => commands::gen_data(spec.as_deref(), &out),
        Command::Poison { method, input, out, epsilon, class_wise, cfg } => {
            let method = match method {
                MethodArg::Errmax => Method::ErrMax,
                MethodArg::Errmin => Method::ErrMin,
                MethodArg::Synthetic => Method::Synthetic,
                MethodArg::Ar => Method::Ar,
                MethodArg::Ops => Method::Ops,
            };
            commands::poison(&PoisonArgs { method, input: &input, out: &out, epsilon, class_wise, cfg: cfg.as_deref() })
        }
        Command::Break { mode, train, val, test, cfg, out } => {
            let mode = match mode {
                ModeArg::Nonlinear => Mode::Nonlinear,
                ModeArg::Opa => Mode::Opa,
                ModeArg::Advtrain => Mode::AdvTrain,
            };
            let summary = commands::run_break(&BreakArgs {
                mode,
                train: &train,
                val: &val,
                test: &test,
                cfg: cfg.as_deref(),
                out: &out,
            })?;
            println!(
                "{} {}: no defense {:.4}, defense {:.4}",
                summary.name, summary.mode, summary.no_defense_accuracy, summary.defense_accuracy
            );
            Ok(())
        }
        Command::Report { runs, out } => {
            let table = commands::report(&runs, &out)?;
            print!("{}", table.to_csv());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
