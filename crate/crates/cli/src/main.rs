//! `chronogem`: exploration, entropy measurement, curriculum training and
//! evaluation from the command line.
//!
//! Every successful run writes its outputs and one
//! `<first output>.manifest.json`. Failures exit nonzero and print a JSON
//! error record as the last line of stderr:
//!
//! | code | meaning |
//! |------|---------|
//! | 1 | other failure |
//! | 2 | usage (unknown flag, missing required flag) |
//! | 3 | malformed config file |
//! | 4 | missing input file |
//! | 5 | env mismatch or invalid input |

mod config;
mod explore;
mod failure;
mod goalcmd;
mod inputs;
mod manifest;
mod measure;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use failure::{classify, ErrorRecord, Failure, EXIT_USAGE};
use manifest::Run;

#[derive(Debug, Parser)]
#[command(
    name = "chronogem",
    version,
    about = "Uniform-coverage exploration and curriculum goal reaching"
)]
struct Cli {
    /// Worker threads. Outputs do not depend on it; 1 is the reference.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Produce a state set with the diffusion or a baseline explorer.
    Explore(explore::ExploreArgs),
    /// Cross-entropy upper bound of a state set.
    Entropy(measure::EntropyArgs),
    /// Visitation grid as PGM, CSV or JSON.
    Grid(measure::GridArgs),
    /// Curriculum goal-reaching training.
    Train(goalcmd::TrainArgs),
    /// Success-versus-threshold curve of one policy.
    Eval(goalcmd::EvalArgs),
    /// Policies by evaluation sets, scored by entropy-weighted AUC.
    CrossEval(goalcmd::CrossEvalArgs),
    /// Pick a density estimator by summed normalized held-out scores.
    SelectModel(measure::SelectArgs),
    /// Track a subsampled demonstration with a trained policy.
    Imitate(goalcmd::ImitateArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Explore(_) => "explore",
            Command::Entropy(_) => "entropy",
            Command::Grid(_) => "grid",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::CrossEval(_) => "cross-eval",
            Command::SelectModel(_) => "select-model",
            Command::Imitate(_) => "imitate",
        }
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> anyhow::Result<()> {
    if cli.workers == 0 {
        return Err(Failure::Usage("--workers must be at least 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()?;
    let mut run = Run::new(cli.command.name(), argv, cli.workers);
    match &cli.command {
        Command::Explore(a) => explore::run(a, &mut run)?,
        Command::Entropy(a) => measure::entropy(a, &mut run)?,
        Command::Grid(a) => measure::grid(a, &mut run)?,
        Command::Train(a) => goalcmd::train(a, &mut run)?,
        Command::Eval(a) => goalcmd::eval(a, &mut run)?,
        Command::CrossEval(a) => goalcmd::cross_eval(a, &mut run)?,
        Command::SelectModel(a) => measure::select(a, &mut run)?,
        Command::Imitate(a) => goalcmd::imitate(a, &mut run)?,
    }
    run.finish()?;
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first).to_string();
            eprintln!(
                "{}",
                serde_json::to_string(&ErrorRecord::new("usage", EXIT_USAGE, first)).expect("plain record")
            );
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match execute(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = classify(&e);
            record.emit();
            ExitCode::from(record.exit_code)
        }
    }
}
