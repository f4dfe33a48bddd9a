use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctpe::exec::{limit_threads, Execution};
use ctpe_cli::*;

#[derive(Parser)]
#[command(name = "ctpe", version, about = "Coupled text pair embeddings: train, embed, retrieve, evaluate")]
struct Cli {
    /// Cap on worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic topic corpus and its judgments.
    Generate(GenerateArgs),
    /// Tokenize and segment a raw corpus.
    Preprocess(PreprocessArgs),
    /// Train the twin encoder (`--epochs 0` keeps the initialization).
    Train(TrainArgs),
    /// Embed every coupled pair with a checkpoint.
    Embed(EmbedArgs),
    /// Rank candidates for every test document.
    Retrieve(RetrieveArgs),
    /// Score a run file against judgments.
    Evaluate(EvaluateArgs),
    /// Retrain and evaluate across segmentation positions.
    SweepPos(SweepArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    let exec = match cli.threads {
        Some(0) => return Err(CliError::Config("--threads must be at least 1".into())),
        Some(1) => Execution::Sequential,
        Some(n) => {
            limit_threads(n);
            Execution::Parallel
        }
        None => Execution::Parallel,
    };
    match cli.command {
        Command::Generate(a) => {
            cmd_generate(&a)?;
        }
        Command::Preprocess(a) => {
            cmd_preprocess(&a)?;
        }
        Command::Train(a) => {
            let (_, report) = cmd_train(&a, exec)?;
            println!(
                "best epoch {} of {} ({:?}); final mean loss {}",
                report.best_epoch,
                report.stopped_epoch,
                report.stop_reason,
                report
                    .epochs
                    .last()
                    .map(|e| format!("{:.6}", e.mean_loss))
                    .unwrap_or_else(|| "n/a".into())
            );
        }
        Command::Embed(a) => {
            let store = cmd_embed(&a, exec)?;
            println!("embedded {} documents", store.len());
        }
        Command::Retrieve(a) => {
            let lists = cmd_retrieve(&a, exec)?;
            println!("ranked {} queries", lists.len());
        }
        Command::Evaluate(a) => {
            let report = cmd_evaluate(&a, exec)?;
            print!("{}", report.render_text());
        }
        Command::SweepPos(a) => {
            let rows = cmd_sweep_pos(&a, exec)?;
            print!("{}", render_sweep(&rows, a.topn));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
