use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use s2s_cli::{
    cmd_bench, cmd_distill, cmd_eval, cmd_gen_data, cmd_pseudo, cmd_train_teacher, Config,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "s2s",
    about = "Seq2seq distillation experiments: train teachers, extract and distill students, generate pseudo-labels, score with ROUGE, and benchmark inference cost"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (flat key=value lines, # comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "s2s-out")]
    out: PathBuf,
    /// Random seed (shorthand for --set seed=N).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fine-tune a teacher model from scratch on a dataset.
    TrainTeacher(CommonArgs),
    /// Extract a student from a teacher and train it with sft, kd, or pl.
    Distill(CommonArgs),
    /// Generate a pseudo-label file with teacher beam search.
    Pseudo(CommonArgs),
    /// Score a checkpoint on a dataset with ROUGE.
    Eval(CommonArgs),
    /// Time sampled architectures and fit the inference-cost regression.
    Bench(CommonArgs),
    /// Generate a synthetic train/val/test dataset.
    GenData(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::TrainTeacher(a)
            | Command::Distill(a)
            | Command::Pseudo(a)
            | Command::Eval(a)
            | Command::Bench(a)
            | Command::GenData(a) => a,
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let args = cli.command.common();
    let mut cfg = Config::load(args.config.as_deref(), &args.sets)?;
    if let Some(seed) = args.seed {
        cfg.set("seed", seed.to_string());
    }
    let out = &args.out;
    match &cli.command {
        Command::TrainTeacher(_) => {
            let result = cmd_train_teacher(&cfg, out)?;
            println!(
                "teacher checkpoint: {} (final val loss {:.4}, {} evals, stop {:?})",
                result.checkpoint.display(),
                result.final_val_loss,
                result.history.evals.len(),
                result.history.stop_reason,
            );
        }
        Command::Distill(_) => {
            let result = cmd_distill(&cfg, out)?;
            println!("student checkpoint: {}", result.checkpoint.display());
            println!("{}", result.report.report_line());
            print!("{}", result.result_row);
        }
        Command::Pseudo(_) => {
            let result = cmd_pseudo(&cfg, out)?;
            println!(
                "pseudo-label file: {} ({} records)",
                result.file.display(),
                result.n_records
            );
        }
        Command::Eval(_) => {
            let result = cmd_eval(&cfg, out)?;
            println!("{}", result.report_line);
        }
        Command::Bench(_) => {
            let result = cmd_bench(&cfg, out)?;
            println!("timing table: {}", result.csv.display());
            println!("regression report: {}", result.regression.display());
            print!("{}", result.raw_fit.report("raw_ms"));
        }
        Command::GenData(_) => {
            let result = cmd_gen_data(&cfg, out)?;
            println!(
                "wrote {}, {}, {}",
                result.train.display(),
                result.val.display(),
                result.test.display()
            );
        }
    }
    Ok(())
}
