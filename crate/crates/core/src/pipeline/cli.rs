//! Command-line front end. [`run`] parses arguments, executes one command
//! and returns the process exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Role;
use crate::error::{Error, Result};
use crate::pretrain::PretrainConfig;
use crate::relex::DEFAULT_THRESHOLD;
use crate::training::TrainConfig;

use super::commands;
use super::predict::format_score;
use super::project::Project;
use super::selftrain::SelfTrainConfig;

#[derive(Debug, Parser)]
#[command(name = "aoml", version, about = "Aspect/opinion extraction from noisy product reviews")]
pub struct Cli {
    /// Project directory.
    #[arg(long, short = 'p', global = true, default_value = ".")]
    pub project: PathBuf,
    /// Seed for splits, initialization and sampling.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    /// Start from the encoder of checkpoints/mlm.aoml.
    #[arg(long)]
    pub warm_start: bool,
    #[arg(long)]
    pub freeze_encoder: bool,
    /// Validate on the training documents.
    #[arg(long)]
    pub overfit: bool,
}

#[derive(Debug, Args)]
pub struct SelfTrainArgs {
    #[arg(long, default_value_t = 0.9)]
    pub tau_ner: f32,
    #[arg(long, default_value_t = 0.9)]
    pub tau_rel: f32,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    #[arg(long, default_value_t = 50)]
    pub max_added: usize,
    #[arg(long)]
    pub ner_epochs: Option<usize>,
    #[arg(long)]
    pub rel_epochs: Option<usize>,
    /// Queue passing documents for human review instead of adopting them.
    #[arg(long)]
    pub queue: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import an annotation-tool export into the corpus and annotations.
    Convert {
        #[arg(long)]
        input: PathBuf,
    },
    /// Build vocab/vocab.json from labeled and unlabeled text.
    BuildVocab {
        #[arg(long, default_value_t = 1)]
        min_frequency: usize,
        #[arg(long)]
        keep_case: bool,
    },
    /// Masked-language-model pretraining of the encoder.
    Pretrain {
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f32,
    },
    /// Train the aspect/opinion tagger.
    TrainNer(TrainArgs),
    /// Train the ASP-OPI relation scorer.
    TrainRel(TrainArgs),
    /// Score the models on the gold set, or a predictions file against it.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Extract aspect/opinion pairs and print them as a table.
    Predict {
        /// JSONL corpus to read; defaults to corpus/unlabeled.jsonl.
        #[arg(long, conflicts_with = "text")]
        input: Option<PathBuf>,
        /// Review text to predict on; repeatable.
        #[arg(long)]
        text: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f32,
    },
    /// Pseudo-label unlabeled reviews and retrain.
    Selftrain(SelfTrainArgs),
    /// Serve the annotation and review API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

fn train_config(base: TrainConfig, args: &TrainArgs, seed: u64, project: &Project) -> TrainConfig {
    TrainConfig {
        epochs: args.epochs.unwrap_or(base.epochs),
        lr: args.lr,
        seed,
        validation_fraction: args.validation_fraction,
        warm_start: args.warm_start.then(|| project.checkpoint_path(Role::Mlm)),
        freeze_encoder: args.freeze_encoder,
        overfit: args.overfit,
        ..base
    }
}

fn print_curve_summary(out: &mut impl Write, run: &str, curve: &crate::metrics::TrainingCurve) -> std::io::Result<()> {
    if let Some(best) = curve.best_epoch() {
        writeln!(
            out,
            "run {run}: best epoch {} P={:.4} R={:.4} F1={:.4}",
            best.epoch, best.precision, best.recall, best.f1
        )?;
    }
    Ok(())
}

/// Executes a parsed command, writing its report to `out`.
pub fn execute(cli: Cli, out: &mut impl Write) -> Result<()> {
    let project = Project::new(&cli.project);
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    if let Command::Serve { addr } = &cli.command {
        let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
        return runtime.block_on(crate::service::serve(project, addr));
    }
    if let Command::Evaluate { predictions } = &cli.command {
        match predictions {
            Some(path) => {
                let score = commands::evaluate_file(&project, path)?;
                writeln!(out, "{}", format_score(&score)).map_err(io)?;
            }
            None => {
                let e = commands::evaluate(&project)?;
                writeln!(out, "NER {}", format_score(&e.ner)).map_err(io)?;
                writeln!(out, "REL {}", format_score(&e.rel)).map_err(io)?;
            }
        }
        return Ok(());
    }
    let _lock = project.lock()?;
    match cli.command {
        Command::Convert { input } => {
            let s = commands::convert(&project, &input)?;
            writeln!(out, "converted {} documents ({} relations reversed)", s.documents, s.flipped).map_err(io)?;
        }
        Command::BuildVocab {
            min_frequency,
            keep_case,
        } => {
            let vocab = commands::build_vocabulary(&project, min_frequency, !keep_case)?;
            writeln!(out, "vocabulary of {} entries", vocab.len()).map_err(io)?;
        }
        Command::Pretrain { epochs, lr } => {
            let config = PretrainConfig {
                epochs,
                lr,
                seed: cli.seed,
                ..PretrainConfig::default()
            };
            let (run, losses) = commands::pretrain(&project, &config)?;
            writeln!(
                out,
                "run {run}: masked-token loss {:.4} -> {:.4}",
                losses[0],
                losses[losses.len() - 1]
            )
            .map_err(io)?;
        }
        Command::TrainNer(args) => {
            let config = train_config(TrainConfig::ner(), &args, cli.seed, &project);
            let (run, curve) = commands::train_ner_command(&project, &config)?;
            print_curve_summary(out, &run, &curve).map_err(io)?;
        }
        Command::TrainRel(args) => {
            let config = train_config(TrainConfig::rel(), &args, cli.seed, &project);
            let (run, curve) = commands::train_rel_command(&project, &config)?;
            print_curve_summary(out, &run, &curve).map_err(io)?;
        }
        Command::Predict { input, text, threshold } => {
            let docs = commands::prediction_input(&project, input.as_deref(), &text)?;
            let output = commands::predict(&project, &docs, threshold)?;
            write!(out, "{}", output.table).map_err(io)?;
            writeln!(out, "{} relations written to {}", output.records.len(), output.path.display()).map_err(io)?;
        }
        Command::Selftrain(args) => {
            let config = SelfTrainConfig {
                tau_ner: args.tau_ner,
                tau_rel: args.tau_rel,
                rounds: args.rounds,
                max_added_per_round: args.max_added,
            };
            if args.queue {
                let ids = commands::queue_for_review(&project, &config)?;
                writeln!(out, "queued {} documents for review", ids.len()).map_err(io)?;
            } else {
                let mut ner = TrainConfig {
                    seed: cli.seed,
                    ..TrainConfig::ner()
                };
                let mut rel = TrainConfig {
                    seed: cli.seed,
                    ..TrainConfig::rel()
                };
                ner.epochs = args.ner_epochs.unwrap_or(ner.epochs);
                rel.epochs = args.rel_epochs.unwrap_or(rel.epochs);
                let report = commands::selftrain(&project, &config, &ner, &rel)?;
                writeln!(
                    out,
                    "run {}: adopted {} documents{}",
                    report.run,
                    report.audit.len(),
                    if report.retrained { ", models retrained" } else { ", models unchanged" }
                )
                .map_err(io)?;
            }
        }
        Command::Serve { .. } | Command::Evaluate { .. } => unreachable!("handled above"),
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Usage errors
/// exit with 2, failures with 1.
pub fn run<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("aoml").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_command_is_a_usage_error() {
        let (code, _, err) = run_args(&["frobnicate"]);
        assert_eq!(code, 2);
        assert!(err.contains("frobnicate"));
    }

    #[test]
    fn every_command_takes_a_seed() {
        for cmd in [
            "convert --input x",
            "build-vocab",
            "pretrain",
            "train-ner",
            "train-rel",
            "evaluate",
            "predict",
            "selftrain",
            "serve",
        ] {
            let mut args = vec!["aoml"];
            args.extend(cmd.split(' '));
            args.extend(["--seed", "3"]);
            let cli = Cli::try_parse_from(&args).unwrap_or_else(|e| panic!("{cmd}: {e}"));
            assert_eq!(cli.seed, 3);
        }
    }

    #[test]
    fn missing_files_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let project = dir.path().to_str().unwrap();
        let (code, _, err) = run_args(&["build-vocab", "-p", project]);
        assert_eq!(code, 1);
        assert!(err.contains("corpus.jsonl"), "{err}");
        assert_eq!(err.lines().count(), 1);
    }
}
