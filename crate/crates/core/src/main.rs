use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use graphtune::runner::{inspect_corpus, report_only, run_study, RunMode, RunnerError, StudyContext, StudySettings};
use graphtune::space::{PipelineConfig, FIELD_NAMES};
use graphtune::stores::TrialStores;

#[derive(Parser)]
#[command(name = "graphtune", version, about = "Tune a knowledge-graph QA pipeline with TPE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run, resume or report a study.
    #[command(subcommand)]
    Study(StudyCommand),
    /// Work with single trials.
    #[command(subcommand)]
    Trial(TrialCommand),
    /// Inspect the benchmark and its split.
    #[command(subcommand)]
    Corpus(CorpusCommand),
}

#[derive(Subcommand)]
enum StudyCommand {
    /// Start a study from scratch.
    Run {
        #[command(flatten)]
        common: Common,
        /// Replace an existing journal in the output directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Continue the journal in the output directory.
    Resume {
        #[command(flatten)]
        common: Common,
    },
    /// Rewrite report artifacts from an existing journal.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum TrialCommand {
    /// Evaluate one configuration without touching the study journal.
    RunOne {
        #[command(flatten)]
        common: Common,
        /// Pipeline parameter, e.g. `top_k=8`; unset parameters keep the baseline.
        #[arg(long = "param", value_name = "FIELD=VALUE")]
        params: Vec<String>,
        /// Question set to answer.
        #[arg(long, value_enum, default_value_t = QuestionSet::Train)]
        questions: QuestionSet,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Print split and document statistics.
    Inspect {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum QuestionSet {
    Train,
    Test,
}

#[derive(Args)]
struct Common {
    /// Study file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override any key of the study file, e.g. `seeds.optimizer=7`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `study.metric`.
    #[arg(long)]
    metric: Option<String>,
    /// Shorthand for `study.n_trials`.
    #[arg(long)]
    n_trials: Option<usize>,
    /// Shorthand for `study.backend`.
    #[arg(long)]
    backend: Option<String>,
    /// Shorthand for `study.output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn settings(&self) -> Result<StudySettings, RunnerError> {
        let mut overrides = self.overrides.clone();
        if let Some(m) = &self.metric {
            overrides.push(format!("study.metric=\"{m}\""));
        }
        if let Some(n) = self.n_trials {
            overrides.push(format!("study.n_trials={n}"));
        }
        if let Some(b) = &self.backend {
            overrides.push(format!("study.backend=\"{b}\""));
        }
        let mut settings = StudySettings::load(&self.config, &overrides)?;
        if let Some(dir) = &self.output_dir {
            settings.output_dir = dir.clone();
            settings.replay_dir = dir.join("replay");
        }
        Ok(settings)
    }
}

fn parse_params(params: &[String], base: &PipelineConfig) -> Result<PipelineConfig, RunnerError> {
    let mut config = base.clone();
    for p in params {
        let (field, value) = p.split_once('=').ok_or_else(|| RunnerError::Config(format!("--param `{p}` is not FIELD=VALUE")))?;
        if !FIELD_NAMES.contains(&field) {
            return Err(RunnerError::Config(format!("unknown parameter `{field}` (expected one of {})", FIELD_NAMES.join(", "))));
        }
        let value = match value.parse::<i64>() {
            Ok(i) => graphtune::space::ParamValue::Int(i),
            Err(_) => graphtune::space::ParamValue::Symbol(value.to_string()),
        };
        config.set(field, value).map_err(|e| RunnerError::Config(e.to_string()))?;
    }
    Ok(config)
}

fn print_study(report: &graphtune::runner::StudyReport) {
    println!("best trial {} of {}: {}", report.best_trial, report.n_trials, report.best_config);
    println!(
        "train   {}: baseline {:.3} -> optimized {:.3} ({})",
        report.metric.label(),
        report.baseline_train.mean,
        report.train.mean,
        graphtune::runner::report::format_gain(report.train_gain)
    );
    println!(
        "holdout {}: baseline {:.3} -> optimized {:.3} ({})",
        report.metric.label(),
        report.baseline_holdout.mean,
        report.holdout.mean,
        graphtune::runner::report::format_gain(report.holdout_gain)
    );
}

fn run(cli: Cli) -> Result<(), RunnerError> {
    match cli.command {
        Command::Study(cmd) => {
            let (common, mode) = match &cmd {
                StudyCommand::Run { common, overwrite } => (common, Some(RunMode::Fresh { overwrite: *overwrite })),
                StudyCommand::Resume { common } => (common, Some(RunMode::Resume)),
                StudyCommand::Report { common } => (common, None),
            };
            let ctx = StudyContext::new(common.settings()?)?;
            let report = match mode {
                Some(mode) => run_study(&ctx, mode)?,
                None => report_only(&ctx)?,
            };
            print_study(&report);
            println!("artifacts in {}", ctx.settings.output_dir.display());
        }
        Command::Trial(TrialCommand::RunOne { common, params, questions }) => {
            let settings = common.settings()?;
            let config = parse_params(&params, &settings.baseline)?;
            let ctx = StudyContext::new(settings)?;
            let set = match questions {
                QuestionSet::Train => &ctx.split.train,
                QuestionSet::Test => &ctx.split.test,
            };
            let ev = ctx.run_trial(&mut TrialStores::new(), &config, set)?;
            println!("config: {config}");
            for (a, s) in ev.answers.iter().zip(&ev.per_question) {
                println!("{}\t{:.3}\t{}", a.instance_id, s.value, a.prediction.replace('\n', " "));
            }
            println!("{}: {:.4}", ctx.settings.metric.label(), ev.objective);
        }
        Command::Corpus(CorpusCommand::Inspect { common }) => {
            println!("{}", inspect_corpus(&common.settings()?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
