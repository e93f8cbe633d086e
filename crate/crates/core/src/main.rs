use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use modechoice::config::PipelineConfig;
use modechoice::evaluation::{self, EvaluationReport};
use modechoice::gateway::BackendKind;
use modechoice::pipeline::{Pipeline, PipelineError};

#[derive(Parser)]
#[command(name = "modechoice", version, about = "Zero-shot travel mode choice prediction with LLMs and classical benchmarks")]
struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the sampling seed and every benchmark seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model backend: http_chat or mock.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    /// Caps the number of evaluated test situations.
    #[arg(long, global = true)]
    max_samples: Option<usize>,
    /// Output directory for stage artifacts, models and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the survey file and report exclusions.
    Ingest,
    /// Draw the balanced train/test split.
    Sample,
    /// Print the prompt for one test situation.
    DumpPrompt {
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        id: Option<String>,
    },
    /// Query the model for every evaluated test situation.
    PredictLlm,
    /// Fit MNL, RF and NN and save them.
    FitBench {
        /// Predict with saved models instead of fitting.
        #[arg(long)]
        load_models: Option<PathBuf>,
    },
    /// Score every predictor and write the report.
    Evaluate,
    /// Run every stage end to end.
    Run,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let mut cfg = PipelineConfig::default();
            cfg.resolve_paths(&std::env::current_dir().unwrap_or_default());
            cfg
        }
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(kind) = cli.backend {
        cfg.llm.backend.backend_kind = kind;
    }
    if cli.max_samples.is_some() {
        cfg.max_samples = cli.max_samples;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn print_report(report: &EvaluationReport, pipeline: &Pipeline) {
    print!("{}", report.render_text());
    println!("report written to {}", pipeline.report_dir().display());
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let pipeline = Pipeline::new(load_config(&cli)?)?;
    match cli.command {
        Command::Ingest => {
            let stage = pipeline.ingest()?;
            let s = &stage.value.summary;
            println!(
                "kept {} of {} rows (no choice {}, unknown choice code {}, unavailable alternative {}, invalid attribute {})",
                s.kept, s.input_rows, s.no_choice, s.unknown_choice_code, s.unavailable_alternative, s.invalid_attribute
            );
            println!("artifact: {}", stage.path.display());
        }
        Command::Sample => {
            let stage = pipeline.sample()?;
            let train = modechoice::dataset::class_counts(&stage.value.train);
            let test = modechoice::dataset::class_counts(&stage.value.test);
            println!("train {} (Train/Car/Swissmetro {:?})", stage.value.train.len(), train);
            println!("test  {} (Train/Car/Swissmetro {:?})", stage.value.test.len(), test);
            println!("artifact: {}", stage.path.display());
        }
        Command::DumpPrompt { index, id } => {
            let prompt = pipeline.dump_prompt(index, id.as_deref())?;
            println!("{}", prompt.full_text);
        }
        Command::PredictLlm => {
            let stage = pipeline.predict_llm()?;
            let failed = stage.value.iter().filter(|o| o.error.is_some()).count();
            println!("{} replies, {} request failures", stage.value.len(), failed);
            println!("artifact: {}", stage.path.display());
        }
        Command::FitBench { load_models } => {
            let bench = match load_models {
                Some(dir) => pipeline.load_models(&dir)?,
                None => {
                    let stage = pipeline.fit_bench()?;
                    for path in pipeline.save_models(&stage.value)? {
                        println!("saved {}", path.display());
                    }
                    stage.value
                }
            };
            let split = pipeline.sample()?;
            let actual: Vec<_> = pipeline.evaluated_test_set(&split.value).iter().map(|s| s.chosen).collect();
            for (kind, pred) in &bench.predictions {
                let acc = evaluation::accuracy(pred, &actual).map_err(evaluation::EvalError::from)?;
                let f1 = evaluation::weighted_f1(pred, &actual).map_err(evaluation::EvalError::from)?;
                println!("{:<4} accuracy {:.3}  F1 {:.3}", kind.name(), acc, f1);
            }
        }
        Command::Evaluate | Command::Run => {
            let report = pipeline.evaluate()?;
            if let Ok(stage) = pipeline.fit_bench() {
                pipeline.save_models(&stage.value)?;
            }
            print_report(&report, &pipeline);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "modechoice=info".into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
