use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ambispot::cli::{self, CliError, RunConfig};
use ambispot::synth::SceneConfig;

#[derive(Parser)]
#[command(
    name = "ambispot",
    version,
    about = "Ambiguity-aware text spotting post-processing"
)]
struct Cli {
    /// Worker threads (defaults to machine parallelism).
    #[arg(long, global = true, env = "AMBISPOT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a character n-gram model on a corpus (one transcript per line).
    LmTrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        smoothing_k: Option<f64>,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Recognize and select text lines from detector output.
    Spot {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Ignore the language model (visual scores only).
        #[arg(long)]
        no_lm: bool,
        #[command(flatten)]
        pipeline: PipelineFlags,
    },
    /// Score spotted lines against ground truth.
    Eval {
        #[arg(long)]
        spotted: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print a plain-text table instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Sample ambiguous images and report line statistics.
    Curate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_ids: PathBuf,
        #[arg(long)]
        out_stats: PathBuf,
    },
    /// Ambiguity statistics over a whole ground-truth file.
    Stats {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    Gen {
        /// Scene template (JSON); defaults to the built-in grid template.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write the built-in pseudo-language corpus.
    Corpus {
        #[arg(long, default_value_t = 20_000)]
        lines: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PipelineFlags {
    #[arg(long)]
    thr_score: Option<f64>,
    #[arg(long)]
    thr_nms: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    final_nms: Option<f64>,
    #[arg(long)]
    final_score_thr: Option<f64>,
    #[arg(long)]
    thr_match: Option<f64>,
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string(value).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    ambispot::par::init_threads(cli.threads);
    match cli.command {
        Command::LmTrain {
            corpus,
            out,
            config,
            n,
            smoothing_k,
            max_len,
        } => {
            let cfg = RunConfig::load(config.as_deref())?.overlay(RunConfig {
                n,
                smoothing_k,
                max_len,
                ..RunConfig::default()
            });
            let summary = cli::cmd_lm_train(&corpus, &out, cfg.ngram())?;
            print_json(&summary)
        }
        Command::Spot {
            detections,
            model,
            config,
            out,
            no_lm,
            pipeline,
        } => {
            let flags = RunConfig {
                thr_score: pipeline.thr_score,
                thr_nms: pipeline.thr_nms,
                lambda: pipeline.lambda,
                final_nms: pipeline.final_nms,
                final_score_thr: pipeline.final_score_thr,
                thr_match: pipeline.thr_match,
                use_lm: no_lm.then_some(false),
                ..RunConfig::default()
            };
            let cfg = RunConfig::load(config.as_deref())?
                .overlay(flags)
                .pipeline()?;
            let doc = cli::cmd_spot(&detections, model.as_deref(), &cfg, &out)?;
            let lines: usize = doc.images.iter().map(|i| i.lines.len()).sum();
            print_json(&serde_json::json!({ "images": doc.images.len(), "lines": lines }))
        }
        Command::Eval {
            spotted,
            gt,
            out,
            table,
        } => {
            let report = cli::cmd_eval(&spotted, &gt, out.as_deref())?;
            if table {
                println!("{}", report.global);
                Ok(())
            } else {
                print_json(&report)
            }
        }
        Command::Curate {
            gt,
            n,
            seed,
            config,
            out_ids,
            out_stats,
        } => {
            let cfg = RunConfig::load(config.as_deref())?.overlay(RunConfig {
                seed,
                ..RunConfig::default()
            });
            let result = cli::cmd_curate(
                &gt,
                n,
                cfg.seed.unwrap_or(0),
                &cfg.ambiguity()?,
                &out_ids,
                &out_stats,
            )?;
            print_json(&serde_json::json!({ "selected": result.ids.len(), "stats": result.stats }))
        }
        Command::Stats { gt, config } => {
            let cfg = RunConfig::load(config.as_deref())?;
            print_json(&cli::cmd_stats(&gt, &cfg.ambiguity()?)?)
        }
        Command::Gen {
            template,
            n,
            seed,
            out_dir,
        } => {
            let template: SceneConfig = match template {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                    serde_json::from_str(&text)
                        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
                }
                None => SceneConfig::default(),
            };
            print_json(&cli::cmd_gen(&template, n, seed, &out_dir)?)
        }
        Command::Corpus { lines, seed, out } => {
            let written = cli::cmd_corpus(lines, seed, &out)?;
            print_json(&serde_json::json!({ "lines": written }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let err = CliError::Input(e.to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
