use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use refgame_cli::config::SweepConfig;
use refgame_cli::corpus_io::RES_FILE;
use refgame_cli::error::CliError;
use refgame_cli::export::run_export;
use refgame_cli::extract::{run_extract, ExtractMode, ExtractOptions};
use refgame_cli::provider::RoutingProvider;
use refgame_cli::report::run_metrics;
use refgame_cli::serve::{run_serve, ServeOptions};
use refgame_cli::simulate::{live_provider, run_simulate, SimulateOptions};
use refgame_core::game::Condition;
use refgame_core::participants::{CompletionProvider, ScriptedBehavior, DEFAULT_MAX_ATTEMPTS};
use refgame_core::synthetic::SyntheticParams;
use refgame_server::DEFAULT_EXPIRY_MIN;

#[derive(Parser)]
#[command(name = "refgame", version, about = "Basket-matching reference game: simulations, service, corpus tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run agent-only sessions and write a corpus directory.
    Simulate {
        /// Sweep config (TOML). Without one, a single pair of perfect scripted agents.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sessions per condition.
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Offline mock providers and the virtual clock (deterministic output).
        #[arg(long)]
        mock: bool,
        /// Sessions run at once.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        turn_cap: Option<u32>,
        /// Output directory (default: the config's `out`, else `corpus`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute per-dialogue metrics, aggregates and report tables.
    Metrics {
        /// Corpus directory or dialogues JSONL file.
        #[arg(long)]
        corpus: PathBuf,
        /// RE sets (default: the corpus's res.jsonl).
        #[arg(long)]
        res: Option<PathBuf>,
        /// Report directory (default: <corpus>/reports).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract referring expressions from a corpus.
    Extract {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "tagged")]
        mode: ExtractMode,
        /// Model id for llm mode.
        #[arg(long)]
        model: Option<String>,
        /// Config file whose [[providers]] serve the model.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Offline extractor in llm mode.
        #[arg(long)]
        mock: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
        max_attempts: usize,
        #[arg(long)]
        jobs: Option<usize>,
        /// Output JSONL (default: <corpus>/res.jsonl or res_llm.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Gold RE sets; prints the mean ROUGE-L F1 against them.
        #[arg(long)]
        validate: Option<PathBuf>,
    },
    /// Run the session service for human participants.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        /// Minutes an unpaired session waits for its partner.
        #[arg(long, default_value_t = DEFAULT_EXPIRY_MIN)]
        session_expiry_min: u64,
        /// Basket images, served under /assets.
        #[arg(long)]
        assets_dir: Option<PathBuf>,
        /// Browser client bundle, served at /.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Config file whose [[providers]] serve LLM partners.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Mock providers for LLM partners.
        #[arg(long)]
        mock: bool,
    },
    /// Export the service's stored sessions as a corpus directory.
    Export {
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic tagged corpus with designed RE shrinkage and reuse.
    Synthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 25)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "HH")]
        label: String,
        #[arg(long, default_value_t = 0.8)]
        shrink: f64,
        #[arg(long, default_value_t = 0.7)]
        reuse: f64,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn corpus_dir(corpus: &std::path::Path) -> PathBuf {
    if corpus.is_dir() {
        corpus.to_path_buf()
    } else {
        corpus.parent().map_or_else(|| PathBuf::from("."), std::path::Path::to_path_buf)
    }
}

fn providers_from(config: Option<&PathBuf>) -> Result<Option<Arc<dyn CompletionProvider>>, CliError> {
    let Some(path) = config else {
        return Ok(None);
    };
    let sweep = SweepConfig::load(path)?;
    let routing = RoutingProvider::from_configs(&sweep.providers)?;
    Ok((!routing.is_empty()).then(|| Arc::new(routing) as Arc<dyn CompletionProvider>))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Simulate {
            config,
            pairs,
            seed,
            mock,
            jobs,
            turn_cap,
            out,
        } => {
            let mut sweep = match &config {
                Some(path) => SweepConfig::load(path)?,
                None => SweepConfig::scripted("oracle", 1, 0, ScriptedBehavior::Perfect),
            };
            sweep.pairs = pairs.unwrap_or(sweep.pairs);
            sweep.seed = seed.unwrap_or(sweep.seed);
            sweep.turn_cap = turn_cap.or(sweep.turn_cap);
            if !mock && config.is_some() {
                live_provider(&sweep)?;
            }
            let opts = SimulateOptions {
                jobs: jobs.or(sweep.jobs).unwrap_or_else(default_jobs),
                out: out.or_else(|| sweep.out.clone()).unwrap_or_else(|| PathBuf::from("corpus")),
                mock,
                sweep,
            };
            let summary = run_simulate(&opts)?;
            println!("{}", summary.render());
            println!("corpus written to {}", opts.out.display());
            if summary.failed == summary.sessions {
                return Err(CliError::Failed("every session failed".into()));
            }
            Ok(summary.exit_code())
        }
        Command::Metrics { corpus, res, out } => {
            let out = out.unwrap_or_else(|| corpus_dir(&corpus).join("reports"));
            let report = run_metrics(&corpus, res.as_deref(), &out)?;
            for w in &report.warnings {
                tracing::warn!("{w}");
            }
            println!("{}", report.render_grid());
            for p in &report.written {
                println!("wrote {}", p.display());
            }
            Ok(0)
        }
        Command::Extract {
            corpus,
            mode,
            model,
            config,
            mock,
            max_attempts,
            jobs,
            out,
            validate,
        } => {
            let provider: Option<Arc<dyn CompletionProvider>> = match mode {
                ExtractMode::Tagged => None,
                ExtractMode::Llm if mock => Some(Arc::new(refgame_core::corpus::TaggedExtractionProvider)),
                ExtractMode::Llm => Some(providers_from(config.as_ref())?.ok_or_else(|| {
                    CliError::Usage("llm extraction needs --config with [[providers]] or --mock".into())
                })?),
            };
            let model_id = match (mode, model) {
                (_, Some(m)) => m,
                (ExtractMode::Llm, None) if !mock => return Err(CliError::Usage("llm extraction needs --model".into())),
                _ => "mock-extractor".to_string(),
            };
            let file = match mode {
                ExtractMode::Tagged => RES_FILE,
                ExtractMode::Llm => "res_llm.jsonl",
            };
            let opts = ExtractOptions {
                out: out.unwrap_or_else(|| corpus_dir(&corpus).join(file)),
                corpus,
                mode,
                model_id,
                max_attempts,
                jobs: jobs.unwrap_or_else(default_jobs),
                validate,
            };
            let report = run_extract(&opts, provider.as_deref())?;
            println!(
                "extracted {} RE sets ({} failed, {} retries) to {}",
                report.sets.len(),
                report.failures.len(),
                report.retries,
                opts.out.display()
            );
            for f in &report.failures {
                println!("  {} round {}: {}", f.pair_id, f.round_index, f.error);
            }
            if let Some(f1) = report.mean_f1 {
                println!("mean ROUGE-L F1 against gold: {f1:.4}");
            }
            Ok(report.exit_code())
        }
        Command::Serve {
            port,
            bind,
            data_dir,
            session_expiry_min,
            assets_dir,
            static_dir,
            config,
            mock,
        } => {
            let live = if mock { None } else { providers_from(config.as_ref())? };
            let opts = ServeOptions {
                port,
                bind,
                data_dir,
                session_expiry_min,
                assets_dir,
                static_dir,
                mock,
            };
            run_serve(&opts, live)?;
            Ok(0)
        }
        Command::Export { data_dir, out } => {
            let report = run_export(&data_dir, &out)?;
            println!(
                "exported {} sessions, {} dialogues, {} RE sets to {}",
                report.sessions,
                report.dialogues,
                report.res_sets,
                out.display()
            );
            for (id, e) in &report.skipped {
                println!("  skipped {id}: {e}");
            }
            Ok(u8::from(!report.skipped.is_empty()))
        }
        Command::Synthetic {
            out,
            pairs,
            seed,
            label,
            shrink,
            reuse,
        } => {
            if !(0.0..=1.0).contains(&reuse) || !(shrink > 0.0 && shrink <= 1.0) {
                return Err(CliError::Usage("reuse must be in [0, 1] and shrink in (0, 1]".into()));
            }
            let params = SyntheticParams {
                label,
                condition: Condition::HH,
                n_pairs: pairs,
                shrink,
                reuse,
                seed,
                ..Default::default()
            };
            let n = refgame_cli::run_synthetic(&params, &out)?;
            println!("wrote {n} synthetic dialogues to {}", out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
