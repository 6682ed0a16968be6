//! Batch referring-expression extraction.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use refgame_core::corpus::{extract_res_llm, extract_res_tagged, validate_corpus, Dialogue, ReferringExpressionSet};
use refgame_core::participants::{CompletionProvider, CompletionRequest, ProviderError};

use crate::corpus_io::{load_dialogues, read_res, write_lines};
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ExtractMode {
    /// Read the tagged phrases scripted directors emit.
    Tagged,
    /// Ask a model with the extraction prompt.
    Llm,
}

#[derive(Clone, Debug)]
pub struct ExtractOptions {
    pub corpus: PathBuf,
    pub mode: ExtractMode,
    pub model_id: String,
    pub max_attempts: usize,
    pub jobs: usize,
    pub out: PathBuf,
    /// Gold RE sets to score the extraction against.
    pub validate: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractFailure {
    pub pair_id: String,
    pub round_index: u32,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractReport {
    pub sets: Vec<ReferringExpressionSet>,
    pub failures: Vec<ExtractFailure>,
    /// Provider calls beyond the first, over all dialogues.
    pub retries: usize,
    pub mean_f1: Option<f64>,
}

impl ExtractReport {
    pub fn exit_code(&self) -> u8 {
        u8::from(!self.failures.is_empty())
    }
}

/// Counts the calls made for one dialogue.
struct Counted<'a> {
    inner: &'a dyn CompletionProvider,
    calls: AtomicUsize,
}

impl CompletionProvider for Counted<'_> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(request)
    }
}

fn extract_one(
    d: &Dialogue,
    opts: &ExtractOptions,
    provider: Option<&dyn CompletionProvider>,
) -> (Result<ReferringExpressionSet, String>, usize) {
    match (opts.mode, provider) {
        (ExtractMode::Tagged, _) => (extract_res_tagged(d).map_err(|e| e.to_string()), 0),
        (ExtractMode::Llm, None) => (Err("no completion provider configured".into()), 0),
        (ExtractMode::Llm, Some(inner)) => {
            let counted = Counted {
                inner,
                calls: AtomicUsize::new(0),
            };
            let result = extract_res_llm(d, d.target_ids.len(), &counted, &opts.model_id, opts.max_attempts);
            let retries = counted.calls.load(Ordering::Relaxed).saturating_sub(1);
            if retries > 0 {
                tracing::warn!(pair = %d.pair_id, round = d.round_index, retries, "extraction needed retries");
            }
            (result.map_err(|e| e.to_string()), retries)
        }
    }
}

/// Extracts RE sets for every completed dialogue, up to `jobs` at a time, and writes
/// them to `opts.out` in corpus order.
pub fn run_extract(opts: &ExtractOptions, provider: Option<&dyn CompletionProvider>) -> Result<ExtractReport, CliError> {
    let dialogues: Vec<Dialogue> = load_dialogues(&opts.corpus)?
        .into_iter()
        .filter(Dialogue::is_completed)
        .collect();
    if dialogues.is_empty() {
        return Err(CliError::Usage(format!("corpus {} has no completed dialogues", opts.corpus.display())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::Failed(format!("cannot start worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| dialogues.par_iter().map(|d| extract_one(d, opts, provider)).collect());
    let mut sets = Vec::new();
    let mut failures = Vec::new();
    let mut retries = 0;
    for (d, (result, r)) in dialogues.iter().zip(results) {
        retries += r;
        match result {
            Ok(set) => sets.push(set),
            Err(error) => failures.push(ExtractFailure {
                pair_id: d.pair_id.clone(),
                round_index: d.round_index,
                error,
            }),
        }
    }
    if let Some(parent) = opts.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    write_lines(&opts.out, &sets)?;
    let mean_f1 = match &opts.validate {
        Some(gold) => Some(validate_against(&sets, gold)?),
        None => None,
    };
    Ok(ExtractReport {
        sets,
        failures,
        retries,
        mean_f1,
    })
}

pub fn validate_against(sets: &[ReferringExpressionSet], gold: &Path) -> Result<f64, CliError> {
    let gold = read_res(gold)?;
    Ok(validate_corpus(sets, &gold)?)
}
