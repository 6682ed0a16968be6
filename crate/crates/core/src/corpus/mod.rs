//! Dialogue corpus: per-round records, turn segmentation, JSONL files and
//! referring-expression extraction.

mod dialogue;
mod extract;

use std::io;

pub use dialogue::{
    dialogues_from_events, export_jsonl, flatten, import_jsonl, read_jsonl, segment_turns, write_jsonl, Dialogue,
    PlacementRecord, Turn, Utterance,
};
pub use extract::{
    extract_res_llm, extract_res_tagged, extraction_prompt, parse_extraction_reply, render_transcript,
    validate_corpus, validate_extraction, ReferringExpressionSet, TaggedExtractionProvider, PHRASE_JOINER,
    RE_EXTRACTION_PROMPT,
};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
    #[error("dialogue carries no tagged referring expressions")]
    Untagged,
    #[error("no referring expression for {0}")]
    MissingBasket(String),
    #[error("dialogue has no director messages")]
    NoDirector,
    #[error("no valid extraction after {attempts} attempts: {last_error}")]
    MalformedReply { attempts: usize, last_error: String },
    #[error("provider error: {0}")]
    Provider(String),
    #[error("predicted and gold referring expressions cover different baskets")]
    KeyMismatch,
}
