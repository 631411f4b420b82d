//! Manifests, ingestion, dataset splits, corpus statistics and scoring.

mod eval;
mod ingest;
mod manifest;
mod split;
mod stats;

use std::path::PathBuf;

use thiserror::Error;

use crate::lang::Lang;

pub use eval::{
    edit_distance, parse_hypotheses, read_hypotheses, render_comparison, score, EditOps,
    EvalReport, EvalRow, ProfileSet, TokenMode,
};
pub use ingest::{audio_digest, ingest, DuplicateAudio, IngestOptions, IngestReport};
pub use manifest::{
    manifest_to_jsonl, read_manifest, validate_manifest, write_manifest, Split, UtteranceRecord,
};
pub use split::{split, SplitOutcome, SplitSpec};
pub use stats::{format_hours, stats, CorpusStats, Tally};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("MissingTranscript: no transcript for {}", .0.display())]
    MissingTranscript(PathBuf),
    #[error("UnreadableAudio: {}: {reason}", path.display())]
    UnreadableAudio { path: PathBuf, reason: String },
    #[error("InsufficientData: {0}")]
    InsufficientData(String),
    #[error("InvalidSplitSpec: {0}")]
    InvalidSplitSpec(String),
    #[error("UnlabeledRecord: {0} has no transcript")]
    UnlabeledRecord(String),
    #[error("MissingHypothesis: no hypothesis for {0}")]
    MissingHypothesis(String),
    #[error("LangProfileMismatch: {id}: expected a {expected} profile, found {found:?}")]
    LangProfileMismatch {
        id: String,
        expected: Lang,
        found: Option<Lang>,
    },
    #[error("InvalidRecord: {0}")]
    InvalidRecord(String),
    #[error("MalformedManifest: line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("MalformedHypotheses: line {line}: expected id<TAB>text")]
    MalformedHypotheses { line: usize },
    #[error("IoFailure: {0}")]
    Io(#[from] std::io::Error),
}
