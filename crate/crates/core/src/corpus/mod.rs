//! Tokenization, delexicalization, template synthesis and dataset files.

mod dataset;
mod delex;
mod template;
mod vocab;

pub use dataset::{parse_jsonl, read_jsonl, split, to_jsonl, write_jsonl, MwpSample, Sample, Split};
pub use delex::{
    delexicalize, generation_slot_map, relexicalize, relexicalize_lenient, slot_tokens, Delexed,
};
pub use template::{
    explicit_slots, parse_templates, plural, sample_system, synth_corpus, synth_variants, SynthConfig, Template,
    TemplateRecord,
};
pub use vocab::{
    special_tokens, split_specials, train_bpe, Piece, Vocab, BOS, BOS_ID, EOS, EOS_ID, PAD, PAD_ID,
    SPACE, UNK, UNK_ID,
};

use std::path::Path;

use thiserror::Error;

use crate::cskg::CskgError;
use crate::eqlang::EqError;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no template for equation shape `{0}`")]
    TemplateGap(String),
    #[error("no slot-map entry for {0}")]
    MissingSlot(String),
    #[error("{0}")]
    Format(String),
    #[error("template: {0}")]
    Template(String),
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("split: {0}")]
    EmptySplit(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Equation(#[from] EqError),
    #[error(transparent)]
    Cskg(#[from] CskgError),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
