use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the sampling pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document id must be nonempty (record {0})")]
    EmptyId(usize),
    #[error("input is empty")]
    EmptyInput,
    #[error("tokenizer mismatch: corpus {corpus:#018x}, lexicon {lexicon:#018x}")]
    TokenizerMismatch { corpus: u64, lexicon: u64 },
    #[error("unknown document `{0}`")]
    NotFound(String),
    #[error("corpus of {docs} documents is too small for k = {k}")]
    InsufficientCorpus { docs: usize, k: usize },
    #[error("missing {what} for {} document(s): {}", ids.len(), preview(ids))]
    Coverage { what: &'static str, ids: Vec<String> },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("k = {k} exceeds vocabulary size {vocab}")]
    TopKBound { k: usize, vocab: usize },
    #[error("invalid parameter {name}: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("document `{0}` has an all-zero tf-idf vector")]
    ZeroVector(String),
    #[error("no candidates remain")]
    Exhausted,
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 8;
    let mut out = String::new();
    for (i, id) in ids.iter().take(SHOWN).enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(id);
    }
    if ids.len() > SHOWN {
        out.push_str(", ...");
    }
    out
}
