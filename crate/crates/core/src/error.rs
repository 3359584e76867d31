use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("tag {tag:?} at line {line} is not valid in the {scheme} scheme")]
    Scheme {
        line: usize,
        tag: String,
        scheme: String,
    },

    #[error("cannot convert sentence {sentence_id}: {msg}")]
    Conversion { sentence_id: usize, msg: String },

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("invalid synthesis spec: {0}")]
    SynthSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("wrong decoder: {0}")]
    WrongDecoder(String),

    #[error("degenerate (zero) embedding for id {0} under cosine similarity")]
    DegenerateVector(usize),

    #[error("instance too large: {0}")]
    Size(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
