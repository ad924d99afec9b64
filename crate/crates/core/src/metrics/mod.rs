//! Hallucination metrics and their line-delimited input formats.

pub mod chair;
pub mod io;
pub mod pope;

use thiserror::Error;

pub use chair::{chair_score, extract_objects, ChairAnnotation, ChairScore, SynonymEntry, SynonymMap};
pub use pope::{parse_binary_answer, pope_score, Answer, PopeItem, PopeScore, Stratum};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("EmptyInput: nothing to score")]
    EmptyInput,
    #[error("annotation for image `{image}` names `{object}`, which is not in the object vocabulary")]
    UnknownObject { image: String, object: String },
    #[error("surface form `{surface}` maps to both `{first}` and `{second}`")]
    SynonymConflict {
        surface: String,
        first: String,
        second: String,
    },
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("{path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
