use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("example {example} (line {line}) references unknown table `{table_id}`")]
    UnknownTable {
        example: usize,
        line: usize,
        table_id: String,
    },

    #[error("structural validation failed: {0}")]
    Structure(String),

    #[error("aggregate over an empty set of usable cells")]
    EmptyAggregate,

    #[error("oversampling needs {needed} duplicates but the minority partition is empty")]
    EmptyMinority { needed: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("fine-tuning subset is empty: no domain-specific examples")]
    EmptySubset,

    #[error("non-finite gradient in {model} model at epoch {epoch}, batch {batch}")]
    NonFiniteGradient {
        model: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("length mismatch: {preds} predictions vs {golds} gold sketches")]
    LengthMismatch { preds: usize, golds: usize },

    #[error("model file: {0}")]
    ModelFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
