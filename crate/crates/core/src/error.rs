use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on shapes, ranges or configuration was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}{}", context_suffix(.context))]
    TrainingDiverged { epoch: usize, context: String },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a context tag to a divergence error; other variants pass through.
    pub fn tagged(self, tag: &str) -> Self {
        match self {
            Error::TrainingDiverged { epoch, context } => Error::TrainingDiverged {
                epoch,
                context: if context.is_empty() {
                    tag.to_string()
                } else {
                    format!("{tag}, {context}")
                },
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !($cond) {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
