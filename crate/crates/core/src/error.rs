use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("invalid tokenizer definition: {0}")]
    Tokenizer(String),

    #[error("no samples survived cleaning of {}", path.display())]
    EmptyCorpus { path: PathBuf },

    #[error("tokenizer fingerprint mismatch: table built with {expected}, request uses {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("ids missing from {what}: {}", preview(missing))]
    MissingIds { what: &'static str, missing: Vec<String> },

    #[error("need {needed} samples but only {available} are available")]
    Insufficient { needed: usize, available: usize },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(what: &'static str, message: impl ToString) -> Self {
        Error::Format {
            what,
            message: message.to_string(),
        }
    }

    pub fn precondition(message: impl Into<String>) -> Self {
        Error::Precondition(message.into())
    }

    /// True for failures that come from the filesystem rather than from the
    /// content or parameters of a request.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 8;
    let mut out = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        out.push_str(&format!(" (+{} more)", ids.len() - SHOWN));
    }
    out
}
