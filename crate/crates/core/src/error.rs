use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("softmax slice {slice} is fully masked")]
    DegenerateSlice { slice: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("token index {index} out of range for a vocabulary of {size}")]
    Vocabulary { index: usize, size: usize },

    #[error("premise has no regions")]
    EmptyPremise,

    #[error("hypothesis has no tokens")]
    EmptyHypothesis,

    #[error("cannot derive an image id from caption id {caption_id:?} (pair {pair_id})")]
    Provenance { pair_id: String, caption_id: String },

    #[error("split spec error: {0}")]
    Spec(String),

    #[error("format error at {location}: {detail}")]
    Format { location: String, detail: String },

    #[error("corrupt container at byte {offset}: {detail}")]
    Corruption { offset: u64, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("preflight failed: {} image(s) have no features: {}", missing.len(), preview(missing))]
    Preflight { missing: Vec<String> },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn preview(items: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut out = items.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if items.len() > SHOWN {
        out.push_str(&format!(", ... ({} more)", items.len() - SHOWN));
    }
    out
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format { location: location.into(), detail: detail.into() }
    }

    /// True for errors caused by invalid inputs or configuration rather than
    /// by a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Contract(_)
                | Error::Config(_)
                | Error::Preflight { .. }
                | Error::Spec(_)
                | Error::Format { .. }
                | Error::Corruption { .. }
                | Error::Provenance { .. }
                | Error::Vocabulary { .. }
                | Error::EmptyPremise
                | Error::EmptyHypothesis
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
