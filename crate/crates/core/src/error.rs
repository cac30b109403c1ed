use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// One or more configuration or input-contract violations, reported together.
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("line count mismatch {src} vs {tgt}")]
    LineCountMismatch { src: usize, tgt: usize },

    #[error("empty line {line} in {}", path.display())]
    EmptyLine { path: PathBuf, line: usize },

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("empty lexicon row for source token {0:?}")]
    EmptyLexiconRow(String),

    #[error("distribution has a zero entry at index {0}; floor model outputs before computing KL")]
    ZeroProbability(usize),

    #[error("sentence count mismatch: {hyps} hypotheses vs {refs} references")]
    SentenceCountMismatch { hyps: usize, refs: usize },

    #[error("{0} not found: {1}")]
    MissingArtifact(&'static str, PathBuf),

    #[error("malformed {what} at line {line}: {msg}")]
    Parse { what: &'static str, line: usize, msg: String },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(vec![msg.into()])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage: stage.to_string(), source: Box::new(e) },
        }
    }

    /// True for configuration / input validation failures (CLI exit code 1).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

/// Collects validation messages so that all of them are reported at once.
#[derive(Debug, Default)]
pub struct Problems(Vec<String>);

impl Problems {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    pub fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    pub fn extend(&mut self, prefix: &str, other: Result<()>) {
        if let Err(e) = other {
            match e {
                Error::Validation(msgs) => {
                    self.0.extend(msgs.into_iter().map(|m| format!("{prefix}.{m}")))
                }
                other => self.0.push(format!("{prefix}: {other}")),
            }
        }
    }

    pub fn into_result(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self.0))
        }
    }
}
