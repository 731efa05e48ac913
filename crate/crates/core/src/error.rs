use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("frequency is rational to working precision: {p}/{q}")]
    Rational { p: i64, q: i64 },
    #[error("resolution too coarse: {0}")]
    Resolution(String),
    #[error("homotopy obstruction: winding numbers {windings:?} are not all zero")]
    Obstruction { windings: Vec<i64> },
    #[error("budget exhausted: {0}")]
    Budget(String),
    #[error("internal consistency: {0}")]
    Internal(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error after stripping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
