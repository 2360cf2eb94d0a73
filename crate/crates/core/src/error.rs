use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("size overflow: {0}")]
    Sizing(String),

    #[error("non-finite entry at flat index {0}")]
    NonFinite(usize),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("instance invariant violated: {0}")]
    Invariant(String),

    /// Logits large enough to overflow `exp`; the caller should lower B.
    #[error("instance bound exceeded: {0}")]
    InstanceBound(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("materialization guard: {0}")]
    Guard(String),

    #[error("fast path unsupported: {0}")]
    Unsupported(String),

    #[error("rank budget exceeded: rank {rank} > cap {cap} ({hint})")]
    RankBudget {
        rank: usize,
        cap: usize,
        hint: &'static str,
    },

    #[error(
        "polynomial certification failed at degree {degree}: achieved {achieved:e}, requested {requested:e}"
    )]
    Approximation {
        degree: usize,
        achieved: f64,
        requested: f64,
    },

    #[error("FFT length {0} is not a power of two")]
    FftLength(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape { op, left, right }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
