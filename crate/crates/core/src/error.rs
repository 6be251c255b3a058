use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank undefined: polynomial is constant")]
    RankUndefined,

    #[error(
        "critical case H = 1 - 1/(2d) with q = 1, d = {d}: only covered for the Ornstein-Uhlenbeck functional"
    )]
    CriticalCase { d: usize },

    #[error("regime precondition failed: {0}")]
    Regime(String),

    #[error("Hardy-Littlewood-Sobolev precondition failed: {0}")]
    HlsPrecondition(String),

    #[error("kernel tail mass {tail:.3e} beyond truncation {truncation} exceeds {tol:.1e}; use truncation >= {suggested:.4}")]
    TailMass {
        tail: f64,
        truncation: f64,
        tol: f64,
        suggested: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Io(_) | Error::Json(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
