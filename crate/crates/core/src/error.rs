use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("window index {k} out of range: need {depth} <= k <= {horizon}")]
    IndexOutOfRange { k: usize, depth: usize, horizon: usize },

    #[error("trajectory too short: horizon T = {horizon}, need at least {needed}")]
    TrajectoryTooShort { horizon: usize, needed: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid signal layout: {0}")]
    InvalidLayout(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rank deficient: sigma[{index}] = {value:e} <= {threshold:e}")]
    RankDeficient {
        index: usize,
        value: f64,
        threshold: f64,
    },

    #[error("matrix numerically singular (condition number {0:e})")]
    Singular(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("ill-conditioned data matrix: {0}")]
    IllConditioned(String),

    #[error("malformed artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
