use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid bracket: f({lo}) has sign {sign_lo}, f({hi}) has sign {sign_hi}")]
    Bracket {
        lo: f64,
        hi: f64,
        sign_lo: f64,
        sign_hi: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("degenerate null probability at t = {t}: {what}")]
    DegenerateProbability { t: f64, what: &'static str },

    #[error("could not draw a split with nonempty parts after {0} attempts")]
    EmptySplit(usize),

    #[error("estimator failed: {0}")]
    Estimator(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
