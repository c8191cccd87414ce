use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no near-integer point: direction {m:?} has max |m_i| <= 1/delta (delta = {delta})")]
    NoNearIntegerPoint { m: Vec<i64>, delta: f64 },

    #[error("monotonicity certificate failed at node {node}: {detail}")]
    Certificate { node: usize, detail: String },

    #[error("solver did not converge after {iterations} sweeps (residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("stability condition fails: {0}")]
    Stability(String),

    #[error("degenerate barrier: {0}")]
    DegenerateBarrier(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("delta-continuity violated between samples {i} and {j}: |{a:.4} - {b:.4}| > {bound:.4}")]
    DeltaContinuity {
        i: usize,
        j: usize,
        a: f64,
        b: f64,
        bound: f64,
    },

    #[error("parse error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
