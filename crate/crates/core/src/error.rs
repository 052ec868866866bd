use thiserror::Error;

use crate::dynamics::MetricRecord;
use crate::game::GameConstants;

pub type Result<T, E = GneError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GneError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("point is outside {set} (distance {distance:.3e})")]
    NotInSet { set: String, distance: f64 },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("communication graph is not connected")]
    Disconnected,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("strong monotonicity not detected (estimated modulus {:.3e})", constants.mu)]
    NotStronglyMonotone { constants: GameConstants },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("no convergence after {steps} steps (last residual {residual:.3e})")]
    NonConvergence { steps: usize, residual: f64 },

    #[error("trajectory diverged at t = {time}")]
    Divergence {
        time: f64,
        last_finite: Option<Box<MetricRecord>>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(GneError::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
