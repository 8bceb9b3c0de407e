use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by modeling, suggestion and persistence.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("insufficient data: need at least {needed} observations, have {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    Convergence { iterations: usize, grad_norm: f64 },

    #[error("acquisition optimization failed: {0}")]
    Optimization(String),

    #[error("rejected rows: {}", format_rejections(.0))]
    RejectedRows(Vec<RowRejection>),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("rank-deficient design; cannot identify monomials: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("campaign schema_version {found} cannot be loaded; this build reads schema_version {expected}")]
    Migration { found: u64, expected: u64 },

    #[error("revision conflict: expected revision {expected}, found {found}")]
    Conflict { expected: u64, found: u64 },

    #[error("malformed campaign document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A single row refused at ingestion, with the reason.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RowRejection {
    pub row: usize,
    pub reason: String,
}

fn format_rejections(rows: &[RowRejection]) -> String {
    rows.iter()
        .map(|r| format!("row {}: {}", r.row, r.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// True for errors caused by the caller's input rather than by the engine.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Argument(_)
                | Error::InsufficientData { .. }
                | Error::RejectedRows(_)
                | Error::Unsupported(_)
                | Error::RankDeficient(_)
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::Migration { .. }
                | Error::Json(_)
                | Error::Csv(_)
        )
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
