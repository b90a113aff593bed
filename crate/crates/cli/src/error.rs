use cot_lab_core::CotError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),

    #[error("{0}")]
    Io(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Cot(#[from] CotError),
}

/// The machine-readable `error` object of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Parse(_) | CliError::Io(_) => 4,
            CliError::Cot(e) => match e {
                CotError::NotConvexOrder { .. }
                | CotError::EmptyConstraintSet { .. }
                | CotError::Infeasible { .. } => 2,
                CotError::Inadmissible { .. } | CotError::Precondition(_) => 3,
                CotError::UnsupportedDimension(_)
                | CotError::Shape(_)
                | CotError::NotNormalized { .. } => 4,
                CotError::UnexpectedStatus(_) | CotError::Lp(_) => 5,
            },
        }
    }

    pub fn info(&self) -> ErrorInfo {
        let (kind, details) = match self {
            CliError::Parse(_) => ("parse", Value::Null),
            CliError::Io(_) => ("io", Value::Null),
            CliError::Verification(_) => ("verification", Value::Null),
            CliError::Cot(e) => match e {
                CotError::UnsupportedDimension(d) => ("unsupported_dimension", json!({ "dim": d })),
                CotError::Shape(_) => ("shape", Value::Null),
                CotError::NotNormalized { what, mass } => {
                    ("not_normalized", json!({ "measure": what, "mass": mass }))
                }
                CotError::Precondition(_) => ("precondition", Value::Null),
                CotError::NotConvexOrder {
                    witness,
                    barycenter_gap,
                    farkas,
                } => (
                    "not_convex_order",
                    json!({ "witness": witness, "barycenter_gap": barycenter_gap, "farkas": farkas }),
                ),
                CotError::EmptyConstraintSet { k, farkas } => {
                    ("empty_constraint_set", json!({ "k": k, "farkas": farkas }))
                }
                CotError::Inadmissible { k, lower, upper, shift } => (
                    "inadmissible",
                    json!({ "k": k, "lower": lower, "upper": upper, "shift": shift }),
                ),
                CotError::Infeasible { farkas, .. } => ("infeasible", json!({ "farkas": farkas })),
                CotError::UnexpectedStatus(_) | CotError::Lp(_) => ("solver", Value::Null),
            },
        };
        ErrorInfo {
            kind: kind.into(),
            message: self.to_string(),
            details,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}
