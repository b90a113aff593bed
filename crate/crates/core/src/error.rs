use cot_lab_lp::LpError;
use thiserror::Error;

pub type Result<T, E = CotError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CotError {
    #[error("operation requires dimension 1, grid has dimension {0}")]
    UnsupportedDimension(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{what} is not a probability measure (total mass {mass})")]
    NotNormalized { what: &'static str, mass: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    /// The marginals admit no martingale coupling. `witness` is a point where
    /// the potential of the first marginal exceeds that of the second, or
    /// `None` when the barycenters already differ.
    #[error("marginals are not in convex order{}", match .witness {
        Some(t) => format!(" (potential violation at {t})"),
        None => format!(" (barycenter gap {barycenter_gap})"),
    })]
    NotConvexOrder {
        witness: Option<f64>,
        barycenter_gap: f64,
        farkas: Option<Vec<f64>>,
    },

    /// The set of couplings satisfying constraints `1..k` is empty.
    #[error("constraint set after constraint {k} is empty")]
    EmptyConstraintSet { k: usize, farkas: Vec<f64> },

    /// A moment constraint does not satisfy the strict sign condition
    /// `inf < 0 < sup` over the couplings satisfying the previous ones.
    #[error("moment constraint {k} is inadmissible: range [{lower}, {upper}] does not straddle 0")]
    Inadmissible {
        k: usize,
        lower: f64,
        upper: f64,
        shift: f64,
    },

    /// A feasibility problem has no solution; `farkas` certifies it.
    #[error("{what}")]
    Infeasible { what: String, farkas: Vec<f64> },

    #[error("program unexpectedly {0}")]
    UnexpectedStatus(&'static str),

    #[error(transparent)]
    Lp(#[from] LpError),
}
