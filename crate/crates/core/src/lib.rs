//! Constrained and martingale optimal transport duality on finite grids.
//!
//! Every primal and dual problem is stated as a linear program and solved by
//! [`cot_lab_lp`]; reports carry both optima, the optimal coupling and hedge,
//! and residuals that can be re-checked without re-solving.
//!
//! ```
//! use cot_lab_core::transport::PayoffTable;
//! use cot_lab_core::{solve_ot, Axis, DiscreteMeasure, SupportGrid};
//!
//! # fn main() -> cot_lab_core::Result<()> {
//! let grid = SupportGrid::line(&[0.0, 1.0], &[0.0, 1.0])?;
//! let mu = DiscreteMeasure::new(Axis::X, vec![0.5, 0.5])?;
//! let nu = DiscreteMeasure::new(Axis::Y, vec![0.5, 0.5])?;
//! let payoff = PayoffTable::from_fn(&grid, |x, y| if x == y { 1.0 } else { 0.0 });
//! let report = solve_ot(&grid, &mu, &nu, &payoff)?;
//! assert!((report.primal - 1.0).abs() < 1e-9 && report.gap.abs() < 1e-9);
//! # Ok(())
//! # }
//! ```

// dense tables read most clearly with explicit indices
#![allow(clippy::needless_range_loop)]

pub mod constrained;
pub mod envelope;
pub mod error;
pub mod martingale;
pub mod measures;
pub mod mot;
mod program;
pub mod transport;

pub use constrained::{check_structure, multiplier_bound_check, solve_cot, MomentConstraintSet};
pub use envelope::{convex_envelope, envelope_as_supremum_check, is_convex_bidual, GridFunction};
pub use error::{CotError, Result};
pub use martingale::{
    apply_t, recover_gamma, superhedge_martingale, supermartingale_decompose, TradingStrategy,
};
pub use measures::{
    check_convex_order_lp, check_convex_order_potential, potential, split_coupling, Axis,
    Coupling, DiscreteMeasure, SupportGrid,
};
pub use mot::{
    gap_sequence, normalization_constant, normalize_mot_decomposition, polar_scan_mot, solve_mot,
    HedgeNorms, MotDualTriple,
};
pub use transport::{
    audit, bb_superhedge, normalize_ot_decomposition, polar_scan_ot, quotient_distance, solve_ot,
    DualityReport, Hedge, Instance, OrderUnit, PayoffTable, PolarCertificate,
};
