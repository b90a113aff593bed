use thiserror::Error;

/// One pivot of the simplex, kept for failure diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotRecord {
    pub phase: u8,
    pub iteration: usize,
    pub entering: usize,
    pub leaving_row: usize,
    pub step: f64,
    pub objective: f64,
    pub bland: bool,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("simplex failed: {reason} after {iterations} iterations")]
    SolverFailure {
        reason: String,
        iterations: usize,
        trace: Vec<PivotRecord>,
    },
}
