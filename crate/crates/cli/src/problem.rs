//! Problem files: the JSON input every mode reads.

use cot_lab_core::transport::PayoffTable;
use cot_lab_core::{Axis, DiscreteMeasure, SupportGrid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA: u32 = 1;

/// A point given either as a bare number (dimension one) or as a vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coord {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Coord {
    fn to_point(&self) -> Vec<f64> {
        match self {
            Coord::Scalar(v) => vec![*v],
            Coord::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x: Vec<Coord>,
    /// Defaults to `x`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<Coord>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Ot,
    Mot,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// Grid size of the gap demonstration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<Vec<usize>>,
    /// `[b, c, gamma]` norm bounds of the gap demonstration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hedge_norms: Option<[f64; 3]>,
    /// Index of the barycenter among the `X` points (MOT normalization).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
    /// Require domination off the polar cells only (ot, cot).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quasi_sure: Option<bool>,
    /// Coupling class for polar scans and dual normalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    /// Scan only this many cells, drawn with the seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub schema: u32,
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    /// Dense row-major table, one row per `X` point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<Vec<Vec<f64>>>,
    /// Values on the `X` points (envelope).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<Vec<f64>>,
    #[serde(default)]
    pub parameters: Parameters,
}

fn missing(field: &str, mode: &str) -> CliError {
    CliError::Parse(format!("mode {mode} needs `{field}`"))
}

impl Problem {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let p: Problem = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        if p.schema != SCHEMA {
            return Err(CliError::Parse(format!(
                "unsupported schema {} (expected {SCHEMA})",
                p.schema
            )));
        }
        Ok(p)
    }

    pub fn grid(&self) -> Result<SupportGrid, CliError> {
        let spec = self.grid.as_ref().ok_or_else(|| missing("grid", &self.mode))?;
        let x: Vec<Vec<f64>> = spec.x.iter().map(Coord::to_point).collect();
        let y: Vec<Vec<f64>> = match &spec.y {
            Some(y) => y.iter().map(Coord::to_point).collect(),
            None => x.clone(),
        };
        let dim = x.first().map_or(0, Vec::len);
        Ok(SupportGrid::new(dim, x, y)?)
    }

    pub fn mu(&self) -> Result<DiscreteMeasure, CliError> {
        let w = self.mu.as_ref().ok_or_else(|| missing("mu", &self.mode))?;
        Ok(DiscreteMeasure::new(Axis::X, w.clone())?)
    }

    pub fn nu(&self) -> Result<DiscreteMeasure, CliError> {
        let w = self.nu.as_ref().ok_or_else(|| missing("nu", &self.mode))?;
        Ok(DiscreteMeasure::new(Axis::Y, w.clone())?)
    }

    pub fn payoff(&self, grid: &SupportGrid) -> Result<PayoffTable, CliError> {
        let rows = self.payoff.as_ref().ok_or_else(|| missing("payoff", &self.mode))?;
        table(rows, grid, "payoff")
    }

    pub fn constraints(&self, grid: &SupportGrid) -> Result<Vec<PayoffTable>, CliError> {
        self.constraints
            .iter()
            .enumerate()
            .map(|(k, rows)| table(rows, grid, &format!("constraint {}", k + 1)))
            .collect()
    }

    pub fn kind(&self) -> Kind {
        self.parameters.kind.unwrap_or(Kind::Ot)
    }
}

/// Checks a dense matrix against the grid and flattens it.
pub fn table(rows: &[Vec<f64>], grid: &SupportGrid, what: &str) -> Result<PayoffTable, CliError> {
    if rows.len() != grid.m() || rows.iter().any(|r| r.len() != grid.n()) {
        return Err(CliError::Parse(format!(
            "{what} must be {} rows of {} values",
            grid.m(),
            grid.n()
        )));
    }
    Ok(PayoffTable::new(grid.m(), grid.n(), rows.concat())?)
}
