//! Report files: what every command prints.

use cot_lab_core::transport::Hedge;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, ErrorInfo};
use crate::problem::SCHEMA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Values {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witnesses {
    /// Nonzero coupling entries as `[i, j, weight]`.
    pub coupling: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hedge: Option<Hedge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub mode: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Values>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witnesses: Option<Witnesses>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub diagnostics: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

impl Report {
    pub fn ok(mode: &str, diagnostics: Value) -> Self {
        Report {
            schema: SCHEMA,
            mode: mode.into(),
            status: Status::Ok,
            values: None,
            witnesses: None,
            diagnostics,
            error: None,
        }
    }

    pub fn failure(mode: &str, err: &CliError, diagnostics: Value) -> Self {
        Report {
            status: Status::Error,
            error: Some(err.info()),
            ..Report::ok(mode, diagnostics)
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let r: Report = serde_json::from_str(text)?;
        if r.schema != SCHEMA {
            return Err(CliError::Parse(format!("unsupported report schema {}", r.schema)));
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// The mode-specific diagnostics decoded as `T`.
    pub fn diagnostics<T: serde::de::DeserializeOwned>(&self) -> Result<T, CliError> {
        serde_json::from_value(self.diagnostics.clone())
            .map_err(|e| CliError::Parse(format!("report diagnostics: {e}")))
    }
}

/// One re-checked quantity against its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// `limit − value`; negative when the check fails.
    pub margin: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            margin: limit - value,
            pass: value <= limit,
        }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Check {
            name: name.into(),
            value: if ok { 0.0 } else { 1.0 },
            limit: 0.0,
            margin: if ok { 0.0 } else { -1.0 },
            pass: ok,
        }
    }
}

/// Rows for the `--csv` output under a fixed header.
pub struct Csv {
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn render(&self) -> Result<String, CliError> {
        let io = |e: csv::Error| CliError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }
}
