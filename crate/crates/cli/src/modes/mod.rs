//! Problem modes behind a name-keyed registry.

use std::collections::BTreeMap;

use crate::error::CliError;
use crate::problem::Problem;
use crate::report::{Check, Csv, Report};

mod envelope;
mod gap;
mod normalize;
mod order;
pub use order::verify_not_ordered;
mod polar;
mod quotient;
mod transport;

/// Settings shared by every mode.
#[derive(Debug, Clone)]
pub struct Context {
    /// Replaces the default `1e-9` in residual checks.
    pub tolerance: f64,
    pub seed: u64,
    pub quiet: bool,
}

impl Context {
    pub fn warn(&self, msg: &str) {
        if !self.quiet {
            eprintln!("warning: {msg}");
        }
    }
}

pub trait Mode: Send + Sync {
    fn name(&self) -> &'static str;

    fn run(&self, problem: &Problem, ctx: &Context) -> Result<Report, CliError>;

    /// Re-checks a report against its problem without solving anything.
    fn verify(&self, problem: &Problem, report: &Report, ctx: &Context) -> Result<Vec<Check>, CliError>;

    fn csv(&self, report: &Report) -> Result<Csv, CliError>;
}

pub struct Registry {
    modes: BTreeMap<&'static str, Box<dyn Mode>>,
}

impl Registry {
    pub fn new() -> Self {
        Registry {
            modes: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, mode: Box<dyn Mode>) {
        self.modes.insert(mode.name(), mode);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Mode, CliError> {
        self.modes
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| {
                let known: Vec<&str> = self.names().collect();
                CliError::Parse(format!("unknown mode `{name}`, expected one of {}", known.join(", ")))
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.modes.keys().copied()
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry::new();
        r.register(Box::new(transport::Transport::Ot));
        r.register(Box::new(transport::Transport::Cot));
        r.register(Box::new(transport::Transport::Mot));
        r.register(Box::new(order::Order));
        r.register(Box::new(envelope::Envelope));
        r.register(Box::new(polar::Polar));
        r.register(Box::new(gap::Gap));
        r.register(Box::new(normalize::Normalize));
        r.register(Box::new(quotient::Quotient));
        r
    }
}

/// Scale used by residual checks on a table of sup norm `s`.
pub(crate) fn scaled(tol: f64, s: f64) -> f64 {
    tol * (1.0 + s)
}
