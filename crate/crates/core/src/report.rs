//! Machine-readable summaries of fits and tests, and the run envelope
//! written by the command-line tool.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::estimation::FittedModel;
use crate::mc::{quantile_sorted, StatRow, TestResult};
use crate::model::ModelFamily;

pub const SCHEMA_VERSION: &str = "1.0";

/// Bundled JSON schema for [`RunReport`].
pub const SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub coef: f64,
    pub se: Option<f64>,
}

/// Five-number summary: min, first quartile, median, third quartile, max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self { min: s[0], q1: quantile_sorted(&s, 0.25), median: quantile_sorted(&s, 0.5), q3: quantile_sorted(&s, 0.75), max: s[s.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: ModelFamily,
    pub q: usize,
    pub p: usize,
    pub k: usize,
    pub coefficients: Vec<Coefficient>,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_params: usize,
    pub t_eff: usize,
    /// Rows of the transition matrix; entry `(to, from)`.
    pub transition: Vec<Vec<f64>>,
    /// One summary per series.
    pub residuals: Vec<FiveNumber>,
    pub converged: bool,
    pub starts: usize,
    pub warnings: Vec<String>,
}

impl From<&FittedModel> for FitReport {
    fn from(f: &FittedModel) -> Self {
        let names = f.param_names();
        let coefs = f.coefficients();
        let coefficients = names
            .into_iter()
            .zip(coefs)
            .enumerate()
            .map(|(i, (name, coef))| Coefficient { name, coef, se: f.se.as_ref().and_then(|s| s.get(i).copied().flatten()) })
            .collect();
        let residuals = (0..f.residuals.ncols())
            .filter_map(|c| FiveNumber::of(&f.residuals.column(c).iter().copied().collect::<Vec<_>>()))
            .collect();
        Self {
            family: f.spec.family(),
            q: f.spec.q,
            p: f.spec.p,
            k: f.spec.k,
            coefficients,
            loglik: f.loglik,
            aic: f.aic,
            bic: f.bic,
            n_params: f.n_params(),
            t_eff: f.t_eff,
            transition: f.theta.transition.rows(),
            residuals,
            converged: f.converged,
            starts: f.trace.len(),
            warnings: f.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub rows: Vec<StatRow>,
    pub fit0: Option<FitReport>,
    pub fit1: Option<FitReport>,
    pub details: BTreeMap<String, serde_json::Value>,
    pub failed_replications: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl From<&TestResult> for TestReport {
    fn from(r: &TestResult) -> Self {
        Self {
            test: r.test.clone(),
            rows: r.rows.clone(),
            fit0: r.fit0.as_ref().map(FitReport::from),
            fit1: r.fit1.as_ref().map(FitReport::from),
            details: r.details.clone(),
            failed_replications: r.failed_replications,
            converged: r.converged,
            warnings: r.warnings.clone(),
        }
    }
}

/// Envelope for one command-line run. Re-running `command` with `config`
/// and `seed` reproduces `result`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub workers: usize,
    pub elapsed_ms: u64,
    pub result: serde_json::Value,
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_number_summary() {
        let f = FiveNumber::of(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert!(FiveNumber::of(&[]).is_none());
    }

    #[test]
    fn schema_is_json() {
        let v: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        assert_eq!(v["properties"]["schema_version"]["const"], SCHEMA_VERSION);
    }
}
