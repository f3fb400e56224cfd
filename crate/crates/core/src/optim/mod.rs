//! Derivative-free maximisation over boxes, plus a local quasi-Newton solver.

pub mod bfgs;
mod pso;
mod sa;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use pso::particle_swarm;
pub use sa::simulated_annealing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Pso,
    Sa,
}

impl std::str::FromStr for Optimizer {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pso" => Ok(Self::Pso),
            "sa" => Ok(Self::Sa),
            _ => invalid(format!("unknown optimizer `{s}` (expected pso or sa)")),
        }
    }
}

/// Box-constrained maximisation problem.
pub struct SearchProblem<'a> {
    pub objective: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Maximum number of objective evaluations.
    pub budget: usize,
    /// Stop as soon as a value at or above this is found.
    pub threshold_stop: Option<f64>,
    /// Optional first candidate (evaluated before anything else).
    pub start: Option<Vec<f64>>,
    pub seed: u64,
}

impl SearchProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return invalid("bounds differ in length");
        }
        if self.budget == 0 {
            return invalid("search budget must be at least 1");
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return invalid(format!("bound {i} is not a finite interval: [{l}, {u}]"));
            }
        }
        if let Some(s) = &self.start {
            if s.len() != self.lower.len() {
                return invalid("start point has the wrong dimension");
            }
        }
        Ok(())
    }

    fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    pub(crate) fn reached_threshold(&self, value: f64) -> bool {
        self.threshold_stop.is_some_and(|t| value >= t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    /// Best value after each evaluation.
    pub trace: Vec<f64>,
    pub stopped_at_threshold: bool,
    /// False when the budget ran out before the threshold was met.
    pub converged: bool,
}

/// Tracks the incumbent and the monotone best-so-far trace.
pub(crate) struct Incumbent {
    pub x: Vec<f64>,
    pub value: f64,
    pub trace: Vec<f64>,
}

impl Incumbent {
    pub(crate) fn new(dim: usize) -> Self {
        Self { x: vec![0.0; dim], value: f64::NEG_INFINITY, trace: Vec::new() }
    }

    pub(crate) fn offer(&mut self, x: &[f64], value: f64) {
        if value > self.value || self.trace.is_empty() && !value.is_nan() {
            self.value = value;
            self.x.copy_from_slice(x);
        }
        self.trace.push(self.value);
    }

    pub(crate) fn finish(self, problem: &SearchProblem<'_>, stopped: bool) -> SearchResult {
        SearchResult {
            evals: self.trace.len(),
            x: self.x,
            value: self.value,
            trace: self.trace,
            stopped_at_threshold: stopped,
            converged: stopped || problem.threshold_stop.is_none(),
        }
    }
}

pub fn maximize(problem: &SearchProblem<'_>, optimizer: Optimizer) -> Result<SearchResult> {
    match optimizer {
        Optimizer::Pso => particle_swarm(problem),
        Optimizer::Sa => simulated_annealing(problem),
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn neg_norm(x: &[f64]) -> f64 {
        -x.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn square_problem(f: &(dyn Fn(&[f64]) -> f64 + Sync), budget: usize, threshold: Option<f64>, seed: u64) -> SearchProblem<'_> {
        SearchProblem {
            objective: f,
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
            budget,
            threshold_stop: threshold,
            start: None,
            seed,
        }
    }
}
