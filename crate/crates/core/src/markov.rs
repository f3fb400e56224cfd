//! Transition-matrix algebra and latent regime paths.
//!
//! Transition matrices are column-stochastic: entry `(j, i)` is the
//! probability of moving to regime `j` given the chain is in regime `i`.
//! Regimes are zero-indexed inside the library.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

const COLUMN_SUM_TOL: f64 = 1e-12;
const ERGODIC_MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    mat: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let m = mat.nrows();
        if m == 0 || mat.ncols() != m {
            return Err(Error::Dimension(format!(
                "transition matrix must be square and non-empty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        for i in 0..m {
            let mut sum = 0.0;
            for j in 0..m {
                let v = mat[(j, i)];
                if !(0.0..=1.0).contains(&v) {
                    return invalid(format!("transition probability ({}, {}) = {v} outside [0, 1]", j + 1, i + 1));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                return invalid(format!("column {} of the transition matrix sums to {sum}", i + 1));
            }
        }
        Ok(Self { mat })
    }

    /// Builds the matrix from its printed rows (each column must sum to one).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("transition matrix rows must all have length M".into()));
        }
        Self::new(DMatrix::from_fn(m, m, |r, c| rows[r][c]))
    }

    /// Two-regime matrix from its staying probabilities.
    pub fn two_regime(p11: f64, p22: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(2, 2, &[p11, 1.0 - p22, 1.0 - p11, p22]))
    }

    /// Renormalises each column; used when a matrix is assembled from
    /// estimated or perturbed entries.
    pub fn from_unnormalized(mut mat: DMatrix<f64>) -> Result<Self> {
        let m = mat.nrows();
        for i in 0..m {
            for j in 0..m {
                if !mat[(j, i)].is_finite() || mat[(j, i)] < 0.0 {
                    mat[(j, i)] = 0.0;
                }
            }
            let s: f64 = mat.column(i).sum();
            if s <= 0.0 {
                return invalid(format!("column {} of the transition matrix has no mass", i + 1));
            }
            mat.column_mut(i).unscale_mut(s);
        }
        Self::new(mat)
    }

    pub fn single() -> Self {
        Self { mat: DMatrix::from_element(1, 1, 1.0) }
    }

    pub fn m(&self) -> usize {
        self.mat.nrows()
    }

    /// P(S_t = to | S_{t-1} = from).
    #[inline]
    pub fn prob(&self, to: usize, from: usize) -> f64 {
        self.mat[(to, from)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.m()).map(|r| self.mat.row(r).iter().copied().collect()).collect()
    }

    /// Relabels regimes: new regime `a` is old regime `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let m = self.m();
        Self { mat: DMatrix::from_fn(m, m, |r, c| self.mat[(perm[r], perm[c])]) }
    }

    pub fn ergodic(&self) -> Result<Vec<f64>> {
        ergodic_distribution(self)
    }
}

/// Stationary distribution via the normal equations of `[I - P; 1'] pi = e_{M+1}`.
pub fn ergodic_distribution(p: &TransitionMatrix) -> Result<Vec<f64>> {
    let m = p.m();
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let mut a = DMatrix::zeros(m + 1, m);
    for r in 0..m {
        for c in 0..m {
            a[(r, c)] = if r == c { 1.0 } else { 0.0 } - p.prob(r, c);
        }
    }
    for c in 0..m {
        a[(m, c)] = 1.0;
    }
    let ata = a.transpose() * &a;
    let eig = ata.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 || max / min > ERGODIC_MAX_CONDITION {
        return Err(Error::NotErgodic);
    }
    let mut rhs = DVector::zeros(m + 1);
    rhs[m] = 1.0;
    let atb = a.transpose() * rhs;
    let pi = ata.cholesky().ok_or(Error::NotErgodic)?.solve(&atb);
    let mut out: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    Ok(out)
}

/// Closed form for two regimes: `pi_1 = (1 - p22) / (2 - p11 - p22)`.
pub fn ergodic_two_regime(p11: f64, p22: f64) -> Result<[f64; 2]> {
    let denom = 2.0 - p11 - p22;
    if denom <= 0.0 {
        return Err(Error::NotErgodic);
    }
    let pi1 = (1.0 - p22) / denom;
    Ok([pi1, 1.0 - pi1])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimePath {
    pub states: Vec<usize>,
    pub seed: u64,
}

/// Simulates `n` states; the first element is the initial state.
pub fn simulate_chain(p: &TransitionMatrix, n: usize, seed: u64, init: Option<usize>) -> Result<RegimePath> {
    if n == 0 {
        return invalid("chain length must be at least 1");
    }
    let m = p.m();
    let mut rng = rng::rng_from_seed(seed);
    let first = match init {
        Some(s) if s < m => s,
        Some(s) => return invalid(format!("initial state {s} outside 0..{m}")),
        None => draw_categorical(&ergodic_distribution(p)?, rng.random()),
    };
    let mut states = Vec::with_capacity(n);
    states.push(first);
    let mut col = vec![0.0; m];
    for _ in 1..n {
        let prev = *states.last().unwrap();
        for (j, c) in col.iter_mut().enumerate() {
            *c = p.prob(j, prev);
        }
        states.push(draw_categorical(&col, rng.random()));
    }
    Ok(RegimePath { states, seed })
}

pub(crate) fn draw_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in probs.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in floating-point slack above the cumulative sum
    probs.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
