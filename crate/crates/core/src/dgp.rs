//! Simulation of the ten model families.
//!
//! All families share one recursion in mean-adjusted form:
//!
//! ```text
//! y_t - mu_{S_t} = sum_k Phi_k (y_{t-k} - mu_{S_{t-k}}) + beta' z_t + L_{S_t} eps_t
//! ```
//!
//! with `L` the lower Cholesky factor of the regime covariance. The regime
//! chain and the innovations use separate seed streams, so a switching
//! model with one regime reproduces its linear counterpart draw for draw.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::markov::{simulate_chain, RegimePath, TransitionMatrix};
use crate::model::{ModelFamily, Theta};
use crate::rng;

const CHAIN_STREAM: u64 = 0;
const ERROR_STREAM: u64 = 1;

/// Default burn-in: none for i.i.d. families, 100 for autoregressive ones.
pub fn default_burnin(family: ModelFamily) -> usize {
    if family.is_autoregressive() { 100 } else { 0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub family: ModelFamily,
    pub n: usize,
    pub theta: Theta,
    /// Either `n` or `n + burnin` rows; with `n` rows the burn-in period
    /// repeats the first row.
    pub exog: Option<DMatrix<f64>>,
    pub burnin: usize,
    /// Standardized innovations, `(n + burnin) x q`; replaces the Gaussian draws.
    pub eps: Option<DMatrix<f64>>,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(family: ModelFamily, n: usize, theta: Theta, seed: u64) -> Self {
        Self { family, n, theta, exog: None, burnin: default_burnin(family), eps: None, seed }
    }

    pub fn with_burnin(mut self, burnin: usize) -> Self {
        self.burnin = burnin;
        self
    }

    pub fn with_exog(mut self, exog: DMatrix<f64>) -> Self {
        self.exog = Some(exog);
        self
    }

    pub fn with_eps(mut self, eps: DMatrix<f64>) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let th = &self.theta;
        let (q, k, p) = (th.q(), th.k(), th.phi.len());
        if self.n == 0 {
            return invalid("n must be at least 1");
        }
        if th.sigma.len() != k || th.transition.m() != k {
            return Err(Error::Dimension("mu, sigma and P disagree on the number of regimes".into()));
        }
        if !self.family.is_switching() && k != 1 {
            return invalid(format!("family {} is linear and takes a single regime", self.family));
        }
        if !self.family.is_autoregressive() && p != 0 {
            return invalid(format!("family {} has no autoregressive lags", self.family));
        }
        if self.family.is_autoregressive() && p == 0 {
            return invalid(format!("family {} needs at least one lag", self.family));
        }
        if matches!(self.family, ModelFamily::Ar | ModelFamily::Arx | ModelFamily::Msar | ModelFamily::Msarx) && q != 1 {
            return invalid(format!("family {} is univariate", self.family));
        }
        if self.family.requires_exog() && (self.exog.is_none() || th.beta.nrows() == 0) {
            return invalid(format!("family {} needs exog and beta", self.family));
        }
        if th.mu.iter().any(|m| m.len() != q)
            || th.phi.iter().any(|f| f.shape() != (q, q))
            || th.sigma.iter().any(|s| s.shape() != (q, q))
            || th.beta.ncols() != q
        {
            return Err(Error::Dimension("theta blocks do not match the series count".into()));
        }
        let total = self.n + self.burnin;
        if let Some(z) = &self.exog {
            if z.ncols() != th.beta.nrows() {
                return Err(Error::Dimension(format!("exog has {} columns, beta has {} rows", z.ncols(), th.beta.nrows())));
            }
            if z.nrows() != total && z.nrows() != self.n {
                return Err(Error::Dimension(format!("exog needs {} or {total} rows, has {}", self.n, z.nrows())));
            }
        } else if th.beta.nrows() != 0 {
            return invalid("beta given without exog");
        }
        if let Some(e) = &self.eps {
            if e.shape() != (total, q) {
                return Err(Error::Dimension(format!("eps must be {total}x{q}, got {}x{}", e.nrows(), e.ncols())));
            }
        }
        for s in &th.sigma {
            lower_cholesky(s)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// `n x q` observations after burn-in.
    pub y: DMatrix<f64>,
    pub states: RegimePath,
    pub spec: DgpSpec,
    pub warnings: Vec<String>,
}

pub(crate) fn lower_cholesky(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.iter().any(|v| !v.is_finite()) || (0..s.nrows()).any(|i| s[(i, i)] <= 0.0) {
        return Err(Error::NotPositiveDefinite("covariance has a non-positive diagonal".into()));
    }
    if (s - s.transpose()).amax() > 1e-10 * s.amax() {
        return Err(Error::NotPositiveDefinite("covariance is not symmetric".into()));
    }
    s.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite("covariance".into()))
}

/// I.i.d. `N(0, sigma)` rows.
pub fn draw_errors(n: usize, sigma: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    let l = lower_cholesky(sigma)?;
    let z = standard_normals(n, sigma.nrows(), seed);
    Ok(z * l.transpose())
}

fn standard_normals(n: usize, q: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::rng_from_seed(seed);
    let mut out = DMatrix::zeros(n, q);
    for t in 0..n {
        for i in 0..q {
            out[(t, i)] = StandardNormal.sample(&mut r);
        }
    }
    out
}

pub fn simulate(spec: &DgpSpec) -> Result<SimOutput> {
    spec.validate()?;
    let th = &spec.theta;
    let (q, k, p) = (th.q(), th.k(), th.phi.len());
    let total = spec.n + spec.burnin;

    let mut warnings = Vec::new();
    if p > 0 && th.companion_spectral_radius() >= 1.0 {
        warnings.push(format!(
            "autoregressive spectral radius {:.4} is not below one",
            th.companion_spectral_radius()
        ));
    }

    let chain_seed = rng::stream_seed(spec.seed, CHAIN_STREAM);
    let states = if k == 1 {
        vec![0; total]
    } else {
        simulate_chain(&th.transition, total, chain_seed, None)?.states
    };

    let eps = match &spec.eps {
        Some(e) => e.clone(),
        None => standard_normals(total, q, rng::stream_seed(spec.seed, ERROR_STREAM)),
    };
    let chol: Vec<DMatrix<f64>> = th.sigma.iter().map(lower_cholesky).collect::<Result<_>>()?;

    let exog_row = |t: usize| -> Option<DVector<f64>> {
        spec.exog.as_ref().map(|z| {
            let row = if z.nrows() == total { t } else { t.saturating_sub(spec.burnin) };
            z.row(row).transpose()
        })
    };

    // deviations y_t - mu_{S_t}; pre-sample deviations are zero (y at the mean of S_0)
    let mut dev: Vec<DVector<f64>> = Vec::with_capacity(total);
    let mut y = DMatrix::zeros(total, q);
    for t in 0..total {
        let s = states[t];
        let mut d = &chol[s] * eps.row(t).transpose();
        for (lag, f) in th.phi.iter().enumerate() {
            if t > lag {
                d += f * &dev[t - lag - 1];
            }
        }
        if let Some(z) = exog_row(t) {
            d += th.beta.transpose() * z;
        }
        let yt = &th.mu[s] + &d;
        y.row_mut(t).copy_from(&yt.transpose());
        dev.push(d);
    }

    let y = y.rows(spec.burnin, spec.n).into_owned();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("simulated series diverged".into()));
    }
    Ok(SimOutput {
        y,
        states: RegimePath { states: states[spec.burnin..].to_vec(), seed: chain_seed },
        spec: spec.clone(),
        warnings,
    })
}

/// JSON-friendly DGP description; matrices are given as printed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    #[serde(default)]
    pub k: Option<usize>,
    /// One entry per regime: a scalar (q = 1) or a length-q vector.
    pub mu: serde_json::Value,
    /// One entry per regime: a variance (q = 1) or a `q x q` covariance.
    pub sigma: serde_json::Value,
    /// One entry per lag: a scalar (q = 1) or a `q x q` matrix.
    #[serde(default)]
    pub phi: Option<serde_json::Value>,
    /// Rows of the `n_exog x q` coefficient matrix.
    #[serde(default)]
    pub beta: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub exog: Option<Vec<Vec<f64>>>,
    /// Transition matrix rows; column `i` holds the probabilities out of regime `i`.
    #[serde(default, rename = "P")]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub burnin: Option<usize>,
    #[serde(default)]
    pub eps: Option<Vec<Vec<f64>>>,
}

fn value_to_vectors(v: &serde_json::Value, field: &str) -> Result<Vec<Vec<f64>>> {
    let arr = v.as_array().ok_or_else(|| Error::InvalidInput(format!("`{field}` must be an array")))?;
    arr.iter()
        .enumerate()
        .map(|(i, e)| match e {
            serde_json::Value::Number(x) => Ok(vec![x.as_f64().unwrap_or(f64::NAN)]),
            serde_json::Value::Array(xs) => xs
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| Error::InvalidInput(format!("`{field}[{i}]` must hold numbers"))))
                .collect(),
            _ => invalid(format!("`{field}[{i}]` must be a number or an array")),
        })
        .collect()
}

fn value_to_matrices(v: &serde_json::Value, field: &str) -> Result<Vec<DMatrix<f64>>> {
    let arr = v.as_array().ok_or_else(|| Error::InvalidInput(format!("`{field}` must be an array")))?;
    arr.iter()
        .enumerate()
        .map(|(i, e)| match e {
            serde_json::Value::Number(x) => Ok(DMatrix::from_element(1, 1, x.as_f64().unwrap_or(f64::NAN))),
            serde_json::Value::Array(_) => {
                let rows = value_to_vectors(e, &format!("{field}[{i}]"))?;
                let q = rows.len();
                if rows.iter().any(|r| r.len() != q) {
                    return Err(Error::Dimension(format!("`{field}[{i}]` must be square")));
                }
                Ok(DMatrix::from_fn(q, q, |r, c| rows[r][c]))
            }
            _ => invalid(format!("`{field}[{i}]` must be a number or a matrix")),
        })
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>> {
    let nc = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Dimension(format!("rows of `{field}` differ in length")));
    }
    Ok(DMatrix::from_fn(rows.len(), nc, |r, c| rows[r][c]))
}

impl DgpConfig {
    pub fn into_spec(self, family: ModelFamily, seed: u64) -> Result<DgpSpec> {
        let k = match (family.is_switching(), self.k) {
            (true, None) => return invalid(format!("missing required field `k` for family {family}")),
            (true, Some(k)) => k,
            (false, Some(k)) if k != 1 => return invalid(format!("family {family} is linear; `k` must be 1")),
            (false, _) => 1,
        };
        let mu = value_to_vectors(&self.mu, "mu")?;
        let sigma = value_to_matrices(&self.sigma, "sigma")?;
        let expand = |n: usize, field: &str| -> Result<()> {
            if n == 1 || n == k { Ok(()) } else { invalid(format!("`{field}` has {n} entries for k = {k}")) }
        };
        expand(mu.len(), "mu")?;
        expand(sigma.len(), "sigma")?;
        let q = mu[0].len();
        let mu: Vec<DVector<f64>> = (0..k).map(|j| DVector::from_vec(mu[j.min(mu.len() - 1)].clone())).collect();
        let sigma: Vec<DMatrix<f64>> = (0..k).map(|j| sigma[j.min(sigma.len() - 1)].clone()).collect();
        let phi = match &self.phi {
            Some(v) => value_to_matrices(v, "phi")?,
            None if family.is_autoregressive() => return invalid(format!("missing required field `phi` for family {family}")),
            None => Vec::new(),
        };
        let beta = match &self.beta {
            Some(rows) => rows_to_matrix(rows, "beta")?,
            None => DMatrix::zeros(0, q),
        };
        let transition = match (&self.transition, k) {
            (_, 1) => TransitionMatrix::single(),
            (Some(rows), _) => TransitionMatrix::from_rows(rows)?,
            (None, _) => return invalid(format!("missing required field `P` for family {family}")),
        };
        let theta = Theta { mu, phi, beta, sigma, transition };
        let mut spec = DgpSpec::new(family, self.n, theta, seed);
        if let Some(b) = self.burnin {
            spec.burnin = b;
        }
        spec.exog = self.exog.as_deref().map(|r| rows_to_matrix(r, "exog")).transpose()?;
        spec.eps = self.eps.as_deref().map(|r| rows_to_matrix(r, "eps")).transpose()?;
        spec.validate()?;
        Ok(spec)
    }
}
