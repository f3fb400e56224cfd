//! Model families, specifications and the parameter vector.
//!
//! The flat parameter layout is `[mu | phi | beta | sigma (vech) | vec(P)]`.
//! Means and covariances are stored once per regime even when they do not
//! switch; the flat layout collapses them according to `msmu` / `msvar`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::markov::TransitionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Normal,
    Ar,
    Arx,
    Var,
    Varx,
    Msar,
    Msarx,
    Msvar,
    Msvarx,
    Hmm,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 10] = [
        ModelFamily::Normal,
        ModelFamily::Ar,
        ModelFamily::Arx,
        ModelFamily::Var,
        ModelFamily::Varx,
        ModelFamily::Msar,
        ModelFamily::Msarx,
        ModelFamily::Msvar,
        ModelFamily::Msvarx,
        ModelFamily::Hmm,
    ];

    pub fn is_switching(self) -> bool {
        matches!(self, Self::Msar | Self::Msarx | Self::Msvar | Self::Msvarx | Self::Hmm)
    }

    pub fn is_autoregressive(self) -> bool {
        !matches!(self, Self::Normal | Self::Hmm)
    }

    pub fn requires_exog(self) -> bool {
        matches!(self, Self::Arx | Self::Varx | Self::Msarx | Self::Msvarx)
    }

    pub fn is_vector(self) -> bool {
        matches!(self, Self::Var | Self::Varx | Self::Msvar | Self::Msvarx)
    }

    /// The non-switching family with the same dynamics.
    pub fn linear_counterpart(self) -> Self {
        match self {
            Self::Msar => Self::Ar,
            Self::Msarx => Self::Arx,
            Self::Msvar => Self::Var,
            Self::Msvarx => Self::Varx,
            Self::Hmm => Self::Normal,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Ar => "ar",
            Self::Arx => "arx",
            Self::Var => "var",
            Self::Varx => "varx",
            Self::Msar => "msar",
            Self::Msarx => "msarx",
            Self::Msvar => "msvar",
            Self::Msvarx => "msvarx",
            Self::Hmm => "hmm",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|f| f.name() == lower)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Number of series.
    pub q: usize,
    /// Autoregressive lag order.
    pub p: usize,
    /// Number of regimes.
    pub k: usize,
    /// Number of exogenous regressors.
    pub n_exog: usize,
    pub msmu: bool,
    pub msvar: bool,
}

/// Index ranges of each parameter block inside a flat or free vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub mu: Range<usize>,
    pub phi: Range<usize>,
    pub beta: Range<usize>,
    pub sigma: Range<usize>,
    pub transition: Range<usize>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.transition.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ModelSpec {
    pub fn linear(q: usize, p: usize, n_exog: usize) -> Self {
        Self { q, p, k: 1, n_exog, msmu: false, msvar: false }
    }

    pub fn switching(q: usize, p: usize, k: usize, n_exog: usize, msmu: bool, msvar: bool) -> Self {
        Self { q, p, k, n_exog, msmu, msvar }
    }

    pub fn is_linear(&self) -> bool {
        self.k == 1
    }

    pub fn mean_switches(&self) -> bool {
        self.k > 1 && self.msmu
    }

    pub fn variance_switches(&self) -> bool {
        self.k > 1 && self.msvar
    }

    pub fn family(&self) -> ModelFamily {
        let exog = self.n_exog > 0;
        match (self.k > 1, self.p > 0, self.q > 1, exog) {
            (false, false, _, _) => ModelFamily::Normal,
            (false, true, false, false) => ModelFamily::Ar,
            (false, true, false, true) => ModelFamily::Arx,
            (false, true, true, false) => ModelFamily::Var,
            (false, true, true, true) => ModelFamily::Varx,
            (true, false, _, _) => ModelFamily::Hmm,
            (true, true, false, false) => ModelFamily::Msar,
            (true, true, false, true) => ModelFamily::Msarx,
            (true, true, true, false) => ModelFamily::Msvar,
            (true, true, true, true) => ModelFamily::Msvarx,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.k == 0 {
            return invalid("model needs at least one series and one regime");
        }
        if self.k > 1 && !self.msmu && !self.msvar {
            return invalid("a switching model needs a switching mean or a switching variance");
        }
        Ok(())
    }

    fn n_mu(&self) -> usize {
        if self.mean_switches() { self.k * self.q } else { self.q }
    }

    fn n_vech(&self) -> usize {
        self.q * (self.q + 1) / 2
    }

    fn n_sigma(&self) -> usize {
        if self.variance_switches() { self.k * self.n_vech() } else { self.n_vech() }
    }

    fn layout_with(&self, n_transition: usize) -> Layout {
        let mu = 0..self.n_mu();
        let phi = mu.end..mu.end + self.p * self.q * self.q;
        let beta = phi.end..phi.end + self.n_exog * self.q;
        let sigma = beta.end..beta.end + self.n_sigma();
        let transition = sigma.end..sigma.end + n_transition;
        Layout { mu, phi, beta, sigma, transition }
    }

    /// Layout of the reported parameter vector (full `vec(P)`).
    pub fn flat_layout(&self) -> Layout {
        self.layout_with(if self.k > 1 { self.k * self.k } else { 0 })
    }

    /// Layout of the free parameters (last row of each column of `P` dropped).
    pub fn free_layout(&self) -> Layout {
        self.layout_with(if self.k > 1 { self.k * (self.k - 1) } else { 0 })
    }

    /// Parameter count used for information criteria (all reported coefficients).
    pub fn n_params(&self) -> usize {
        self.flat_layout().len()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_params());
        let q1 = self.q == 1;
        if self.mean_switches() {
            for j in 0..self.k {
                for i in 0..self.q {
                    names.push(if q1 { format!("mu_{}", j + 1) } else { format!("mu_{},{}", j + 1, i + 1) });
                }
            }
        } else {
            for i in 0..self.q {
                names.push(if q1 { "mu".to_string() } else { format!("mu_{}", i + 1) });
            }
        }
        for l in 0..self.p {
            for r in 0..self.q {
                for c in 0..self.q {
                    names.push(if q1 { format!("phi_{}", l + 1) } else { format!("phi_{},{}{}", l + 1, r + 1, c + 1) });
                }
            }
        }
        for r in 0..self.n_exog {
            for c in 0..self.q {
                names.push(if q1 { format!("beta_{}", r + 1) } else { format!("beta_{},{}", r + 1, c + 1) });
            }
        }
        let regimes = if self.variance_switches() { self.k } else { 1 };
        for j in 0..regimes {
            for (a, b) in vech_pairs(self.q) {
                let base = if q1 { "sig".to_string() } else { format!("sig_{}{}", a + 1, b + 1) };
                names.push(match (self.variance_switches(), q1) {
                    (true, true) => format!("{base}_{}", j + 1),
                    (true, false) => format!("{base},{}", j + 1),
                    (false, _) => base,
                });
            }
        }
        if self.k > 1 {
            for from in 0..self.k {
                for to in 0..self.k {
                    names.push(format!("p_{}{}", from + 1, to + 1));
                }
            }
        }
        names
    }
}

/// Upper-triangle pairs `(i, j)`, `i <= j`, in row order: (1,1), (1,2), (2,2).
pub fn vech_pairs(q: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(q * (q + 1) / 2);
    for i in 0..q {
        for j in i..q {
            v.push((i, j));
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    /// Regime means, one per regime (identical when the mean does not switch).
    pub mu: Vec<DVector<f64>>,
    /// Autoregressive matrices `Phi_1..Phi_p`, each `q x q`.
    pub phi: Vec<DMatrix<f64>>,
    /// Exogenous coefficients, `n_exog x q`.
    pub beta: DMatrix<f64>,
    /// Regime covariances (variances when `q = 1`).
    pub sigma: Vec<DMatrix<f64>>,
    pub transition: TransitionMatrix,
}

impl Theta {
    pub fn linear(mu: DVector<f64>, phi: Vec<DMatrix<f64>>, beta: DMatrix<f64>, sigma: DMatrix<f64>) -> Self {
        Self { mu: vec![mu], phi, beta, sigma: vec![sigma], transition: TransitionMatrix::single() }
    }

    /// Univariate convenience constructor; `sigma2` are variances.
    pub fn univariate(mu: &[f64], phi: &[f64], sigma2: &[f64], transition: TransitionMatrix) -> Result<Self> {
        let k = transition.m();
        let expand = |v: &[f64], what: &str| -> Result<Vec<f64>> {
            match v.len() {
                1 => Ok(vec![v[0]; k]),
                n if n == k => Ok(v.to_vec()),
                n => invalid(format!("{what} has {n} entries for {k} regimes")),
            }
        };
        let mu = expand(mu, "mu")?;
        let sigma2 = expand(sigma2, "sigma")?;
        Ok(Self {
            mu: mu.iter().map(|&m| DVector::from_element(1, m)).collect(),
            phi: phi.iter().map(|&f| DMatrix::from_element(1, 1, f)).collect(),
            beta: DMatrix::zeros(0, 1),
            sigma: sigma2.iter().map(|&s| DMatrix::from_element(1, 1, s)).collect(),
            transition,
        })
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn q(&self) -> usize {
        self.mu[0].len()
    }

    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        let (q, k) = (spec.q, spec.k);
        if self.mu.len() != k || self.sigma.len() != k || self.transition.m() != k {
            return Err(Error::Dimension(format!("theta has {} regimes, spec has {k}", self.mu.len())));
        }
        if self.phi.len() != spec.p {
            return Err(Error::Dimension(format!("theta has {} lags, spec has {}", self.phi.len(), spec.p)));
        }
        if self.mu.iter().any(|m| m.len() != q)
            || self.phi.iter().any(|f| f.shape() != (q, q))
            || self.sigma.iter().any(|s| s.shape() != (q, q))
            || self.beta.shape() != (spec.n_exog, q)
        {
            return Err(Error::Dimension("theta blocks do not match the model dimensions".into()));
        }
        for (j, s) in self.sigma.iter().enumerate() {
            if q == 1 {
                if !(s[(0, 0)] > 0.0) {
                    return Err(Error::Domain(format!("variance of regime {} is {}", j + 1, s[(0, 0)])));
                }
            } else if s.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite(format!("covariance of regime {}", j + 1)));
            }
        }
        Ok(())
    }

    fn write_common(&self, spec: &ModelSpec, out: &mut Vec<f64>) {
        let regimes_mu = if spec.mean_switches() { spec.k } else { 1 };
        for j in 0..regimes_mu {
            out.extend(self.mu[j].iter());
        }
        for f in &self.phi {
            for r in 0..spec.q {
                for c in 0..spec.q {
                    out.push(f[(r, c)]);
                }
            }
        }
        for r in 0..spec.n_exog {
            for c in 0..spec.q {
                out.push(self.beta[(r, c)]);
            }
        }
        let regimes_sig = if spec.variance_switches() { spec.k } else { 1 };
        for j in 0..regimes_sig {
            for (a, b) in vech_pairs(spec.q) {
                out.push(self.sigma[j][(a, b)]);
            }
        }
    }

    pub fn to_flat(&self, spec: &ModelSpec) -> Vec<f64> {
        let mut out = Vec::with_capacity(spec.n_params());
        self.write_common(spec, &mut out);
        if spec.k > 1 {
            for from in 0..spec.k {
                for to in 0..spec.k {
                    out.push(self.transition.prob(to, from));
                }
            }
        }
        out
    }

    pub fn to_free(&self, spec: &ModelSpec) -> Vec<f64> {
        let mut out = Vec::with_capacity(spec.free_layout().len());
        self.write_common(spec, &mut out);
        if spec.k > 1 {
            for from in 0..spec.k {
                for to in 0..spec.k - 1 {
                    out.push(self.transition.prob(to, from));
                }
            }
        }
        out
    }

    fn read_common(spec: &ModelSpec, v: &[f64], layout: &Layout) -> (Vec<DVector<f64>>, Vec<DMatrix<f64>>, DMatrix<f64>, Vec<DMatrix<f64>>) {
        let q = spec.q;
        let mu_v = &v[layout.mu.clone()];
        let mu: Vec<DVector<f64>> = (0..spec.k)
            .map(|j| {
                let j = if spec.mean_switches() { j } else { 0 };
                DVector::from_column_slice(&mu_v[j * q..(j + 1) * q])
            })
            .collect();
        let phi_v = &v[layout.phi.clone()];
        let phi = (0..spec.p).map(|l| DMatrix::from_row_slice(q, q, &phi_v[l * q * q..(l + 1) * q * q])).collect();
        let beta = DMatrix::from_row_slice(spec.n_exog, q, &v[layout.beta.clone()]);
        let sig_v = &v[layout.sigma.clone()];
        let nv = q * (q + 1) / 2;
        let sigma = (0..spec.k)
            .map(|j| {
                let j = if spec.variance_switches() { j } else { 0 };
                let mut s = DMatrix::zeros(q, q);
                for (idx, (a, b)) in vech_pairs(q).into_iter().enumerate() {
                    s[(a, b)] = sig_v[j * nv + idx];
                    s[(b, a)] = sig_v[j * nv + idx];
                }
                s
            })
            .collect();
        (mu, phi, beta, sigma)
    }

    pub fn from_flat(spec: &ModelSpec, v: &[f64]) -> Result<Self> {
        let layout = spec.flat_layout();
        if v.len() != layout.len() {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", layout.len(), v.len())));
        }
        let (mu, phi, beta, sigma) = Self::read_common(spec, v, &layout);
        let transition = if spec.k > 1 {
            let t = &v[layout.transition.clone()];
            TransitionMatrix::new(DMatrix::from_fn(spec.k, spec.k, |to, from| t[from * spec.k + to]))?
        } else {
            TransitionMatrix::single()
        };
        Ok(Self { mu, phi, beta, sigma, transition })
    }

    /// Inverse of [`Theta::to_free`]; the last row of `P` is `1 - sum(others)`.
    pub fn from_free(spec: &ModelSpec, v: &[f64]) -> Result<Self> {
        let layout = spec.free_layout();
        if v.len() != layout.len() {
            return Err(Error::Dimension(format!("expected {} free parameters, got {}", layout.len(), v.len())));
        }
        let (mu, phi, beta, sigma) = Self::read_common(spec, v, &layout);
        let transition = if spec.k > 1 {
            let k = spec.k;
            let t = &v[layout.transition.clone()];
            let mut mat = DMatrix::zeros(k, k);
            for from in 0..k {
                let mut rest = 1.0;
                for to in 0..k - 1 {
                    mat[(to, from)] = t[from * (k - 1) + to];
                    rest -= t[from * (k - 1) + to];
                }
                mat[(k - 1, from)] = rest;
            }
            TransitionMatrix::new(mat)?
        } else {
            TransitionMatrix::single()
        };
        Ok(Self { mu, phi, beta, sigma, transition })
    }

    /// New regime `a` takes old regime `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            mu: perm.iter().map(|&j| self.mu[j].clone()).collect(),
            phi: self.phi.clone(),
            beta: self.beta.clone(),
            sigma: perm.iter().map(|&j| self.sigma[j].clone()).collect(),
            transition: self.transition.permuted(perm),
        }
    }

    /// Regime order sorting by the first-series mean, ties by first variance.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.k()).collect();
        perm.sort_by(|&a, &b| {
            self.mu[a][0]
                .total_cmp(&self.mu[b][0])
                .then(self.sigma[a][(0, 0)].total_cmp(&self.sigma[b][(0, 0)]))
        });
        perm
    }

    /// Sum of the AR matrices, `Phi(1) = Phi_1 + ... + Phi_p`.
    pub fn phi_sum(&self) -> DMatrix<f64> {
        let q = self.q();
        self.phi.iter().fold(DMatrix::zeros(q, q), |acc, f| acc + f)
    }

    /// Spectral radius of the VAR companion matrix (0 without lags).
    pub fn companion_spectral_radius(&self) -> f64 {
        let p = self.phi.len();
        if p == 0 {
            return 0.0;
        }
        let q = self.q();
        let n = p * q;
        let mut c = DMatrix::zeros(n, n);
        for (l, f) in self.phi.iter().enumerate() {
            c.view_mut((0, l * q), (q, q)).copy_from(f);
        }
        for i in q..n {
            c[(i, i - q)] = 1.0;
        }
        c.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Observed data: `T x q` series and optional `T x n_exog` regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub y: DMatrix<f64>,
    pub exog: Option<DMatrix<f64>>,
}

impl Sample {
    pub fn new(y: DMatrix<f64>, exog: Option<DMatrix<f64>>) -> Result<Self> {
        if let Some(z) = &exog {
            if z.nrows() != y.nrows() {
                return Err(Error::Dimension(format!("exog has {} rows, y has {}", z.nrows(), y.nrows())));
            }
        }
        if y.iter().chain(exog.iter().flat_map(|z| z.iter())).any(|v| !v.is_finite()) {
            return invalid("data contain non-finite values");
        }
        Ok(Self { y, exog })
    }

    pub fn univariate(y: &[f64]) -> Self {
        Self { y: DMatrix::from_column_slice(y.len(), 1, y), exog: None }
    }

    pub fn t(&self) -> usize {
        self.y.nrows()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_exog(&self) -> usize {
        self.exog.as_ref().map_or(0, |z| z.ncols())
    }

    /// Column `i` as a plain vector.
    pub fn series(&self, i: usize) -> Vec<f64> {
        self.y.column(i).iter().copied().collect()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { y: &self.y * a, exog: self.exog.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msar_theta() -> (ModelSpec, Theta) {
        let spec = ModelSpec::switching(1, 1, 2, 0, true, true);
        let p = TransitionMatrix::two_regime(0.95, 0.90).unwrap();
        (spec, Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], p).unwrap())
    }

    #[test]
    fn msar_names_match_summary_rows() {
        let (spec, _) = msar_theta();
        assert_eq!(
            spec.param_names(),
            ["mu_1", "mu_2", "phi_1", "sig_1", "sig_2", "p_11", "p_12", "p_21", "p_22"]
        );
        assert_eq!(spec.n_params(), 9);
        assert_eq!(spec.family(), ModelFamily::Msar);
    }

    #[test]
    fn hmm_names() {
        let spec = ModelSpec::switching(2, 0, 2, 0, true, true);
        let names = spec.param_names();
        assert_eq!(names.len(), 14);
        assert_eq!(names[0], "mu_1,1");
        assert_eq!(names[4], "sig_11,1");
        assert_eq!(names[5], "sig_12,1");
        assert_eq!(spec.family(), ModelFamily::Hmm);
    }

    #[test]
    fn flat_and_free_round_trip() {
        let (spec, theta) = msar_theta();
        let flat = theta.to_flat(&spec);
        let expected = [5.0, 10.0, 0.75, 1.0, 2.0, 0.95, 0.05, 0.10, 0.90];
        assert!(flat.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(Theta::from_flat(&spec, &flat).unwrap(), theta);
        let free = theta.to_free(&spec);
        assert_eq!(free.len(), 7);
        let back = Theta::from_free(&spec, &free).unwrap();
        assert!((back.transition.prob(1, 0) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn non_switching_blocks_collapse() {
        let spec = ModelSpec::switching(1, 2, 2, 0, true, false);
        assert_eq!(spec.param_names(), ["mu_1", "mu_2", "phi_1", "phi_2", "sig", "p_11", "p_12", "p_21", "p_22"]);
    }

    #[test]
    fn canonical_order_sorts_means() {
        let (_, theta) = msar_theta();
        let flipped = theta.permuted(&[1, 0]);
        assert_eq!(flipped.mu[0][0], 10.0);
        assert_eq!(flipped.transition.prob(0, 0), 0.90);
        let perm = flipped.canonical_order();
        assert_eq!(flipped.permuted(&perm), theta);
    }

    #[test]
    fn companion_radius() {
        let t = Theta::univariate(&[0.0], &[0.5, 0.3], &[1.0], TransitionMatrix::single()).unwrap();
        // roots of z^2 - 0.5 z - 0.3
        let expected = (0.5 + (0.25f64 + 1.2).sqrt()) / 2.0;
        assert!((t.companion_spectral_radius() - expected).abs() < 1e-10);
    }

    #[test]
    fn family_parsing() {
        assert_eq!("MSVARX".parse::<ModelFamily>().unwrap(), ModelFamily::Msvarx);
        assert!("garch".parse::<ModelFamily>().is_err());
    }
}
