//! Linear fits, EM and bounded maximum likelihood for switching models.

mod em;
mod init;
mod linear;
mod mle;
mod se;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::likelihood::{self, build_composite, ResidualParts, SmootherOutput};
use crate::model::{ModelSpec, Sample, Theta};
use crate::rng;

pub use em::em_from;
pub use init::initial_values;
pub use linear::fit_linear;
pub use mle::{mle_from, Bounds};
pub use se::standard_errors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Em,
    Mle,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(Self::Em),
            "mle" => Ok(Self::Mle),
            _ => invalid(format!("unknown estimation method `{s}` (expected em or mle)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimOptions {
    pub msmu: bool,
    pub msvar: bool,
    pub method: Method,
    /// Number of random starts.
    pub use_diff_init: usize,
    pub maxit: usize,
    /// Absolute log-likelihood improvement below which EM stops.
    pub tol: f64,
    #[serde(rename = "getSE")]
    pub get_se: bool,
    /// Lower bounds in the reported (flat) parameter layout; MLE only.
    pub mle_theta_low: Option<Vec<f64>>,
    pub mle_theta_upp: Option<Vec<f64>>,
    /// Transition probabilities kept in `[eps, 1 - eps]`; MLE only.
    pub trans_prob_eps: Option<f64>,
    /// Lower bound on variances; MLE only.
    pub var_lower: Option<f64>,
    /// Polish the EM solution with bounded maximum likelihood.
    pub mle_refine: bool,
    pub seed: u64,
}

impl Default for EstimOptions {
    fn default() -> Self {
        Self {
            msmu: true,
            msvar: true,
            method: Method::Em,
            use_diff_init: 1,
            maxit: 500,
            tol: 1e-8,
            get_se: true,
            mle_theta_low: None,
            mle_theta_upp: None,
            trans_prob_eps: None,
            var_lower: None,
            mle_refine: false,
            seed: 0,
        }
    }
}

impl EstimOptions {
    pub fn validate(&self) -> Result<()> {
        if self.use_diff_init == 0 {
            return invalid("use_diff_init must be at least 1");
        }
        if !(self.tol > 0.0) {
            return invalid("tol must be positive");
        }
        if let (Some(l), Some(u)) = (&self.mle_theta_low, &self.mle_theta_upp) {
            if l.len() != u.len() {
                return invalid("mle_theta_low and mle_theta_upp differ in length");
            }
            if let Some(i) = (0..l.len()).find(|&i| l[i] > u[i]) {
                return invalid(format!("mle_theta_low[{i}] exceeds mle_theta_upp[{i}]"));
            }
        }
        if let Some(e) = self.trans_prob_eps {
            if !(0.0..0.5).contains(&e) {
                return invalid(format!("trans_prob_eps must lie in [0, 0.5), got {e}"));
            }
        }
        if let Some(v) = self.var_lower {
            if !(v >= 0.0) {
                return invalid("var_lower must be non-negative");
            }
        }
        Ok(())
    }
}

/// One random start of a switching fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: usize,
    /// Initial parameters in the flat layout.
    pub init: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    /// Log-likelihood after each iteration (EM) or at the end (MLE).
    pub path: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub theta: Theta,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    /// Standard errors in the flat layout; `None` entries could not be computed.
    pub se: Option<Vec<Option<f64>>>,
    /// `T_eff x k` smoothed regime probabilities.
    pub smoothed: DMatrix<f64>,
    /// `T_eff x q` residuals, averaged over smoothed composite states.
    pub residuals: DMatrix<f64>,
    pub trace: Vec<StartTrace>,
    pub converged: bool,
    pub t_eff: usize,
    pub warnings: Vec<String>,
    /// Zero residual variance in a linear fit.
    pub degenerate: bool,
}

impl FittedModel {
    pub fn param_names(&self) -> Vec<String> {
        self.spec.param_names()
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.theta.to_flat(&self.spec)
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_params()
    }
}

pub(crate) fn information_criteria(loglik: f64, n_params: usize, t_eff: usize) -> (f64, f64) {
    let k = n_params as f64;
    (2.0 * k - 2.0 * loglik, k * (t_eff as f64).ln() - 2.0 * loglik)
}

/// Smoothed probabilities, residuals and information criteria at `theta`.
pub(crate) fn assemble(
    sample: &Sample,
    spec: ModelSpec,
    theta: Theta,
    trace: Vec<StartTrace>,
    converged: bool,
    warnings: Vec<String>,
) -> Result<FittedModel> {
    let space = build_composite(&theta.transition, spec.p);
    let filter = likelihood::hamilton_filter(&theta, sample, &spec)?;
    let SmootherOutput { xi_smoothed, composite, .. } = likelihood::kim_smoother(&filter, &space);
    let parts = ResidualParts::new(&theta, sample, &space);
    let t_eff = filter.t_eff();
    let q = spec.q;
    let mut residuals = DMatrix::zeros(t_eff, q);
    let mut e = vec![0.0; q];
    for t in 0..t_eff {
        for s in 0..space.size {
            let w = composite[t * space.size + s];
            if w == 0.0 {
                continue;
            }
            parts.residual(t, s, &mut e);
            for i in 0..q {
                residuals[(t, i)] += w * e[i];
            }
        }
    }
    let (aic, bic) = information_criteria(filter.loglik, spec.n_params(), t_eff);
    Ok(FittedModel {
        spec,
        theta,
        loglik: filter.loglik,
        aic,
        bic,
        se: None,
        smoothed: xi_smoothed,
        residuals,
        trace,
        converged,
        t_eff,
        warnings,
        degenerate: false,
    })
}

fn check_sample(sample: &Sample, spec: &ModelSpec) -> Result<()> {
    spec.validate()?;
    if sample.q() != spec.q || sample.n_exog() != spec.n_exog {
        return Err(Error::Dimension(format!(
            "data have {} series and {} regressors, model expects {} and {}",
            sample.q(),
            sample.n_exog(),
            spec.q,
            spec.n_exog
        )));
    }
    let regressors = 1 + spec.p * spec.q + spec.n_exog;
    if sample.t() <= spec.p + regressors {
        return invalid(format!("need more than {} observations, got {}", spec.p + regressors, sample.t()));
    }
    Ok(())
}

/// Fits `spec`, with `k = 1` handled in closed form.
pub fn fit(sample: &Sample, spec: &ModelSpec, options: &EstimOptions) -> Result<FittedModel> {
    options.validate()?;
    check_sample(sample, spec)?;
    if spec.k == 1 {
        let mut f = fit_linear(sample, spec.p)?;
        if !options.get_se {
            f.se = None;
        }
        return Ok(f);
    }
    let linear = fit_linear(sample, spec.p)?;
    if linear.degenerate {
        return Err(Error::Degenerate("series has zero residual variance".into()));
    }
    let bounds = Bounds::from_options(spec, options)?;
    let starts: Vec<Result<(Theta, StartTrace, Vec<String>)>> = (0..options.use_diff_init)
        .into_par_iter()
        .map(|i| run_start(sample, spec, options, &linear, &bounds, i))
        .collect();

    let mut best: Option<(Theta, usize)> = None;
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut last_err = None;
    for r in starts {
        match r {
            Ok((theta, t, w)) => {
                if best.as_ref().is_none_or(|(_, b)| t.loglik > trace_ll(&trace, *b)) {
                    best = Some((theta, trace.len()));
                }
                warnings.extend(w);
                trace.push(t);
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((theta, idx)) = best else {
        return Err(last_err.unwrap_or_else(|| Error::Estimation("no start succeeded".into())));
    };
    let converged = trace[idx].converged;
    warnings.sort();
    warnings.dedup();
    let perm = theta.canonical_order();
    let theta = theta.permuted(&perm);
    let mut fitted = assemble(sample, *spec, theta, trace, converged, warnings)?;
    if options.get_se {
        fitted.se = Some(standard_errors(&fitted, sample, &bounds));
    }
    Ok(fitted)
}

fn trace_ll(trace: &[StartTrace], idx: usize) -> f64 {
    trace[idx].loglik
}

fn run_start(
    sample: &Sample,
    spec: &ModelSpec,
    options: &EstimOptions,
    linear: &FittedModel,
    bounds: &Bounds,
    start: usize,
) -> Result<(Theta, StartTrace, Vec<String>)> {
    let seed = rng::stream_seed(options.seed, start as u64);
    let mut restarts = 0;
    loop {
        let init = initial_values(spec, linear, rng::stream_seed(seed, restarts as u64))?;
        let attempt = match options.method {
            Method::Em => em_from(sample, spec, &init, options).and_then(|mut r| {
                if options.mle_refine {
                    let m = mle_from(sample, spec, &r.theta, bounds, options)?;
                    if m.loglik >= r.loglik {
                        r.path.push(m.loglik);
                        r.theta = m.theta;
                        r.loglik = m.loglik;
                    }
                }
                Ok(r)
            }),
            Method::Mle => {
                let warm = em_from(sample, spec, &init, &EstimOptions { maxit: 100, tol: 1e-6, ..options.clone() })
                    .map(|r| r.theta)
                    .unwrap_or_else(|_| init.clone());
                mle_from(sample, spec, &warm, bounds, options)
            }
        };
        match attempt {
            Ok(r) if !r.degenerate => {
                let t = StartTrace {
                    start,
                    init: init.to_flat(spec),
                    loglik: r.loglik,
                    iterations: r.iterations,
                    converged: r.converged,
                    restarts,
                    path: r.path,
                };
                return Ok((r.theta, t, r.warnings));
            }
            Ok(_) | Err(_) if restarts < MAX_RESTARTS => restarts += 1,
            Ok(_) => return Err(Error::Estimation(format!("start {start}: degenerate regime after {MAX_RESTARTS} restarts"))),
            Err(e) => return Err(e),
        }
    }
}

const MAX_RESTARTS: usize = 10;

/// Result of one local run (EM or MLE) from a given start.
#[derive(Debug, Clone)]
pub struct LocalFit {
    pub theta: Theta,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub path: Vec<f64>,
    /// A regime lost (almost) all of its smoothed mass.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}
