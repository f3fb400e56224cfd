//! Local and maximized Monte Carlo likelihood-ratio tests for the number of regimes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimation::{fit, standard_errors, Bounds, EstimOptions, FittedModel, Method};
use crate::mc::{mc_pvalue, simulate_null_stats, with_workers, McResult, StatRow, TestResult};
use crate::model::{ModelSpec, Sample, Theta};
use crate::optim::{maximize, Optimizer, SearchProblem};
use crate::rng;

/// Seed stream used for tie-breaking draws.
const TIE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrTestConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub k0: usize,
    pub k1: usize,
    pub p: usize,
    pub mdl_h0_options: EstimOptions,
    pub mdl_h1_options: EstimOptions,
    /// Starts used when refitting simulated data; defaults to the observed-data setting.
    pub use_diff_init_sim: Option<usize>,
    /// 0 uses the current thread pool.
    pub workers: usize,
    pub seed: u64,
}

impl Default for LrTestConfig {
    fn default() -> Self {
        Self {
            n: 99,
            k0: 1,
            k1: 2,
            p: 1,
            mdl_h0_options: EstimOptions { get_se: false, ..Default::default() },
            mdl_h1_options: EstimOptions { get_se: false, ..Default::default() },
            use_diff_init_sim: None,
            workers: 0,
            seed: 0,
        }
    }
}

impl LrTestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k0 == 0 || self.k0 >= self.k1 {
            return invalid(format!("need 1 <= k0 < k1, got k0 = {}, k1 = {}", self.k0, self.k1));
        }
        if self.n == 0 {
            return invalid("N must be at least 1");
        }
        if self.use_diff_init_sim == Some(0) {
            return invalid("use_diff_init_sim must be at least 1");
        }
        self.mdl_h0_options.validate()?;
        self.mdl_h1_options.validate()
    }

    fn sim_options(&self, base: &EstimOptions, seed: u64) -> EstimOptions {
        EstimOptions {
            use_diff_init: self.use_diff_init_sim.unwrap_or(base.use_diff_init),
            get_se: false,
            seed,
            ..base.clone()
        }
    }
}

/// Extra controls of the maximized test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmcConfig {
    #[serde(flatten)]
    pub lrt: LrTestConfig,
    /// Half-width of the fixed-radius box around the null estimate.
    pub eps: f64,
    /// Also include the `2 x s.e.` box.
    #[serde(rename = "CI_union")]
    pub ci_union: bool,
    pub optimizer: Optimizer,
    /// Stop the search once the p-value reaches this level (default 1).
    pub threshold_stop: Option<f64>,
    /// Search budget in p-value evaluations.
    pub maxit: usize,
}

impl Default for MmcConfig {
    fn default() -> Self {
        Self { lrt: LrTestConfig::default(), eps: 0.0, ci_union: true, optimizer: Optimizer::Pso, threshold_stop: None, maxit: 50 }
    }
}

fn model_spec(sample: &Sample, p: usize, k: usize, options: &EstimOptions) -> ModelSpec {
    if k == 1 {
        ModelSpec::linear(sample.q(), p, sample.n_exog())
    } else {
        ModelSpec::switching(sample.q(), p, k, sample.n_exog(), options.msmu, options.msvar)
    }
}

/// `LR = 2 (loglik1 - loglik0)` with both models fitted to `sample`.
///
/// Values in `(-1e-6, 0)` are set to zero. A more negative value triggers a
/// refit of the alternative with twice as many starts; if the statistic is
/// still negative it is set to zero and a warning is returned.
pub fn lr_statistic(
    sample: &Sample,
    p: usize,
    k0: usize,
    k1: usize,
    h0: &EstimOptions,
    h1: &EstimOptions,
) -> Result<(f64, FittedModel, FittedModel, Vec<String>)> {
    let fit0 = fit(sample, &model_spec(sample, p, k0, h0), h0)?;
    let spec1 = model_spec(sample, p, k1, h1);
    let mut fit1 = fit(sample, &spec1, h1)?;
    let mut warnings = Vec::new();
    let mut lr = 2.0 * (fit1.loglik - fit0.loglik);
    if lr <= -1e-6 {
        let more = EstimOptions { use_diff_init: 2 * h1.use_diff_init, seed: rng::stream_seed(h1.seed, 1), ..h1.clone() };
        let refit = fit(sample, &spec1, &more)?;
        if refit.loglik > fit1.loglik {
            fit1 = refit;
        }
        lr = 2.0 * (fit1.loglik - fit0.loglik);
        if lr <= -1e-6 {
            warnings.push(format!("alternative log-likelihood below the null by {:.3e}; statistic set to 0", -lr / 2.0));
        }
    }
    Ok((lr.max(0.0), fit0, fit1, warnings))
}

/// Monte Carlo p-value of `lr0` with the null simulated at `null_fit`.
fn lmc_at(sample: &Sample, null_fit: &FittedModel, lr0: f64, config: &LrTestConfig) -> Result<(McResult, usize)> {
    let stat = |data: &Sample, s: u64| -> Result<f64> {
        let h0 = config.sim_options(&config.mdl_h0_options, rng::stream_seed(s, 0));
        let h1 = config.sim_options(&config.mdl_h1_options, rng::stream_seed(s, 1));
        Ok(lr_statistic(data, config.p, config.k0, config.k1, &h0, &h1)?.0)
    };
    let reps = simulate_null_stats(null_fit, sample, stat, config.n, config.seed, 0)?;
    Ok((mc_pvalue(lr0, &reps.values, rng::stream_seed(config.seed, TIE_STREAM))?, reps.failed))
}

fn check_sample(sample: &Sample, p: usize) -> Result<()> {
    if sample.t() < p + 10 {
        return invalid(format!("need at least {} observations for p = {p}", p + 10));
    }
    Ok(())
}

/// Local Monte Carlo LR test: the null is simulated at its point estimate.
pub fn lmc_lrt(sample: &Sample, config: &LrTestConfig) -> Result<TestResult> {
    config.validate()?;
    check_sample(sample, config.p)?;
    with_workers(config.workers, || {
        let (lr0, fit0, fit1, warnings) =
            lr_statistic(sample, config.p, config.k0, config.k1, &config.mdl_h0_options, &config.mdl_h1_options)?;
        let (mc, failed) = lmc_at(sample, &fit0, lr0, config)?;
        let mut out = TestResult::new("lmc-lrt");
        out.rows.push(StatRow { name: "LMC_LRT".into(), statistic: lr0, critical_values: mc.quantiles, pvalue: mc.pvalue });
        out.detail("rank", mc.rank);
        out.detail("N", mc.null_stats.len());
        out.detail("null_stats", &mc.null_stats);
        out.failed_replications = failed;
        out.warnings = warnings;
        out.fit0 = Some(fit0);
        out.fit1 = Some(fit1);
        Ok(out)
    })?
}

/// Search box for the null parameters (free layout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistentSet {
    pub center: Vec<f64>,
    pub eps: f64,
    pub use_ci_union: bool,
    /// Half-widths `2 x s.e.`; zero where no standard error is available.
    pub ci_width: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ConsistentSet {
    /// Box `center +- eps`, widened to `center +- 2 s.e.` when `use_ci_union`,
    /// then clipped to positive variances and probabilities in `[0, 1]`.
    pub fn new(spec: &ModelSpec, center: Vec<f64>, se: &[Option<f64>], eps: f64, use_ci_union: bool) -> Result<Self> {
        if !(eps >= 0.0) {
            return invalid("eps must be non-negative");
        }
        let layout = spec.free_layout();
        if center.len() != layout.len() || se.len() != layout.len() {
            return Err(Error::Dimension("consistent set center and standard errors differ in length".into()));
        }
        let ci_width: Vec<f64> = se.iter().map(|s| 2.0 * s.unwrap_or(0.0)).collect();
        let mut lower = Vec::with_capacity(center.len());
        let mut upper = Vec::with_capacity(center.len());
        for i in 0..center.len() {
            let half = if use_ci_union { eps.max(ci_width[i]) } else { eps };
            let (mut lo, mut hi) = (center[i] - half, center[i] + half);
            if spec.q == 1 && layout.sigma.contains(&i) {
                let floor = 1e-3 * center[i];
                lo = lo.max(floor);
                hi = hi.max(floor);
            }
            if layout.transition.contains(&i) {
                lo = lo.clamp(0.0, 1.0);
                hi = hi.clamp(0.0, 1.0);
            }
            lower.push(lo);
            upper.push(hi);
        }
        Ok(Self { center, eps, use_ci_union, ci_width, lower, upper })
    }

    pub fn is_singleton(&self) -> bool {
        self.lower == self.upper
    }
}

/// Null parameters at a search point, or `None` outside the admissible space.
fn admissible_theta(spec: &ModelSpec, x: &[f64]) -> Option<Theta> {
    let mut v = x.to_vec();
    if spec.k > 1 {
        let layout = spec.free_layout();
        let k = spec.k;
        for from in 0..k {
            let idx = layout.transition.start + from * (k - 1);
            let total: f64 = v[idx..idx + k - 1].iter().sum();
            if total > 1.0 {
                for e in &mut v[idx..idx + k - 1] {
                    *e /= total;
                }
            }
        }
    }
    let theta = Theta::from_free(spec, &v).ok()?;
    theta.check(spec).ok()?;
    if spec.p > 0 && theta.companion_spectral_radius() >= 1.0 {
        return None;
    }
    Some(theta)
}

/// Maximized Monte Carlo LR test over a consistent set around the null estimate.
///
/// Every candidate is evaluated with the same replication seeds, so the
/// p-value surface is deterministic during the search.
pub fn mmc_lrt(sample: &Sample, config: &MmcConfig) -> Result<TestResult> {
    let lrt = &config.lrt;
    lrt.validate()?;
    check_sample(sample, lrt.p)?;
    if config.maxit == 0 {
        return invalid("maxit must be at least 1");
    }
    with_workers(lrt.workers, || {
        let (lr0, fit0, fit1, warnings) = lr_statistic(sample, lrt.p, lrt.k0, lrt.k1, &lrt.mdl_h0_options, &lrt.mdl_h1_options)?;
        let spec0 = fit0.spec;
        let se_flat = match &fit0.se {
            Some(se) => se.clone(),
            None if spec0.k == 1 => crate::estimation::fit_linear(sample, lrt.p)?.se.unwrap_or_else(|| vec![None; spec0.n_params()]),
            None => standard_errors(&fit0, sample, &Bounds::unbounded(&spec0)),
        };
        let se_free = flat_to_free(&spec0, &se_flat);
        let set = ConsistentSet::new(&spec0, fit0.theta.to_free(&spec0), &se_free, config.eps, config.ci_union)?;

        let evaluate = |x: &[f64]| -> Option<(McResult, usize)> {
            let theta = admissible_theta(&spec0, x)?;
            let mut null_fit = fit0.clone();
            null_fit.theta = theta;
            lmc_at(sample, &null_fit, lr0, lrt).ok()
        };
        let objective = |x: &[f64]| evaluate(x).map_or(0.0, |r| r.0.pvalue);
        let problem = SearchProblem {
            objective: &objective,
            lower: set.lower.clone(),
            upper: set.upper.clone(),
            budget: config.maxit,
            threshold_stop: Some(config.threshold_stop.unwrap_or(1.0)),
            start: Some(set.center.clone()),
            seed: rng::stream_seed(lrt.seed, 7),
        };
        let search = maximize(&problem, config.optimizer)?;
        let (best, failed) = evaluate(&search.x).ok_or_else(|| Error::TestProcedure("no admissible null parameters in the search set".into()))?;

        let mut out = TestResult::new("mmc-lrt");
        out.rows.push(StatRow { name: "MMC_LRT".into(), statistic: lr0, critical_values: best.quantiles, pvalue: best.pvalue });
        out.detail("theta0_argmax", Theta::from_free(&spec0, &search.x).map(|t| t.to_flat(&spec0)).unwrap_or_default());
        out.detail("search_lower", &set.lower);
        out.detail("search_upper", &set.upper);
        out.detail("evaluations", search.evals);
        out.detail("trace", &search.trace);
        out.detail("optimizer", config.optimizer);
        out.failed_replications = failed;
        out.converged = search.converged || best.pvalue >= 1.0 || set.is_singleton();
        out.warnings = warnings;
        if !out.converged {
            out.warnings.push("search budget exhausted before the stopping threshold".into());
        }
        out.fit0 = Some(fit0);
        out.fit1 = Some(fit1);
        Ok(out)
    })?
}

fn flat_to_free<T: Clone>(spec: &ModelSpec, flat: &[T]) -> Vec<T> {
    let layout = spec.flat_layout();
    let mut out = flat[..layout.transition.start].to_vec();
    let k = spec.k;
    if k > 1 {
        for from in 0..k {
            for to in 0..k - 1 {
                out.push(flat[layout.transition.start + from * k + to].clone());
            }
        }
    }
    out
}

/// LMC configuration that reproduces a constrained parametric bootstrap:
/// the alternative is fitted by bounded maximum likelihood with transition
/// probabilities in `[trans_prob_eps, 1 - trans_prob_eps]` and variances at
/// least `var_lower`.
pub fn bootstrap_emulation_config(k0: usize, k1: usize, n: usize, trans_prob_eps: f64, var_lower: f64) -> Result<LrTestConfig> {
    if !(0.0..0.5).contains(&trans_prob_eps) {
        return invalid(format!("trans_prob_eps must lie in [0, 0.5), got {trans_prob_eps}"));
    }
    if !(var_lower >= 0.0) {
        return invalid("var_lower must be non-negative");
    }
    let mut c = LrTestConfig { n, k0, k1, ..Default::default() };
    c.mdl_h1_options.method = Method::Mle;
    c.mdl_h1_options.trans_prob_eps = Some(trans_prob_eps);
    c.mdl_h1_options.var_lower = Some(var_lower);
    if k0 > 1 {
        c.mdl_h0_options.method = Method::Mle;
        c.mdl_h0_options.trans_prob_eps = Some(trans_prob_eps);
        c.mdl_h0_options.var_lower = Some(var_lower);
    }
    c.validate()?;
    Ok(c)
}
