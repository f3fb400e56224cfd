//! Moment-based Monte Carlo tests of one regime against two, computed on
//! autoregressive least-squares residuals.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimation::fit_linear;
use crate::mc::{randomized_rank, run_replications, with_workers, CriticalValues, StatRow, TestResult};
use crate::model::Sample;
use crate::optim::{maximize, Optimizer, SearchProblem};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub m: f64,
    pub v: f64,
    pub s: f64,
    pub k: f64,
}

impl MomentStats {
    pub fn as_array(&self) -> [f64; 4] {
        [self.m, self.v, self.s, self.k]
    }
}

/// Mean, variance, skewness and excess-kurtosis statistics of residuals.
///
/// Squared residuals equal to the mean square fall in the lower partition of `V`.
pub fn moment_stats(e: &[f64]) -> Result<MomentStats> {
    let t = e.len();
    if t < 4 {
        return invalid("moment statistics need at least 4 residuals");
    }
    if e.iter().any(|v| !v.is_finite()) {
        return invalid("residuals must be finite");
    }
    let (mut n1, mut sum1, mut n2, mut sum2) = (0usize, 0.0, 0usize, 0.0);
    for &x in e {
        if x < 0.0 {
            n1 += 1;
            sum1 += x;
        } else if x > 0.0 {
            n2 += 1;
            sum2 += x;
        }
    }
    if n1 == 0 || n2 == 0 {
        return Err(Error::Degenerate("residuals do not take both signs".into()));
    }
    let (m1, m2) = (sum1 / n1 as f64, sum2 / n2 as f64);
    let (mut ss1, mut ss2) = (0.0, 0.0);
    for &x in e {
        if x < 0.0 {
            ss1 += (x - m1).powi(2);
        } else if x > 0.0 {
            ss2 += (x - m2).powi(2);
        }
    }
    let spread = ss1 / n1 as f64 + ss2 / n2 as f64;
    if spread <= 0.0 {
        return Err(Error::Degenerate("within-sign variances are both zero".into()));
    }
    let m = (m2 - m1).abs() / spread.sqrt();

    let tf = t as f64;
    let s2 = e.iter().map(|x| x * x).sum::<f64>() / tf;
    let (mut c_lo, mut lo, mut c_hi, mut hi) = (0usize, 0.0, 0usize, 0.0);
    for &x in e {
        let q = x * x;
        if q > s2 {
            c_hi += 1;
            hi += q;
        } else {
            c_lo += 1;
            lo += q;
        }
    }
    if c_hi == 0 || lo <= 0.0 {
        return Err(Error::Degenerate("squared residuals do not straddle their mean".into()));
    }
    let v = (hi / c_hi as f64) / (lo / c_lo as f64);
    let s = (e.iter().map(|x| x.powi(3)).sum::<f64>() / (tf * s2.powf(1.5))).abs();
    let k = (e.iter().map(|x| x.powi(4)).sum::<f64>() / (tf * s2 * s2) - 3.0).abs();
    Ok(MomentStats { m, v, s, k })
}

/// Individual survival p-values `G = 1 - F` and the two combined statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combined {
    pub g: [f64; 4],
    pub f_min: f64,
    pub f_prod: f64,
}

/// `F_min = 1 - min(G)` and `F_prod = 1 - prod(G)`.
pub fn combine_survival(g: [f64; 4]) -> Combined {
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    let prod: f64 = g.iter().product();
    Combined { g, f_min: 1.0 - min, f_prod: 1.0 - prod }
}

/// Share of each simulated null distribution at or above the statistic,
/// with exact ties split at random.
pub fn combine_pvalues(stats: &MomentStats, null_dists: &NullDistributions, tie_seed: u64) -> Combined {
    let mut r = rng::rng_from_seed(tie_seed);
    let mut g = [0.0; 4];
    for (j, x) in stats.as_array().into_iter().enumerate() {
        let d = &null_dists.sorted[j];
        let below = d.partition_point(|v| *v < x);
        let ties = d[below..].partition_point(|v| *v <= x);
        let mut at_or_above = d.len() - below - ties;
        if ties > 0 {
            let u0: f64 = r.random();
            at_or_above += (0..ties).filter(|_| r.random::<f64>() > u0).count();
        }
        g[j] = at_or_above as f64 / d.len() as f64;
    }
    combine_survival(g)
}

/// Sorted null distributions of the four statistics for residual length `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistributions {
    pub t: usize,
    pub sorted: [Vec<f64>; 4],
}

fn demeaned_normals(t: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::rng_from_seed(seed);
    let mut v: Vec<f64> = (0..t).map(|_| r.sample(StandardNormal)).collect();
    let mean = v.iter().sum::<f64>() / t as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

/// Moment statistics of demeaned `N(0, I_t)` draws; degenerate draws are redrawn.
fn normal_stats(t: usize, seed: u64) -> Result<MomentStats> {
    for attempt in 0..20 {
        if let Ok(s) = moment_stats(&demeaned_normals(t, rng::stream_seed(seed, attempt))) {
            return Ok(s);
        }
    }
    Err(Error::Degenerate(format!("could not draw non-degenerate residuals of length {t}")))
}

/// Stage one: `n2` replications building the four marginal null distributions.
pub fn null_distributions(t: usize, n2: usize, seed: u64) -> Result<NullDistributions> {
    let reps = run_replications(n2, seed, |_, s| normal_stats(t, s))?;
    let mut sorted: [Vec<f64>; 4] = Default::default();
    for st in &reps.values {
        for (j, x) in st.as_array().into_iter().enumerate() {
            sorted[j].push(x);
        }
    }
    for d in &mut sorted {
        d.sort_by(f64::total_cmp);
    }
    Ok(NullDistributions { t, sorted })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DlConfig {
    /// Monte Carlo replications of the combined statistics.
    #[serde(rename = "N")]
    pub n: usize,
    /// Replications behind each individual null distribution.
    #[serde(rename = "N2")]
    pub n2: usize,
    pub p: usize,
    pub seed: u64,
    pub workers: usize,
    pub eps: f64,
    #[serde(rename = "CI_union")]
    pub ci_union: bool,
    pub optimizer: Optimizer,
    pub threshold_stop: Option<f64>,
    pub maxit: usize,
    pub phi_low: f64,
    pub phi_upp: f64,
}

impl Default for DlConfig {
    fn default() -> Self {
        Self {
            n: 99,
            n2: 10_000,
            p: 1,
            seed: 0,
            workers: 0,
            eps: 0.0,
            ci_union: true,
            optimizer: Optimizer::Sa,
            threshold_stop: None,
            maxit: 100,
            phi_low: -0.99,
            phi_upp: 0.99,
        }
    }
}

impl DlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invalid("N must be at least 2");
        }
        if self.n2 < 100 {
            return invalid("N2 must be at least 100");
        }
        if !(self.phi_low <= self.phi_upp) {
            return invalid("phi_low must not exceed phi_upp");
        }
        if !(self.eps >= 0.0) {
            return invalid("eps must be non-negative");
        }
        Ok(())
    }
}

/// Null draws shared by the local and maximized versions.
struct Simulated {
    dists: NullDistributions,
    f_min: Vec<f64>,
    f_prod: Vec<f64>,
}

fn simulate_stages(t: usize, config: &DlConfig) -> Result<Simulated> {
    let dists = null_distributions(t, config.n2, rng::stream_seed(config.seed, 1))?;
    let stage2 = run_replications(config.n - 1, rng::stream_seed(config.seed, 2), |_, s| {
        let st = normal_stats(t, s)?;
        Ok(combine_pvalues(&st, &dists, rng::stream_seed(s, 99)))
    })?;
    Ok(Simulated {
        f_min: stage2.values.iter().map(|c| c.f_min).collect(),
        f_prod: stage2.values.iter().map(|c| c.f_prod).collect(),
        dists,
    })
}

/// `(N + 1 - R) / N` where `R` is the rank of the observed value among the
/// observed and `N - 1` simulated values.
pub fn dl_pvalue(stat0: f64, simulated: &[f64], tie_seed: u64) -> Result<f64> {
    let n = simulated.len() as f64 + 1.0;
    let rank = randomized_rank(stat0, simulated, tie_seed)? as f64 + 1.0;
    Ok((n + 1.0 - rank) / n)
}

fn check(sample: &Sample, config: &DlConfig) -> Result<()> {
    config.validate()?;
    if sample.q() != 1 {
        return invalid("moment-based tests apply to a single series");
    }
    if sample.t() < config.p + 8 {
        return invalid(format!("need at least {} observations", config.p + 8));
    }
    Ok(())
}

/// Residuals of `y_t - sum phi_k y_{t-k}` regressed on a constant and any
/// exogenous regressors.
pub fn residuals_at(sample: &Sample, phi: &[f64]) -> Result<Vec<f64>> {
    let p = phi.len();
    let t_eff = sample.t() - p;
    let nz = sample.n_exog();
    let w = DVector::from_fn(t_eff, |t, _| {
        let tt = t + p;
        sample.y[(tt, 0)] - (1..=p).map(|k| phi[k - 1] * sample.y[(tt - k, 0)]).sum::<f64>()
    });
    if nz == 0 {
        let mean = w.mean();
        return Ok(w.iter().map(|v| v - mean).collect());
    }
    let z = sample.exog.as_ref().expect("exogenous regressors");
    let x = DMatrix::from_fn(t_eff, 1 + nz, |t, c| if c == 0 { 1.0 } else { z[(t + p, c - 1)] });
    let coef = (x.transpose() * &x)
        .cholesky()
        .ok_or_else(|| Error::Estimation("exogenous regressors are collinear".into()))?
        .solve(&(x.transpose() * &w));
    Ok((w - x * coef).iter().copied().collect())
}

fn rows(prefix: &str, f_min: f64, f_prod: f64, sim: &Simulated, p_min: f64, p_prod: f64) -> Vec<StatRow> {
    vec![
        StatRow { name: format!("{prefix}_min"), statistic: f_min, critical_values: CriticalValues::from_sample(&sim.f_min), pvalue: p_min },
        StatRow { name: format!("{prefix}_prod"), statistic: f_prod, critical_values: CriticalValues::from_sample(&sim.f_prod), pvalue: p_prod },
    ]
}

fn observed(sample: &Sample, config: &DlConfig) -> Result<(crate::estimation::FittedModel, Vec<f64>)> {
    let fit0 = fit_linear(sample, config.p)?;
    let phi: Vec<f64> = fit0.theta.phi.iter().map(|m| m[(0, 0)]).collect();
    Ok((fit0, phi))
}

/// Local Monte Carlo version: residuals at the least-squares estimate.
pub fn dlmc_test(sample: &Sample, config: &DlConfig) -> Result<TestResult> {
    check(sample, config)?;
    with_workers(config.workers, || {
        let (fit0, phi) = observed(sample, config)?;
        let e = residuals_at(sample, &phi)?;
        let stats = moment_stats(&e)?;
        let sim = simulate_stages(e.len(), config)?;
        let c = combine_pvalues(&stats, &sim.dists, rng::stream_seed(config.seed, 3));
        let p_min = dl_pvalue(c.f_min, &sim.f_min, rng::stream_seed(config.seed, 4))?;
        let p_prod = dl_pvalue(c.f_prod, &sim.f_prod, rng::stream_seed(config.seed, 5))?;
        let mut out = TestResult::new("dl-mc");
        out.rows = rows("LMC", c.f_min, c.f_prod, &sim, p_min, p_prod);
        out.detail("phi", &phi);
        out.detail("moments", stats);
        out.detail("G", c.g);
        out.fit0 = Some(fit0);
        Ok(out)
    })?
}

/// Maximized version over the autoregressive coefficients.
///
/// The null draws do not depend on the coefficients, so every candidate is
/// ranked against the same simulated values.
pub fn dlmmc_test(sample: &Sample, config: &DlConfig) -> Result<TestResult> {
    check(sample, config)?;
    if config.maxit == 0 {
        return invalid("maxit must be at least 1");
    }
    with_workers(config.workers, || {
        let (fit0, phi_hat) = observed(sample, config)?;
        let p = config.p;
        let se: Vec<f64> = fit0.se.as_ref().map_or(vec![0.0; p], |s| (0..p).map(|l| s[1 + l].unwrap_or(0.0)).collect());
        let half: Vec<f64> = se.iter().map(|s| if config.ci_union { config.eps.max(2.0 * s) } else { config.eps }).collect();
        let lower: Vec<f64> = (0..p).map(|l| (phi_hat[l] - half[l]).clamp(config.phi_low, config.phi_upp)).collect();
        let upper: Vec<f64> = (0..p).map(|l| (phi_hat[l] + half[l]).clamp(config.phi_low, config.phi_upp)).collect();
        let start: Vec<f64> = (0..p).map(|l| phi_hat[l].clamp(lower[l], upper[l])).collect();
        let t_eff = sample.t() - p;
        let sim = simulate_stages(t_eff, config)?;

        let at = |phi: &[f64]| -> Option<Combined> {
            let e = residuals_at(sample, phi).ok()?;
            let st = moment_stats(&e).ok()?;
            Some(combine_pvalues(&st, &sim.dists, rng::stream_seed(config.seed, 3)))
        };
        let pval = |phi: &[f64], which: usize| -> f64 {
            at(phi).map_or(0.0, |c| {
                let (stat, draws) = if which == 0 { (c.f_min, &sim.f_min) } else { (c.f_prod, &sim.f_prod) };
                dl_pvalue(stat, draws, rng::stream_seed(config.seed, 4 + which as u64)).unwrap_or(0.0)
            })
        };
        let mut out = TestResult::new("dl-mmc");
        let mut stats_at = Vec::new();
        let mut converged = true;
        for which in 0..2 {
            let objective = |x: &[f64]| pval(x, which);
            let problem = SearchProblem {
                objective: &objective,
                lower: lower.clone(),
                upper: upper.clone(),
                budget: config.maxit,
                threshold_stop: Some(config.threshold_stop.unwrap_or(1.0)),
                start: Some(start.clone()),
                seed: rng::stream_seed(config.seed, 10 + which as u64),
            };
            let res = maximize(&problem, config.optimizer)?;
            converged &= res.converged || res.value >= 1.0 || lower == upper;
            let c = at(&res.x).ok_or_else(|| Error::TestProcedure("degenerate residuals at the optimum".into()))?;
            stats_at.push((res.x.clone(), c, res.value, res.evals));
        }
        out.rows = rows("MMC", stats_at[0].1.f_min, stats_at[1].1.f_prod, &sim, stats_at[0].2, stats_at[1].2);
        out.detail("phi_argmax_min", &stats_at[0].0);
        out.detail("phi_argmax_prod", &stats_at[1].0);
        out.detail("search_lower", &lower);
        out.detail("search_upper", &upper);
        out.detail("evaluations", stats_at[0].3 + stats_at[1].3);
        out.converged = converged;
        if !converged {
            out.warnings.push("search budget exhausted before the stopping threshold".into());
        }
        out.fit0 = Some(fit0);
        Ok(out)
    })?
}
