//! Monte Carlo p-values, null simulation and the shared test result type.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{default_burnin, simulate, DgpSpec};
use crate::error::{invalid, Error, Result};
use crate::estimation::FittedModel;
use crate::model::Sample;
use crate::rng;

/// Environment variable consulted when no worker count is given.
pub const WORKERS_ENV: &str = "MSREGIME_WORKERS";

/// Largest share of failed replications tolerated before a test aborts.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

/// Percentiles of a simulated null distribution, reported as critical values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    #[serde(rename = "0.90")]
    pub q90: f64,
    #[serde(rename = "0.95")]
    pub q95: f64,
    #[serde(rename = "0.99")]
    pub q99: f64,
}

impl CriticalValues {
    pub fn from_sample(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        Self { q90: quantile_sorted(&v, 0.90), q95: quantile_sorted(&v, 0.95), q99: quantile_sorted(&v, 0.99) }
    }
}

/// Linear interpolation between order statistics (type 7).
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * prob;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub stat0: f64,
    pub null_stats: Vec<f64>,
    pub rank: usize,
    pub pvalue: f64,
    pub quantiles: CriticalValues,
    pub seed: u64,
}

/// Number of null statistics ranked at or below `stat0`.
///
/// Each statistic carries an independent uniform draw and comparisons are
/// lexicographic in `(value, draw)`, so ties are broken at random.
pub fn randomized_rank(stat0: f64, null_stats: &[f64], tie_seed: u64) -> Result<usize> {
    if !stat0.is_finite() || null_stats.iter().any(|v| !v.is_finite()) {
        return Err(Error::TestProcedure("non-finite statistic in Monte Carlo ranking".into()));
    }
    let mut r = rng::rng_from_seed(tie_seed);
    let u0: f64 = r.random();
    Ok(null_stats
        .iter()
        .filter(|&&s| {
            let u: f64 = r.random();
            stat0 > s || (stat0 == s && u0 >= u)
        })
        .count())
}

/// `p = (N + 1 - R) / (N + 1)` with `R` the randomized rank of `stat0`.
pub fn mc_pvalue(stat0: f64, null_stats: &[f64], tie_seed: u64) -> Result<McResult> {
    if null_stats.is_empty() {
        return invalid("at least one simulated statistic is required");
    }
    let rank = randomized_rank(stat0, null_stats, tie_seed)?;
    let n = null_stats.len() as f64;
    Ok(McResult {
        stat0,
        null_stats: null_stats.to_vec(),
        rank,
        pvalue: (n + 1.0 - rank as f64) / (n + 1.0),
        quantiles: CriticalValues::from_sample(null_stats),
        seed: tie_seed,
    })
}

/// `--workers`, else the environment, else the number of available cores.
pub fn resolve_workers(requested: Option<usize>) -> usize {
    requested
        .filter(|&w| w > 0)
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&w| w > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `f` on a pool with `workers` threads (the global pool if 0).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::TestProcedure(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Outcome of `n` independent replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Replications<T> {
    /// Successful results in replication order.
    pub values: Vec<T>,
    pub failed: usize,
    pub retried: usize,
}

/// Runs replication `i` with seed `stream_seed(seed, i)`. A failed
/// replication is retried once with a fresh sub-seed; more than
/// [`MAX_FAILURE_SHARE`] failures abort.
pub fn run_replications<T, F>(n: usize, seed: u64, f: F) -> Result<Replications<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    if n == 0 {
        return invalid("the number of replications must be at least 1");
    }
    let results: Vec<(Option<T>, bool, Option<String>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = rng::stream_seed(seed, i as u64);
            match f(i, s) {
                Ok(v) => (Some(v), false, None),
                Err(_) => match f(i, rng::stream_seed(s, 1)) {
                    Ok(v) => (Some(v), true, None),
                    Err(e) => (None, true, Some(e.to_string())),
                },
            }
        })
        .collect();
    let failed = results.iter().filter(|r| r.0.is_none()).count();
    let retried = results.iter().filter(|r| r.1).count();
    if failed as f64 > MAX_FAILURE_SHARE * n as f64 {
        let first = results.iter().find_map(|r| r.2.clone()).unwrap_or_default();
        return Err(Error::TestProcedure(format!("{failed} of {n} replications failed; first error: {first}")));
    }
    Ok(Replications { values: results.into_iter().filter_map(|r| r.0).collect(), failed, retried })
}

/// Draws a dataset of the same shape as `sample` from the fitted model.
pub fn simulate_like(fit: &FittedModel, sample: &Sample, seed: u64) -> Result<Sample> {
    let family = fit.spec.family();
    let mut dgp = DgpSpec::new(family, sample.t(), fit.theta.clone(), seed).with_burnin(default_burnin(family));
    if let Some(z) = &sample.exog {
        dgp = dgp.with_exog(z.clone());
    }
    Sample::new(simulate(&dgp)?.y, sample.exog.clone())
}

/// `n` statistics computed on data simulated from `null_fit`.
pub fn simulate_null_stats<F>(null_fit: &FittedModel, sample: &Sample, stat_fn: F, n: usize, seed: u64, workers: usize) -> Result<Replications<f64>>
where
    F: Fn(&Sample, u64) -> Result<f64> + Sync,
{
    with_workers(workers, || {
        run_replications(n, seed, |_, s| {
            let data = simulate_like(null_fit, sample, s)?;
            let v = stat_fn(&data, rng::stream_seed(s, 2))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::TestProcedure("non-finite simulated statistic".into()))
            }
        })
    })?
}

/// One reported statistic: value, null percentiles and p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub name: String,
    pub statistic: f64,
    pub critical_values: CriticalValues,
    pub pvalue: f64,
}

/// Common output of every test procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub test: String,
    pub rows: Vec<StatRow>,
    /// Restricted (null) fit.
    pub fit0: Option<FittedModel>,
    /// Unrestricted fit, when the procedure estimates one.
    pub fit1: Option<FittedModel>,
    /// Procedure-specific scalars (nuisance values at the optimum, evaluation counts, ...).
    pub details: BTreeMap<String, serde_json::Value>,
    pub failed_replications: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl TestResult {
    pub fn new(test: &str) -> Self {
        Self {
            test: test.to_string(),
            rows: Vec::new(),
            fit0: None,
            fit1: None,
            details: BTreeMap::new(),
            failed_replications: 0,
            converged: true,
            warnings: Vec::new(),
        }
    }

    pub fn row(&self, name: &str) -> Option<&StatRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// p-value of the first row.
    pub fn pvalue(&self) -> f64 {
        self.rows.first().map_or(f64::NAN, |r| r.pvalue)
    }

    pub fn statistic(&self) -> f64 {
        self.rows.first().map_or(f64::NAN, |r| r.statistic)
    }

    pub(crate) fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::fit_linear;
    use crate::markov::TransitionMatrix;
    use crate::model::{ModelFamily, Theta};

    #[test]
    fn extreme_ranks() {
        let null: Vec<f64> = (0..99).map(|i| i as f64).collect();
        let top = mc_pvalue(1000.0, &null, 1).unwrap();
        assert_eq!(top.rank, 99);
        assert!((top.pvalue - 0.01).abs() < 1e-15);
        let bottom = mc_pvalue(-1.0, &null, 1).unwrap();
        assert_eq!(bottom.rank, 0);
        assert_eq!(bottom.pvalue, 1.0);
    }

    #[test]
    fn ties_spread_uniformly() {
        let null = vec![0.5; 99];
        let mut counts = [0usize; 100];
        for s in 0..10_000 {
            counts[mc_pvalue(0.5, &null, s).unwrap().rank] += 1;
        }
        let e = 100.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // chi-square(99) upper 1% point is 134.64
        assert!(chi2 < 134.64, "chi2 {chi2}");
    }

    #[test]
    fn non_finite_rejected() {
        assert!(mc_pvalue(f64::NAN, &[1.0], 0).is_err());
        assert!(mc_pvalue(1.0, &[f64::INFINITY], 0).is_err());
        assert!(mc_pvalue(1.0, &[], 0).is_err());
    }

    #[test]
    fn quantiles_match_type7() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((quantile_sorted(&v, 0.9) - 9.1).abs() < 1e-12);
        assert!((quantile_sorted(&v, 0.5) - 5.5).abs() < 1e-12);
    }

    fn ar_fit() -> (FittedModel, Sample) {
        let th = Theta::univariate(&[0.0], &[0.5], &[1.0], TransitionMatrix::single()).unwrap();
        let y = simulate(&DgpSpec::new(ModelFamily::Ar, 150, th, 3)).unwrap().y;
        let s = Sample::new(y, None).unwrap();
        (fit_linear(&s, 1).unwrap(), s)
    }

    #[test]
    fn constant_statistic() {
        let (f, s) = ar_fit();
        let r = simulate_null_stats(&f, &s, |_, _| Ok(0.0), 25, 1, 1).unwrap();
        assert_eq!(r.values, vec![0.0; 25]);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let (f, s) = ar_fit();
        let stat = |d: &Sample, _: u64| Ok(d.y.mean());
        let a = simulate_null_stats(&f, &s, stat, 40, 9, 1).unwrap();
        let b = simulate_null_stats(&f, &s, stat, 40, 9, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_retried_then_counted() {
        let (f, s) = ar_fit();
        let flaky = |_: &Sample, seed: u64| if seed % 7 == 0 { Err(Error::Estimation("x".into())) } else { Ok(1.0) };
        let r = simulate_null_stats(&f, &s, flaky, 200, 2, 1).unwrap();
        assert!(r.failed <= 10 && r.values.len() + r.failed == 200);
        let broken = |_: &Sample, _: u64| -> Result<f64> { Err(Error::Estimation("x".into())) };
        assert!(simulate_null_stats(&f, &s, broken, 20, 2, 1).is_err());
    }

    #[test]
    fn null_mean_matches_exact_law() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let (f, s) = ar_fit();
        let r = simulate_null_stats(&f, &s, |d, _| Ok(d.y.mean()), 500, 11, 1).unwrap();
        // the mean of a stationary Gaussian AR(1) sample is normal with this variance
        let (mu, phi, s2) = (f.theta.mu[0][0], f.theta.phi[0][(0, 0)], f.theta.sigma[0][(0, 0)]);
        let n = s.t();
        let gamma0 = s2 / (1.0 - phi * phi);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += phi.powi((i as i32 - j as i32).abs());
            }
        }
        let law = Normal::new(mu, (gamma0 * acc).sqrt() / n as f64).unwrap();
        let mut v = r.values.clone();
        v.sort_by(f64::total_cmp);
        let m = v.len() as f64;
        let d = v
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let c = law.cdf(*x);
                (c - i as f64 / m).abs().max((c - (i + 1) as f64 / m).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.05, "KS distance {d}");
    }
}
