//! Standardized likelihood-ratio bound test for linearity against a
//! two-regime switching AR, with a nuisance grid and HAC-corrected
//! simulation of the bounding Gaussian process.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimation::{fit_linear, FittedModel};
use crate::likelihood::{hamilton_filter, linear_cond_loglik};
use crate::markov::TransitionMatrix;
use crate::mc::{quantile_sorted, with_workers, CriticalValues, StatRow, TestResult};
use crate::model::{ModelSpec, Sample, Theta};
use crate::optim::bfgs::{minimize, BfgsOptions};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HansenConfig {
    pub p: usize,
    pub msvar: bool,
    /// Points on the mean-shift and variance-ratio grids.
    pub gridsize: usize,
    /// Mean shift `mu_2 - mu_1` starts here.
    pub mugrid_from: f64,
    /// Defaults to a step covering `[from, from + 4 sigma]`.
    pub mugrid_by: Option<f64>,
    /// Ratio `sigma_2 / sigma_1` starts here.
    pub siggrid_from: f64,
    /// Defaults to a step covering `[from, 2]`.
    pub siggrid_by: Option<f64>,
    /// Values used for both `p11` and `p22`; defaults to `pgrid_size` points on `[0.1, 0.9]`.
    pub pgrid: Option<Vec<f64>>,
    pub pgrid_size: usize,
    /// Box for `(mu_1, phi_1..phi_p, sigma_1^2)`.
    pub theta_null_low: Option<Vec<f64>>,
    pub theta_null_upp: Option<Vec<f64>>,
    pub hac_lags_max: usize,
    pub n_sim: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for HansenConfig {
    fn default() -> Self {
        Self {
            p: 1,
            msvar: false,
            gridsize: 10,
            mugrid_from: 0.0,
            mugrid_by: None,
            siggrid_from: 0.5,
            siggrid_by: None,
            pgrid: None,
            pgrid_size: 5,
            theta_null_low: None,
            theta_null_upp: None,
            hac_lags_max: 4,
            n_sim: 1000,
            seed: 0,
            workers: 0,
        }
    }
}

/// One nuisance value `alpha = (mu_2 - mu_1, sigma_2 / sigma_1, p11, p22)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    pub mu_shift: f64,
    pub sig_ratio: f64,
    pub p11: f64,
    pub p22: f64,
}

impl Alpha {
    /// Both regimes share the same law, so the model is the linear one.
    pub fn duplicates_null(&self) -> bool {
        self.mu_shift == 0.0 && self.sig_ratio == 1.0
    }
}

impl HansenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gridsize == 0 || self.n_sim == 0 {
            return invalid("gridsize and n_sim must be positive");
        }
        if let Some(g) = &self.pgrid {
            if g.is_empty() || g.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                return invalid("pgrid needs values in (0, 1)");
            }
        } else if self.pgrid_size == 0 {
            return invalid("pgrid_size must be positive");
        }
        if self.msvar && !(self.siggrid_from > 0.0) {
            return invalid("siggrid_from must be positive");
        }
        if let (Some(l), Some(u)) = (&self.theta_null_low, &self.theta_null_upp) {
            if l.len() != self.p + 2 || u.len() != self.p + 2 || l.iter().zip(u).any(|(a, b)| !(a <= b)) {
                return invalid(format!("theta_null bounds need {} ordered entries", self.p + 2));
            }
        } else if self.theta_null_low.is_some() || self.theta_null_upp.is_some() {
            return invalid("theta_null_low and theta_null_upp go together");
        }
        if self.p + 2 > 0 && self.theta_null_low.as_ref().is_some_and(|l| l[self.p + 1] < 0.0) {
            return invalid("variance lower bound must be non-negative");
        }
        Ok(())
    }

    pub fn p_values(&self) -> Vec<f64> {
        match &self.pgrid {
            Some(g) => g.clone(),
            None if self.pgrid_size == 1 => vec![0.5],
            None => (0..self.pgrid_size).map(|i| 0.1 + 0.8 * i as f64 / (self.pgrid_size - 1) as f64).collect(),
        }
    }

    /// The grid for a sample whose linear residual standard deviation is `sd`.
    pub fn grid(&self, sd: f64) -> Vec<Alpha> {
        let n = self.gridsize;
        let step = |by: Option<f64>, span: f64| by.unwrap_or(if n > 1 { span / (n - 1) as f64 } else { 0.0 });
        let mu_by = step(self.mugrid_by, 4.0 * sd);
        let sig_by = step(self.siggrid_by, 2.0 - self.siggrid_from);
        let mus: Vec<f64> = (0..n).map(|i| self.mugrid_from + mu_by * i as f64).collect();
        let sigs: Vec<f64> = if self.msvar { (0..n).map(|i| self.siggrid_from + sig_by * i as f64).collect() } else { vec![1.0] };
        let ps = self.p_values();
        let mut out = Vec::with_capacity(ps.len() * ps.len() * mus.len() * sigs.len());
        for &p11 in &ps {
            for &p22 in &ps {
                for &mu_shift in &mus {
                    for &sig_ratio in &sigs {
                        out.push(Alpha { mu_shift, sig_ratio, p11, p22 });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HansenStatistic {
    pub lr_star: f64,
    pub argmax: Alpha,
    pub grid: Vec<Alpha>,
    /// `LR_n(alpha)` per grid point.
    pub lr: Vec<f64>,
    /// `LR_n(alpha) / V_n(alpha)^{1/2}`, zero where `V_n` vanishes.
    pub standardized: Vec<f64>,
    /// `(mu_1, phi, sigma_1^2)` maximizing the likelihood at each point.
    pub theta: Vec<Vec<f64>>,
    /// Centered likelihood deviations, one row per grid point.
    pub q: DMatrix<f64>,
    pub fit0: FittedModel,
}

impl HansenStatistic {
    pub fn q_at_argmax(&self) -> Vec<f64> {
        let i = self.grid.iter().position(|a| *a == self.argmax).unwrap_or(0);
        self.q.row(i).iter().copied().collect()
    }
}

struct Boxed {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Boxed {
    fn to_free(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&l, &u))| {
                if u > l {
                    let r = ((v - l) / (u - l)).clamp(1e-9, 1.0 - 1e-9);
                    (r / (1.0 - r)).ln()
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn from_free(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.lo.iter().zip(&self.hi)).map(|(&v, (&l, &u))| l + (u - l) / (1.0 + (-v).exp())).collect()
    }
}

fn switching_theta(x: &[f64], p: usize, a: &Alpha) -> Result<Theta> {
    let (mu, s2) = (x[0], x[p + 1]);
    Theta::univariate(&[mu, mu + a.mu_shift], &x[1..=p], &[s2, s2 * a.sig_ratio * a.sig_ratio], TransitionMatrix::two_regime(a.p11, a.p22)?)
}

fn cond_loglik_at(sample: &Sample, spec: &ModelSpec, x: &[f64], a: &Alpha) -> Result<Vec<f64>> {
    Ok(hamilton_filter(&switching_theta(x, spec.p, a)?, sample, spec)?.cond_loglik)
}

/// Supremum over the grid of the standardized likelihood ratio.
pub fn hlr_statistic(sample: &Sample, config: &HansenConfig) -> Result<HansenStatistic> {
    config.validate()?;
    if sample.q() != 1 || sample.exog.is_some() {
        return invalid("the bound test applies to a single series without exogenous regressors");
    }
    let p = config.p;
    let fit0 = fit_linear(sample, p)?;
    let lin_spec = ModelSpec::linear(1, p, 0);
    let base = linear_cond_loglik(&fit0.theta, sample, &lin_spec)?;
    let s2 = fit0.theta.sigma[0][(0, 0)];
    if !(s2 > 0.0) {
        return Err(Error::Degenerate("zero residual variance".into()));
    }
    let sd = s2.sqrt();
    let mean = fit0.theta.mu[0][0];
    let bx = Boxed {
        lo: config.theta_null_low.clone().unwrap_or_else(|| {
            let mut v = vec![mean - 20.0 * sd];
            v.extend(std::iter::repeat_n(-0.99, p));
            v.push(1e-3 * s2);
            v
        }),
        hi: config.theta_null_upp.clone().unwrap_or_else(|| {
            let mut v = vec![mean + 20.0 * sd];
            v.extend(std::iter::repeat_n(0.99, p));
            v.push(1e2 * s2);
            v
        }),
    };
    let mut start = vec![mean];
    start.extend(fit0.theta.phi.iter().map(|m| m[(0, 0)]));
    start.push(s2);
    let spec = ModelSpec::switching(1, p, 2, 0, true, config.msvar);
    let grid = config.grid(sd);
    let ps = config.p_values();
    let block = grid.len() / (ps.len() * ps.len());
    let opts = BfgsOptions { max_iter: 100, f_tol: 1e-10, g_tol: 1e-5 };

    let blocks: Vec<Vec<(Vec<f64>, Vec<f64>)>> = grid
        .par_chunks(block)
        .map(|alphas| {
            let mut z = bx.to_free(&start);
            alphas
                .iter()
                .map(|a| {
                    if a.duplicates_null() {
                        return (start.clone(), base.clone());
                    }
                    let obj = |zz: &[f64]| match cond_loglik_at(sample, &spec, &bx.from_free(zz), a) {
                        Ok(c) => -c.iter().sum::<f64>(),
                        Err(_) => f64::INFINITY,
                    };
                    let warm = minimize(obj, &z, &opts);
                    let cold = bx.to_free(&start);
                    let best = if obj(&cold) < warm.value { minimize(obj, &cold, &opts) } else { warm };
                    if best.value.is_finite() {
                        z = best.x.clone();
                    }
                    let x = bx.from_free(&best.x);
                    let c = cond_loglik_at(sample, &spec, &x, a).unwrap_or_default();
                    (x, c)
                })
                .collect()
        })
        .collect();

    let t = base.len();
    let mut q = DMatrix::zeros(grid.len(), t);
    let mut lr = Vec::with_capacity(grid.len());
    let mut standardized = Vec::with_capacity(grid.len());
    let mut theta = Vec::with_capacity(grid.len());
    let mut usable = 0;
    for (g, (x, c)) in blocks.into_iter().flatten().enumerate() {
        theta.push(x);
        if c.len() != t || c.iter().any(|v| !v.is_finite()) {
            lr.push(f64::NEG_INFINITY);
            standardized.push(f64::NEG_INFINITY);
            continue;
        }
        usable += 1;
        let d: Vec<f64> = c.iter().zip(&base).map(|(a, b)| a - b).collect();
        let total: f64 = d.iter().sum();
        let m = total / t as f64;
        let mut v = 0.0;
        for (i, di) in d.iter().enumerate() {
            q[(g, i)] = di - m;
            v += (di - m) * (di - m);
        }
        lr.push(total);
        standardized.push(if v > 1e-10 * t as f64 { total / v.sqrt() } else { 0.0 });
    }
    if usable == 0 {
        return Err(Error::TestProcedure("every grid point failed".into()));
    }
    let (imax, &lr_star) = standardized
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    Ok(HansenStatistic { lr_star, argmax: grid[imax], grid, lr, standardized, theta, q, fit0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub hac_lag: usize,
    pub pvalue: f64,
    pub critical_values: CriticalValues,
    pub sims: Vec<f64>,
}

/// Gaussian multipliers shared by every lag: `(T + max_lag) x n_sim`.
pub fn bound_draws(t: usize, max_lag: usize, n_sim: usize, seed: u64) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = (0..n_sim)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream_rng(seed, j as u64);
            (0..t + max_lag).map(|_| StandardNormal.sample(&mut r)).collect()
        })
        .collect();
    DMatrix::from_fn(t + max_lag, n_sim, |i, j| cols[j][i])
}

/// Simulated sups of `sum_i q_i(alpha) u_i / V_n(alpha)^{1/2}` where `u` is a
/// moving average of `M + 1` multipliers, giving Bartlett-weighted
/// autocovariances up to lag `M`.
pub fn bound_sups(q: &DMatrix<f64>, draws: &DMatrix<f64>, m: usize) -> Result<Vec<f64>> {
    let (g, t) = q.shape();
    if draws.nrows() < t + m {
        return invalid("not enough multiplier rows for the requested lag");
    }
    let n_sim = draws.ncols();
    let w = 1.0 / ((m + 1) as f64).sqrt();
    let u = DMatrix::from_fn(t, n_sim, |i, j| (0..=m).map(|l| draws[(i + l, j)]).sum::<f64>() * w);
    let norms: Vec<f64> = (0..g).map(|r| q.row(r).norm()).collect();
    let z = q * u;
    Ok((0..n_sim)
        .map(|j| (0..g).filter(|&r| norms[r] > 0.0).map(|r| z[(r, j)] / norms[r]).fold(0.0, f64::max))
        .collect())
}

pub fn hlr_bound_pvalue(lr_star: f64, q: &DMatrix<f64>, m: usize, n_sim: usize, seed: u64) -> Result<BoundResult> {
    if m > 4 {
        return invalid("HAC lag must be at most 4");
    }
    let draws = bound_draws(q.ncols(), m, n_sim, seed);
    bound_result(lr_star, q, &draws, m)
}

fn bound_result(lr_star: f64, q: &DMatrix<f64>, draws: &DMatrix<f64>, m: usize) -> Result<BoundResult> {
    let sims = bound_sups(q, draws, m)?;
    let mut sorted = sims.clone();
    sorted.sort_by(f64::total_cmp);
    let pvalue = sims.iter().filter(|&&s| s >= lr_star).count() as f64 / sims.len() as f64;
    let critical_values = CriticalValues { q90: quantile_sorted(&sorted, 0.90), q95: quantile_sorted(&sorted, 0.95), q99: quantile_sorted(&sorted, 0.99) };
    Ok(BoundResult { hac_lag: m, pvalue, critical_values, sims })
}

/// The statistic with bound p-values for every HAC lag `0..=hac_lags_max`.
pub fn hlr_test(sample: &Sample, config: &HansenConfig) -> Result<TestResult> {
    config.validate()?;
    if config.hac_lags_max > 4 {
        return invalid("hac_lags_max must be at most 4");
    }
    with_workers(config.workers, || {
        let st = hlr_statistic(sample, config)?;
        let mut finite = st.q.clone();
        for (r, v) in st.standardized.iter().enumerate() {
            if !v.is_finite() {
                finite.row_mut(r).fill(0.0);
            }
        }
        let draws = bound_draws(finite.ncols(), config.hac_lags_max, config.n_sim, config.seed);
        let mut out = TestResult::new("hlr");
        for m in 0..=config.hac_lags_max {
            let b = bound_result(st.lr_star, &finite, &draws, m)?;
            out.rows.push(StatRow { name: format!("M = {m}"), statistic: st.lr_star, critical_values: b.critical_values, pvalue: b.pvalue });
        }
        out.detail("argmax", st.argmax);
        out.detail("grid_points", st.grid.len());
        out.detail("switch", if config.msvar { "mean and variance" } else { "mean" });
        let failed = st.standardized.iter().filter(|v| !v.is_finite()).count();
        if failed > 0 {
            out.warnings.push(format!("{failed} grid points failed and were dropped"));
        }
        out.fit0 = Some(st.fit0);
        Ok(out)
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate, DgpSpec};
    use crate::model::ModelFamily;

    fn ar1(seed: u64, n: usize) -> Sample {
        let th = Theta::univariate(&[1.0], &[0.5], &[1.0], TransitionMatrix::single()).unwrap();
        Sample::new(simulate(&DgpSpec::new(ModelFamily::Ar, n, th, seed)).unwrap().y, None).unwrap()
    }

    fn msar(seed: u64) -> Sample {
        let th = Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], TransitionMatrix::two_regime(0.95, 0.90).unwrap()).unwrap();
        Sample::new(simulate(&DgpSpec::new(ModelFamily::Msar, 500, th, seed)).unwrap().y, None).unwrap()
    }

    fn small() -> HansenConfig {
        HansenConfig { gridsize: 4, pgrid_size: 3, n_sim: 500, ..Default::default() }
    }

    #[test]
    fn null_duplicate_point_is_zero() {
        let s = ar1(1, 150);
        let st = hlr_statistic(&s, &small()).unwrap();
        let a = Alpha { mu_shift: 0.0, sig_ratio: 1.0, p11: 0.5, p22: 0.9 };
        let lin = linear_cond_loglik(&st.fit0.theta, &s, &ModelSpec::linear(1, 1, 0)).unwrap();
        let x = vec![st.fit0.theta.mu[0][0], st.fit0.theta.phi[0][(0, 0)], st.fit0.theta.sigma[0][(0, 0)]];
        let sw = cond_loglik_at(&s, &ModelSpec::switching(1, 1, 2, 0, true, false), &x, &a).unwrap();
        assert!(sw.iter().zip(&lin).all(|(u, v)| (u - v).abs() < 1e-9));
        for (i, a) in st.grid.iter().enumerate() {
            if a.duplicates_null() {
                assert_eq!(st.lr[i], 0.0);
                assert_eq!(st.standardized[i], 0.0);
            } else {
                let lin_total: f64 = lin.iter().sum();
                assert!(st.lr[i] >= cond_loglik_at(&s, &ModelSpec::switching(1, 1, 2, 0, true, false), &x, a).unwrap().iter().sum::<f64>() - lin_total - 1e-6);
            }
        }
        assert!(st.standardized.iter().all(|&v| v <= st.lr_star));
        assert!(st.lr_star >= 0.0);
    }

    #[test]
    fn zero_statistic_has_unit_pvalue_and_lag_zero_is_plain() {
        let q = DMatrix::from_fn(3, 40, |r, c| ((r * 7 + c * 3) % 11) as f64 - 5.0);
        assert_eq!(hlr_bound_pvalue(0.0, &q, 2, 200, 3).unwrap().pvalue, 1.0);
        let draws = bound_draws(40, 0, 100, 9);
        let sims = bound_sups(&q, &draws, 0).unwrap();
        let z = &q * &draws;
        for (j, s) in sims.iter().enumerate() {
            let manual = (0..3).map(|r| z[(r, j)] / q.row(r).norm()).fold(0.0, f64::max);
            assert!((s - manual).abs() < 1e-12);
        }
        assert!(hlr_bound_pvalue(1.0, &q, 5, 10, 0).is_err());
    }

    #[test]
    fn nested_grid_quantiles_weakly_larger() {
        let q = DMatrix::from_fn(6, 60, |r, c| ((r * 13 + c * 5) % 17) as f64 - 8.0 + (r as f64) * 0.1 * c as f64 % 3.0);
        let draws = bound_draws(60, 4, 400, 11);
        for m in 0..=4 {
            let sub = bound_result(1.0, &q.rows(0, 3).into_owned(), &draws, m).unwrap();
            let all = bound_result(1.0, &q, &draws, m).unwrap();
            assert!(sub.sims.iter().zip(&all.sims).all(|(a, b)| *a <= b + 1e-12));
            assert!(sub.critical_values.q95 <= all.critical_values.q95);
        }
    }

    #[test]
    fn bartlett_variance_of_multipliers() {
        let draws = bound_draws(1, 3, 20000, 5);
        let q = DMatrix::from_element(1, 1, 1.0);
        let u0: Vec<f64> = bound_sups(&q, &draws, 3).unwrap();
        let frac = u0.iter().filter(|&&v| v > 0.0).count() as f64 / u0.len() as f64;
        assert!((frac - 0.5).abs() < 0.02);
    }

    #[test]
    fn msar_rejected_deterministically() {
        let s = msar(3);
        let c = HansenConfig { msvar: true, seed: 4, ..small() };
        let a = hlr_test(&s, &c).unwrap();
        assert_eq!(a.rows.len(), 5);
        assert!(a.rows.iter().all(|r| r.pvalue < 0.05), "{:?}", a.rows);
        assert!(a.statistic() > 3.0);
        let b = hlr_test(&s, &c).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn config_checks() {
        assert!(HansenConfig { gridsize: 0, ..Default::default() }.validate().is_err());
        assert!(HansenConfig { theta_null_low: Some(vec![0.0, -0.9, 0.1]), ..Default::default() }.validate().is_err());
        let c = HansenConfig { pgrid_size: 9, ..Default::default() };
        let v = c.p_values();
        assert_eq!(v.len(), 9);
        assert!((v[0] - 0.1).abs() < 1e-12 && (v[8] - 0.9).abs() < 1e-12);
        assert_eq!(HansenConfig::default().grid(1.0).len(), 250);
    }
}
