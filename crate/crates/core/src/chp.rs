//! Optimal parameter-stability test against Markov-switching alternatives
//! (supTS and expTS) with parametric-bootstrap critical values.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::estimation::{fit_linear, FittedModel};
use crate::mc::{run_replications, simulate_like, with_workers, CriticalValues, StatRow, TestResult};
use crate::model::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChpConfig {
    /// Bootstrap replications.
    #[serde(rename = "N")]
    pub n: usize,
    /// `rho` ranges over `[-rho_b, rho_b]`.
    pub rho_b: f64,
    /// Include the variance direction.
    pub msvar: bool,
    pub rho_grid_size: usize,
    /// Directions on the half circle when `msvar` is set.
    pub h_grid_size: usize,
    pub p: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for ChpConfig {
    fn default() -> Self {
        Self { n: 3000, rho_b: 0.7, msvar: false, rho_grid_size: 15, h_grid_size: 12, p: 1, seed: 0, workers: 0 }
    }
}

impl ChpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_b > 0.0 && self.rho_b < 1.0) {
            return invalid(format!("rho_b must lie in (0, 1), got {}", self.rho_b));
        }
        if self.rho_grid_size < 2 || (self.msvar && self.h_grid_size < 2) {
            return invalid("grids need at least 2 points");
        }
        if self.n == 0 {
            return invalid("N must be at least 1");
        }
        Ok(())
    }

    /// Uniform grid on `[-rho_b, rho_b]` without the point(s) within half a step of zero.
    pub fn rho_grid(&self) -> Vec<f64> {
        let n = self.rho_grid_size;
        let step = 2.0 * self.rho_b / (n - 1) as f64;
        (0..n).map(|i| -self.rho_b + step * i as f64).filter(|r| r.abs() >= 0.5 * step - 1e-12).collect()
    }

    /// Unit directions in the (mean, variance) plane; `h = 1` when only the mean switches.
    pub fn h_grid(&self) -> Vec<(f64, f64)> {
        if !self.msvar {
            return vec![(1.0, 0.0)];
        }
        (0..self.h_grid_size)
            .map(|j| {
                let a = PI * j as f64 / self.h_grid_size as f64;
                (a.cos(), a.sin())
            })
            .collect()
    }
}

/// Per-observation scores and Hessians of the Gaussian AR log-likelihood at
/// the null estimate, parameters ordered `(mu, phi_1..phi_p, sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTerms {
    /// `T_eff x d`.
    pub scores: DMatrix<f64>,
    pub hessians: Vec<DMatrix<f64>>,
}

pub fn chp_score_terms(sample: &Sample, p: usize, fit0: &FittedModel) -> Result<ScoreTerms> {
    if sample.q() != 1 || fit0.spec.q != 1 || fit0.spec.p != p || !fit0.spec.is_linear() {
        return invalid("score terms need a univariate linear fit with matching lag order");
    }
    let th = &fit0.theta;
    let mu = th.mu[0][0];
    let s2 = th.sigma[0][(0, 0)];
    if !(s2 > 0.0) {
        return Err(Error::Domain("residual variance must be positive".into()));
    }
    let phi: Vec<f64> = th.phi.iter().map(|m| m[(0, 0)]).collect();
    let nz = sample.n_exog();
    let one_minus = 1.0 - phi.iter().sum::<f64>();
    let t_eff = sample.t() - p;
    let d = p + 2;
    let mut scores = DMatrix::zeros(t_eff, d);
    let mut hessians = Vec::with_capacity(t_eff);
    let s4 = s2 * s2;
    for t in 0..t_eff {
        let tt = t + p;
        let dev: Vec<f64> = (1..=p).map(|k| sample.y[(tt - k, 0)] - mu).collect();
        let mut e = sample.y[(tt, 0)] - mu - phi.iter().zip(&dev).map(|(f, x)| f * x).sum::<f64>();
        if nz > 0 {
            let z = sample.exog.as_ref().expect("exogenous regressors");
            e -= (0..nz).map(|r| th.beta[(r, 0)] * z[(tt, r)]).sum::<f64>();
        }
        scores[(t, 0)] = e * one_minus / s2;
        for k in 0..p {
            scores[(t, 1 + k)] = e * dev[k] / s2;
        }
        scores[(t, d - 1)] = -0.5 / s2 + 0.5 * e * e / s4;

        let mut h = DMatrix::zeros(d, d);
        h[(0, 0)] = -one_minus * one_minus / s2;
        for k in 0..p {
            let v = (-dev[k] * one_minus - e) / s2;
            h[(0, 1 + k)] = v;
            h[(1 + k, 0)] = v;
            for j in 0..p {
                h[(1 + k, 1 + j)] = -dev[k] * dev[j] / s2;
            }
            let w = -e * dev[k] / s4;
            h[(1 + k, d - 1)] = w;
            h[(d - 1, 1 + k)] = w;
        }
        h[(0, d - 1)] = -e * one_minus / s4;
        h[(d - 1, 0)] = h[(0, d - 1)];
        h[(d - 1, d - 1)] = 0.5 / s4 - e * e / (s4 * s2);
        hessians.push(h);
    }
    Ok(ScoreTerms { scores, hessians })
}

/// `mu*_t = (b_t + a_t^2) / 2 + a_t sum_{s<t} rho^{t-s} a_s`, with the sum
/// carried by the recursion `g_t = rho (g_{t-1} + a_{t-1})`.
pub fn mu_star(a: &[f64], b: &[f64], rho: f64) -> Vec<f64> {
    let mut g = 0.0;
    let mut out = Vec::with_capacity(a.len());
    for t in 0..a.len() {
        if t > 0 {
            g = rho * (g + a[t - 1]);
        }
        out.push(0.5 * (b[t] + a[t] * a[t]) + a[t] * g);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub h: (f64, f64),
    pub rho: f64,
    pub gamma: f64,
    /// `Gamma* / sqrt(e'e / T)`; `None` when the residual sum of squares is zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChpStatistics {
    pub sup_ts: f64,
    pub exp_ts: f64,
    pub grid: Vec<GridPoint>,
}

pub fn psi(ratio: Option<f64>) -> f64 {
    match ratio {
        Some(x) => {
            let n = Normal::new(0.0, 1.0).expect("standard normal");
            (2.0 * PI).sqrt() * (0.5 * (x - 1.0).powi(2)).exp() * n.cdf(x - 1.0)
        }
        None => 1.0,
    }
}

/// supTS and expTS from score terms.
///
/// Scores are rescaled to the standardized parameters `mu / sigma` and
/// `sigma^2 / sigma^2`, so directions do not depend on the units of `y`.
pub fn statistics_from_terms(terms: &ScoreTerms, sigma2: f64, config: &ChpConfig) -> Result<ChpStatistics> {
    let t = terms.scores.nrows();
    let d = terms.scores.ncols();
    let scale_mu = sigma2.sqrt();
    let scale_var = sigma2;
    let x = &terms.scores;
    let xtx = x.transpose() * x;
    let proj = xtx
        .clone()
        .cholesky()
        .map(|c| c.inverse() * x.transpose())
        .or_else(|| xtx.pseudo_inverse(1e-12).ok().map(|pi| pi * x.transpose()))
        .ok_or_else(|| Error::Estimation("score matrix is singular".into()))?;

    let mut grid = Vec::new();
    for h in config.h_grid() {
        let (hm, hv) = (h.0 * scale_mu, h.1 * scale_var);
        let a: Vec<f64> = (0..t).map(|i| hm * x[(i, 0)] + hv * x[(i, d - 1)]).collect();
        let b: Vec<f64> = terms
            .hessians
            .iter()
            .map(|hs| hm * hm * hs[(0, 0)] + 2.0 * hm * hv * hs[(0, d - 1)] + hv * hv * hs[(d - 1, d - 1)])
            .collect();
        for rho in config.rho_grid() {
            let m = DVector::from_vec(mu_star(&a, &b, rho));
            let gamma = m.sum() / (t as f64).sqrt();
            let coef = &proj * &m;
            let resid = &m - x * coef;
            let ee = resid.norm_squared();
            let scale = m.norm_squared().max(1e-300);
            let ratio = if ee > 1e-24 * scale { Some(gamma / (ee / t as f64).sqrt()) } else { None };
            grid.push(GridPoint { h, rho, gamma, ratio });
        }
    }
    Ok(summarize(grid))
}

/// Supremum of `max(0, ratio)^2 / 2` and the grid average of `psi`.
pub fn summarize(grid: Vec<GridPoint>) -> ChpStatistics {
    let sup_ts = grid.iter().map(|g| g.ratio.map_or(0.0, |r| 0.5 * r.max(0.0).powi(2))).fold(0.0, f64::max);
    let exp_ts = grid.iter().map(|g| psi(g.ratio)).sum::<f64>() / grid.len() as f64;
    ChpStatistics { sup_ts, exp_ts, grid }
}

fn statistics_for(sample: &Sample, config: &ChpConfig) -> Result<(ChpStatistics, FittedModel)> {
    let fit0 = fit_linear(sample, config.p)?;
    if fit0.degenerate {
        return Err(Error::Degenerate("zero residual variance".into()));
    }
    let terms = chp_score_terms(sample, config.p, &fit0)?;
    Ok((statistics_from_terms(&terms, fit0.theta.sigma[0][(0, 0)], config)?, fit0))
}

pub fn chp_statistics(sample: &Sample, config: &ChpConfig) -> Result<ChpStatistics> {
    config.validate()?;
    Ok(statistics_for(sample, config)?.0)
}

/// Share of bootstrap values at or above the observed one.
pub fn bootstrap_pvalue(stat0: f64, draws: &[f64]) -> f64 {
    draws.iter().filter(|&&v| v >= stat0).count() as f64 / draws.len() as f64
}

/// supTS and expTS with parametric-bootstrap p-values under the Gaussian AR null.
pub fn chp_test(sample: &Sample, config: &ChpConfig) -> Result<TestResult> {
    config.validate()?;
    if sample.q() != 1 {
        return invalid("the parameter stability test applies to a single series");
    }
    with_workers(config.workers, || {
        let (obs, fit0) = statistics_for(sample, config)?;
        let reps = run_replications(config.n, config.seed, |_, s| {
            let data = simulate_like(&fit0, sample, s)?;
            let st = statistics_for(&data, config)?.0;
            if st.sup_ts.is_finite() && st.exp_ts.is_finite() {
                Ok((st.sup_ts, st.exp_ts))
            } else {
                Err(Error::TestProcedure("non-finite bootstrap statistic".into()))
            }
        })?;
        let sup: Vec<f64> = reps.values.iter().map(|v| v.0).collect();
        let exp: Vec<f64> = reps.values.iter().map(|v| v.1).collect();
        let mut out = TestResult::new("chp");
        out.rows.push(StatRow { name: "supTS".into(), statistic: obs.sup_ts, critical_values: CriticalValues::from_sample(&sup), pvalue: bootstrap_pvalue(obs.sup_ts, &sup) });
        out.rows.push(StatRow { name: "expTS".into(), statistic: obs.exp_ts, critical_values: CriticalValues::from_sample(&exp), pvalue: bootstrap_pvalue(obs.exp_ts, &exp) });
        out.detail("switch", if config.msvar { "mean and variance" } else { "mean" });
        out.detail("rho_grid", config.rho_grid());
        out.failed_replications = reps.failed;
        out.fit0 = Some(fit0);
        Ok(out)
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate, DgpSpec};
    use crate::markov::TransitionMatrix;
    use crate::model::{ModelFamily, Theta};

    fn ar_sample(seed: u64, n: usize, p: usize) -> Sample {
        let phi = [0.5, -0.2];
        let th = Theta::univariate(&[2.0], &phi[..p], &[1.5], TransitionMatrix::single()).unwrap();
        Sample::new(simulate(&DgpSpec::new(if p == 0 { ModelFamily::Normal } else { ModelFamily::Ar }, n, th, seed)).unwrap().y, None).unwrap()
    }

    fn loglik_t(y: &[f64], p: usize, theta: &[f64], t: usize) -> f64 {
        let mu = theta[0];
        let s2 = theta[p + 1];
        let e = y[t] - mu - (1..=p).map(|k| theta[k] * (y[t - k] - mu)).sum::<f64>();
        -0.5 * (2.0 * PI * s2).ln() - e * e / (2.0 * s2)
    }

    #[test]
    fn scores_and_hessians_match_finite_differences() {
        for p in [0, 2] {
            let s = ar_sample(3, 80, p);
            let f = fit_linear(&s, p).unwrap();
            let y = s.series(0);
            let mut th = f.coefficients();
            th[p + 1] *= 1.3;
            th[0] += 0.2;
            let mut f2 = f.clone();
            f2.theta = Theta::univariate(&[th[0]], &th[1..=p], &[th[p + 1]], TransitionMatrix::single()).unwrap();
            let terms = chp_score_terms(&s, p, &f2).unwrap();
            let d = p + 2;
            for t in [0, 10, 40] {
                for i in 0..d {
                    let h = 1e-5;
                    let mut a = th.clone();
                    a[i] += h;
                    let mut b = th.clone();
                    b[i] -= h;
                    let num = (loglik_t(&y, p, &a, t + p) - loglik_t(&y, p, &b, t + p)) / (2.0 * h);
                    let ana = terms.scores[(t, i)];
                    assert!((num - ana).abs() <= 1e-6 * ana.abs().max(1.0), "score {i}: {num} vs {ana}");
                    for j in 0..d {
                        let g = |v: &[f64]| {
                            let mut c = v.to_vec();
                            c[j] += h;
                            let mut e = v.to_vec();
                            e[j] -= h;
                            (loglik_t(&y, p, &c, t + p) - loglik_t(&y, p, &e, t + p)) / (2.0 * h)
                        };
                        let num2 = (g(&a) - g(&b)) / (2.0 * h);
                        let ana2 = terms.hessians[t][(i, j)];
                        assert!((num2 - ana2).abs() <= 1e-4 * ana2.abs().max(1.0), "hessian {i}{j}: {num2} vs {ana2}");
                    }
                }
            }
        }
    }

    #[test]
    fn mean_score_and_first_order_conditions() {
        let s = ar_sample(5, 100, 0);
        let f = fit_linear(&s, 0).unwrap();
        let terms = chp_score_terms(&s, 0, &f).unwrap();
        let (mu, s2) = (f.theta.mu[0][0], f.theta.sigma[0][(0, 0)]);
        assert!((terms.scores[(7, 0)] - (s.y[(7, 0)] - mu) / s2).abs() < 1e-12);
        let s1 = ar_sample(6, 200, 2);
        let f1 = fit_linear(&s1, 2).unwrap();
        let sums = chp_score_terms(&s1, 2, &f1).unwrap().scores.row_sum();
        assert!(sums.amax() < 1e-6, "{sums}");
    }

    #[test]
    fn recursion_equals_double_sum() {
        let a: Vec<f64> = (0..200).map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0).collect();
        let b: Vec<f64> = (0..200).map(|i| ((i * 13 % 17) as f64 - 8.0) / 5.0).collect();
        for rho in [-0.7, 0.3, 0.69] {
            let fast = mu_star(&a, &b, rho);
            for t in 0..200 {
                let naive = 0.5 * (b[t] + a[t] * a[t]) + a[t] * (0..t).map(|s| rho.powi((t - s) as i32) * a[s]).sum::<f64>();
                assert!((fast[t] - naive).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn statistic_formulas() {
        let pt = |r: Option<f64>| GridPoint { h: (1.0, 0.0), rho: 0.5, gamma: 0.0, ratio: r };
        let st = summarize(vec![pt(Some(2.0)), pt(Some(-3.0)), pt(None)]);
        assert!((st.sup_ts - 2.0).abs() < 1e-15);
        let psi1 = (2.0 * PI).sqrt() * 0.5f64.exp() * Normal::new(0.0, 1.0).unwrap().cdf(1.0);
        assert!((psi(Some(2.0)) - psi1).abs() < 1e-12);
        assert_eq!(psi(None), 1.0);
        assert!((st.exp_ts - (psi1 + psi(Some(-3.0)) + 1.0) / 3.0).abs() < 1e-12);
        let c = ChpConfig::default();
        let g = c.rho_grid();
        assert_eq!(g.len(), 14);
        assert!((g[0] + 0.7).abs() < 1e-12 && (g[13] - 0.7).abs() < 1e-12);
        assert!(g.iter().all(|r| r.abs() > 0.04));
    }

    #[test]
    fn scale_invariance() {
        let s = ar_sample(9, 300, 1);
        for msvar in [false, true] {
            let c = ChpConfig { msvar, ..Default::default() };
            let a = chp_statistics(&s, &c).unwrap();
            let b = chp_statistics(&s.scaled(37.0), &c).unwrap();
            assert!((a.sup_ts - b.sup_ts).abs() < 1e-8 * a.sup_ts.max(1.0));
            assert!((a.exp_ts - b.exp_ts).abs() < 1e-8 * a.exp_ts.max(1.0));
        }
    }

    #[test]
    fn bootstrap_pvalues_bounded_and_monotone() {
        let draws = [0.1, 0.5, 0.9, 1.3];
        assert_eq!(bootstrap_pvalue(0.0, &draws), 1.0);
        assert_eq!(bootstrap_pvalue(2.0, &draws), 0.0);
        assert!(bootstrap_pvalue(0.6, &draws) <= bootstrap_pvalue(0.4, &draws));
    }

    #[test]
    fn msar_rejected() {
        let th = Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], TransitionMatrix::two_regime(0.95, 0.90).unwrap()).unwrap();
        let y = simulate(&DgpSpec::new(ModelFamily::Msar, 500, th, 2)).unwrap().y;
        let s = Sample::new(y, None).unwrap();
        let r = chp_test(&s, &ChpConfig { n: 200, msvar: true, seed: 1, ..Default::default() }).unwrap();
        assert!(r.rows.iter().all(|row| row.pvalue < 0.05), "{:?}", r.rows);
    }
}
