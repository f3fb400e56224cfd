//! Exact Gaussian likelihood through the composite-state Hamilton filter.
//!
//! A composite state packs `(s_t, s_{t-1}, ..., s_{t-p})` into one index,
//! `s_t + M s_{t-1} + ... + M^p s_{t-p}`. The likelihood conditions on the
//! first `p` observations, so filter rows correspond to `t = p, ..., T-1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::markov::{ergodic_distribution, TransitionMatrix};
use crate::model::{ModelSpec, Sample, Theta};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeStateSpace {
    pub m: usize,
    pub p: usize,
    pub size: usize,
    transition: TransitionMatrix,
    /// `M^p`, the number of distinct lag tails.
    tail: usize,
}

impl CompositeStateSpace {
    /// Regime `s_{t-lag}` of composite state `idx`.
    #[inline]
    pub fn digit(&self, idx: usize, lag: usize) -> usize {
        (idx / self.m.pow(lag as u32)) % self.m
    }

    pub fn tuple(&self, idx: usize) -> Vec<usize> {
        (0..=self.p).map(|lag| self.digit(idx, lag)).collect()
    }

    pub fn index(&self, tuple: &[usize]) -> usize {
        tuple.iter().rev().fold(0, |acc, &s| acc * self.m + s)
    }

    /// Composite transition probability `P(S*_{t+1} = to | S*_t = from)`.
    #[inline]
    pub fn prob(&self, to: usize, from: usize) -> f64 {
        if to / self.m != from % self.tail {
            return 0.0;
        }
        self.transition.prob(to % self.m, from % self.m)
    }

    /// The `from` states that can reach `to`, one per dropped oldest regime.
    #[inline]
    fn predecessors(&self, to: usize) -> impl Iterator<Item = usize> + '_ {
        let base = to / self.m;
        (0..self.m).map(move |old| base + self.tail * old)
    }

    /// The `to` states reachable from `from`, one per new regime.
    #[inline]
    fn successors(&self, from: usize) -> impl Iterator<Item = usize> + '_ {
        let base = self.m * (from % self.tail);
        (0..self.m).map(move |new| base + new)
    }

    pub fn big_p(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.size, self.size, |to, from| self.prob(to, from))
    }

    /// Stationary distribution of the composite chain:
    /// `pi(s_{t-p}) * prod_j P(s_{t-j+1} | s_{t-j})`.
    pub fn initial_distribution(&self) -> Result<Vec<f64>> {
        let pi = ergodic_distribution(&self.transition)?;
        Ok((0..self.size)
            .map(|idx| {
                let mut w = pi[self.digit(idx, self.p)];
                for lag in (1..=self.p).rev() {
                    w *= self.transition.prob(self.digit(idx, lag - 1), self.digit(idx, lag));
                }
                w
            })
            .collect())
    }
}

pub fn build_composite(p_mat: &TransitionMatrix, p: usize) -> CompositeStateSpace {
    let m = p_mat.m();
    CompositeStateSpace { m, p, size: m.pow(p as u32 + 1), transition: p_mat.clone(), tail: m.pow(p as u32) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// Number of composite states.
    pub n_states: usize,
    /// `T_eff x n_states`, row-major: `P(S*_t | y_1..y_t)`.
    pub xi_filtered: Vec<f64>,
    /// `T_eff x n_states`, row-major: `P(S*_t | y_1..y_{t-1})`.
    pub xi_predicted: Vec<f64>,
    pub loglik: f64,
    /// `log f(y_t | y_1..y_{t-1})` per effective observation.
    pub cond_loglik: Vec<f64>,
}

impl FilterOutput {
    pub fn t_eff(&self) -> usize {
        self.cond_loglik.len()
    }

    pub fn filtered(&self, t: usize) -> &[f64] {
        &self.xi_filtered[t * self.n_states..(t + 1) * self.n_states]
    }

    pub fn predicted(&self, t: usize) -> &[f64] {
        &self.xi_predicted[t * self.n_states..(t + 1) * self.n_states]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherOutput {
    /// `T_eff x M`: `P(S_t = j | y_1..y_T)`.
    pub xi_smoothed: DMatrix<f64>,
    /// `T_eff x n_states`, row-major composite smoothed probabilities.
    pub composite: Vec<f64>,
    /// Expected transition counts between consecutive filter rows:
    /// entry `(to, from)`.
    pub transition_counts: DMatrix<f64>,
}

/// Per-regime Gaussian log-density with precomputed inverse Cholesky factors.
#[derive(Debug, Clone)]
pub(crate) struct RegimeDensities {
    q: usize,
    /// Row-major `q x q` lower-triangular `L^{-1}` per regime.
    linv: Vec<Vec<f64>>,
    log_norm: Vec<f64>,
}

impl RegimeDensities {
    pub(crate) fn new(sigma: &[DMatrix<f64>]) -> Result<Self> {
        let q = sigma[0].nrows();
        let mut linv = Vec::with_capacity(sigma.len());
        let mut log_norm = Vec::with_capacity(sigma.len());
        for (j, s) in sigma.iter().enumerate() {
            if !(s[(0, 0)] > 0.0) || s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("variance of regime {} is not positive", j + 1)));
            }
            let chol = s
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite(format!("covariance of regime {}", j + 1)))?;
            let l = chol.l();
            let logdet: f64 = 2.0 * (0..q).map(|i| l[(i, i)].ln()).sum::<f64>();
            let inv = l
                .solve_lower_triangular(&DMatrix::identity(q, q))
                .ok_or_else(|| Error::NotPositiveDefinite(format!("covariance of regime {}", j + 1)))?;
            linv.push((0..q * q).map(|i| inv[(i / q, i % q)]).collect());
            log_norm.push(-0.5 * (q as f64 * LN_2PI + logdet));
        }
        Ok(Self { q, linv, log_norm })
    }

    #[inline]
    pub(crate) fn log_density(&self, j: usize, e: &[f64]) -> f64 {
        let li = &self.linv[j];
        let mut quad = 0.0;
        for r in 0..self.q {
            let mut z = 0.0;
            for c in 0..=r {
                z += li[r * self.q + c] * e[c];
            }
            quad += z * z;
        }
        self.log_norm[j] - 0.5 * quad
    }
}

/// Residual building blocks: `e_t(s*) = base_t - shift(s*)`.
#[derive(Debug, Clone)]
pub(crate) struct ResidualParts {
    pub q: usize,
    /// `T_eff x q`, row-major: `y_t - sum_k Phi_k y_{t-k} - beta' z_t`.
    pub base: Vec<f64>,
    /// `n_states x q`, row-major: `mu_{s_t} - sum_k Phi_k mu_{s_{t-k}}`.
    pub shift: Vec<f64>,
}

impl ResidualParts {
    pub(crate) fn new(theta: &Theta, sample: &Sample, space: &CompositeStateSpace) -> Self {
        let q = sample.q();
        let p = theta.phi.len();
        let t_eff = sample.t() - p;
        let mut base = vec![0.0; t_eff * q];
        for t in p..sample.t() {
            let row = &mut base[(t - p) * q..(t - p + 1) * q];
            for i in 0..q {
                row[i] = sample.y[(t, i)];
            }
            for (lag, f) in theta.phi.iter().enumerate() {
                for i in 0..q {
                    for c in 0..q {
                        row[i] -= f[(i, c)] * sample.y[(t - lag - 1, c)];
                    }
                }
            }
            if let Some(z) = &sample.exog {
                for i in 0..q {
                    for r in 0..z.ncols() {
                        row[i] -= theta.beta[(r, i)] * z[(t, r)];
                    }
                }
            }
        }
        let mut shift = vec![0.0; space.size * q];
        for idx in 0..space.size {
            let row = &mut shift[idx * q..(idx + 1) * q];
            let s0 = space.digit(idx, 0);
            for i in 0..q {
                row[i] = theta.mu[s0][i];
            }
            for (lag, f) in theta.phi.iter().enumerate() {
                let s = space.digit(idx, lag + 1);
                for i in 0..q {
                    for c in 0..q {
                        row[i] -= f[(i, c)] * theta.mu[s][c];
                    }
                }
            }
        }
        Self { q, base, shift }
    }

    #[inline]
    pub(crate) fn residual(&self, t: usize, state: usize, out: &mut [f64]) {
        let q = self.q;
        for i in 0..q {
            out[i] = self.base[t * q + i] - self.shift[state * q + i];
        }
    }
}

fn check_inputs(theta: &Theta, sample: &Sample, spec: &ModelSpec) -> Result<()> {
    theta.check(spec)?;
    if sample.q() != spec.q || sample.n_exog() != spec.n_exog {
        return Err(Error::Dimension(format!(
            "data have {} series and {} regressors, model expects {} and {}",
            sample.q(),
            sample.n_exog(),
            spec.q,
            spec.n_exog
        )));
    }
    if sample.t() <= spec.p {
        return Err(Error::InvalidInput(format!("need more than {} observations, got {}", spec.p, sample.t())));
    }
    Ok(())
}

/// Per-observation, per-composite-state log densities, `T_eff x n_states` row-major.
pub(crate) fn log_densities(theta: &Theta, sample: &Sample, space: &CompositeStateSpace) -> Result<Vec<f64>> {
    let dens = RegimeDensities::new(&theta.sigma)?;
    let parts = ResidualParts::new(theta, sample, space);
    let t_eff = sample.t() - space.p;
    let mut out = vec![0.0; t_eff * space.size];
    let mut e = vec![0.0; parts.q];
    for t in 0..t_eff {
        for s in 0..space.size {
            parts.residual(t, s, &mut e);
            out[t * space.size + s] = dens.log_density(space.digit(s, 0), &e);
        }
    }
    Ok(out)
}

pub fn hamilton_filter(theta: &Theta, sample: &Sample, spec: &ModelSpec) -> Result<FilterOutput> {
    check_inputs(theta, sample, spec)?;
    let space = build_composite(&theta.transition, spec.p);
    let ld = log_densities(theta, sample, &space)?;
    filter_from_log_densities(&space, &ld)
}

pub(crate) fn filter_from_log_densities(space: &CompositeStateSpace, ld: &[f64]) -> Result<FilterOutput> {
    let n = space.size;
    let t_eff = ld.len() / n;
    let mut xi_filtered = vec![0.0; t_eff * n];
    let mut xi_predicted = vec![0.0; t_eff * n];
    let mut cond_loglik = Vec::with_capacity(t_eff);
    let mut pred = space.initial_distribution()?;
    let mut loglik = 0.0;
    let mut f = vec![0.0; n];
    for t in 0..t_eff {
        let row = &ld[t * n..(t + 1) * n];
        let max = row
            .iter()
            .zip(&pred)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for s in 0..n {
            f[s] = if pred[s] > 0.0 { pred[s] * (row[s] - max).exp() } else { 0.0 };
            sum += f[s];
        }
        let c = max + sum.ln();
        if !c.is_finite() {
            return Err(Error::Domain(format!("observation {} has zero likelihood under every regime", t + 1)));
        }
        loglik += c;
        cond_loglik.push(c);
        xi_predicted[t * n..(t + 1) * n].copy_from_slice(&pred);
        for s in 0..n {
            xi_filtered[t * n + s] = f[s] / sum;
        }
        let filt = &xi_filtered[t * n..(t + 1) * n];
        for (to, slot) in pred.iter_mut().enumerate() {
            *slot = space.predecessors(to).map(|from| space.prob(to, from) * filt[from]).sum();
        }
    }
    Ok(FilterOutput { n_states: n, xi_filtered, xi_predicted, loglik, cond_loglik })
}

pub fn kim_smoother(filter: &FilterOutput, space: &CompositeStateSpace) -> SmootherOutput {
    let n = space.size;
    let m = space.m;
    let t_eff = filter.t_eff();
    let mut composite = vec![0.0; t_eff * n];
    let mut counts = DMatrix::zeros(m, m);
    if t_eff == 0 {
        return SmootherOutput { xi_smoothed: DMatrix::zeros(0, m), composite, transition_counts: counts };
    }
    composite[(t_eff - 1) * n..].copy_from_slice(filter.filtered(t_eff - 1));
    let mut ratio = vec![0.0; n];
    for t in (0..t_eff - 1).rev() {
        let pred_next = filter.predicted(t + 1);
        for s in 0..n {
            ratio[s] = if pred_next[s] > 0.0 { composite[(t + 1) * n + s] / pred_next[s] } else { 0.0 };
        }
        let filt = filter.filtered(t);
        let mut total = 0.0;
        for from in 0..n {
            let mut acc = 0.0;
            for to in space.successors(from) {
                let w = space.prob(to, from) * ratio[to];
                acc += w;
                counts[(to % m, from % m)] += filt[from] * w;
            }
            let v = filt[from] * acc;
            composite[t * n + from] = v;
            total += v;
        }
        if total > 0.0 {
            for v in &mut composite[t * n..(t + 1) * n] {
                *v /= total;
            }
        }
    }
    let mut xi_smoothed = DMatrix::zeros(t_eff, m);
    for t in 0..t_eff {
        for s in 0..n {
            xi_smoothed[(t, s % m)] += composite[t * n + s];
        }
    }
    SmootherOutput { xi_smoothed, composite, transition_counts: counts }
}

/// Log-likelihood of a one-regime model, conditional on the first `p` observations.
pub fn linear_loglik(theta: &Theta, sample: &Sample, spec: &ModelSpec) -> Result<f64> {
    if spec.k != 1 {
        return Err(Error::InvalidInput("linear_loglik needs a one-regime model".into()));
    }
    Ok(linear_cond_loglik(theta, sample, spec)?.iter().sum())
}

/// Per-observation log densities of a one-regime model.
pub fn linear_cond_loglik(theta: &Theta, sample: &Sample, spec: &ModelSpec) -> Result<Vec<f64>> {
    check_inputs(theta, sample, spec)?;
    let sigma = &theta.sigma[0];
    let q = spec.q;
    let chol = sigma.clone().cholesky().ok_or_else(|| {
        if q == 1 {
            Error::Domain(format!("variance {} is not positive", sigma[(0, 0)]))
        } else {
            Error::NotPositiveDefinite("covariance".into())
        }
    })?;
    let logdet = sigma.determinant().ln();
    let sinv = chol.inverse();
    let mut out = Vec::with_capacity(sample.t() - spec.p);
    for t in spec.p..sample.t() {
        let mut e: DVector<f64> = sample.y.row(t).transpose() - &theta.mu[0];
        for (lag, f) in theta.phi.iter().enumerate() {
            e -= f * (sample.y.row(t - lag - 1).transpose() - &theta.mu[0]);
        }
        if let Some(z) = &sample.exog {
            e -= theta.beta.transpose() * z.row(t).transpose();
        }
        let quad = (e.transpose() * &sinv * &e)[(0, 0)];
        out.push(-0.5 * (q as f64 * LN_2PI + logdet + quad));
    }
    Ok(out)
}

/// Filter log-likelihood; dispatches to the closed form for one regime.
pub fn loglik(theta: &Theta, sample: &Sample, spec: &ModelSpec) -> Result<f64> {
    if spec.k == 1 {
        linear_loglik(theta, sample, spec)
    } else {
        Ok(hamilton_filter(theta, sample, spec)?.loglik)
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn random_instance(seed: u64, m: usize, p: usize, t: usize, q: usize) -> (ModelSpec, Theta, Sample) {
        let mut r = rng_from_seed(seed);
        let spec = ModelSpec::switching(q, p, m, 0, true, true);
        let raw = DMatrix::from_fn(m, m, |_, _| 0.1 + r.random::<f64>());
        let transition = if m == 1 { TransitionMatrix::single() } else { TransitionMatrix::from_unnormalized(raw).unwrap() };
        let theta = Theta {
            mu: (0..m).map(|_| DVector::from_fn(q, |_, _| r.random_range(-2.0..2.0))).collect(),
            phi: (0..p).map(|_| DMatrix::from_fn(q, q, |_, _| r.random_range(-0.4..0.4))).collect(),
            beta: DMatrix::zeros(0, q),
            sigma: (0..m)
                .map(|_| {
                    let a = DMatrix::from_fn(q, q, |_, _| r.random_range(-0.5..0.5));
                    &a * a.transpose() + DMatrix::identity(q, q) * r.random_range(0.3..1.5)
                })
                .collect(),
            transition,
        };
        let y = DMatrix::from_fn(t, q, |_, _| r.random_range(-3.0..3.0));
        (spec, theta, Sample::new(y, None).unwrap())
    }

    #[test]
    fn composite_shapes() {
        let p = TransitionMatrix::two_regime(0.9, 0.8).unwrap();
        let s0 = build_composite(&p, 0);
        assert_eq!(s0.big_p(), *p.matrix());
        let s1 = build_composite(&p, 1);
        assert_eq!(s1.size, 4);
        // from (s_t = 1, s_{t-1} = 1): mass p11 on (1,1) and p12 on (2,1)
        let from = s1.index(&[0, 0]);
        assert_eq!(s1.prob(s1.index(&[0, 0]), from), 0.9);
        assert!((s1.prob(s1.index(&[1, 0]), from) - 0.1).abs() < 1e-15);
        let big = s1.big_p();
        for c in 0..4 {
            assert!((big.column(c).sum() - 1.0).abs() < 1e-15);
        }
        let p3 = TransitionMatrix::from_unnormalized(DMatrix::from_element(3, 3, 1.0)).unwrap();
        assert_eq!(build_composite(&p3, 2).size, 27);
    }

    #[test]
    fn initial_distribution_is_stationary() {
        let p = TransitionMatrix::two_regime(0.9, 0.7).unwrap();
        let space = build_composite(&p, 2);
        let init = DVector::from_vec(space.initial_distribution().unwrap());
        assert!((space.big_p() * &init - &init).amax() < 1e-12);
    }

    #[test]
    fn iid_standard_normal() {
        let spec = ModelSpec::linear(1, 1, 0);
        let theta = Theta::univariate(&[0.0], &[0.0], &[1.0], TransitionMatrix::single()).unwrap();
        let y = [0.3, -1.2, 0.5, 2.0];
        let s = Sample::univariate(&y);
        let expected: f64 = y[1..].iter().map(|v| -0.5 * LN_2PI - 0.5 * v * v).sum();
        let ll = hamilton_filter(&theta, &s, &spec).unwrap().loglik;
        assert!((ll - expected).abs() < 1e-12);
        let s0 = Sample::univariate(&[0.0, 0.0]);
        assert!((linear_loglik(&theta, &s0, &spec).unwrap() + 0.5 * LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn var_without_dynamics_is_iid_mvn() {
        let (_, mut theta, sample) = random_instance(4, 1, 1, 6, 2);
        theta.phi[0] = DMatrix::zeros(2, 2);
        let spec = ModelSpec::linear(2, 1, 0);
        let s = &theta.sigma[0];
        let inv = s.clone().try_inverse().unwrap();
        let expected: f64 = (1..6)
            .map(|t| {
                let e = sample.y.row(t).transpose() - &theta.mu[0];
                -LN_2PI - 0.5 * s.determinant().ln() - 0.5 * (e.transpose() * &inv * &e)[(0, 0)]
            })
            .sum();
        assert!((linear_loglik(&theta, &sample, &spec).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn two_state_enumeration_t3() {
        let spec = ModelSpec::switching(1, 0, 2, 0, true, true);
        let theta = Theta::univariate(&[-1.0, 2.0], &[], &[0.5, 2.0], TransitionMatrix::two_regime(0.8, 0.7).unwrap()).unwrap();
        let s = Sample::univariate(&[0.1, 1.9, -0.7]);
        let ll = hamilton_filter(&theta, &s, &spec).unwrap().loglik;
        assert!((ll - oracle::enumerate_loglik(&theta, &s, 0)).abs() < 1e-12);
    }

    #[test]
    fn filter_matches_enumeration_on_random_instances() {
        let mut count = 0;
        for seed in 0..60u64 {
            let m = 1 + (seed % 3) as usize;
            let p = (seed / 3 % 3) as usize;
            let q = 1 + (seed % 2) as usize;
            let t = 3 + (seed % 5) as usize;
            if m.pow(t as u32) * m.pow(p as u32 + 1) > 100_000 || t <= p {
                continue;
            }
            let (spec, theta, sample) = random_instance(seed, m, p, t, q);
            let ll = hamilton_filter(&theta, &sample, &spec).unwrap().loglik;
            let oracle = oracle::enumerate_loglik(&theta, &sample, p);
            assert!((ll - oracle).abs() < 1e-8, "seed {seed}: {ll} vs {oracle}");
            count += 1;
        }
        assert!(count > 40);
    }

    #[test]
    fn smoother_matches_enumeration() {
        for seed in 0..10u64 {
            let (spec, theta, sample) = random_instance(seed, 2 + (seed % 2) as usize, (seed % 3) as usize, 6, 1);
            let space = build_composite(&theta.transition, spec.p);
            let f = hamilton_filter(&theta, &sample, &spec).unwrap();
            let sm = kim_smoother(&f, &space);
            let oracle = oracle::enumerate_smoothed(&theta, &sample, spec.p);
            assert!((&sm.xi_smoothed - &oracle).amax() < 1e-10, "seed {seed}");
            let last = f.t_eff() - 1;
            assert_eq!(&sm.composite[last * f.n_states..], f.filtered(last));
        }
    }

    #[test]
    fn smoother_two_by_two_hand_case() {
        let spec = ModelSpec::switching(1, 0, 2, 0, true, true);
        let theta = Theta::univariate(&[0.0, 3.0], &[], &[1.0, 1.0], TransitionMatrix::two_regime(0.9, 0.6).unwrap()).unwrap();
        let s = Sample::univariate(&[0.4, 2.2]);
        let space = build_composite(&theta.transition, 0);
        let sm = kim_smoother(&hamilton_filter(&theta, &s, &spec).unwrap(), &space);
        // four paths, weights pi(s0) P(s1|s0) phi(y0 - mu_s0) phi(y1 - mu_s1)
        let pi = [0.8, 0.2];
        let phi = |y: f64, m: f64| (-0.5 * (y - m) * (y - m)).exp();
        let mu = [0.0, 3.0];
        let mut w = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                w[a][b] = pi[a] * theta.transition.prob(b, a) * phi(0.4, mu[a]) * phi(2.2, mu[b]);
            }
        }
        let tot: f64 = w.iter().flatten().sum();
        assert!((sm.xi_smoothed[(0, 0)] - (w[0][0] + w[0][1]) / tot).abs() < 1e-12);
        assert!((sm.xi_smoothed[(1, 0)] - (w[0][0] + w[1][0]) / tot).abs() < 1e-12);
        assert!((sm.transition_counts[(1, 0)] - w[0][1] / tot).abs() < 1e-12);
    }

    #[test]
    fn one_regime_smoother_is_one() {
        let (spec, theta, sample) = random_instance(1, 1, 1, 8, 1);
        let f = hamilton_filter(&theta, &sample, &spec).unwrap();
        let sm = kim_smoother(&f, &build_composite(&theta.transition, 1));
        assert!(sm.xi_smoothed.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_variance() {
        let spec = ModelSpec::switching(1, 0, 2, 0, true, true);
        let mut theta = Theta::univariate(&[0.0, 1.0], &[], &[1.0, 1.0], TransitionMatrix::two_regime(0.9, 0.9).unwrap()).unwrap();
        theta.sigma[1][(0, 0)] = -1.0;
        assert!(hamilton_filter(&theta, &Sample::univariate(&[1.0, 2.0]), &spec).is_err());
    }

    #[test]
    fn far_outliers_do_not_underflow() {
        let spec = ModelSpec::switching(1, 1, 2, 0, true, true);
        let theta = Theta::univariate(&[0.0, 1.0], &[0.5], &[0.01, 0.02], TransitionMatrix::two_regime(0.9, 0.9).unwrap()).unwrap();
        let s = Sample::univariate(&[0.0, 100.0, -100.0, 50.0]);
        assert!(hamilton_filter(&theta, &s, &spec).unwrap().loglik.is_finite());
    }

    proptest! {
        #[test]
        fn linear_agrees_with_filter(seed in any::<u64>(), p in 0usize..3, q in 1usize..3) {
            let (_, theta, sample) = random_instance(seed, 1, p, 12, q);
            let spec = ModelSpec::linear(q, p, 0);
            let a = linear_loglik(&theta, &sample, &spec).unwrap();
            let b = hamilton_filter(&theta, &sample, &spec).unwrap().loglik;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn filtered_rows_sum_to_one(seed in any::<u64>()) {
            let (spec, theta, sample) = random_instance(seed, 3, 1, 20, 1);
            let f = hamilton_filter(&theta, &sample, &spec).unwrap();
            for t in 0..f.t_eff() {
                prop_assert!((f.filtered(t).iter().sum::<f64>() - 1.0).abs() < 1e-10);
                prop_assert!((f.predicted(t).iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn relabeling_leaves_loglik(seed in any::<u64>()) {
            let (spec, theta, sample) = random_instance(seed, 3, 1, 15, 1);
            let a = hamilton_filter(&theta, &sample, &spec).unwrap().loglik;
            let b = hamilton_filter(&theta.permuted(&[2, 0, 1]), &sample, &spec).unwrap().loglik;
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
