//! Bounded maximum likelihood through unconstrained reparameterisation.
//!
//! Scalars with two finite bounds go through a logistic map, one-sided
//! bounds through an exponential, and coordinates with equal bounds are held
//! fixed. Multivariate covariances use a Cholesky factor with log diagonal.
//! With more than two regimes each transition column is
//! `eps + (1 - k eps) softmax(x)`.

use nalgebra::DMatrix;

use super::{EstimOptions, LocalFit};
use crate::error::{invalid, Error, Result};
use crate::likelihood;
use crate::model::{vech_pairs, ModelSpec, Sample, Theta};
use crate::optim::bfgs::{minimize, BfgsOptions};

const EDGE: f64 = 1e-9;

/// Box constraints in the free parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Probability floor used for columns of `P` with more than two regimes.
    pub prob_eps: f64,
    /// Variance floor used for multivariate covariances.
    pub var_lower: f64,
}

impl Bounds {
    pub fn unbounded(spec: &ModelSpec) -> Self {
        let layout = spec.free_layout();
        let mut lower = vec![f64::NEG_INFINITY; layout.len()];
        let mut upper = vec![f64::INFINITY; layout.len()];
        if spec.q == 1 {
            for i in layout.sigma.clone() {
                lower[i] = 0.0;
            }
        }
        for i in layout.transition.clone() {
            lower[i] = 0.0;
            upper[i] = 1.0;
        }
        Self { lower, upper, prob_eps: 0.0, var_lower: 0.0 }
    }

    pub fn from_options(spec: &ModelSpec, options: &EstimOptions) -> Result<Self> {
        let mut b = Self::unbounded(spec);
        let layout = spec.free_layout();
        if let Some(eps) = options.trans_prob_eps {
            b.prob_eps = eps;
            for i in layout.transition.clone() {
                b.lower[i] = eps;
                b.upper[i] = 1.0 - eps;
            }
        }
        if let Some(v) = options.var_lower {
            b.var_lower = v;
            if spec.q == 1 {
                for i in layout.sigma.clone() {
                    b.lower[i] = v;
                }
            }
        }
        let flat = spec.flat_layout();
        let to_free = |v: &[f64], what: &str| -> Result<Vec<f64>> {
            if v.len() != flat.len() {
                return invalid(format!("{what} has {} entries, the model has {} parameters", v.len(), flat.len()));
            }
            let mut out: Vec<f64> = v[..flat.transition.start].to_vec();
            let k = spec.k;
            for from in 0..k {
                for to in 0..k.saturating_sub(1) {
                    out.push(v[flat.transition.start + from * k + to]);
                }
            }
            Ok(out)
        };
        if let Some(l) = &options.mle_theta_low {
            for (i, v) in to_free(l, "mle_theta_low")?.into_iter().enumerate() {
                b.lower[i] = b.lower[i].max(v);
            }
        }
        if let Some(u) = &options.mle_theta_upp {
            for (i, v) in to_free(u, "mle_theta_upp")?.into_iter().enumerate() {
                b.upper[i] = b.upper[i].min(v);
            }
        }
        if let Some(i) = (0..b.lower.len()).find(|&i| b.lower[i] > b.upper[i]) {
            return invalid(format!("empty bound interval for parameter {i}"));
        }
        Ok(b)
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.lower[i] == self.upper[i]
    }
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Fixed(f64),
    Interval(f64, f64),
    Lower(f64),
    Upper(f64),
    Free,
}

impl Map {
    fn new(l: f64, u: f64) -> Self {
        match (l.is_finite(), u.is_finite()) {
            _ if l == u => Map::Fixed(l),
            (true, true) => Map::Interval(l, u),
            (true, false) => Map::Lower(l),
            (false, true) => Map::Upper(u),
            (false, false) => Map::Free,
        }
    }

    fn forward(self, x: f64) -> f64 {
        match self {
            Map::Fixed(v) => v,
            Map::Interval(l, u) => l + (u - l) / (1.0 + (-x).exp()),
            Map::Lower(l) => l + x.exp(),
            Map::Upper(u) => u - x.exp(),
            Map::Free => x,
        }
    }

    fn inverse(self, v: f64) -> f64 {
        match self {
            Map::Fixed(_) => 0.0,
            Map::Interval(l, u) => {
                let r = ((v - l) / (u - l)).clamp(EDGE, 1.0 - EDGE);
                (r / (1.0 - r)).ln()
            }
            Map::Lower(l) => (v - l).max(EDGE * (1.0 + l.abs())).ln(),
            Map::Upper(u) => (u - v).max(EDGE * (1.0 + u.abs())).ln(),
            Map::Free => v,
        }
    }
}

/// Bijection between the free layout and unconstrained coordinates.
struct Reparam {
    spec: ModelSpec,
    scalar: Vec<(usize, Map)>,
    chol_groups: usize,
    softmax: bool,
    bounds: Bounds,
    n_u: usize,
}

impl Reparam {
    fn new(spec: &ModelSpec, bounds: &Bounds) -> Self {
        let layout = spec.free_layout();
        let chol = spec.q > 1;
        let softmax = spec.k > 2;
        let mut scalar = Vec::new();
        for i in 0..layout.len() {
            let in_sigma = layout.sigma.contains(&i);
            let in_p = layout.transition.contains(&i);
            if (chol && in_sigma) || (softmax && in_p) {
                continue;
            }
            scalar.push((i, Map::new(bounds.lower[i], bounds.upper[i])));
        }
        let chol_groups = if chol { layout.sigma.len() / (spec.q * (spec.q + 1) / 2) } else { 0 };
        let n_scalar = scalar.iter().filter(|(_, m)| !matches!(m, Map::Fixed(_))).count();
        let n_chol = chol_groups * spec.q * (spec.q + 1) / 2;
        let n_soft = if softmax { spec.k * (spec.k - 1) } else { 0 };
        Self { spec: *spec, scalar, chol_groups, softmax, bounds: bounds.clone(), n_u: n_scalar + n_chol + n_soft }
    }

    fn forward(&self, u: &[f64]) -> Vec<f64> {
        let layout = self.spec.free_layout();
        let mut free = vec![0.0; layout.len()];
        let mut pos = 0;
        for &(i, m) in &self.scalar {
            if let Map::Fixed(v) = m {
                free[i] = v;
            } else {
                free[i] = m.forward(u[pos]);
                pos += 1;
            }
        }
        let q = self.spec.q;
        let nv = q * (q + 1) / 2;
        for g in 0..self.chol_groups {
            let mut l = DMatrix::zeros(q, q);
            for (idx, (a, b)) in vech_pairs(q).into_iter().enumerate() {
                // vech pairs are (row <= col); fill the lower factor transposed
                let x = u[pos + idx];
                l[(b, a)] = if a == b { x.exp() } else { x };
            }
            pos += nv;
            let s = &l * l.transpose() + DMatrix::identity(q, q) * self.bounds.var_lower;
            for (idx, (a, b)) in vech_pairs(q).into_iter().enumerate() {
                free[layout.sigma.start + g * nv + idx] = s[(a, b)];
            }
        }
        if self.softmax {
            let k = self.spec.k;
            let eps = self.bounds.prob_eps;
            for from in 0..k {
                let xs = &u[pos..pos + k - 1];
                let max = xs.iter().cloned().fold(0.0, f64::max);
                let denom = (-max).exp() + xs.iter().map(|x| (x - max).exp()).sum::<f64>();
                for to in 0..k - 1 {
                    free[layout.transition.start + from * (k - 1) + to] = eps + (1.0 - k as f64 * eps) * (xs[to] - max).exp() / denom;
                }
                pos += k - 1;
            }
        }
        free
    }

    fn inverse(&self, free: &[f64]) -> Vec<f64> {
        let layout = self.spec.free_layout();
        let mut u = Vec::with_capacity(self.n_u);
        for &(i, m) in &self.scalar {
            if !matches!(m, Map::Fixed(_)) {
                u.push(m.inverse(free[i]));
            }
        }
        let q = self.spec.q;
        let nv = q * (q + 1) / 2;
        for g in 0..self.chol_groups {
            let mut s = DMatrix::zeros(q, q);
            for (idx, (a, b)) in vech_pairs(q).into_iter().enumerate() {
                s[(a, b)] = free[layout.sigma.start + g * nv + idx];
                s[(b, a)] = s[(a, b)];
            }
            let floor = self.bounds.var_lower;
            let shifted = &s - DMatrix::identity(q, q) * floor;
            let l = shifted
                .cholesky()
                .map(|c| c.l())
                .unwrap_or_else(|| DMatrix::from_diagonal(&s.diagonal().map(|v| (v - floor).max(1e-8).sqrt())));
            for (a, b) in vech_pairs(q) {
                let v = l[(b, a)];
                u.push(if a == b { v.max(1e-12).ln() } else { v });
            }
        }
        if self.softmax {
            let k = self.spec.k;
            let eps = self.bounds.prob_eps;
            for from in 0..k {
                let col: Vec<f64> = (0..k - 1).map(|to| free[layout.transition.start + from * (k - 1) + to]).collect();
                let last = 1.0 - col.iter().sum::<f64>();
                let w = |p: f64| ((p - eps) / (1.0 - k as f64 * eps)).max(EDGE);
                let wl = w(last);
                for p in col {
                    u.push((w(p) / wl).ln());
                }
            }
        }
        u
    }
}

/// Clamps a free vector into the box, slightly inside any finite bound.
fn project(free: &mut [f64], bounds: &Bounds) {
    for i in 0..free.len() {
        let (l, u) = (bounds.lower[i], bounds.upper[i]);
        if l == u {
            free[i] = l;
            continue;
        }
        let margin = if l.is_finite() && u.is_finite() { 1e-6 * (u - l) } else { 1e-8 };
        free[i] = free[i].clamp(l + margin, u - margin);
    }
}

/// Maximises the likelihood over the box, starting from `start`.
pub fn mle_from(sample: &Sample, spec: &ModelSpec, start: &Theta, bounds: &Bounds, options: &EstimOptions) -> Result<LocalFit> {
    let rp = Reparam::new(spec, bounds);
    let mut free0 = start.to_free(spec);
    project(&mut free0, bounds);
    let theta0 = Theta::from_free(spec, &free0).or_else(|_| {
        let mut t = start.clone();
        t.transition = crate::markov::TransitionMatrix::from_unnormalized(t.transition.matrix().clone())?;
        Ok::<_, Error>(t)
    })?;
    let ll0 = likelihood::loglik(&theta0, sample, spec).unwrap_or(f64::NEG_INFINITY);
    let u0 = rp.inverse(&theta0.to_free(spec));
    let objective = |u: &[f64]| -> f64 {
        let free = rp.forward(u);
        match Theta::from_free(spec, &free).and_then(|t| likelihood::loglik(&t, sample, spec)) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::NAN,
        }
    };
    let res = minimize(objective, &u0, &BfgsOptions { max_iter: options.maxit.max(50), ..Default::default() });
    let free = rp.forward(&res.x);
    let theta = Theta::from_free(spec, &free)?;
    let loglik = likelihood::loglik(&theta, sample, spec)?;
    let (theta, loglik) = if loglik >= ll0 || !ll0.is_finite() { (theta, loglik) } else { (theta0, ll0) };
    Ok(LocalFit {
        theta,
        loglik,
        iterations: res.iterations,
        converged: res.converged,
        path: vec![ll0, loglik],
        degenerate: false,
        warnings: if res.converged { Vec::new() } else { vec!["MLE optimizer did not converge".into()] },
    })
}
