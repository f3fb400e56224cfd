use nalgebra::DMatrix;
use rand::Rng as _;

use super::FittedModel;
use crate::error::Result;
use crate::markov::TransitionMatrix;
use crate::model::{ModelSpec, Theta};
use crate::rng;

/// Random start around a linear fit: regime means spread over
/// `+-(0.5..2)` residual standard deviations, covariances scaled by
/// `U(0.5, 2)`, transition diagonals drawn from `U(0.7, 0.99)`.
pub fn initial_values(spec: &ModelSpec, linear: &FittedModel, seed: u64) -> Result<Theta> {
    let mut r = rng::rng_from_seed(seed);
    let k = spec.k;
    let q = spec.q;
    let lin = &linear.theta;
    let sd: Vec<f64> = (0..q).map(|i| lin.sigma[0][(i, i)].max(1e-12).sqrt()).collect();

    let spread = r.random_range(0.5..2.0);
    let mu = (0..k)
        .map(|j| {
            let pos = if k == 1 { 0.0 } else { -1.0 + 2.0 * j as f64 / (k - 1) as f64 };
            let mut m = lin.mu[0].clone();
            if spec.mean_switches() {
                for i in 0..q {
                    m[i] += (pos * spread + 0.1 * (r.random::<f64>() - 0.5)) * sd[i];
                }
            }
            m
        })
        .collect();

    let sigma = if spec.variance_switches() {
        (0..k).map(|_| &lin.sigma[0] * r.random_range(0.5..2.0)).collect()
    } else {
        vec![lin.sigma[0].clone(); k]
    };

    let mut p = DMatrix::zeros(k, k);
    for from in 0..k {
        let stay = r.random_range(0.7..0.99);
        let w: Vec<f64> = (0..k).map(|to| if to == from { 0.0 } else { r.random_range(0.1..1.0) }).collect();
        let total: f64 = w.iter().sum();
        for to in 0..k {
            p[(to, from)] = if to == from { stay } else { (1.0 - stay) * w[to] / total };
        }
    }
    Ok(Theta {
        mu,
        phi: lin.phi.clone(),
        beta: lin.beta.clone(),
        sigma,
        transition: TransitionMatrix::from_unnormalized(p)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::fit_linear;
    use crate::model::Sample;

    fn setup() -> (ModelSpec, Sample, FittedModel) {
        let y: Vec<f64> = (0..100).map(|t| ((t * 37) % 17) as f64 * 0.3 + (t as f64 * 0.2).sin()).collect();
        let s = Sample::univariate(&y);
        let lin = fit_linear(&s, 1).unwrap();
        (ModelSpec::switching(1, 1, 3, 0, true, true), s, lin)
    }

    #[test]
    fn valid_distinct_reproducible() {
        let (spec, _, lin) = setup();
        let a = initial_values(&spec, &lin, 5).unwrap();
        let b = initial_values(&spec, &lin, 5).unwrap();
        assert_eq!(a, b);
        for c in 0..3 {
            assert!((a.transition.matrix().column(c).sum() - 1.0).abs() < 1e-12);
            assert!((0.7..0.99).contains(&a.transition.prob(c, c)));
        }
        assert!(a.mu[0][0] < a.mu[1][0] && a.mu[1][0] < a.mu[2][0]);
        assert_ne!(a, initial_values(&spec, &lin, 6).unwrap());
    }
}
