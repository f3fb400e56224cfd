use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Incumbent, SearchProblem, SearchResult};
use crate::error::Result;
use crate::rng;

pub const INITIAL_TEMPERATURE: f64 = 5000.0;
pub const COOLING_RATE: f64 = 0.95;

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let w = hi - lo;
    for _ in 0..8 {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return x;
        }
    }
    lo + (x - lo).rem_euclid(w)
}

/// Simulated annealing with Gaussian proposals whose scale shrinks with
/// the temperature, and geometric cooling.
pub fn simulated_annealing(problem: &SearchProblem<'_>) -> Result<SearchResult> {
    problem.validate()?;
    let dim = problem.lower.len();
    let mut r = rng::rng_from_seed(problem.seed);
    let mut inc = Incumbent::new(dim);
    let width: Vec<f64> = (0..dim).map(|i| problem.upper[i] - problem.lower[i]).collect();

    let mut x: Vec<f64> = match &problem.start {
        Some(s) => {
            let mut s = s.clone();
            problem.clamp(&mut s);
            s
        }
        None => (0..dim).map(|i| problem.lower[i] + r.random::<f64>() * width[i]).collect(),
    };
    let mut fx = (problem.objective)(&x);
    inc.offer(&x, fx);
    if problem.reached_threshold(fx) {
        return Ok(inc.finish(problem, true));
    }
    if fx.is_nan() {
        fx = f64::NEG_INFINITY;
    }

    let mut temp = INITIAL_TEMPERATURE;
    let mut cand = x.clone();
    while inc.trace.len() < problem.budget {
        let scale = 0.3 * (temp / INITIAL_TEMPERATURE).sqrt();
        for d in 0..dim {
            let z: f64 = StandardNormal.sample(&mut r);
            let step = width[d] * scale.max(1e-3) * z;
            cand[d] = reflect(x[d] + step, problem.lower[d], problem.upper[d]);
        }
        let fc = (problem.objective)(&cand);
        inc.offer(&cand, fc);
        if problem.reached_threshold(fc) {
            return Ok(inc.finish(problem, true));
        }
        let u: f64 = r.random();
        if fc >= fx || (!fc.is_nan() && u < ((fc - fx) / temp).exp()) {
            x.clone_from(&cand);
            fx = fc;
        }
        temp *= COOLING_RATE;
    }
    Ok(inc.finish(problem, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::test_support::{neg_norm, square_problem};

    #[test]
    fn finds_origin() {
        let r = simulated_annealing(&square_problem(&neg_norm, 2000, None, 1)).unwrap();
        assert!(r.value > -1e-3, "{}", r.value);
    }

    #[test]
    fn threshold_exits_immediately() {
        let r = simulated_annealing(&square_problem(&neg_norm, 2000, Some(-10.0), 1)).unwrap();
        assert_eq!(r.evals, 1);
    }

    #[test]
    fn reproducible_bounded_monotone() {
        let a = simulated_annealing(&square_problem(&neg_norm, 500, None, 4)).unwrap();
        let b = simulated_annealing(&square_problem(&neg_norm, 500, None, 4)).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(a.x.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn reflection_stays_inside() {
        for x in [-5.0, -1.5, 0.2, 1.7, 9.3] {
            let v = reflect(x, -1.0, 1.0);
            assert!((-1.0..=1.0).contains(&v));
        }
    }
}
