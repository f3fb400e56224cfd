use rand::seq::index::sample;
use rand::Rng as _;

use super::{Incumbent, SearchProblem, SearchResult};
use crate::error::Result;
use crate::rng;

const INERTIA: f64 = 0.721_347_5;
const ACCEL: f64 = 1.193_147;
const INFORMANTS: usize = 3;

pub fn swarm_size(dim: usize) -> usize {
    let d = dim.max(1) as f64;
    13usize.max(4 + (3.0 * d.ln()).floor() as usize)
}

/// Particle swarm with random informant topology, re-drawn after any
/// iteration that fails to improve the global best.
pub fn particle_swarm(problem: &SearchProblem<'_>) -> Result<SearchResult> {
    problem.validate()?;
    let dim = problem.lower.len();
    let mut r = rng::rng_from_seed(problem.seed);
    let mut inc = Incumbent::new(dim);
    let n = swarm_size(dim);
    let width: Vec<f64> = (0..dim).map(|i| problem.upper[i] - problem.lower[i]).collect();

    let mut pos: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|i| problem.lower[i] + r.random::<f64>() * width[i]).collect())
        .collect();
    if let Some(s) = &problem.start {
        pos[0] = s.clone();
        problem.clamp(&mut pos[0]);
    }
    let mut vel: Vec<Vec<f64>> = pos
        .iter()
        .map(|x| (0..dim).map(|i| (problem.lower[i] + r.random::<f64>() * width[i] - x[i]) / 2.0).collect())
        .collect();
    let mut best_pos = pos.clone();
    let mut best_val = vec![f64::NEG_INFINITY; n];

    for i in 0..n {
        if inc.trace.len() >= problem.budget {
            return Ok(inc.finish(problem, false));
        }
        let v = (problem.objective)(&pos[i]);
        best_val[i] = if v.is_nan() { f64::NEG_INFINITY } else { v };
        inc.offer(&pos[i], v);
        if problem.reached_threshold(v) {
            return Ok(inc.finish(problem, true));
        }
    }

    let draw_links = |r: &mut rng::Rng| -> Vec<Vec<usize>> {
        let mut links: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for i in 0..n {
            for j in sample(r, n, INFORMANTS.min(n)) {
                links[j].push(i);
            }
        }
        links
    };
    let mut links = draw_links(&mut r);

    while inc.trace.len() < problem.budget {
        let before = inc.value;
        for i in 0..n {
            if inc.trace.len() >= problem.budget {
                break;
            }
            let g = *links[i]
                .iter()
                .max_by(|&&a, &&b| best_val[a].total_cmp(&best_val[b]).then(b.cmp(&a)))
                .unwrap();
            for d in 0..dim {
                let c1 = ACCEL * r.random::<f64>();
                let c2 = ACCEL * r.random::<f64>();
                vel[i][d] = INERTIA * vel[i][d] + c1 * (best_pos[i][d] - pos[i][d]) + c2 * (best_pos[g][d] - pos[i][d]);
                let x = pos[i][d] + vel[i][d];
                if x < problem.lower[d] {
                    pos[i][d] = problem.lower[d];
                    vel[i][d] = 0.0;
                } else if x > problem.upper[d] {
                    pos[i][d] = problem.upper[d];
                    vel[i][d] = 0.0;
                } else {
                    pos[i][d] = x;
                }
            }
            let v = (problem.objective)(&pos[i]);
            inc.offer(&pos[i], v);
            if v > best_val[i] {
                best_val[i] = v;
                best_pos[i].clone_from(&pos[i]);
            }
            if problem.reached_threshold(v) {
                return Ok(inc.finish(problem, true));
            }
        }
        if inc.value <= before {
            links = draw_links(&mut r);
        }
    }
    Ok(inc.finish(problem, false))
}
