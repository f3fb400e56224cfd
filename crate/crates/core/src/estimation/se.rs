use nalgebra::DMatrix;

use super::{Bounds, FittedModel};
use crate::likelihood;
use crate::model::{Sample, Theta};

/// Standard errors from the inverse of the negative numerical Hessian of the
/// log-likelihood, in the flat layout.
///
/// Coordinates that are fixed by the bounds, or transition probabilities
/// within `1e-6` of a bound, are left out of the Hessian and reported as
/// `None`. The last row of `P` gets a delta-method standard error from the
/// other entries in its column. Negative variances are reported as `None`.
pub fn standard_errors(fitted: &FittedModel, sample: &Sample, bounds: &Bounds) -> Vec<Option<f64>> {
    let spec = fitted.spec;
    let free_layout = spec.free_layout();
    let flat_layout = spec.flat_layout();
    let theta0 = fitted.theta.to_free(&spec);
    let n = theta0.len();
    let at_edge = |i: usize| {
        let (l, u) = (bounds.lower[i], bounds.upper[i]);
        let edge = if free_layout.transition.contains(&i) { 1e-6 } else { 0.0 };
        l == u || theta0[i] - l <= edge || u - theta0[i] <= edge
    };
    let active: Vec<usize> = (0..n).filter(|&i| !at_edge(i)).collect();

    let f = |v: &[f64]| -> f64 {
        Theta::from_free(&spec, v)
            .and_then(|t| likelihood::loglik(&t, sample, &spec))
            .unwrap_or(f64::NAN)
    };
    let h: Vec<f64> = active.iter().map(|&i| 1e-5 * theta0[i].abs().max(1.0)).collect();
    let m = active.len();
    let mut hess = DMatrix::zeros(m, m);
    let f0 = f(&theta0);
    let eval = |shifts: &[(usize, f64)]| {
        let mut v = theta0.clone();
        for &(a, d) in shifts {
            v[active[a]] += d;
        }
        f(&v)
    };
    for a in 0..m {
        let fp = eval(&[(a, h[a])]);
        let fm = eval(&[(a, -h[a])]);
        hess[(a, a)] = (fp - 2.0 * f0 + fm) / (h[a] * h[a]);
        for b in 0..a {
            let pp = eval(&[(a, h[a]), (b, h[b])]);
            let pm = eval(&[(a, h[a]), (b, -h[b])]);
            let mp = eval(&[(a, -h[a]), (b, h[b])]);
            let mm = eval(&[(a, -h[a]), (b, -h[b])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[a] * h[b]);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }

    let mut out = vec![None; flat_layout.len()];
    if m == 0 || hess.iter().any(|v| !v.is_finite()) {
        return out;
    }
    let Some(cov) = (-hess).try_inverse() else {
        return out;
    };
    let pos = |i: usize| active.iter().position(|&a| a == i);
    let sd = |v: f64| if v.is_finite() && v >= 0.0 { Some(v.sqrt()) } else { None };

    for i in 0..free_layout.transition.start {
        if let Some(a) = pos(i) {
            out[i] = sd(cov[(a, a)]);
        }
    }
    if spec.k > 1 {
        let k = spec.k;
        for from in 0..k {
            let idx: Vec<usize> = (0..k - 1).map(|to| free_layout.transition.start + from * (k - 1) + to).collect();
            for (to, &i) in idx.iter().enumerate() {
                if let Some(a) = pos(i) {
                    out[flat_layout.transition.start + from * k + to] = sd(cov[(a, a)]);
                }
            }
            let pa: Option<Vec<usize>> = idx.iter().map(|&i| pos(i)).collect();
            if let Some(pa) = pa {
                let var: f64 = pa.iter().flat_map(|&a| pa.iter().map(move |&b| (a, b))).map(|(a, b)| cov[(a, b)]).sum();
                out[flat_layout.transition.start + from * k + k - 1] = sd(var);
            }
        }
    }
    out
}
