//! Quasi-Newton minimisation with central-difference gradients.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the relative decrease over one iteration falls below this.
    pub f_tol: f64,
    pub g_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 300, f_tol: 1e-11, g_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evals: usize,
    pub converged: bool,
}

fn gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], evals: &mut usize) -> DVector<f64> {
    let mut xp = x.to_vec();
    DVector::from_fn(x.len(), |i, _| {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        *evals += 2;
        let g = (fp - fm) / (2.0 * h);
        if g.is_finite() { g } else { 0.0 }
    })
}

/// Minimises `f`; non-finite values are treated as infeasible.
pub fn minimize(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut evals = 1;
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x0);
    if n == 0 || !fx.is_finite() {
        return BfgsResult { x: x0.to_vec(), value: fx, iterations: 0, evals, converged: n == 0 };
    }
    let mut g = gradient(&mut f, x.as_slice(), &mut evals);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        if g.amax() < opts.g_tol {
            converged = true;
            break;
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = dir.dot(&g);
        if slope >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = dir.dot(&g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn = &x + &dir * step;
            let fnew = f(xn.as_slice());
            evals += 1;
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if h_inv != DMatrix::identity(n, n) {
                h_inv = DMatrix::identity(n, n);
                continue;
            }
            converged = true;
            break;
        };
        let gn = gradient(&mut f, xn.as_slice(), &mut evals);
        let s = &xn - &x;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        let decrease = fx - fnew;
        x = xn;
        g = gn;
        let done = decrease <= opts.f_tol * (fx.abs() + opts.f_tol);
        fx = fnew;
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy = &h_inv * &yv;
            let yhy = yv.dot(&hy);
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        if done {
            converged = true;
            break;
        }
    }
    BfgsResult { x: x.as_slice().to_vec(), value: fx, iterations, evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &BfgsOptions { max_iter: 2000, ..Default::default() });
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn quadratic_exact() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + x[0] * x[1];
        let r = minimize(f, &[0.0, 0.0], &BfgsOptions::default());
        // gradient: 2(x0-3) + x1 = 0, 4(x1+1) + x0 = 0
        assert!((r.x[0] - 4.0).abs() < 1e-5 && (r.x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::NAN } else { x[0] - x[0].ln() };
        let r = minimize(f, &[5.0], &BfgsOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-4);
    }
}
