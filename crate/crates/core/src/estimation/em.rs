//! Expectation-conditional-maximisation for switching models.
//!
//! Each iteration runs the filter and smoother, then maximises the expected
//! complete-data log-likelihood in blocks: the AR and exogenous
//! coefficients given the means and covariances, the means given the rest,
//! the covariances given the rest, and the transition matrix. Every block
//! step weakly increases the expected log-likelihood, so the observed
//! log-likelihood never decreases.

use nalgebra::{DMatrix, DVector};

use super::{EstimOptions, LocalFit};
use crate::error::{Error, Result};
use crate::likelihood::{self, build_composite, CompositeStateSpace, ResidualParts};
use crate::markov::{ergodic_distribution, TransitionMatrix};
use crate::model::{ModelSpec, Sample, Theta};
use crate::optim::bfgs::{minimize, BfgsOptions};

const DEGENERATE_MASS: f64 = 1e-8;
const VARIANCE_FLOOR: f64 = 1e-6;

struct Estep {
    loglik: f64,
    /// `T_eff x n_states` composite smoothed probabilities.
    gamma: Vec<f64>,
    counts: DMatrix<f64>,
}

fn estep(theta: &Theta, sample: &Sample, space: &CompositeStateSpace) -> Result<Estep> {
    let ld = likelihood::log_densities(theta, sample, space)?;
    let filter = likelihood::filter_from_log_densities(space, &ld)?;
    let sm = likelihood::kim_smoother(&filter, space);
    Ok(Estep { loglik: filter.loglik, gamma: sm.composite, counts: sm.transition_counts })
}

struct Digits {
    m: usize,
    width: usize,
    table: Vec<usize>,
}

impl Digits {
    fn new(space: &CompositeStateSpace) -> Self {
        let width = space.p + 1;
        let mut table = Vec::with_capacity(space.size * width);
        for s in 0..space.size {
            for lag in 0..width {
                table.push(space.digit(s, lag));
            }
        }
        Self { m: space.m, width, table }
    }

    #[inline]
    fn get(&self, s: usize, lag: usize) -> usize {
        self.table[s * self.width + lag]
    }
}

fn solve_spd(a: DMatrix<f64>, b: DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(c) = a.clone().cholesky() {
        let x = c.solve(&b);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    a.lu().solve(&b).filter(|x| x.iter().all(|v| v.is_finite()))
}

/// AR and exogenous coefficients given means and covariances (weighted GLS).
fn update_coefficients(theta: &mut Theta, sample: &Sample, spec: &ModelSpec, gamma: &[f64], dg: &Digits) -> bool {
    let (q, p, nz) = (spec.q, spec.p, spec.n_exog);
    let d = q * p + nz;
    if d == 0 {
        return true;
    }
    let groups = if spec.variance_switches() { spec.k } else { 1 };
    let mut a = vec![DMatrix::<f64>::zeros(d, d); groups];
    let mut c = vec![DMatrix::<f64>::zeros(q, d); groups];
    let n = dg.m.pow(dg.width as u32);
    let t_eff = sample.t() - p;
    let mut x = DVector::zeros(d);
    let mut dv = DVector::zeros(q);
    for t in 0..t_eff {
        let tt = t + p;
        for s in 0..n {
            let w = gamma[t * n + s];
            if w == 0.0 {
                continue;
            }
            for lag in 1..=p {
                let mu = &theta.mu[dg.get(s, lag)];
                for i in 0..q {
                    x[(lag - 1) * q + i] = sample.y[(tt - lag, i)] - mu[i];
                }
            }
            if let Some(z) = &sample.exog {
                for r in 0..nz {
                    x[q * p + r] = z[(tt, r)];
                }
            }
            let s0 = dg.get(s, 0);
            for i in 0..q {
                dv[i] = sample.y[(tt, i)] - theta.mu[s0][i];
            }
            let g = if groups > 1 { s0 } else { 0 };
            a[g].ger(w, &x, &x, 1.0);
            c[g].ger(w, &dv, &x, 1.0);
        }
    }
    // B' is q x d with y_t - mu = B' x + e
    let bt = if groups == 1 {
        match solve_spd(a[0].clone(), c[0].transpose()) {
            Some(b) => b.transpose(),
            None => return false,
        }
    } else {
        let mut big = DMatrix::zeros(d * q, d * q);
        let mut rhs = DMatrix::zeros(q, d);
        for g in 0..groups {
            let Some(sinv) = theta.sigma[g].clone().try_inverse() else { return false };
            big += a[g].kronecker(&sinv);
            rhs += &sinv * &c[g];
        }
        let rhs = DMatrix::from_column_slice(d * q, 1, rhs.as_slice());
        match solve_spd(big, rhs) {
            Some(v) => DMatrix::from_column_slice(q, d, v.as_slice()),
            None => return false,
        }
    };
    for lag in 0..p {
        theta.phi[lag] = bt.columns(lag * q, q).into_owned();
    }
    if nz > 0 {
        theta.beta = bt.columns(q * p, nz).transpose();
    }
    true
}

/// Means given coefficients and covariances.
fn update_means(theta: &mut Theta, sample: &Sample, spec: &ModelSpec, space: &CompositeStateSpace, gamma: &[f64], dg: &Digits) -> bool {
    let (q, k, p) = (spec.q, spec.k, spec.p);
    let n = space.size;
    let t_eff = sample.t() - p;
    let parts = ResidualParts::new(theta, sample, space);
    let mut mass = vec![0.0; n];
    let mut cbar = vec![DVector::<f64>::zeros(q); n];
    for t in 0..t_eff {
        let base = &parts.base[t * q..(t + 1) * q];
        for s in 0..n {
            let w = gamma[t * n + s];
            if w == 0.0 {
                continue;
            }
            mass[s] += w;
            for i in 0..q {
                cbar[s][i] += w * base[i];
            }
        }
    }
    let nm = if spec.mean_switches() { k * q } else { q };
    let sinv: Vec<DMatrix<f64>> = match theta.sigma.iter().map(|s| s.clone().try_inverse()).collect::<Option<Vec<_>>>() {
        Some(v) => v,
        None => return false,
    };
    let mut g = DMatrix::zeros(nm, nm);
    let mut h = DVector::zeros(nm);
    let mut dmat = DMatrix::zeros(q, nm);
    for s in 0..n {
        if mass[s] == 0.0 {
            continue;
        }
        dmat.fill(0.0);
        let mut place = |regime: usize, coef: &DMatrix<f64>, sign: f64| {
            let col = if spec.mean_switches() { regime * q } else { 0 };
            let mut block = dmat.columns_mut(col, q);
            block += coef * sign;
        };
        place(dg.get(s, 0), &DMatrix::identity(q, q), 1.0);
        for lag in 1..=p {
            place(dg.get(s, lag), &theta.phi[lag - 1], -1.0);
        }
        let si = &sinv[dg.get(s, 0)];
        let dts = dmat.transpose() * si;
        g += &dts * &dmat * mass[s];
        h += &dts * &cbar[s];
    }
    let Some(m) = solve_spd(g, DMatrix::from_column_slice(nm, 1, h.as_slice())) else { return false };
    for j in 0..k {
        let off = if spec.mean_switches() { j * q } else { 0 };
        theta.mu[j] = DVector::from_fn(q, |i, _| m[off + i]);
    }
    true
}

/// Covariances given means and coefficients; returns whether a ridge was applied.
fn update_covariances(
    theta: &mut Theta,
    sample: &Sample,
    spec: &ModelSpec,
    space: &CompositeStateSpace,
    gamma: &[f64],
    dg: &Digits,
    floor: &[f64],
) -> std::result::Result<bool, ()> {
    let (q, k) = (spec.q, spec.k);
    let n = space.size;
    let t_eff = sample.t() - spec.p;
    let parts = ResidualParts::new(theta, sample, space);
    let groups = if spec.variance_switches() { k } else { 1 };
    let mut acc = vec![DMatrix::<f64>::zeros(q, q); groups];
    let mut mass = vec![0.0; groups];
    let mut e = vec![0.0; q];
    for t in 0..t_eff {
        for s in 0..n {
            let w = gamma[t * n + s];
            if w == 0.0 {
                continue;
            }
            parts.residual(t, s, &mut e);
            let g = if groups > 1 { dg.get(s, 0) } else { 0 };
            mass[g] += w;
            for r in 0..q {
                for c in 0..=r {
                    acc[g][(r, c)] += w * e[r] * e[c];
                }
            }
        }
    }
    let mut ridged = false;
    for g in 0..groups {
        if mass[g] < DEGENERATE_MASS {
            return Err(());
        }
        let mut s = acc[g].clone() / mass[g];
        s.fill_upper_triangle_with_lower_triangle();
        for i in 0..q {
            if s[(i, i)] < floor[i] {
                s[(i, i)] = floor[i];
                ridged = true;
            }
        }
        if q > 1 && s.clone().cholesky().is_none() {
            let min_eig = s.clone().symmetric_eigenvalues().min();
            let ridge = floor.iter().cloned().fold(0.0, f64::max) - min_eig;
            for i in 0..q {
                s[(i, i)] += ridge;
            }
            ridged = true;
        }
        acc[g] = s;
    }
    for j in 0..k {
        theta.sigma[j] = acc[if groups > 1 { j } else { 0 }].clone();
    }
    Ok(ridged)
}

/// Expected-complete-data objective of the transition matrix.
fn transition_objective(p: &TransitionMatrix, counts: &DMatrix<f64>, oldest: &[f64]) -> f64 {
    let Ok(pi) = ergodic_distribution(p) else { return f64::NEG_INFINITY };
    let m = p.m();
    let mut v = 0.0;
    for from in 0..m {
        for to in 0..m {
            let n = counts[(to, from)];
            if n > 0.0 {
                v += n * p.prob(to, from).ln();
            }
        }
    }
    for j in 0..m {
        if oldest[j] > 0.0 {
            v += oldest[j] * pi[j].ln();
        }
    }
    if v.is_nan() { f64::NEG_INFINITY } else { v }
}

fn update_transition(theta: &mut Theta, est: &Estep, space: &CompositeStateSpace, dg: &Digits) {
    let m = space.m;
    let n = space.size;
    let mut counts = est.counts.clone();
    let mut oldest = vec![0.0; m];
    for s in 0..n {
        let w = est.gamma[s];
        if w == 0.0 {
            continue;
        }
        oldest[dg.get(s, space.p)] += w;
        for lag in 1..=space.p {
            counts[(dg.get(s, lag - 1), dg.get(s, lag))] += w;
        }
    }
    let old = theta.transition.matrix().clone();
    let mut cand = old.clone();
    for from in 0..m {
        let total: f64 = counts.column(from).sum();
        if total > 0.0 {
            for to in 0..m {
                cand[(to, from)] = counts[(to, from)] / total;
            }
        }
    }
    let mut base = transition_objective(&theta.transition, &counts, &oldest);
    let mut step = 1.0;
    for _ in 0..30 {
        let mix = &old + (&cand - &old) * step;
        if let Ok(p) = TransitionMatrix::from_unnormalized(mix) {
            let v = transition_objective(&p, &counts, &oldest);
            if v >= base {
                theta.transition = p;
                base = v;
                break;
            }
        }
        step *= 0.5;
    }
    if m > 1 && oldest.iter().any(|&w| w > 0.0) {
        polish_transition(theta, &counts, &oldest, base);
    }
}

fn logits_to_transition(x: &[f64], m: usize) -> Option<TransitionMatrix> {
    let mut mat = DMatrix::from_element(m, m, 1.0);
    let mut idx = 0;
    for from in 0..m {
        for to in (0..m).filter(|&to| to != from) {
            mat[(to, from)] = x[idx].exp();
            idx += 1;
        }
    }
    TransitionMatrix::from_unnormalized(mat).ok()
}

/// Maximises the transition objective including the initial-state term.
fn polish_transition(theta: &mut Theta, counts: &DMatrix<f64>, oldest: &[f64], base: f64) {
    let m = theta.transition.m();
    let x0: Vec<f64> = (0..m)
        .flat_map(|from| {
            let p = &theta.transition;
            (0..m).filter(move |&to| to != from).map(move |to| (p.prob(to, from).max(1e-300) / p.prob(from, from).max(1e-300)).ln().clamp(-30.0, 30.0))
        })
        .collect();
    let objective = |x: &[f64]| match logits_to_transition(x, m) {
        Some(p) => -transition_objective(&p, counts, oldest),
        None => f64::INFINITY,
    };
    let res = minimize(objective, &x0, &BfgsOptions { max_iter: 100, f_tol: 1e-14, g_tol: 1e-9 });
    if -res.value > base {
        if let Some(p) = logits_to_transition(&res.x, m) {
            theta.transition = p;
        }
    }
}

/// Runs EM from `init` until the log-likelihood gain falls below `tol`.
pub fn em_from(sample: &Sample, spec: &ModelSpec, init: &Theta, options: &EstimOptions) -> Result<LocalFit> {
    init.check(spec)?;
    let mut theta = init.clone();
    let floor: Vec<f64> = (0..spec.q)
        .map(|i| {
            let col = sample.y.column(i);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            VARIANCE_FLOOR * var.max(1e-300)
        })
        .collect();
    let mut path = Vec::new();
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let space = build_composite(&theta.transition, spec.p);
        let dg = Digits::new(&space);
        let est = estep(&theta, sample, &space)?;
        path.push(est.loglik);
        if let [.., prev, last] = path[..] {
            if last - prev < options.tol {
                converged = true;
                break;
            }
        }
        if iterations >= options.maxit {
            break;
        }
        let t_eff = sample.t() - spec.p;
        for j in 0..spec.k {
            let mass: f64 = (0..t_eff)
                .map(|t| (0..space.size).filter(|&s| s % space.m == j).map(|s| est.gamma[t * space.size + s]).sum::<f64>())
                .sum();
            if mass < DEGENERATE_MASS {
                return Ok(LocalFit { theta, loglik: est.loglik, iterations, converged: false, path, degenerate: true, warnings });
            }
        }
        let mut next = theta.clone();
        if !update_coefficients(&mut next, sample, spec, &est.gamma, &dg) {
            warnings.push("autoregressive update was singular; coefficients kept".into());
        }
        if !update_means(&mut next, sample, spec, &space, &est.gamma, &dg) {
            return Ok(LocalFit { theta, loglik: est.loglik, iterations, converged: false, path, degenerate: true, warnings });
        }
        match update_covariances(&mut next, sample, spec, &space, &est.gamma, &dg, &floor) {
            Ok(true) => warnings.push("covariance ridge-repaired".into()),
            Ok(false) => {}
            Err(()) => {
                return Ok(LocalFit { theta, loglik: est.loglik, iterations, converged: false, path, degenerate: true, warnings });
            }
        }
        update_transition(&mut next, &est, &space, &dg);
        if next.check(spec).is_err() {
            return Err(Error::Estimation("EM produced an invalid parameter vector".into()));
        }
        theta = next;
        iterations += 1;
    }
    warnings.dedup();
    let loglik = *path.last().unwrap();
    Ok(LocalFit { theta, loglik, iterations, converged, path, degenerate: false, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate, DgpSpec};
    use crate::estimation::{fit, fit_linear, initial_values};
    use crate::model::ModelFamily;

    fn msar_truth() -> Theta {
        Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], TransitionMatrix::two_regime(0.95, 0.90).unwrap()).unwrap()
    }

    fn monotone(path: &[f64]) -> bool {
        path.windows(2).all(|w| w[1] - w[0] >= -1e-10)
    }

    #[test]
    fn monotone_on_msar() {
        let y = simulate(&DgpSpec::new(ModelFamily::Msar, 300, msar_truth(), 3)).unwrap().y;
        let s = Sample::new(y, None).unwrap();
        let spec = ModelSpec::switching(1, 1, 2, 0, true, true);
        let lin = fit_linear(&s, 1).unwrap();
        for seed in 0..3 {
            let init = initial_values(&spec, &lin, seed).unwrap();
            let r = em_from(&s, &spec, &init, &EstimOptions::default()).unwrap();
            assert!(monotone(&r.path), "{:?}", r.path);
        }
    }

    #[test]
    fn monotone_with_fixed_variance_and_lags() {
        let y = simulate(&DgpSpec::new(ModelFamily::Msar, 200, msar_truth(), 8)).unwrap().y;
        let s = Sample::new(y, None).unwrap();
        for (msmu, msvar, p) in [(true, false, 2), (false, true, 1), (true, true, 3)] {
            let spec = ModelSpec::switching(1, p, 2, 0, msmu, msvar);
            let lin = fit_linear(&s, p).unwrap();
            let init = initial_values(&spec, &lin, 1).unwrap();
            let r = em_from(&s, &spec, &init, &EstimOptions { maxit: 100, ..Default::default() }).unwrap();
            assert!(monotone(&r.path), "msmu {msmu} msvar {msvar} p {p}");
        }
    }

    #[test]
    fn monotone_on_msvar_with_exog() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let theta = Theta {
            mu: vec![DVector::from_row_slice(&[0.0, 1.0]), DVector::from_row_slice(&[3.0, -1.0])],
            phi: vec![DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.2])],
            beta: DMatrix::from_row_slice(1, 2, &[0.5, -0.5]),
            sigma: vec![sigma.clone(), sigma * 2.0],
            transition: TransitionMatrix::two_regime(0.9, 0.85).unwrap(),
        };
        let z = DMatrix::from_fn(250, 1, |t, _| (t as f64 * 0.3).sin());
        let out = simulate(&DgpSpec::new(ModelFamily::Msvarx, 250, theta, 2).with_exog(z.clone())).unwrap();
        let s = Sample::new(out.y, Some(z)).unwrap();
        let spec = ModelSpec::switching(2, 1, 2, 1, true, true);
        let lin = fit_linear(&s, 1).unwrap();
        let init = initial_values(&spec, &lin, 4).unwrap();
        let r = em_from(&s, &spec, &init, &EstimOptions { maxit: 150, ..Default::default() }).unwrap();
        assert!(monotone(&r.path));
        assert!(r.loglik > lin.loglik);
    }

    #[test]
    fn switching_fit_beats_linear_on_linear_data() {
        let th = Theta::univariate(&[1.0], &[0.5], &[1.0], TransitionMatrix::single()).unwrap();
        let y = simulate(&DgpSpec::new(ModelFamily::Ar, 200, th, 5)).unwrap().y;
        let s = Sample::new(y, None).unwrap();
        let lin = fit_linear(&s, 1).unwrap();
        let f = fit(&s, &ModelSpec::switching(1, 1, 2, 0, true, true), &EstimOptions { use_diff_init: 3, get_se: false, ..Default::default() }).unwrap();
        assert!(f.loglik >= lin.loglik - 1e-6);
    }

    #[test]
    fn padded_linear_start_nests() {
        let y = simulate(&DgpSpec::new(ModelFamily::Msar, 200, msar_truth(), 9)).unwrap().y;
        let s = Sample::new(y, None).unwrap();
        let lin = fit_linear(&s, 1).unwrap();
        let spec = ModelSpec::switching(1, 1, 2, 0, true, true);
        let lt = &lin.theta;
        let init = Theta {
            mu: vec![lt.mu[0].clone(), lt.mu[0].clone()],
            phi: lt.phi.clone(),
            beta: lt.beta.clone(),
            sigma: vec![lt.sigma[0].clone(), lt.sigma[0].clone()],
            transition: TransitionMatrix::two_regime(0.9, 0.9).unwrap(),
        };
        let r = em_from(&s, &spec, &init, &EstimOptions::default()).unwrap();
        assert!((r.path[0] - lin.loglik).abs() < 1e-8);
        assert!(r.loglik >= lin.loglik - 1e-6);
    }
}
