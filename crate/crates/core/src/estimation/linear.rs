use nalgebra::{DMatrix, DVector};

use super::{information_criteria, FittedModel};
use crate::error::{Error, Result};
use crate::likelihood::linear_loglik;
use crate::model::{vech_pairs, ModelSpec, Sample, Theta};

/// Regressor matrix `[1, y_{t-1}', ..., y_{t-p}', z_t']` for `t = p..T-1`.
pub(crate) fn design(sample: &Sample, p: usize) -> DMatrix<f64> {
    let q = sample.q();
    let nz = sample.n_exog();
    let t_eff = sample.t() - p;
    let mut x = DMatrix::zeros(t_eff, 1 + q * p + nz);
    for t in 0..t_eff {
        let tt = t + p;
        x[(t, 0)] = 1.0;
        for lag in 1..=p {
            for i in 0..q {
                x[(t, 1 + (lag - 1) * q + i)] = sample.y[(tt - lag, i)];
            }
        }
        if let Some(z) = &sample.exog {
            for r in 0..nz {
                x[(t, 1 + q * p + r)] = z[(tt, r)];
            }
        }
    }
    x
}

/// Maps stacked OLS coefficients `B` (`d x q`) to the mean-adjusted parameters.
fn theta_from_coefs(b: &DMatrix<f64>, q: usize, p: usize, nz: usize, sigma: DMatrix<f64>) -> Result<Theta> {
    let c = b.row(0).transpose();
    let phi: Vec<DMatrix<f64>> = (0..p).map(|l| b.rows(1 + l * q, q).transpose()).collect();
    let beta = b.rows(1 + q * p, nz).into_owned();
    let phi_sum = phi.iter().fold(DMatrix::zeros(q, q), |a, f| a + f);
    let mu = (DMatrix::identity(q, q) - phi_sum)
        .lu()
        .solve(&c)
        .ok_or_else(|| Error::Estimation("autoregressive polynomial has a unit root; the mean is undefined".into()))?;
    Ok(Theta::linear(mu, phi, beta, sigma))
}

/// Ordinary least squares fit of a one-regime (V)AR(X) model.
///
/// The residual covariance uses the maximum-likelihood divisor `T - p`;
/// standard errors use the classical OLS covariance with divisor `T - p - d`.
pub fn fit_linear(sample: &Sample, p: usize) -> Result<FittedModel> {
    let q = sample.q();
    let nz = sample.n_exog();
    let spec = ModelSpec::linear(q, p, nz);
    if sample.t() <= p {
        return Err(Error::InvalidInput(format!("need more than {p} observations")));
    }
    let x = design(sample, p);
    let t_eff = x.nrows();
    let d = x.ncols();
    if t_eff < d {
        return Err(Error::InvalidInput(format!("{t_eff} usable observations for {d} regressors")));
    }
    let y = sample.y.rows(p, t_eff).into_owned();
    let xtx = x.transpose() * &x;
    let xtx_inv = xtx
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Estimation("regressor matrix is rank deficient".into()))?;
    let scale = xtx.diagonal().amax().max(1.0);
    if xtx.clone().symmetric_eigenvalues().min() <= 1e-12 * scale {
        return Err(Error::Estimation("regressor matrix is rank deficient".into()));
    }
    let b = &xtx_inv * x.transpose() * &y;
    let resid = &y - &x * &b;
    let sigma = resid.transpose() * &resid / t_eff as f64;
    let theta = theta_from_coefs(&b, q, p, nz, sigma.clone())?;

    let degenerate = (0..q).any(|i| sigma[(i, i)] <= 1e-14 * (1.0 + y.column(i).amax().powi(2)));
    let mut warnings = Vec::new();
    let loglik = if degenerate {
        warnings.push("degenerate fit: zero residual variance".to_string());
        f64::INFINITY
    } else {
        linear_loglik(&theta, sample, &spec)?
    };
    let (aic, bic) = information_criteria(loglik, spec.n_params(), t_eff);

    let se = if degenerate || t_eff <= d {
        None
    } else {
        Some(ols_standard_errors(&b, &xtx_inv, &resid, &theta, q, p, nz, t_eff))
    };

    Ok(FittedModel {
        spec,
        theta,
        loglik,
        aic,
        bic,
        se,
        smoothed: DMatrix::from_element(t_eff, 1, 1.0),
        residuals: resid,
        trace: Vec::new(),
        converged: true,
        t_eff,
        warnings,
        degenerate,
    })
}

#[allow(clippy::too_many_arguments)]
fn ols_standard_errors(
    b: &DMatrix<f64>,
    xtx_inv: &DMatrix<f64>,
    resid: &DMatrix<f64>,
    theta: &Theta,
    q: usize,
    p: usize,
    nz: usize,
    t_eff: usize,
) -> Vec<Option<f64>> {
    let d = b.nrows();
    let s = resid.transpose() * resid / (t_eff - d) as f64;
    // Cov(vec B) = S kron (X'X)^{-1}, vec stacking column by column (equation by equation)
    let cov_b = s.kronecker(xtx_inv);
    let flat_b = |bm: &DMatrix<f64>| -> DVector<f64> { DVector::from_column_slice(bm.as_slice()) };
    let b0 = flat_b(b);

    // mu = (I - sum Phi)^{-1} c, differentiated numerically in the coefficients
    let mu_of = |v: &DVector<f64>| -> Option<DVector<f64>> {
        let bm = DMatrix::from_column_slice(d, q, v.as_slice());
        theta_from_coefs(&bm, q, p, nz, DMatrix::identity(q, q)).ok().map(|t| t.mu[0].clone())
    };
    let mut jac = DMatrix::zeros(q, d * q);
    for j in 0..d * q {
        let h = 1e-6 * b0[j].abs().max(1.0);
        let mut plus = b0.clone();
        plus[j] += h;
        let mut minus = b0.clone();
        minus[j] -= h;
        if let (Some(a), Some(c)) = (mu_of(&plus), mu_of(&minus)) {
            jac.column_mut(j).copy_from(&((a - c) / (2.0 * h)));
        }
    }
    let cov_mu = &jac * &cov_b * jac.transpose();

    let sd = |v: f64| if v >= 0.0 { Some(v.sqrt()) } else { None };
    let idx = |row: usize, eq: usize| eq * d + row;
    let mut out = Vec::new();
    for i in 0..q {
        out.push(sd(cov_mu[(i, i)]));
    }
    for l in 0..p {
        for r in 0..q {
            for c in 0..q {
                // Phi_l[(r, c)] = B[(1 + l q + c, r)]
                let k = idx(1 + l * q + c, r);
                out.push(sd(cov_b[(k, k)]));
            }
        }
    }
    for r in 0..nz {
        for c in 0..q {
            let k = idx(1 + q * p + r, c);
            out.push(sd(cov_b[(k, k)]));
        }
    }
    let sig = &theta.sigma[0];
    for (a, bb) in vech_pairs(q) {
        out.push(sd((sig[(a, a)] * sig[(bb, bb)] + sig[(a, bb)].powi(2)) / t_eff as f64));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate, DgpSpec};
    use crate::markov::TransitionMatrix;
    use crate::model::ModelFamily;

    #[test]
    fn constant_series_is_degenerate() {
        let f = fit_linear(&Sample::univariate(&[3.0; 20]), 0).unwrap();
        assert!(f.degenerate);
        assert!((f.theta.mu[0][0] - 3.0).abs() < 1e-12);
        assert!(f.theta.sigma[0][(0, 0)].abs() < 1e-20);
    }

    #[test]
    fn ar1_recovers_truth() {
        let truth = Theta::univariate(&[5.0], &[0.75], &[1.0], TransitionMatrix::single()).unwrap();
        let mut inside = 0;
        for seed in 0..20 {
            let y = simulate(&DgpSpec::new(ModelFamily::Ar, 500, truth.clone(), seed)).unwrap().y;
            let f = fit_linear(&Sample::new(y, None).unwrap(), 1).unwrap();
            let est = f.coefficients();
            let se = f.se.as_ref().unwrap();
            let ok = [5.0, 0.75, 1.0].iter().enumerate().all(|(i, v)| (est[i] - v).abs() < 3.0 * se[i].unwrap());
            inside += ok as usize;
        }
        assert!(inside >= 18, "{inside} of 20 within 3 s.e.");
    }

    #[test]
    fn exact_ar_recursion_is_recovered() {
        // noiseless data cannot be fit (zero variance) so add a tiny alternating term
        let mut y = vec![1.0];
        for t in 1..200 {
            let e = if t % 3 == 0 { 0.5 } else { -0.25 };
            y.push(2.0 + 0.5 * (y[t - 1] - 2.0) + e);
        }
        let f = fit_linear(&Sample::univariate(&y), 1).unwrap();
        assert!(f.theta.sigma[0][(0, 0)] > 0.0);
        assert!((f.residuals.sum()).abs() < 1e-9);
    }

    #[test]
    fn var_with_exog_dimensions() {
        let t = 120;
        let y = DMatrix::from_fn(t, 2, |r, c| ((r * 7 + c * 3) % 11) as f64 + (r as f64 * 0.1).sin());
        let z = DMatrix::from_fn(t, 1, |r, _| (r as f64 * 0.37).cos());
        let f = fit_linear(&Sample::new(y, Some(z)).unwrap(), 2).unwrap();
        assert_eq!(f.coefficients().len(), 2 + 8 + 2 + 3);
        assert_eq!(f.se.unwrap().len(), 15);
        assert_eq!(f.spec.family(), ModelFamily::Varx);
    }

    #[test]
    fn rank_deficient_rejected() {
        assert!(fit_linear(&Sample::univariate(&[1.0; 10]), 1).is_err());
    }
}
