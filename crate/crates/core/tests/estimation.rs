use nalgebra::{DMatrix, DVector};

use msregime::data::{dataset, DatasetName};
use msregime::dgp::{simulate, DgpSpec};
use msregime::estimation::{fit, EstimOptions};
use msregime::likelihood::loglik;
use msregime::lrt::lr_statistic;
use msregime::{ModelFamily, ModelSpec, Sample, Theta, TransitionMatrix};

fn ar1(seed: u64, t: usize) -> Sample {
    let th = Theta::univariate(&[5.0], &[0.75], &[1.0], TransitionMatrix::single()).unwrap();
    Sample::new(simulate(&DgpSpec::new(ModelFamily::Ar, t, th, seed)).unwrap().y, None).unwrap()
}

fn msar(seed: u64) -> Sample {
    let th = Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], TransitionMatrix::two_regime(0.95, 0.90).unwrap()).unwrap();
    Sample::new(simulate(&DgpSpec::new(ModelFamily::Msar, 500, th, seed)).unwrap().y, None).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn linear_ar_standard_errors_match_ols() {
    let s = ar1(11, 400);
    let f = fit(&s, &ModelSpec::linear(1, 1, 0), &EstimOptions::default()).unwrap();
    let se: Vec<f64> = f.se.clone().unwrap().into_iter().map(Option::unwrap).collect();

    let y: Vec<f64> = s.y.column(0).iter().copied().collect();
    let n = y.len() - 1;
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { y[i] });
    let yy = DVector::from_fn(n, |i, _| y[i + 1]);
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let b = &xtx_inv * x.transpose() * &yy;
    let rss = (&yy - &x * &b).norm_squared();
    let s2 = rss / n as f64;
    let cov = &xtx_inv * s2;
    let (c, phi) = (b[0], b[1]);
    let grad = [1.0 / (1.0 - phi), c / (1.0 - phi).powi(2)];
    let var_mu = grad[0] * grad[0] * cov[(0, 0)] + 2.0 * grad[0] * grad[1] * cov[(0, 1)] + grad[1] * grad[1] * cov[(1, 1)];

    assert!(rel(f.coefficients()[1], phi) < 1e-8);
    assert!(rel(se[1], cov[(1, 1)].sqrt()) < 0.02, "phi se {} vs {}", se[1], cov[(1, 1)].sqrt());
    assert!(rel(se[0], var_mu.sqrt()) < 0.02, "mu se {} vs {}", se[0], var_mu.sqrt());
    assert!(rel(se[2], s2 * (2.0 / n as f64).sqrt()) < 0.02);
}

#[test]
fn mean_standard_error_scales_with_data() {
    let s = ar1(12, 300);
    let big = Sample::new(&s.y * 10.0, None).unwrap();
    let spec = ModelSpec::linear(1, 1, 0);
    let a = fit(&s, &spec, &EstimOptions::default()).unwrap().se.unwrap()[0].unwrap();
    let b = fit(&big, &spec, &EstimOptions::default()).unwrap().se.unwrap()[0].unwrap();
    assert!(rel(b, 10.0 * a) < 1e-3, "{b} vs {}", 10.0 * a);
}

#[test]
fn msar_estimates_cover_truth() {
    let spec = ModelSpec::switching(1, 1, 2, 0, true, true);
    let truth = Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], TransitionMatrix::two_regime(0.95, 0.90).unwrap())
        .unwrap()
        .to_flat(&spec);
    let mut covered = 0;
    for seed in 0..20 {
        let f = fit(&msar(300 + seed), &spec, &EstimOptions { use_diff_init: 3, seed, ..Default::default() }).unwrap();
        let se = f.se.clone().unwrap();
        assert!(se.iter().all(|v| v.is_some_and(|v| v.is_finite() && v > 0.0)), "Hessian not positive definite at seed {seed}");
        let est = f.coefficients();
        if (0..truth.len()).all(|i| (est[i] - truth[i]).abs() <= 3.0 * se[i].unwrap()) {
            covered += 1;
        }
    }
    assert!(covered >= 18, "{covered} of 20");
}

#[test]
fn gnp_mean_switching_matches_statsmodels() {
    let y = dataset(DatasetName::Hamilton84Gnp).unwrap().growth();
    let s = Sample::univariate(&y);
    let ms = fit(
        &s,
        &ModelSpec::switching(1, 4, 2, 0, true, false),
        &EstimOptions { msvar: false, use_diff_init: 10, get_se: false, seed: 3, ..Default::default() },
    )
    .unwrap();
    assert!((ms.loglik - -181.26339).abs() < 1e-3, "{}", ms.loglik);
    let ar = fit(&s, &ModelSpec::linear(1, 4, 0), &EstimOptions { get_se: false, ..Default::default() }).unwrap();
    assert!((ar.loglik - -183.669).abs() < 1e-2, "{}", ar.loglik);
}

/// Zooming grid search over (mu_1, mu_2, sigma2, p11, p22).
fn grid_maximum(s: &Sample) -> f64 {
    let spec = ModelSpec::switching(1, 0, 2, 0, true, false);
    let ll = |x: &[f64]| {
        let th = Theta::univariate(&[x[0], x[1]], &[], &[x[2]], TransitionMatrix::two_regime(x[3], x[4]).unwrap()).unwrap();
        loglik(&th, s, &spec).unwrap()
    };
    let mut lo = [-2.0, 0.0, 0.05, 0.01, 0.01];
    let mut hi = [2.0, 5.0, 3.0, 0.99, 0.99];
    let floor = [-5.0, -5.0, 1e-3, 1e-4, 1e-4];
    let ceil = [8.0, 8.0, 10.0, 1.0 - 1e-4, 1.0 - 1e-4];
    let steps: usize = 9;
    let mut best = (f64::NEG_INFINITY, [0.0; 5]);
    for _ in 0..40 {
        let h: Vec<f64> = (0..5).map(|d| (hi[d] - lo[d]) / (steps - 1) as f64).collect();
        for code in 0..steps.pow(5) {
            let mut c = code;
            let mut x = [0.0; 5];
            for d in 0..5 {
                x[d] = lo[d] + h[d] * (c % steps) as f64;
                c /= steps;
            }
            let v = ll(&x);
            if v > best.0 {
                best = (v, x);
            }
        }
        for d in 0..5 {
            let half = h[d] * 1.5;
            lo[d] = (best.1[d] - half).max(floor[d]);
            hi[d] = (best.1[d] + half).min(ceil[d]);
        }
    }
    best.0
}

#[test]
fn lr_matches_grid_search_on_tiny_sample() {
    let y = [
        0.1, -0.4, 0.3, 0.2, 3.1, 2.6, 3.4, -0.2, 0.5, 0.1, -0.3, 0.2, 2.9, 3.3, 0.4, -0.1, 0.0, 2.7, 3.2, 3.0,
    ];
    let s = Sample::univariate(&y);
    let h0 = EstimOptions { get_se: false, ..Default::default() };
    let h1 = EstimOptions { msvar: false, use_diff_init: 20, get_se: false, tol: 1e-12, maxit: 5000, ..Default::default() };
    let (lr, fit0, _, _) = lr_statistic(&s, 0, 1, 2, &h0, &h1).unwrap();
    let oracle = 2.0 * (grid_maximum(&s) - fit0.loglik);
    assert!((lr - oracle).abs() < 1e-3, "LR {lr} vs grid {oracle}");
}
