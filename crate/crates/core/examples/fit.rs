//! Estimates a Markov-switching AR(1) by EM and by bounded maximum
//! likelihood and prints the coefficient tables.

use msregime::dgp::{simulate, DgpSpec};
use msregime::estimation::{fit, EstimOptions, Method};
use msregime::{ModelFamily, ModelSpec, Sample, Theta, TransitionMatrix};

fn main() -> msregime::Result<()> {
    let truth = Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], TransitionMatrix::two_regime(0.95, 0.90)?)?;
    let y = simulate(&DgpSpec::new(ModelFamily::Msar, 500, truth, 3))?.y;
    let sample = Sample::new(y, None)?;
    let spec = ModelSpec::switching(1, 1, 2, 0, true, true);

    for method in [Method::Em, Method::Mle] {
        let f = fit(&sample, &spec, &EstimOptions { method, use_diff_init: 5, seed: 1, ..Default::default() })?;
        println!("{method:?}: loglik {:.4}, AIC {:.2}, BIC {:.2}", f.loglik, f.aic, f.bic);
        let se = f.se.clone().unwrap_or_default();
        for (i, (name, coef)) in f.param_names().iter().zip(f.coefficients()).enumerate() {
            let s = se.get(i).copied().flatten().map_or("-".to_string(), |s| format!("{s:.4}"));
            println!("  {name:<6} {coef:>10.4} {s:>10}");
        }
    }

    let linear = fit(&sample, &ModelSpec::linear(1, 1, 0), &EstimOptions::default())?;
    println!("AR(1) loglik {:.4}", linear.loglik);
    Ok(())
}
