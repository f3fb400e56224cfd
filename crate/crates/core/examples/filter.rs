//! Runs the Hamilton filter and Kim smoother at the true parameters and
//! reports how often the smoothed regime matches the simulated one.

use msregime::dgp::{simulate, DgpSpec};
use msregime::likelihood::{build_composite, hamilton_filter, kim_smoother};
use msregime::{ModelFamily, ModelSpec, Sample, Theta, TransitionMatrix};

fn main() -> msregime::Result<()> {
    let theta = Theta::univariate(&[0.0, 3.0], &[0.4, -0.2], &[1.0, 1.0], TransitionMatrix::two_regime(0.9, 0.8)?)?;
    let out = simulate(&DgpSpec::new(ModelFamily::Msar, 300, theta.clone(), 11))?;
    let sample = Sample::new(out.y, None)?;
    let spec = ModelSpec::switching(1, 2, 2, 0, true, true);

    let filter = hamilton_filter(&theta, &sample, &spec)?;
    let space = build_composite(&theta.transition, spec.p);
    let smooth = kim_smoother(&filter, &space);
    println!("loglik {:.4} over {} composite states", filter.loglik, filter.n_states);

    let t_eff = smooth.xi_smoothed.nrows();
    let hits = (0..t_eff)
        .filter(|&t| {
            let guess = if smooth.xi_smoothed[(t, 1)] > 0.5 { 1 } else { 0 };
            guess == out.states.states[t + spec.p]
        })
        .count();
    println!("smoothed classification accuracy {:.3}", hits as f64 / t_eff as f64);
    for t in 0..8 {
        println!("  t={t:<3} P(regime 2) = {:.3}  true regime {}", smooth.xi_smoothed[(t, 1)], out.states.states[t + spec.p] + 1);
    }
    Ok(())
}
