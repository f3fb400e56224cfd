//! Simulates a two-regime Markov-switching AR(1) and a bivariate hidden
//! Markov model, then summarizes each regime.

use nalgebra::{DMatrix, DVector};

use msregime::dgp::{simulate, DgpSpec};
use msregime::{ModelFamily, Theta, TransitionMatrix};

fn main() -> msregime::Result<()> {
    let p = TransitionMatrix::two_regime(0.95, 0.90)?;
    let msar = Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], p.clone())?;
    let out = simulate(&DgpSpec::new(ModelFamily::Msar, 500, msar, 42))?;
    println!("MSAR(1), n = {}", out.y.nrows());
    for j in 0..2 {
        let ys: Vec<f64> = (0..out.y.nrows()).filter(|&t| out.states.states[t] == j).map(|t| out.y[(t, 0)]).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        println!("  regime {}: {:>3} periods, mean {mean:.3}", j + 1, ys.len());
    }

    let hmm = Theta {
        mu: vec![DVector::from_vec(vec![5.0, -2.0]), DVector::from_vec(vec![10.0, 2.0])],
        phi: vec![],
        beta: DMatrix::zeros(0, 2),
        sigma: vec![
            DMatrix::from_row_slice(2, 2, &[5.0, 1.5, 1.5, 1.0]),
            DMatrix::from_row_slice(2, 2, &[7.0, -1.0, -1.0, 2.0]),
        ],
        transition: p,
    };
    let out = simulate(&DgpSpec::new(ModelFamily::Hmm, 500, hmm, 7))?;
    println!("HMM, q = 2, first rows:");
    for t in 0..5 {
        println!("  {:>8.3} {:>8.3}  regime {}", out.y[(t, 0)], out.y[(t, 1)], out.states.states[t] + 1);
    }
    Ok(())
}
