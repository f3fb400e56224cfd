//! Optimal tests against Markov-switching alternatives: supTS and expTS
//! with a parametric bootstrap.

use msregime::chp::{chp_statistics, chp_test, ChpConfig};
use msregime::dgp::{simulate, DgpSpec};
use msregime::{ModelFamily, Sample, Theta, TransitionMatrix};

fn main() -> msregime::Result<()> {
    let ms = Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], TransitionMatrix::two_regime(0.95, 0.90)?)?;
    let ar = Theta::univariate(&[5.0], &[0.75], &[1.0], TransitionMatrix::single())?;
    let config = ChpConfig { n: 500, msvar: true, seed: 4, ..Default::default() };

    for (label, family, theta) in [("switching", ModelFamily::Msar, ms), ("linear", ModelFamily::Ar, ar)] {
        let sample = Sample::new(simulate(&DgpSpec::new(family, 300, theta, 6))?.y, None)?;
        let stats = chp_statistics(&sample, &config)?;
        println!("{label}: {} grid points", stats.grid.len());
        for row in chp_test(&sample, &config)?.rows {
            println!("  {:<6} {:>8.4}  p-value {:.3}", row.name, row.statistic, row.pvalue);
        }
    }
    Ok(())
}
