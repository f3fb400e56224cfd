//! Standardized likelihood ratio over a parameter grid with the simulated
//! bound on its p-value, for bandwidths M = 0..4.

use msregime::dgp::{simulate, DgpSpec};
use msregime::hansen::{hlr_statistic, hlr_test, HansenConfig};
use msregime::{ModelFamily, Sample, Theta, TransitionMatrix};

fn main() -> msregime::Result<()> {
    let theta = Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], TransitionMatrix::two_regime(0.95, 0.90)?)?;
    let sample = Sample::new(simulate(&DgpSpec::new(ModelFamily::Msar, 300, theta, 2))?.y, None)?;
    let config = HansenConfig { gridsize: 6, msvar: true, seed: 1, ..Default::default() };

    let stat = hlr_statistic(&sample, &config)?;
    let a = &stat.argmax;
    println!("LR* = {:.4} at {:?} of {} grid points", stat.lr_star, a, stat.grid.len());
    for row in hlr_test(&sample, &config)?.rows {
        println!("  {:<6} {:>8.4}  p-value {:.3}", row.name, row.statistic, row.pvalue);
    }
    Ok(())
}
