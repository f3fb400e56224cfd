//! Moment-based tests on AR residuals: the four statistics and their
//! local and maximized Monte Carlo combinations.

use msregime::dgp::{simulate, DgpSpec};
use msregime::moments::{dlmc_test, dlmmc_test, moment_stats, residuals_at, DlConfig};
use msregime::{ModelFamily, Sample, Theta, TransitionMatrix};

fn main() -> msregime::Result<()> {
    let theta = Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], TransitionMatrix::two_regime(0.95, 0.90)?)?;
    let sample = Sample::new(simulate(&DgpSpec::new(ModelFamily::Msar, 500, theta, 8))?.y, None)?;

    let e = residuals_at(&sample, &[0.75])?;
    let s = moment_stats(&e)?;
    println!("M {:.4}  V {:.4}  S {:.4}  K {:.4}", s.m, s.v, s.s, s.k);

    let config = DlConfig { n: 99, seed: 3, ..Default::default() };
    for r in [dlmc_test(&sample, &config)?, dlmmc_test(&sample, &DlConfig { maxit: 20, ..config.clone() })?] {
        println!("{}", r.test);
        for row in &r.rows {
            println!("  {:<9} statistic {:>8.4}  p-value {:.3}", row.name, row.statistic, row.pvalue);
        }
    }
    Ok(())
}
