//! Local and maximized Monte Carlo likelihood ratio tests of one regime
//! against two.

use msregime::dgp::{simulate, DgpSpec};
use msregime::lrt::{lmc_lrt, mmc_lrt, LrTestConfig, MmcConfig};
use msregime::mc::TestResult;
use msregime::{ModelFamily, Sample, Theta, TransitionMatrix};

fn show(r: &TestResult) {
    for row in &r.rows {
        println!("  {:<8} statistic {:>9.4}  p-value {:.3}", row.name, row.statistic, row.pvalue);
    }
}

fn main() -> msregime::Result<()> {
    let ms = Theta::univariate(&[5.0, 10.0], &[0.75], &[1.0, 2.0], TransitionMatrix::two_regime(0.95, 0.90)?)?;
    let ar = Theta::univariate(&[5.0], &[0.75], &[1.0], TransitionMatrix::single())?;
    let switching = Sample::new(simulate(&DgpSpec::new(ModelFamily::Msar, 300, ms, 1))?.y, None)?;
    let linear = Sample::new(simulate(&DgpSpec::new(ModelFamily::Ar, 200, ar, 2))?.y, None)?;

    let config = LrTestConfig { n: 39, seed: 5, ..Default::default() };
    println!("LMC-LRT, switching data");
    show(&lmc_lrt(&switching, &config)?);
    println!("LMC-LRT, linear data");
    show(&lmc_lrt(&linear, &config)?);

    let mmc = MmcConfig { lrt: LrTestConfig { n: 19, ..config }, maxit: 5, ..Default::default() };
    println!("MMC-LRT, linear data");
    show(&mmc_lrt(&linear, &mmc)?);
    Ok(())
}
