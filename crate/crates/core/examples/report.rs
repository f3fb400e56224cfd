//! JSON reports for a fit and a test, matching the bundled schema.

use msregime::dgp::{simulate, DgpSpec};
use msregime::estimation::{fit, EstimOptions};
use msregime::moments::{dlmc_test, DlConfig};
use msregime::report::{FitReport, TestReport, SCHEMA_VERSION};
use msregime::{ModelFamily, ModelSpec, Sample, Theta, TransitionMatrix};

fn main() -> msregime::Result<()> {
    let theta = Theta::univariate(&[1.0], &[0.5], &[1.0], TransitionMatrix::single())?;
    let sample = Sample::new(simulate(&DgpSpec::new(ModelFamily::Ar, 150, theta, 9))?.y, None)?;

    let f = fit(&sample, &ModelSpec::linear(1, 1, 0), &EstimOptions::default())?;
    let t = dlmc_test(&sample, &DlConfig { n: 19, n2: 1000, ..Default::default() })?;
    println!("schema {SCHEMA_VERSION}");
    println!("{}", serde_json::to_string_pretty(&FitReport::from(&f)).unwrap());
    println!("{}", serde_json::to_string_pretty(&TestReport::from(&t)).unwrap());
    Ok(())
}
