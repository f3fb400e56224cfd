//! The bundled quarterly GNP sample: growth rates, the classic
//! mean-switching AR(4) fit and the likelihood ratio against AR(4).

use msregime::data::{dataset, list_datasets, quarter_label, DatasetName};
use msregime::estimation::EstimOptions;
use msregime::lrt::lr_statistic;
use msregime::Sample;

fn main() -> msregime::Result<()> {
    for d in list_datasets() {
        println!("{:<14} {} .. {}  bundled: {}", d.name, d.first, d.last, d.bundled);
    }
    let gnp = dataset(DatasetName::Hamilton84Gnp)?;
    let y = gnp.growth();
    let first = gnp.rows.iter().find(|r| r.growth.is_some()).unwrap();
    println!("{} growth observations from {}", y.len(), quarter_label(first.date));

    let sample = Sample::univariate(&y);
    let h0 = EstimOptions { get_se: false, ..Default::default() };
    for msvar in [false, true] {
        let h1 = EstimOptions { msvar, use_diff_init: 10, get_se: false, seed: 1, ..Default::default() };
        let (lr, fit0, fit1, _) = lr_statistic(&sample, 4, 1, 2, &h0, &h1)?;
        println!("msvar = {msvar}: loglik AR(4) {:.4}, MS-AR(4) {:.4}, LR {lr:.3}", fit0.loglik, fit1.loglik);
        for (name, c) in fit1.param_names().iter().zip(fit1.coefficients()) {
            print!(" {name}={c:.3}");
        }
        println!();
    }
    Ok(())
}
