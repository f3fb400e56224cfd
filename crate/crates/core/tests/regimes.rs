use msregime::dgp::{simulate, DgpSpec};
use msregime::lrt::{lmc_lrt, LrTestConfig};
use msregime::{ModelFamily, Sample, Theta, TransitionMatrix};

#[test]
fn two_regime_data_does_not_need_a_third() {
    let th = Theta::univariate(&[0.0, 4.0], &[0.5], &[1.0, 1.5], TransitionMatrix::two_regime(0.9, 0.85).unwrap()).unwrap();
    let mut rejections = 0;
    for seed in 0..20u64 {
        let y = simulate(&DgpSpec::new(ModelFamily::Msar, 200, th.clone(), 40 + seed)).unwrap().y;
        let config = LrTestConfig { k0: 2, k1: 3, n: 19, seed, ..Default::default() };
        let r = lmc_lrt(&Sample::new(y, None).unwrap(), &config).unwrap();
        rejections += (r.pvalue() <= 0.05) as usize;
    }
    assert!(rejections <= 2, "{rejections} of 20 rejected");
}
