//! Distributional validation of the link simulator: the sampled channel's
//! second moments, the group-size law, the ordered-distance law, and the
//! Gamma law of the reciprocal zero-forcing noise amplification that the
//! whole analytic engine rests on.

use nalgebra::DMatrix;
use num_complex::Complex64;
use noma_core::analytic::group_size_pmf;
use noma_core::model::{build_exponential_correlation, Scenario, SystemConfig};
use noma_core::montecarlo::{
    estimate_outage, sample_channel, sample_group, sample_schur_complements, trial_rng,
};
use noma_core::specfn::regularized_lower_gamma;
use noma_core::stats::{chi_square_gof, ks_test};

fn scenario_with(adjust: impl FnOnce(&mut SystemConfig)) -> Scenario {
    let mut cfg = SystemConfig::default();
    adjust(&mut cfg);
    Scenario::from_config(cfg).unwrap()
}

#[test]
fn channel_columns_carry_the_configured_covariance() {
    let sc = Scenario::from_config(SystemConfig::default()).unwrap();
    let cfg = &sc.cfg;
    let n_draws = 100_000;
    let mut rng = trial_rng(1001, 0);
    let mut acc = DMatrix::<Complex64>::zeros(cfg.n_tx, cfg.n_tx);
    let mut frob = 0.0_f64;
    for _ in 0..n_draws {
        let h = sample_channel(cfg, &sc.stats, &mut rng);
        acc += h.adjoint() * &h;
        frob += h.norm_squared();
    }
    let sample_cov = acc / Complex64::new(n_draws as f64, 0.0);

    // E[H^H H] = fading_power * n_rx * R_T.
    let scale = cfg.fading_power * cfg.n_rx as f64;
    let target =
        build_exponential_correlation(cfg.n_tx, cfg.corr_coeff).unwrap() * Complex64::from(scale);
    let mut dev = 0.0_f64;
    let mut norm = 0.0_f64;
    for r in 0..cfg.n_tx {
        for c in 0..cfg.n_tx {
            let d = sample_cov[(r, c)] - target[(r, c)];
            dev += d.norm_sqr();
            norm += target[(r, c)].norm_sqr();
            assert!(
                d.norm() < 0.01 * scale,
                "entry ({r}, {c}): {} vs {}",
                sample_cov[(r, c)],
                target[(r, c)]
            );
        }
    }
    assert!(
        dev.sqrt() < 0.01 * norm.sqrt(),
        "covariance deviation {} vs norm {}",
        dev.sqrt(),
        norm.sqrt()
    );

    // E ||H||_F^2 = fading_power * n_rx * n_tx regardless of correlation,
    // because the coloring factor preserves the total transmit-side power.
    let expected_frob = cfg.fading_power * (cfg.n_rx * cfg.n_tx) as f64;
    let mean_frob = frob / n_draws as f64;
    assert!(
        (mean_frob - expected_frob).abs() < 0.01 * expected_frob,
        "Frobenius mean {mean_frob} vs {expected_frob}"
    );
}

#[test]
fn reciprocal_noise_amplification_follows_the_gamma_law() {
    // The analytic engine's keystone: 1 / (fading_power * [Z^-1]_mm) is
    // Gamma with the detection shape and the stream's covariance rate.
    for rho in [0.0, 0.5] {
        let sc = scenario_with(|cfg| cfg.corr_coeff = rho);
        let shape = f64::from(sc.detection_shape());
        for stream in 1..=sc.cfg.n_streams {
            let rate = sc.stats.beta[stream - 1];
            let mut samples = sample_schur_complements(&sc, stream, 100_000, 2002).unwrap();
            let outcome = ks_test(&mut samples, |x| {
                regularized_lower_gamma(shape, rate * x).unwrap()
            })
            .unwrap();
            assert!(
                outcome.p_value > 0.01,
                "rho = {rho}, stream {stream}: KS p = {} (D = {})",
                outcome.p_value,
                outcome.statistic
            );
        }
    }
}

#[test]
fn served_group_size_follows_the_truncated_poisson_law() {
    let sc = Scenario::from_config(SystemConfig::default()).unwrap();
    let n_draws = 100_000u64;
    let mut rng = trial_rng(3003, 0);
    let mut observed = vec![0u64; sc.cfg.group_cap + 1];
    for _ in 0..n_draws {
        let (count, _) = sample_group(&sc.cfg, &mut rng);
        observed[count] += 1;
    }
    let expected: Vec<f64> = group_size_pmf(&sc.cfg)
        .iter()
        .map(|p| p * n_draws as f64)
        .collect();
    let outcome = chi_square_gof(&observed, &expected).unwrap();
    assert!(
        outcome.p_value > 0.01,
        "chi-square p = {} (stat = {}, observed {observed:?})",
        outcome.p_value,
        outcome.statistic
    );
}

#[test]
fn nearest_distance_in_a_pair_follows_the_order_statistic_law() {
    let sc = Scenario::from_config(SystemConfig::default()).unwrap();
    let d_max = sc.cfg.radius;
    let mut rng = trial_rng(4004, 0);
    let mut nearest = Vec::new();
    for _ in 0..120_000 {
        let (count, distances) = sample_group(&sc.cfg, &mut rng);
        if count == 2 {
            nearest.push(distances[0]);
        }
    }
    assert!(nearest.len() > 10_000, "got {} pairs", nearest.len());
    // Min of two i.i.d. draws with CDF (x/D)^2: F(x) = 1 - (1 - x^2/D^2)^2.
    let outcome = ks_test(&mut nearest, |x| {
        let u = (x / d_max).powi(2);
        1.0 - (1.0 - u) * (1.0 - u)
    })
    .unwrap();
    assert!(
        outcome.p_value > 0.01,
        "KS p = {} (D = {})",
        outcome.p_value,
        outcome.statistic
    );
}

#[test]
fn empirical_outage_is_decreasing_in_snr_with_separated_intervals() {
    let trials = 100_000;
    let estimates: Vec<_> = [1e4, 1e6, 1e8]
        .iter()
        .map(|&snr| {
            let sc = scenario_with(|cfg| cfg.avg_snr = snr);
            estimate_outage(&sc, 1, 3, trials, 5005).unwrap()
        })
        .collect();
    for pair in estimates.windows(2) {
        assert!(
            pair[1].ci_hi < pair[0].ci_lo,
            "intervals not separated: [{}, {}] then [{}, {}]",
            pair[0].ci_lo,
            pair[0].ci_hi,
            pair[1].ci_lo,
            pair[1].ci_hi
        );
    }
}
