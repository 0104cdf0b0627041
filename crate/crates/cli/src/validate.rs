//! Cross-engine validation: every closed form is checked against the
//! simulator, the fast series against the reference quadrature, the
//! sampled laws against their distributions, and the combinatorial
//! identity against exact rational arithmetic. The report is a pure
//! function of (config, trials, seed) — byte-identical across runs and
//! thread counts.

use std::fmt::Write as _;

use noma_core::analytic::{
    avg_outage, avg_outage_given_group_quadrature, avg_outage_given_group_series,
    combinatorial_identity, goodput, group_size_pmf, GoodputMethod, OutageQuery,
};
use noma_core::model::{Scenario, SystemConfig};
use noma_core::montecarlo::{
    estimate_goodput, estimate_outage_matrix, sample_group, sample_schur_complements, trial_rng,
};
use noma_core::specfn::regularized_lower_gamma;
use noma_core::stats::{chi_square_gof, ks_test};
use noma_core::NomaError;

/// Result of a validation run: the printable report and the overall verdict.
pub struct ValidationOutcome {
    pub report: String,
    pub passed: bool,
}

struct Report {
    text: String,
    passed: bool,
}

impl Report {
    fn new(trials: u64, seed: u64) -> Self {
        let mut text = String::from("noma validation\n");
        let _ = writeln!(text, "trials = {trials}");
        let _ = writeln!(text, "seed = {seed}");
        Report { text, passed: true }
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.passed &= pass;
        let verdict = if pass { "PASS" } else { "FAIL" };
        let _ = writeln!(self.text, "check {name}: {verdict} ({detail})");
    }

    fn finish(mut self) -> ValidationOutcome {
        let _ = writeln!(
            self.text,
            "RESULT: {}",
            if self.passed { "PASS" } else { "FAIL" }
        );
        ValidationOutcome {
            report: self.text,
            passed: self.passed,
        }
    }
}

/// Run the full cross-check suite against one configuration.
pub fn run_validation(cfg: &SystemConfig, trials: u64, seed: u64) -> ValidationOutcome {
    let mut report = Report::new(trials, seed);

    let scenario = match Scenario::from_config(cfg.clone()) {
        Ok(sc) => {
            report.check("scenario_build", true, "configuration is feasible".to_string());
            sc
        }
        Err(err) => {
            report.check("scenario_build", false, err.to_string());
            return report.finish();
        }
    };

    check_rational_identity(&mut report);
    check_series_vs_quadrature(&mut report, &scenario);
    check_group_size_law(&mut report, cfg, trials, seed);
    check_gamma_law(&mut report, cfg, trials, seed);
    check_outage_cross_engine(&mut report, &scenario, trials, seed);
    check_goodput_cross_engine(&mut report, &scenario, trials, seed);

    report.finish()
}

/// The alternating binomial sum that underlies the asymptotes telescopes to
/// exactly one; exact rational arithmetic must confirm that for every
/// group size up to 20.
fn check_rational_identity(report: &mut Report) {
    let mut max_dev = 0.0_f64;
    let mut failures = 0u32;
    for group_size in 1..=20 {
        for k in 1..=group_size {
            match combinatorial_identity(group_size, k) {
                Ok(v) => max_dev = max_dev.max((v - 1.0).abs()),
                Err(_) => failures += 1,
            }
        }
    }
    report.check(
        "rational_identity_k_le_20",
        failures == 0 && max_dev == 0.0,
        format!("max |value - 1| = {max_dev:.6e}, failures = {failures}"),
    );
}

/// The fast series and the reference quadrature are independent evaluations
/// of the same distance average; wherever the series is permitted they must
/// agree to 1e-8 relative.
fn check_series_vs_quadrature(report: &mut Report, scenario: &Scenario) {
    let base = &scenario.cfg;
    let mut max_rel = 0.0_f64;
    let mut compared = 0u32;
    let mut refused = 0u32;
    let mut failed: Option<String> = None;
    for radius_scale in [0.25, 0.5, 1.0] {
        let mut cfg = base.clone();
        cfg.radius = base.radius * radius_scale;
        let sc = match Scenario::from_config(cfg) {
            Ok(sc) => sc,
            Err(err) => {
                failed = Some(err.to_string());
                continue;
            }
        };
        for group_size in 1..=sc.cfg.group_cap {
            for stream in 1..=sc.cfg.n_streams {
                for user_order in 1..=group_size {
                    let q = match OutageQuery::conditional(&sc, stream, user_order, group_size) {
                        Ok(q) => q,
                        Err(err) => {
                            failed = Some(err.to_string());
                            continue;
                        }
                    };
                    let series = match avg_outage_given_group_series(&q) {
                        Ok(r) => r,
                        Err(NomaError::SeriesRangeRefused { .. }) => {
                            refused += 1;
                            continue;
                        }
                        Err(err) => {
                            failed = Some(err.to_string());
                            continue;
                        }
                    };
                    match avg_outage_given_group_quadrature(&q) {
                        Ok(quad) => {
                            let rel = (series.value - quad.value).abs()
                                / quad.value.abs().max(f64::MIN_POSITIVE);
                            max_rel = max_rel.max(rel);
                            compared += 1;
                        }
                        Err(err) => failed = Some(err.to_string()),
                    }
                }
            }
        }
    }
    let pass = failed.is_none() && compared > 0 && max_rel <= 1e-8;
    let detail = match failed {
        Some(err) => format!("evaluation error: {err}"),
        None => format!("max rel gap = {max_rel:.6e} over {compared} points ({refused} refused)"),
    };
    report.check("series_vs_quadrature", pass, detail);
}

/// Served group sizes follow the truncated Poisson law (chi-square).
fn check_group_size_law(report: &mut Report, cfg: &SystemConfig, trials: u64, seed: u64) {
    let n = trials.min(100_000);
    let mut rng = trial_rng(seed, u64::MAX - 1);
    let mut observed = vec![0u64; cfg.group_cap + 1];
    for _ in 0..n {
        let (count, _) = sample_group(cfg, &mut rng);
        observed[count] += 1;
    }
    let expected: Vec<f64> = group_size_pmf(cfg).iter().map(|p| p * n as f64).collect();
    match chi_square_gof(&observed, &expected) {
        Ok(outcome) => report.check(
            "group_size_chi_square",
            outcome.p_value > 0.01,
            format!(
                "p = {:.6e}, statistic = {:.6e}, draws = {n}",
                outcome.p_value, outcome.statistic
            ),
        ),
        Err(err) => report.check("group_size_chi_square", false, err.to_string()),
    }
}

/// The reciprocal noise amplification must follow its Gamma law
/// (Kolmogorov–Smirnov, per stream, at zero correlation and at the
/// configured correlation).
fn check_gamma_law(report: &mut Report, cfg: &SystemConfig, trials: u64, seed: u64) {
    let n = trials.min(100_000);
    let mut rhos = vec![0.0];
    if cfg.corr_coeff != 0.0 {
        rhos.push(cfg.corr_coeff);
    }
    for rho in rhos {
        let mut variant = cfg.clone();
        variant.corr_coeff = rho;
        let name_of = |stream: usize| format!("gamma_ks_rho{rho:.2}_stream{stream}");
        let sc = match Scenario::from_config(variant) {
            Ok(sc) => sc,
            Err(err) => {
                report.check(&name_of(0), false, err.to_string());
                continue;
            }
        };
        let shape = f64::from(sc.detection_shape());
        for stream in 1..=sc.cfg.n_streams {
            let rate = sc.stats.beta[stream - 1];
            let name = name_of(stream);
            match sample_schur_complements(&sc, stream, n, seed) {
                Ok(mut samples) => {
                    match ks_test(&mut samples, |x| {
                        regularized_lower_gamma(shape, rate * x).unwrap_or(f64::NAN)
                    }) {
                        Ok(outcome) => report.check(
                            &name,
                            outcome.p_value > 0.01,
                            format!(
                                "p = {:.6e}, statistic = {:.6e}, draws = {n}",
                                outcome.p_value, outcome.statistic
                            ),
                        ),
                        Err(err) => report.check(&name, false, err.to_string()),
                    }
                }
                Err(err) => report.check(&name, false, err.to_string()),
            }
        }
    }
}

/// Every (stream, user order) closed-form average must sit inside the
/// simulator's 99% confidence interval.
fn check_outage_cross_engine(report: &mut Report, scenario: &Scenario, trials: u64, seed: u64) {
    let estimates = match estimate_outage_matrix(scenario, trials, seed) {
        Ok(e) => e,
        Err(err) => {
            report.check("outage_cross_engine", false, err.to_string());
            return;
        }
    };
    for stream in 1..=scenario.cfg.n_streams {
        for user_order in 1..=scenario.cfg.group_cap {
            let name = format!("outage_cross_engine_m{stream}_k{user_order}");
            let analytic = OutageQuery::mixed(scenario, stream, user_order)
                .and_then(|q| avg_outage(&q).map(|r| r.value));
            match analytic {
                Ok(reference) => {
                    let est = &estimates[stream - 1][user_order - 1];
                    let inside = est.ci_lo <= reference && reference <= est.ci_hi;
                    report.check(
                        &name,
                        inside,
                        format!(
                            "analytic {reference:.6e}, simulated {:.6e} in [{:.6e}, {:.6e}]",
                            est.mean, est.ci_lo, est.ci_hi
                        ),
                    );
                }
                Err(err) => report.check(&name, false, err.to_string()),
            }
        }
    }
}

/// The exact goodput sum must sit inside the simulator's 99% interval.
fn check_goodput_cross_engine(report: &mut Report, scenario: &Scenario, trials: u64, seed: u64) {
    let analytic = goodput(scenario, GoodputMethod::Exact);
    let simulated = estimate_goodput(scenario, trials, seed);
    match (analytic, simulated) {
        (Ok(reference), Ok(est)) => {
            let inside = est.ci_lo <= reference.value && reference.value <= est.ci_hi;
            report.check(
                "goodput_cross_engine",
                inside,
                format!(
                    "analytic {:.6e}, simulated {:.6e} in [{:.6e}, {:.6e}]",
                    reference.value, est.mean, est.ci_lo, est.ci_hi
                ),
            );
        }
        (Err(err), _) | (_, Err(err)) => {
            report.check("goodput_cross_engine", false, err.to_string());
        }
    }
}
