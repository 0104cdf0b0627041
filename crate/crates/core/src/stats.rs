//! Interval and goodness-of-fit helpers for the Monte Carlo engine:
//! Wilson score intervals for proportions, normal intervals for bounded
//! payoffs, a one-sample Kolmogorov–Smirnov test, and a chi-square test with
//! low-expectation bin merging.

use crate::error::{NomaError, Result};
use crate::specfn::regularized_lower_gamma;

/// Two-sided 99% normal quantile (inverse standard normal CDF at 0.995).
pub const Z_99: f64 = 2.575_829_303_548_900_4;

/// Wilson score interval for a binomial proportion.
///
/// Behaves sensibly even for event probabilities near zero, where the plain
/// normal interval collapses; the interval always contains the sample mean.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0, "wilson interval needs at least one trial");
    assert!(successes <= trials);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // The exact interval contains the sample mean; rounding at the boundary
    // cases (p near 0 or 1) must not be allowed to violate that.
    (
        (center - half).max(0.0).min(p),
        (center + half).min(1.0).max(p),
    )
}

/// Normal-approximation interval `mean ± z * se`.
pub fn normal_interval(mean: f64, se: f64, z: f64) -> (f64, f64) {
    (mean - z * se, mean + z * se)
}

/// Outcome of a goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic complement CDF of the Kolmogorov statistic, evaluated with a
/// series appropriate to each tail.
fn kolmogorov_complement(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let p = if t < 1.18 {
        // Small-t form: fast-converging theta-function series for the CDF.
        let q = (-std::f64::consts::PI.powi(2) / (8.0 * t * t)).exp();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / t
            * (q + q.powi(9) + q.powi(25) + q.powi(49));
        1.0 - cdf
    } else {
        // Large-t form: alternating exponential series for the complement.
        let q = (-2.0 * t * t).exp();
        2.0 * (q - q.powi(4) + q.powi(9) - q.powi(16))
    };
    p.clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test of `samples` against the continuous
/// CDF `cdf`. Samples are sorted in place; the p-value uses the
/// effective-sample-size correction `(sqrt(n) + 0.12 + 0.11/sqrt(n)) * D`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> Result<GofOutcome> {
    let n = samples.len();
    if n < 2 {
        return Err(NomaError::Domain(
            "Kolmogorov-Smirnov test needs at least 2 samples".to_string(),
        ));
    }
    samples.sort_unstable_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0_f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) {
            return Err(NomaError::Domain(format!(
                "CDF returned {f} outside [0, 1] at x = {x}"
            )));
        }
        let above = (i as f64 + 1.0) / nf - f;
        let below = f - i as f64 / nf;
        d = d.max(above).max(below);
    }
    let t = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    Ok(GofOutcome {
        statistic: d,
        p_value: kolmogorov_complement(t),
    })
}

/// Chi-square goodness-of-fit test of observed counts against expected
/// counts. Adjacent bins are merged until every expected count is at least 5
/// (a leftover light tail merges into the final bin); degrees of freedom are
/// `merged_bins - 1`.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<GofOutcome> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(NomaError::Domain(
            "chi-square test needs matching, non-empty observed/expected vectors".to_string(),
        ));
    }
    if expected.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
        return Err(NomaError::Domain(
            "chi-square expected counts must be finite and non-negative".to_string(),
        ));
    }

    let mut merged: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        acc_obs += o as f64;
        acc_exp += e;
        if acc_exp >= 5.0 {
            merged.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        if let Some(last) = merged.last_mut() {
            last.0 += acc_obs;
            last.1 += acc_exp;
        } else {
            merged.push((acc_obs, acc_exp));
        }
    }
    if merged.len() < 2 {
        return Err(NomaError::Domain(
            "chi-square test needs at least 2 bins after merging".to_string(),
        ));
    }

    let stat: f64 = merged
        .iter()
        .map(|&(o, e)| {
            let diff = o - e;
            diff * diff / e
        })
        .sum();
    let dof = merged.len() - 1;
    let p_value = 1.0 - regularized_lower_gamma(dof as f64 / 2.0, stat / 2.0)?;
    Ok(GofOutcome {
        statistic: stat,
        p_value,
    })
}
