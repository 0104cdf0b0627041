//! Closed-form performance evaluation: conditional and distance-averaged
//! outage, Poisson-mixed outage, average goodput, the high-SNR / small-radius
//! and low-SNR / large-radius expansions, the diversity-order estimator, and
//! the exact combinatorial identity behind the distance averaging.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{NomaError, Result};
use crate::model::{Scenario, SystemConfig};
use crate::specfn::{
    binomial, gamma, integrate_adaptive, regularized_lower_gamma, residue_series,
    QuadratureControl, SeriesControl,
};

/// Evaluation route that produced an [`OutageResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutageMethod {
    /// Outage at a fixed user distance.
    Conditional,
    /// Distance-averaged via adaptive quadrature (reference path).
    AveragedQuadrature,
    /// Distance-averaged via the alternating series expansion (fast path).
    AveragedSeries,
    /// Averaged over the truncated-Poisson group size.
    PoissonMixed,
    /// Leading high-SNR term, exact up to `o(snr^-delta)`.
    AsymptoticHighSnr,
    /// Leading large-radius expansion of the dominant full-group term.
    AsymptoticLargeD,
}

impl OutageMethod {
    pub fn tag(self) -> &'static str {
        match self {
            OutageMethod::Conditional => "conditional",
            OutageMethod::AveragedQuadrature => "averaged-quadrature",
            OutageMethod::AveragedSeries => "averaged-series",
            OutageMethod::PoissonMixed => "poisson-mixed",
            OutageMethod::AsymptoticHighSnr => "asymptotic-high-snr",
            OutageMethod::AsymptoticLargeD => "asymptotic-large-D",
        }
    }
}

impl fmt::Display for OutageMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Evaluation route that produced a [`GoodputResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoodputMethod {
    /// Poisson-mixed outage subtracted from the group-occupancy bound.
    Exact,
    /// Small-radius limit: outage terms vanish, occupancy dominates.
    AsymptoticSmallD,
    /// Large-radius limit: leading complement of the full-group outage.
    AsymptoticLargeD,
}

impl GoodputMethod {
    pub fn tag(self) -> &'static str {
        match self {
            GoodputMethod::Exact => "exact",
            GoodputMethod::AsymptoticSmallD => "asymptotic-small-D",
            GoodputMethod::AsymptoticLargeD => "asymptotic-large-D",
        }
    }
}

impl fmt::Display for GoodputMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// An outage probability with its provenance.
///
/// Values from non-asymptotic methods always lie in `[0, 1]`. Asymptotic
/// closed forms are reported unclamped — clamping would corrupt slope fits —
/// and carry a `regime_note` whenever they leave `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutageResult {
    pub value: f64,
    pub method: OutageMethod,
    /// Numerical error bound where one is computable (series truncation or
    /// quadrature bound); `None` for closed forms evaluated at machine
    /// precision.
    pub err_est: Option<f64>,
    /// Present when an asymptotic value falls outside `[0, 1]`, i.e. the
    /// query is outside the expansion's regime.
    pub regime_note: Option<String>,
}

/// One `(stream, user order)` contribution to the goodput.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodputTerm {
    /// 1-based stream index.
    pub stream: usize,
    /// 1-based user order (distance rank).
    pub user_order: usize,
    /// Bits per transmission contributed by this pair.
    pub value: f64,
}

/// Average goodput in bits per transmission, with its per-pair breakdown
/// ordered by `(stream, user_order)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodputResult {
    pub value: f64,
    pub per_term: Vec<GoodputTerm>,
    pub method: GoodputMethod,
}

/// Which user and stream an outage evaluation concerns.
///
/// `group_size` is `Some(K)` for quantities conditioned on a realized group
/// size and `None` for quantities averaged over the group-size distribution.
#[derive(Debug, Clone, Copy)]
pub struct OutageQuery<'a> {
    scenario: &'a Scenario,
    stream: usize,
    user_order: usize,
    group_size: Option<usize>,
}

impl<'a> OutageQuery<'a> {
    /// Query conditioned on a realized group size `K`; indices are 1-based
    /// and must satisfy `1 <= stream <= M`, `1 <= user_order <= K <= Q`.
    pub fn conditional(
        scenario: &'a Scenario,
        stream: usize,
        user_order: usize,
        group_size: usize,
    ) -> Result<Self> {
        Self::check_stream(scenario, stream)?;
        if user_order < 1 || user_order > group_size || group_size > scenario.cfg.group_cap {
            return Err(NomaError::ParameterDomain {
                name: "user_order",
                detail: format!(
                    "need 1 <= user_order <= group_size <= {}, got user_order = {user_order}, group_size = {group_size}",
                    scenario.cfg.group_cap
                ),
            });
        }
        Ok(OutageQuery {
            scenario,
            stream,
            user_order,
            group_size: Some(group_size),
        })
    }

    /// Query averaged over the group-size distribution; `1 <= user_order <= Q`.
    pub fn mixed(scenario: &'a Scenario, stream: usize, user_order: usize) -> Result<Self> {
        Self::check_stream(scenario, stream)?;
        if user_order < 1 || user_order > scenario.cfg.group_cap {
            return Err(NomaError::ParameterDomain {
                name: "user_order",
                detail: format!(
                    "need 1 <= user_order <= group_cap = {}, got {user_order}",
                    scenario.cfg.group_cap
                ),
            });
        }
        Ok(OutageQuery {
            scenario,
            stream,
            user_order,
            group_size: None,
        })
    }

    fn check_stream(scenario: &Scenario, stream: usize) -> Result<()> {
        if stream < 1 || stream > scenario.cfg.n_streams {
            return Err(NomaError::ParameterDomain {
                name: "stream",
                detail: format!(
                    "need 1 <= stream <= {}, got {stream}",
                    scenario.cfg.n_streams
                ),
            });
        }
        Ok(())
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn stream(&self) -> usize {
        self.stream
    }

    pub fn user_order(&self) -> usize {
        self.user_order
    }

    pub fn group_size(&self) -> Option<usize> {
        self.group_size
    }

    fn require_group(&self) -> Result<usize> {
        self.group_size.ok_or(NomaError::ParameterDomain {
            name: "group_size",
            detail: "this quantity is conditioned on a realized group size; build the query with a group size".to_string(),
        })
    }

    fn require_mixed(&self) -> Result<()> {
        if self.group_size.is_some() {
            return Err(NomaError::ParameterDomain {
                name: "group_size",
                detail: "this quantity marginalizes the group size; build the query without one"
                    .to_string(),
            });
        }
        Ok(())
    }
}

/// Quadrature control for the distance-averaging reference path. The
/// absolute floor is effectively disabled so the relative target governs
/// even when the outage probability is many orders below 1; this is what
/// makes the series/quadrature cross-check meaningful at high SNR.
const AVG_QUAD_CTRL: QuadratureControl = QuadratureControl {
    abs_tol: 1e-300,
    rel_tol: 1e-12,
    max_subdivisions: 2000,
};

/// Dimensionless series argument `beta_m D^alpha / (snr theta K)` for a
/// group of size `group_size` (0-based stream and user-order indices).
fn series_argument(scenario: &Scenario, m0: usize, group_size: usize, k0: usize) -> f64 {
    let cfg = &scenario.cfg;
    scenario.stats.beta[m0] * cfg.radius.powf(cfg.path_loss_exp)
        / (cfg.avg_snr * scenario.theta(group_size, m0, k0) * cfg.path_loss_ref)
}

/// Outage probability of the `user_order`-th nearest user at distance `d`,
/// conditioned on the query's group size: the regularized lower gamma
/// function of shape `N_r - M + 1` at `beta_m d^alpha / (snr theta K)`.
/// Monotone increasing in `d`, decreasing in SNR.
pub fn conditional_outage(q: &OutageQuery<'_>, d: f64) -> Result<OutageResult> {
    let group = q.require_group()?;
    let cfg = &q.scenario.cfg;
    if d == 0.0 {
        return Err(NomaError::SingularDistance);
    }
    if !(d > 0.0) || !d.is_finite() || d > cfg.radius {
        return Err(NomaError::ParameterDomain {
            name: "d",
            detail: format!(
                "distance must lie in (0, {}], got {d}",
                cfg.radius
            ),
        });
    }
    let (m0, k0) = (q.stream - 1, q.user_order - 1);
    let arg = q.scenario.stats.beta[m0] * d.powf(cfg.path_loss_exp)
        / (cfg.avg_snr * q.scenario.theta(group, m0, k0) * cfg.path_loss_ref);
    let value = regularized_lower_gamma(f64::from(q.scenario.detection_shape()), arg)?;
    Ok(OutageResult {
        value,
        method: OutageMethod::Conditional,
        err_est: None,
        regime_note: None,
    })
}

/// Density of the `k`-th nearest of `group_size` users placed uniformly on a
/// disc of radius `d_max`, evaluated at distance `x`:
/// `k C(K,k) (x^2/D^2)^(k-1) (1 - x^2/D^2)^(K-k) 2x/D^2`.
pub fn ordered_distance_pdf(k: usize, group_size: usize, d_max: f64, x: f64) -> Result<f64> {
    if k < 1 || k > group_size {
        return Err(NomaError::ParameterDomain {
            name: "k",
            detail: format!("need 1 <= k <= group_size, got k = {k}, group_size = {group_size}"),
        });
    }
    if !(d_max > 0.0) || !d_max.is_finite() {
        return Err(NomaError::ParameterDomain {
            name: "d_max",
            detail: format!("disc radius must be finite and > 0, got {d_max}"),
        });
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(NomaError::ParameterDomain {
            name: "x",
            detail: format!("evaluation point must be finite and >= 0, got {x}"),
        });
    }
    if x > d_max {
        return Err(NomaError::Domain(format!(
            "ordered-distance density evaluated at {x}, beyond the disc radius {d_max}"
        )));
    }
    let u = (x / d_max) * (x / d_max);
    let comb = binomial(group_size as u64, k as u64)?;
    Ok(k as f64
        * comb
        * u.powi((k - 1) as i32)
        * (1.0 - u).powi((group_size - k) as i32)
        * 2.0
        * x
        / (d_max * d_max))
}

/// Distance-averaged outage for a given group size, choosing the evaluation
/// route automatically: the alternating-series fast path where its argument
/// permits, the quadrature reference path beyond.
pub fn avg_outage_given_group(q: &OutageQuery<'_>) -> Result<OutageResult> {
    let group = q.require_group()?;
    let x = series_argument(q.scenario, q.stream - 1, group, q.user_order - 1);
    if x <= SeriesControl::default().switch_threshold {
        avg_outage_given_group_series(q)
    } else {
        avg_outage_given_group_quadrature(q)
    }
}

/// Fast path: the alternating binomial sum of residue series. Refuses
/// arguments beyond the series switch threshold.
pub fn avg_outage_given_group_series(q: &OutageQuery<'_>) -> Result<OutageResult> {
    let group = q.require_group()?;
    let (m0, k0) = (q.stream - 1, q.user_order - 1);
    let cfg = &q.scenario.cfg;
    let delta = q.scenario.detection_shape();
    let x = series_argument(q.scenario, m0, group, k0);
    let ctrl = SeriesControl::default();
    let k = q.user_order;

    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    for j in 0..=(group - k) {
        let coeff = binomial((group - k) as u64, j as u64)?;
        let r = residue_series(delta, x, k as u32, j as u32, cfg.path_loss_exp, &ctrl)?;
        let term = coeff * r;
        abs_sum += term.abs();
        sum += if j % 2 == 0 { term } else { -term };
    }
    let prefactor = 2.0 * k as f64 * binomial(group as u64, k as u64)? / gamma(f64::from(delta));
    let value = (prefactor * sum).clamp(0.0, 1.0);
    // Truncation plus alternating-cancellation round-off: partial sums of
    // the residue series grow like exp(x) relative to the result.
    let err = prefactor * abs_sum * f64::EPSILON * x.min(ctrl.switch_threshold).exp()
        + value * 2.0 * ctrl.rel_tol;
    Ok(OutageResult {
        value,
        method: OutageMethod::AveragedSeries,
        err_est: Some(err),
        regime_note: None,
    })
}

/// Reference path: adaptive quadrature of the conditional outage against the
/// ordered-distance density over the cell, no binomial expansion involved.
pub fn avg_outage_given_group_quadrature(q: &OutageQuery<'_>) -> Result<OutageResult> {
    let group = q.require_group()?;
    let (m0, k0) = (q.stream - 1, q.user_order - 1);
    let cfg = &q.scenario.cfg;
    let delta = f64::from(q.scenario.detection_shape());
    let d_max = cfg.radius;
    let alpha = cfg.path_loss_exp;
    let arg_coeff = q.scenario.stats.beta[m0]
        / (cfg.avg_snr * q.scenario.theta(group, m0, k0) * cfg.path_loss_ref);
    let k = q.user_order;
    let comb = binomial(group as u64, k as u64)?;

    let integrand = move |x: f64| -> f64 {
        let p = regularized_lower_gamma(delta, arg_coeff * x.powf(alpha)).unwrap_or(f64::NAN);
        let u = (x / d_max) * (x / d_max);
        p * k as f64
            * comb
            * u.powi((k - 1) as i32)
            * (1.0 - u).powi((group - k) as i32)
            * 2.0
            * x
            / (d_max * d_max)
    };
    let est = integrate_adaptive(integrand, 0.0, d_max, &AVG_QUAD_CTRL)?;
    Ok(OutageResult {
        value: est.value.clamp(0.0, 1.0),
        method: OutageMethod::AveragedQuadrature,
        err_est: Some(est.err_bound),
        regime_note: None,
    })
}

/// Distribution of the served group size: Poisson with mean `pi D^2 lambda`,
/// truncated by folding all mass at and beyond the cap into the top bin.
/// Entries sum to 1 by construction of the top bin.
pub fn group_size_pmf(cfg: &SystemConfig) -> Vec<f64> {
    let cap = cfg.group_cap;
    let mu = cfg.mean_user_count();
    let mut pmf = vec![0.0; cap + 1];
    let mut term = (-mu).exp();
    let mut head = 0.0;
    for (count, slot) in pmf.iter_mut().enumerate().take(cap) {
        *slot = term;
        head += term;
        term *= mu / (count + 1) as f64;
    }
    pmf[cap] = (1.0 - head).max(0.0);
    pmf
}

/// Probability that at least `k` users are served, i.e. that the user of
/// order `k` exists: the upper Poisson tail, exact for `k <= group_cap`.
pub fn group_size_at_least(cfg: &SystemConfig, k: usize) -> f64 {
    let mu = cfg.mean_user_count();
    let mut term = (-mu).exp();
    let mut head = 0.0;
    for count in 0..k {
        head += term;
        term *= mu / (count + 1) as f64;
    }
    (1.0 - head).max(0.0)
}

/// Average outage of the `user_order`-th nearest user, marginalized over the
/// group size: group sizes below `user_order` contribute nothing (that user
/// does not exist), each size `K >= user_order` contributes its weighted
/// distance-averaged outage.
pub fn avg_outage(q: &OutageQuery<'_>) -> Result<OutageResult> {
    q.require_mixed()?;
    let cfg = &q.scenario.cfg;
    let pmf = group_size_pmf(cfg);
    let mut value = 0.0;
    let mut err = 0.0;
    for group in q.user_order..=cfg.group_cap {
        let weight = pmf[group];
        if weight == 0.0 {
            continue;
        }
        let sub = OutageQuery::conditional(q.scenario, q.stream, q.user_order, group)?;
        let r = avg_outage_given_group(&sub)?;
        value += weight * r.value;
        err += weight * r.err_est.unwrap_or(0.0);
    }
    Ok(OutageResult {
        value,
        method: OutageMethod::PoissonMixed,
        err_est: Some(err),
        regime_note: None,
    })
}

/// Coefficient of `snr^-delta` in the high-SNR expansion of the
/// distance-averaged outage at group size `group_size`:
/// `(2k/Gamma(delta+1)) C(K,k) (beta_m D^alpha/(theta K))^delta`
/// times the alternating sum `sum_j (-1)^j C(K-k,j)/(alpha delta + 2(k+j))`,
/// which equals the integral `int_0^1 t^(alpha delta + 2k - 1) (1-t^2)^(K-k) dt`
/// and is therefore strictly positive.
pub fn high_snr_coefficient(
    scenario: &Scenario,
    stream: usize,
    group_size: usize,
    user_order: usize,
) -> Result<f64> {
    let q = OutageQuery::conditional(scenario, stream, user_order, group_size)?;
    let (m0, k0) = (stream - 1, user_order - 1);
    let cfg = &scenario.cfg;
    let delta = scenario.detection_shape();
    let alpha = cfg.path_loss_exp;
    let k = q.user_order;
    // Series argument with the SNR factored out.
    let x_unit = scenario.stats.beta[m0] * cfg.radius.powf(alpha)
        / (scenario.theta(group_size, m0, k0) * cfg.path_loss_ref);

    let mut s = 0.0;
    for j in 0..=(group_size - k) {
        let term = binomial((group_size - k) as u64, j as u64)?
            / (alpha * f64::from(delta) + 2.0 * (k + j) as f64);
        s += if j % 2 == 0 { term } else { -term };
    }
    Ok(2.0 * k as f64 * binomial(group_size as u64, k as u64)? / gamma(f64::from(delta) + 1.0)
        * x_unit.powi(delta as i32)
        * s)
}

/// Leading high-SNR term of the Poisson-mixed outage: `snr^-delta` times the
/// group-size-weighted mixture of [`high_snr_coefficient`]. The log-log
/// slope against SNR is exactly `-delta` — the diversity order.
pub fn asymptotic_outage_high_snr(q: &OutageQuery<'_>) -> Result<OutageResult> {
    q.require_mixed()?;
    let cfg = &q.scenario.cfg;
    let pmf = group_size_pmf(cfg);
    let delta = q.scenario.detection_shape();
    let mut coeff = 0.0;
    for group in q.user_order..=cfg.group_cap {
        if pmf[group] == 0.0 {
            continue;
        }
        coeff += pmf[group] * high_snr_coefficient(q.scenario, q.stream, group, q.user_order)?;
    }
    let value = cfg.avg_snr.powi(-(delta as i32)) * coeff;
    let regime_note = (!(0.0..=1.0).contains(&value)).then(|| {
        format!("high-SNR expansion value {value:.6e} lies outside [0, 1]; the configured SNR is below the expansion's regime")
    });
    Ok(OutageResult {
        value,
        method: OutageMethod::AsymptoticHighSnr,
        err_est: None,
        regime_note,
    })
}

/// Leading large-radius expansion of the Poisson-mixed outage. At large `D`
/// the group size concentrates on the cap `Q` and the full-group term
/// dominates; its complement expands in powers of the inverse argument:
/// `1 - C(Q,k) (k/Gamma(delta)) sum_j (-1)^j C(Q-k,j) Gamma(delta + 2(k+j)/alpha)/(k+j) X^(-2(k+j)/alpha)`.
pub fn asymptotic_outage_large_d(q: &OutageQuery<'_>) -> Result<OutageResult> {
    q.require_mixed()?;
    let cfg = &q.scenario.cfg;
    let cap = cfg.group_cap;
    let (m0, k0) = (q.stream - 1, q.user_order - 1);
    let delta = f64::from(q.scenario.detection_shape());
    let alpha = cfg.path_loss_exp;
    let k = q.user_order;
    let x = series_argument(q.scenario, m0, cap, k0);

    let mut s = 0.0;
    for j in 0..=(cap - k) {
        let kj = (k + j) as f64;
        let term = binomial((cap - k) as u64, j as u64)? * gamma(delta + 2.0 * kj / alpha) / kj
            * x.powf(-2.0 * kj / alpha);
        s += if j % 2 == 0 { term } else { -term };
    }
    let value = 1.0 - binomial(cap as u64, k as u64)? * k as f64 / gamma(delta) * s;
    let regime_note = (!(0.0..=1.0).contains(&value)).then(|| {
        format!("large-radius expansion value {value:.6e} lies outside [0, 1]; the configured radius is below the expansion's regime")
    });
    Ok(OutageResult {
        value,
        method: OutageMethod::AsymptoticLargeD,
        err_est: None,
        regime_note,
    })
}

/// Average goodput in bits per transmission: each `(stream, user order)`
/// pair delivers its target rate whenever the user exists and is not in
/// outage. The exact method evaluates
/// `sum_m sum_k (Pr(group >= k) - avg_outage_mk) R_mk`; the small-radius
/// method drops the (vanishing) outage terms; the large-radius method keeps
/// the leading complement of the full-group outage, which decays as
/// `D^-2k` per term.
pub fn goodput(scenario: &Scenario, method: GoodputMethod) -> Result<GoodputResult> {
    let cfg = &scenario.cfg;
    let delta = f64::from(scenario.detection_shape());
    let alpha = cfg.path_loss_exp;
    let mut per_term = Vec::with_capacity(cfg.n_streams * cfg.group_cap);
    let mut total = 0.0;
    for stream in 1..=cfg.n_streams {
        for k in 1..=cfg.group_cap {
            let rate = cfg.rates.at(stream - 1, k - 1);
            let value = match method {
                GoodputMethod::Exact => {
                    let q = OutageQuery::mixed(scenario, stream, k)?;
                    (group_size_at_least(cfg, k) - avg_outage(&q)?.value) * rate
                }
                GoodputMethod::AsymptoticSmallD => group_size_at_least(cfg, k) * rate,
                GoodputMethod::AsymptoticLargeD => {
                    let x = series_argument(scenario, stream - 1, cfg.group_cap, k - 1);
                    binomial(cfg.group_cap as u64, k as u64)?
                        * gamma(delta + 2.0 * k as f64 / alpha)
                        / gamma(delta)
                        * x.powf(-2.0 * k as f64 / alpha)
                        * rate
                }
            };
            per_term.push(GoodputTerm {
                stream,
                user_order: k,
                value,
            });
            total += value;
        }
    }
    Ok(GoodputResult {
        value: total,
        per_term,
        method,
    })
}

/// Exact binomial coefficient as a big integer (`n` up to 60 here, but the
/// multiplicative form is exact for any size).
fn big_binomial(n: usize, k: usize) -> BigInt {
    let k = k.min(n - k);
    let mut c = BigInt::from(1);
    for i in 1..=k {
        // Each intermediate value is itself a binomial coefficient, so the
        // division is exact.
        c = c * BigInt::from(n - k + i) / BigInt::from(i);
    }
    c
}

/// The normalization identity of the ordered-distance averaging:
/// `C(K,k) sum_j (-1)^j C(K-k,j) k/(k+j) = 1`, evaluated in exact rational
/// arithmetic and returned as a float (exactly 1.0 when the identity holds).
pub fn combinatorial_identity(group_size: usize, k: usize) -> Result<f64> {
    if k < 1 || k > group_size || group_size > 60 {
        return Err(NomaError::ParameterDomain {
            name: "k",
            detail: format!(
                "need 1 <= k <= group_size <= 60, got k = {k}, group_size = {group_size}"
            ),
        });
    }
    let mut acc = BigRational::zero();
    for j in 0..=(group_size - k) {
        let mut numer = big_binomial(group_size - k, j) * BigInt::from(k);
        if j % 2 == 1 {
            numer = -numer;
        }
        acc += BigRational::new(numer, BigInt::from(k + j));
    }
    acc *= BigRational::from(big_binomial(group_size, k));
    acc.to_f64().ok_or_else(|| {
        NomaError::Domain("combinatorial identity value does not fit a float".to_string())
    })
}

/// Least-squares slope of `log10(outage)` against `log10(snr)`, negated:
/// the empirical diversity order of an outage curve.
pub fn fit_diversity_order(curve: &[(f64, f64)]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(NomaError::ParameterDomain {
            name: "curve",
            detail: format!("need at least two points, got {}", curve.len()),
        });
    }
    for &(snr, p) in curve {
        if !(snr > 0.0) || !snr.is_finite() || !(p > 0.0) || !p.is_finite() {
            return Err(NomaError::Domain(format!(
                "log-log slope fit requires finite positive coordinates, got ({snr}, {p})"
            )));
        }
    }
    let n = curve.len() as f64;
    let xs: Vec<f64> = curve.iter().map(|&(snr, _)| snr.log10()).collect();
    let ys: Vec<f64> = curve.iter().map(|&(_, p)| p.log10()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let numer: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let denom: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if denom == 0.0 {
        return Err(NomaError::Domain(
            "log-log slope fit requires at least two distinct abscissae".to_string(),
        ));
    }
    Ok(-(numer / denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RateMatrix, SystemConfig};

    // Reference values computed with an independent 50-digit implementation
    // of the same formulas.
    const REF_COND_30: f64 = 0.214_374_673_257_689_58;
    const REF_PBAR: [(usize, usize, f64); 6] = [
        (1, 1, 0.001_384_026_726_543_138_2),
        (2, 1, 0.027_434_707_873_950_637),
        (2, 2, 0.008_362_439_226_567_641_7),
        (3, 1, 0.263_523_174_381_006_84),
        (3, 2, 0.155_689_723_670_160_98),
        (3, 3, 0.010_406_699_188_223_275),
    ];
    const REF_PTILDE_60DB: [f64; 3] = [
        0.148_247_362_495_895_86,
        0.085_592_370_205_521_679,
        0.005_589_021_804_074_811_7,
    ];
    const REF_PTILDE_50DB_K1: f64 = 0.527_643_815_895_774_94;
    const REF_PMF_30: [f64; 4] = [
        0.059_164_511_294_077_579,
        0.167_283_714_631_234_03,
        0.236_491_780_027_813_3,
        0.537_059_994_046_875_1,
    ];
    const REF_TAIL_30: [f64; 3] = [
        0.940_835_488_705_922_42,
        0.773_551_774_074_688_4,
        0.537_059_994_046_875_1,
    ];
    const REF_HIGH_SNR_COEFF: [(usize, usize, f64); 5] = [
        (1, 1, 1_458_000_000.0),
        (2, 1, 37_324_800_000.0),
        (3, 1, 1_194_393_600_000.0),
        (3, 2, 298_598_400_000.0),
        (3, 3, 11_664_000_000.0),
    ];
    const REF_ASYM_HIGH_100DB: f64 = 6.505_319_277_527_401_8e-9;
    const REF_ASYM_HIGH_60DB: f64 = 0.650_531_927_752_740_18;
    const REF_EXACT_100DB: f64 = 6.503_993_703_850_966_8e-9;
    const REF_ASYM_LARGE_D1000: [f64; 3] = [
        0.998_880_966_682_764_35,
        0.999_996_747_275_218_24,
        0.999_999_906_25,
    ];
    const REF_ASYM_Q1_D3000: f64 = 0.999_336_565_357_551_09;
    const REF_GOODPUT_30: f64 = 8.048_074_009_287_974_3;
    const REF_GOODPUT_TERMS_30: [f64; 3] = [
        1.585_176_252_420_053_1,
        1.375_918_807_738_333_4,
        1.062_941_944_485_600_6,
    ];
    const REF_GOODPUT_1: f64 = 0.012_566_370_598_128_539;
    const REF_GOODPUT_1000: f64 = 0.004_489_519_168_069_648_6;
    const REF_BOUND_1: f64 = 0.012_566_370_598_154_894;
    const REF_BOUND_30: f64 = 9.005_789_027_309_943_6;
    const REF_GOODPUT_LARGE_D1000: f64 = 0.004_491_581_454_407_215_4;
    const REF_GOODPUT_BY_RHO: [(f64, f64); 4] = [
        (0.0, 8.324_935_934_720_522_5),
        (0.25, 8.268_616_626_244_251_9),
        (0.5, 8.048_074_009_287_974_3),
        (0.75, 7.346_192_967_083_605_2),
    ];

    fn defaults() -> Scenario {
        Scenario::from_config(SystemConfig::default()).unwrap()
    }

    fn scenario_with(adjust: impl FnOnce(&mut SystemConfig)) -> Scenario {
        let mut cfg = SystemConfig::default();
        adjust(&mut cfg);
        Scenario::from_config(cfg).unwrap()
    }

    fn assert_rel(actual: f64, expected: f64, tol: f64, what: &str) {
        let rel = (actual - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
        assert!(
            rel <= tol,
            "{what}: got {actual:e}, expected {expected:e} (rel {rel:e} > {tol:e})"
        );
    }

    #[test]
    fn conditional_outage_reference_value() {
        let sc = defaults();
        let q = OutageQuery::conditional(&sc, 1, 1, 2).unwrap();
        let r = conditional_outage(&q, 30.0).unwrap();
        assert_rel(r.value, REF_COND_30, 1e-12, "conditional outage at cell edge");
        assert_eq!(r.method, OutageMethod::Conditional);
        assert_eq!(r.method.tag(), "conditional");
        assert!(r.err_est.is_none() && r.regime_note.is_none());
    }

    #[test]
    fn conditional_outage_exponential_special_case() {
        // One excess receive antenna fewer: shape 1, so the outage is
        // 1 - exp(-arg) exactly.
        let sc = scenario_with(|cfg| cfg.n_rx = 2);
        assert_eq!(sc.detection_shape(), 1);
        let q = OutageQuery::conditional(&sc, 1, 1, 2).unwrap();
        for &d in &[0.5, 3.0, 17.0, 30.0] {
            let r = conditional_outage(&q, d).unwrap();
            let arg = sc.stats.beta[0] * d.powi(3) / (1e6 * sc.theta(2, 0, 0));
            // exp_m1 keeps the reference accurate when arg is tiny.
            assert_rel(r.value, -(-arg).exp_m1(), 1e-12, "shape-1 closed form");
        }
    }

    #[test]
    fn conditional_outage_monotone_and_vanishing_at_high_snr() {
        let sc = defaults();
        let q = OutageQuery::conditional(&sc, 1, 1, 3).unwrap();
        let mut prev = 0.0;
        for i in 1..=30 {
            let d = f64::from(i);
            let v = conditional_outage(&q, d).unwrap().value;
            assert!(v >= prev, "not monotone in d at {d}");
            prev = v;
        }

        let hot = scenario_with(|cfg| cfg.avg_snr = 1e30);
        let q = OutageQuery::conditional(&hot, 1, 1, 3).unwrap();
        assert!(conditional_outage(&q, 30.0).unwrap().value < 1e-40);

        // Decreasing in SNR.
        let mut prev = 1.0;
        for &snr in &[1e4, 1e5, 1e6, 1e7] {
            let sc = scenario_with(|cfg| cfg.avg_snr = snr);
            let q = OutageQuery::conditional(&sc, 1, 1, 3).unwrap();
            let v = conditional_outage(&q, 30.0).unwrap().value;
            assert!(v <= prev, "not decreasing in snr at {snr}");
            prev = v;
        }
    }

    #[test]
    fn conditional_outage_rejects_bad_distances() {
        let sc = defaults();
        let q = OutageQuery::conditional(&sc, 1, 1, 2).unwrap();
        assert!(matches!(
            conditional_outage(&q, 0.0),
            Err(NomaError::SingularDistance)
        ));
        assert!(matches!(
            conditional_outage(&q, 31.0),
            Err(NomaError::ParameterDomain { name: "d", .. })
        ));
        let mixed = OutageQuery::mixed(&sc, 1, 1).unwrap();
        assert!(matches!(
            conditional_outage(&mixed, 10.0),
            Err(NomaError::ParameterDomain {
                name: "group_size",
                ..
            })
        ));
    }

    #[test]
    fn query_constructors_validate_indices() {
        let sc = defaults();
        assert!(OutageQuery::conditional(&sc, 0, 1, 2).is_err());
        assert!(OutageQuery::conditional(&sc, 3, 1, 2).is_err());
        assert!(OutageQuery::conditional(&sc, 1, 3, 2).is_err());
        assert!(OutageQuery::conditional(&sc, 1, 1, 4).is_err());
        assert!(OutageQuery::conditional(&sc, 2, 3, 3).is_ok());
        assert!(OutageQuery::mixed(&sc, 1, 4).is_err());
        assert!(OutageQuery::mixed(&sc, 2, 3).is_ok());
    }

    #[test]
    fn ordered_distance_pdf_closed_forms() {
        // Single user: 2x/D^2.
        for &x in &[0.0, 1.0, 15.0, 30.0] {
            assert_rel(
                ordered_distance_pdf(1, 1, 30.0, x).unwrap().max(1e-300),
                (2.0 * x / 900.0).max(1e-300),
                1e-14,
                "single-user density",
            );
        }
        // Farther of two: 4x^3/D^4.
        for &x in &[0.5, 10.0, 29.0] {
            assert_rel(
                ordered_distance_pdf(2, 2, 30.0, x).unwrap(),
                4.0 * x.powi(3) / 810_000.0,
                1e-14,
                "second-of-two density",
            );
        }
        assert!(matches!(
            ordered_distance_pdf(1, 1, 30.0, 30.5),
            Err(NomaError::Domain(_))
        ));
        assert!(ordered_distance_pdf(3, 2, 30.0, 1.0).is_err());
    }

    #[test]
    fn ordered_distance_pdf_normalizes() {
        let ctrl = QuadratureControl::default();
        for group in 1..=4usize {
            for k in 1..=group {
                let est = integrate_adaptive(
                    |x| ordered_distance_pdf(k, group, 30.0, x).unwrap(),
                    0.0,
                    30.0,
                    &ctrl,
                )
                .unwrap();
                assert!(
                    (est.value - 1.0).abs() < 1e-9,
                    "density (k={k}, group={group}) integrates to {}",
                    est.value
                );
            }
        }
    }

    #[test]
    fn averaged_outage_reference_values_series() {
        let sc = defaults();
        for &(group, k, expected) in &REF_PBAR {
            let q = OutageQuery::conditional(&sc, 1, k, group).unwrap();
            let r = avg_outage_given_group(&q).unwrap();
            assert_eq!(r.method, OutageMethod::AveragedSeries, "K={group} k={k}");
            assert_rel(r.value, expected, 1e-9, &format!("pbar series K={group} k={k}"));
            let err = r.err_est.expect("series path carries an error bound");
            assert!(err > 0.0 && err < 1e-6);
            // Second stream is statistically identical at the defaults.
            let q2 = OutageQuery::conditional(&sc, 2, k, group).unwrap();
            assert_eq!(avg_outage_given_group(&q2).unwrap().value, r.value);
        }
    }

    #[test]
    fn averaged_outage_reference_values_quadrature() {
        let sc = defaults();
        for &(group, k, expected) in &REF_PBAR {
            let q = OutageQuery::conditional(&sc, 1, k, group).unwrap();
            let r = avg_outage_given_group_quadrature(&q).unwrap();
            assert_eq!(r.method, OutageMethod::AveragedQuadrature);
            assert_rel(r.value, expected, 1e-9, &format!("pbar quad K={group} k={k}"));
            assert!(r.err_est.unwrap() < 1e-10);
        }
    }

    #[test]
    fn averaged_outage_series_quadrature_cross_check() {
        let sc = defaults();
        let q = OutageQuery::conditional(&sc, 1, 1, 3).unwrap();
        let series = avg_outage_given_group_series(&q).unwrap().value;
        let quad = avg_outage_given_group_quadrature(&q).unwrap().value;
        assert_rel(series, quad, 1e-8, "series vs quadrature at the defaults");
    }

    #[test]
    fn averaged_outage_routes_by_argument_size() {
        // At the defaults the argument is 6.912 <= 20: series path.
        let sc = defaults();
        let q = OutageQuery::conditional(&sc, 1, 1, 3).unwrap();
        assert_eq!(
            avg_outage_given_group(&q).unwrap().method,
            OutageMethod::AveragedSeries
        );
        // Ten times the radius pushes the argument to 6912: quadrature.
        let far = scenario_with(|cfg| cfg.radius = 300.0);
        let q = OutageQuery::conditional(&far, 1, 1, 3).unwrap();
        assert_eq!(
            avg_outage_given_group(&q).unwrap().method,
            OutageMethod::AveragedQuadrature
        );
        // The explicit series path refuses that argument.
        assert!(matches!(
            avg_outage_given_group_series(&q),
            Err(NomaError::SeriesRangeRefused { .. })
        ));
    }

    #[test]
    fn averaged_outage_vanishes_at_extreme_snr() {
        let hot = scenario_with(|cfg| cfg.avg_snr = 1e30);
        let q = OutageQuery::conditional(&hot, 1, 1, 3).unwrap();
        let r = avg_outage_given_group(&q).unwrap();
        assert_eq!(r.method, OutageMethod::AveragedSeries);
        assert!(r.value < 1e-40, "got {}", r.value);
    }

    #[test]
    fn averaged_outage_small_radius_power_law() {
        // Conditioned on the group size, the averaged outage scales as
        // D^(alpha * delta): halving the radius divides it by 2^6.
        let lo = scenario_with(|cfg| cfg.radius = 0.01);
        let hi = scenario_with(|cfg| cfg.radius = 0.02);
        let q_lo = OutageQuery::conditional(&lo, 1, 1, 3).unwrap();
        let q_hi = OutageQuery::conditional(&hi, 1, 1, 3).unwrap();
        let ratio = avg_outage_given_group(&q_hi).unwrap().value
            / avg_outage_given_group(&q_lo).unwrap().value;
        assert_rel(ratio, 64.0, 1e-2, "conditional small-radius scaling");

        // The group-size mixture adds Pr(group = k) ~ D^2k: slope 8 for the
        // nearest user, so the ratio becomes 2^8.
        let m_lo = OutageQuery::mixed(&lo, 1, 1).unwrap();
        let m_hi = OutageQuery::mixed(&hi, 1, 1).unwrap();
        let ratio = avg_outage(&m_hi).unwrap().value / avg_outage(&m_lo).unwrap().value;
        assert_rel(ratio, 256.0, 1e-2, "mixed small-radius scaling");
    }

    #[test]
    fn averaged_outage_monotone_in_snr_and_radius() {
        let mut prev = 1.0;
        for i in 0..=8 {
            let snr = 10f64.powf(5.0 + 0.5 * f64::from(i));
            let sc = scenario_with(|cfg| cfg.avg_snr = snr);
            let q = OutageQuery::conditional(&sc, 1, 1, 3).unwrap();
            let v = avg_outage_given_group(&q).unwrap().value;
            assert!(v <= prev + 1e-15, "not non-increasing in snr at {snr}");
            prev = v;
        }
        let mut prev = 0.0;
        for i in 1..=10 {
            let radius = 5.0 * f64::from(i);
            let sc = scenario_with(|cfg| cfg.radius = radius);
            let q = OutageQuery::conditional(&sc, 1, 1, 3).unwrap();
            let v = avg_outage_given_group(&q).unwrap().value;
            assert!(v >= prev - 1e-15, "not non-decreasing in radius at {radius}");
            prev = v;
        }
    }

    #[test]
    fn group_size_pmf_reference_values() {
        let cfg = SystemConfig::default();
        let pmf = group_size_pmf(&cfg);
        assert_eq!(pmf.len(), 4);
        for (k, (&got, &expected)) in pmf.iter().zip(&REF_PMF_30).enumerate() {
            assert_rel(got, expected, 1e-13, &format!("pmf[{k}]"));
        }
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for (k, &expected) in REF_TAIL_30.iter().enumerate() {
            assert_rel(
                group_size_at_least(&cfg, k + 1),
                expected,
                1e-13,
                &format!("tail {}", k + 1),
            );
        }
        assert_eq!(group_size_at_least(&cfg, 0), 1.0);
    }

    #[test]
    fn group_size_pmf_degenerate_intensities() {
        let mut cfg = SystemConfig::default();
        cfg.intensity = 1e-300;
        let pmf = group_size_pmf(&cfg);
        assert_eq!(pmf[0], 1.0);
        assert!(pmf[1..].iter().all(|&p| p < 1e-290));

        // Mean around 3.1e6 underflows every head term; all mass lands in
        // the top bin, and normalization is preserved exactly.
        cfg.intensity = 1.0;
        cfg.radius = 1000.0;
        let pmf = group_size_pmf(&cfg);
        assert_eq!(pmf, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn mixed_outage_reference_values() {
        let sc = defaults();
        for (k0, &expected) in REF_PTILDE_60DB.iter().enumerate() {
            let q = OutageQuery::mixed(&sc, 1, k0 + 1).unwrap();
            let r = avg_outage(&q).unwrap();
            assert_eq!(r.method, OutageMethod::PoissonMixed);
            assert_rel(r.value, expected, 1e-9, &format!("mixed outage k={}", k0 + 1));
            assert!(r.err_est.unwrap() < 1e-8);
        }
        let cold = scenario_with(|cfg| cfg.avg_snr = 1e5);
        let q = OutageQuery::mixed(&cold, 1, 1).unwrap();
        assert_rel(
            avg_outage(&q).unwrap().value,
            REF_PTILDE_50DB_K1,
            1e-9,
            "mixed outage at the lower reference snr",
        );
    }

    #[test]
    fn mixed_outage_reduces_to_top_term_for_last_user() {
        let sc = defaults();
        let q = OutageQuery::mixed(&sc, 1, 3).unwrap();
        let whole = avg_outage(&q).unwrap().value;
        let top = OutageQuery::conditional(&sc, 1, 3, 3).unwrap();
        let expected =
            group_size_pmf(&sc.cfg)[3] * avg_outage_given_group(&top).unwrap().value;
        assert_rel(whole, expected, 1e-12, "single-term reduction at k = cap");
    }

    #[test]
    fn mixed_outage_vanishes_with_intensity() {
        let empty = scenario_with(|cfg| cfg.intensity = 1e-30);
        let q = OutageQuery::mixed(&empty, 1, 1).unwrap();
        assert!(avg_outage(&q).unwrap().value < 1e-29);
    }

    #[test]
    fn mixed_outage_rejects_conditional_query() {
        let sc = defaults();
        let q = OutageQuery::conditional(&sc, 1, 1, 2).unwrap();
        assert!(matches!(
            avg_outage(&q),
            Err(NomaError::ParameterDomain {
                name: "group_size",
                ..
            })
        ));
    }

    #[test]
    fn high_snr_coefficient_unit_example() {
        // Unit system: rate 1 makes the single-user threshold exactly 1,
        // uncorrelated antennas make beta 1, unit radius and reference
        // loss leave the coefficient (2/Gamma(3)) * 1/8 = 0.125.
        let sc = scenario_with(|cfg| {
            cfg.rates = RateMatrix::uniform(2, 3, 1.0).unwrap();
            cfg.corr_coeff = 0.0;
            cfg.radius = 1.0;
            cfg.group_cap = 3;
        });
        // Only the K=1 table has theta = 1; query (m=1, K=1, k=1).
        assert_rel(sc.theta(1, 0, 0), 1.0, 1e-14, "unit threshold");
        let v = high_snr_coefficient(&sc, 1, 1, 1).unwrap();
        assert_rel(v, 0.125, 1e-13, "unit high-snr coefficient");
    }

    #[test]
    fn high_snr_coefficient_reference_values() {
        let sc = defaults();
        for &(group, k, expected) in &REF_HIGH_SNR_COEFF {
            let v = high_snr_coefficient(&sc, 1, group, k).unwrap();
            assert_rel(v, expected, 1e-12, &format!("coefficient K={group} k={k}"));
            assert!(v > 0.0);
        }
    }

    #[test]
    fn high_snr_coefficient_radius_power_law() {
        let base = defaults();
        let doubled = scenario_with(|cfg| cfg.radius = 60.0);
        let ratio = high_snr_coefficient(&doubled, 1, 1, 1).unwrap()
            / high_snr_coefficient(&base, 1, 1, 1).unwrap();
        // alpha * delta = 6 radius powers.
        assert_rel(ratio, 64.0, 1e-12, "coefficient radius scaling");
    }

    #[test]
    fn asymptotic_high_snr_reference_values() {
        let sc100 = scenario_with(|cfg| cfg.avg_snr = 1e10);
        let q = OutageQuery::mixed(&sc100, 1, 1).unwrap();
        let r = asymptotic_outage_high_snr(&q).unwrap();
        assert_eq!(r.method, OutageMethod::AsymptoticHighSnr);
        assert_rel(r.value, REF_ASYM_HIGH_100DB, 1e-12, "asymptote at high snr");
        assert!(r.regime_note.is_none() && r.err_est.is_none());

        // Within 1% of the exact value there.
        let exact = avg_outage(&q).unwrap().value;
        assert_rel(exact, REF_EXACT_100DB, 1e-9, "exact outage at high snr");
        assert!((r.value / exact - 1.0).abs() < 0.01);

        let sc60 = defaults();
        let q = OutageQuery::mixed(&sc60, 1, 1).unwrap();
        let r = asymptotic_outage_high_snr(&q).unwrap();
        assert_rel(r.value, REF_ASYM_HIGH_60DB, 1e-12, "asymptote at the defaults");
        assert!(r.regime_note.is_none());

        // Far below the regime the value exceeds 1 and says so.
        let sc30 = scenario_with(|cfg| cfg.avg_snr = 1e3);
        let q = OutageQuery::mixed(&sc30, 1, 1).unwrap();
        let r = asymptotic_outage_high_snr(&q).unwrap();
        assert!(r.value > 1.0);
        assert!(r.regime_note.unwrap().contains("outside [0, 1]"));
    }

    #[test]
    fn asymptotic_high_snr_slope_is_exact() {
        let curve: Vec<(f64, f64)> = [1e6, 1e7, 1e8]
            .iter()
            .map(|&snr| {
                let sc = scenario_with(|cfg| cfg.avg_snr = snr);
                let q = OutageQuery::mixed(&sc, 1, 1).unwrap();
                (snr, asymptotic_outage_high_snr(&q).unwrap().value)
            })
            .collect();
        let order = fit_diversity_order(&curve).unwrap();
        assert!((order - 2.0).abs() < 1e-10, "got {order}");
    }

    #[test]
    fn asymptotic_large_radius_reference_values() {
        let far = scenario_with(|cfg| cfg.radius = 1000.0);
        for (k0, &expected) in REF_ASYM_LARGE_D1000.iter().enumerate() {
            let q = OutageQuery::mixed(&far, 1, k0 + 1).unwrap();
            let r = asymptotic_outage_large_d(&q).unwrap();
            assert_eq!(r.method, OutageMethod::AsymptoticLargeD);
            assert_rel(r.value, expected, 1e-12, &format!("large-radius k={}", k0 + 1));
            assert!(r.regime_note.is_none());
        }

        // Complement agrees with the exact engine (quadrature route) to
        // within the expansion's exponentially small remainder.
        let q = OutageQuery::mixed(&far, 1, 1).unwrap();
        let exact = avg_outage(&q).unwrap().value;
        let asym = asymptotic_outage_large_d(&q).unwrap().value;
        let ratio = (1.0 - asym) / (1.0 - exact);
        assert!((ratio - 1.0).abs() < 1e-3, "complement ratio {ratio}");
    }

    #[test]
    fn asymptotic_large_radius_limit_and_regime_note() {
        let very_far = scenario_with(|cfg| cfg.radius = 1e5);
        let q = OutageQuery::mixed(&very_far, 1, 1).unwrap();
        let v = asymptotic_outage_large_d(&q).unwrap().value;
        assert!(v > 0.99999 && v <= 1.0, "got {v}");

        // A small cell is far outside the expansion's regime: the value
        // plunges below zero and the note reports it.
        let near = scenario_with(|cfg| cfg.radius = 1.0);
        let q = OutageQuery::mixed(&near, 1, 1).unwrap();
        let r = asymptotic_outage_large_d(&q).unwrap();
        assert!(r.value < 0.0);
        assert!(r.regime_note.unwrap().contains("outside [0, 1]"));
    }

    #[test]
    fn asymptotic_large_radius_single_user_cell() {
        // Cap of one: the expansion reduces to the first-order large-x
        // expansion of the single-user averaged outage.
        let sc = scenario_with(|cfg| {
            cfg.group_cap = 1;
            cfg.rates = RateMatrix::uniform(2, 1, 2.0).unwrap();
            cfg.radius = 3000.0;
        });
        let q = OutageQuery::mixed(&sc, 1, 1).unwrap();
        let asym = asymptotic_outage_large_d(&q).unwrap().value;
        assert_rel(asym, REF_ASYM_Q1_D3000, 1e-12, "single-user large-radius");
        let cond = OutageQuery::conditional(&sc, 1, 1, 1).unwrap();
        let quad = avg_outage_given_group_quadrature(&cond).unwrap().value;
        let ratio = (1.0 - asym) / (1.0 - quad);
        assert!((ratio - 1.0).abs() < 1e-6, "complement ratio {ratio}");
    }

    #[test]
    fn goodput_reference_values() {
        let sc = defaults();
        let g = goodput(&sc, GoodputMethod::Exact).unwrap();
        assert_eq!(g.method, GoodputMethod::Exact);
        assert_eq!(g.method.tag(), "exact");
        assert_rel(g.value, REF_GOODPUT_30, 1e-9, "goodput at the defaults");
        assert_eq!(g.per_term.len(), 6);
        let total: f64 = g.per_term.iter().map(|t| t.value).sum();
        assert!((total - g.value).abs() < 1e-12);
        for term in &g.per_term {
            assert!(term.value >= 0.0);
            assert_rel(
                term.value,
                REF_GOODPUT_TERMS_30[term.user_order - 1],
                1e-9,
                &format!("term ({}, {})", term.stream, term.user_order),
            );
        }
        // Ordered by (stream, user_order).
        let order: Vec<(usize, usize)> =
            g.per_term.iter().map(|t| (t.stream, t.user_order)).collect();
        assert_eq!(order, vec![(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3)]);
    }

    #[test]
    fn goodput_reference_values_across_radii() {
        let near = scenario_with(|cfg| cfg.radius = 1.0);
        assert_rel(
            goodput(&near, GoodputMethod::Exact).unwrap().value,
            REF_GOODPUT_1,
            1e-11,
            "goodput in a unit cell",
        );
        let far = scenario_with(|cfg| cfg.radius = 1000.0);
        assert_rel(
            goodput(&far, GoodputMethod::Exact).unwrap().value,
            REF_GOODPUT_1000,
            1e-7,
            "goodput in a kilometer cell",
        );
    }

    #[test]
    fn goodput_small_radius_method_is_occupancy_bound() {
        let near = scenario_with(|cfg| cfg.radius = 1.0);
        let bound = goodput(&near, GoodputMethod::AsymptoticSmallD).unwrap();
        assert_eq!(bound.method.tag(), "asymptotic-small-D");
        assert_rel(bound.value, REF_BOUND_1, 1e-12, "occupancy bound, unit cell");

        let sc = defaults();
        let bound = goodput(&sc, GoodputMethod::AsymptoticSmallD).unwrap();
        assert_rel(bound.value, REF_BOUND_30, 1e-12, "occupancy bound at defaults");
        // The exact goodput never exceeds the outage-free bound.
        let exact = goodput(&sc, GoodputMethod::Exact).unwrap();
        assert!(exact.value <= bound.value);
    }

    #[test]
    fn goodput_large_radius_method_reference() {
        let far = scenario_with(|cfg| cfg.radius = 1000.0);
        let asym = goodput(&far, GoodputMethod::AsymptoticLargeD).unwrap();
        assert_eq!(asym.method.tag(), "asymptotic-large-D");
        assert_rel(
            asym.value,
            REF_GOODPUT_LARGE_D1000,
            1e-12,
            "large-radius goodput expansion",
        );
        let exact = goodput(&far, GoodputMethod::Exact).unwrap();
        assert!((asym.value / exact.value - 1.0).abs() < 0.01);
    }

    #[test]
    fn goodput_bound_everywhere_and_empty_cell() {
        for &radius in &[5.0, 30.0, 100.0] {
            for &rho in &[0.0, 0.5] {
                let sc = scenario_with(|cfg| {
                    cfg.radius = radius;
                    cfg.corr_coeff = rho;
                });
                let exact = goodput(&sc, GoodputMethod::Exact).unwrap();
                let bound = goodput(&sc, GoodputMethod::AsymptoticSmallD).unwrap();
                assert!(exact.value <= bound.value, "radius {radius}, rho {rho}");
                assert!(exact.per_term.iter().all(|t| t.value >= -1e-12));
            }
        }
        let empty = scenario_with(|cfg| cfg.intensity = 1e-30);
        assert!(goodput(&empty, GoodputMethod::Exact).unwrap().value < 1e-20);
    }

    #[test]
    fn goodput_reference_values_across_correlation() {
        let mut prev = f64::INFINITY;
        for &(rho, expected) in &REF_GOODPUT_BY_RHO {
            let sc = scenario_with(|cfg| cfg.corr_coeff = rho);
            let g = goodput(&sc, GoodputMethod::Exact).unwrap().value;
            assert_rel(g, expected, 1e-9, &format!("goodput at rho = {rho}"));
            assert!(g < prev, "not strictly decreasing at rho = {rho}");
            prev = g;
        }
    }

    #[test]
    fn combinatorial_identity_exact() {
        for group in 1..=20usize {
            for k in 1..=group {
                let v = combinatorial_identity(group, k).unwrap();
                assert_eq!(v, 1.0, "identity broke at K={group}, k={k}");
            }
        }
        assert_eq!(combinatorial_identity(60, 17).unwrap(), 1.0);
        assert_eq!(combinatorial_identity(3, 2).unwrap(), 1.0);
        assert!(combinatorial_identity(3, 0).is_err());
        assert!(combinatorial_identity(3, 4).is_err());
        assert!(combinatorial_identity(61, 1).is_err());
    }

    #[test]
    fn diversity_fit_recovers_synthetic_power_law() {
        let curve: Vec<(f64, f64)> = (0..6)
            .map(|i| {
                let snr = 10f64.powf(5.0 + 0.5 * f64::from(i));
                (snr, 3.7 * snr.powf(-2.0))
            })
            .collect();
        let order = fit_diversity_order(&curve).unwrap();
        assert!((order - 2.0).abs() < 1e-12, "got {order}");

        assert!(fit_diversity_order(&[(1e6, 0.5)]).is_err());
        assert!(fit_diversity_order(&[(1e6, 0.5), (1e7, 0.0)]).is_err());
        assert!(fit_diversity_order(&[(1e6, 0.5), (1e6, 0.4)]).is_err());
    }

    #[test]
    fn diversity_fit_on_exact_engine_matches_theory_deep_in_regime() {
        // Over 90-100 dB the exact curve's fitted slope settles onto the
        // detection shape.
        let curve: Vec<(f64, f64)> = (0..5)
            .map(|i| {
                let snr = 10f64.powf(9.0 + 0.25 * f64::from(i));
                let sc = scenario_with(|cfg| cfg.avg_snr = snr);
                let q = OutageQuery::mixed(&sc, 1, 1).unwrap();
                (snr, avg_outage(&q).unwrap().value)
            })
            .collect();
        let order = fit_diversity_order(&curve).unwrap();
        assert!((order - 2.0).abs() < 1e-2, "got {order}");
    }
}
