//! Trial-level link simulation: Poisson user deployments on the disc,
//! Kronecker-correlated Rayleigh channels, zero-forcing detection with
//! successive interference cancellation, and outage/goodput estimators
//! whose results are bit-for-bit reproducible for a given seed regardless
//! of worker-thread count.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{NomaError, Result};
use crate::model::{path_loss, EffectiveChannelStats, Scenario, SystemConfig};
use crate::stats::{normal_interval, wilson_interval, Z_99};

/// Everything observable about one simulated transmission interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Served group size: the Poisson count capped at the group limit.
    pub user_count: usize,
    /// User distances sorted ascending (nearest first); one per served user.
    pub distances: Vec<f64>,
    /// Zero-forcing noise amplification per user and stream:
    /// `[(HV)^H HV]^-1` diagonal entries, all strictly positive.
    pub zf_noise_amp: Vec<Vec<f64>>,
    /// Outage flag per user and stream.
    pub outage_flags: Vec<Vec<bool>>,
    /// Channel redraws forced by numerically degenerate draws.
    pub degenerate_redraws: usize,
}

/// A Monte Carlo estimate with its 99% confidence interval: Wilson for
/// outage proportions, normal approximation for bounded payoffs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_trials: u64,
    pub seed: u64,
}

/// RNG for one trial: every trial owns a dedicated counter-indexed stream
/// of the master seed, so the trial's draws are independent of how trials
/// are scheduled across threads.
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

/// Draw the served group: a Poisson user count capped at the group limit,
/// with i.i.d. distances following the disc CDF `x^2/D^2`, sorted nearest
/// first. Sampling `D * sqrt(1 - U)` with `U` in `[0, 1)` keeps distances
/// strictly positive. Capping after fresh i.i.d. draws is distributionally
/// identical to retaining a random subset, because positions are
/// exchangeable.
pub fn sample_group(cfg: &SystemConfig, rng: &mut impl Rng) -> (usize, Vec<f64>) {
    let poisson = Poisson::new(cfg.mean_user_count()).expect("validated config has mean > 0");
    let raw: f64 = poisson.sample(rng);
    let count = (raw as usize).min(cfg.group_cap);
    let mut distances: Vec<f64> = (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            cfg.radius * (1.0 - u).sqrt()
        })
        .collect();
    distances.sort_by(f64::total_cmp);
    (count, distances)
}

/// Draw one user's channel: i.i.d. circularly-symmetric complex Gaussian
/// entries with per-entry variance equal to the fading power, multiplied by
/// the transmit-side coloring factor so the column covariance matches the
/// configured correlation.
pub fn sample_channel(
    cfg: &SystemConfig,
    stats: &EffectiveChannelStats,
    rng: &mut impl Rng,
) -> DMatrix<Complex64> {
    let sd = (cfg.fading_power / 2.0).sqrt();
    let mut white = DMatrix::zeros(cfg.n_rx, cfg.n_tx);
    for r in 0..cfg.n_rx {
        for c in 0..cfg.n_tx {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            white[(r, c)] = Complex64::new(sd * re, sd * im);
        }
    }
    white * &stats.coloring
}

/// Diagonal of `[(HV)^H HV]^-1` via Cholesky factorization. A numerically
/// rank-deficient product (condition estimate beyond 1e12) is reported as a
/// degenerate draw so the caller can redraw the channel.
pub fn zf_noise_amplification(
    channel: &DMatrix<Complex64>,
    precoder: &DMatrix<Complex64>,
) -> Result<Vec<f64>> {
    let detected = channel * precoder;
    let gram_raw = detected.adjoint() * &detected;
    let gram = (&gram_raw + gram_raw.adjoint()) * Complex64::new(0.5, 0.0);
    let chol = Cholesky::new(gram).ok_or(NomaError::DegenerateDraw {
        cond: f64::INFINITY,
    })?;
    let factor = chol.l();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..factor.nrows() {
        let v = factor[(i, i)].re;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    // Squared diagonal ratio of the triangular factor estimates the
    // spectral condition number of the Gram matrix.
    let cond = (hi / lo) * (hi / lo);
    if !cond.is_finite() || cond > 1e12 {
        return Err(NomaError::DegenerateDraw { cond });
    }
    let inv = chol.inverse();
    let mut amps = Vec::with_capacity(inv.nrows());
    for i in 0..inv.nrows() {
        let v = inv[(i, i)].re;
        if !(v > 0.0) || !v.is_finite() {
            return Err(NomaError::DegenerateDraw { cond });
        }
        amps.push(v);
    }
    Ok(amps)
}

/// Decide every user's outage on every stream, twice: once as the union of
/// per-stage rate misses over the cancellation chain, once as a single
/// comparison against the precomputed decode margin. The two forms are the
/// same event by construction, so any disagreement is an implementation
/// fault and aborts the run.
pub fn outage_flags(
    scenario: &Scenario,
    distances: &[f64],
    zf_amps: &[Vec<f64>],
) -> Result<Vec<Vec<bool>>> {
    assert_eq!(
        distances.len(),
        zf_amps.len(),
        "one amplification vector per user"
    );
    let cfg = &scenario.cfg;
    let count = distances.len();
    if count == 0 {
        return Ok(Vec::new());
    }
    let alloc = scenario.alloc(count);
    let thresholds = scenario.thresholds_for(count);
    let mut flags = Vec::with_capacity(count);
    for (k0, (&d, amps)) in distances.iter().zip(zf_amps).enumerate() {
        let ell = path_loss(d, cfg)?;
        let mut user_flags = Vec::with_capacity(cfg.n_streams);
        for (m0, &amp) in amps.iter().enumerate() {
            let eff_noise = cfg.fading_power * amp;
            // Union form: decode messages from the group's farthest user
            // down to this user's own; any stage below its rate fails.
            let mut union_fail = false;
            for i0 in k0..count {
                let sinr = cfg.avg_snr * ell * alloc.coeff(i0)
                    / (cfg.avg_snr * ell * alloc.interference_prefix(i0) + eff_noise);
                if (1.0 + sinr).log2() < cfg.rates.at(m0, i0) {
                    union_fail = true;
                    break;
                }
            }
            // Threshold form: one comparison against the tightest margin.
            let threshold_fail = eff_noise > cfg.avg_snr * ell * thresholds.at(m0, k0);
            assert_eq!(
                union_fail,
                threshold_fail,
                "outage forms disagree at stream {}, user order {}, d = {d}",
                m0 + 1,
                k0 + 1
            );
            user_flags.push(union_fail);
        }
        flags.push(user_flags);
    }
    Ok(flags)
}

/// Simulate one transmission interval: deployment, per-user channels (with
/// degenerate draws redrawn and counted), detection, and outage decisions.
pub fn simulate_trial(scenario: &Scenario, rng: &mut impl Rng) -> Result<TrialRecord> {
    let cfg = &scenario.cfg;
    let (user_count, distances) = sample_group(cfg, rng);
    let mut zf_noise_amp = Vec::with_capacity(user_count);
    let mut degenerate_redraws = 0usize;
    for _ in 0..user_count {
        loop {
            let channel = sample_channel(cfg, &scenario.stats, rng);
            match zf_noise_amplification(&channel, &scenario.stats.precoder) {
                Ok(amps) => {
                    zf_noise_amp.push(amps);
                    break;
                }
                Err(NomaError::DegenerateDraw { .. }) => {
                    degenerate_redraws += 1;
                    if degenerate_redraws > 1000 {
                        return Err(NomaError::Domain(
                            "over 1000 degenerate channel draws in a single trial; the channel \
                             statistics are numerically unusable"
                                .to_string(),
                        ));
                    }
                }
                Err(other) => return Err(other),
            }
        }
    }
    let outage = outage_flags(scenario, &distances, &zf_noise_amp)?;
    Ok(TrialRecord {
        user_count,
        distances,
        zf_noise_amp,
        outage_flags: outage,
        degenerate_redraws,
    })
}

fn check_trials(n_trials: u64) -> Result<()> {
    if n_trials < 1000 {
        return Err(NomaError::ParameterDomain {
            name: "n_trials",
            detail: format!("need at least 1000 trials for a meaningful interval, got {n_trials}"),
        });
    }
    Ok(())
}

fn check_indices(scenario: &Scenario, stream: usize, user_order: usize) -> Result<()> {
    if stream < 1 || stream > scenario.cfg.n_streams {
        return Err(NomaError::ParameterDomain {
            name: "stream",
            detail: format!(
                "need 1 <= stream <= {}, got {stream}",
                scenario.cfg.n_streams
            ),
        });
    }
    if user_order < 1 || user_order > scenario.cfg.group_cap {
        return Err(NomaError::ParameterDomain {
            name: "user_order",
            detail: format!(
                "need 1 <= user_order <= {}, got {user_order}",
                scenario.cfg.group_cap
            ),
        });
    }
    Ok(())
}

/// Estimate the average outage of one `(stream, user order)` pair. Trials
/// where that user does not exist count as non-outage, matching the
/// group-size marginalization of the analytic engine. Trials run in
/// parallel; the hit count is an order-free integer sum, so the estimate is
/// identical for any thread count.
pub fn estimate_outage(
    scenario: &Scenario,
    stream: usize,
    user_order: usize,
    n_trials: u64,
    seed: u64,
) -> Result<Estimate> {
    check_trials(n_trials)?;
    check_indices(scenario, stream, user_order)?;
    let (m0, k0) = (stream - 1, user_order - 1);
    let hits = (0..n_trials)
        .into_par_iter()
        .try_fold(
            || 0u64,
            |acc, idx| -> Result<u64> {
                let mut rng = trial_rng(seed, idx);
                let trial = simulate_trial(scenario, &mut rng)?;
                let hit = trial.user_count > k0 && trial.outage_flags[k0][m0];
                Ok(acc + u64::from(hit))
            },
        )
        .try_reduce(|| 0u64, |a, b| Ok(a + b))?;
    let (ci_lo, ci_hi) = wilson_interval(hits, n_trials, Z_99);
    Ok(Estimate {
        mean: hits as f64 / n_trials as f64,
        ci_lo,
        ci_hi,
        n_trials,
        seed,
    })
}

/// Estimate outage for every `(stream, user order)` pair from one shared
/// set of trials. Returns a matrix indexed `[stream - 1][user_order - 1]`.
pub fn estimate_outage_matrix(
    scenario: &Scenario,
    n_trials: u64,
    seed: u64,
) -> Result<Vec<Vec<Estimate>>> {
    check_trials(n_trials)?;
    let n_streams = scenario.cfg.n_streams;
    let cap = scenario.cfg.group_cap;
    let counts = (0..n_trials)
        .into_par_iter()
        .try_fold(
            || vec![0u64; n_streams * cap],
            |mut acc, idx| -> Result<Vec<u64>> {
                let mut rng = trial_rng(seed, idx);
                let trial = simulate_trial(scenario, &mut rng)?;
                for (k0, user_flags) in trial.outage_flags.iter().enumerate() {
                    for (m0, &fail) in user_flags.iter().enumerate() {
                        acc[m0 * cap + k0] += u64::from(fail);
                    }
                }
                Ok(acc)
            },
        )
        .try_reduce(
            || vec![0u64; n_streams * cap],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;
    let matrix = (0..n_streams)
        .map(|m0| {
            (0..cap)
                .map(|k0| {
                    let hits = counts[m0 * cap + k0];
                    let (ci_lo, ci_hi) = wilson_interval(hits, n_trials, Z_99);
                    Estimate {
                        mean: hits as f64 / n_trials as f64,
                        ci_lo,
                        ci_hi,
                        n_trials,
                        seed,
                    }
                })
                .collect()
        })
        .collect();
    Ok(matrix)
}

/// Outage estimator that replaces the matrix-valued channel draw with a
/// direct draw of the detection law: the reciprocal noise amplification is
/// Gamma distributed with shape equal to the detection shape and rate equal
/// to the stream's effective-covariance rate. Cross-checking this against
/// [`estimate_outage`] validates that distributional reduction end to end.
pub fn estimate_outage_gamma_law(
    scenario: &Scenario,
    stream: usize,
    user_order: usize,
    n_trials: u64,
    seed: u64,
) -> Result<Estimate> {
    check_trials(n_trials)?;
    check_indices(scenario, stream, user_order)?;
    let cfg = &scenario.cfg;
    let (m0, k0) = (stream - 1, user_order - 1);
    let shape = f64::from(scenario.detection_shape());
    let law = Gamma::new(shape, 1.0 / scenario.stats.beta[m0]).map_err(|e| {
        NomaError::ParameterDomain {
            name: "beta",
            detail: format!("cannot build the detection law: {e}"),
        }
    })?;
    let alpha = cfg.path_loss_exp;
    let hits = (0..n_trials)
        .into_par_iter()
        .try_fold(
            || 0u64,
            |acc, idx| -> Result<u64> {
                let mut rng = trial_rng(seed, idx);
                let (count, distances) = sample_group(cfg, &mut rng);
                if count <= k0 {
                    return Ok(acc);
                }
                let gain: f64 = law.sample(&mut rng);
                let bound = distances[k0].powf(alpha)
                    / (cfg.avg_snr * scenario.theta(count, m0, k0) * cfg.path_loss_ref);
                Ok(acc + u64::from(gain < bound))
            },
        )
        .try_reduce(|| 0u64, |a, b| Ok(a + b))?;
    let (ci_lo, ci_hi) = wilson_interval(hits, n_trials, Z_99);
    Ok(Estimate {
        mean: hits as f64 / n_trials as f64,
        ci_lo,
        ci_hi,
        n_trials,
        seed,
    })
}

/// Estimate the average goodput: each trial pays the sum of rates of every
/// `(stream, served user)` pair not in outage. Payoffs are collected in
/// trial order and reduced sequentially, so the estimate is independent of
/// the thread count.
pub fn estimate_goodput(scenario: &Scenario, n_trials: u64, seed: u64) -> Result<Estimate> {
    check_trials(n_trials)?;
    let cfg = &scenario.cfg;
    let payoffs = (0..n_trials)
        .into_par_iter()
        .map(|idx| -> Result<f64> {
            let mut rng = trial_rng(seed, idx);
            let trial = simulate_trial(scenario, &mut rng)?;
            let mut payoff = 0.0;
            for (k0, user_flags) in trial.outage_flags.iter().enumerate() {
                for (m0, &fail) in user_flags.iter().enumerate() {
                    if !fail {
                        payoff += cfg.rates.at(m0, k0);
                    }
                }
            }
            Ok(payoff)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = n_trials as f64;
    let mean = payoffs.iter().sum::<f64>() / n;
    let variance = payoffs.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1.0);
    let (ci_lo, ci_hi) = normal_interval(mean, (variance / n).sqrt(), Z_99);
    Ok(Estimate {
        mean,
        ci_lo,
        ci_hi,
        n_trials,
        seed,
    })
}

/// Draw independent samples of the reciprocal effective noise amplification
/// `1/(fading_power * [Z^-1]_mm)` for one stream — the quantity whose Gamma
/// law underpins the closed forms. Degenerate draws are redrawn in place.
pub fn sample_schur_complements(
    scenario: &Scenario,
    stream: usize,
    n_samples: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    check_indices(scenario, stream, 1)?;
    if n_samples == 0 {
        return Err(NomaError::ParameterDomain {
            name: "n_samples",
            detail: "need at least one sample".to_string(),
        });
    }
    let m0 = stream - 1;
    (0..n_samples)
        .into_par_iter()
        .map(|idx| -> Result<f64> {
            let mut rng = trial_rng(seed, idx);
            loop {
                let channel = sample_channel(&scenario.cfg, &scenario.stats, &mut rng);
                match zf_noise_amplification(&channel, &scenario.stats.precoder) {
                    Ok(amps) => return Ok(1.0 / (scenario.cfg.fading_power * amps[m0])),
                    Err(NomaError::DegenerateDraw { .. }) => continue,
                    Err(other) => return Err(other),
                }
            }
        })
        .collect()
}
