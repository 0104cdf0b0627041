//! Domain model shared by the analytic and Monte Carlo engines: system
//! configuration, the transmit-correlation model, the power-domain
//! superposition rule with its interference-cancellation thresholds, the
//! Friis path-loss law, and the effective channel covariance statistics.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{NomaError, Result};

/// Target rates `R[m][i]` in bits/s/Hz, indexed by stream `m` and user order
/// `i` (internally 0-based; the public query API is 1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    n_streams: usize,
    max_users: usize,
    rates: Vec<f64>, // row-major, rates[m * max_users + i]
}

impl RateMatrix {
    /// A uniform rate for every (stream, user-order) pair.
    pub fn uniform(n_streams: usize, max_users: usize, rate: f64) -> Result<Self> {
        Self::from_rows(vec![vec![rate; max_users]; n_streams])
    }

    /// Build from per-stream rows; all rows must share a length and every
    /// rate must be strictly positive.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(NomaError::ParameterDomain {
                name: "rates",
                detail: "rate matrix must be non-empty".to_string(),
            });
        }
        let max_users = rows[0].len();
        if rows.iter().any(|r| r.len() != max_users) {
            return Err(NomaError::ParameterDomain {
                name: "rates",
                detail: "rate matrix rows must all have the same length".to_string(),
            });
        }
        if rows
            .iter()
            .flatten()
            .any(|&r| !(r > 0.0) || !r.is_finite())
        {
            return Err(NomaError::ParameterDomain {
                name: "rates",
                detail: "all rates must be finite and strictly positive".to_string(),
            });
        }
        Ok(RateMatrix {
            n_streams: rows.len(),
            max_users,
            rates: rows.into_iter().flatten().collect(),
        })
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    pub fn max_users(&self) -> usize {
        self.max_users
    }

    /// Rate for 0-based stream index `m` and user-order index `i`.
    pub fn at(&self, m: usize, i: usize) -> f64 {
        assert!(m < self.n_streams && i < self.max_users);
        self.rates[m * self.max_users + i]
    }

    /// Largest entry; drives the shared power-allocation recursion.
    pub fn max_rate(&self) -> f64 {
        self.rates.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// All physical and deployment parameters of the downlink cell.
///
/// SNR is stored linear; decibel conversion belongs to the CLI boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Transmit antennas `N_t`.
    pub n_tx: usize,
    /// Receive antennas `N_r` (per user).
    pub n_rx: usize,
    /// Spatial data streams `M`, at most `min(N_t, N_r)`.
    pub n_streams: usize,
    /// Maximum users served per group, `Q`.
    pub group_cap: usize,
    /// Deployment intensity, users per square meter.
    pub intensity: f64,
    /// Cell radius in meters.
    pub radius: f64,
    /// Path-loss exponent (> 2).
    pub path_loss_exp: f64,
    /// Reference received power at 1 m.
    pub path_loss_ref: f64,
    /// Fading power per channel entry.
    pub fading_power: f64,
    /// Receiver noise power.
    pub noise_power: f64,
    /// Average SNR (linear): transmit power times fading power over noise.
    pub avg_snr: f64,
    /// Target rates per (stream, user order).
    pub rates: RateMatrix,
    /// Transmit correlation coefficient in `[0, 1)`.
    pub corr_coeff: f64,
    /// Power-allocation shape parameter in `[0, 1]`.
    pub alloc_eps: f64,
}

impl Default for SystemConfig {
    /// Built-in reference configuration: a 2x3 downlink with 2 streams,
    /// groups of up to 3 users, 1e-3 users/m^2 in a 30 m cell, 60 dB average
    /// SNR, rate 2 bits/s/Hz, cubic path loss, and moderate transmit
    /// correlation.
    fn default() -> Self {
        SystemConfig {
            n_tx: 2,
            n_rx: 3,
            n_streams: 2,
            group_cap: 3,
            intensity: 1e-3,
            radius: 30.0,
            path_loss_exp: 3.0,
            path_loss_ref: 1.0,
            fading_power: 1.0,
            noise_power: 1.0,
            avg_snr: 1e6,
            rates: RateMatrix::uniform(2, 3, 2.0).expect("static default"),
            corr_coeff: 0.5,
            alloc_eps: 0.5,
        }
    }
}

impl SystemConfig {
    /// Check every structural invariant, reporting the offending parameter.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if !(v > 0.0) || !v.is_finite() {
                return Err(NomaError::ParameterDomain {
                    name,
                    detail: format!("must be finite and > 0, got {v}"),
                });
            }
            Ok(())
        }
        if self.n_tx < 1 {
            return Err(NomaError::ParameterDomain {
                name: "n_tx",
                detail: "need at least one transmit antenna".to_string(),
            });
        }
        if self.n_rx < 1 {
            return Err(NomaError::ParameterDomain {
                name: "n_rx",
                detail: "need at least one receive antenna".to_string(),
            });
        }
        if self.n_streams < 1 || self.n_streams > self.n_tx.min(self.n_rx) {
            return Err(NomaError::ParameterDomain {
                name: "n_streams",
                detail: format!(
                    "stream count must satisfy 1 <= M <= min(n_tx, n_rx) = {}, got {}",
                    self.n_tx.min(self.n_rx),
                    self.n_streams
                ),
            });
        }
        if self.group_cap < 1 {
            return Err(NomaError::ParameterDomain {
                name: "group_cap",
                detail: "group capacity must be >= 1".to_string(),
            });
        }
        positive("intensity", self.intensity)?;
        positive("radius", self.radius)?;
        if !(self.path_loss_exp > 2.0) || !self.path_loss_exp.is_finite() {
            return Err(NomaError::ParameterDomain {
                name: "path_loss_exp",
                detail: format!("path-loss exponent must be > 2, got {}", self.path_loss_exp),
            });
        }
        positive("path_loss_ref", self.path_loss_ref)?;
        positive("fading_power", self.fading_power)?;
        positive("noise_power", self.noise_power)?;
        positive("avg_snr", self.avg_snr)?;
        if self.rates.n_streams() != self.n_streams || self.rates.max_users() != self.group_cap {
            return Err(NomaError::ParameterDomain {
                name: "rates",
                detail: format!(
                    "rate matrix must be n_streams x group_cap = {} x {}, got {} x {}",
                    self.n_streams,
                    self.group_cap,
                    self.rates.n_streams(),
                    self.rates.max_users()
                ),
            });
        }
        if !(0.0..1.0).contains(&self.corr_coeff) {
            return Err(NomaError::ParameterDomain {
                name: "corr_coeff",
                detail: format!("correlation must lie in [0, 1), got {}", self.corr_coeff),
            });
        }
        if !(0.0..=1.0).contains(&self.alloc_eps) {
            return Err(NomaError::ParameterDomain {
                name: "alloc_eps",
                detail: format!("allocation parameter must lie in [0, 1], got {}", self.alloc_eps),
            });
        }
        Ok(())
    }

    /// Diversity shape `N_r - M + 1` of the per-stream detection law.
    pub fn detection_shape(&self) -> u32 {
        (self.n_rx - self.n_streams + 1) as u32
    }

    /// Mean number of deployed users, `pi * D^2 * lambda`.
    pub fn mean_user_count(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius * self.intensity
    }
}

/// Friis path loss `K * d^(-alpha)`; undefined at the origin.
pub fn path_loss(d: f64, cfg: &SystemConfig) -> Result<f64> {
    if d == 0.0 {
        return Err(NomaError::SingularDistance);
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(NomaError::ParameterDomain {
            name: "d",
            detail: format!("distance must be finite and > 0, got {d}"),
        });
    }
    Ok(cfg.path_loss_ref * d.powf(-cfg.path_loss_exp))
}

/// The `n x n` exponential correlation matrix with entries `rho^(|i - j|)`.
pub fn build_exponential_correlation(n: usize, rho: f64) -> Result<DMatrix<Complex64>> {
    if n < 1 {
        return Err(NomaError::ParameterDomain {
            name: "n",
            detail: "correlation matrix needs n >= 1".to_string(),
        });
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(NomaError::ParameterDomain {
            name: "rho",
            detail: format!("correlation must lie in [0, 1), got {rho}"),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(rho.powi((i as i32 - j as i32).abs()), 0.0)
    }))
}

/// Precoder made of the first `n_streams` columns of the identity.
pub fn selector_precoder(n_tx: usize, n_streams: usize) -> Result<DMatrix<Complex64>> {
    if n_streams < 1 || n_streams > n_tx {
        return Err(NomaError::ParameterDomain {
            name: "n_streams",
            detail: format!("need 1 <= n_streams <= n_tx = {n_tx}, got {n_streams}"),
        });
    }
    Ok(DMatrix::from_fn(n_tx, n_streams, |i, j| {
        if i == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// Transmit correlation, precoder, effective covariance, and per-stream
/// noise-amplification rates.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannelStats {
    /// Transmit correlation `R_T` (Hermitian positive-definite).
    pub corr_tx: DMatrix<Complex64>,
    /// Precoder `V` with unit-norm columns.
    pub precoder: DMatrix<Complex64>,
    /// Effective covariance `V^H R_T V`.
    pub eff_cov: DMatrix<Complex64>,
    /// Per-stream rates `beta[m] = [eff_cov^(-1)]_(mm)`, governing the Gamma
    /// law of the zero-forcing noise amplification.
    pub beta: Vec<f64>,
    /// Coloring matrix `S` with `S^H S = R_T`; channels are drawn as
    /// `H = H_w * S` so that the row (transmit-side) covariance equals
    /// `R_T`. Any factor with that property yields the same distribution;
    /// this one is the conjugate transpose of the lower Cholesky factor.
    pub coloring: DMatrix<Complex64>,
}

/// Compute effective covariance and per-stream rates from a correlation
/// matrix and a precoder, via Cholesky solves (no explicit inversion).
pub fn effective_stats(
    corr_tx: DMatrix<Complex64>,
    precoder: DMatrix<Complex64>,
) -> Result<EffectiveChannelStats> {
    let n = corr_tx.nrows();
    if corr_tx.ncols() != n || n == 0 {
        return Err(NomaError::ParameterDomain {
            name: "corr_tx",
            detail: "correlation matrix must be square and non-empty".to_string(),
        });
    }
    if precoder.nrows() != n || precoder.ncols() == 0 || precoder.ncols() > n {
        return Err(NomaError::ParameterDomain {
            name: "precoder",
            detail: format!(
                "precoder must be {n} x M with 1 <= M <= {n}, got {} x {}",
                precoder.nrows(),
                precoder.ncols()
            ),
        });
    }
    // Hermitian symmetry check.
    let asym = (&corr_tx - corr_tx.adjoint()).camax();
    if asym > 1e-12 {
        return Err(NomaError::ParameterDomain {
            name: "corr_tx",
            detail: format!("matrix is not Hermitian (max asymmetry {asym:e})"),
        });
    }
    // Unit-norm columns.
    for (idx, col) in precoder.column_iter().enumerate() {
        let norm = col.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(NomaError::ParameterDomain {
                name: "precoder",
                detail: format!("column {idx} has norm {norm}, expected 1"),
            });
        }
    }

    let corr_chol = Cholesky::new(corr_tx.clone()).ok_or(NomaError::ParameterDomain {
        name: "corr_tx",
        detail: "correlation matrix is not positive-definite".to_string(),
    })?;
    let coloring = corr_chol.l().adjoint();

    let m = precoder.ncols();
    let eff_cov_raw = precoder.adjoint() * &corr_tx * &precoder;
    // Re-Hermitize to scrub floating-point asymmetry before factorization.
    let eff_cov = (&eff_cov_raw + eff_cov_raw.adjoint()) * Complex64::new(0.5, 0.0);

    let eff_chol = Cholesky::new(eff_cov.clone()).ok_or_else(|| {
        NomaError::DegeneratePrecoder(
            "effective covariance is singular; precoder columns are linearly dependent under the transmit correlation"
                .to_string(),
        )
    })?;

    let mut beta = Vec::with_capacity(m);
    for i in 0..m {
        let mut e = DVector::from_element(m, Complex64::new(0.0, 0.0));
        e[i] = Complex64::new(1.0, 0.0);
        let x = eff_chol.solve(&e);
        let b = x[i].re;
        if !(b > 0.0) || x[i].im.abs() > 1e-9 * b.abs().max(1.0) {
            return Err(NomaError::DegeneratePrecoder(format!(
                "inverse covariance diagonal entry {i} is not a positive real ({})",
                x[i]
            )));
        }
        beta.push(b);
    }

    Ok(EffectiveChannelStats {
        corr_tx,
        precoder,
        eff_cov,
        beta,
        coloring,
    })
}

/// Power-domain superposition coefficients for one group size, ordered by
/// user order (nearest first); strictly positive and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    coeffs: Vec<f64>,
    /// prefix[i] = sum of coeffs[0..i]; the residual interference a user
    /// sees when decoding message i (messages of nearer users are never
    /// cancelled).
    prefix: Vec<f64>,
}

impl PowerAllocation {
    /// Validate and adopt explicit coefficients: each in `(0, 1]`, summing
    /// to 1 within 1e-12.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(NomaError::ParameterDomain {
                name: "coeffs",
                detail: "allocation needs at least one coefficient".to_string(),
            });
        }
        for (i, &z) in coeffs.iter().enumerate() {
            if !(z > 0.0 && z <= 1.0) || !z.is_finite() {
                return Err(NomaError::InfeasibleAllocation {
                    stream: 1,
                    user_order: i + 1,
                    detail: format!("coefficient {z} outside (0, 1]"),
                });
            }
        }
        let sum: f64 = coeffs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(NomaError::ParameterDomain {
                name: "coeffs",
                detail: format!("coefficients must sum to 1 within 1e-12, got {sum}"),
            });
        }
        let mut prefix = Vec::with_capacity(coeffs.len());
        let mut acc = 0.0;
        for &z in &coeffs {
            prefix.push(acc);
            acc += z;
        }
        Ok(PowerAllocation { coeffs, prefix })
    }

    pub fn group_size(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient for 0-based user-order index `i`.
    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs[i]
    }

    /// Residual interference power share when decoding message `i`
    /// (0-based): the sum of all nearer users' coefficients.
    pub fn interference_prefix(&self, i: usize) -> f64 {
        self.prefix[i]
    }

    /// Verify that each stage's decode requirement is satisfiable: for every
    /// stream and every user order i >= 2 (1-based), the rate must stay
    /// strictly below `log2(1 + coeff_i / prefix_i)`.
    pub fn validate_feasible(&self, rates: &RateMatrix) -> Result<()> {
        let k_users = self.group_size();
        if rates.max_users() < k_users {
            return Err(NomaError::ParameterDomain {
                name: "rates",
                detail: format!(
                    "rate matrix covers {} user orders but the allocation has {}",
                    rates.max_users(),
                    k_users
                ),
            });
        }
        for m in 0..rates.n_streams() {
            for i in 1..k_users {
                let cap = (1.0 + self.coeffs[i] / self.prefix[i]).log2();
                if !(rates.at(m, i) < cap) {
                    return Err(NomaError::InfeasibleAllocation {
                        stream: m + 1,
                        user_order: i + 1,
                        detail: format!(
                            "rate {} is not below the superposition limit log2(1 + {}/{}) = {}",
                            rates.at(m, i),
                            self.coeffs[i],
                            self.prefix[i],
                            cap
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// The backward power-allocation recursion: the farthest user's coefficient
/// is `c = 1 - eps * 2^(-rate)` of the remaining power, applied from the
/// farthest user down to the second, with the nearest user absorbing the
/// remainder. The result is checked for rate feasibility.
pub fn default_power_allocation(group_size: usize, rate: f64, eps: f64) -> Result<PowerAllocation> {
    if group_size < 1 {
        return Err(NomaError::ParameterDomain {
            name: "group_size",
            detail: "allocation needs at least one user".to_string(),
        });
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(NomaError::ParameterDomain {
            name: "rate",
            detail: format!("rate must be finite and > 0, got {rate}"),
        });
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(NomaError::ParameterDomain {
            name: "eps",
            detail: format!("allocation parameter must lie in [0, 1], got {eps}"),
        });
    }
    if group_size == 1 {
        return PowerAllocation::new(vec![1.0]);
    }
    if eps == 0.0 {
        return Err(NomaError::InfeasibleAllocation {
            stream: 1,
            user_order: 1,
            detail: "the allocation rule assigns zero power to the nearest user when eps = 0"
                .to_string(),
        });
    }
    let c = 1.0 - eps * (-rate).exp2();
    let mut coeffs = vec![0.0; group_size];
    let mut remaining = 1.0;
    for idx in (1..group_size).rev() {
        let z = remaining * c;
        coeffs[idx] = z;
        remaining -= z;
    }
    coeffs[0] = remaining;
    let alloc = PowerAllocation::new(coeffs)?;
    // Feasibility against the uniform construction rate; the check is
    // stream-independent here, so a single row suffices.
    alloc.validate_feasible(&RateMatrix::uniform(1, group_size, rate)?)?;
    Ok(alloc)
}

/// Decode thresholds `theta[m][k]`: the tightest margin over the
/// cancellation stages `i = k..K`, eagerly validated to be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SicThresholds {
    n_streams: usize,
    group_size: usize,
    theta: Vec<f64>, // row-major, theta[m * group_size + k]
}

impl SicThresholds {
    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Threshold for 0-based stream index `m` and user-order index `k`.
    pub fn at(&self, m: usize, k: usize) -> f64 {
        assert!(m < self.n_streams && k < self.group_size);
        self.theta[m * self.group_size + k]
    }
}

/// Per-stage margins `t[m][i] = coeff_i / (2^rate - 1) - prefix_i` folded
/// into suffix minima `theta[m][k] = min over i in [k, K)`. Fails on the
/// first non-positive stage margin.
pub fn sic_thresholds(alloc: &PowerAllocation, rates: &RateMatrix) -> Result<SicThresholds> {
    let k_users = alloc.group_size();
    if rates.max_users() < k_users {
        return Err(NomaError::ParameterDomain {
            name: "rates",
            detail: format!(
                "rate matrix covers {} user orders but the allocation has {}",
                rates.max_users(),
                k_users
            ),
        });
    }
    let n_streams = rates.n_streams();
    let mut theta = vec![0.0; n_streams * k_users];
    for m in 0..n_streams {
        let mut margins = Vec::with_capacity(k_users);
        for i in 0..k_users {
            let gap = (rates.at(m, i)).exp2() - 1.0;
            let t = alloc.coeff(i) / gap - alloc.interference_prefix(i);
            if !(t > 0.0) {
                return Err(NomaError::InfeasibleAllocation {
                    stream: m + 1,
                    user_order: i + 1,
                    detail: format!(
                        "decode margin {}/{} - {} = {t} is not positive",
                        alloc.coeff(i),
                        gap,
                        alloc.interference_prefix(i)
                    ),
                });
            }
            margins.push(t);
        }
        // Suffix minima: the threshold for user order k covers stages k..K.
        let mut suffix = f64::INFINITY;
        for k in (0..k_users).rev() {
            suffix = suffix.min(margins[k]);
            theta[m * k_users + k] = suffix;
        }
    }
    Ok(SicThresholds {
        n_streams,
        group_size: k_users,
        theta,
    })
}

/// A fully derived evaluation context: validated configuration, channel
/// statistics, and per-group-size allocations with their thresholds.
///
/// The power rule depends on the realized group size, so allocations and
/// thresholds are materialized for every size `K = 1..=group_cap`; both
/// engines read from the same tables.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: SystemConfig,
    pub stats: EffectiveChannelStats,
    allocs: Vec<PowerAllocation>,
    thresholds: Vec<SicThresholds>,
}

impl Scenario {
    /// Derive everything from a configuration: exponential transmit
    /// correlation, identity-selector precoder, and the default power rule
    /// driven by the largest configured rate.
    pub fn from_config(cfg: SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let corr = build_exponential_correlation(cfg.n_tx, cfg.corr_coeff)?;
        let precoder = selector_precoder(cfg.n_tx, cfg.n_streams)?;
        let stats = effective_stats(corr, precoder)?;
        let rate_star = cfg.rates.max_rate();
        let mut allocs = Vec::with_capacity(cfg.group_cap);
        for k in 1..=cfg.group_cap {
            allocs.push(default_power_allocation(k, rate_star, cfg.alloc_eps)?);
        }
        Self::assemble(cfg, stats, allocs)
    }

    /// Use externally supplied allocations (one per group size `1..=Q`)
    /// instead of the default rule; thresholds are rebuilt and validated.
    pub fn with_allocations(cfg: SystemConfig, allocs: Vec<PowerAllocation>) -> Result<Self> {
        cfg.validate()?;
        if allocs.len() != cfg.group_cap
            || allocs.iter().enumerate().any(|(i, a)| a.group_size() != i + 1)
        {
            return Err(NomaError::ParameterDomain {
                name: "allocs",
                detail: format!(
                    "need one allocation per group size 1..={}, sized accordingly",
                    cfg.group_cap
                ),
            });
        }
        let corr = build_exponential_correlation(cfg.n_tx, cfg.corr_coeff)?;
        let precoder = selector_precoder(cfg.n_tx, cfg.n_streams)?;
        let stats = effective_stats(corr, precoder)?;
        Self::assemble(cfg, stats, allocs)
    }

    fn assemble(
        cfg: SystemConfig,
        stats: EffectiveChannelStats,
        allocs: Vec<PowerAllocation>,
    ) -> Result<Self> {
        let mut thresholds = Vec::with_capacity(allocs.len());
        for alloc in &allocs {
            alloc.validate_feasible(&cfg.rates)?;
            thresholds.push(sic_thresholds(alloc, &cfg.rates)?);
        }
        Ok(Scenario {
            cfg,
            stats,
            allocs,
            thresholds,
        })
    }

    /// Allocation for a realized group size in `1..=group_cap`.
    pub fn alloc(&self, group_size: usize) -> &PowerAllocation {
        &self.allocs[group_size - 1]
    }

    /// Thresholds for a realized group size in `1..=group_cap`.
    pub fn thresholds_for(&self, group_size: usize) -> &SicThresholds {
        &self.thresholds[group_size - 1]
    }

    /// Convenience accessor: threshold for group size `K`, 0-based stream
    /// `m`, 0-based user order `k`.
    pub fn theta(&self, group_size: usize, m: usize, k: usize) -> f64 {
        self.thresholds_for(group_size).at(m, k)
    }

    /// Diversity shape `N_r - M + 1`.
    pub fn detection_shape(&self) -> u32 {
        self.cfg.detection_shape()
    }
}
