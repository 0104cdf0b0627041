//! Outage and goodput analysis for a downlink multi-antenna NOMA cell.
//!
//! The cell serves Poisson-deployed users grouped by distance on a disc.
//! Each group shares a superposition-coded transmission per spatial stream;
//! receivers apply zero-forcing detection and successive interference
//! cancellation. The crate computes the average outage probability of each
//! (stream, user order) pair and the cell's average goodput by two
//! independent routes:
//!
//! * [`analytic`] — closed-form and asymptotic expressions built on the
//!   Gamma law of the reciprocal zero-forcing noise amplification, averaged
//!   over ordered distances and the truncated Poisson group size;
//! * [`montecarlo`] — a trial-level link simulator drawing deployments and
//!   correlated Rayleigh channels explicitly, with deterministic per-trial
//!   seeding so results are reproducible across thread counts.
//!
//! [`model`] holds the shared configuration, channel statistics, power
//! allocation, and decode-margin tables; [`specfn`] and [`stats`] provide
//! the special-function and interval/goodness-of-fit machinery.

pub mod analytic;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod specfn;
pub mod stats;

pub use error::{NomaError, Result};
pub use model::{Scenario, SystemConfig};
