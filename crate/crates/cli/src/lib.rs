//! Library half of the command-line front end: configuration parsing,
//! sweep orchestration, output emission, and the cross-engine validation
//! suite. The binary in `main.rs` is a thin argument-parsing shell over
//! these modules.

pub mod config;
pub mod sweep;
pub mod validate;
