//! Spatial coordination for ultra-dense wireless networks.
//!
//! The crate pairs users (UEs) with multi-antenna access nodes (ANs) through
//! an exact integer program, computes precoders for four coordination
//! strategies, and evaluates worse-UE and sum rates over Monte-Carlo
//! deployment snapshots.
//!
//! * [`topology`]: random deployments and normalized large-scale gains.
//! * [`channel`]: fading, CSI, SINR and rates.
//! * [`pairing`]: exact AN-UE association.
//! * [`conic`]: second-order cone feasibility of a common SINR target.
//! * [`precoding`]: zero-forcing, max-min SINR bisection, power coordination.
//! * [`strategies`]: the four strategies end to end.
//! * [`sim`]: campaigns over snapshots, aggregation and export.

pub mod channel;
pub mod conic;
pub mod pairing;
pub mod precoding;
pub mod sim;
pub mod strategies;
pub mod topology;

/// Crate version embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
