//! Uplink simulator for cell-free massive MIMO with local soft detection.
//!
//! Every access point estimates its channels from uplink pilots, runs a soft
//! MIMO detector on the users it serves and forwards per-bit log-likelihood
//! ratios to the central processing unit. The CPU sums the LLRs of each user
//! over its serving APs and runs a Viterbi decoder. The harness measures the
//! frame-error rate of a probe user versus SNR for the partial-marginalization
//! detector and for the linear and successive-cancellation baselines.
//!
//! Pipeline order per drop: [`geometry`] → [`association`] (sets, then
//! powers) and per frame: channels → [`pilots`] → [`uplink`] → [`detect`] →
//! fusion and [`coding`] in [`harness`].

pub mod association;
pub mod coding;
pub mod detect;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod pilots;
pub mod rng;
pub mod units;
pub mod uplink;
pub mod validate;

pub use error::{Error, Result};

pub use nalgebra::Complex;

/// Complex double used for every baseband quantity.
pub type C64 = Complex<f64>;
