pub mod config;
pub mod fusion;
pub mod sim;
pub mod sweep;

pub use config::SimConfig;
pub use fusion::{fuse_llrs, hard_decision, snr_k, LlrFrame};
pub use sim::{DropState, OperatingPoint, Simulator, TrialDraw, TrialOutcome, PROBE_USER};
pub use sweep::{paired_errors, run_point, run_sweep, write_csv, FerRecord};
