//! Per-AP soft detectors on the real-valued model `y = B̂x + e`.
//!
//! All detectors return one LLR `log P(b=1)/P(b=0)` per bit, ordered by real
//! dimension (`q` bits per dimension, MSB first). Column `j` of an AP model
//! with `n` users is user `j`'s in-phase dimension, column `n + j` its
//! quadrature dimension.

mod linear;
mod mapping;
mod ml;
mod pm;
mod soft;
mod zf;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

pub use linear::{mmse_sic_llrs, mrc_llrs};
pub use mapping::BitMapping;
pub use ml::exact_ml_llrs;
pub use pm::{centralized_pm_llrs, pm_llrs, pm_llrs_cached, pm_llrs_for, stack_blocks, whitening_scale, ApBlock};
pub use soft::{scalar_llrs, LogSumExp};
pub use zf::{vblast_order, zf_df_detect, zf_df_llrs, zf_df_llrs_cached, PlanCache, ZfDfPlan, ZfStep};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SoftConfig {
    pub mapping: BitMapping,
    /// LLRs are clamped to `±llr_clamp`.
    pub llr_clamp: f64,
    /// Largest bit count exact ML will enumerate.
    pub max_ml_bits: usize,
}

impl Default for SoftConfig {
    fn default() -> Self {
        Self { mapping: BitMapping::qpsk(), llr_clamp: 100.0, max_ml_bits: 24 }
    }
}

/// LLRs of one detector call and the number of hypotheses it scored.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftOutput {
    pub llrs: Vec<f64>,
    pub ops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Detector {
    Mrc,
    ZfDf,
    MmseSic,
    Pm(usize),
    ExactMl,
    /// PM at the CPU over all serving APs' observations and estimates.
    CentralPm(usize),
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mrc => "mrc",
            Self::ZfDf => "zf_df",
            Self::MmseSic => "mmse_sic",
            Self::Pm(_) => "pm",
            Self::ExactMl => "exact_ml",
            Self::CentralPm(_) => "c_pm",
        }
    }

    pub fn r(&self) -> Option<usize> {
        match self {
            Self::Pm(r) | Self::CentralPm(r) => Some(*r),
            _ => None,
        }
    }

    pub fn is_centralized(&self) -> bool {
        matches!(self, Self::CentralPm(_))
    }

    /// Runs a local detector on one AP model. `targets` lists the bits whose
    /// LLRs are needed; detectors that produce every bit anyway ignore it.
    pub fn detect_local(
        &self,
        y: &DVector<f64>,
        b_hat: &DMatrix<f64>,
        sigma2_e: f64,
        cfg: &SoftConfig,
        targets: &[usize],
    ) -> Result<SoftOutput> {
        self.detect_cached(y, b_hat, sigma2_e, cfg, targets, &mut PlanCache::default())
    }

    /// [`Detector::detect_local`] with ZF-DF schedules kept in `cache`
    /// across calls that share `b_hat`.
    pub fn detect_cached(
        &self,
        y: &DVector<f64>,
        b_hat: &DMatrix<f64>,
        sigma2_e: f64,
        cfg: &SoftConfig,
        targets: &[usize],
        cache: &mut PlanCache,
    ) -> Result<SoftOutput> {
        match self {
            Self::Mrc => Ok(mrc_llrs(y, b_hat, sigma2_e, cfg)),
            Self::ZfDf => Ok(zf_df_llrs_cached(y, b_hat, sigma2_e, cfg, cache)),
            Self::MmseSic => Ok(mmse_sic_llrs(y, b_hat, sigma2_e, cfg)),
            Self::Pm(r) => Ok(pm_llrs_cached(y, b_hat, sigma2_e, cfg, *r, targets, cache)),
            Self::ExactMl => exact_ml_llrs(y, b_hat, sigma2_e, cfg),
            Self::CentralPm(_) => Err(Error::Pipeline("c_pm runs at the CPU, not per AP".into())),
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.r() {
            Some(r) => write!(f, "{}({r})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let with_r = |prefix: &str| -> Option<Result<usize>> {
            let inner = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
            Some(inner.trim().parse().map_err(|_| Error::Config(format!("bad r in detector '{s}'"))))
        };
        if let Some(r) = with_r("c_pm") {
            return Ok(Self::CentralPm(r?));
        }
        if let Some(r) = with_r("pm") {
            return Ok(Self::Pm(r?));
        }
        match s.as_str() {
            "mrc" => Ok(Self::Mrc),
            "zf_df" => Ok(Self::ZfDf),
            "mmse_sic" => Ok(Self::MmseSic),
            "exact_ml" | "ml" => Ok(Self::ExactMl),
            _ => Err(Error::Config(format!(
                "unknown detector '{s}' (expected mrc, zf_df, mmse_sic, pm(r), exact_ml, c_pm(r))"
            ))),
        }
    }
}

impl TryFrom<String> for Detector {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Detector> for String {
    fn from(d: Detector) -> Self {
        d.to_string()
    }
}
