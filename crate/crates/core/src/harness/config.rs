//! Simulation configuration, read from TOML.
//!
//! Every section and key is optional; missing values take the defaults of
//! the reference scenario (50 APs with 8 antennas, 20 users, 1 km² torus).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::association::FpcParams;
use crate::coding::{parse_octal, CodeConfig};
use crate::detect::{BitMapping, Detector, SoftConfig};
use crate::geometry::{CorrelationMode, PathLossParams, RadioParams, ShadowingParams};
use crate::pilots::PilotPolicy;
use crate::units::{dbm_to_w, mw_to_w, noise_power_w};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Probe-user SNR targets.
    pub snr_points_db: Vec<f64>,
    pub target_frame_errors: u64,
    /// Per (detector, N, SNR) cap; hitting it flags the record low-confidence.
    pub max_frames: u64,
    /// Independent topologies; frames are spread round-robin over them.
    pub drops: u64,
    /// Pin user 0 (the probe) at the center of the area.
    pub probe_user_centered: bool,
    /// Emit one record per user instead of the probe only.
    pub report_all_users: bool,
    /// When false, `wall_seconds` is written as 0 so output is reproducible.
    pub report_wall_time: bool,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Frames simulated per parallel batch.
    pub batch_frames: u64,
    pub geometry: GeometryConfig,
    pub pilots: PilotConfig,
    pub association: AssociationConfig,
    pub detection: DetectionConfig,
    pub code: CodeSection,
    pub overrides: Overrides,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            snr_points_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0],
            target_frame_errors: 200,
            max_frames: 20_000,
            drops: 1,
            probe_user_centered: true,
            report_all_users: false,
            report_wall_time: true,
            threads: 0,
            batch_frames: 32,
            geometry: GeometryConfig::default(),
            pilots: PilotConfig::default(),
            association: AssociationConfig::default(),
            detection: DetectionConfig::default(),
            code: CodeSection::default(),
            overrides: Overrides::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub side_m: f64,
    pub num_aps: usize,
    pub num_users: usize,
    pub ap_antennas: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub noise_figure_db: f64,
    pub path_loss_intercept_db: f64,
    pub path_loss_slope_db: f64,
    pub d_min_m: f64,
    pub shadow_std_db: f64,
    pub shadow_decorr_m: f64,
    pub correlation: CorrelationConfig,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let pl = PathLossParams::default();
        let sh = ShadowingParams::default();
        Self {
            side_m: 1000.0,
            num_aps: 50,
            num_users: 20,
            ap_antennas: 8,
            carrier_hz: 1.9e9,
            bandwidth_hz: 20e6,
            noise_psd_dbm_per_hz: -174.0,
            noise_figure_db: 9.0,
            path_loss_intercept_db: pl.intercept_db,
            path_loss_slope_db: pl.slope_db,
            d_min_m: pl.d_min_m,
            shadow_std_db: sh.std_db,
            shadow_decorr_m: sh.decorr_m,
            correlation: CorrelationConfig::Uncorrelated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrelationConfig {
    #[default]
    Uncorrelated,
    Exponential { rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotConfig {
    pub tau_p: usize,
    /// Per-sample pilot power p̃.
    pub training_power_mw: f64,
    pub policy: PilotPolicy,
    /// Coherence length; only checked against `tau_p`.
    pub tau_c: Option<usize>,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self { tau_p: 12, training_power_mw: 100.0, policy: PilotPolicy::RoundRobin, tau_c: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationConfig {
    /// Values of N (users served per AP) to sweep.
    pub n_served: Vec<usize>,
    pub p_max_mw: f64,
    pub p0_dbm: f64,
    pub kappa: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self { n_served: vec![4, 8], p_max_mw: 100.0, p0_dbm: -10.0, kappa: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// e.g. `["mrc", "zf_df", "mmse_sic", "pm(2)", "c_pm(4)", "exact_ml"]`.
    pub detectors: Vec<Detector>,
    pub llr_clamp: f64,
    pub exact_ml_max_bits: usize,
    /// Bits per real dimension; 1 is QPSK.
    pub bits_per_real_dim: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            detectors: vec![Detector::Mrc, Detector::ZfDf, Detector::MmseSic, Detector::Pm(2), Detector::Pm(4), Detector::CentralPm(4)],
            llr_clamp: 100.0,
            exact_ml_max_bits: 24,
            bits_per_real_dim: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeSection {
    pub generators_octal: Vec<String>,
    pub constraint_length: usize,
    pub block_bits: usize,
}

impl Default for CodeSection {
    fn default() -> Self {
        Self { generators_octal: vec!["133".into(), "171".into(), "165".into()], constraint_length: 7, block_bits: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    /// Replaces the PSD·W·NF noise power.
    pub noise_power_w: Option<f64>,
    /// Detectors see the true channels with zero error covariance.
    pub perfect_csi: bool,
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Toml(t) => Error::Config(format!("{}: {t}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.snr_points_db.is_empty() {
            return bad("snr_points_db must not be empty".into());
        }
        if let Some(s) = self.snr_points_db.iter().find(|s| !s.is_finite()) {
            return bad(format!("SNR point {s} is not finite"));
        }
        if self.target_frame_errors == 0 {
            return bad("target_frame_errors must be at least 1".into());
        }
        if self.max_frames == 0 || self.drops == 0 || self.batch_frames == 0 {
            return bad("max_frames, drops and batch_frames must be at least 1".into());
        }
        let g = &self.geometry;
        if g.num_aps == 0 || g.num_users == 0 || g.ap_antennas == 0 {
            return bad("num_aps, num_users and ap_antennas must be at least 1".into());
        }
        if !(g.side_m > 0.0) || !(g.bandwidth_hz > 0.0) {
            return bad("side_m and bandwidth_hz must be positive".into());
        }
        if self.pilots.tau_p == 0 {
            return bad("tau_p must be at least 1".into());
        }
        if let Some(tc) = self.pilots.tau_c {
            if self.pilots.tau_p >= tc {
                return bad(format!("tau_p = {} must be below tau_c = {tc}", self.pilots.tau_p));
            }
        }
        if !(self.pilots.training_power_mw > 0.0) {
            return bad("training_power_mw must be positive".into());
        }
        if self.association.n_served.is_empty() {
            return bad("association.n_served must list at least one N".into());
        }
        if let Some(n) = self.association.n_served.iter().find(|&&n| n == 0 || n > g.num_users) {
            return bad(format!("N = {n} outside 1..={}", g.num_users));
        }
        if let Some(s2) = self.overrides.noise_power_w {
            if !(s2 > 0.0) {
                return bad(format!("noise_power_w override must be positive, got {s2}"));
            }
        }
        if !(self.detection.llr_clamp > 0.0) {
            return bad("llr_clamp must be positive".into());
        }
        self.fpc_params().validate()?;
        self.code_config()?;
        self.soft_config()?;
        Ok(())
    }

    pub fn radio(&self) -> RadioParams {
        let g = &self.geometry;
        RadioParams {
            n_ap_antennas: g.ap_antennas,
            carrier_hz: g.carrier_hz,
            bandwidth_hz: g.bandwidth_hz,
            noise_psd_dbm_per_hz: g.noise_psd_dbm_per_hz,
            noise_figure_db: g.noise_figure_db,
        }
    }

    pub fn path_loss(&self) -> PathLossParams {
        let g = &self.geometry;
        PathLossParams { intercept_db: g.path_loss_intercept_db, slope_db: g.path_loss_slope_db, d_min_m: g.d_min_m }
    }

    pub fn shadowing(&self) -> ShadowingParams {
        ShadowingParams { std_db: self.geometry.shadow_std_db, decorr_m: self.geometry.shadow_decorr_m }
    }

    pub fn correlation_mode(&self) -> CorrelationMode {
        match self.geometry.correlation {
            CorrelationConfig::Uncorrelated => CorrelationMode::Uncorrelated,
            CorrelationConfig::Exponential { rho } => CorrelationMode::Exponential { rho },
        }
    }

    pub fn fpc_params(&self) -> FpcParams {
        let a = &self.association;
        FpcParams { p_max_w: mw_to_w(a.p_max_mw), p0_w: dbm_to_w(a.p0_dbm), kappa: a.kappa }
    }

    pub fn code_config(&self) -> Result<CodeConfig> {
        let c = &self.code;
        let gens = c.generators_octal.iter().map(|g| parse_octal(g)).collect::<Result<Vec<_>>>()?;
        CodeConfig::new(gens, c.constraint_length, c.block_bits, true)
    }

    pub fn soft_config(&self) -> Result<SoftConfig> {
        let d = &self.detection;
        Ok(SoftConfig {
            mapping: BitMapping::gray_pam(d.bits_per_real_dim)?,
            llr_clamp: d.llr_clamp,
            max_ml_bits: d.exact_ml_max_bits,
        })
    }

    /// σ²_w in watts, honoring the override.
    pub fn noise_power_w(&self) -> f64 {
        let g = &self.geometry;
        self.overrides
            .noise_power_w
            .unwrap_or_else(|| noise_power_w(g.noise_psd_dbm_per_hz, g.bandwidth_hz, g.noise_figure_db))
    }
}
