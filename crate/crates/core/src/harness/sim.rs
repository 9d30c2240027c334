//! Drops, operating points and single Monte Carlo frames.
//!
//! Randomness is split so that every detector, every N and every SNR point
//! sees the same frames: the drop stream fixes the topology and pilots, and
//! frame `t` draws channels, training noise, info bits and data noise (in
//! that order) from its own substream.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::config::SimConfig;
use super::fusion::{fuse_llrs, power_for_snr, LlrFrame};
use crate::association::{associate, AssociationMap, UplinkPowers};
use crate::coding::{symbols_per_frame, viterbi_decode, CodeConfig, Frame};
use crate::detect::{pm_llrs_cached, stack_blocks, ApBlock, Detector, PlanCache, SoftConfig};
use crate::geometry::{build_correlations, draw_channels, ChannelRealization, CorrelationSet, Deployment, LargeScaleMap};
use crate::pilots::{assign_pilots, training_observable, EstimatorBank, PilotBook, TrainingPowers};
use crate::rng::{complex_normal, substream, Domain};
use crate::units::mw_to_w;
use crate::uplink::{interference_variance, realify_vector, uplink_block_with_noise, EffectiveModel};
use crate::{Error, Result, C64};

/// The user whose FER is reported and whose power is swept.
pub const PROBE_USER: usize = 0;

/// Everything fixed for one topology, independent of N and SNR.
#[derive(Debug, Clone)]
pub struct DropState {
    pub index: u64,
    pub deployment: Deployment,
    pub large_scale: LargeScaleMap,
    pub corr: CorrelationSet,
    pub pilots: PilotBook,
    pub training: TrainingPowers,
    pub bank: EstimatorBank,
    pub sigma2_w: f64,
    perfect_csi: bool,
}

impl DropState {
    pub fn build(cfg: &SimConfig, index: u64) -> Result<Self> {
        let g = &cfg.geometry;
        let mut rng = substream(cfg.seed, Domain::Drop, index);
        let deployment =
            Deployment::random(g.side_m, g.num_aps, g.num_users, cfg.radio(), cfg.probe_user_centered, &mut rng)?;
        let large_scale = LargeScaleMap::draw(&deployment, &cfg.path_loss(), &cfg.shadowing(), &mut rng)?;
        let corr = build_correlations(&large_scale, g.ap_antennas, &cfg.correlation_mode())?;
        let assignment = assign_pilots(g.num_users, cfg.pilots.tau_p, cfg.pilots.policy, &mut rng)?;
        let pilots = PilotBook::new(cfg.pilots.tau_p, assignment)?;
        let training = TrainingPowers::uniform(g.num_users, mw_to_w(cfg.pilots.training_power_mw), cfg.pilots.tau_p)?;
        let sigma2_w = cfg.noise_power_w();
        let bank = EstimatorBank::new(&corr, &pilots, &training, sigma2_w)?;
        Ok(Self {
            index,
            deployment,
            large_scale,
            corr,
            pilots,
            training,
            bank,
            sigma2_w,
            perfect_csi: cfg.overrides.perfect_csi,
        })
    }

    /// `tr(C_{k,m})`, zero with perfect CSI.
    pub fn error_trace(&self, k: usize, m: usize) -> f64 {
        if self.perfect_csi {
            0.0
        } else {
            self.bank.error_cov(k, m).trace().re
        }
    }

    /// Interference-plus-noise variance at AP `m` when it detects `users`.
    pub fn variance_for(&self, m: usize, users: &[usize], eta: &[f64]) -> f64 {
        interference_variance(m, users, eta, |j, m| self.error_trace(j, m), &self.corr, self.sigma2_w)
    }
}

/// Association, powers and per-AP variances for one (drop, N, SNR).
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    pub n: usize,
    pub snr_db: f64,
    pub assoc: AssociationMap,
    pub eta: Vec<f64>,
    /// σ²_{e,m} for each AP's served set.
    pub sigma2_e: Vec<f64>,
}

impl OperatingPoint {
    /// AP-centric top-N association and FPC powers, except the probe whose
    /// power is set (unclamped) so that its SNR equals `snr_db`.
    pub fn new(cfg: &SimConfig, drop: &DropState, n: usize, snr_db: f64) -> Result<Self> {
        let beta = &drop.large_scale.beta;
        let assoc = associate(beta, &vec![n; beta.nrows()])?;
        let mut eta = UplinkPowers::fpc(beta, &assoc, cfg.fpc_params())?.eta;
        eta[PROBE_USER] = power_for_snr(
            PROBE_USER,
            snr_db,
            &assoc.serving[PROBE_USER],
            beta,
            drop.sigma2_w,
            drop.corr.n_ant(),
        )
        .map_err(|e| Error::Pipeline(format!("drop {}, N = {n}: {e}", drop.index)))?;
        let sigma2_e = (0..beta.nrows()).map(|m| drop.variance_for(m, &assoc.served[m], &eta)).collect();
        Ok(Self { n, snr_db, assoc, eta, sigma2_e })
    }
}

/// Random inputs of one frame; independent of N, SNR and detector.
#[derive(Debug, Clone)]
pub struct TrialDraw {
    pub index: u64,
    pub channels: ChannelRealization,
    pub estimates: ChannelRealization,
    pub info: Vec<Vec<u8>>,
    /// Unit-variance `N_AP × S` noise per AP.
    pub unit_noise: Vec<DMatrix<C64>>,
}

/// Per-detector result of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// One flag per user of interest.
    pub errors: Vec<bool>,
    pub ops: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub cfg: SimConfig,
    pub code: CodeConfig,
    pub soft: SoftConfig,
    pub drops: Vec<DropState>,
    interest: Vec<usize>,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let code = cfg.code_config()?;
        let soft = cfg.soft_config()?;
        let drops = (0..cfg.drops).map(|d| DropState::build(&cfg, d)).collect::<Result<Vec<_>>>()?;
        let interest = if cfg.report_all_users { (0..cfg.geometry.num_users).collect() } else { vec![PROBE_USER] };
        Ok(Self { cfg, code, soft, drops, interest })
    }

    /// Users whose frames are decoded and scored.
    pub fn users_of_interest(&self) -> &[usize] {
        &self.interest
    }

    pub fn n_symbols(&self) -> usize {
        symbols_per_frame(self.code.coded_len(), &self.soft.mapping)
    }

    pub fn drop_of(&self, t: u64) -> &DropState {
        &self.drops[(t % self.cfg.drops) as usize]
    }

    /// Operating points of every drop for one (N, SNR).
    pub fn operating_points(&self, n: usize, snr_db: f64) -> Result<Vec<OperatingPoint>> {
        self.drops.iter().map(|d| OperatingPoint::new(&self.cfg, d, n, snr_db)).collect()
    }

    pub fn draw_trial(&self, t: u64) -> TrialDraw {
        let drop = self.drop_of(t);
        let mut rng = substream(self.cfg.seed, Domain::Trial, t);
        let channels = draw_channels(&drop.corr, &mut rng);
        let obs = training_observable(&channels, &drop.pilots, &drop.training, drop.sigma2_w, &mut rng);
        let estimates = if self.cfg.overrides.perfect_csi { channels.clone() } else { drop.bank.estimate_all(&obs) };
        let info = (0..channels.n_users())
            .map(|_| (0..self.code.info_block_bits).map(|_| u8::from(rng.random::<bool>())).collect())
            .collect();
        let s = self.n_symbols();
        let unit_noise = (0..channels.n_aps())
            .map(|m| DMatrix::from_fn(channels.g(0, m).len(), s, |_, _| complex_normal(&mut rng)))
            .collect();
        TrialDraw { index: t, channels, estimates, info, unit_noise }
    }

    /// Runs every detector in `detectors` on frame `draw` at `point`, which
    /// must belong to the frame's drop.
    pub fn run_trial(&self, point: &OperatingPoint, draw: &TrialDraw, detectors: &[Detector]) -> Result<Vec<TrialOutcome>> {
        let y = self.received(point, draw)?;
        detectors
            .iter()
            .map(|det| {
                let start = Instant::now();
                let (fused, ops) = self.fused_llrs(det, point, draw, &y)?;
                let errors = self
                    .interest
                    .iter()
                    .zip(&fused)
                    .map(|(&k, llrs)| match llrs {
                        None => Ok(true),
                        Some(l) => Ok(viterbi_decode(l, &self.code)? != draw.info[k]),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(TrialOutcome { errors, ops, seconds: start.elapsed().as_secs_f64() })
            })
            .collect()
    }

    /// Fused LLRs of each user of interest for one detector (`None` for a
    /// user in outage), before decoding.
    pub fn trial_llrs(&self, point: &OperatingPoint, draw: &TrialDraw, det: &Detector) -> Result<Vec<Option<Vec<f64>>>> {
        let y = self.received(point, draw)?;
        Ok(self.fused_llrs(det, point, draw, &y)?.0)
    }

    fn received(&self, point: &OperatingPoint, draw: &TrialDraw) -> Result<Vec<DMatrix<C64>>> {
        let frames = draw
            .info
            .iter()
            .map(|b| Frame::encode(b.clone(), &self.code, &self.soft.mapping))
            .collect::<Result<Vec<_>>>()?;
        let symbols: Vec<Vec<C64>> = frames.into_iter().map(|f| f.symbols).collect();
        Ok(uplink_block_with_noise(&draw.channels, &point.eta, &symbols, &draw.unit_noise, self.drop_of(draw.index).sigma2_w))
    }

    fn fused_llrs(
        &self,
        det: &Detector,
        point: &OperatingPoint,
        draw: &TrialDraw,
        y: &[DMatrix<C64>],
    ) -> Result<(Vec<Option<Vec<f64>>>, u64)> {
        if det.is_centralized() {
            self.central_llrs(det, self.drop_of(draw.index), point, draw, y)
        } else {
            self.local_llrs(det, point, draw, y)
        }
    }

    /// Per-AP detection plus CPU fusion. Returns fused LLRs per user of
    /// interest (`None` for users in outage) and the hypothesis count.
    fn local_llrs(
        &self,
        det: &Detector,
        point: &OperatingPoint,
        draw: &TrialDraw,
        y: &[DMatrix<C64>],
    ) -> Result<(Vec<Option<Vec<f64>>>, u64)> {
        let q = self.soft.mapping.q();
        let mut frame = LlrFrame::new(self.code.coded_len());
        let mut ops = 0;
        for (m, served) in point.assoc.served.iter().enumerate() {
            let slots: Vec<(usize, usize)> =
                served.iter().copied().enumerate().filter(|(_, k)| self.interest.contains(k)).collect();
            if slots.is_empty() {
                continue;
            }
            let n = served.len();
            let model = EffectiveModel::build(m, served, &draw.estimates, &point.eta, point.sigma2_e[m])?;
            let targets: Vec<usize> = slots.iter().flat_map(|&(j, _)| dims_bits(j, n, q)).collect();
            let mut cache = PlanCache::default();
            for s in 0..y[m].ncols() {
                let yr = realify_vector(&y[m].column(s).into_owned());
                let out = det
                    .detect_cached(&yr, &model.b_hat_real, model.sigma2_e, &self.soft, &targets, &mut cache)
                    .map_err(|e| Error::Pipeline(format!("{det} at AP {m}, frame {}: {e}", draw.index)))?;
                ops += out.ops;
                for &(j, k) in &slots {
                    scatter(&out.llrs, j, n, q, s, frame.contribution_mut(m, k));
                }
            }
        }
        let fused = self
            .interest
            .iter()
            .map(|&k| {
                let serving = &point.assoc.serving[k];
                if serving.is_empty() {
                    Ok(None)
                } else {
                    fuse_llrs(&frame, k, serving).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((fused, ops))
    }

    /// PM at the CPU. For user `k` the model covers every user served by
    /// some AP in ℳ_k, stacked over ℳ_k with per-AP whitening.
    fn central_llrs(
        &self,
        det: &Detector,
        drop: &DropState,
        point: &OperatingPoint,
        draw: &TrialDraw,
        y: &[DMatrix<C64>],
    ) -> Result<(Vec<Option<Vec<f64>>>, u64)> {
        let r = det.r().unwrap_or(0);
        let q = self.soft.mapping.q();
        let mut ops = 0;
        let mut fused = Vec::with_capacity(self.interest.len());
        for &k in &self.interest {
            let serving = &point.assoc.serving[k];
            if serving.is_empty() {
                fused.push(None);
                continue;
            }
            let mut union: Vec<usize> = serving.iter().flat_map(|&m| point.assoc.served[m].iter().copied()).collect();
            union.sort_unstable();
            union.dedup();
            let n = union.len();
            let slot = union.iter().position(|&u| u == k).expect("k is served by its serving APs");
            let models = serving
                .iter()
                .map(|&m| EffectiveModel::build(m, &union, &draw.estimates, &point.eta, drop.variance_for(m, &union, &point.eta)))
                .collect::<Result<Vec<_>>>()?;
            let targets = dims_bits(slot, n, q).collect::<Vec<_>>();
            let mut llrs = vec![0.0; self.code.coded_len()];
            let mut cache = PlanCache::default();
            for s in 0..self.n_symbols() {
                let ys: Vec<DVector<f64>> =
                    models.iter().map(|md| realify_vector(&y[md.ap].column(s).into_owned())).collect();
                let blocks: Vec<ApBlock<'_>> = models
                    .iter()
                    .zip(&ys)
                    .map(|(md, y)| ApBlock { y, b_hat: &md.b_hat_real, sigma2_e: md.sigma2_e })
                    .collect();
                let (y_st, b_st) = stack_blocks(&blocks)?;
                let out = pm_llrs_cached(&y_st, &b_st, 2.0, &self.soft, r, &targets, &mut cache);
                ops += out.ops;
                scatter(&out.llrs, slot, n, q, s, &mut llrs);
            }
            fused.push(Some(llrs));
        }
        Ok((fused, ops))
    }
}

/// Bit indices of the in-phase and quadrature dimensions of slot `j` in a
/// model with `n` users.
fn dims_bits(j: usize, n: usize, q: usize) -> impl Iterator<Item = usize> {
    [j, n + j].into_iter().flat_map(move |d| d * q..(d + 1) * q)
}

/// Copies slot `j`'s LLRs of symbol `s` into coded-bit positions
/// `s·2q + t` (in-phase) and `s·2q + q + t` (quadrature); padding bits past
/// the end of the codeword are dropped.
fn scatter(llrs: &[f64], j: usize, n: usize, q: usize, s: usize, dst: &mut [f64]) {
    for t in 0..q {
        for (part, d) in [(0, j), (q, n + j)] {
            let pos = s * 2 * q + part + t;
            if pos < dst.len() {
                dst[pos] = llrs[d * q + t];
            }
        }
    }
}
