//! FER sweeps over detectors, N and SNR, with CSV output.

use std::io::Write;

use rayon::prelude::*;

use super::config::SimConfig;
use super::sim::{OperatingPoint, Simulator, TrialOutcome};
use crate::detect::Detector;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 9] = ["detector", "r", "N", "snr_db", "frames", "frame_errors", "fer", "wall_seconds", "op_count"];

#[derive(Debug, Clone, PartialEq)]
pub struct FerRecord {
    pub detector: Detector,
    pub n: usize,
    pub snr_db: f64,
    pub user: usize,
    pub frames: u64,
    pub frame_errors: u64,
    pub fer: f64,
    pub wall_seconds: f64,
    pub op_count: u64,
    /// `max_frames` was reached before `target_frame_errors`.
    pub low_confidence: bool,
}

impl FerRecord {
    pub fn r(&self) -> Option<usize> {
        self.detector.r()
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    frames: u64,
    errors: u64,
    ops: u64,
    seconds: f64,
    done: bool,
}

impl Tally {
    fn add(&mut self, error: bool, out: &TrialOutcome, target: u64, cap: u64) {
        if self.done {
            return;
        }
        self.frames += 1;
        self.errors += u64::from(error);
        self.ops += out.ops;
        self.seconds += out.seconds;
        self.done = self.errors >= target || self.frames >= cap;
    }
}

/// Runs frames `0, 1, 2, …` for every detector at one (N, SNR) until each
/// detector has `target_frame_errors` errors or `max_frames` frames.
///
/// Frames are simulated in parallel batches but tallied in index order, so
/// where each detector stops does not depend on batch size or thread count.
pub fn run_point(sim: &Simulator, points: &[OperatingPoint], detectors: &[Detector]) -> Result<Vec<FerRecord>> {
    let cfg = &sim.cfg;
    let users = sim.users_of_interest();
    let mut tallies = vec![vec![Tally::default(); users.len()]; detectors.len()];
    let mut next = 0u64;
    while next < cfg.max_frames {
        let active: Vec<usize> = (0..detectors.len()).filter(|&d| tallies[d].iter().any(|t| !t.done)).collect();
        if active.is_empty() {
            break;
        }
        let dets: Vec<Detector> = active.iter().map(|&d| detectors[d]).collect();
        let end = (next + cfg.batch_frames).min(cfg.max_frames);
        let batch = (next..end)
            .into_par_iter()
            .map(|t| {
                let draw = sim.draw_trial(t);
                sim.run_trial(&points[(t % cfg.drops) as usize], &draw, &dets)
            })
            .collect::<Result<Vec<_>>>()?;
        for outcomes in &batch {
            for (&d, out) in active.iter().zip(outcomes) {
                for (tally, &err) in tallies[d].iter_mut().zip(&out.errors) {
                    tally.add(err, out, cfg.target_frame_errors, cfg.max_frames);
                }
            }
        }
        next = end;
    }
    let (n, snr_db) = (points[0].n, points[0].snr_db);
    let mut records = Vec::new();
    for (d, det) in detectors.iter().enumerate() {
        for (u, t) in tallies[d].iter().enumerate() {
            let low_confidence = t.errors < cfg.target_frame_errors;
            if low_confidence {
                log::warn!(
                    "{det}, N = {n}, SNR = {snr_db} dB, user {}: only {} errors in {} frames",
                    users[u],
                    t.errors,
                    t.frames
                );
            }
            records.push(FerRecord {
                detector: *det,
                n,
                snr_db,
                user: users[u],
                frames: t.frames,
                frame_errors: t.errors,
                fer: if t.frames > 0 { t.errors as f64 / t.frames as f64 } else { 0.0 },
                wall_seconds: if cfg.report_wall_time { t.seconds } else { 0.0 },
                op_count: t.ops,
                low_confidence,
            });
        }
    }
    Ok(records)
}

/// Probe-user frame-error flags of frames `0..frames`, one row per
/// detector. All detectors see identical frames, so rows can be compared
/// frame by frame.
pub fn paired_errors(sim: &Simulator, points: &[OperatingPoint], detectors: &[Detector], frames: u64) -> Result<Vec<Vec<bool>>> {
    let per_frame = (0..frames)
        .into_par_iter()
        .map(|t| {
            let draw = sim.draw_trial(t);
            sim.run_trial(&points[(t % sim.cfg.drops) as usize], &draw, detectors)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..detectors.len())
        .map(|d| per_frame.iter().map(|outs| outs[d].errors.first().copied().unwrap_or(true)).collect())
        .collect())
}

/// Full sweep over `n_served × snr_points_db` for every configured detector.
pub fn run_sweep(cfg: &SimConfig) -> Result<Vec<FerRecord>> {
    cfg.validate()?;
    let detectors = &cfg.detection.detectors;
    if detectors.is_empty() {
        return Ok(Vec::new());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let sim = Simulator::new(cfg.clone())?;
        let mut records = Vec::new();
        for &n in &cfg.association.n_served {
            for &snr in &cfg.snr_points_db {
                log::info!("N = {n}, SNR = {snr} dB");
                let points = sim.operating_points(n, snr)?;
                records.extend(run_point(&sim, &points, detectors)?);
            }
        }
        sort_records(&mut records, detectors);
        Ok(records)
    })
}

/// Detector name (in order of first appearance in `detectors`), then N, r,
/// SNR and user.
pub fn sort_records(records: &mut [FerRecord], detectors: &[Detector]) {
    let rank = |d: &Detector| detectors.iter().position(|x| x.name() == d.name()).unwrap_or(usize::MAX);
    records.sort_by(|a, b| {
        rank(&a.detector)
            .cmp(&rank(&b.detector))
            .then(a.n.cmp(&b.n))
            .then(a.r().cmp(&b.r()))
            .then(a.snr_db.total_cmp(&b.snr_db))
            .then(a.user.cmp(&b.user))
    });
}

/// Writes the CSV table; `with_user` appends a `user` column.
pub fn write_csv<W: Write>(records: &[FerRecord], with_user: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = CSV_HEADER.to_vec();
    if with_user {
        header.push("user");
    }
    w.write_record(&header)?;
    for rec in records {
        let mut row = vec![
            rec.detector.name().to_string(),
            rec.r().map(|r| r.to_string()).unwrap_or_default(),
            rec.n.to_string(),
            rec.snr_db.to_string(),
            rec.frames.to_string(),
            rec.frame_errors.to_string(),
            rec.fer.to_string(),
            format!("{:.6}", rec.wall_seconds),
            rec.op_count.to_string(),
        ];
        if with_user {
            row.push(rec.user.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
