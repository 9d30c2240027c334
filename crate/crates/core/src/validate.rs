//! Fast self-checks run by `cellfree validate`.
//!
//! Each check compares the library against a closed form or against a
//! second computation of the same quantity and reports one line.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::coding::{conv_encode, viterbi_decode, CodeConfig};
use crate::detect::{exact_ml_llrs, pm_llrs, SoftConfig};
use crate::geometry::{path_loss_db, wrap_distance, PathLossParams, Point};
use crate::harness::fusion::{fuse_llrs, snr_k, LlrFrame};
use crate::rng::{substream, Domain};
use crate::units::{noise_power_w, w_to_dbm};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        noise_power(),
        torus_distance(),
        path_loss(),
        scalar_ml(),
        pm_matches_ml(seed),
        code_round_trip(seed),
        fusion_sum(),
        snr_definition(),
    ]
}

fn noise_power() -> Check {
    let dbm = w_to_dbm(noise_power_w(-174.0, 20e6, 9.0));
    check("noise power", (dbm + 91.99).abs() < 0.01, format!("{dbm:.3} dBm (expect -91.99)"))
}

fn torus_distance() -> Check {
    let a = wrap_distance(Point::new(0.0, 0.0), Point::new(900.0, 0.0), 1000.0);
    let b = wrap_distance(Point::new(100.0, 100.0), Point::new(200.0, 300.0), 1000.0);
    let ok = (a - 100.0).abs() < 1e-9 && (b - 223.6068).abs() < 1e-4;
    check("wrap-around distance", ok, format!("{a:.4} m, {b:.4} m (expect 100, 223.6068)"))
}

fn path_loss() -> Check {
    match path_loss_db(100.0, &PathLossParams::default()) {
        Ok(pl) => check("path loss at 100 m", (pl - 104.0).abs() < 1e-9, format!("{pl:.4} dB (expect 104.0)")),
        Err(e) => check("path loss at 100 m", false, e.to_string()),
    }
}

fn scalar_ml() -> Check {
    let cfg = SoftConfig::default();
    let y = DVector::from_element(1, std::f64::consts::FRAC_1_SQRT_2);
    let b = DMatrix::from_element(1, 1, 1.0);
    match exact_ml_llrs(&y, &b, 1.0, &cfg) {
        Ok(out) => check(
            "scalar exact-ML LLR",
            (out.llrs[0] + 2.0).abs() < 1e-12,
            format!("{:.12} (expect -2, bit 0 maps to +1/sqrt2)", out.llrs[0]),
        ),
        Err(e) => check("scalar exact-ML LLR", false, e.to_string()),
    }
}

fn pm_matches_ml(seed: u64) -> Check {
    let cfg = SoftConfig::default();
    let mut rng = substream(seed, Domain::Validation, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let users = rng.random_range(1..=3);
        let dims = 2 * users;
        let b = DMatrix::from_fn(2 * 4, dims, |_, _| rng.random::<f64>() - 0.5);
        let y = DVector::from_fn(2 * 4, |_, _| rng.random::<f64>() - 0.5);
        let s2 = 0.05 + rng.random::<f64>();
        let Ok(ml) = exact_ml_llrs(&y, &b, s2, &cfg) else {
            return check("PM(r = 2Nq) equals exact ML", false, "exact ML refused a small instance".into());
        };
        let pm = pm_llrs(&y, &b, s2, &cfg, dims);
        for (a, c) in ml.llrs.iter().zip(&pm.llrs) {
            worst = worst.max((a - c).abs());
        }
    }
    check("PM(r = 2Nq) equals exact ML", worst < 1e-9, format!("max |diff| {worst:.2e} over 200 instances"))
}

fn code_round_trip(seed: u64) -> Check {
    let code = CodeConfig::default();
    let mut rng = substream(seed, Domain::Validation, 2);
    let mut bad = 0;
    for _ in 0..100 {
        let info: Vec<u8> = (0..code.info_block_bits).map(|_| u8::from(rng.random::<bool>())).collect();
        let llrs: Vec<f64> = match conv_encode(&info, &code) {
            Ok(c) => c.iter().map(|&b| if b == 1 { 100.0 } else { -100.0 }).collect(),
            Err(_) => return check("Viterbi round trip", false, "encoder rejected default code".into()),
        };
        if viterbi_decode(&llrs, &code).ok().as_deref() != Some(&info[..]) {
            bad += 1;
        }
    }
    check("Viterbi round trip", bad == 0, format!("{bad} of 100 frames decoded wrongly"))
}

fn fusion_sum() -> Check {
    let mut f = LlrFrame::new(1);
    for (m, v) in [2.0, -0.5, 1.0].into_iter().enumerate() {
        let _ = f.insert(m, 0, vec![v]);
    }
    let fused = fuse_llrs(&f, 0, &[0, 1, 2]).map(|v| v[0]).unwrap_or(f64::NAN);
    check("LLR fusion", fused == 2.5, format!("{fused} (expect 2.5)"))
}

fn snr_definition() -> Check {
    let beta = DMatrix::from_element(1, 1, 1e-8);
    let s = snr_k(0, &[0.01], &[0], &beta, 6.31e-13, 8);
    check("SNR bookkeeping", (s - 31.0).abs() < 0.05, format!("{s:.3} dB (expect 31.0)"))
}
