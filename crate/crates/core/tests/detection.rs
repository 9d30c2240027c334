use nalgebra::{DMatrix, DVector};
use rand::Rng;

use cellfree::coding::Frame;
use cellfree::detect::{exact_ml_llrs, mmse_sic_llrs, mrc_llrs, pm_llrs, vblast_order, zf_df_detect, zf_df_llrs, Detector, SoftConfig};
use cellfree::harness::{SimConfig, Simulator, PROBE_USER};
use cellfree::rng::{complex_normal, substream, Domain};
use cellfree::uplink::realify_matrix;

/// Rayleigh model with `users` QPSK users on `n_ant` antennas and a noisy
/// observation whose per-real-dimension noise variance is `s2 / 2`.
fn instance<R: Rng>(rng: &mut R, n_ant: usize, users: usize, s2: f64) -> (DVector<f64>, DMatrix<f64>) {
    let b = realify_matrix(&DMatrix::from_fn(n_ant, users, |_, _| complex_normal(rng)));
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let x = DVector::from_fn(2 * users, |_, _| if rng.random::<bool>() { a } else { -a });
    let n = DVector::from_fn(2 * n_ant, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal) * (s2 / 2.0).sqrt());
    (&b * x + n, b)
}

fn hard(llrs: &[f64]) -> Vec<u8> {
    llrs.iter().map(|&l| u8::from(l > 0.0)).collect()
}

#[test]
fn pm_r2_sign_agreement_with_ml() {
    let cfg = SoftConfig::default();
    let mut rng = substream(11, Domain::Validation, 0);
    let (mut agree, mut total) = (0usize, 0usize);
    for _ in 0..10_000 {
        let (y, b) = instance(&mut rng, 4, 3, 0.5);
        let ml = hard(&exact_ml_llrs(&y, &b, 0.5, &cfg).unwrap().llrs);
        let pm = hard(&pm_llrs(&y, &b, 0.5, &cfg, 2).llrs);
        agree += ml.iter().zip(&pm).filter(|(a, b)| a == b).count();
        total += ml.len();
    }
    let rate = agree as f64 / total as f64;
    assert!(rate >= 0.95, "agreement {rate:.4}");
}

#[test]
fn zf_df_agrees_with_ml_hard_decision_at_10_db() {
    let cfg = SoftConfig::default();
    let s2 = 0.1;
    let mut rng = substream(12, Domain::Validation, 0);
    let (mut agree, mut total) = (0usize, 0usize);
    for _ in 0..5000 {
        let (y, b) = instance(&mut rng, 2, 2, s2);
        let ml = hard(&exact_ml_llrs(&y, &b, s2, &cfg).unwrap().llrs);
        let zf: Vec<u8> = zf_df_detect(&y, &b, &cfg.mapping, &vblast_order(&b)).iter().map(|&l| cfg.mapping.bit(l, 0)).collect();
        agree += ml.iter().zip(&zf).filter(|(a, b)| a == b).count();
        total += ml.len();
    }
    let rate = agree as f64 / total as f64;
    assert!(rate >= 0.90, "agreement {rate:.4}");
}

type Soft = fn(&DVector<f64>, &DMatrix<f64>, f64, &SoftConfig) -> Vec<f64>;

fn all_detectors() -> Vec<(&'static str, Soft)> {
    vec![
        ("exact_ml", |y, b, s, c| exact_ml_llrs(y, b, s, c).unwrap().llrs),
        ("pm(0)", |y, b, s, c| pm_llrs(y, b, s, c, 0).llrs),
        ("pm(2)", |y, b, s, c| pm_llrs(y, b, s, c, 2).llrs),
        ("zf_df", |y, b, s, c| zf_df_llrs(y, b, s, c).llrs),
        ("mmse_sic", |y, b, s, c| mmse_sic_llrs(y, b, s, c).llrs),
        ("mrc", |y, b, s, c| mrc_llrs(y, b, s, c).llrs),
    ]
}

#[test]
fn scalar_llr_is_antisymmetric() {
    let cfg = SoftConfig::default();
    let mut rng = substream(13, Domain::Validation, 0);
    for _ in 0..200 {
        let (y, b) = instance(&mut rng, 3, 1, 0.7);
        for (name, f) in all_detectors() {
            let pos = f(&y, &b, 0.7, &cfg);
            let neg = f(&(-&y), &b, 0.7, &cfg);
            for (p, n) in pos.iter().zip(&neg) {
                assert!((p + n).abs() <= 1e-9 * (1.0 + p.abs()), "{name}: {p} vs {n}");
            }
        }
    }
}

#[test]
fn llrs_are_scale_invariant() {
    let cfg = SoftConfig::default();
    let mut rng = substream(14, Domain::Validation, 0);
    for _ in 0..200 {
        let (y, b) = instance(&mut rng, 4, 3, 0.4);
        let c = 10f64.powf(rng.random::<f64>() * 8.0 - 4.0);
        for (name, f) in all_detectors() {
            let base = f(&y, &b, 0.4, &cfg);
            let scaled = f(&(&y * c), &(&b * c), 0.4 * c * c, &cfg);
            for (p, s) in base.iter().zip(&scaled) {
                assert!((p - s).abs() <= 1e-7 * (1.0 + p.abs()), "{name} at c = {c}: {p} vs {s}");
            }
        }
    }
}

#[test]
fn central_pm_signs_at_least_as_good_as_fused_local_pm() {
    let mut cfg = SimConfig::default();
    cfg.seed = 1;
    cfg.geometry.num_aps = 10;
    cfg.geometry.num_users = 8;
    cfg.geometry.ap_antennas = 4;
    cfg.pilots.tau_p = 4;
    cfg.association.n_served = vec![4];
    let sim = Simulator::new(cfg).unwrap();
    let point = &sim.operating_points(4, 3.5).unwrap()[0];
    let (mut central_only, mut local_only) = (0i64, 0i64);
    for t in 0..100 {
        let draw = sim.draw_trial(t);
        let coded = Frame::encode(draw.info[PROBE_USER].clone(), &sim.code, &sim.soft.mapping).unwrap().coded_bits;
        let c = sim.trial_llrs(point, &draw, &Detector::CentralPm(4)).unwrap()[0].clone().unwrap();
        let l = sim.trial_llrs(point, &draw, &Detector::Pm(4)).unwrap()[0].clone().unwrap();
        for ((&bit, cb), lb) in coded.iter().zip(hard(&c)).zip(hard(&l)) {
            central_only += i64::from(cb == bit && lb != bit);
            local_only += i64::from(lb == bit && cb != bit);
        }
    }
    let slack = 3.0 * ((central_only + local_only) as f64).sqrt();
    assert!(
        central_only as f64 >= local_only as f64 - slack,
        "central right only {central_only}, local right only {local_only}"
    );
}
