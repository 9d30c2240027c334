//! Linear baselines with Gaussian soft outputs: MMSE-SIC and MRC.

use nalgebra::{DMatrix, DVector};

use super::soft::scalar_llrs;
use super::{SoftConfig, SoftOutput};

/// Successive interference cancellation with per-stage MMSE filtering.
///
/// With `E_s` the per-dimension symbol energy and `Q = E_s H Hᵀ + σ²_e/2·I`
/// over the not yet detected columns `H`, the filter for column `j` is
/// `w = Q⁻¹ h_j`; its output `z = wᵀy = μ x_j + n` has gain `μ = wᵀh_j`
/// and `Var(n) = wᵀQw − E_s μ² = μ(1 − E_s μ)`. The column with the largest
/// `μ` (largest post-filter SINR) is demapped, sliced and cancelled first.
pub fn mmse_sic_llrs(y: &DVector<f64>, b_hat: &DMatrix<f64>, sigma2_e: f64, cfg: &SoftConfig) -> SoftOutput {
    let q = cfg.mapping.q();
    let es = cfg.mapping.energy_per_dim();
    let rows = b_hat.nrows();
    let mut llrs = vec![0.0; b_hat.ncols() * q];
    let mut remaining: Vec<usize> = (0..b_hat.ncols()).collect();
    let mut resid = y.clone();
    while !remaining.is_empty() {
        let h = b_hat.select_columns(&remaining);
        let cov = &h * h.transpose() * es + DMatrix::identity(rows, rows) * (sigma2_e / 2.0);
        let w = match cov.cholesky() {
            Some(ch) => ch.solve(&h),
            None => {
                log::warn!("MMSE-SIC covariance is singular; falling back to zero filter");
                DMatrix::zeros(rows, remaining.len())
            }
        };
        let mut best = 0;
        let mut best_mu = f64::NEG_INFINITY;
        for i in 0..remaining.len() {
            let mu = w.column(i).dot(&h.column(i));
            if mu > best_mu * (1.0 + 1e-12) || best_mu == f64::NEG_INFINITY {
                best = i;
                best_mu = mu;
            }
        }
        let col = remaining[best];
        let mu = best_mu;
        let z = w.column(best).dot(&resid);
        let var = (mu * (1.0 - es * mu)).max(mu * 1e-300);
        scalar_llrs(z, mu, var, &cfg.mapping, cfg.llr_clamp, &mut llrs[col * q..(col + 1) * q]);
        if mu > 0.0 {
            let l = cfg.mapping.slice(z / mu, 0, 0);
            resid.axpy(-cfg.mapping.amplitude(l), &b_hat.column(col), 1.0);
        }
        remaining.remove(best);
    }
    SoftOutput { llrs, ops: 1 }
}

/// Matched filter per real dimension: `z_j = b_jᵀy/‖b_j‖²`, demapped with
/// noise variance `σ²_e/2/‖b_j‖² + E_s Σ_{l≠j} (b_jᵀb_l)²/‖b_j‖⁴`.
pub fn mrc_llrs(y: &DVector<f64>, b_hat: &DMatrix<f64>, sigma2_e: f64, cfg: &SoftConfig) -> SoftOutput {
    let q = cfg.mapping.q();
    let es = cfg.mapping.energy_per_dim();
    let gram = b_hat.transpose() * b_hat;
    let proj = b_hat.transpose() * y;
    let mut llrs = vec![0.0; b_hat.ncols() * q];
    for j in 0..b_hat.ncols() {
        let nrm2 = gram[(j, j)];
        if !(nrm2 > 0.0) {
            log::warn!("MRC column {j} has zero norm; emitting zero LLRs");
            continue;
        }
        let leak: f64 = (0..b_hat.ncols()).filter(|&l| l != j).map(|l| gram[(j, l)].powi(2)).sum();
        let var = sigma2_e / 2.0 / nrm2 + es * leak / (nrm2 * nrm2);
        scalar_llrs(proj[j] / nrm2, 1.0, var, &cfg.mapping, cfg.llr_clamp, &mut llrs[j * q..(j + 1) * q]);
    }
    SoftOutput { llrs, ops: 1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::exact_ml_llrs;
    use crate::rng::{complex_normal, substream, Domain};
    use rand::Rng;

    #[test]
    fn mmse_sic_scalar_matches_exact_at_low_snr() {
        let cfg = SoftConfig::default();
        let b = DMatrix::from_element(1, 1, 0.8);
        for snr_db in [-10.0, -5.0, 0.0] {
            let sigma2 = 0.64 / 10f64.powf(snr_db / 10.0);
            for y in [-0.9, -0.2, 0.1, 0.6] {
                let y = DVector::from_element(1, y);
                let ml = exact_ml_llrs(&y, &b, sigma2, &cfg).unwrap().llrs[0];
                let sic = mmse_sic_llrs(&y, &b, sigma2, &cfg).llrs[0];
                assert!((ml - sic).abs() <= 0.05 * ml.abs() + 1e-12, "{ml} vs {sic}");
            }
        }
    }

    #[test]
    fn noiseless_orthogonal_saturates() {
        let cfg = SoftConfig::default();
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let labels = [0usize, 1];
        let x = DVector::from_fn(2, |i, _| cfg.mapping.amplitude(labels[i]));
        let out = mmse_sic_llrs(&(&b * x), &b, 1e-20, &cfg);
        assert_eq!(out.llrs, vec![-100.0, 100.0]);
    }

    #[test]
    fn decoupled_column_ignores_other_users() {
        let cfg = SoftConfig::default();
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.7, 0.0, -0.4]);
        let a = cfg.mapping.amplitude(0);
        let first = mmse_sic_llrs(&DVector::from_vec(vec![0.3, 0.7 * a, -0.4 * a]), &b, 0.5, &cfg).llrs[0];
        let second = mmse_sic_llrs(&DVector::from_vec(vec![0.3, -0.7 * a, 0.4 * a]), &b, 0.5, &cfg).llrs[0];
        assert!((first - second).abs() < 1e-12);
        let m1 = mrc_llrs(&DVector::from_vec(vec![0.3, 0.7 * a, -0.4 * a]), &b, 0.5, &cfg).llrs[0];
        let m2 = mrc_llrs(&DVector::from_vec(vec![0.3, -0.7 * a, 0.4 * a]), &b, 0.5, &cfg).llrs[0];
        assert!((m1 - m2).abs() < 1e-12);
    }

    #[test]
    fn mrc_orthogonal_and_zero_input() {
        let cfg = SoftConfig::default();
        let b = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]);
        let y = DVector::from_vec(vec![0.4, -0.1]);
        let out = mrc_llrs(&y, &b, 0.8, &cfg);
        let a = cfg.mapping.amplitude(0);
        // single-user closed form: z = y/b, var = σ²/2/b²
        let expect0 = -2.0 * (0.4 / 1.5) * a / (0.4 / 2.25);
        assert!((out.llrs[0] - expect0).abs() < 1e-12);
        let zero = mrc_llrs(&DVector::zeros(2), &b, 0.8, &cfg);
        assert!(zero.llrs.iter().all(|l| *l == 0.0));
        let degenerate = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(mrc_llrs(&y, &degenerate, 0.8, &cfg).llrs[1], 0.0);
    }

    #[test]
    fn mrc_residual_variance_matches_leakage_formula() {
        // Monte Carlo oracle with two correlated columns
        let cfg = SoftConfig::default();
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.6, 0.3, 0.8, -0.2, 0.1]);
        let sigma2: f64 = 0.4;
        let es = cfg.mapping.energy_per_dim();
        let gram: DMatrix<f64> = b.transpose() * &b;
        let mut rng = substream(9, Domain::Validation, 0);
        let draws = 100_000;
        for j in 0..2 {
            let nrm2 = gram[(j, j)];
            let l = 1 - j;
            let predicted = sigma2 / 2.0 / nrm2 + es * gram[(j, l)].powi(2) / (nrm2 * nrm2);
            let mut acc = 0.0;
            for _ in 0..draws {
                let x = DVector::from_fn(2, |_, _| cfg.mapping.amplitude(rng.random_range(0..2)));
                let n = DVector::from_fn(3, |_, _| complex_normal(&mut rng).re * sigma2.sqrt());
                let y = &b * &x + n;
                let z = b.column(j).dot(&y) / nrm2;
                acc += (z - x[j]).powi(2);
            }
            let emp = acc / draws as f64;
            assert!((emp - predicted).abs() / predicted < 0.05, "{emp} vs {predicted}");
        }
    }
}
