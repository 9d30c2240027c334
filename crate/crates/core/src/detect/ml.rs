//! Exact per-bit posterior LLRs by full enumeration.

use nalgebra::{DMatrix, DVector};

use super::soft::{llr_from, LogSumExp};
use super::{SoftConfig, SoftOutput};
use crate::{Error, Result};

/// Steps between full recomputations of the Gray-code residual.
const REFRESH: u64 = 1024;

/// `L(b_i) = log Σ_{x: b_i=1} e^{-‖y−Bx‖²/σ²} − log Σ_{x: b_i=0} e^{-‖y−Bx‖²/σ²}`
/// over all `2^{n_bits}` hypotheses, visited in Gray-code order so each step
/// updates the residual with one column.
pub fn exact_ml_llrs(y: &DVector<f64>, b_hat: &DMatrix<f64>, sigma2_e: f64, cfg: &SoftConfig) -> Result<SoftOutput> {
    let mapping = &cfg.mapping;
    let q = mapping.q();
    let n_dims = b_hat.ncols();
    let n_bits = n_dims * q;
    if n_bits > cfg.max_ml_bits {
        return Err(Error::Capacity { bits: n_bits, cap: cfg.max_ml_bits });
    }
    let total = 1u64 << n_bits;
    let mut bits = vec![0u8; n_bits];
    let mut labels = vec![0usize; n_dims];
    let x_of = |labels: &[usize]| DVector::from_fn(n_dims, |d, _| mapping.amplitude(labels[d]));
    let mut resid = y - b_hat * x_of(&labels);
    let mut one = vec![LogSumExp::default(); n_bits];
    let mut zero = vec![LogSumExp::default(); n_bits];
    for c in 0..total {
        if c > 0 {
            let t = c.trailing_zeros() as usize;
            bits[t] ^= 1;
            let d = t / q;
            let old = labels[d];
            labels[d] = mapping.label(&bits[d * q..(d + 1) * q]);
            if c % REFRESH == 0 {
                resid = y - b_hat * x_of(&labels);
            } else {
                let delta = mapping.amplitude(labels[d]) - mapping.amplitude(old);
                resid.axpy(-delta, &b_hat.column(d), 1.0);
            }
        }
        let s = -resid.norm_squared() / sigma2_e;
        for (i, &b) in bits.iter().enumerate() {
            if b == 1 {
                one[i].push(s);
            } else {
                zero[i].push(s);
            }
        }
    }
    let llrs = (0..n_bits).map(|i| llr_from(&one[i], &zero[i], cfg.llr_clamp)).collect();
    Ok(SoftOutput { llrs, ops: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::BitMapping;

    #[test]
    fn scalar_closed_form() {
        let cfg = SoftConfig::default();
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let b = DMatrix::from_element(1, 1, 1.0);
        let out = exact_ml_llrs(&DVector::from_element(1, a), &b, 1.0, &cfg).unwrap();
        // bit 0 ↦ +a, so y = +a favours bit 0
        assert!((out.llrs[0] + 2.0).abs() < 1e-12, "{}", out.llrs[0]);
        assert_eq!(out.ops, 2);
        let zero = exact_ml_llrs(&DVector::from_element(1, 0.0), &b, 1.0, &cfg).unwrap();
        assert_eq!(zero.llrs[0], 0.0);
    }

    #[test]
    fn capacity_cap() {
        let cfg = SoftConfig { max_ml_bits: 4, ..SoftConfig::default() };
        let b = DMatrix::from_element(4, 6, 1.0);
        let y = DVector::zeros(4);
        assert!(matches!(exact_ml_llrs(&y, &b, 1.0, &cfg), Err(Error::Capacity { bits: 6, cap: 4 })));
    }

    #[test]
    fn higher_order_pam_is_enumerated() {
        let cfg = SoftConfig { mapping: BitMapping::gray_pam(2).unwrap(), ..SoftConfig::default() };
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8]);
        let y = DVector::from_vec(vec![0.4, -0.9]);
        let out = exact_ml_llrs(&y, &b, 0.5, &cfg).unwrap();
        assert_eq!(out.llrs.len(), 4);
        assert_eq!(out.ops, 16);
        // brute force
        let m = &cfg.mapping;
        for i in 0..4 {
            let (mut n1, mut n0) = (0.0, 0.0);
            for h in 0..16usize {
                let bits: Vec<u8> = (0..4).map(|t| ((h >> t) & 1) as u8).collect();
                let x = DVector::from_vec(vec![m.amplitude(m.label(&bits[0..2])), m.amplitude(m.label(&bits[2..4]))]);
                let p = (-(&y - &b * x).norm_squared() / 0.5).exp();
                if bits[i] == 1 { n1 += p } else { n0 += p }
            }
            assert!((out.llrs[i] - (n1 / n0).ln()).abs() < 1e-9);
        }
    }
}
