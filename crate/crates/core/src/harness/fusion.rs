//! CPU-side combination of per-AP LLRs.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::units::lin_to_db;
use crate::{Error, Result};

/// Local LLRs keyed by `(AP, user)`, each one value per coded bit.
#[derive(Debug, Clone, Default)]
pub struct LlrFrame {
    n_bits: usize,
    local: BTreeMap<(usize, usize), Vec<f64>>,
}

impl LlrFrame {
    pub fn new(n_bits: usize) -> Self {
        Self { n_bits, local: BTreeMap::new() }
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    /// Zero-initialized contribution of AP `m` for user `k`.
    pub fn contribution_mut(&mut self, m: usize, k: usize) -> &mut Vec<f64> {
        let n = self.n_bits;
        self.local.entry((m, k)).or_insert_with(|| vec![0.0; n])
    }

    pub fn insert(&mut self, m: usize, k: usize, llrs: Vec<f64>) -> Result<()> {
        if llrs.len() != self.n_bits {
            return Err(Error::Pipeline(format!(
                "AP {m} sent {} LLRs for user {k}, expected {}",
                llrs.len(),
                self.n_bits
            )));
        }
        self.local.insert((m, k), llrs);
        Ok(())
    }

    pub fn local(&self, m: usize, k: usize) -> Option<&[f64]> {
        self.local.get(&(m, k)).map(Vec::as_slice)
    }
}

/// `f_k(i) = Σ_{m∈ℳ_k} L_{m,k}(i)`.
pub fn fuse_llrs(frame: &LlrFrame, k: usize, serving: &[usize]) -> Result<Vec<f64>> {
    let mut fused = vec![0.0; frame.n_bits];
    for &m in serving {
        let l = frame
            .local(m, k)
            .ok_or_else(|| Error::Pipeline(format!("AP {m} serves user {k} but sent no LLRs")))?;
        for (f, v) in fused.iter_mut().zip(l) {
            *f += v;
        }
    }
    Ok(fused)
}

/// Uncoded decision: bit 1 iff the LLR is positive.
pub fn hard_decision(llrs: &[f64]) -> Vec<u8> {
    llrs.iter().map(|&l| u8::from(l > 0.0)).collect()
}

/// `SNR_k = η_k N_AP Σ_{m∈ℳ_k} β_{m,k} / σ²_w` in dB; `-∞` when either the
/// power or the serving gain is zero.
pub fn snr_k(k: usize, eta: &[f64], serving: &[usize], beta: &DMatrix<f64>, sigma2_w: f64, n_ap: usize) -> f64 {
    let gain: f64 = serving.iter().map(|&m| beta[(m, k)]).sum();
    lin_to_db(eta[k] * n_ap as f64 * gain / sigma2_w)
}

/// Inverse of [`snr_k`]: the power that puts user `k` at `snr_db`.
pub fn power_for_snr(k: usize, snr_db: f64, serving: &[usize], beta: &DMatrix<f64>, sigma2_w: f64, n_ap: usize) -> Result<f64> {
    let gain: f64 = serving.iter().map(|&m| beta[(m, k)]).sum();
    if !(gain > 0.0) {
        return Err(Error::Pipeline(format!("user {k} has no serving AP, SNR is undefined")));
    }
    Ok(10f64.powf(snr_db / 10.0) * sigma2_w / (n_ap as f64 * gain))
}
