//! Bit labeling of the real-valued constellation.

use crate::{Error, Result};

/// Gray-labeled PAM alphabet applied independently to the in-phase and
/// quadrature dimensions (q = 1 is QPSK).
///
/// Labels are `q`-bit integers read MSB first; label 0 is the largest
/// amplitude, so for QPSK bit 0 ↦ +1/√2 and bit 1 ↦ −1/√2.
#[derive(Debug, Clone, PartialEq)]
pub struct BitMapping {
    q: usize,
    /// amplitude indexed by label
    amplitudes: Vec<f64>,
}

impl BitMapping {
    pub fn gray_pam(q: usize) -> Result<Self> {
        if q == 0 || q > 8 {
            return Err(Error::Config(format!("bits per real dimension must lie in 1..=8, got {q}")));
        }
        let levels = 1usize << q;
        // unit energy per complex symbol: E[a²] = 1/2 per dimension
        let scale = (1.5 / ((levels * levels - 1) as f64)).sqrt();
        let mut amplitudes = vec![0.0; levels];
        for i in 0..levels {
            let amp = (2.0 * i as f64 - (levels - 1) as f64) * scale;
            let rank = levels - 1 - i;
            amplitudes[rank ^ (rank >> 1)] = amp;
        }
        Ok(Self { q, amplitudes })
    }

    pub fn qpsk() -> Self {
        Self::gray_pam(1).expect("q = 1 is valid")
    }

    /// Bits per real dimension.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_labels(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitude(&self, label: usize) -> f64 {
        self.amplitudes[label]
    }

    /// Average energy per real dimension.
    pub fn energy_per_dim(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum::<f64>() / self.n_labels() as f64
    }

    /// Bit `t` (0 = MSB) of `label`.
    pub fn bit(&self, label: usize, t: usize) -> u8 {
        ((label >> (self.q - 1 - t)) & 1) as u8
    }

    pub fn label(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1))
    }

    /// Mask selecting bit `t` of a label.
    pub fn bit_mask(&self, t: usize) -> usize {
        1 << (self.q - 1 - t)
    }

    /// Nearest amplitude to `z` among labels with `label & mask == value`.
    pub fn slice(&self, z: f64, mask: usize, value: usize) -> usize {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (l, a) in self.amplitudes.iter().enumerate() {
            if l & mask != value {
                continue;
            }
            let d = (z - a).abs();
            if d < best_d {
                best_d = d;
                best = l;
            }
        }
        best
    }
}
