//! Outer convolutional code, symbol mapping and soft-input Viterbi decoding.

use crate::detect::BitMapping;
use crate::{Error, Result, C64};

/// Feedforward convolutional code. Generator taps are read with the MSB on
/// the current input bit (octal convention, e.g. `0o133` for K = 7).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeConfig {
    pub generators: Vec<u32>,
    pub constraint_length: usize,
    pub info_block_bits: usize,
    pub zero_tail: bool,
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self { generators: vec![0o133, 0o171, 0o165], constraint_length: 7, info_block_bits: 100, zero_tail: true }
    }
}

pub fn parse_octal(s: &str) -> Result<u32> {
    u32::from_str_radix(s.trim().trim_start_matches("0o"), 8).map_err(|_| Error::Config(format!("'{s}' is not an octal generator")))
}

impl CodeConfig {
    pub fn new(generators: Vec<u32>, constraint_length: usize, info_block_bits: usize, zero_tail: bool) -> Result<Self> {
        let c = Self { generators, constraint_length, info_block_bits, zero_tail };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.constraint_length;
        if !(2..=16).contains(&k) {
            return Err(Error::Config(format!("constraint length must lie in 2..=16, got {k}")));
        }
        if self.generators.is_empty() {
            return Err(Error::Config("need at least one generator".into()));
        }
        for &g in &self.generators {
            if g == 0 || g >> k != 0 {
                return Err(Error::Config(format!("generator {g:o} is degenerate or wider than K = {k}")));
            }
        }
        if !self.generators.iter().any(|g| g >> (k - 1) & 1 == 1) {
            return Err(Error::Config("no generator taps the current input".into()));
        }
        if self.info_block_bits == 0 {
            return Err(Error::Config("info block must be non-empty".into()));
        }
        Ok(())
    }

    pub fn n_outputs(&self) -> usize {
        self.generators.len()
    }

    pub fn tail_bits(&self) -> usize {
        if self.zero_tail {
            self.constraint_length - 1
        } else {
            0
        }
    }

    pub fn coded_len(&self) -> usize {
        self.n_outputs() * (self.info_block_bits + self.tail_bits())
    }

    fn n_states(&self) -> usize {
        1 << (self.constraint_length - 1)
    }

    /// Output bits and next state for input `u` in `state`.
    fn step(&self, state: usize, u: u8) -> (u32, usize) {
        let reg = ((u as usize) << (self.constraint_length - 1)) | state;
        let mut out = 0u32;
        for (j, &g) in self.generators.iter().enumerate() {
            out |= ((reg as u32 & g).count_ones() & 1) << j;
        }
        (out, reg >> 1)
    }
}

/// Encodes `info` (zero-padded with the tail when configured); output bits
/// are interleaved per input step, generator by generator.
pub fn conv_encode(info: &[u8], code: &CodeConfig) -> Result<Vec<u8>> {
    if info.len() != code.info_block_bits {
        return Err(Error::Config(format!("expected {} info bits, got {}", code.info_block_bits, info.len())));
    }
    let mut state = 0;
    let mut out = Vec::with_capacity(code.coded_len());
    for &u in info.iter().chain(std::iter::repeat_n(&0u8, code.tail_bits())) {
        let (bits, next) = code.step(state, u & 1);
        out.extend((0..code.n_outputs()).map(|j| ((bits >> j) & 1) as u8));
        state = next;
    }
    Ok(out)
}

/// Max-sum Viterbi over the code trellis. A coded bit `c` with LLR `L`
/// contributes `+L/2` if `c = 1` and `−L/2` otherwise.
pub fn viterbi_decode(llrs: &[f64], code: &CodeConfig) -> Result<Vec<u8>> {
    if llrs.len() != code.coded_len() {
        return Err(Error::Config(format!("expected {} LLRs, got {}", code.coded_len(), llrs.len())));
    }
    let n_states = code.n_states();
    let n_out = code.n_outputs();
    let steps = code.info_block_bits + code.tail_bits();
    let trellis: Vec<[(u32, usize); 2]> = (0..n_states).map(|s| [code.step(s, 0), code.step(s, 1)]).collect();

    let mut metric = vec![f64::NEG_INFINITY; n_states];
    metric[0] = 0.0;
    let mut next = vec![f64::NEG_INFINITY; n_states];
    // survivor[t][s] = (previous state, input bit)
    let mut survivor = vec![vec![(0usize, 0u8); n_states]; steps];
    for t in 0..steps {
        let l = &llrs[t * n_out..(t + 1) * n_out];
        next.fill(f64::NEG_INFINITY);
        let tail = t >= code.info_block_bits;
        for s in 0..n_states {
            if metric[s] == f64::NEG_INFINITY {
                continue;
            }
            for u in 0..(if tail { 1 } else { 2 }) {
                let (bits, ns) = trellis[s][u];
                let bm: f64 = l.iter().enumerate().map(|(j, &v)| if (bits >> j) & 1 == 1 { v / 2.0 } else { -v / 2.0 }).sum();
                let cand = metric[s] + bm;
                if cand > next[ns] {
                    next[ns] = cand;
                    survivor[t][ns] = (s, u as u8);
                }
            }
        }
        std::mem::swap(&mut metric, &mut next);
    }
    let mut state = if code.zero_tail {
        0
    } else {
        (0..n_states).max_by(|&a, &b| metric[a].total_cmp(&metric[b]).then(b.cmp(&a))).unwrap_or(0)
    };
    let mut bits = vec![0u8; steps];
    for t in (0..steps).rev() {
        let (prev, u) = survivor[t][state];
        bits[t] = u;
        state = prev;
    }
    bits.truncate(code.info_block_bits);
    Ok(bits)
}

/// Pairs `(b_I, b_Q)` of `q` bits each onto complex symbols.
pub fn map_symbols(bits: &[u8], mapping: &BitMapping) -> Result<Vec<C64>> {
    let q = mapping.q();
    if bits.len() % (2 * q) != 0 {
        return Err(Error::OddBitCount(bits.len()));
    }
    Ok(bits
        .chunks(2 * q)
        .map(|c| C64::new(mapping.amplitude(mapping.label(&c[..q])), mapping.amplitude(mapping.label(&c[q..]))))
        .collect())
}

pub fn qpsk_map(bits: &[u8]) -> Result<Vec<C64>> {
    map_symbols(bits, &BitMapping::qpsk())
}

/// Number of symbols needed for `n_bits` coded bits; the last symbol is
/// zero-padded when the bit count is not a multiple of `2q`.
pub fn symbols_per_frame(n_bits: usize, mapping: &BitMapping) -> usize {
    n_bits.div_ceil(2 * mapping.q())
}

/// One user's frame: info bits, coded bits and the transmitted symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub info_bits: Vec<u8>,
    pub coded_bits: Vec<u8>,
    pub symbols: Vec<C64>,
}

impl Frame {
    pub fn encode(info_bits: Vec<u8>, code: &CodeConfig, mapping: &BitMapping) -> Result<Self> {
        let coded_bits = conv_encode(&info_bits, code)?;
        let mut padded = coded_bits.clone();
        padded.resize(symbols_per_frame(coded_bits.len(), mapping) * 2 * mapping.q(), 0);
        let symbols = map_symbols(&padded, mapping)?;
        Ok(Self { info_bits, coded_bits, symbols })
    }
}
