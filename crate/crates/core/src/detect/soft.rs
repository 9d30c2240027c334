//! Log-domain helpers shared by the soft detectors.

use super::mapping::BitMapping;

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0 }
    }
}

impl LogSumExp {
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// LLR from the two log-sums, clamped to `±limit`. An empty side saturates.
pub fn llr_from(one: &LogSumExp, zero: &LogSumExp, limit: f64) -> f64 {
    let (a, b) = (one.value(), zero.value());
    let l = match (a.is_finite(), b.is_finite()) {
        (true, true) => a - b,
        (true, false) => limit,
        (false, true) => -limit,
        (false, false) => 0.0,
    };
    l.clamp(-limit, limit)
}

/// Bit LLRs of one real dimension observed as `z = gain·a + n`,
/// `n ~ N(0, var)`. Writes `q` values into `out`.
pub fn scalar_llrs(z: f64, gain: f64, var: f64, mapping: &BitMapping, limit: f64, out: &mut [f64]) {
    let var = var.max(f64::MIN_POSITIVE);
    for (t, slot) in out.iter_mut().enumerate().take(mapping.q()) {
        let mut one = LogSumExp::default();
        let mut zero = LogSumExp::default();
        for l in 0..mapping.n_labels() {
            let d = z - gain * mapping.amplitude(l);
            let s = -d * d / (2.0 * var);
            if mapping.bit(l, t) == 1 {
                one.push(s);
            } else {
                zero.push(s);
            }
        }
        *slot = llr_from(&one, &zero, limit);
    }
}
