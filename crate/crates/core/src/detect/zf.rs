//! Zero-forcing decision feedback with V-BLAST ordering.
//!
//! Nulling rows come from the pseudo-inverse of the undetected columns. When
//! those columns are rank deficient (users sharing a pilot have parallel
//! estimates) the ridge-regularized row no longer nulls exactly, so every
//! step records its actual gain on the target and its residual leakage from
//! the other undetected columns; soft outputs and slicing use both.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::mapping::BitMapping;
use super::soft::scalar_llrs;
use super::{SoftConfig, SoftOutput};
use crate::linalg::pseudo_inverse;

/// Relative margin under which two post-detection noise gains count as a tie;
/// ties go to the lower column index.
const TIE_RTOL: f64 = 1e-6;

/// Leakage-to-gain² ratio above which a row counts as not nulling.
const LEAK_RTOL: f64 = 1e-6;

/// One nulling-and-cancellation stage.
#[derive(Debug, Clone)]
pub struct ZfStep {
    pub col: usize,
    pub row: DVector<f64>,
    /// `row·h_col`; 1 for exact nulling.
    pub gain: f64,
    /// `Σ (row·h_j)²` over the other columns still undetected at this stage.
    pub leak: f64,
}

impl ZfStep {
    fn new(h: &DMatrix<f64>, remaining: &[usize], i: usize, row: DVector<f64>) -> Self {
        let col = remaining[i];
        let gain = row.dot(&h.column(col));
        let leak = remaining.iter().filter(|&&j| j != col).map(|&j| row.dot(&h.column(j)).powi(2)).sum();
        Self { col, row, gain, leak }
    }

    /// Whether the row fails to separate its column from the others.
    pub fn is_deficient(&self) -> bool {
        !(self.gain > 0.0) || self.leak > LEAK_RTOL * self.gain * self.gain
    }

    /// Noise gain `‖row‖²/gain²`; equals `‖row‖²` under exact nulling.
    fn noise_gain(&self) -> f64 {
        self.row.norm_squared() / (self.gain * self.gain)
    }

    /// Scaled decision statistic `z/gain`.
    fn statistic(&self, resid: &DVector<f64>) -> (f64, f64) {
        let z = self.row.dot(resid);
        (z, if self.gain > 0.0 { z / self.gain } else { 0.0 })
    }
}

/// Precomputed nulling-and-cancellation schedule for a fixed channel matrix.
#[derive(Debug, Clone)]
pub struct ZfDfPlan {
    pub steps: Vec<ZfStep>,
}

impl ZfDfPlan {
    /// Greedy V-BLAST schedule over the listed columns of `h`: at each stage
    /// the remaining column whose pseudo-inverse row has the smallest norm
    /// (largest post-equalization SNR) is detected and removed. Columns that
    /// cannot be nulled go after all that can.
    pub fn new(h: &DMatrix<f64>, columns: &[usize]) -> Self {
        let mut remaining = columns.to_vec();
        let mut steps = Vec::with_capacity(columns.len());
        while !remaining.is_empty() {
            let pinv = pseudo_inverse(&h.select_columns(&remaining));
            let mut best: Option<ZfStep> = None;
            for i in 0..remaining.len() {
                let cand = ZfStep::new(h, &remaining, i, pinv.row(i).transpose());
                let better = match &best {
                    None => true,
                    Some(b) => match (cand.is_deficient(), b.is_deficient()) {
                        (false, true) => true,
                        (true, false) => false,
                        _ => {
                            let (c, o) = (cand.noise_gain(), b.noise_gain());
                            c < o * (1.0 - TIE_RTOL) || (c <= o * (1.0 + TIE_RTOL) && cand.col < b.col)
                        }
                    },
                };
                if better {
                    best = Some(cand);
                }
            }
            let step = best.expect("remaining is non-empty");
            remaining.retain(|&c| c != step.col);
            steps.push(step);
        }
        Self { steps }
    }

    pub fn full(h: &DMatrix<f64>) -> Self {
        Self::new(h, &(0..h.ncols()).collect::<Vec<_>>())
    }

    /// Plan with a prescribed detection order.
    pub fn with_order(h: &DMatrix<f64>, order: &[usize]) -> Self {
        let steps = (0..order.len())
            .map(|i| {
                let rest = &order[i..];
                let pinv = pseudo_inverse(&h.select_columns(rest));
                ZfStep::new(h, rest, 0, pinv.row(0).transpose())
            })
            .collect();
        Self { steps }
    }

    pub fn order(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.col).collect()
    }

    /// Runs nulling and cancellation on `y`. `constraint[c] = (mask, value)`
    /// restricts column `c`'s labels; `labels[c]` receives the decisions.
    pub fn detect(
        &self,
        y: &DVector<f64>,
        h: &DMatrix<f64>,
        mapping: &BitMapping,
        constraint: &[(usize, usize)],
        labels: &mut [usize],
    ) {
        let mut resid = y.clone();
        for step in &self.steps {
            let (_, x) = step.statistic(&resid);
            let (mask, value) = constraint[step.col];
            let l = mapping.slice(x, mask, value);
            labels[step.col] = l;
            resid.axpy(-mapping.amplitude(l), &h.column(step.col), 1.0);
        }
    }
}

/// ZF-DF schedules for one channel matrix: the full V-BLAST plan and plans
/// over subsets of free columns, reused across symbol intervals.
#[derive(Debug, Clone, Default)]
pub struct PlanCache {
    pub(crate) full: Option<ZfDfPlan>,
    pub(crate) partial: HashMap<Vec<usize>, ZfDfPlan>,
}

impl PlanCache {
    pub fn full(&mut self, h: &DMatrix<f64>) -> &ZfDfPlan {
        self.full.get_or_insert_with(|| ZfDfPlan::full(h))
    }
}

/// V-BLAST detection order of the columns of `b_hat`.
pub fn vblast_order(b_hat: &DMatrix<f64>) -> Vec<usize> {
    ZfDfPlan::full(b_hat).order()
}

/// Hard ZF-DF decisions (labels per real dimension) in the given order.
pub fn zf_df_detect(y: &DVector<f64>, b_hat: &DMatrix<f64>, mapping: &BitMapping, order: &[usize]) -> Vec<usize> {
    let mut labels = vec![0; b_hat.ncols()];
    ZfDfPlan::with_order(b_hat, order).detect(y, b_hat, mapping, &vec![(0, 0); b_hat.ncols()], &mut labels);
    labels
}

/// ZF-DF with V-BLAST ordering and Gaussian soft outputs: each nulled output
/// `z = g·x + n` is demapped with `Var(n) = ‖w‖²σ²_e/2 + E_s·leak`, then the
/// hard decision is cancelled. Under exact nulling `g = 1` and `leak = 0`.
pub fn zf_df_llrs(y: &DVector<f64>, b_hat: &DMatrix<f64>, sigma2_e: f64, cfg: &SoftConfig) -> SoftOutput {
    zf_df_llrs_cached(y, b_hat, sigma2_e, cfg, &mut PlanCache::default())
}

pub fn zf_df_llrs_cached(
    y: &DVector<f64>,
    b_hat: &DMatrix<f64>,
    sigma2_e: f64,
    cfg: &SoftConfig,
    cache: &mut PlanCache,
) -> SoftOutput {
    let q = cfg.mapping.q();
    let es = cfg.mapping.energy_per_dim();
    let plan = cache.full(b_hat);
    let mut llrs = vec![0.0; b_hat.ncols() * q];
    let mut resid = y.clone();
    for step in &plan.steps {
        let (z, x) = step.statistic(&resid);
        let var = step.row.norm_squared() * sigma2_e / 2.0 + es * step.leak;
        let col = step.col;
        scalar_llrs(z, step.gain, var, &cfg.mapping, cfg.llr_clamp, &mut llrs[col * q..(col + 1) * q]);
        let l = cfg.mapping.slice(x, 0, 0);
        resid.axpy(-cfg.mapping.amplitude(l), &b_hat.column(col), 1.0);
    }
    SoftOutput { llrs, ops: 1 }
}
