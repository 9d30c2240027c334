//! Partial marginalization: exact marginalization over `r` bits per target
//! bit, max-log over the rest with ZF-DF completing each hypothesis.
//!
//! For target bit `i` the exactly marginalized set is `{i}` plus the `r − 1`
//! least reliable other bits, where reliability follows the V-BLAST
//! detection order of the full model (detected first = most reliable). Each
//! of the `2^r` assignments of that set is completed by ZF-DF on the model
//! with the fixed dimensions subtracted and their columns removed, and the
//! completed hypothesis is scored by `−‖y − B̂x‖²/σ²_e`.
//!
//! `r = 0` uses the unconstrained ZF-DF solution as one hypothesis and, per
//! target bit, the ZF-DF completion with that bit forced to its complement
//! as the other.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::mapping::BitMapping;
use super::soft::{llr_from, LogSumExp};
use super::zf::{PlanCache, ZfDfPlan};
use super::{SoftConfig, SoftOutput};
use crate::{Error, Result};

/// PM LLRs for every bit of the model.
pub fn pm_llrs(y: &DVector<f64>, b_hat: &DMatrix<f64>, sigma2_e: f64, cfg: &SoftConfig, r: usize) -> SoftOutput {
    let all: Vec<usize> = (0..b_hat.ncols() * cfg.mapping.q()).collect();
    pm_llrs_for(y, b_hat, sigma2_e, cfg, r, &all)
}

/// PM LLRs for the bits listed in `targets`; other entries are left at 0.
pub fn pm_llrs_for(
    y: &DVector<f64>,
    b_hat: &DMatrix<f64>,
    sigma2_e: f64,
    cfg: &SoftConfig,
    r: usize,
    targets: &[usize],
) -> SoftOutput {
    pm_llrs_cached(y, b_hat, sigma2_e, cfg, r, targets, &mut PlanCache::default())
}

/// [`pm_llrs_for`] reusing ZF-DF schedules from `cache`, which must only
/// ever see one `b_hat`.
pub fn pm_llrs_cached(
    y: &DVector<f64>,
    b_hat: &DMatrix<f64>,
    sigma2_e: f64,
    cfg: &SoftConfig,
    r: usize,
    targets: &[usize],
    cache: &mut PlanCache,
) -> SoftOutput {
    let mapping = &cfg.mapping;
    let q = mapping.q();
    let n_dims = b_hat.ncols();
    let n_bits = n_dims * q;
    let r = r.min(n_bits);
    let full_mask = mapping.n_labels() - 1;
    let score = |labels: &[usize]| {
        let x = DVector::from_fn(n_dims, |d, _| mapping.amplitude(labels[d]));
        -(y - b_hat * x).norm_squared() / sigma2_e
    };

    let PlanCache { full, partial: plans } = cache;
    let full_plan = full.get_or_insert_with(|| ZfDfPlan::full(b_hat));
    let mut llrs = vec![0.0; n_bits];
    let mut ops = 0u64;

    if r == 0 {
        let free = vec![(0, 0); n_dims];
        let mut base = vec![0; n_dims];
        full_plan.detect(y, b_hat, mapping, &free, &mut base);
        ops += 1;
        let s0 = score(&base);
        for &i in targets {
            let (d, t) = (i / q, i % q);
            let mask = mapping.bit_mask(t);
            let current = mapping.bit(base[d], t);
            let mut constraint = vec![(0, 0); n_dims];
            constraint[d] = (mask, if current == 1 { 0 } else { mask });
            let labels = complete(y, b_hat, mapping, &constraint, full_mask, plans);
            ops += 1;
            let s1 = score(&labels);
            let l = if current == 1 { s0 - s1 } else { s1 - s0 };
            llrs[i] = l.clamp(-cfg.llr_clamp, cfg.llr_clamp);
        }
        return SoftOutput { llrs, ops };
    }

    let mut rank = vec![0; n_dims];
    for (pos, col) in full_plan.order().into_iter().enumerate() {
        rank[col] = pos;
    }
    let mut least_reliable: Vec<usize> = (0..n_bits).collect();
    least_reliable.sort_by_key(|&t| std::cmp::Reverse((rank[t / q], t % q)));

    for &i in targets {
        let set: Vec<usize> = std::iter::once(i)
            .chain(least_reliable.iter().copied().filter(|&t| t != i).take(r - 1))
            .collect();
        let mut one = LogSumExp::default();
        let mut zero = LogSumExp::default();
        for a in 0..(1usize << r) {
            let mut constraint = vec![(0, 0); n_dims];
            for (j, &bit) in set.iter().enumerate() {
                let mask = mapping.bit_mask(bit % q);
                let c = &mut constraint[bit / q];
                c.0 |= mask;
                if (a >> j) & 1 == 1 {
                    c.1 |= mask;
                }
            }
            let labels = complete(y, b_hat, mapping, &constraint, full_mask, plans);
            ops += 1;
            let s = score(&labels);
            if a & 1 == 1 {
                one.push(s);
            } else {
                zero.push(s);
            }
        }
        llrs[i] = llr_from(&one, &zero, cfg.llr_clamp);
    }
    SoftOutput { llrs, ops }
}

/// ZF-DF completion of a partially fixed hypothesis. Fully fixed dimensions
/// are subtracted from `y` and dropped from the model; partially fixed ones
/// are sliced within their allowed labels.
fn complete(
    y: &DVector<f64>,
    b_hat: &DMatrix<f64>,
    mapping: &BitMapping,
    constraint: &[(usize, usize)],
    full_mask: usize,
    plans: &mut HashMap<Vec<usize>, ZfDfPlan>,
) -> Vec<usize> {
    let n_dims = b_hat.ncols();
    let mut labels = vec![0; n_dims];
    let mut y_red = y.clone();
    let mut free = Vec::with_capacity(n_dims);
    for (d, &(mask, value)) in constraint.iter().enumerate() {
        if mask == full_mask {
            labels[d] = value;
            y_red.axpy(-mapping.amplitude(value), &b_hat.column(d), 1.0);
        } else {
            free.push(d);
        }
    }
    if !free.is_empty() {
        let plan = plans.entry(free).or_insert_with_key(|free| ZfDfPlan::new(b_hat, free));
        plan.detect(&y_red, b_hat, mapping, constraint, &mut labels);
    }
    labels
}

/// Realified observation and model rows contributed by one AP to the
/// centralized detector, with that AP's interference variance.
#[derive(Debug, Clone, Copy)]
pub struct ApBlock<'a> {
    pub y: &'a DVector<f64>,
    pub b_hat: &'a DMatrix<f64>,
    pub sigma2_e: f64,
}

/// Row scale that brings an AP block with interference variance `σ²_e` to
/// unit noise variance per real row.
pub fn whitening_scale(sigma2_e: f64) -> f64 {
    1.0 / (sigma2_e / 2.0).sqrt()
}

/// Stacks AP blocks into one tall whitened model: each block is scaled by
/// `1/√(σ²_{e,m}/2)` so the stacked noise has unit variance per row.
pub fn stack_blocks(blocks: &[ApBlock<'_>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let first = blocks.first().ok_or_else(|| Error::Pipeline("centralized detection needs at least one AP".into()))?;
    let cols = first.b_hat.ncols();
    if let Some(bad) = blocks.iter().find(|b| b.b_hat.ncols() != cols || b.y.len() != b.b_hat.nrows()) {
        return Err(Error::Pipeline(format!(
            "inconsistent AP block: {}x{} model with {} observations, expected {cols} columns",
            bad.b_hat.nrows(),
            bad.b_hat.ncols(),
            bad.y.len()
        )));
    }
    let rows: usize = blocks.iter().map(|b| b.y.len()).sum();
    let mut y = DVector::zeros(rows);
    let mut b = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for blk in blocks {
        let w = whitening_scale(blk.sigma2_e);
        let n = blk.y.len();
        y.rows_mut(at, n).copy_from(&(blk.y * w));
        b.rows_mut(at, n).copy_from(&(blk.b_hat * w));
        at += n;
    }
    Ok((y, b))
}

/// PM at the CPU over the stacked observations of several APs.
pub fn centralized_pm_llrs(blocks: &[ApBlock<'_>], cfg: &SoftConfig, r: usize, targets: &[usize]) -> Result<SoftOutput> {
    let (y, b) = stack_blocks(blocks)?;
    // whitened rows: metric ‖y − Bx‖²/2 ≡ σ² = 2
    Ok(pm_llrs_for(&y, &b, 2.0, cfg, r, targets))
}
