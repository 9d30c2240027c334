//! Per-AP uplink data observation and the effective real-valued detection
//! model built from the channel estimates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::association::AssociationMap;
use crate::geometry::{ChannelRealization, CorrelationSet};
use crate::pilots::EstimatorBank;
use crate::rng::complex_normal;
use crate::{Error, Result, C64};

/// `v ↦ [Re v; Im v]`.
pub fn realify_vector(v: &DVector<C64>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// `A ↦ [[Re A, −Im A], [Im A, Re A]]`, so that
/// `realify(A x) = realify(A) realify(x)`.
pub fn realify_matrix(a: &DMatrix<C64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let v = a[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

/// Received vectors `ȳ_m` of one symbol interval and the transmitted symbols.
#[derive(Debug, Clone)]
pub struct ComplexObservation {
    pub y_bar: Vec<DVector<C64>>,
    pub symbols: Vec<C64>,
}

/// `ȳ_m = Σ_k √η_k g_{k,m} x_k + w̄_m`, noise drawn AP by AP.
pub fn synth_uplink<R: Rng + ?Sized>(
    channels: &ChannelRealization,
    eta: &[f64],
    symbols: &[C64],
    sigma2_w: f64,
    rng: &mut R,
) -> ComplexObservation {
    let sw = sigma2_w.sqrt();
    let y_bar = (0..channels.n_aps())
        .map(|m| {
            let n = channels.g(0, m).len();
            let mut y = DVector::from_fn(n, |_, _| complex_normal(rng) * sw);
            for (k, x) in symbols.iter().enumerate() {
                if eta[k] != 0.0 {
                    y += channels.g(k, m) * (*x * eta[k].sqrt());
                }
            }
            y
        })
        .collect();
    ComplexObservation { y_bar, symbols: symbols.to_vec() }
}

/// Frame-length synthesis: `symbols[k][s]` is user `k`'s symbol in interval
/// `s`. Returns one `N_AP × S` block per AP. Noise is drawn AP-major, then
/// symbol by symbol.
pub fn synth_uplink_block<R: Rng + ?Sized>(
    channels: &ChannelRealization,
    eta: &[f64],
    symbols: &[Vec<C64>],
    n_symbols: usize,
    sigma2_w: f64,
    rng: &mut R,
) -> Vec<DMatrix<C64>> {
    let noise: Vec<_> = (0..channels.n_aps())
        .map(|m| DMatrix::from_fn(channels.g(0, m).len(), n_symbols, |_, _| complex_normal(rng)))
        .collect();
    uplink_block_with_noise(channels, eta, symbols, &noise, sigma2_w)
}

/// As [`synth_uplink_block`] with caller-supplied unit-variance noise blocks,
/// scaled here by `σ_w`.
pub fn uplink_block_with_noise(
    channels: &ChannelRealization,
    eta: &[f64],
    symbols: &[Vec<C64>],
    unit_noise: &[DMatrix<C64>],
    sigma2_w: f64,
) -> Vec<DMatrix<C64>> {
    let sw = C64::new(sigma2_w.sqrt(), 0.0);
    unit_noise
        .iter()
        .enumerate()
        .map(|(m, w)| {
            let mut y = w * sw;
            for (k, xs) in symbols.iter().enumerate() {
                if eta[k] == 0.0 {
                    continue;
                }
                let g = channels.g(k, m) * C64::new(eta[k].sqrt(), 0.0);
                for (s, x) in xs.iter().enumerate().take(y.ncols()) {
                    y.column_mut(s).axpy(*x, &g, C64::new(1.0, 0.0));
                }
            }
            y
        })
        .collect()
}

/// Gaussian interference-plus-noise variance at AP `m` when it detects the
/// users in `detected` and treats everybody else as noise:
/// `Σ_{j∈detected} η_j tr(C_{j,m})/N + Σ_{j∉detected} η_j tr(R_{j,m})/N + σ²_w`.
pub fn interference_variance(
    m: usize,
    detected: &[usize],
    eta: &[f64],
    c_trace: impl Fn(usize, usize) -> f64,
    corr: &CorrelationSet,
    sigma2_w: f64,
) -> f64 {
    let n = corr.n_ant() as f64;
    let mut v = sigma2_w;
    for (j, &e) in eta.iter().enumerate() {
        let tr = if detected.contains(&j) { c_trace(j, m) } else { corr.r(j, m).trace().re };
        v += e * tr / n;
    }
    v
}

/// σ²_{e,m} for AP `m`'s served set.
pub fn served_interference_variance(
    m: usize,
    assoc: &AssociationMap,
    eta: &[f64],
    bank: &EstimatorBank,
    corr: &CorrelationSet,
    sigma2_w: f64,
) -> f64 {
    interference_variance(m, &assoc.served[m], eta, |j, m| bank.error_cov(j, m).trace().re, corr, sigma2_w)
}

/// Real-valued model `y_m = B̂ x + e_m` of one AP.
///
/// Column `j < n` of `b_hat_real` is the in-phase dimension of
/// `users[j]`, column `n + j` its quadrature dimension.
#[derive(Debug, Clone)]
pub struct EffectiveModel {
    pub ap: usize,
    pub users: Vec<usize>,
    pub b_hat: DMatrix<C64>,
    pub b_hat_real: DMatrix<f64>,
    pub sigma2_e: f64,
}

impl EffectiveModel {
    /// Column `j` of `B̂` is `√η_{users[j]} ĝ_{users[j],m}`.
    pub fn build(m: usize, users: &[usize], g_hat: &ChannelRealization, eta: &[f64], sigma2_e: f64) -> Result<Self> {
        if m >= g_hat.n_aps() {
            return Err(Error::Pipeline(format!("no channel estimates for AP {m}")));
        }
        if let Some(k) = users.iter().find(|&&k| k >= g_hat.n_users() || k >= eta.len()) {
            return Err(Error::Pipeline(format!("no estimate or power for user {k} at AP {m}")));
        }
        let n = g_hat.g(0, m).len();
        let b_hat = DMatrix::from_fn(n, users.len(), |i, j| g_hat.g(users[j], m)[i] * eta[users[j]].sqrt());
        let b_hat_real = realify_matrix(&b_hat);
        Ok(Self { ap: m, users: users.to_vec(), b_hat, b_hat_real, sigma2_e })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }
}

/// Model for AP `m`'s served set with its Gaussian interference variance.
pub fn effective_model(
    m: usize,
    g_hat: &ChannelRealization,
    assoc: &AssociationMap,
    eta: &[f64],
    bank: &EstimatorBank,
    corr: &CorrelationSet,
    sigma2_w: f64,
) -> Result<EffectiveModel> {
    let s2 = served_interference_variance(m, assoc, eta, bank, corr, sigma2_w);
    EffectiveModel::build(m, &assoc.served[m], g_hat, eta, s2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_correlations, draw_channels, CorrelationMode, LargeScaleMap};
    use crate::pilots::{training_observable, PilotBook, TrainingPowers};
    use crate::rng::{substream, Domain};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn realify_examples() {
        let v = DVector::from_vec(vec![C64::new(1.0, 2.0)]);
        assert_eq!(realify_vector(&v).as_slice(), &[1.0, 2.0]);
        let a = DMatrix::from_element(1, 1, C64::new(0.0, 1.0));
        assert_eq!(realify_matrix(&a), DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
    }

    proptest! {
        #[test]
        fn realify_preserves_products(
            r in 1usize..5, c in 1usize..5,
            vals in proptest::collection::vec(-10.0f64..10.0, 50),
        ) {
            let a = DMatrix::from_fn(r, c, |i, j| C64::new(vals[i * c + j], vals[25 + i * c + j]));
            let x = DVector::from_fn(c, |i, _| C64::new(vals[40 + i], -vals[45 + i]));
            let lhs = realify_vector(&(&a * &x));
            let rhs = realify_matrix(&a) * realify_vector(&x);
            prop_assert!((lhs - rhs).norm() <= 1e-12);
        }
    }

    #[test]
    fn synth_examples() {
        let mut rng = substream(1, Domain::Validation, 0);
        let g = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let ch = ChannelRealization::from_fn(1, 1, |_, _| g.clone());
        let obs = synth_uplink(&ch, &[1.0], &[C64::new(1.0, 0.0)], 0.0, &mut rng);
        assert_eq!(obs.y_bar[0], g);

        let ch2 = ChannelRealization::from_fn(2, 2, |k, m| {
            DVector::from_vec(vec![C64::new(k as f64 + 1.0, m as f64), C64::new(-0.5, 0.25 * k as f64)])
        });
        let xs = [C64::new(0.7, -0.7), C64::new(-0.7, -0.7)];
        let noise_only = synth_uplink(&ch2, &[0.0, 0.0], &xs, 1.0, &mut substream(2, Domain::Validation, 0));
        let both = synth_uplink(&ch2, &[2.0, 3.0], &xs, 1.0, &mut substream(2, Domain::Validation, 0));
        let a = synth_uplink(&ch2, &[2.0, 0.0], &xs, 0.0, &mut rng);
        let b = synth_uplink(&ch2, &[0.0, 3.0], &xs, 0.0, &mut rng);
        for m in 0..2 {
            let sum = &a.y_bar[m] + &b.y_bar[m] + &noise_only.y_bar[m];
            assert!((sum - &both.y_bar[m]).norm() < 1e-12);
        }
    }

    #[test]
    fn block_matches_per_symbol_synthesis() {
        let ls = LargeScaleMap::from_beta(DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.2, 0.3, 0.9, 0.4])).unwrap();
        let corr = build_correlations(&ls, 3, &CorrelationMode::Uncorrelated).unwrap();
        let ch = draw_channels(&corr, &mut substream(3, Domain::Validation, 0));
        let syms: Vec<Vec<C64>> = (0..3).map(|k| (0..4).map(|s| C64::new(k as f64 - s as f64, 0.5)).collect()).collect();
        let block = synth_uplink_block(&ch, &[1.0, 2.0, 0.5], &syms, 4, 0.0, &mut substream(4, Domain::Validation, 0));
        for s in 0..4 {
            let xs: Vec<C64> = syms.iter().map(|v| v[s]).collect();
            let one = synth_uplink(&ch, &[1.0, 2.0, 0.5], &xs, 0.0, &mut substream(4, Domain::Validation, 0));
            for m in 0..2 {
                assert!((block[m].column(s) - &one.y_bar[m]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn interference_variance_examples() {
        let ls = LargeScaleMap::from_beta(DMatrix::from_row_slice(1, 2, &[0.5, 0.3])).unwrap();
        let corr = build_correlations(&ls, 2, &CorrelationMode::Uncorrelated).unwrap();
        let c_tr = |j: usize, _m: usize| if j == 0 { 0.2 } else { 0.0 };
        let v = interference_variance(0, &[0], &[1.0, 1.0], c_tr, &corr, 1.0);
        assert!((v - 1.4).abs() < 1e-12);
        let perfect = interference_variance(0, &[0, 1], &[1.0, 1.0], |_, _| 0.0, &corr, 1.0);
        assert_eq!(perfect, 1.0);
    }

    #[test]
    fn effective_model_columns() {
        let g = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let ch = ChannelRealization::from_fn(1, 1, |_, _| g.clone());
        let em = EffectiveModel::build(0, &[0], &ch, &[4.0], 1.0).unwrap();
        assert_eq!(em.b_hat[(0, 0)], C64::new(2.0, 0.0));
        assert_eq!(em.b_hat[(1, 0)], C64::new(0.0, 2.0));
        assert_eq!(em.b_hat_real.shape(), (4, 2));

        let real = DVector::from_vec(vec![C64::new(1.5, 0.0), C64::new(-2.0, 0.0)]);
        let ch = ChannelRealization::from_fn(1, 2, |_, _| real.clone());
        let em = EffectiveModel::build(0, &[1, 0], &ch, &[1.0, 1.0], 1.0).unwrap();
        assert!(em.b_hat_real.view((0, 2), (2, 2)).iter().all(|v| *v == 0.0));
        assert!(em.b_hat_real.view((2, 0), (2, 2)).iter().all(|v| *v == 0.0));
        assert_eq!(em.users, vec![1, 0]);
        assert!(matches!(EffectiveModel::build(0, &[5], &ch, &[1.0, 1.0], 1.0), Err(Error::Pipeline(_))));
    }

    /// Residual identity and Gaussian-variance check on a contaminated drop.
    #[test]
    fn residual_identity_and_variance() {
        let (m_aps, k_users, n_ant, n_serve, tau_p) = (3, 5, 2, 2, 2);
        let mut rng = substream(5, Domain::Validation, 0);
        let beta = DMatrix::from_fn(m_aps, k_users, |m, k| 0.2 + ((m * 7 + k * 3) % 5) as f64 * 0.3);
        let ls = LargeScaleMap::from_beta(beta.clone()).unwrap();
        let corr = build_correlations(&ls, n_ant, &CorrelationMode::Uncorrelated).unwrap();
        let assoc = AssociationMap::uniform(&beta, n_serve).unwrap();
        let book = PilotBook::new(tau_p, (0..k_users).map(|k| k % tau_p).collect()).unwrap();
        let p = TrainingPowers::uniform(k_users, 1.0, tau_p).unwrap();
        let eta = vec![0.8, 1.0, 0.6, 1.2, 0.9];
        let sigma2 = 0.5;
        let bank = EstimatorBank::new(&corr, &book, &p, sigma2).unwrap();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        for _ in 0..200 {
            let ch = draw_channels(&corr, &mut rng);
            let y_tr = training_observable(&ch, &book, &p, sigma2, &mut rng);
            let gh = bank.estimate_all(&y_tr);
            let xs: Vec<C64> = (0..k_users)
                .map(|_| C64::new(if rng.random() { q } else { -q }, if rng.random() { q } else { -q }))
                .collect();
            let noise = synth_uplink(&ch, &vec![0.0; k_users], &xs, sigma2, &mut substream(6, Domain::Validation, 0));
            let obs = synth_uplink(&ch, &eta, &xs, sigma2, &mut substream(6, Domain::Validation, 0));
            for m in 0..m_aps {
                let em = effective_model(m, &gh, &assoc, &eta, &bank, &corr, sigma2).unwrap();
                let x_s = DVector::from_fn(n_serve, |j, _| xs[em.users[j]]);
                let resid = realify_vector(&obs.y_bar[m]) - &em.b_hat_real * realify_vector(&x_s);
                let mut e = noise.y_bar[m].clone();
                for k in 0..k_users {
                    let gk = if assoc.is_served(k, m) { ch.g(k, m) - gh.g(k, m) } else { ch.g(k, m).clone() };
                    e += gk * (xs[k] * eta[k].sqrt());
                }
                let expect = realify_vector(&e);
                assert!((&resid - &expect).norm() <= 1e-10 * expect.norm().max(1.0));
                assert!(em.sigma2_e >= sigma2);
            }
        }
    }
}
