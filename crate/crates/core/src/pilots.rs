//! Pilot assignment, the per-user training observable, and MMSE channel
//! estimation with its error statistics.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::geometry::{ChannelRealization, CorrelationSet};
use crate::linalg::HermitianSolver;
use crate::rng::complex_normal;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotPolicy {
    /// User `k` gets sequence `k mod τ_p`.
    #[default]
    RoundRobin,
    /// Random permutation of the round-robin assignment.
    Random,
}

pub fn assign_pilots<R: Rng + ?Sized>(n_users: usize, tau_p: usize, policy: PilotPolicy, rng: &mut R) -> Result<Vec<usize>> {
    if tau_p == 0 {
        return Err(Error::Config("tau_p must be at least 1".into()));
    }
    let mut a: Vec<usize> = (0..n_users).map(|k| k % tau_p).collect();
    if policy == PilotPolicy::Random {
        a.shuffle(rng);
    }
    Ok(a)
}

/// Orthonormal pilot sequences (columns of the τ_p×τ_p identity) and the
/// user-to-sequence map.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    tau_p: usize,
    sequences: Vec<DVector<C64>>,
    assignment: Vec<usize>,
}

impl PilotBook {
    pub fn new(tau_p: usize, assignment: Vec<usize>) -> Result<Self> {
        if tau_p == 0 {
            return Err(Error::Config("tau_p must be at least 1".into()));
        }
        if let Some(bad) = assignment.iter().find(|&&s| s >= tau_p) {
            return Err(Error::Config(format!("pilot index {bad} out of range for tau_p = {tau_p}")));
        }
        let sequences = (0..tau_p)
            .map(|s| DVector::from_fn(tau_p, |i, _| if i == s { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }))
            .collect();
        Ok(Self { tau_p, sequences, assignment })
    }

    pub fn tau_p(&self) -> usize {
        self.tau_p
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn sequence(&self, k: usize) -> &DVector<C64> {
        &self.sequences[self.assignment[k]]
    }

    /// `φ_iᴴ φ_k`.
    pub fn inner(&self, i: usize, k: usize) -> C64 {
        self.sequence(i).dotc(self.sequence(k))
    }
}

/// Training energies `p_k = τ_p·p̃_k` (watts·samples).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPowers {
    pub p_tilde: Vec<f64>,
    pub p: Vec<f64>,
}

impl TrainingPowers {
    pub fn new(p_tilde: Vec<f64>, tau_p: usize) -> Result<Self> {
        if p_tilde.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::Config("training powers must be positive".into()));
        }
        let p = p_tilde.iter().map(|pt| pt * tau_p as f64).collect();
        Ok(Self { p_tilde, p })
    }

    pub fn uniform(n_users: usize, p_tilde_w: f64, tau_p: usize) -> Result<Self> {
        Self::new(vec![p_tilde_w; n_users], tau_p)
    }
}

/// Projected training observables `ŷ_{k,m}`, indexed `(k, m)`.
#[derive(Debug, Clone)]
pub struct TrainingObservation {
    n_users: usize,
    y: Vec<DVector<C64>>,
}

impl TrainingObservation {
    pub fn y(&self, k: usize, m: usize) -> &DVector<C64> {
        &self.y[m * self.n_users + k]
    }
}

/// `ŷ_{k,m} = √p_k g_{k,m} + Σ_{i≠k} √p_i g_{i,m} φ_iᴴφ_k + w_{k,m}`.
///
/// The noise is the projection of one N_AP×τ_p noise block per AP onto the
/// user's pilot, so users sharing a sequence see the same noise sample.
pub fn training_observable<R: Rng + ?Sized>(
    channels: &ChannelRealization,
    pilots: &PilotBook,
    powers: &TrainingPowers,
    sigma2_w: f64,
    rng: &mut R,
) -> TrainingObservation {
    let (n_aps, n_users) = (channels.n_aps(), channels.n_users());
    let n_ant = if n_aps > 0 { channels.g(0, 0).len() } else { 0 };
    let tau_p = pilots.tau_p();
    let sw = sigma2_w.sqrt();
    let mut y = Vec::with_capacity(n_aps * n_users);
    for m in 0..n_aps {
        let noise = DMatrix::from_fn(n_ant, tau_p, |_, _| complex_normal(rng) * sw);
        for k in 0..n_users {
            let mut acc = &noise * pilots.sequence(k).conjugate();
            for i in 0..n_users {
                let c = pilots.inner(i, k);
                if c != C64::new(0.0, 0.0) {
                    acc += channels.g(i, m) * (c * powers.p[i].sqrt());
                }
            }
            y.push(acc);
        }
    }
    TrainingObservation { n_users, y }
}

/// `Γ_{k,m} = Σ_i p_i R_{i,m} |φ_iᴴφ_k|² + σ²_w I`.
pub fn gamma_matrix(
    k: usize,
    m: usize,
    corr: &CorrelationSet,
    pilots: &PilotBook,
    powers: &TrainingPowers,
    sigma2_w: f64,
) -> DMatrix<C64> {
    let n = corr.n_ant();
    let mut g = DMatrix::from_diagonal_element(n, n, C64::new(sigma2_w, 0.0));
    for i in 0..corr.n_users() {
        let w = pilots.inner(i, k).norm_sqr();
        if w != 0.0 {
            g += corr.r(i, m) * C64::new(powers.p[i] * w, 0.0);
        }
    }
    g
}

/// Per-link MMSE estimator: `ĝ = A ŷ` with `A = √p R Γ⁻¹`.
#[derive(Debug, Clone)]
pub struct LinkEstimator {
    pub gamma: DMatrix<C64>,
    /// `√p_k R Γ⁻¹`
    pub filter: DMatrix<C64>,
    /// `p_k R Γ⁻¹ R`, the covariance of the estimate.
    pub estimate_cov: DMatrix<C64>,
    /// `R − p_k R Γ⁻¹ R`
    pub error_cov: DMatrix<C64>,
}

impl LinkEstimator {
    pub fn new(k: usize, m: usize, corr: &CorrelationSet, pilots: &PilotBook, powers: &TrainingPowers, sigma2_w: f64) -> Result<Self> {
        let gamma = gamma_matrix(k, m, corr, pilots, powers, sigma2_w);
        let solver = HermitianSolver::new(&gamma, &format!("Gamma[{k},{m}]"))?;
        let r = corr.r(k, m);
        let p = powers.p[k];
        // Γ⁻¹R, then R Γ⁻¹ = (Γ⁻¹ R)ᴴ because both are Hermitian
        let gi_r = solver.solve(r);
        let filter = gi_r.adjoint() * C64::new(p.sqrt(), 0.0);
        let estimate_cov = hermitize(r * &gi_r * C64::new(p, 0.0));
        let error_cov = hermitize(r - &estimate_cov);
        Ok(Self { gamma, filter, estimate_cov, error_cov })
    }

    pub fn estimate(&self, y_hat: &DVector<C64>) -> DVector<C64> {
        &self.filter * y_hat
    }
}

fn hermitize(a: DMatrix<C64>) -> DMatrix<C64> {
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// `ĝ_{k,m} = √p_k R Γ⁻¹ ŷ_{k,m}`.
pub fn mmse_estimate(y_hat: &DVector<C64>, k: usize, m: usize, corr: &CorrelationSet, powers: &TrainingPowers, gamma: &DMatrix<C64>) -> Result<DVector<C64>> {
    let solver = HermitianSolver::new(gamma, &format!("Gamma[{k},{m}]"))?;
    Ok(corr.r(k, m) * solver.solve_vec(y_hat) * C64::new(powers.p[k].sqrt(), 0.0))
}

/// `C_{k,m} = R − p_k R Γ⁻¹ R`.
pub fn error_covariance(k: usize, m: usize, corr: &CorrelationSet, powers: &TrainingPowers, gamma: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let solver = HermitianSolver::new(gamma, &format!("Gamma[{k},{m}]"))?;
    let r = corr.r(k, m);
    Ok(hermitize(r - r * solver.solve(r) * C64::new(powers.p[k], 0.0)))
}

/// Drop-level estimation statistics for every link, indexed `(k, m)`.
#[derive(Debug, Clone)]
pub struct EstimatorBank {
    n_users: usize,
    links: Vec<LinkEstimator>,
}

impl EstimatorBank {
    pub fn new(corr: &CorrelationSet, pilots: &PilotBook, powers: &TrainingPowers, sigma2_w: f64) -> Result<Self> {
        let mut links = Vec::with_capacity(corr.n_aps() * corr.n_users());
        for m in 0..corr.n_aps() {
            for k in 0..corr.n_users() {
                links.push(LinkEstimator::new(k, m, corr, pilots, powers, sigma2_w)?);
            }
        }
        Ok(Self { n_users: corr.n_users(), links })
    }

    pub fn link(&self, k: usize, m: usize) -> &LinkEstimator {
        &self.links[m * self.n_users + k]
    }

    pub fn error_cov(&self, k: usize, m: usize) -> &DMatrix<C64> {
        &self.link(k, m).error_cov
    }

    pub fn estimate_all(&self, obs: &TrainingObservation) -> ChannelRealization {
        let n_aps = self.links.len() / self.n_users.max(1);
        ChannelRealization::from_fn(n_aps, self.n_users, |k, m| self.link(k, m).estimate(obs.y(k, m)))
    }
}
