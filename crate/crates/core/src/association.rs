//! AP-centric user association and fractional uplink power control.
//!
//! Association depends on the large-scale coefficients only. Powers depend
//! on the serving sets, so the order is always `associate` → `fpc_power`.

use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationMap {
    /// Per AP, the served users ordered by descending β (ties: lower index).
    pub served: Vec<Vec<usize>>,
    /// Per user, the serving APs in ascending index order.
    pub serving: Vec<Vec<usize>>,
}

/// Each AP serves its `n_m[m]` strongest users. `beta` is indexed `(m, k)`.
pub fn associate(beta: &DMatrix<f64>, n_m: &[usize]) -> Result<AssociationMap> {
    let (m_aps, k_users) = beta.shape();
    if n_m.len() != m_aps {
        return Err(Error::Config(format!("need one served-set size per AP ({m_aps}), got {}", n_m.len())));
    }
    let mut served = Vec::with_capacity(m_aps);
    for (m, &n) in n_m.iter().enumerate() {
        if n == 0 || n > k_users {
            return Err(Error::Config(format!("N_m must lie in [1, {k_users}], got {n} for AP {m}")));
        }
        let mut order: Vec<usize> = (0..k_users).collect();
        // stable sort keeps lower indices first among equal β
        order.sort_by(|&a, &b| beta[(m, b)].total_cmp(&beta[(m, a)]));
        order.truncate(n);
        served.push(order);
    }
    let map = AssociationMap::from_served(served, k_users);
    for (k, aps) in map.serving.iter().enumerate() {
        if aps.is_empty() {
            log::warn!("user {k} is not served by any AP and is in outage");
        }
    }
    Ok(map)
}

impl AssociationMap {
    pub fn uniform(beta: &DMatrix<f64>, n: usize) -> Result<Self> {
        associate(beta, &vec![n; beta.nrows()])
    }

    pub fn from_served(served: Vec<Vec<usize>>, n_users: usize) -> Self {
        let mut serving = vec![Vec::new(); n_users];
        for (m, users) in served.iter().enumerate() {
            for &k in users {
                serving[k].push(m);
            }
        }
        Self { served, serving }
    }

    pub fn is_served(&self, k: usize, m: usize) -> bool {
        self.served[m].contains(&k)
    }

    pub fn in_outage(&self, k: usize) -> bool {
        self.serving[k].is_empty()
    }

    /// Position of user `k` in AP `m`'s served list.
    pub fn slot(&self, k: usize, m: usize) -> Option<usize> {
        self.served[m].iter().position(|&u| u == k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpcParams {
    pub p_max_w: f64,
    pub p0_w: f64,
    pub kappa: f64,
}

impl FpcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) || !(self.p_max_w > 0.0) || !(self.p0_w > 0.0) {
            return Err(Error::Config(format!("invalid FPC parameters {self:?}")));
        }
        Ok(())
    }
}

impl Default for FpcParams {
    fn default() -> Self {
        // 100 mW, -10 dBm, 0.5
        Self { p_max_w: 0.1, p0_w: 1e-4, kappa: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkPowers {
    pub eta: Vec<f64>,
    pub params: FpcParams,
}

/// Result of the FPC rule for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpcPower {
    pub eta_w: f64,
    /// Set when the serving set was empty and `P_max` was returned.
    pub undefined: bool,
}

/// `η_k = min(P_max, P_0·ζ_k^{-κ})`, `ζ_k = sqrt(Σ_{m∈ℳ_k} β_{k,m})`.
pub fn fpc_power(k: usize, beta: &DMatrix<f64>, serving: &[usize], params: &FpcParams) -> Result<FpcPower> {
    params.validate()?;
    if serving.is_empty() {
        return Ok(FpcPower { eta_w: params.p_max_w, undefined: true });
    }
    let zeta = serving.iter().map(|&m| beta[(m, k)]).sum::<f64>().sqrt();
    let eta_w = params.p_max_w.min(params.p0_w * zeta.powf(-params.kappa));
    Ok(FpcPower { eta_w, undefined: false })
}

impl UplinkPowers {
    pub fn fpc(beta: &DMatrix<f64>, assoc: &AssociationMap, params: FpcParams) -> Result<Self> {
        let eta = (0..beta.ncols())
            .map(|k| fpc_power(k, beta, &assoc.serving[k], &params).map(|p| p.eta_w))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { eta, params })
    }
}
