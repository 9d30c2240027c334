//! Network deployment on a wrapped-around square, large-scale fading with
//! correlated shadowing, spatial correlation matrices and small-scale
//! channel draws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{hermitian_eigenvalues, is_hermitian, psd_factor, psd_sqrt};
use crate::rng::complex_normal;
use crate::units::{db_to_lin, noise_power_w};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Distance on the torus obtained by wrapping a square of side `side`.
pub fn wrap_distance(a: Point, b: Point, side: f64) -> f64 {
    let wrap = |d: f64| {
        let d = d.abs() % side;
        d.min(side - d)
    };
    wrap(a.x - b.x).hypot(wrap(a.y - b.y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub side_m: f64,
    pub ap_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    pub n_ap_antennas: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub noise_figure_db: f64,
}

/// Radio parameters shared by every deployment of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub n_ap_antennas: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub noise_figure_db: f64,
}

impl Deployment {
    pub fn new(side_m: f64, ap_positions: Vec<Point>, user_positions: Vec<Point>, radio: RadioParams) -> Result<Self> {
        if !(side_m > 0.0) {
            return Err(Error::Config(format!("side_m must be positive, got {side_m}")));
        }
        if ap_positions.is_empty() || user_positions.is_empty() || radio.n_ap_antennas == 0 {
            return Err(Error::Config("need at least one AP, one user and one antenna".into()));
        }
        let inside = |p: &Point| (0.0..side_m).contains(&p.x) && (0.0..side_m).contains(&p.y);
        if !ap_positions.iter().chain(&user_positions).all(inside) {
            return Err(Error::Config(format!("positions must lie in [0, {side_m})²")));
        }
        Ok(Self {
            side_m,
            ap_positions,
            user_positions,
            n_ap_antennas: radio.n_ap_antennas,
            carrier_hz: radio.carrier_hz,
            bandwidth_hz: radio.bandwidth_hz,
            noise_psd_dbm_per_hz: radio.noise_psd_dbm_per_hz,
            noise_figure_db: radio.noise_figure_db,
        })
    }

    /// Uniform i.i.d. placement. With `probe_centered`, user 0 sits at the
    /// center of the square.
    pub fn random<R: Rng + ?Sized>(
        side_m: f64,
        n_aps: usize,
        n_users: usize,
        radio: RadioParams,
        probe_centered: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let draw = |rng: &mut R| Point::new(rng.random::<f64>() * side_m, rng.random::<f64>() * side_m);
        let aps = (0..n_aps).map(|_| draw(rng)).collect();
        let mut users: Vec<Point> = (0..n_users).map(|_| draw(rng)).collect();
        if probe_centered && !users.is_empty() {
            users[0] = Point::new(side_m / 2.0, side_m / 2.0);
        }
        Self::new(side_m, aps, users, radio)
    }

    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn distance(&self, m: usize, k: usize) -> f64 {
        wrap_distance(self.ap_positions[m], self.user_positions[k], self.side_m)
    }

    pub fn noise_power_w(&self) -> f64 {
        noise_power_w(self.noise_psd_dbm_per_hz, self.bandwidth_hz, self.noise_figure_db)
    }
}

/// Single-slope path loss `A + B·log10(d / 1 km)` with a near-field clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossParams {
    pub intercept_db: f64,
    pub slope_db: f64,
    pub d_min_m: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self { intercept_db: 140.7, slope_db: 36.7, d_min_m: 10.0 }
    }
}

pub fn path_loss_db(d: f64, model: &PathLossParams) -> Result<f64> {
    if !(model.d_min_m > 0.0) || !(model.slope_db >= 0.0) || !model.intercept_db.is_finite() {
        return Err(Error::Config(format!("invalid path-loss model {model:?}")));
    }
    let d = d.max(model.d_min_m);
    Ok(model.intercept_db + model.slope_db * (d / 1000.0).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowingParams {
    pub std_db: f64,
    pub decorr_m: f64,
}

impl Default for ShadowingParams {
    fn default() -> Self {
        Self { std_db: 8.0, decorr_m: 100.0 }
    }
}

/// Cross-user correlation of the shadowing seen by one AP:
/// `2^(-d(k,j)/d_corr)` with wrapped inter-user distances.
pub fn shadow_correlation(dep: &Deployment, decorr_m: f64) -> DMatrix<f64> {
    let k = dep.n_users();
    DMatrix::from_fn(k, k, |i, j| {
        let d = wrap_distance(dep.user_positions[i], dep.user_positions[j], dep.side_m);
        2f64.powf(-d / decorr_m)
    })
}

/// Draws the M×K shadowing map in dB. Users are correlated per AP, APs are
/// independent.
pub fn draw_shadowing<R: Rng + ?Sized>(dep: &Deployment, rng: &mut R, params: &ShadowingParams) -> Result<DMatrix<f64>> {
    if !(params.std_db >= 0.0) || !(params.decorr_m > 0.0) {
        return Err(Error::Config(format!("invalid shadowing parameters {params:?}")));
    }
    let (m, k) = (dep.n_aps(), dep.n_users());
    let mut out = DMatrix::zeros(m, k);
    if params.std_db == 0.0 {
        return Ok(out);
    }
    let (factor, fallback) = psd_factor(&shadow_correlation(dep, params.decorr_m));
    if fallback {
        log::warn!("shadowing correlation is not positive definite; using nearest PSD projection");
    }
    for ap in 0..m {
        let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = &factor * z * params.std_db;
        out.row_mut(ap).copy_from(&s.transpose());
    }
    Ok(out)
}

/// Large-scale fading coefficients, indexed `(m, k)` (AP row, user column).
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScaleMap {
    pub beta: DMatrix<f64>,
    pub shadow_db: DMatrix<f64>,
}

impl LargeScaleMap {
    pub fn new(beta: DMatrix<f64>, shadow_db: DMatrix<f64>) -> Result<Self> {
        if beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Validation("large-scale coefficients must be positive and finite".into()));
        }
        Ok(Self { beta, shadow_db })
    }

    pub fn from_beta(beta: DMatrix<f64>) -> Result<Self> {
        let shadow = DMatrix::zeros(beta.nrows(), beta.ncols());
        Self::new(beta, shadow)
    }

    pub fn draw<R: Rng + ?Sized>(
        dep: &Deployment,
        path_loss: &PathLossParams,
        shadowing: &ShadowingParams,
        rng: &mut R,
    ) -> Result<Self> {
        let shadow_db = draw_shadowing(dep, rng, shadowing)?;
        let mut beta = DMatrix::zeros(dep.n_aps(), dep.n_users());
        for m in 0..dep.n_aps() {
            for k in 0..dep.n_users() {
                let pl = path_loss_db(dep.distance(m, k), path_loss)?;
                beta[(m, k)] = db_to_lin(shadow_db[(m, k)] - pl);
            }
        }
        Self::new(beta, shadow_db)
    }

    pub fn n_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.beta.ncols()
    }
}

/// How per-link spatial correlation matrices are built.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationMode {
    /// `R = β·I`.
    Uncorrelated,
    /// ULA exponential model `[R]_{ij} = β·ρ^{|i-j|}`, `0 ≤ ρ < 1`.
    Exponential { rho: f64 },
    /// Explicit matrices, indexed `m * K + k`. Each must be Hermitian PSD with
    /// `tr(R)/N_AP = β` already.
    Custom(Vec<DMatrix<C64>>),
}

#[derive(Debug, Clone)]
pub struct CorrelationSet {
    n_aps: usize,
    n_users: usize,
    n_ant: usize,
    r: Vec<DMatrix<C64>>,
    sqrt: Vec<DMatrix<C64>>,
}

const TRACE_RTOL: f64 = 1e-9;

pub fn build_correlations(ls: &LargeScaleMap, n_ant: usize, mode: &CorrelationMode) -> Result<CorrelationSet> {
    let (m_aps, k_users) = (ls.n_aps(), ls.n_users());
    if n_ant == 0 {
        return Err(Error::Config("n_ap_antennas must be at least 1".into()));
    }
    let mut r = Vec::with_capacity(m_aps * k_users);
    for m in 0..m_aps {
        for k in 0..k_users {
            let beta = ls.beta[(m, k)];
            let mat = match mode {
                CorrelationMode::Uncorrelated => DMatrix::from_diagonal_element(n_ant, n_ant, C64::new(beta, 0.0)),
                CorrelationMode::Exponential { rho } => {
                    if !(0.0..1.0).contains(rho) {
                        return Err(Error::Config(format!("exponential correlation needs 0 <= rho < 1, got {rho}")));
                    }
                    DMatrix::from_fn(n_ant, n_ant, |i, j| C64::new(beta * rho.powi((i as i32 - j as i32).abs()), 0.0))
                }
                CorrelationMode::Custom(mats) => {
                    let mat = mats.get(m * k_users + k).ok_or_else(|| {
                        Error::Validation(format!("custom correlation set has {} matrices, need {}", mats.len(), m_aps * k_users))
                    })?;
                    validate_correlation(mat, beta, n_ant)
                        .map_err(|e| Error::Validation(format!("R[{k},{m}]: {e}")))?;
                    mat.clone()
                }
            };
            r.push(mat);
        }
    }
    let sqrt = r.iter().map(psd_sqrt).collect();
    Ok(CorrelationSet { n_aps: m_aps, n_users: k_users, n_ant, r, sqrt })
}

fn validate_correlation(r: &DMatrix<C64>, beta: f64, n_ant: usize) -> std::result::Result<(), String> {
    if r.nrows() != n_ant || r.ncols() != n_ant {
        return Err(format!("expected {n_ant}x{n_ant}, got {}x{}", r.nrows(), r.ncols()));
    }
    if !is_hermitian(r, 1e-12) {
        return Err("not Hermitian".into());
    }
    let scale = r.norm().max(f64::MIN_POSITIVE);
    if hermitian_eigenvalues(r)[0] < -1e-10 * scale.max(1.0) {
        return Err("not positive semidefinite".into());
    }
    let tr = r.trace().re / n_ant as f64;
    if (tr - beta).abs() > TRACE_RTOL * beta {
        return Err(format!("tr(R)/N_AP = {tr:e} but beta = {beta:e}"));
    }
    Ok(())
}

impl CorrelationSet {
    /// Correlation set from explicit matrices, validated against `beta`.
    pub fn custom(ls: &LargeScaleMap, n_ant: usize, mats: Vec<DMatrix<C64>>) -> Result<Self> {
        build_correlations(ls, n_ant, &CorrelationMode::Custom(mats))
    }

    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_ant(&self) -> usize {
        self.n_ant
    }

    pub fn r(&self, k: usize, m: usize) -> &DMatrix<C64> {
        &self.r[m * self.n_users + k]
    }

    pub fn r_sqrt(&self, k: usize, m: usize) -> &DMatrix<C64> {
        &self.sqrt[m * self.n_users + k]
    }

    /// `tr(R_{k,m}) / N_AP`, i.e. β.
    pub fn beta(&self, k: usize, m: usize) -> f64 {
        self.r(k, m).trace().re / self.n_ant as f64
    }
}

/// Small-scale channels `g_{k,m}`, indexed `(k, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    n_users: usize,
    g: Vec<DVector<C64>>,
}

impl ChannelRealization {
    pub fn from_fn(n_aps: usize, n_users: usize, mut f: impl FnMut(usize, usize) -> DVector<C64>) -> Self {
        let mut g = Vec::with_capacity(n_aps * n_users);
        for m in 0..n_aps {
            for k in 0..n_users {
                g.push(f(k, m));
            }
        }
        Self { n_users, g }
    }

    pub fn g(&self, k: usize, m: usize) -> &DVector<C64> {
        &self.g[m * self.n_users + k]
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_aps(&self) -> usize {
        self.g.len() / self.n_users.max(1)
    }
}

/// `g_{k,m} = R^{1/2} w` with `w ~ CN(0, I)`; draws are made AP-major, user-minor.
pub fn draw_channels<R: Rng + ?Sized>(corr: &CorrelationSet, rng: &mut R) -> ChannelRealization {
    let n = corr.n_ant();
    ChannelRealization::from_fn(corr.n_aps(), corr.n_users(), |k, m| {
        let w = DVector::from_fn(n, |_, _| complex_normal(rng));
        corr.r_sqrt(k, m) * w
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};

    fn radio(n: usize) -> RadioParams {
        RadioParams {
            n_ap_antennas: n,
            carrier_hz: 1.9e9,
            bandwidth_hz: 20e6,
            noise_psd_dbm_per_hz: -174.0,
            noise_figure_db: 9.0,
        }
    }

    #[test]
    fn wrap_distance_examples() {
        let s = 1000.0;
        assert!((wrap_distance(Point::new(0.0, 0.0), Point::new(900.0, 0.0), s) - 100.0).abs() < 1e-12);
        assert_eq!(wrap_distance(Point::new(3.0, 4.0), Point::new(3.0, 4.0), s), 0.0);
        let d = wrap_distance(Point::new(100.0, 100.0), Point::new(200.0, 300.0), s);
        assert!((d - 223.6068).abs() < 1e-4, "{d}");
    }

    #[test]
    fn wrap_distance_is_a_torus_metric() {
        let mut rng = substream(11, Domain::Validation, 0);
        let s = 1000.0;
        let mut pt = || Point::new(rng.random::<f64>() * s, rng.random::<f64>() * s);
        for _ in 0..2000 {
            let (a, b, c) = (pt(), pt(), pt());
            let ab = wrap_distance(a, b, s);
            assert!((ab - wrap_distance(b, a, s)).abs() < 1e-9);
            assert!(ab <= s * 2f64.sqrt() / 2.0 + 1e-9);
            assert!(ab <= wrap_distance(a, c, s) + wrap_distance(c, b, s) + 1e-9);
        }
    }

    #[test]
    fn path_loss_examples() {
        let pl = PathLossParams::default();
        assert!((path_loss_db(100.0, &pl).unwrap() - 104.0).abs() < 1e-12);
        assert!((path_loss_db(1000.0, &pl).unwrap() - 140.7).abs() < 1e-12);
        assert_eq!(path_loss_db(3.0, &pl).unwrap(), path_loss_db(10.0, &pl).unwrap());
        let bad = PathLossParams { d_min_m: 0.0, ..pl };
        assert!(matches!(path_loss_db(10.0, &bad), Err(Error::Config(_))));
        let mut prev = f64::NEG_INFINITY;
        for d in (1..3000).map(|i| i as f64) {
            let v = path_loss_db(d, &pl).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn zero_shadowing_is_zero() {
        let mut rng = substream(1, Domain::Validation, 1);
        let dep = Deployment::random(1000.0, 5, 4, radio(2), true, &mut rng).unwrap();
        let s = draw_shadowing(&dep, &mut rng, &ShadowingParams { std_db: 0.0, decorr_m: 100.0 }).unwrap();
        assert!(s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn colocated_users_share_shadowing() {
        let mut rng = substream(2, Domain::Validation, 0);
        let users = vec![Point::new(10.0, 10.0), Point::new(10.0, 10.0), Point::new(700.0, 50.0)];
        let aps = vec![Point::new(500.0, 500.0), Point::new(100.0, 900.0)];
        let dep = Deployment::new(1000.0, aps, users, radio(1)).unwrap();
        let s = draw_shadowing(&dep, &mut rng, &ShadowingParams::default()).unwrap();
        for m in 0..2 {
            assert!((s[(m, 0)] - s[(m, 1)]).abs() < 1e-6, "{} vs {}", s[(m, 0)], s[(m, 1)]);
        }
    }

    #[test]
    fn shadowing_correlation_matches_exponential_model() {
        // Monte Carlo oracle: users 50 m apart, d_corr = 100 m
        let users = vec![Point::new(100.0, 100.0), Point::new(150.0, 100.0)];
        let dep = Deployment::new(1000.0, vec![Point::new(0.0, 0.0)], users, radio(1)).unwrap();
        let params = ShadowingParams { std_db: 8.0, decorr_m: 100.0 };
        let mut rng = substream(3, Domain::Validation, 0);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let s = draw_shadowing(&dep, &mut rng, &params).unwrap();
            acc += s[(0, 0)] * s[(0, 1)];
        }
        let emp = acc / n as f64;
        let expect = 2f64.powf(-0.5) * 64.0;
        assert!((emp - expect).abs() / expect < 0.03, "{emp} vs {expect}");
    }

    #[test]
    fn uncorrelated_r_is_scaled_identity() {
        let ls = LargeScaleMap::from_beta(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let c = build_correlations(&ls, 2, &CorrelationMode::Uncorrelated).unwrap();
        let expect = DMatrix::from_diagonal_element(2, 2, C64::new(2.0, 0.0));
        assert_eq!(c.r(0, 0), &expect);
        let ls = LargeScaleMap::from_beta(DMatrix::from_element(1, 1, 1e-10)).unwrap();
        let c = build_correlations(&ls, 3, &CorrelationMode::Uncorrelated).unwrap();
        assert!(hermitian_eigenvalues(c.r(0, 0))[0] >= 0.0);
        assert!((c.beta(0, 0) - 1e-10).abs() < 1e-19);
    }

    #[test]
    fn custom_correlation_trace_rule() {
        let ls = LargeScaleMap::from_beta(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let mut r = DMatrix::<C64>::zeros(8, 8);
        for i in 0..4 {
            r[(i, i)] = C64::new(1.0, 0.0);
        }
        assert!(matches!(CorrelationSet::custom(&ls, 8, vec![r]), Err(Error::Validation(_))));
        let ok = DMatrix::from_diagonal_element(8, 8, C64::new(1.0, 0.0));
        assert!(CorrelationSet::custom(&ls, 8, vec![ok]).is_ok());
        let mut not_psd = DMatrix::from_diagonal_element(2, 2, C64::new(1.0, 0.0));
        not_psd[(0, 1)] = C64::new(2.0, 0.0);
        not_psd[(1, 0)] = C64::new(2.0, 0.0);
        let ls2 = LargeScaleMap::from_beta(DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!(CorrelationSet::custom(&ls2, 2, vec![not_psd]).is_err());
    }

    #[test]
    fn trace_invariant_for_drawn_deployment() {
        let mut rng = substream(5, Domain::Validation, 0);
        let dep = Deployment::random(1000.0, 6, 5, radio(4), true, &mut rng).unwrap();
        let ls = LargeScaleMap::draw(&dep, &PathLossParams::default(), &ShadowingParams::default(), &mut rng).unwrap();
        for mode in [CorrelationMode::Uncorrelated, CorrelationMode::Exponential { rho: 0.7 }] {
            let c = build_correlations(&ls, 4, &mode).unwrap();
            for m in 0..6 {
                for k in 0..5 {
                    let b = ls.beta[(m, k)];
                    assert!((c.r(k, m).trace().re - 4.0 * b).abs() <= 1e-9 * 4.0 * b);
                    assert!(is_hermitian(c.r(k, m), 1e-12));
                }
            }
        }
    }

    #[test]
    fn zero_covariance_gives_zero_channel() {
        let mut rng = substream(6, Domain::Validation, 0);
        let ls = LargeScaleMap::from_beta(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let mut c = build_correlations(&ls, 3, &CorrelationMode::Uncorrelated).unwrap();
        c.r[0] = DMatrix::zeros(3, 3);
        c.sqrt[0] = psd_sqrt(&c.r[0]);
        let g = draw_channels(&c, &mut rng);
        assert!(g.g(0, 0).iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn channel_covariance_matches_r() {
        let beta = 3e-9;
        let ls = LargeScaleMap::from_beta(DMatrix::from_element(1, 1, beta)).unwrap();
        let n_ant = 4;
        let mut rng = substream(7, Domain::Validation, 0);
        for mode in [CorrelationMode::Uncorrelated, CorrelationMode::Exponential { rho: 0.5 }] {
            let c = build_correlations(&ls, n_ant, &mode).unwrap();
            let draws = 100_000;
            let mut cov = DMatrix::<C64>::zeros(n_ant, n_ant);
            let mut energy = 0.0;
            for _ in 0..draws {
                let g = draw_channels(&c, &mut rng);
                let v = g.g(0, 0);
                cov += v * v.adjoint();
                energy += v.norm_squared();
            }
            cov /= C64::new(draws as f64, 0.0);
            let r = c.r(0, 0);
            assert!((&cov - r).norm() / r.norm() < 0.02);
            let tr = r.trace().re;
            assert!((energy / draws as f64 - tr).abs() / tr < 0.02);
        }
    }

    #[test]
    fn reference_noise_power() {
        let mut rng = substream(8, Domain::Validation, 0);
        let dep = Deployment::random(1000.0, 1, 1, radio(8), true, &mut rng).unwrap();
        assert!((dep.noise_power_w() - 6.31e-13).abs() / 6.31e-13 < 5e-3);
        assert_eq!(dep.user_positions[0], Point::new(500.0, 500.0));
    }
}
