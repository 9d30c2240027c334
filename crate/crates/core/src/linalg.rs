//! Small dense linear-algebra helpers on top of nalgebra.

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, C64};

/// Condition number above which Hermitian systems are regularized.
pub const MAX_CONDITION: f64 = 1e12;

static RANK_WARNED: AtomicBool = AtomicBool::new(false);

pub fn hermitian_deviation(a: &DMatrix<C64>) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn is_hermitian(a: &DMatrix<C64>, tol: f64) -> bool {
    a.is_square() && hermitian_deviation(a) <= tol * a.norm().max(1.0)
}

/// Eigenvalues of a Hermitian matrix (ascending).
pub fn hermitian_eigenvalues(a: &DMatrix<C64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Principal square root of a Hermitian PSD matrix; negative eigenvalues from
/// round-off are clipped to zero.
pub fn psd_sqrt(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    if is_scaled_identity(a) {
        let s = a[(0, 0)].re.max(0.0).sqrt();
        return DMatrix::from_diagonal_element(n, n, C64::new(s, 0.0));
    }
    let eig = a.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0)));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

pub fn is_scaled_identity(a: &DMatrix<C64>) -> bool {
    if !a.is_square() || a.nrows() == 0 {
        return false;
    }
    let d = a[(0, 0)];
    a.iter().enumerate().all(|(idx, v)| {
        let (i, j) = (idx % a.nrows(), idx / a.nrows());
        if i == j {
            *v == d
        } else {
            *v == C64::new(0.0, 0.0)
        }
    }) && d.im == 0.0
}

/// Factorization of a Hermitian positive definite matrix used for repeated
/// solves. Ill-conditioned inputs are ridge-regularized with a warning;
/// matrices that are not positive definite are rejected.
#[derive(Debug, Clone)]
pub struct HermitianSolver {
    chol: nalgebra::Cholesky<C64, nalgebra::Dyn>,
    pub regularized: bool,
}

impl HermitianSolver {
    pub fn new(a: &DMatrix<C64>, what: &str) -> Result<Self> {
        let ev = hermitian_eigenvalues(a);
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        let floor = f64::EPSILON * a.nrows() as f64 * hi;
        if !(hi > 0.0) || lo <= floor || !lo.is_finite() {
            return Err(Error::Numeric(format!(
                "{what} is not positive definite (eigenvalues in [{lo:e}, {hi:e}])"
            )));
        }
        let mut mat = a.clone();
        let mut regularized = false;
        if hi / lo > MAX_CONDITION {
            let ridge = hi / MAX_CONDITION;
            log::warn!("{what} has condition number {:e}; adding ridge {ridge:e}", hi / lo);
            for i in 0..mat.nrows() {
                mat[(i, i)] += C64::new(ridge, 0.0);
            }
            regularized = true;
        }
        let chol = mat
            .cholesky()
            .ok_or_else(|| Error::Numeric(format!("Cholesky factorization of {what} failed")))?;
        Ok(Self { chol, regularized })
    }

    pub fn solve(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<C64>) -> DVector<C64> {
        self.chol.solve(b)
    }
}

/// Lower-triangular factor `L` with `L Lᵀ ≈ a` for a real symmetric matrix.
/// Falls back to the nearest PSD matrix (eigenvalues clipped at zero) when
/// Cholesky fails; the boolean reports whether the fallback was used.
pub fn psd_factor(a: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if let Some(ch) = a.clone().cholesky() {
        return (ch.l(), false);
    }
    let eig = a.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    (&eig.eigenvectors * d, true)
}

/// Least-squares pseudo-inverse `(HᵀH)⁻¹Hᵀ` of a real tall matrix.
///
/// Columns are scaled to unit norm first so the conditioning test sees the
/// angles between columns rather than their path-loss spread. Rank-deficient
/// inputs get a ridge of `1e-10·tr(G)/n` on the scaled Gram matrix `G`.
pub fn pseudo_inverse(h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.ncols();
    let scale: Vec<f64> = h.column_iter().map(|c| c.norm()).map(|s| if s > 0.0 { 1.0 / s } else { 1.0 }).collect();
    let mut hs = h.clone();
    for (mut c, &d) in hs.column_iter_mut().zip(&scale) {
        c *= d;
    }
    let gram = hs.transpose() * &hs;
    let well_posed = gram.clone().cholesky().filter(|ch| {
        // cond(G) from the Cholesky diagonal
        let d = ch.l_dirty().diagonal();
        let (hi, lo) = (d.max(), d.min());
        lo > 0.0 && (hi / lo).powi(2) < MAX_CONDITION * 100.0
    });
    let mut p = match well_posed {
        Some(ch) => ch.inverse() * hs.transpose(),
        None => {
            let ridge = 1e-10 * gram.trace().max(f64::MIN_POSITIVE) / n as f64;
            if RANK_WARNED.swap(true, Ordering::Relaxed) {
                log::debug!("rank-deficient channel matrix, using ridge {ridge:e}");
            } else {
                log::warn!("rank-deficient channel matrix, using ridge {ridge:e} (further occurrences logged at debug level)");
            }
            // (GᵀG + εI)⁻¹Gᵀ = V diag(s/(s²+ε)) Uᵀ, without squaring
            let svd = hs.clone().svd(true, true);
            let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
                return DMatrix::zeros(n, h.nrows());
            };
            let shrink = svd.singular_values.map(|s| s / (s * s + ridge));
            v_t.transpose() * DMatrix::from_diagonal(&shrink) * u.transpose()
        }
    };
    for (mut row, &d) in p.row_iter_mut().zip(&scale) {
        row *= d;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_sqrt_squares_back() {
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.5, 0.5), C64::new(0.5, -0.5), C64::new(1.0, 0.0)],
        );
        let s = psd_sqrt(&a);
        assert!((&s * &s - &a).norm() < 1e-12);
    }

    #[test]
    fn singular_hermitian_rejected() {
        let z = DMatrix::<C64>::zeros(2, 2);
        assert!(matches!(HermitianSolver::new(&z, "zero"), Err(Error::Numeric(_))));
    }

    #[test]
    fn ill_conditioned_hermitian_regularized() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1e-14, 0.0)]));
        let s = HermitianSolver::new(&a, "test").unwrap();
        assert!(s.regularized);
    }

    #[test]
    fn pseudo_inverse_ignores_column_scale() {
        let h = DMatrix::from_row_slice(3, 2, &[1e-9, 0.3, 2e-9, -0.1, 0.0, 0.5]);
        let p = pseudo_inverse(&h);
        let back = &h * &p * &h;
        for j in 0..2 {
            assert!((back.column(j) - h.column(j)).norm() / h.column(j).norm() < 1e-12);
        }
    }

    #[test]
    fn pseudo_inverse_rank_deficient_is_finite() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pseudo_inverse(&h);
        assert!(p.iter().all(|v| v.is_finite()));
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let p = pseudo_inverse(&h);
        assert!((p * &h - DMatrix::identity(2, 2)).norm() < 1e-12);
    }
}
