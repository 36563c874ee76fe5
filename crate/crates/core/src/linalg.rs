//! Small dense solves on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for pseudo-inverses.
pub const RANK_TOL: f64 = 1e-12;

/// Outcome of a ridge solve.
#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub x: DVector<f64>,
    /// Number of singular values dropped as numerically zero.
    pub dropped: usize,
}

/// Minimizer of `‖Ax − b‖² + λ‖x‖²`, i.e. `(AᵀA + λI)⁻¹Aᵀb`, computed from
/// the SVD of `A` so the normal matrix is never formed. At `λ = 0` this is
/// the minimum-norm least-squares solution.
pub fn ridge_solve(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<RidgeSolution> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter("ridge penalty must be finite and >= 0".into()));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear system"));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or(Error::Singular("linear system"))?;
    let v_t = svd.v_t.as_ref().ok_or(Error::Singular("linear system"))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let utb = u.transpose() * b;
    let mut scaled = DVector::zeros(svd.singular_values.len());
    let mut dropped = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let denom = s * s + lambda;
        if lambda == 0.0 && s <= cutoff || denom == 0.0 {
            dropped += 1;
            continue;
        }
        scaled[i] = s * utb[i] / denom;
    }
    Ok(RidgeSolution {
        x: v_t.transpose() * scaled,
        dropped,
    })
}

/// Solves the square system `Ax = b` by LU with partial pivoting,
/// rejecting numerically singular matrices.
pub fn solve_square(a: &DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::Singular(what));
    }
    a.clone().lu().solve(b).ok_or(Error::Singular(what))
}

/// Least-squares fit of `y` on the rows of `x` (no penalty).
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(ridge_solve(x, y, 0.0)?.x)
}
