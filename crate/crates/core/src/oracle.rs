//! Reference Kalman posterior covariances by three algebraically equivalent
//! routes, and a comparison report.
//!
//! Nothing here touches the SVD or eigen code used by the adjustment update:
//! every route is a direct product plus Cholesky solves.

use nalgebra::Cholesky;
use serde::Serialize;

use crate::ensemble::{ObservationModel, PerturbationMatrix, Vector};
use crate::error::{shape_error, Error, Result};
use crate::linalg::{symmetrize, Matrix};

/// Denominator floor for relative errors, so two zero matrices compare equal.
pub const RELATIVE_FLOOR: f64 = 1e-300;

fn check_pf(pf: &Matrix, obs: &ObservationModel) -> Result<()> {
    let n = obs.state_dim();
    if pf.shape() != (n, n) {
        return Err(shape_error("Pf", (n, n), pf.shape()));
    }
    Ok(())
}

fn spd_factor(m: Matrix) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(symmetrize(&m)).ok_or(Error::InnovationNotPositiveDefinite)
}

/// `K = Pᶠ·Hᵀ·(H·Pᶠ·Hᵀ + R)⁻¹` from an explicit forecast covariance.
pub fn gain_direct(pf: &Matrix, obs: &ObservationModel) -> Result<Matrix> {
    check_pf(pf, obs)?;
    let h = obs.h();
    let innovation = spd_factor(h * pf * h.transpose() + obs.r())?;
    Ok(innovation.solve(&(h * pf)).transpose())
}

/// `μᶠ + K·(y − H·μᶠ)`.
pub fn posterior_mean_direct(mean: &Vector, pf: &Matrix, obs: &ObservationModel) -> Result<Vector> {
    let k = gain_direct(pf, obs)?;
    Ok(mean + k * (obs.y() - obs.h() * mean))
}

/// `Pᵃ = (I − K·H)·Pᶠ`.
pub fn posterior_cov_direct(pf: &Matrix, obs: &ObservationModel) -> Result<Matrix> {
    let k = gain_direct(pf, obs)?;
    let n = pf.nrows();
    let p = (Matrix::identity(n, n) - k * obs.h()) * pf;
    Ok(symmetrize(&p))
}

/// `Pᵃ = Z·[I − V·(Vᵀ·V + R)⁻¹·Vᵀ]·Zᵀ` with `V = (H·Z)ᵀ`.
pub fn posterior_cov_reduced(z: &PerturbationMatrix, obs: &ObservationModel) -> Result<Matrix> {
    let zm = z.matrix();
    let n = zm.nrows();
    check_pf(&Matrix::zeros(n, n), obs)?;
    let v = (obs.h() * zm).transpose();
    let m = zm.ncols();
    let inner = spd_factor(v.transpose() * &v + obs.r())?;
    let middle = Matrix::identity(m, m) - &v * inner.solve(&v.transpose());
    Ok(symmetrize(&(zm * middle * zm.transpose())))
}

/// `Pᵃ = Z·[I + V·R⁻¹·Vᵀ]⁻¹·Zᵀ`.
pub fn posterior_cov_woodbury(z: &PerturbationMatrix, obs: &ObservationModel) -> Result<Matrix> {
    let zm = z.matrix();
    let n = zm.nrows();
    check_pf(&Matrix::zeros(n, n), obs)?;
    let v = (obs.h() * zm).transpose();
    let m = zm.ncols();
    let r = Cholesky::new(obs.r().clone()).ok_or(Error::RNotPositiveDefinite)?;
    let s = &v * r.solve(&v.transpose());
    let inner = spd_factor(Matrix::identity(m, m) + s)?;
    Ok(symmetrize(&(zm * inner.solve(&zm.transpose()))))
}

/// Distance between two covariance matrices. `trace_deficit > 0` means `lhs`
/// carries less total variance than `rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub frobenius_abs: f64,
    pub frobenius_rel: f64,
    pub trace_lhs: f64,
    pub trace_rhs: f64,
    pub trace_deficit: f64,
    pub max_abs_entry_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn compare_cov(lhs: &Matrix, rhs: &Matrix, tolerance: f64) -> Result<ComparisonReport> {
    if lhs.shape() != rhs.shape() {
        return Err(shape_error("compared matrix", rhs.shape(), lhs.shape()));
    }
    let diff = lhs - rhs;
    let frobenius_abs = diff.norm();
    let frobenius_rel = frobenius_abs / rhs.norm().max(RELATIVE_FLOOR);
    let trace_lhs = lhs.trace();
    let trace_rhs = rhs.trace();
    Ok(ComparisonReport {
        frobenius_abs,
        frobenius_rel,
        trace_lhs,
        trace_rhs,
        trace_deficit: trace_rhs - trace_lhs,
        max_abs_entry_diff: diff.amax(),
        tolerance,
        passed: frobenius_rel <= tolerance,
    })
}
