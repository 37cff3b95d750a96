//! Ensemble and observation-model types.

use nalgebra::{Cholesky, DVector, Dyn};

use crate::error::{shape_error, Error, Result};
use crate::linalg::{ensure_finite, symmetrize, Matrix};

pub type Vector = DVector<f64>;

/// Relative row-sum tolerance for a matrix to count as centered.
pub const CENTERED_TOL: f64 = 1e-12;

/// Relative asymmetry accepted for `R`.
pub const R_SYMMETRY_TOL: f64 = 1e-12;

/// Forecast ensemble: column `i` of `members` is member `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastEnsemble {
    members: Matrix,
    mean: Vector,
}

impl ForecastEnsemble {
    pub fn new(members: Matrix) -> Result<Self> {
        let (n, m) = members.shape();
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if m < 2 {
            return Err(Error::EnsembleTooSmall { members: m });
        }
        ensure_finite(&members)?;
        // Shifted by the first member so identical members give an exact mean.
        let first = members.column(0).into_owned();
        let mut mean = Vector::zeros(n);
        for col in members.column_iter() {
            mean += col - &first;
        }
        let mean = first + mean / m as f64;
        Ok(Self { members, mean })
    }

    pub fn members(&self) -> &Matrix {
        &self.members
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.members.nrows()
    }

    /// Ensemble size `m`.
    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    /// Scaled perturbations `Z[:, i] = (x_i − μ)/√(m−1)`.
    pub fn perturbations(&self) -> PerturbationMatrix {
        let scale = 1.0 / ((self.size() - 1) as f64).sqrt();
        let mut z = self.members.clone();
        for mut col in z.column_iter_mut() {
            col -= &self.mean;
            col *= scale;
        }
        PerturbationMatrix { z }
    }

    /// Inverse of [`ForecastEnsemble::perturbations`]: members
    /// `mean + √(m−1)·Z[:, i]`. The supplied mean is stored as is.
    pub fn from_mean_and_perturbations(mean: &Vector, z: &Matrix) -> Result<Self> {
        let (n, m) = z.shape();
        if mean.len() != n {
            return Err(shape_error("analysis mean", (n, 1), (mean.len(), 1)));
        }
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if m < 2 {
            return Err(Error::EnsembleTooSmall { members: m });
        }
        ensure_finite(z)?;
        check_centered(z)?;
        let scale = ((m - 1) as f64).sqrt();
        let mut members = z * scale;
        for mut col in members.column_iter_mut() {
            col += mean;
        }
        Ok(Self {
            members,
            mean: mean.clone(),
        })
    }
}

fn check_centered(z: &Matrix) -> Result<()> {
    let scale = z.norm();
    for (row, r) in z.row_iter().enumerate() {
        let sum = r.sum();
        if sum.abs() > CENTERED_TOL * scale {
            return Err(Error::NotCentered {
                row,
                row_sum: if scale > 0.0 {
                    sum.abs() / scale
                } else {
                    sum.abs()
                },
            });
        }
    }
    Ok(())
}

/// Scaled ensemble perturbation matrix `Z`, with `P = Z·Zᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationMatrix {
    z: Matrix,
}

impl PerturbationMatrix {
    /// Wraps an already-scaled perturbation matrix after checking that its
    /// rows sum to zero.
    pub fn from_centered(z: Matrix) -> Result<Self> {
        if z.nrows() == 0 {
            return Err(Error::EmptyMatrix);
        }
        if z.ncols() < 2 {
            return Err(Error::EnsembleTooSmall { members: z.ncols() });
        }
        ensure_finite(&z)?;
        check_centered(&z)?;
        Ok(Self { z })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.z
    }

    pub fn state_dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn members(&self) -> usize {
        self.z.ncols()
    }

    /// `P^f = Z·Zᵀ`.
    pub fn forecast_cov(&self) -> Matrix {
        symmetrize(&(&self.z * self.z.transpose()))
    }
}

/// Linear observation operator `H` (`p×n`), error covariance `R` (`p×p`,
/// SPD) and observation vector `y`.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    h: Matrix,
    r: Matrix,
    y: Vector,
    r_factor: Cholesky<f64, Dyn>,
}

impl ObservationModel {
    pub fn new(h: Matrix, r: Matrix, y: Vector) -> Result<Self> {
        let p = h.nrows();
        if p == 0 || h.ncols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        if r.shape() != (p, p) {
            return Err(shape_error("R", (p, p), r.shape()));
        }
        if y.len() != p {
            return Err(shape_error("y", (p, 1), (y.len(), 1)));
        }
        ensure_finite(&h)?;
        ensure_finite(&r)?;
        for (i, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: 0 });
            }
        }
        let asym = (&r - r.transpose()).norm();
        if asym > R_SYMMETRY_TOL * r.norm() {
            return Err(Error::NotSymmetric {
                asymmetry: asym / r.norm(),
            });
        }
        let r = symmetrize(&r);
        let r_factor = Cholesky::new(r.clone()).ok_or(Error::RNotPositiveDefinite)?;
        Ok(Self { h, r, y, r_factor })
    }

    /// Observation model with diagonal `R = diag(variances)`.
    pub fn with_diagonal_r(h: Matrix, variances: &Vector, y: Vector) -> Result<Self> {
        Self::new(h, Matrix::from_diagonal(variances), y)
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    /// Number of observations `p`.
    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    /// `R⁻¹·B` by Cholesky solve.
    pub fn solve_r(&self, b: &Matrix) -> Matrix {
        self.r_factor.solve(b)
    }

    pub(crate) fn check_state_dim(&self, n: usize) -> Result<()> {
        if self.state_dim() != n {
            return Err(shape_error("H", (self.obs_dim(), n), self.h.shape()));
        }
        Ok(())
    }
}
