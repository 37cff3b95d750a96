//! The ensemble adjustment analysis step.
//!
//! Perturbations are updated as `Zᵃ = A·Zᶠ` with
//!
//! ```text
//! A = Zᶠ · C · (I + Γ)^(-1/2) · G† · Fᵀ
//! ```
//!
//! where `Zᶠ = F·G·Uᵀ` is the full-right SVD (`F` is `n×r`, `G` is `r×m`,
//! `U` is `m×m`), `G†` is the `m×r` pseudoinverse of `G`, and
//! `V·R⁻¹·Vᵀ = C·Γ·Cᵀ` with `V = (H·Zᶠ)ᵀ`.
//!
//! Substituting the SVD gives `Zᵃ = Zᶠ·C·(I+Γ)^(-1/2)·(G†·G)·Uᵀ`, and `G†·G`
//! is the `m×m` diagonal projector with ones in its first `r` slots. The
//! truncation is harmless only if the last `m−r` columns of `C` lie in the
//! null space of `Zᶠ`, since `Zᶠ·C` is then already zero there and
//! `Zᵃ·Zᵃᵀ = Zᶠ·(I + V·R⁻¹·Vᵀ)⁻¹·Zᶠᵀ`, the Kalman posterior covariance.
//! [`ordered_eig_psd`] guarantees that ordering. [`OrderingMode::Misordered`]
//! deliberately breaks it and produces an under-dispersed ensemble.
//!
//! The variant with an invertible square `G⁻¹` has no compute path here. With
//! the compact SVD, `G` is `r×r` while `(I+Γ)^(-1/2)` is `m×m`, and because
//! `r ≤ min(n, m−1) < m` for a centered ensemble the product is undefined.

use nalgebra::Cholesky;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ensemble::{ForecastEnsemble, ObservationModel, PerturbationMatrix, Vector};
use crate::error::{Error, Result};
use crate::linalg::{
    ordered_eig_psd, pinv_rect_diag, svd_full, symmetrize, Matrix, OrderedEigen, SvdFactors,
    DEFAULT_RANK_TOL,
};

/// How the eigenvector columns of `V·R⁻¹·Vᵀ` are arranged before forming `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderingMode {
    /// Null-space eigenvectors occupy the trailing columns.
    Correct,
    /// Columns (and eigenvalues) are shuffled so at least one null-space
    /// column lands in the leading block. For demonstrations and negative
    /// tests only.
    Misordered { seed: u64 },
}

/// `V = (H·Z)ᵀ` and `S = V·R⁻¹·Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsSpaceProjection {
    pub v: Matrix,
    pub s: Matrix,
}

pub fn project_observations(
    z: &PerturbationMatrix,
    obs: &ObservationModel,
) -> Result<ObsSpaceProjection> {
    obs.check_state_dim(z.state_dim())?;
    let hz = obs.h() * z.matrix();
    let s = symmetrize(&(hz.transpose() * obs.solve_r(&hz)));
    Ok(ObsSpaceProjection {
        v: hz.transpose(),
        s,
    })
}

/// `K = Pᶠ·Hᵀ·(H·Pᶠ·Hᵀ + R)⁻¹`, with `Pᶠ` kept in factored form `Z·Zᵀ`.
pub fn kalman_gain(z: &PerturbationMatrix, obs: &ObservationModel) -> Result<Matrix> {
    obs.check_state_dim(z.state_dim())?;
    let hz = obs.h() * z.matrix();
    let innovation = symmetrize(&(&hz * hz.transpose() + obs.r()));
    let factor = Cholesky::new(innovation).ok_or(Error::InnovationNotPositiveDefinite)?;
    // K = (Innov⁻¹ · H·Pᶠ)ᵀ since Innov is symmetric.
    let h_pf = &hz * z.matrix().transpose();
    Ok(factor.solve(&h_pf).transpose())
}

/// The adjustment matrix together with the decompositions that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentMatrix {
    pub a: Matrix,
    pub svd: SvdFactors,
    /// Eigendecomposition actually used: permuted in misordered mode.
    pub eigen: OrderedEigen,
    /// `C_used[:, k] = C_ordered[:, permutation[k]]`.
    pub permutation: Vec<usize>,
}

impl AdjustmentMatrix {
    /// `A·Z`.
    pub fn apply(&self, z: &PerturbationMatrix) -> Matrix {
        &self.a * z.matrix()
    }

    /// True if some null-space column of the ordered decomposition was moved
    /// into the leading `r` positions.
    pub fn displaces_null_column(&self) -> bool {
        let r = self.svd.rank();
        self.permutation[..r].iter().any(|&j| j >= r)
    }
}

/// Shuffles `0..m` until at least one index `≥ r` lands in the first `r`
/// slots. Returns the identity when no such arrangement exists.
pub fn misordering_permutation(m: usize, r: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..m).collect();
    if r == 0 || r >= m {
        return perm;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        perm.shuffle(&mut rng);
        if perm[..r].iter().any(|&j| j >= r) {
            return perm;
        }
    }
}

fn permute(eig: &OrderedEigen, perm: &[usize]) -> OrderedEigen {
    let c = eig.c();
    let mut permuted_c = Matrix::zeros(c.nrows(), c.ncols());
    for (k, &j) in perm.iter().enumerate() {
        permuted_c.set_column(k, &c.column(j));
    }
    let gamma: Vec<f64> = perm.iter().map(|&j| eig.gamma()[j]).collect();
    eig.with_columns(permuted_c, gamma)
}

pub fn adjustment_matrix(
    z: &PerturbationMatrix,
    obs: &ObservationModel,
    mode: OrderingMode,
) -> Result<AdjustmentMatrix> {
    let n = z.state_dim();
    let m = z.members();
    let svd = svd_full(z.matrix(), DEFAULT_RANK_TOL)?;
    let projection = project_observations(z, obs)?;
    let ordered = ordered_eig_psd(&projection.s, &svd.row_space_basis(), &svd.null_basis())?;
    let r = svd.rank();

    let (eigen, permutation) = match mode {
        OrderingMode::Correct => (ordered, (0..m).collect()),
        OrderingMode::Misordered { seed } => {
            let perm = misordering_permutation(m, r, seed);
            (permute(&ordered, &perm), perm)
        }
    };

    let a = if r == 0 {
        Matrix::zeros(n, n)
    } else {
        // Z·C·(I+Γ)^(-1/2), scaling column k by 1/√(1+γ_k).
        let mut zcd = z.matrix() * eigen.c();
        for (k, mut col) in zcd.column_iter_mut().enumerate() {
            col /= (1.0 + eigen.gamma()[k].max(0.0)).sqrt();
        }
        zcd * pinv_rect_diag(svd.g())? * svd.f().transpose()
    };

    Ok(AdjustmentMatrix {
        a,
        svd,
        eigen,
        permutation,
    })
}

/// Analysis mean, perturbations, covariance and gain.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    pub mean: Vector,
    pub za: Matrix,
    pub pa: Matrix,
    pub gain: Matrix,
    pub adjustment: AdjustmentMatrix,
}

impl AnalysisResult {
    /// Analysis members `μᵃ + √(m−1)·Zᵃ[:, i]`.
    pub fn ensemble(&self) -> Result<ForecastEnsemble> {
        ForecastEnsemble::from_mean_and_perturbations(&self.mean, &self.za)
    }
}

/// Runs one analysis: perturbations through the adjustment matrix and the
/// mean through the Kalman gain, `μᵃ = μᶠ + K·(y − H·μᶠ)`.
pub fn analyze(
    ens: &ForecastEnsemble,
    obs: &ObservationModel,
    mode: OrderingMode,
) -> Result<AnalysisResult> {
    let z = ens.perturbations();
    let adjustment = adjustment_matrix(&z, obs, mode)?;
    let za = adjustment.apply(&z);
    let pa = symmetrize(&(&za * za.transpose()));
    let gain = kalman_gain(&z, obs)?;
    let innovation = obs.y() - obs.h() * ens.mean();
    let mean = ens.mean() + &gain * innovation;
    Ok(AnalysisResult {
        mean,
        za,
        pa,
        gain,
        adjustment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_instance() -> (ForecastEnsemble, ObservationModel) {
        let ens = ForecastEnsemble::new(Matrix::from_row_slice(1, 2, &[1.0, -1.0])).unwrap();
        let obs = ObservationModel::new(
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 2.0),
            Vector::from_element(1, 1.0),
        )
        .unwrap();
        (ens, obs)
    }

    fn three_member_instance() -> (ForecastEnsemble, ObservationModel) {
        let ens = ForecastEnsemble::new(Matrix::from_row_slice(
            2,
            3,
            &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0],
        ))
        .unwrap();
        let obs = ObservationModel::new(
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Matrix::from_element(1, 1, 1.0),
            Vector::from_element(1, 1.0),
        )
        .unwrap();
        (ens, obs)
    }

    #[test]
    fn projection_scalar() {
        let (ens, obs) = scalar_instance();
        let p = project_observations(&ens.perturbations(), &obs).unwrap();
        assert_eq!(p.v, Matrix::from_row_slice(2, 1, &[1.0, -1.0]));
        let expected = Matrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert_abs_diff_eq!(p.s, expected, epsilon = 1e-15);
    }

    #[test]
    fn projection_zero_h() {
        let (ens, _) = scalar_instance();
        let obs = ObservationModel::new(
            Matrix::zeros(1, 1),
            Matrix::from_element(1, 1, 2.0),
            Vector::zeros(1),
        )
        .unwrap();
        let p = project_observations(&ens.perturbations(), &obs).unwrap();
        assert_eq!(p.v, Matrix::zeros(2, 1));
        assert_eq!(p.s, Matrix::zeros(2, 2));
    }

    #[test]
    fn projection_three_members() {
        let (ens, obs) = three_member_instance();
        let p = project_observations(&ens.perturbations(), &obs).unwrap();
        let expected =
            Matrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0]) * 0.5;
        assert_abs_diff_eq!(p.s, expected, epsilon = 1e-15);
    }

    #[test]
    fn projection_shape_mismatch() {
        let (ens, _) = three_member_instance();
        let obs = ObservationModel::new(
            Matrix::identity(3, 3),
            Matrix::identity(3, 3),
            Vector::zeros(3),
        )
        .unwrap();
        assert!(matches!(
            project_observations(&ens.perturbations(), &obs),
            Err(Error::Shape { what: "H", .. })
        ));
    }

    #[test]
    fn gain_examples() {
        let (ens, obs) = scalar_instance();
        let k = kalman_gain(&ens.perturbations(), &obs).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], 0.5, epsilon = 1e-15);

        let (ens, obs) = three_member_instance();
        let k = kalman_gain(&ens.perturbations(), &obs).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(k[(1, 0)], -0.25, epsilon = 1e-15);

        let obs = ObservationModel::new(
            Matrix::zeros(1, 2),
            Matrix::from_element(1, 1, 1.0),
            Vector::zeros(1),
        )
        .unwrap();
        assert_eq!(
            kalman_gain(&ens.perturbations(), &obs).unwrap(),
            Matrix::zeros(2, 1)
        );
    }

    #[test]
    fn adjustment_scalar_correct() {
        let (ens, obs) = scalar_instance();
        let z = ens.perturbations();
        let adj = adjustment_matrix(&z, &obs, OrderingMode::Correct).unwrap();
        assert_abs_diff_eq!(
            adj.a[(0, 0)],
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        let za = adj.apply(&z);
        assert_abs_diff_eq!((&za * za.transpose())[(0, 0)], 1.0, epsilon = 1e-15);
        assert!(!adj.displaces_null_column());
    }

    #[test]
    fn adjustment_scalar_misordered_collapses() {
        let (ens, obs) = scalar_instance();
        let z = ens.perturbations();
        let adj = adjustment_matrix(&z, &obs, OrderingMode::Misordered { seed: 7 }).unwrap();
        assert_eq!(adj.permutation, vec![1, 0]);
        assert!(adj.displaces_null_column());
        let za = adj.apply(&z);
        assert_abs_diff_eq!((&za * za.transpose())[(0, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn adjustment_zero_h_keeps_forecast_covariance() {
        let (ens, _) = three_member_instance();
        let obs = ObservationModel::new(
            Matrix::zeros(1, 2),
            Matrix::from_element(1, 1, 1.0),
            Vector::zeros(1),
        )
        .unwrap();
        let z = ens.perturbations();
        let adj = adjustment_matrix(&z, &obs, OrderingMode::Correct).unwrap();
        let za = adj.apply(&z);
        assert_abs_diff_eq!(&za * za.transpose(), z.forecast_cov(), epsilon = 1e-14);
    }

    #[test]
    fn adjustment_zero_spread() {
        let ens = ForecastEnsemble::new(Matrix::from_element(2, 3, 4.0)).unwrap();
        let obs = ObservationModel::new(
            Matrix::identity(2, 2),
            Matrix::identity(2, 2),
            Vector::zeros(2),
        )
        .unwrap();
        let adj = adjustment_matrix(&ens.perturbations(), &obs, OrderingMode::Correct).unwrap();
        assert_eq!(adj.a, Matrix::zeros(2, 2));
        assert_eq!(adj.svd.rank(), 0);
        let res = analyze(&ens, &obs, OrderingMode::Misordered { seed: 1 }).unwrap();
        assert_eq!(res.pa, Matrix::zeros(2, 2));
        assert_eq!(res.mean, Vector::from_element(2, 4.0));
    }

    #[test]
    fn analyze_scalar() {
        let (ens, obs) = scalar_instance();
        let res = analyze(&ens, &obs, OrderingMode::Correct).unwrap();
        assert_abs_diff_eq!(res.mean[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(res.pa[(0, 0)], 1.0, epsilon = 1e-15);
        let members = res.ensemble().unwrap();
        assert_abs_diff_eq!(
            members.members()[(0, 0)] + members.members()[(0, 1)],
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn analyze_zero_innovation_keeps_mean() {
        let (ens, _) = three_member_instance();
        let obs = ObservationModel::new(
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Matrix::from_element(1, 1, 1.0),
            Vector::from_element(1, ens.mean()[0]),
        )
        .unwrap();
        let res = analyze(&ens, &obs, OrderingMode::Correct).unwrap();
        assert_eq!(&res.mean, ens.mean());
    }

    #[test]
    fn analyze_three_members() {
        let (ens, obs) = three_member_instance();
        let res = analyze(&ens, &obs, OrderingMode::Correct).unwrap();
        assert_abs_diff_eq!(res.mean[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(res.mean[1], -0.25, epsilon = 1e-15);
        let expected = Matrix::from_row_slice(2, 2, &[0.5, -0.25, -0.25, 0.875]);
        assert_abs_diff_eq!(res.pa, expected, epsilon = 1e-14);
    }

    #[test]
    fn misordering_permutation_displaces_and_is_deterministic() {
        for seed in 0..50 {
            let perm = misordering_permutation(6, 4, seed);
            assert!(perm[..4].iter().any(|&j| j >= 4));
            assert_eq!(perm, misordering_permutation(6, 4, seed));
        }
        assert_eq!(misordering_permutation(3, 0, 9), vec![0, 1, 2]);
    }
}
