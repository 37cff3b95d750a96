//! Ensemble adjustment Kalman filter update with a rank-aware pseudoinverse
//! and null-space-ordered eigendecomposition, plus a dense Kalman oracle.
//!
//! ```
//! use eakf_core::{analyze, ForecastEnsemble, Matrix, ObservationModel, OrderingMode, Vector};
//!
//! let ens = ForecastEnsemble::new(Matrix::from_row_slice(1, 2, &[1.0, -1.0])).unwrap();
//! let obs = ObservationModel::new(
//!     Matrix::from_element(1, 1, 1.0),
//!     Matrix::from_element(1, 1, 2.0),
//!     Vector::from_element(1, 1.0),
//! )
//! .unwrap();
//! let res = analyze(&ens, &obs, OrderingMode::Correct).unwrap();
//! assert!((res.mean[0] - 0.5).abs() < 1e-15);
//! assert!((res.pa[(0, 0)] - 1.0).abs() < 1e-15);
//! ```

pub mod eakf;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod oracle;

pub use eakf::{
    adjustment_matrix, analyze, kalman_gain, misordering_permutation, project_observations,
    AdjustmentMatrix, AnalysisResult, ObsSpaceProjection, OrderingMode,
};
pub use ensemble::{ForecastEnsemble, ObservationModel, PerturbationMatrix, Vector};
pub use error::{Error, Result};
pub use linalg::{
    ordered_eig_psd, pinv_rect_diag, svd_full, Matrix, OrderedEigen, SvdFactors, DEFAULT_RANK_TOL,
};
pub use oracle::{
    compare_cov, gain_direct, posterior_cov_direct, posterior_cov_reduced, posterior_cov_woodbury,
    posterior_mean_direct, ComparisonReport,
};
