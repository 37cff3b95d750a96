//! Dense decompositions with the shape, rank and column-ordering contracts the
//! adjustment update relies on.
//!
//! [`svd_full`] returns the "full right" SVD `M = F·G·Uᵀ` where `F` is `n×r`,
//! `G` is `r×m` rectangular diagonal and `U` is a square `m×m` orthogonal
//! matrix. The trailing `m−r` columns of `U` are an orthonormal basis of the
//! null space of `M`.
//!
//! [`ordered_eig_psd`] decomposes a symmetric PSD `m×m` matrix whose range lies
//! in the row space of a perturbation matrix, and places that matrix's null
//! space in the trailing columns of the eigenvector matrix regardless of how
//! many extra zero eigenvalues the input has.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{shape_error, Error, Result};

pub type Matrix = DMatrix<f64>;

/// Default relative rank threshold: singular values at or below
/// `DEFAULT_RANK_TOL·σ₁·max(n, m)` are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = f64::EPSILON;

/// Relative asymmetry accepted by [`ordered_eig_psd`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Relative residual `‖S·N‖_F / ‖S‖_F` accepted for the supplied null basis `N`.
pub const NULL_BASIS_TOL: f64 = 1e-8;

const MAX_JACOBI_SWEEPS: usize = 80;

/// Fails with [`Error::NonFinite`] on the first NaN or infinite entry.
pub fn ensure_finite(m: &Matrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Flips `col` so that its entry of largest magnitude is positive. Ties go to
/// the smallest index. Returns true if the column was negated.
fn fix_sign(col: &mut nalgebra::DVectorViewMut<'_, f64>) -> bool {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = i;
        }
    }
    if best_abs > 0.0 && col[best] < 0.0 {
        col.neg_mut();
        true
    } else {
        false
    }
}

/// Full-right singular value decomposition `M = F·G·Uᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    f: Matrix,
    g: Matrix,
    u: Matrix,
    singular_values: Vec<f64>,
    rank: usize,
}

impl SvdFactors {
    /// `n×r`, orthonormal columns.
    pub fn f(&self) -> &Matrix {
        &self.f
    }

    /// `r×m` rectangular diagonal.
    pub fn g(&self) -> &Matrix {
        &self.g
    }

    /// `m×m` orthogonal.
    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Retained singular values, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// First `r` columns of `U`: orthonormal basis of the row space.
    pub fn row_space_basis(&self) -> Matrix {
        self.u.columns(0, self.rank).into_owned()
    }

    /// Last `m−r` columns of `U`: orthonormal basis of the null space.
    pub fn null_basis(&self) -> Matrix {
        let m = self.u.ncols();
        self.u.columns(self.rank, m - self.rank).into_owned()
    }

    /// `F·G·Uᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        &self.f * &self.g * self.u.transpose()
    }
}

/// Computes the full-right SVD of `m` by one-sided Jacobi rotations on its
/// columns.
///
/// The accumulated rotation is the complete `m×m` orthogonal `U`, so the null
/// space comes out of the same computation as the row space. Columns are
/// sorted by descending singular value (stable) and the numerical rank is the
/// number of singular values above `rank_tol·σ₁·max(n, m)`.
///
/// Sign convention: the largest-magnitude entry of every left singular vector
/// is positive, with the matching right singular vector flipped alongside.
/// Null-space columns of `U` follow the same rule on their own entries.
pub fn svd_full(m: &Matrix, rank_tol: f64) -> Result<SvdFactors> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    ensure_finite(m)?;

    let mut w = m.clone();
    let mut v = Matrix::identity(cols, cols);
    // Columns below this squared norm are rounding noise and sit under any
    // rank threshold; rotating them against each other never converges once
    // there are more columns than rows.
    let negligible = (f64::EPSILON * m.norm()).powi(2);

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let sigma_max = norms[order[0]];
    let threshold = rank_tol * sigma_max * rows.max(cols) as f64;
    let rank = order
        .iter()
        .take_while(|&&j| norms[j] > threshold && norms[j] > 0.0)
        .count()
        .min(rows.min(cols));

    let mut f = Matrix::zeros(rows, rank);
    let mut g = Matrix::zeros(rank, cols);
    let mut u = Matrix::zeros(cols, cols);
    let mut singular_values = Vec::with_capacity(rank);
    for (k, &j) in order.iter().enumerate() {
        u.set_column(k, &v.column(j));
        if k < rank {
            let sigma = norms[j];
            f.set_column(k, &(w.column(j) / sigma));
            g[(k, k)] = sigma;
            singular_values.push(sigma);
        }
    }
    for k in 0..cols {
        if k < rank {
            if fix_sign(&mut f.column_mut(k)) {
                u.column_mut(k).neg_mut();
            }
        } else {
            fix_sign(&mut u.column_mut(k));
        }
    }

    Ok(SvdFactors {
        f,
        g,
        u,
        singular_values,
        rank,
    })
}

fn rotate_columns(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.nrows() {
        let ap = a[(i, p)];
        let aq = a[(i, q)];
        a[(i, p)] = c * ap - s * aq;
        a[(i, q)] = s * ap + c * aq;
    }
}

/// Moore-Penrose pseudoinverse of an `r×m` rectangular diagonal matrix: the
/// `m×r` rectangular diagonal with reciprocal diagonal entries.
pub fn pinv_rect_diag(g: &Matrix) -> Result<Matrix> {
    ensure_finite(g)?;
    let (rows, cols) = g.shape();
    for j in 0..cols {
        for i in 0..rows {
            if i != j && g[(i, j)] != 0.0 {
                return Err(Error::NotDiagonal { row: i, col: j });
            }
        }
    }
    let mut pinv = Matrix::zeros(cols, rows);
    for k in 0..rows.min(cols) {
        let d = g[(k, k)];
        if d == 0.0 {
            return Err(Error::ZeroDiagonal { index: k });
        }
        pinv[(k, k)] = 1.0 / d;
    }
    Ok(pinv)
}

/// Eigendecomposition `S = C·diag(Γ)·Cᵀ` whose trailing `m−r` columns are a
/// prescribed null basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedEigen {
    c: Matrix,
    gamma: Vec<f64>,
    effective_rank: usize,
    null_dim: usize,
}

impl OrderedEigen {
    /// `m×m` orthogonal eigenvector matrix.
    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// Eigenvalues, descending and clamped at zero.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Number of eigenvalues above the numerical-rank threshold.
    pub fn effective_rank(&self) -> usize {
        self.effective_rank
    }

    /// Width of the trailing null block (`m−r`).
    pub fn null_dim(&self) -> usize {
        self.null_dim
    }

    /// Same decomposition with rearranged columns; used to build the
    /// misordered variant.
    pub(crate) fn with_columns(&self, c: Matrix, gamma: Vec<f64>) -> OrderedEigen {
        OrderedEigen {
            c,
            gamma,
            effective_rank: self.effective_rank,
            null_dim: self.null_dim,
        }
    }

    pub fn reconstruct(&self) -> Matrix {
        let scaled = Matrix::from_fn(self.c.nrows(), self.c.ncols(), |i, j| {
            self.c[(i, j)] * self.gamma[j]
        });
        scaled * self.c.transpose()
    }
}

/// Builds the ordered eigendecomposition of a symmetric PSD `S` by projecting
/// onto `row_basis` (the leading `r` columns of `U` from [`svd_full`] of the
/// perturbation matrix) and appending `null_basis` (the trailing `m−r`
/// columns) unchanged.
///
/// With `W = Uᵣᵀ·S·Uᵣ = Q·Λ·Qᵀ`, the result is `C = [Uᵣ·Q, N]` and
/// `Γ = (Λ, 0, …, 0)`. The null block stays in the trailing position even
/// when `S` has more zero eigenvalues than `m−r`.
pub fn ordered_eig_psd(
    s: &Matrix,
    row_basis: &Matrix,
    null_basis: &Matrix,
) -> Result<OrderedEigen> {
    let (m, m2) = s.shape();
    if m == 0 {
        return Err(Error::EmptyMatrix);
    }
    if m != m2 {
        return Err(shape_error("S", (m, m), (m, m2)));
    }
    ensure_finite(s)?;
    let r = row_basis.ncols();
    if row_basis.nrows() != m {
        return Err(shape_error("row-space basis", (m, r), row_basis.shape()));
    }
    if null_basis.shape() != (m, m - r.min(m)) || r > m {
        return Err(shape_error(
            "null basis",
            (m, m - r.min(m)),
            null_basis.shape(),
        ));
    }

    let s_norm = s.norm();
    let asymmetry = (s - s.transpose()).norm();
    if asymmetry > SYMMETRY_TOL * s_norm {
        return Err(Error::NotSymmetric {
            asymmetry: asymmetry / s_norm,
        });
    }
    if null_basis.ncols() > 0 {
        let residual = (s * null_basis).norm();
        if residual > NULL_BASIS_TOL * s_norm {
            return Err(Error::BasisInconsistent {
                residual: residual / s_norm,
            });
        }
    }

    let mut c = Matrix::zeros(m, m);
    let mut gamma = vec![0.0; m];
    if r > 0 {
        let w = symmetrize(&(row_basis.transpose() * s * row_basis));
        let eig = SymmetricEigen::new(w);
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut q = Matrix::zeros(r, r);
        for (k, &j) in order.iter().enumerate() {
            q.set_column(k, &eig.eigenvectors.column(j));
            gamma[k] = eig.eigenvalues[j].max(0.0);
        }
        let mut leading = row_basis * q;
        for k in 0..r {
            fix_sign(&mut leading.column_mut(k));
        }
        c.columns_mut(0, r).copy_from(&leading);
    }
    c.columns_mut(r, m - r).copy_from(null_basis);

    let gamma_max = gamma.first().copied().unwrap_or(0.0);
    let threshold = DEFAULT_RANK_TOL * gamma_max * m as f64;
    let effective_rank = gamma.iter().filter(|&&g| g > threshold && g > 0.0).count();

    Ok(OrderedEigen {
        c,
        gamma,
        effective_rank,
        null_dim: m - r,
    })
}
