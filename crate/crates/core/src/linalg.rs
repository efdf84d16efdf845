//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Minimum eigenvalue accepted before a symmetric system is treated as singular.
pub const SINGULAR_EIG_TOL: f64 = 1e-10;

/// Symmetric projection `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Asymmetry measure `‖M − Mᵀ‖_F`.
pub fn asymmetry(m: &Mat) -> f64 {
    (m - m.transpose()).norm()
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
///
/// Fails with [`Error::Singular`] when the smallest eigenvalue is below
/// [`SINGULAR_EIG_TOL`]; `matrix` and `node` are carried into the error.
pub fn spd_inverse(m: &Mat, matrix: &'static str, node: usize) -> Result<Mat> {
    let sym = symmetrize(m);
    let min_eigenvalue = min_eigenvalue(&sym);
    if !(min_eigenvalue >= SINGULAR_EIG_TOL) {
        return Err(Error::Singular {
            matrix,
            node,
            min_eigenvalue,
        });
    }
    if sym.nrows() == 1 {
        return Ok(Mat::from_element(1, 1, 1.0 / sym[(0, 0)]));
    }
    let chol = sym.cholesky().ok_or(Error::Singular {
        matrix,
        node,
        min_eigenvalue,
    })?;
    Ok(symmetrize(&chol.inverse()))
}

/// Spectral norm (largest singular value).
pub fn operator_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Numerical rank with relative tolerance `1e-10 · max(1, σ_max)`.
pub fn rank(m: &Mat) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let tol = 1e-10 * smax.max(1.0);
    sv.iter().filter(|&&s| s > tol).count()
}

/// `½ xᵀ M x`.
pub fn half_quadratic(m: &Mat, x: &Vector) -> f64 {
    0.5 * x.dot(&(m * x))
}

/// Column-major flattening, matching the `vec(·)` operator.
pub fn vec_of(m: &Mat) -> impl Iterator<Item = f64> + '_ {
    m.iter().copied()
}

/// Pairwise (cascade) summation in index order; the result depends only on
/// the input order, never on how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        len if len <= 8 => values.iter().sum(),
        len => {
            let (lo, hi) = values.split_at(len / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}
