//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{IvError, Result};

/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `m^p` for symmetric positive-definite `m`.
pub fn sym_pow(m: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen(m);
    let top = vals.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    if vals.iter().any(|&v| v <= top * 1e-14 || !v.is_finite()) || top == 0.0 {
        return Err(IvError::InvalidInput("matrix is not positive definite".into()));
    }
    let d = DMatrix::from_diagonal(&vals.map(|v| v.powf(p)));
    Ok(&vecs * d * vecs.transpose())
}

/// Symmetric inverse square root.
pub fn inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sym_pow(m, -0.5)
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Count of singular values above `RANK_TOL * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > RANK_TOL * top).count(),
        _ => 0,
    }
}

/// Largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals.iter().fold(0.0_f64, |a, &v| a.max(v.abs()))
}

/// Check `P^2 = P` to `tol * max(1, |P|)`.
pub fn check_idempotent(p: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !p.is_square() {
        return Err(IvError::DimensionMismatch("projector must be square".into()));
    }
    let scale = p.norm().max(1.0);
    if (p * p - p).norm() > tol * scale {
        return Err(IvError::InvalidInput("projector is not idempotent".into()));
    }
    Ok(())
}

/// Orthonormal bases `(range, null)` where `null` spans the kernel of `p`
/// and `range` its orthogonal complement (the row space of `p`).
pub fn split_bases(p: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let j = p.ncols();
    let gram = p.transpose() * p;
    let (vals, vecs) = sym_eigen(&gram);
    let top = vals.iter().fold(0.0_f64, |a, &v| a.max(v));
    // singular value threshold, squared on the Gram scale
    let cut = if top > 0.0 { (RANK_TOL * top.sqrt()).powi(2) } else { f64::INFINITY };
    let null_idx: Vec<usize> = (0..j).filter(|&i| vals[i] <= cut).collect();
    let range_idx: Vec<usize> = (0..j).filter(|&i| vals[i] > cut).rev().collect();
    let pick = |idx: &[usize]| DMatrix::from_fn(j, idx.len(), |r, c| vecs[(r, idx[c])]);
    (pick(&range_idx), pick(&null_idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = inv_sqrt(&m).unwrap();
        let back = &r * &m * &r;
        assert_relative_eq!(back, DMatrix::identity(2, 2), epsilon = 1e-12);
        assert_relative_eq!(&r, &r.transpose(), epsilon = 1e-14);
    }

    #[test]
    fn split_of_coordinate_projector() {
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 1.0]));
        let (range, null) = split_bases(&p);
        assert_eq!(range.ncols(), 2);
        assert_eq!(null.ncols(), 1);
        assert_relative_eq!((&p * &null).norm(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(null[(1, 0)].abs(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rank_of_outer_product() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(numerical_rank(&(&v * v.transpose())), 1);
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 3)), 0);
    }
}
