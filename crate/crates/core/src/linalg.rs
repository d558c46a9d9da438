//! Small dense linear-algebra helpers shared across modules.
//!
//! All structural matrices in this crate (L, B, M, K) are real while
//! configurations are complex, so most helpers apply a real matrix to a complex
//! vector without promoting the matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;

pub fn apply_real(m: &DMatrix<f64>, x: &DVector<C64>) -> DVector<C64> {
    assert_eq!(m.ncols(), x.len(), "dimension mismatch");
    let mut out = DVector::from_element(m.nrows(), C64::new(0.0, 0.0));
    for j in 0..m.ncols() {
        let xj = x[j];
        if xj.re == 0.0 && xj.im == 0.0 {
            continue;
        }
        for i in 0..m.nrows() {
            let a = m[(i, j)];
            out[i].re += a * xj.re;
            out[i].im += a * xj.im;
        }
    }
    out
}

pub fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

pub fn re(x: &DVector<C64>) -> DVector<f64> {
    x.map(|c| c.re)
}

pub fn im(x: &DVector<C64>) -> DVector<f64> {
    x.map(|c| c.im)
}

pub fn norm_c(x: &DVector<C64>) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn spectral_norm_c(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().cloned().collect()
}

/// Numerical rank with singular-value threshold `rel_tol · σ_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let smax = s.first().cloned().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// Orthonormal basis (as columns) of the right nullspace of `a`.
///
/// Singular values below `rel_tol · σ_max` count as zero. Wide matrices are
/// padded with zero rows so the SVD returns a full right basis.
pub fn nullspace(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax == 0.0 || s <= rel_tol * smax)
        .map(|(k, _)| v_t.row(k).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimum-norm least-squares solution of `a·x = b`.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let (m, n) = a.shape();
    if n == 0 {
        return DVector::zeros(0);
    }
    if m == 0 {
        return DVector::zeros(n);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = if smax == 0.0 { 1.0 } else { rel_tol * smax };
    svd.solve(b, eps).expect("U and V were computed")
}

/// Eigenvectors of a symmetric matrix for eigenvalues near 1, as columns.
/// Used to extract an orthonormal basis of a projector's range.
pub fn projector_range(p: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let eig = p.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..p.nrows()).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let cols: Vec<DVector<f64>> = idx
        .iter()
        .take(dim)
        .map(|&k| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(p.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nullspace_of_wide_matrix() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = nullspace(&a, 1e-9);
        assert_eq!(ns.ncols(), 2);
        assert!((&a * &ns).norm() < 1e-12);
    }

    #[test]
    fn min_norm_solution_of_underdetermined_row() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = min_norm_solve(&a, &DVector::from_vec(vec![2.0]), 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_real_matches_promoted_product() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let x = DVector::from_vec(vec![C64::new(1.0, -1.0), C64::new(0.25, 2.0)]);
        let direct = complexify(&m) * &x;
        assert!(norm_c(&(apply_real(&m, &x) - direct)) < 1e-15);
    }
}
