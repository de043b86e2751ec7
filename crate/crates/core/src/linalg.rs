//! Small dense and sparse helpers shared by the analysis and solver modules.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CscMatrix};

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_RTOL: f64 = 1e-10;

/// Numerical rank: singular values above `RANK_RTOL · σ_max` are counted.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * smax).count()
}

/// Horizontal concatenation of matrices sharing a row count.
pub fn hstack(rows: usize, blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Orthonormal basis (as columns) of the left null space of `m`.
pub fn left_null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    // Zero columns leave ker(mᵀ) unchanged; padding makes U square.
    let padded = if m.ncols() < n { hstack(n, &[m, &DMatrix::zeros(n, n - m.ncols())]) } else { m.clone() };
    let svd = padded.svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = RANK_RTOL * smax;
    let keep: Vec<usize> = (0..n).filter(|&i| smax == 0.0 || svd.singular_values[i] <= cut).collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &u.column(i));
    }
    out
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.nrows() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let eps = if smax == 0.0 { 1.0 } else { RANK_RTOL * smax };
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Sparse matrix–vector product.
pub fn spmv(a: &CscMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for (j, col) in a.col_iter().enumerate() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            y[i] += v * xj;
        }
    }
    y
}

/// Builds a CSC matrix from triplets, summing duplicates.
pub fn csc_from_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut coo = CooMatrix::new(nrows, ncols);
    for &(i, j, v) in trip {
        coo.push(i, j, v);
    }
    CscMatrix::from(&coo)
}

/// Frobenius norm of a sparse matrix.
pub fn sparse_norm(a: &CscMatrix<f64>) -> f64 {
    a.values().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Frobenius norm of `a − aᵀ`.
pub fn asymmetry(a: &CscMatrix<f64>) -> f64 {
    let at = a.transpose();
    let diff = a - &at;
    sparse_norm(&diff)
}

/// Dense copy of a sparse matrix.
pub fn to_dense(a: &CscMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

/// Max-norm of a vector; 0 for empty vectors.
pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_duplicated_columns() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]);
        assert_eq!(rank(&m), 1);
        assert_eq!(rank(&DMatrix::<f64>::zeros(3, 0)), 0);
        assert_eq!(rank(&DMatrix::<f64>::zeros(2, 2)), 0);
    }

    #[test]
    fn left_null_space_of_rank_one() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let w = left_null_space(&m);
        assert_eq!(w.ncols(), 1);
        assert!((w.transpose() * &m).norm() < 1e-12);
    }

    #[test]
    fn spmv_matches_dense() {
        let a = csc_from_triplets(2, 3, &[(0, 0, 1.0), (1, 2, 2.0), (0, 2, -1.0), (0, 0, 1.0)]);
        let x = DVector::from_vec(vec![1.0, 5.0, 3.0]);
        let y = spmv(&a, &x);
        assert_eq!(y, to_dense(&a) * &x);
        assert_eq!(y[0], -1.0);
    }
}
