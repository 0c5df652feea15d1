//! Dense symmetric eigensolver and norms.
//!
//! Matrices are `nalgebra` values throughout the crate; the eigendecomposition
//! itself is delegated to `faer`, which is markedly faster on the N ~ 10^3
//! operators the classical pipeline produces.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues non-increasing, each
/// eigenvector unit-norm with its largest-magnitude component positive.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Parameter(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite entry passed to eigensolver".into()));
    }
    // symmetrize so roundoff in the caller cannot leak asymmetry into the solver
    let m = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));

    let values = DVector::from_iterator(n, order.iter().map(|&k| s[k]));
    let mut vectors = DMatrix::<f64>::from_fn(n, n, |i, c| u[(i, order[c])]);
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        orient(&mut col);
    }
    Ok(SymEigen { values, vectors })
}

/// Flip `v` so that its largest-magnitude component is positive (first such
/// index wins on ties).
pub fn orient<S>(v: &mut nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::U1, S>)
where
    S: nalgebra::StorageMut<f64, nalgebra::Dyn, nalgebra::U1>,
{
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs * (1.0 + 1e-12) {
            best = i;
            best_abs = x.abs();
        }
    }
    if best_abs > 0.0 && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Spectral norm (largest singular value).
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    // the Gram matrix is symmetric PSD; its top eigenvalue is the squared norm
    let gram = if a.nrows() <= a.ncols() {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    match sym_eigen(&gram) {
        Ok(e) => e.values[0].max(0.0).sqrt(),
        Err(_) => a.norm(),
    }
}

/// Max over columns of ||A v - lambda v||, the eigen-residual of a decomposition.
pub fn max_residual(a: &DMatrix<f64>, values: &DVector<f64>, vectors: &DMatrix<f64>) -> f64 {
    let av = a * vectors;
    let mut worst: f64 = 0.0;
    for k in 0..values.len() {
        let r = av.column(k) - vectors.column(k) * values[k];
        worst = worst.max(r.norm());
    }
    worst
}

/// Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Apply a scalar function to the spectrum of a symmetric matrix.
pub fn spectral_map(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let e = sym_eigen(a)?;
    let mapped = DVector::from_iterator(e.values.len(), e.values.iter().map(|&x| f(x)));
    Ok(&e.vectors * DMatrix::from_diagonal(&mapped) * e.vectors.transpose())
}
