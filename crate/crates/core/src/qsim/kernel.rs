//! Block encoding of the kernel Gram matrix K^T K from the distance column.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::chebyshev::{cheb_gaussian_scaled, gaussian_for_width, ChebyshevApprox};
use super::encoding::{
    be_amplify_max, col_amplify_max, col_lcu, entrywise_product, partial_trace_second,
    state_preparation, BlockEncoding, ColumnEncoding,
};
use crate::config::QsimConfig;
use crate::error::{Error, Result};
use crate::pointcloud::DistanceMatrix;

/// One step of a subnormalization/error chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainLink {
    pub label: String,
    pub subnorm: f64,
    pub err: f64,
}

impl ChainLink {
    pub fn of_block(label: &str, u: &BlockEncoding) -> Self {
        Self {
            label: label.to_string(),
            subnorm: u.subnorm(),
            err: u.err(),
        }
    }

    pub fn of_column(label: &str, c: &ColumnEncoding) -> Self {
        Self {
            label: label.to_string(),
            subnorm: c.subnorm(),
            err: c.err(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct KernelGram {
    pub encoding: BlockEncoding,
    pub approx: ChebyshevApprox,
    /// Distances are fed to the polynomial as d / (width sigma).
    pub width: f64,
    pub sigma2: f64,
    pub chain: Vec<ChainLink>,
}

/// The distance matrix as a column over the index pair (i, j), i major.
pub fn distance_column(d: &DistanceMatrix) -> Result<ColumnEncoding> {
    let n = d.n();
    let m = d.matrix();
    state_preparation(&DVector::from_fn(n * n, |k, _| m[(k / n, k % n)]))
}

/// Column of approximate kernel values P(d / (a sigma)) ~ exp(-d^2 / sigma^2),
/// built from the distance column by the Chebyshev recurrence
/// T_{k+1}(y) = 2 y T_k(y) - T_{k-1}(y) on entrywise products.
pub fn gaussian_column(
    dcol: &ColumnEncoding,
    sigma2: f64,
    approx: &ChebyshevApprox,
    amp_tol: f64,
) -> Result<ColumnEncoding> {
    let sigma = sigma2.sqrt();
    let y = dcol.rescaled(1.0 / (approx.width * sigma))?;
    if y.vector().amax() > 1.0 + 1e-12 {
        return Err(Error::Contract("rescaled distances leave [-1, 1]".into()));
    }
    let len = dcol.len();
    let ones = state_preparation(&DVector::from_element(len, 1.0))?;
    let y = col_amplify_max(&y, amp_tol)?;
    let coeffs = approx.coeffs();
    let mut basis: Vec<ColumnEncoding> = vec![ones.clone()];
    if coeffs.len() > 1 {
        basis.push(y.clone());
    }
    while basis.len() < coeffs.len() {
        let k = basis.len();
        let prod = entrywise_product(&y, &basis[k - 1])?;
        let next = col_lcu(&[(2.0, &prod), (-1.0, &basis[k - 2])])?;
        basis.push(col_amplify_max(&next, amp_tol)?);
    }
    let terms: Vec<(f64, &ColumnEncoding)> = coeffs.iter().copied().zip(basis.iter()).collect();
    let g = col_lcu(&terms)?;
    // each entry is off by at most the total polynomial error, so the column by sqrt(len) sup_error
    let extra = (len as f64).sqrt() * approx.total_error();
    ColumnEncoding::new(g.vector().clone(), g.subnorm(), g.err() + extra, g.cost().clone())
        .map(|c| c.with_tick("chebyshev_terms", coeffs.len() as u64))
}

/// The Chebyshev approximation used for distances of at most `max_d`.
pub fn kernel_approx(max_d: f64, sigma2: f64, config: &QsimConfig) -> Result<ChebyshevApprox> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Parameter(format!("sigma2 must be > 0, got {sigma2}")));
    }
    let width = (max_d / sigma2.sqrt()).max(1.0);
    match config.degree {
        Some(p) => Ok(cheb_gaussian_scaled(p, width)),
        None => gaussian_for_width(width, config.poly_eps),
    }
}

/// Encodes K^T K (= K^2 for the symmetric kernel) by tracing the second
/// index out of the Gaussian column.
pub fn build_kernel_gram_encoding(
    d: &DistanceMatrix,
    sigma2: f64,
    config: &QsimConfig,
) -> Result<KernelGram> {
    let n = d.n();
    let approx = kernel_approx(d.matrix().amax(), sigma2, config)?;
    let dcol = distance_column(d)?;
    let g = gaussian_column(&dcol, sigma2, &approx, config.amplification_tol)?;
    let rho = partial_trace_second(&g, n, n)?;
    let gram = be_amplify_max(&rho, f64::MIN_POSITIVE, config.amplification_tol)?;
    let chain = vec![
        ChainLink::of_column("distance_column", &dcol),
        ChainLink::of_column("gaussian_column", &g),
        ChainLink::of_block("density_matrix", &rho),
        ChainLink::of_block("amplified", &gram),
    ];
    Ok(KernelGram {
        encoding: gram,
        width: approx.width,
        approx,
        sigma2,
        chain,
    })
}

/// K^T K from a kernel matrix, for comparison.
pub fn kernel_gram_oracle(k: &DMatrix<f64>) -> DMatrix<f64> {
    k.transpose() * k
}
