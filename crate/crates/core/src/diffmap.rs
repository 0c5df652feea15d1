//! Diffusion-map embeddings, classical and through the simulated pipeline.
//!
//! The kernel is density-normalized, K~ = K_ij / (q_i q_j) with q the row
//! sums of K, then row-normalized to the Markov matrix P. Coordinates are
//! lambda_k^t psi_k(x_i) where psi_k = v_k / sqrt(pi) for the eigenvectors v_k
//! of the symmetric conjugate of P and its stationary distribution pi.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::QsimConfig;
use crate::diffusion::KernelMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::pointcloud::{pairwise_distances, PointCloud};
use crate::qsim::encoding::{
    be_adjoint, be_negative_power, be_positive_power, be_product, be_weighted_lcu, BlockEncoding,
};
use crate::qsim::kernel::{distance_column, gaussian_column, kernel_approx};
use crate::qsim::power::{PowerIteration, PowerOptions};

/// Regularization I / kappa added to P^T P before the fractional power.
pub const GRAM_REGULARIZATION: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct NormalizedKernel {
    pub k_tilde: DMatrix<f64>,
    pub q: DVector<f64>,
}

/// Which operator's spectrum the embedding uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSpectrum {
    /// Eigenpairs of P.
    #[default]
    Markov,
    /// Singular pairs of P through P^T P: coordinates sigma_k^t v_k with v_k
    /// the unit right singular vectors. This is what the simulated pipeline encodes.
    MarkovGram,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffmapOptions {
    /// Keep the top (trivial) mode.
    pub include_trivial: bool,
    pub spectrum: EmbeddingSpectrum,
}

impl Default for DiffmapOptions {
    fn default() -> Self {
        Self {
            include_trivial: false,
            spectrum: EmbeddingSpectrum::Markov,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiffusionEmbedding {
    /// N x n, row i is the embedding of point i.
    #[serde(skip)]
    pub coords: DMatrix<f64>,
    pub t: f64,
    pub n: usize,
    /// Eigenvalues of P (or singular values for the Gram spectrum) behind each column.
    pub eigenvalues_used: Vec<f64>,
    pub include_trivial: bool,
    pub spectrum: EmbeddingSpectrum,
}

pub fn normalize_kernel(k: &KernelMatrix) -> Result<NormalizedKernel> {
    normalize_matrix(k.matrix())
}

fn normalize_matrix(k: &DMatrix<f64>) -> Result<NormalizedKernel> {
    let q = DVector::from_iterator(k.nrows(), k.row_iter().map(|r| r.sum()));
    if q.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Degenerate("kernel has a non-positive row sum".into()));
    }
    let n = k.nrows();
    let mut k_tilde = DMatrix::from_fn(n, n, |i, j| k[(i, j)] / (q[i] * q[j]));
    symmetrize(&mut k_tilde);
    Ok(NormalizedKernel { k_tilde, q })
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// P = D^-1 K~ with D the row sums of K~.
pub fn markov_matrix(nk: &NormalizedKernel) -> (DMatrix<f64>, DVector<f64>) {
    let d = DVector::from_iterator(nk.k_tilde.nrows(), nk.k_tilde.row_iter().map(|r| r.sum()));
    let mut p = nk.k_tilde.clone();
    for (i, mut row) in p.row_iter_mut().enumerate() {
        row /= d[i];
    }
    (p, d)
}

fn mode_count(n_points: usize, n: usize, include_trivial: bool) -> Result<usize> {
    let available = if include_trivial { n_points } else { n_points - 1 };
    if n == 0 || n > available {
        return Err(Error::Parameter(format!(
            "embedding dimension must satisfy 1 <= n <= {available} for {n_points} points, got {n}"
        )));
    }
    Ok(n + usize::from(!include_trivial))
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("t must be > 0, got {t}")));
    }
    Ok(())
}

fn lambda_pow(l: f64, t: f64) -> Result<f64> {
    if l >= 0.0 {
        Ok(l.powf(t))
    } else if t.fract() == 0.0 {
        Ok(l.powi(t as i32))
    } else {
        Err(Error::Domain(format!(
            "eigenvalue {l:.3e} is negative; non-integer t = {t} is undefined"
        )))
    }
}

pub fn diffusion_map(cloud: &PointCloud, sigma2: f64, t: f64, n: usize) -> Result<DiffusionEmbedding> {
    diffusion_map_with(cloud, sigma2, t, n, DiffmapOptions::default())
}

pub fn diffusion_map_with(
    cloud: &PointCloud,
    sigma2: f64,
    t: f64,
    n: usize,
    opts: DiffmapOptions,
) -> Result<DiffusionEmbedding> {
    check_t(t)?;
    let np = cloud.n_points();
    mode_count(np, n, opts.include_trivial)?;
    let skip = usize::from(!opts.include_trivial);
    let kernel = crate::diffusion::build_kernel(&pairwise_distances(cloud), sigma2)?;
    let nk = normalize_kernel(&kernel)?;
    let (p, d) = markov_matrix(&nk);

    let mut coords = DMatrix::zeros(np, n);
    let mut used = Vec::with_capacity(n);
    match opts.spectrum {
        EmbeddingSpectrum::Markov => {
            let inv_sqrt = d.map(|x| 1.0 / x.sqrt());
            let mut s = DMatrix::from_fn(np, np, |i, j| nk.k_tilde[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
            symmetrize(&mut s);
            let e = linalg::sym_eigen(&s)?;
            let total: f64 = d.sum();
            for c in 0..n {
                let k = c + skip;
                let lambda = e.values[k];
                // psi = v / sqrt(pi) with pi = d / sum(d)
                let mut psi = DVector::from_fn(np, |i, _| e.vectors[(i, k)] * (total / d[i]).sqrt());
                linalg::orient(&mut psi);
                coords.set_column(c, &(psi * lambda_pow(lambda, t)?));
                used.push(lambda);
            }
        }
        EmbeddingSpectrum::MarkovGram => {
            let e = linalg::sym_eigen(&(p.transpose() * &p))?;
            for c in 0..n {
                let k = c + skip;
                let sigma = e.values[k].max(0.0).sqrt();
                let mut v = e.vectors.column(k).into_owned();
                linalg::orient(&mut v);
                coords.set_column(c, &(v * sigma.powf(t)));
                used.push(sigma);
            }
        }
    }
    Ok(DiffusionEmbedding {
        coords,
        t,
        n,
        eigenvalues_used: used,
        include_trivial: opts.include_trivial,
        spectrum: opts.spectrum,
    })
}

/// Row sums of an encoded matrix as a diagonal encoding at subnormalization max.
fn row_sum_diagonal(u: &BlockEncoding) -> Result<(BlockEncoding, f64)> {
    let a = u.encoded();
    let d = DVector::from_iterator(a.nrows(), a.row_iter().map(|r| r.sum()));
    let (lo, hi) = (d.min(), d.max());
    if !(lo > 0.0) {
        return Err(Error::Degenerate("non-positive row sum in an encoded kernel".into()));
    }
    let mut cost = u.cost().clone();
    cost.tick("diagonal_encoding", 1);
    Ok((BlockEncoding::new(DMatrix::from_diagonal(&d), hi, u.err(), cost)?, hi / lo))
}

/// Encodes A^m (A/alpha)^f / 2 for c = m + f, f in (0, 1), or A^m when f = 0;
/// returns the encoding and the factor g with eigenvalue mu = g x^c of A/alpha.
fn power_encoding(u: &BlockEncoding, c: f64, kappa: f64) -> Result<(BlockEncoding, f64)> {
    let m = c.floor() as usize;
    let f = c - m as f64;
    let alpha = u.subnorm();
    let mut acc: Option<BlockEncoding> = None;
    for _ in 0..m {
        acc = Some(match acc {
            None => u.clone(),
            Some(a) => be_product(&a, u)?,
        });
    }
    let mut g = alpha.powi(m as i32);
    if f > 0.0 {
        let frac = be_positive_power(u, f, kappa)?;
        acc = Some(match acc {
            None => frac,
            Some(a) => be_product(&a, &frac)?,
        });
        g *= 0.5;
    }
    Ok((acc.expect("c > 0"), g))
}

/// Replays the simulated pipeline: Gaussian column, row-sum diagonal,
/// inverse densities, K~, inverse degrees, P, P^T P, regularized power t/2,
/// then the power method. Agrees with [`EmbeddingSpectrum::MarkovGram`].
pub fn qsim_diffusion_map(
    cloud: &PointCloud,
    sigma2: f64,
    t: f64,
    n: usize,
    include_trivial: bool,
    config: &QsimConfig,
    seed: u64,
) -> Result<DiffusionEmbedding> {
    check_t(t)?;
    let np = cloud.n_points();
    let k_modes = mode_count(np, n, include_trivial)?;
    let skip = usize::from(!include_trivial);
    let d = pairwise_distances(cloud);
    let approx = kernel_approx(d.matrix().amax(), sigma2, config)?;
    let g = gaussian_column(&distance_column(&d)?, sigma2, &approx, config.amplification_tol)?;
    let k_mat = DMatrix::from_fn(np, np, |i, j| g.vector()[i * np + j]);
    let mut k_cost = g.cost().clone();
    k_cost.tick("column_to_block", 1);
    let k_enc = BlockEncoding::new(k_mat, g.subnorm(), g.err(), k_cost)?;

    let (q_diag, kappa_q) = row_sum_diagonal(&k_enc)?;
    let q_inv = be_negative_power(&q_diag, 1.0, kappa_q)?;
    let kt = be_product(&q_inv, &be_product(&k_enc, &q_inv)?)?;
    let (d_diag, kappa_d) = row_sum_diagonal(&kt)?;
    let dt_min = d_diag.encoded().diagonal().min();
    let d_inv = be_negative_power(&d_diag, 1.0, kappa_d)?;
    let p_enc = be_product(&d_inv, &kt)?;
    let s = 0.5 * dt_min;

    let gram = be_product(&be_adjoint(&p_enc)?, &p_enc)?;
    let shift = gram.subnorm() / GRAM_REGULARIZATION;
    let id = BlockEncoding::unitary(DMatrix::identity(np, np))?;
    let reg = be_weighted_lcu(&[(1.0, &gram), (shift, &id)])?;
    let c = 0.5 * t;
    let (w, gfac) = power_encoding(&reg, c, GRAM_REGULARIZATION + 1.0)?;

    let opts = PowerOptions {
        tol: config.power_tol,
        max_iters: config.max_iters,
        seed,
        require_gap: true,
    };
    let mut power = PowerIteration::new(w.encoded(), &opts)?;
    let mut coords = DMatrix::zeros(np, n);
    let mut used = Vec::with_capacity(n);
    for k in 0..k_modes {
        let pair = power.next_pair()?;
        if k < skip {
            continue;
        }
        let y = (pair.value / gfac).max(0.0).powf(1.0 / c);
        let sigma2_k = ((y * reg.subnorm() - shift) / (s * s)).max(0.0);
        let sigma = sigma2_k.sqrt();
        let mut v = pair.vector.clone();
        linalg::orient(&mut v);
        coords.set_column(k - skip, &(v * sigma.powf(t)));
        used.push(sigma);
    }
    Ok(DiffusionEmbedding {
        coords,
        t,
        n,
        eigenvalues_used: used,
        include_trivial,
        spectrum: EmbeddingSpectrum::MarkovGram,
    })
}

/// Flips each column of `a` to best match the same column of `reference`.
pub fn align_signs(a: &mut DMatrix<f64>, reference: &DMatrix<f64>) {
    for c in 0..a.ncols().min(reference.ncols()) {
        if a.column(c).dot(&reference.column(c)) < 0.0 {
            a.column_mut(c).neg_mut();
        }
    }
}

/// Max entrywise difference after sign alignment, relative to max |reference|.
pub fn aligned_deviation(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let mut x = a.clone();
    align_signs(&mut x, reference);
    (x - reference).amax() / reference.amax()
}

/// max_i |r_i - mean r| / mean r for the row norms r_i.
pub fn radial_deviation(coords: &DMatrix<f64>) -> f64 {
    let r: Vec<f64> = coords.row_iter().map(|row| row.norm()).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    r.iter().map(|x| (x - mean).abs() / mean).fold(0.0, f64::max)
}
