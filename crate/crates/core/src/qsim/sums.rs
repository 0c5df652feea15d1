//! Sums for the volume fit from inner products of prepared states.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::config::{FitVariant, SampleMode};
use crate::error::{Error, Result};

/// How Hadamard-test outcomes are produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sampling {
    Exact,
    /// Finite shots with standard deviation at most `eps` on the inner product.
    Shots { eps: f64, seed: u64 },
}

impl Sampling {
    pub fn from_mode(mode: SampleMode, eps: f64, seed: u64) -> Self {
        match mode {
            SampleMode::Exact => Sampling::Exact,
            SampleMode::Shot => Sampling::Shots { eps, seed },
        }
    }
}

/// Estimates <a|b> for the normalized states of two real vectors. In shot
/// mode the ancilla's zero outcome has probability (1 + s) / 2 and
/// ceil(1 / eps^2) shots are drawn.
pub fn hadamard_test(a: &DVector<f64>, b: &DVector<f64>, rng: Option<&mut ChaCha8Rng>, eps: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Parameter("Hadamard test on vectors of different length".into()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("Hadamard test on a zero vector".into()));
    }
    let s = (a.dot(b) / (na * nb)).clamp(-1.0, 1.0);
    let Some(rng) = rng else {
        return Ok(s);
    };
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("shot noise level must lie in (0, 1), got {eps}")));
    }
    let shots = (1.0 / (eps * eps)).ceil() as u64;
    let p0 = 0.5 * (1.0 + s);
    let k = Binomial::new(shots, p0)
        .map_err(|e| Error::Numerical(format!("binomial sampler: {e}")))?
        .sample(rng);
    Ok(2.0 * k as f64 / shots as f64 - 1.0)
}

/// The four sums both fits need, plus the inner products they came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitSums {
    pub m: usize,
    pub sum_vol: f64,
    pub sum_r2: f64,
    pub sum_r2_vol: f64,
    pub sum_r4: f64,
    /// <u|B>, <u|R>, <R|B> for the uniform state u, volumes B and squared radii R.
    pub inner_products: [f64; 3],
}

/// Sum_j Vol_nor,j and sum_j r_j^2 (and the cross terms the OLS fit needs)
/// from Hadamard tests, rescaled by the vector norms and sqrt(M).
pub fn qsim_curvature_sums(vol_nor: &[f64], radii: &[f64], sampling: Sampling) -> Result<FitSums> {
    let m = vol_nor.len();
    if m == 0 || radii.len() != m {
        return Err(Error::Input("volumes and radii must be non-empty and equally long".into()));
    }
    let b = DVector::from_column_slice(vol_nor);
    let r2 = DVector::from_iterator(m, radii.iter().map(|r| r * r));
    let u = DVector::from_element(m, 1.0);
    let mut rng = match sampling {
        Sampling::Exact => None,
        Sampling::Shots { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let eps = match sampling {
        Sampling::Exact => 0.0,
        Sampling::Shots { eps, .. } => eps,
    };
    let ub = hadamard_test(&u, &b, rng.as_mut(), eps)?;
    let ur = hadamard_test(&u, &r2, rng.as_mut(), eps)?;
    let rb = hadamard_test(&r2, &b, rng.as_mut(), eps)?;
    let sqrt_m = (m as f64).sqrt();
    let (nb, nr) = (b.norm(), r2.norm());
    Ok(FitSums {
        m,
        sum_vol: ub * nb * sqrt_m,
        sum_r2: ur * nr * sqrt_m,
        sum_r2_vol: rb * nr * nb,
        sum_r4: nr * nr,
        inner_products: [ub, ur, rb],
    })
}

/// The fitted A from the sums, for either variant.
pub fn fit_from_sums(s: &FitSums, variant: FitVariant) -> Result<f64> {
    match variant {
        FitVariant::Ols => {
            if !(s.sum_r4 > 0.0) {
                return Err(Error::Degenerate("all fit radii are zero".into()));
            }
            Ok((s.sum_r2_vol - s.sum_r2) / s.sum_r4)
        }
        FitVariant::PaperFormula => {
            let m = s.m as f64;
            Ok((s.sum_vol / m) / (1.0 + s.sum_r2 / m))
        }
    }
}
