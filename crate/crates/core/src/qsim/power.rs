//! Power iteration with deflation, the stand-in for quantum PCA.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::encoding::{BlockEncoding, CostCounter};
use crate::error::{Error, Result};
use crate::linalg;

/// Relative eigenvalue gap below which eigenvectors are not resolvable.
pub const MIN_GAP: f64 = 1e-12;

/// Start vectors overlapping the result less than this are retried.
pub const MIN_OVERLAP: f64 = 1e-10;

const MAX_RESTARTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerOptions {
    /// Stop when ||A x - lambda x|| <= tol * ||A||.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Fail with a gap error when consecutive eigenvalues coincide. Callers
    /// that only consume eigenvalues can switch this off.
    pub require_gap: bool,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iters: 1_000_000,
            seed: 0,
            require_gap: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// lambda_r - lambda_{r+1}, measured after convergence.
    pub gap: f64,
    /// ceil(ln(N / tol) lambda_r / gap), the iteration count the gap predicts.
    pub iteration_bound: f64,
    pub restarts: usize,
}

#[derive(Clone, Debug)]
pub struct PowerResult {
    pub pairs: Vec<Eigenpair>,
    pub cost: CostCounter,
}

impl PowerResult {
    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.value).collect()
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm: f64 = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

struct Run {
    value: f64,
    vector: DVector<f64>,
    iterations: usize,
    residual: f64,
}

fn iterate(a: &DMatrix<f64>, x0: &DVector<f64>, scale: f64, opts: &PowerOptions) -> Result<Run> {
    let mut x = x0.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iters {
        let y = a * &x;
        let ny = y.norm();
        if ny <= 1e-15 * scale {
            // the remaining spectrum is numerically zero
            return Ok(Run {
                value: 0.0,
                vector: x,
                iterations: it,
                residual: ny,
            });
        }
        let value = x.dot(&y);
        residual = (&y - &x * value).norm();
        if residual <= opts.tol * scale {
            return Ok(Run {
                value,
                vector: x,
                iterations: it,
                residual,
            });
        }
        x = y / ny;
    }
    Err(Error::Convergence {
        iterations: opts.max_iters,
        residual,
    })
}

/// Top `k` eigenpairs of a symmetric PSD encoded matrix by power iteration,
/// deflating A <- A - lambda v v^T after each pair.
pub fn power_method_pca(u: &BlockEncoding, k: usize, opts: &PowerOptions) -> Result<PowerResult> {
    power_method_matrix(u.encoded(), k, opts).map(|mut r| {
        r.cost = u.cost().merged(&r.cost);
        r
    })
}

pub fn power_method_matrix(a: &DMatrix<f64>, k: usize, opts: &PowerOptions) -> Result<PowerResult> {
    if k == 0 || k > a.nrows() {
        return Err(Error::Parameter(format!(
            "power method needs 1 <= k <= {}, got k = {k}",
            a.nrows()
        )));
    }
    let mut it = PowerIteration::new(a, opts)?;
    let mut pairs = Vec::with_capacity(k);
    for _ in 0..k {
        pairs.push(it.next_pair()?);
    }
    Ok(PowerResult {
        pairs,
        cost: it.cost,
    })
}

/// Eigenpairs one deflation round at a time.
pub struct PowerIteration {
    deflated: DMatrix<f64>,
    scale: f64,
    opts: PowerOptions,
    rng: ChaCha8Rng,
    round: usize,
    cost: CostCounter,
}

impl PowerIteration {
    pub fn new(a: &DMatrix<f64>, opts: &PowerOptions) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Parameter("power method needs a non-empty square matrix".into()));
        }
        if !(opts.tol > 0.0) || opts.max_iters == 0 {
            return Err(Error::Parameter("power method needs tol > 0 and max_iters > 0".into()));
        }
        let scale = linalg::operator_norm(a);
        if scale == 0.0 {
            return Err(Error::Degenerate("power method on the zero matrix".into()));
        }
        Ok(Self {
            deflated: a.clone(),
            scale,
            opts: *opts,
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            round: 0,
            cost: CostCounter::new(),
        })
    }

    pub fn cost(&self) -> &CostCounter {
        &self.cost
    }

    pub fn next_pair(&mut self) -> Result<Eigenpair> {
        let n = self.deflated.nrows();
        if self.round >= n {
            return Err(Error::Parameter(format!("all {n} eigenpairs already extracted")));
        }
        let mut restarts = 0;
        let run = loop {
            let x0 = random_unit(&mut self.rng, n);
            let run = iterate(&self.deflated, &x0, self.scale, &self.opts)?;
            self.cost.tick("power_method_iter", run.iterations as u64);
            if x0.dot(&run.vector).abs() >= MIN_OVERLAP || restarts >= MAX_RESTARTS {
                break run;
            }
            restarts += 1;
        };
        self.cost.tick("power_method_round", 1);
        let mut v = run.vector;
        v /= v.norm();
        linalg::orient(&mut v);
        self.deflated -= &v * v.transpose() * run.value;

        let next = linalg::sym_eigen(&self.deflated)?.values[0];
        let gap = run.value - next;
        if self.opts.require_gap && gap < MIN_GAP * self.scale {
            return Err(Error::Gap {
                index: self.round,
                gap,
            });
        }
        let iteration_bound = if gap > 0.0 {
            ((n as f64 / self.opts.tol).ln() * run.value.abs().max(gap) / gap).ceil()
        } else {
            f64::INFINITY
        };
        self.round += 1;
        Ok(Eigenpair {
            value: run.value,
            vector: v,
            iterations: run.iterations,
            residual: run.residual,
            gap,
            iteration_bound,
            restarts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn diagonal_top_pair() {
        let r = power_method_matrix(&diag(&[0.9, 0.3]), 1, &PowerOptions::default()).unwrap();
        assert!((r.pairs[0].value - 0.9).abs() < 1e-12);
        assert!((r.pairs[0].vector[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deflation_finds_second_pair() {
        let r = power_method_matrix(&diag(&[0.9, 0.3]), 2, &PowerOptions::default()).unwrap();
        assert!((r.pairs[1].value - 0.3).abs() < 1e-12);
        assert!((r.pairs[1].vector[1].abs() - 1.0).abs() < 1e-12);
        assert_eq!(r.cost.get("power_method_round"), 2);
    }

    #[test]
    fn random_spd_matches_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = DMatrix::from_fn(16, 16, |_, _| rng.random_range(-1.0..1.0));
        let a = &b * b.transpose() / 16.0;
        let e = linalg::sym_eigen(&a).unwrap();
        let r = power_method_matrix(&a, 4, &PowerOptions::default()).unwrap();
        for (k, p) in r.pairs.iter().enumerate() {
            assert!((p.value - e.values[k]).abs() < 1e-8);
            assert!(p.vector.dot(&e.vectors.column(k)).abs() >= 1.0 - 1e-8);
        }
    }

    #[test]
    fn equal_eigenvalues_raise_gap_error() {
        let r = power_method_matrix(&diag(&[0.5, 0.5, 0.1]), 1, &PowerOptions::default());
        assert!(matches!(r, Err(Error::Gap { index: 0, .. })));
        let values_only = PowerOptions {
            require_gap: false,
            ..PowerOptions::default()
        };
        let r = power_method_matrix(&diag(&[0.5, 0.5, 0.1]), 2, &values_only).unwrap();
        assert!((r.pairs[1].value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let opts = PowerOptions {
            max_iters: 3,
            ..PowerOptions::default()
        };
        let r = power_method_matrix(&diag(&[1.0, 0.999, 0.5]), 1, &opts);
        assert!(matches!(r, Err(Error::Convergence { iterations: 3, .. })));
    }

    #[test]
    fn zero_tail_is_handled() {
        let r = power_method_matrix(&diag(&[2.0, 0.0, 0.0]), 2, &PowerOptions {
            require_gap: false,
            ..PowerOptions::default()
        })
        .unwrap();
        assert_eq!(r.pairs[1].value, 0.0);
    }
}
