//! Block encodings as (matrix, subnormalization, error bound, cost) values and
//! the arithmetic lemmas that combine them.
//!
//! `encoded` is the matrix A itself; the unitary's top-left block is
//! A / `subnorm`. `err` bounds ||A - alpha * block|| in the units of A. Column
//! encodings play the same role for the first column of a state-preparation
//! unitary.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::chebyshev::ChebSeries;
use crate::error::{Error, Result};
use crate::linalg;

/// Allowed excess of ||A|| / alpha over one.
pub const NORM_SLACK: f64 = 1e-12;

/// Primitive-application tallies.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostCounter {
    counts: BTreeMap<String, u64>,
}

impl CostCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tick(&mut self, name: &str, n: u64) {
        let e = self.counts.entry(name.to_string()).or_insert(0);
        *e = e.saturating_add(n);
    }

    pub fn absorb(&mut self, other: &CostCounter) {
        for (k, v) in &other.counts {
            self.tick(k, *v);
        }
    }

    pub fn merged(&self, other: &CostCounter) -> Self {
        let mut c = self.clone();
        c.absorb(other);
        c
    }

    pub fn get(&self, name: &str) -> u64 {
        self.counts.get(name).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().fold(0u64, |a, b| a.saturating_add(*b))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Error bounds only grow along a chain. A composition whose propagated bound
/// is smaller than an input's (a small weight, a short factor) keeps the input's.
fn chained<'a>(bound: f64, inputs: impl IntoIterator<Item = &'a BlockEncoding>) -> f64 {
    inputs.into_iter().map(|u| u.err).fold(bound, f64::max)
}

fn is_diagonal(a: &DMatrix<f64>) -> bool {
    a.is_square()
        && (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == 0.0))
}

fn norm_of(a: &DMatrix<f64>) -> f64 {
    if is_diagonal(a) {
        a.diagonal().amax()
    } else {
        linalg::operator_norm(a)
    }
}

fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    a.is_square()
        && (0..a.nrows()).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol * scale))
}

#[derive(Clone, Debug)]
pub struct BlockEncoding {
    encoded: DMatrix<f64>,
    subnorm: f64,
    err: f64,
    cost: CostCounter,
    norm: f64,
}

impl BlockEncoding {
    /// Validates that A / alpha fits in a unitary block.
    pub fn new(encoded: DMatrix<f64>, subnorm: f64, err: f64, cost: CostCounter) -> Result<Self> {
        if encoded.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite entry in encoded matrix".into()));
        }
        if !(subnorm > 0.0 && subnorm.is_finite()) {
            return Err(Error::Degenerate(format!(
                "subnormalization must be positive and finite, got {subnorm:e}"
            )));
        }
        if !(err >= 0.0) {
            return Err(Error::Contract(format!("error bound must be >= 0, got {err:e}")));
        }
        let norm = norm_of(&encoded);
        if norm > subnorm * (1.0 + NORM_SLACK) {
            return Err(Error::Contract(format!(
                "||A|| / alpha = {:.15} exceeds 1",
                norm / subnorm
            )));
        }
        Ok(Self {
            encoded,
            subnorm,
            err,
            cost,
            norm,
        })
    }

    /// Exact encoding of an orthogonal matrix (the matrix is its own unitary).
    pub fn unitary(u: DMatrix<f64>) -> Result<Self> {
        let n = u.nrows();
        let dev = (&u * u.transpose() - DMatrix::<f64>::identity(n, n)).amax();
        if !u.is_square() || dev > 1e-12 {
            return Err(Error::Contract(format!("matrix is not orthogonal (deviation {dev:e})")));
        }
        Self::new(u, 1.0, 0.0, CostCounter::new())
    }

    pub fn encoded(&self) -> &DMatrix<f64> {
        &self.encoded
    }

    pub fn subnorm(&self) -> f64 {
        self.subnorm
    }

    pub fn err(&self) -> f64 {
        self.err
    }

    pub fn cost(&self) -> &CostCounter {
        &self.cost
    }

    pub fn dim(&self) -> usize {
        self.encoded.nrows()
    }

    /// Spectral norm of the encoded matrix.
    pub fn op_norm(&self) -> f64 {
        self.norm
    }

    /// The top-left block of the unitary, A / alpha.
    pub fn block(&self) -> DMatrix<f64> {
        &self.encoded / self.subnorm
    }

    pub fn with_tick(mut self, name: &str, n: u64) -> Self {
        self.cost.tick(name, n);
        self
    }

    /// Overwrite the encoded matrix, keeping the bookkeeping. Only the fault
    /// injection hook of the verifier uses this.
    pub fn perturbed(&self, f: impl Fn(&mut DMatrix<f64>)) -> Result<Self> {
        let mut a = self.encoded.clone();
        f(&mut a);
        let alpha = self.subnorm.max(norm_of(&a));
        Self::new(a, alpha, self.err, self.cost.clone())
    }
}

/// A / ||A||_F.
pub fn encode_known_matrix(a: &DMatrix<f64>) -> Result<BlockEncoding> {
    let f = a.norm();
    if f == 0.0 {
        return Err(Error::Degenerate("cannot encode the zero matrix".into()));
    }
    let mut cost = CostCounter::new();
    cost.tick("known_matrix", 1);
    BlockEncoding::new(a.clone(), f, 0.0, cost)
}

pub fn be_product(u1: &BlockEncoding, u2: &BlockEncoding) -> Result<BlockEncoding> {
    if u1.encoded.ncols() != u2.encoded.nrows() {
        return Err(Error::Parameter(format!(
            "product of {}x{} and {}x{} encodings",
            u1.encoded.nrows(),
            u1.encoded.ncols(),
            u2.encoded.nrows(),
            u2.encoded.ncols()
        )));
    }
    let mut cost = u1.cost.merged(&u2.cost);
    cost.tick("product", 1);
    BlockEncoding::new(
        &u1.encoded * &u2.encoded,
        u1.subnorm * u2.subnorm,
        chained(u1.subnorm * u2.err + u2.subnorm * u1.err, [u1, u2]),
        cost,
    )
}

/// Uniform signed combination: encodes sum_i s_i A_i / m at the common
/// subnormalization max_i alpha_i.
pub fn be_lcu(terms: &[BlockEncoding], signs: &[f64]) -> Result<BlockEncoding> {
    if terms.is_empty() || terms.len() != signs.len() {
        return Err(Error::Parameter("lcu needs one sign per term".into()));
    }
    if signs.iter().any(|s| s.abs() != 1.0) {
        return Err(Error::Parameter("lcu signs must be +1 or -1".into()));
    }
    let dim = terms[0].dim();
    if terms.iter().any(|t| t.dim() != dim || !t.encoded.is_square()) {
        return Err(Error::Parameter("lcu terms differ in shape".into()));
    }
    let m = terms.len() as f64;
    let alpha = terms.iter().map(|t| t.subnorm).fold(0.0, f64::max);
    let mut sum = DMatrix::<f64>::zeros(dim, dim);
    let mut cost = CostCounter::new();
    for (t, s) in terms.iter().zip(signs) {
        sum += &t.encoded * *s;
        cost.absorb(&t.cost);
    }
    cost.tick("lcu", 1);
    let err = chained(terms.iter().map(|t| t.err).sum::<f64>() / m, terms);
    BlockEncoding::new(sum / m, alpha, err, cost)
}

/// Weighted combination sum_k c_k A_k, subnormalization sum_k |c_k| alpha_k.
pub fn be_weighted_lcu(terms: &[(f64, &BlockEncoding)]) -> Result<BlockEncoding> {
    let (first, rest) = terms
        .split_first()
        .ok_or_else(|| Error::Parameter("lcu needs at least one term".into()))?;
    let shape = first.1.encoded.shape();
    let mut sum = &first.1.encoded * first.0;
    let mut alpha = first.0.abs() * first.1.subnorm;
    let mut err = first.0.abs() * first.1.err;
    let mut cost = first.1.cost.clone();
    for (c, t) in rest {
        if t.encoded.shape() != shape {
            return Err(Error::Parameter("lcu terms differ in shape".into()));
        }
        sum += &t.encoded * *c;
        alpha += c.abs() * t.subnorm;
        err += c.abs() * t.err;
        cost.absorb(&t.cost);
    }
    cost.tick("lcu", 1);
    let err = chained(err, terms.iter().map(|t| t.1));
    BlockEncoding::new(sum, alpha, err, cost)
}

pub fn be_tensor(u1: &BlockEncoding, u2: &BlockEncoding) -> Result<BlockEncoding> {
    let mut cost = u1.cost.merged(&u2.cost);
    cost.tick("tensor", 1);
    BlockEncoding::new(
        linalg::kron(&u1.encoded, &u2.encoded),
        u1.subnorm * u2.subnorm,
        chained(u1.subnorm * u2.err + u2.subnorm * u1.err, [u1, u2]),
        cost,
    )
}

/// Encodes A / p at the same subnormalization.
pub fn be_scale_down(u: &BlockEncoding, p: f64) -> Result<BlockEncoding> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("scale-down factor must exceed 1, got {p}")));
    }
    let mut cost = u.cost.clone();
    cost.tick("scale", 1);
    BlockEncoding::new(&u.encoded / p, u.subnorm, u.err, cost)
}

/// Amplitude amplification of the block by `gamma`: the subnormalization
/// shrinks by `gamma`, which needs gamma ||A|| / alpha <= 1/2.
pub fn be_amplify(u: &BlockEncoding, gamma: f64, tol: f64) -> Result<BlockEncoding> {
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(Error::Parameter(format!("amplification factor must exceed 1, got {gamma}")));
    }
    let reach = gamma * u.norm / u.subnorm;
    if reach > 0.5 * (1.0 + NORM_SLACK) {
        return Err(Error::AmplificationRange(reach));
    }
    let alpha = u.subnorm / gamma;
    let mut cost = u.cost.clone();
    cost.tick("amplify", gamma.ceil().min(u64::MAX as f64) as u64);
    BlockEncoding::new(u.encoded.clone(), alpha, u.err + tol * alpha, cost)
}

fn map_symmetric(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    if is_diagonal(a) {
        let d = a.diagonal().map(f);
        Ok(DMatrix::from_diagonal(&d))
    } else {
        linalg::spectral_map(a, f)
    }
}

fn spectrum_bounds(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    if is_diagonal(a) {
        let d = a.diagonal();
        return Ok((d.min(), d.max()));
    }
    let e = linalg::sym_eigen(a)?;
    Ok((e.values[e.values.len() - 1], e.values[0]))
}

/// Encodes P(A / alpha) for a polynomial bounded by 1/2 on [-1, 1].
pub fn be_poly_transform(u: &BlockEncoding, poly: &ChebSeries) -> Result<BlockEncoding> {
    if !is_symmetric(&u.encoded, 1e-12) {
        return Err(Error::Contract("polynomial transform needs a symmetric matrix".into()));
    }
    let bound = poly.grid_max_abs(10_000);
    if bound > 0.5 * (1.0 + NORM_SLACK) {
        return Err(Error::Contract(format!(
            "polynomial reaches {bound:.6} on [-1, 1]; the transform needs |P| <= 1/2"
        )));
    }
    let alpha = u.subnorm;
    let m = map_symmetric(&u.encoded, |x| poly.eval(x / alpha))?;
    let degree = poly.degree() as f64;
    let err = 4.0 * degree * (u.err / alpha).sqrt() + poly.total_error();
    let mut cost = u.cost.clone();
    cost.tick("poly_transform", poly.degree() as u64);
    BlockEncoding::new(m, 1.0, err.max(u.err), cost)
}

fn check_power_args(u: &BlockEncoding, c: f64, kappa: f64, upper_c: bool) -> Result<()> {
    let c_ok = if upper_c { c > 0.0 && c <= 1.0 } else { c > 0.0 && c < 1.0 };
    if !c_ok || !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::Parameter(format!("invalid exponent {c} or condition bound {kappa}")));
    }
    if !is_symmetric(&u.encoded, 1e-12) {
        return Err(Error::Contract("matrix power needs a symmetric matrix".into()));
    }
    let (lo, hi) = spectrum_bounds(&u.encoded)?;
    let (lo, hi) = (lo / u.subnorm, hi / u.subnorm);
    if lo < (1.0 - 1e-9) / kappa || hi > 1.0 + NORM_SLACK {
        return Err(Error::Contract(format!(
            "spectrum of A/alpha spans [{lo:.3e}, {hi:.3e}], outside [1/kappa, 1] with kappa = {kappa:.3e}"
        )));
    }
    Ok(())
}

/// Encodes (A/alpha)^-c / (2 kappa^c) for I/kappa <= A/alpha <= I.
pub fn be_negative_power(u: &BlockEncoding, c: f64, kappa: f64) -> Result<BlockEncoding> {
    check_power_args(u, c, kappa, true)?;
    let alpha = u.subnorm;
    let scale = 0.5 / kappa.powf(c);
    let m = map_symmetric(&u.encoded, |x| (x / alpha).powf(-c) * scale)?;
    let mut cost = u.cost.clone();
    cost.tick("negative_power", (kappa * (1.0 + c)).ceil().min(u64::MAX as f64) as u64);
    // Lipschitz constant of x^-c / (2 kappa^c) on [1/kappa, 1] is c kappa / 2
    let err = u.err + 0.5 * c * kappa * u.err / alpha;
    BlockEncoding::new(m, 1.0, err, cost)
}

/// Encodes (A/alpha)^c / 2 for I/kappa <= A/alpha <= I.
pub fn be_positive_power(u: &BlockEncoding, c: f64, kappa: f64) -> Result<BlockEncoding> {
    check_power_args(u, c, kappa, false)?;
    let alpha = u.subnorm;
    let m = map_symmetric(&u.encoded, |x| 0.5 * (x / alpha).max(0.0).powf(c))?;
    let mut cost = u.cost.clone();
    cost.tick("positive_power", (kappa * (1.0 + c)).ceil().min(u64::MAX as f64) as u64);
    let err = u.err + 0.5 * c * kappa.powf(1.0 - c) * u.err / alpha;
    BlockEncoding::new(m, 1.0, err, cost)
}

/// The adjoint encoding: U^dagger block-encodes A^T.
pub fn be_adjoint(u: &BlockEncoding) -> Result<BlockEncoding> {
    let mut cost = u.cost.clone();
    cost.tick("adjoint", 1);
    BlockEncoding::new(u.encoded.transpose(), u.subnorm, u.err, cost)
}

/// Amplify `u` as far as the 1/2 headroom allows, but never below `floor`
/// for the new subnormalization. Returns `u` unchanged when no gain is possible.
pub fn be_amplify_max(u: &BlockEncoding, floor: f64, tol: f64) -> Result<BlockEncoding> {
    let gamma = (u.subnorm / (2.0 * u.norm)).min(u.subnorm / floor);
    if gamma > 1.0 + 1e-9 && u.norm > 0.0 {
        be_amplify(u, gamma * (1.0 - 1e-12), tol)
    } else {
        Ok(u.clone())
    }
}

/// Keeps only the diagonal, squared and divided by the dimension:
/// encodes sum_i M_ii^2 / n |i><i| at subnormalization alpha^2.
pub fn be_diagonal_filter(u: &BlockEncoding) -> Result<BlockEncoding> {
    let n = u.dim();
    let d = u.encoded.diagonal().map(|x| x * x / n as f64);
    let mut cost = u.cost.clone();
    cost.tick("diagonal_filter", 1);
    let err = chained((2.0 * u.subnorm * u.err + u.err * u.err) / n as f64, [u]);
    BlockEncoding::new(DMatrix::from_diagonal(&d), u.subnorm * u.subnorm, err, cost)
}

/// Principal submatrix on the basis states `range` (a row-selection
/// permutation followed by discarding the other blocks).
pub fn be_restrict(u: &BlockEncoding, range: Range<usize>) -> Result<BlockEncoding> {
    if range.end > u.dim() || range.start >= range.end {
        return Err(Error::Parameter(format!("restriction {range:?} out of bounds")));
    }
    let k = range.len();
    let m = u.encoded.view((range.start, range.start), (k, k)).into_owned();
    let mut cost = u.cost.clone();
    cost.tick("permutation", 1);
    BlockEncoding::new(m, u.subnorm, u.err, cost)
}

/// First column of a state-preparation unitary: `vector / subnorm` is the
/// prepared (sub-normalized) state.
#[derive(Clone, Debug)]
pub struct ColumnEncoding {
    vector: DVector<f64>,
    subnorm: f64,
    err: f64,
    cost: CostCounter,
}

impl ColumnEncoding {
    pub fn new(vector: DVector<f64>, subnorm: f64, err: f64, cost: CostCounter) -> Result<Self> {
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite entry in encoded column".into()));
        }
        if !(subnorm > 0.0 && subnorm.is_finite()) {
            return Err(Error::Degenerate(format!(
                "column subnormalization must be positive and finite, got {subnorm:e}"
            )));
        }
        if vector.norm() > subnorm * (1.0 + NORM_SLACK) {
            return Err(Error::Contract(format!(
                "||v|| / alpha = {:.15} exceeds 1",
                vector.norm() / subnorm
            )));
        }
        Ok(Self {
            vector,
            subnorm,
            err,
            cost,
        })
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.vector
    }

    pub fn subnorm(&self) -> f64 {
        self.subnorm
    }

    pub fn err(&self) -> f64 {
        self.err
    }

    pub fn cost(&self) -> &CostCounter {
        &self.cost
    }

    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    /// The prepared state, v / alpha.
    pub fn state(&self) -> DVector<f64> {
        &self.vector / self.subnorm
    }

    pub fn with_tick(mut self, name: &str, n: u64) -> Self {
        self.cost.tick(name, n);
        self
    }

    /// Relabel the encoded vector as s v; the prepared state is unchanged.
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        if !(s != 0.0 && s.is_finite()) {
            return Err(Error::Parameter(format!("invalid rescaling {s}")));
        }
        Self::new(&self.vector * s, self.subnorm * s.abs(), self.err * s.abs(), self.cost.clone())
    }
}

/// Amplitude encoding of a classical vector.
pub fn state_preparation(v: &DVector<f64>) -> Result<ColumnEncoding> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("cannot prepare the zero state".into()));
    }
    let mut cost = CostCounter::new();
    cost.tick("state_preparation", (v.len().max(2) as f64).log2().ceil() as u64);
    ColumnEncoding::new(v.clone(), norm, 0.0, cost)
}

pub fn col_apply(u: &BlockEncoding, c: &ColumnEncoding) -> Result<ColumnEncoding> {
    if u.encoded.ncols() != c.len() {
        return Err(Error::Parameter("operator and column differ in dimension".into()));
    }
    let mut cost = u.cost.merged(&c.cost);
    cost.tick("product", 1);
    ColumnEncoding::new(
        &u.encoded * &c.vector,
        u.subnorm * c.subnorm,
        u.subnorm * c.err + c.subnorm * u.err,
        cost,
    )
}

pub fn col_tensor(a: &ColumnEncoding, b: &ColumnEncoding) -> Result<ColumnEncoding> {
    let mut cost = a.cost.merged(&b.cost);
    cost.tick("tensor", 1);
    ColumnEncoding::new(
        a.vector.kronecker(&b.vector),
        a.subnorm * b.subnorm,
        a.subnorm * b.err + b.subnorm * a.err,
        cost,
    )
}

/// Keep the entries in `range` (post-selection on a register value).
pub fn col_restrict(c: &ColumnEncoding, range: Range<usize>) -> Result<ColumnEncoding> {
    if range.end > c.len() || range.start >= range.end {
        return Err(Error::Parameter(format!("restriction {range:?} out of bounds")));
    }
    let v = c.vector.rows(range.start, range.len()).into_owned();
    let mut cost = c.cost.clone();
    cost.tick("permutation", 1);
    ColumnEncoding::new(v, c.subnorm, c.err, cost)
}

/// Exchange the registers of a (d1 x d2) product index: entry (a, b) moves to (b, a).
pub fn col_swap_registers(c: &ColumnEncoding, d1: usize, d2: usize) -> Result<ColumnEncoding> {
    if d1 * d2 != c.len() {
        return Err(Error::Parameter(format!(
            "register sizes {d1} x {d2} do not match a column of length {}",
            c.len()
        )));
    }
    let v = DVector::from_fn(c.len(), |k, _| {
        let (b, a) = (k / d1, k % d1);
        c.vector[a * d2 + b]
    });
    let mut cost = c.cost.clone();
    cost.tick("swap", (d1.max(d2).max(2) as f64).log2().ceil() as u64);
    ColumnEncoding::new(v, c.subnorm, c.err, cost)
}

/// sum_k c_k v_k at subnormalization sum_k |c_k| alpha_k.
pub fn col_lcu(terms: &[(f64, &ColumnEncoding)]) -> Result<ColumnEncoding> {
    let (first, rest) = terms
        .split_first()
        .ok_or_else(|| Error::Parameter("lcu needs at least one term".into()))?;
    let mut v = &first.1.vector * first.0;
    let mut alpha = first.0.abs() * first.1.subnorm;
    let mut err = first.0.abs() * first.1.err;
    let mut cost = first.1.cost.clone();
    for (c, t) in rest {
        if t.len() != v.len() {
            return Err(Error::Parameter("lcu columns differ in length".into()));
        }
        v += &t.vector * *c;
        alpha += c.abs() * t.subnorm;
        err += c.abs() * t.err;
        cost.absorb(&t.cost);
    }
    cost.tick("lcu", 1);
    ColumnEncoding::new(v, alpha, err, cost)
}

/// Amplitude amplification of a prepared state by `gamma`; needs
/// gamma ||v|| / alpha <= 1/2.
pub fn col_amplify(c: &ColumnEncoding, gamma: f64, tol: f64) -> Result<ColumnEncoding> {
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(Error::Parameter(format!("amplification factor must exceed 1, got {gamma}")));
    }
    let reach = gamma * c.vector.norm() / c.subnorm;
    if reach > 0.5 * (1.0 + NORM_SLACK) {
        return Err(Error::AmplificationRange(reach));
    }
    let alpha = c.subnorm / gamma;
    let mut cost = c.cost.clone();
    cost.tick("amplify", gamma.ceil().min(u64::MAX as f64) as u64);
    ColumnEncoding::new(c.vector.clone(), alpha, c.err + tol * alpha, cost)
}

/// Amplify a column down to subnormalization 2 ||v|| when that is a gain.
pub fn col_amplify_max(c: &ColumnEncoding, tol: f64) -> Result<ColumnEncoding> {
    let norm = c.vector.norm();
    if norm > 0.0 && c.subnorm > 2.0 * norm * (1.0 + 1e-9) {
        col_amplify(c, c.subnorm / (2.0 * norm) * (1.0 - 1e-12), tol)
    } else {
        Ok(c.clone())
    }
}

/// Entrywise (Hadamard) product of two encoded columns.
pub fn entrywise_product(a: &ColumnEncoding, b: &ColumnEncoding) -> Result<ColumnEncoding> {
    if a.len() != b.len() {
        return Err(Error::Parameter("entrywise product of columns of different length".into()));
    }
    let mut cost = a.cost.merged(&b.cost);
    cost.tick("entrywise_product", (a.len().max(2) as f64).log2().ceil() as u64);
    ColumnEncoding::new(
        a.vector.component_mul(&b.vector),
        a.subnorm * b.subnorm,
        a.subnorm * b.err + b.subnorm * a.err,
        cost,
    )
}

/// Column with entries (v_i / alpha)^p from p copies of the state, tensored
/// and permuted onto the diagonal index.
pub fn entrywise_power_column(c: &ColumnEncoding, p: u32) -> Result<ColumnEncoding> {
    if p == 0 {
        return Err(Error::Parameter("entrywise power needs p >= 1".into()));
    }
    let s = c.state();
    let v = s.map(|x| x.powi(p as i32));
    let mut cost = c.cost.clone();
    let logn = (c.len().max(2) as f64).log2().ceil() as u64;
    cost.tick("entrywise_power", p as u64 * logn);
    let rel = c.err / c.subnorm;
    ColumnEncoding::new(v, 1.0, p as f64 * rel, cost)
}

/// Reduced density of the prepared state over the first register of a
/// (d1 x d2) product, tracing out the second: encodes M M^T for the d1 x d2
/// reshape M of the column, at subnormalization alpha^2.
pub fn partial_trace_second(c: &ColumnEncoding, d1: usize, d2: usize) -> Result<BlockEncoding> {
    if d1 * d2 != c.len() {
        return Err(Error::Parameter(format!(
            "register sizes {d1} x {d2} do not match a column of length {}",
            c.len()
        )));
    }
    let m = DMatrix::from_fn(d1, d2, |a, b| c.vector[a * d2 + b]);
    let rho = &m * m.transpose();
    let mut cost = c.cost.clone();
    cost.tick("density_matrix", 1);
    let err = 2.0 * c.subnorm * c.err + c.err * c.err;
    BlockEncoding::new(rho, c.subnorm * c.subnorm, err, cost)
}

/// An orthogonal matrix whose first column is the uniform superposition; the
/// Hadamard transform for any register size.
pub fn uniform_reflection(n: usize) -> DMatrix<f64> {
    if n == 1 {
        return DMatrix::identity(1, 1);
    }
    // Householder reflection that swaps e_0 and u = 1 / sqrt(n)
    let s = 1.0 / (n as f64).sqrt();
    let mut w = DVector::from_element(n, -s);
    w[0] += 1.0;
    let w2 = w.norm_squared();
    DMatrix::<f64>::identity(n, n) - (&w * w.transpose()) * (2.0 / w2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn exact(a: DMatrix<f64>) -> BlockEncoding {
        let n = linalg::operator_norm(&a).max(1e-300);
        BlockEncoding::new(a, n, 0.0, CostCounter::new()).unwrap()
    }

    #[test]
    fn known_matrix_uses_frobenius_norm() {
        let e = encode_known_matrix(&DMatrix::identity(2, 2)).unwrap();
        assert!((e.subnorm() - 2f64.sqrt()).abs() < 1e-15);
        assert!(encode_known_matrix(&DMatrix::zeros(2, 2)).is_err());
        let r = encode_known_matrix(&rand_matrix(4, 4, 1)).unwrap();
        assert!(r.op_norm() / r.subnorm() <= 1.0);
    }

    #[test]
    fn products() {
        let a = encode_known_matrix(&rand_matrix(3, 3, 2)).unwrap();
        let i = encode_known_matrix(&DMatrix::identity(3, 3)).unwrap();
        let p = be_product(&a, &i).unwrap();
        assert_eq!(p.encoded(), a.encoded());
        assert!((p.subnorm() - a.subnorm() * 3f64.sqrt()).abs() < 1e-14);
        let h = exact(diag(&[0.5, 0.5]));
        let q = be_product(&h, &h).unwrap();
        assert_eq!(q.encoded(), &diag(&[0.25, 0.25]));
        assert_eq!(q.cost().get("product"), 1);
        let b = encode_known_matrix(&rand_matrix(3, 3, 3)).unwrap();
        let direct = a.encoded() * b.encoded();
        assert!((be_product(&a, &b).unwrap().encoded() - direct).amax() < 1e-15);
    }

    #[test]
    fn lcu_cases() {
        let a = encode_known_matrix(&rand_matrix(3, 3, 4)).unwrap();
        let zero = be_lcu(&[a.clone(), a.clone()], &[1.0, -1.0]).unwrap();
        assert_eq!(zero.encoded().amax(), 0.0);
        let same = be_lcu(&[a.clone(), a.clone()], &[1.0, 1.0]).unwrap();
        assert!((same.encoded() - a.encoded()).amax() < 1e-15);
        assert_eq!(same.subnorm(), a.subnorm());
        let terms: Vec<BlockEncoding> =
            (0..3).map(|s| encode_known_matrix(&rand_matrix(3, 3, 10 + s)).unwrap()).collect();
        let l = be_lcu(&terms, &[1.0, -1.0, 1.0]).unwrap();
        let direct = (terms[0].encoded() - terms[1].encoded() + terms[2].encoded()) / 3.0;
        assert!((l.encoded() - direct).amax() < 1e-15);
    }

    #[test]
    fn tensors() {
        let i2 = exact(DMatrix::identity(2, 2));
        let a = encode_known_matrix(&rand_matrix(2, 2, 5)).unwrap();
        let t = be_tensor(&i2, &a).unwrap();
        assert_eq!(t.encoded().view((2, 2), (2, 2)), a.encoded().view((0, 0), (2, 2)));
        assert_eq!(t.encoded()[(0, 2)], 0.0);
        let d = be_tensor(&exact(diag(&[1.0, 2.0])), &exact(diag(&[3.0, 4.0]))).unwrap();
        assert_eq!(d.encoded(), &diag(&[3.0, 4.0, 6.0, 8.0]));
        let b = encode_known_matrix(&rand_matrix(3, 3, 6)).unwrap();
        let k = be_tensor(&a, &b).unwrap();
        for (r, c) in [(0, 0), (4, 1), (5, 5), (2, 3)] {
            let want = a.encoded()[(r / 3, c / 3)] * b.encoded()[(r % 3, c % 3)];
            assert_eq!(k.encoded()[(r, c)], want);
        }
    }

    #[test]
    fn scale_down_and_amplify() {
        let i = exact(DMatrix::identity(2, 2));
        assert_eq!(be_scale_down(&i, 2.0).unwrap().encoded(), &diag(&[0.5, 0.5]));
        assert!(be_scale_down(&i, 1.0).is_err());
        let small = BlockEncoding::new(diag(&[0.1, 0.05]), 1.0, 0.0, CostCounter::new()).unwrap();
        let amp = be_amplify(&small, 2.0, 1e-10).unwrap();
        assert_eq!(amp.subnorm(), 0.5);
        assert!((amp.block() - small.block() * 2.0).amax() < 1e-15);
        assert!(amp.err() > small.err());
        assert!(matches!(be_amplify(&small, 6.0, 1e-10), Err(Error::AmplificationRange(_))));
    }

    #[test]
    fn negative_power_example() {
        let u = BlockEncoding::new(diag(&[0.64, 0.25]), 1.0, 0.0, CostCounter::new()).unwrap();
        let r = be_negative_power(&u, 0.5, 4.0).unwrap();
        assert!((r.encoded() - diag(&[0.3125, 0.5])).amax() < 1e-15);
        let id = exact(DMatrix::identity(3, 3));
        let h = be_negative_power(&id, 0.7, 1.0).unwrap();
        assert!((h.encoded() - DMatrix::identity(3, 3) * 0.5).amax() < 1e-15);
        assert!(be_negative_power(&u, 0.5, 2.0).is_err());
    }

    #[test]
    fn positive_power_example() {
        let u = BlockEncoding::new(diag(&[0.25]), 1.0, 0.0, CostCounter::new()).unwrap();
        let r = be_positive_power(&u, 0.5, 4.0).unwrap();
        assert!((r.encoded()[(0, 0)] - 0.25).abs() < 1e-15);
        let id = exact(DMatrix::identity(2, 2));
        assert!((be_positive_power(&id, 0.3, 1.0).unwrap().encoded() - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn powers_match_eigen_oracle() {
        let b = rand_matrix(5, 5, 7);
        let spd = &b * b.transpose() + DMatrix::identity(5, 5);
        let e = linalg::sym_eigen(&spd).unwrap();
        let alpha = e.values[0];
        let kappa = alpha / e.values[4];
        let u = BlockEncoding::new(spd.clone(), alpha, 0.0, CostCounter::new()).unwrap();
        let neg = be_negative_power(&u, 0.5, kappa).unwrap();
        let oracle = linalg::spectral_map(&spd, |x| (x / alpha).powf(-0.5) / (2.0 * kappa.sqrt())).unwrap();
        assert!((neg.encoded() - oracle).amax() < 1e-10);
        let pos = be_positive_power(&u, 0.5, kappa).unwrap();
        let oracle = linalg::spectral_map(&spd, |x| 0.5 * (x / alpha).sqrt()).unwrap();
        assert!((pos.encoded() - oracle).amax() < 1e-10);
    }

    #[test]
    fn column_basics() {
        let e1 = state_preparation(&DVector::from_vec(vec![0.0, 1.0, 0.0])).unwrap();
        assert_eq!(entrywise_power_column(&e1, 5).unwrap().vector(), e1.vector());
        let v = state_preparation(&DVector::from_vec(vec![0.6, 0.8])).unwrap();
        let sq = entrywise_power_column(&v, 2).unwrap();
        assert!((sq.vector() - DVector::from_vec(vec![0.36, 0.64])).amax() < 1e-15);
        let r = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.1]);
        let cube = entrywise_power_column(&state_preparation(&r).unwrap(), 3).unwrap();
        let n = r.norm();
        for i in 0..4 {
            assert!((cube.vector()[i] - (r[i] / n).powi(3)).abs() < 1e-15);
        }
    }

    #[test]
    fn swap_and_trace() {
        // column over (a, b) with a in 0..2, b in 0..3
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let c = state_preparation(&v).unwrap();
        let s = col_swap_registers(&c, 2, 3).unwrap();
        assert_eq!(s.vector().as_slice(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let rho = partial_trace_second(&c, 2, 3).unwrap();
        let m = DMatrix::from_row_slice(2, 3, v.as_slice());
        assert_eq!(rho.encoded(), &(&m * m.transpose()));
        assert!((rho.subnorm() - v.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn uniform_reflection_is_orthogonal() {
        for n in [1, 2, 3, 5, 8] {
            let h = uniform_reflection(n);
            assert!((&h * h.transpose() - DMatrix::identity(n, n)).amax() < 1e-14);
            for i in 0..n {
                assert!((h[(i, 0)] - 1.0 / (n as f64).sqrt()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn invalid_subnorm_rejected() {
        assert!(matches!(
            BlockEncoding::new(diag(&[2.0]), 1.0, 0.0, CostCounter::new()),
            Err(Error::Contract(_))
        ));
    }
}
