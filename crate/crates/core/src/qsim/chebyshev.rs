//! Chebyshev interpolation of the Gaussian exp(-a^2 x^2) on [-1, 1].
//!
//! Nodes and coefficients are computed in double-double arithmetic. The sup
//! error is measured on the double-double interpolant, and the rounding of
//! the coefficients to f64 is bounded separately, so neither figure is masked
//! by the other or by evaluation roundoff.

use twofloat::TwoFloat;

use crate::error::{Error, Result};

/// Decay constants C and alpha of sup|exp(-x^2) - P_p| <= C exp(-alpha p).
pub const DECAY_C: f64 = 0.1;
pub const DECAY_ALPHA: f64 = 1.09;

/// Points in the dense grid used to measure sup errors.
pub const GRID_POINTS: usize = 10_000;

/// sum_k a_k T_k(x), with the constant term stored in full.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebSeries {
    pub coeffs: Vec<f64>,
    /// The same coefficients before rounding to f64.
    coeffs_dd: Vec<TwoFloat>,
    /// Distance of the double-double interpolant to the approximated function over [-1, 1].
    pub sup_error: f64,
    /// sum_k |a_k - fl(a_k)|, which bounds the effect of rounding since |T_k| <= 1.
    pub rounding_error: f64,
}

impl ChebSeries {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &a in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + a;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coeffs.first().copied().unwrap_or(0.0)
    }

    pub fn eval_dd(&self, x: f64) -> TwoFloat {
        let x = TwoFloat::from(x);
        let two_x = x * 2.0;
        let mut b1 = TwoFloat::from(0.0);
        let mut b2 = TwoFloat::from(0.0);
        for &a in self.coeffs_dd.iter().skip(1).rev() {
            let b0 = two_x * b1 - b2 + a;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coeffs_dd.first().copied().unwrap_or(TwoFloat::from(0.0))
    }

    /// Error of the f64 polynomial as used: approximation plus coefficient rounding.
    pub fn total_error(&self) -> f64 {
        self.sup_error + self.rounding_error
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_dd(self.coeffs_dd.iter().map(|&a| a * s).collect(), self.sup_error * s.abs())
    }

    fn from_dd(coeffs_dd: Vec<TwoFloat>, sup_error: f64) -> Self {
        let coeffs: Vec<f64> = coeffs_dd.iter().map(|&a| f64::from(a)).collect();
        let rounding_error = coeffs_dd
            .iter()
            .zip(&coeffs)
            .map(|(&a, &b)| f64::from((a - b).abs()))
            .sum();
        Self {
            coeffs,
            coeffs_dd,
            sup_error,
            rounding_error,
        }
    }

    /// max |P(x)| over a uniform grid of [-1, 1].
    pub fn grid_max_abs(&self, points: usize) -> f64 {
        grid(points).map(|x| self.eval(x).abs()).fold(0.0, f64::max)
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Self::from_dd(coeffs.into_iter().map(TwoFloat::from).collect(), 0.0)
    }
}

fn grid(points: usize) -> impl Iterator<Item = f64> {
    let n = points.max(2);
    (0..n).map(move |i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
}

/// Interpolant of exp(-a^2 x^2) at the p + 1 Chebyshev nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevApprox {
    pub degree: usize,
    /// Width parameter a.
    pub width: f64,
    pub series: ChebSeries,
}

impl ChebyshevApprox {
    pub fn coeffs(&self) -> &[f64] {
        &self.series.coeffs
    }

    pub fn sup_error(&self) -> f64 {
        self.series.sup_error
    }

    pub fn total_error(&self) -> f64 {
        self.series.total_error()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.series.eval(x)
    }
}

fn dd(x: f64) -> TwoFloat {
    TwoFloat::from(x)
}

/// cos(theta) for theta in [0, pi], by Taylor series after folding to [0, pi/2].
fn cos_dd(theta: TwoFloat) -> TwoFloat {
    let pi = twofloat::consts::PI;
    let (t, sign) = if theta > pi / 2.0 { (pi - theta, -1.0) } else { (theta, 1.0) };
    let t2 = t * t;
    let mut term = dd(1.0);
    let mut sum = dd(1.0);
    let mut k = 1.0;
    while term.abs() > dd(1e-36) {
        term = -term * t2 / (k * (k + 1.0));
        sum += term;
        k += 2.0;
    }
    sum * sign
}

/// exp(-y) for y >= 0: positive Taylor series after halving, squared back, inverted.
fn exp_neg_dd(y: TwoFloat) -> TwoFloat {
    let mut r = y;
    let mut halvings = 0;
    while r > dd(0.5) {
        r /= 2.0;
        halvings += 1;
    }
    let mut term = dd(1.0);
    let mut sum = dd(1.0);
    let mut k = 1.0;
    while term > dd(1e-36) {
        term = term * r / k;
        sum += term;
        k += 1.0;
    }
    for _ in 0..halvings {
        sum = sum * sum;
    }
    recip_dd(sum)
}

/// 1 / s by Newton steps from the f64 reciprocal. The crate's own
/// double-double division is only accurate to about 1e-17.
fn recip_dd(s: TwoFloat) -> TwoFloat {
    let mut q = dd(1.0 / s.hi());
    for _ in 0..2 {
        q += q * (dd(1.0) - s * q);
    }
    q
}

fn gaussian_dd(x: f64, width: f64) -> TwoFloat {
    let a = dd(width);
    let xa = dd(x) * a;
    exp_neg_dd(xa * xa)
}

fn gaussian_dd_at(x: TwoFloat, width: f64) -> TwoFloat {
    let xa = x * width;
    exp_neg_dd(xa * xa)
}

/// Chebyshev interpolation of exp(-x^2) at degree `p`.
pub fn cheb_gaussian(p: usize) -> ChebyshevApprox {
    cheb_gaussian_scaled(p, 1.0)
}

/// Chebyshev interpolation of exp(-a^2 x^2) at degree `p`.
pub fn cheb_gaussian_scaled(p: usize, width: f64) -> ChebyshevApprox {
    let n = p + 1;
    let pi = twofloat::consts::PI;
    let nodes: Vec<TwoFloat> = (0..n)
        .map(|j| cos_dd(pi * (dd(j as f64 + 0.5) / n as f64)))
        .collect();
    let values: Vec<TwoFloat> = nodes.iter().map(|&x| gaussian_dd_at(x, width)).collect();

    let mut acc = vec![dd(0.0); n];
    for (x, f) in nodes.iter().zip(&values) {
        // T_k(x) by the three-term recurrence
        let mut t0 = dd(1.0);
        let mut t1 = *x;
        for (k, a) in acc.iter_mut().enumerate() {
            let tk = match k {
                0 => t0,
                1 => t1,
                _ => {
                    let t2 = *x * t1 * 2.0 - t0;
                    t0 = t1;
                    t1 = t2;
                    t2
                }
            };
            *a += *f * tk;
        }
    }
    let coeffs: Vec<TwoFloat> = acc
        .iter()
        .enumerate()
        .map(|(k, a)| *a * if k == 0 { 1.0 } else { 2.0 } / n as f64)
        .collect();
    let mut series = ChebSeries::from_dd(coeffs, 0.0);
    series.sup_error = measure_sup_error(&series, width);
    ChebyshevApprox {
        degree: p,
        width,
        series,
    }
}

/// sup over a 10^4-point grid of |exp(-a^2 x^2) - P(x)|, in double-double.
pub fn measure_sup_error(series: &ChebSeries, width: f64) -> f64 {
    grid(GRID_POINTS)
        .map(|x| f64::from((gaussian_dd(x, width) - series.eval_dd(x)).abs()))
        .fold(0.0, f64::max)
}

/// Degree p = ceil(ln(C / eps) / alpha) suggested by the decay constants.
pub fn default_degree(eps: f64) -> usize {
    ((DECAY_C / eps).ln() / DECAY_ALPHA).ceil().max(0.0) as usize
}

/// Smallest even degree, starting from the decay-constant estimate, whose
/// measured error including coefficient rounding on [-1, 1] reaches `eps` for width `a`.
pub fn gaussian_for_width(width: f64, eps: f64) -> Result<ChebyshevApprox> {
    if !(width > 0.0 && width.is_finite() && eps > 0.0) {
        return Err(Error::Parameter(format!("invalid width {width} or tolerance {eps}")));
    }
    let mut p = default_degree(eps).max(2);
    p += p % 2;
    loop {
        let approx = cheb_gaussian_scaled(p, width);
        if approx.total_error() <= eps {
            return Ok(approx);
        }
        if p >= 2000 {
            return Err(Error::Numerical(format!(
                "Gaussian of width {width} needs degree above 2000 for error {eps:e}"
            )));
        }
        p += 2;
    }
}
