//! CIR (Feller square-root) model definition, boundary classification, and
//! exact first-passage-time cumulants and moments.
//!
//! The process solves `dY = (-tau Y + mu) dt + sigma sqrt(Y - c) dW` on
//! `(c, +inf)`. With `s = 2 (mu - c tau) / sigma^2 >= 1` the lower endpoint
//! is an entrance boundary, which is a standing assumption here. FPT
//! cumulants through a constant threshold come from Stirling-number series
//! `h_j` combined through logarithmic polynomials; moments follow either from
//! the classical binomial recursion or from a complete-Bell convolution, and
//! the two routes are kept as independent cross-checks.

use std::cmp::Ordering;

use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Float, Integer};
use thiserror::Error;

use crate::bell::{complete_bell, log_partition_poly, BellError};
use crate::precision::{PrecisionContext, Real, SeriesSum};
use crate::specfun::{kummer_phi, rising_factorial, unsigned_stirling_first, SpecFunError};

/// Model or argument violations in the CIR layer.
#[derive(Debug, Error)]
pub enum CirError {
    /// `s = 2 (mu - c tau) / sigma^2 < 1`: the lower endpoint would be
    /// attainable and the cumulant series does not apply.
    #[error("entrance boundary violated: s = {s} < 1")]
    EntranceViolation { s: f64 },
    /// A structural parameter failed validation.
    #[error("invalid parameter: {what}")]
    InvalidParameter { what: String },
    /// `y0 > S`: only upcrossing configurations are supported.
    #[error("downcrossing configuration (y0 > S) is not supported")]
    Downcrossing,
    /// `y0 = S`: the passage time is identically zero.
    #[error("degenerate start: y0 = S, the passage time is identically zero")]
    DegenerateStart,
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error(transparent)]
    Bell(#[from] BellError),
}

/// CIR parameters plus threshold and start point.
///
/// Invariants enforced at construction: `sigma > 0`, `tau > 0`, `c <= 0`,
/// `y0 > c`, `S > c`, `y0 <= S` (upcrossing; equality is the degenerate
/// start), and the entrance-boundary index `s >= 1`.
#[derive(Clone, Debug)]
pub struct CirParams {
    tau: Real,
    mu: Real,
    sigma: Real,
    lower: Real,
    y0: Real,
    threshold: Real,
}

impl CirParams {
    pub fn new(
        tau: Real,
        mu: Real,
        sigma: Real,
        lower: Real,
        y0: Real,
        threshold: Real,
    ) -> Result<Self, CirError> {
        let bad = |what: &str| CirError::InvalidParameter { what: what.to_string() };
        if !(tau.cmp0() == Some(Ordering::Greater)) {
            return Err(bad("tau must be positive"));
        }
        if !(sigma.cmp0() == Some(Ordering::Greater)) {
            return Err(bad("sigma must be positive"));
        }
        if lower.cmp0() == Some(Ordering::Greater) {
            return Err(bad("c must be nonpositive"));
        }
        if y0 <= lower || y0.is_nan() {
            return Err(bad("y0 must exceed the lower boundary c"));
        }
        if threshold <= lower || threshold.is_nan() {
            return Err(bad("S must exceed the lower boundary c"));
        }
        if y0 > threshold {
            return Err(CirError::Downcrossing);
        }
        let p = Self { tau, mu, sigma, lower, y0, threshold };
        let s = p.boundary_index();
        // Parameter sets sitting exactly on the boundary s = 1 must not be
        // rejected for representation error in the inputs.
        if s < 1.0 - 1e-9 {
            return Err(CirError::EntranceViolation { s: s.to_f64() });
        }
        Ok(p)
    }

    /// Convenience constructor from doubles at the context's precision.
    pub fn from_f64(
        ctx: &PrecisionContext,
        tau: f64,
        mu: f64,
        sigma: f64,
        lower: f64,
        y0: f64,
        threshold: f64,
    ) -> Result<Self, CirError> {
        Self::new(
            ctx.real(tau),
            ctx.real(mu),
            ctx.real(sigma),
            ctx.real(lower),
            ctx.real(y0),
            ctx.real(threshold),
        )
    }

    /// Boundary classification index `s = 2 (mu - c tau) / sigma^2`.
    pub fn boundary_index(&self) -> Real {
        let prec = self.tau.prec();
        let num = Float::with_val(prec, &self.mu - Float::with_val(prec, &self.lower * &self.tau));
        let den = Float::with_val(prec, self.sigma.square_ref());
        2 * num / den
    }

    /// Series argument `2 tau (w - c) / sigma^2` shared by the cumulant and
    /// Laplace-transform formulas.
    fn series_argument(&self, w: &Real) -> Real {
        let prec = self.tau.prec();
        let num = Float::with_val(prec, w - &self.lower) * &self.tau;
        let den = Float::with_val(prec, self.sigma.square_ref());
        2 * num / den
    }

    pub fn tau(&self) -> &Real {
        &self.tau
    }

    pub fn mu(&self) -> &Real {
        &self.mu
    }

    pub fn sigma(&self) -> &Real {
        &self.sigma
    }

    /// Lower state boundary `c`.
    pub fn lower(&self) -> &Real {
        &self.lower
    }

    pub fn y0(&self) -> &Real {
        &self.y0
    }

    /// Threshold `S`.
    pub fn threshold(&self) -> &Real {
        &self.threshold
    }

    pub fn is_degenerate(&self) -> bool {
        self.y0 == self.threshold
    }
}

/// Exact FPT cumulants `c_1 .. c_K` (1-based accessor).
#[derive(Clone, Debug)]
pub struct CumulantVector {
    values: Vec<Real>,
}

impl CumulantVector {
    pub fn from_values(values: Vec<Real>) -> Self {
        Self { values }
    }

    pub fn order(&self) -> usize {
        self.values.len()
    }

    /// `c_k`, `1 <= k <= order`.
    pub fn get(&self, k: usize) -> &Real {
        &self.values[k - 1]
    }

    pub fn values(&self) -> &[Real] {
        &self.values
    }

    pub fn mean(&self) -> &Real {
        self.get(1)
    }

    pub fn variance(&self) -> &Real {
        self.get(2)
    }

    /// Coefficient of variation `sqrt(c_2) / c_1`.
    pub fn coefficient_of_variation(&self) -> Real {
        let prec = self.values[0].prec();
        Float::with_val(prec, self.get(2).sqrt_ref()) / self.get(1)
    }
}

/// Raw FPT moments `m_1 .. m_K` with summary statistics.
#[derive(Clone, Debug)]
pub struct MomentVector {
    values: Vec<Real>,
}

impl MomentVector {
    pub fn from_values(values: Vec<Real>) -> Self {
        Self { values }
    }

    pub fn order(&self) -> usize {
        self.values.len()
    }

    /// `m_k = E[T^k]`, `1 <= k <= order`; `get(0)` is not represented, the
    /// zeroth moment is identically one.
    pub fn get(&self, k: usize) -> &Real {
        &self.values[k - 1]
    }

    pub fn values(&self) -> &[Real] {
        &self.values
    }

    pub fn mean(&self) -> &Real {
        self.get(1)
    }

    pub fn variance(&self) -> Real {
        let prec = self.values[0].prec();
        self.get(2) - Float::with_val(prec, self.get(1).square_ref())
    }

    /// `sqrt(variance) / mean`.
    pub fn coefficient_of_variation(&self) -> Real {
        self.variance().sqrt() / self.get(1)
    }

    /// Skewness `gamma_1 = (m_3 - 3 m_1 m_2 + 2 m_1^3) / variance^(3/2)`;
    /// requires order >= 3.
    pub fn skewness(&self) -> Option<Real> {
        if self.order() < 3 {
            return None;
        }
        let prec = self.values[0].prec();
        let m1 = self.get(1);
        let m2 = self.get(2);
        let m3 = self.get(3);
        let m1sq = Float::with_val(prec, m1.square_ref());
        let num = Float::with_val(prec, m3 - Float::with_val(prec, 3 * m1) * m2) + 2 * m1sq * m1;
        let den = self.variance().pow_three_halves();
        Some(num / den)
    }

    /// Excess kurtosis `c_4 / c_2^2`; requires order >= 4.
    pub fn excess_kurtosis(&self) -> Option<Real> {
        if self.order() < 4 {
            return None;
        }
        let prec = self.values[0].prec();
        let m1 = self.get(1);
        let m2 = self.get(2);
        let m3 = self.get(3);
        let m4 = self.get(4);
        let m1sq = Float::with_val(prec, m1.square_ref());
        // fourth central moment
        let mut num = Float::with_val(prec, m4 - Float::with_val(prec, 4 * m1) * m3);
        num += Float::with_val(prec, 6 * &m1sq) * m2;
        num -= Float::with_val(prec, 3 * &m1sq) * &m1sq;
        let var = self.variance();
        let den = Float::with_val(prec, var.square_ref());
        Some(num / den - 3u32)
    }
}

trait PowThreeHalves {
    fn pow_three_halves(self) -> Real;
}

impl PowThreeHalves for Real {
    fn pow_three_halves(self) -> Real {
        let sq = Float::with_val(self.prec(), self.square_ref());
        (sq * self).sqrt()
    }
}

/// Stirling-number series `h_j(y) = j! sum_{n >= j} [n, j] y^n / (n! <s>_n)`.
///
/// Partial sums accumulate until two consecutive relative increments fall
/// below `ctx.series_tol`.
pub fn h_series(j: u32, y: &Real, s: &Real, ctx: &PrecisionContext) -> Result<Real, CirError> {
    assert!(j >= 1, "h_series requires j >= 1");
    let prec = ctx.digits();
    if y.is_zero() {
        return Ok(Float::with_val(prec, 0));
    }
    // running pieces at n = j
    let mut y_pow = Float::with_val(prec, y).pow(j);
    let mut factorial = Float::with_val(prec, Integer::from(Integer::factorial(j)));
    let mut rising = rising_factorial(s, j);
    let mut acc = SeriesSum::new(Float::with_val(prec, 0), ctx.series_tol());
    let mut converged = false;
    let mut n = j;
    loop {
        let stir = unsigned_stirling_first(n, j);
        let term = Float::with_val(prec, &stir) * &y_pow
            / Float::with_val(prec, &factorial * &rising);
        if acc.push(&term) {
            converged = true;
            break;
        }
        if (n - j) as usize >= ctx.max_terms() {
            break;
        }
        y_pow *= y;
        factorial *= n + 1;
        rising *= Float::with_val(prec, s + n);
        n += 1;
    }
    if !converged {
        return Err(SpecFunError::NonConvergent { what: "h_series", max_terms: ctx.max_terms() }.into());
    }
    let j_fact = Float::with_val(prec, Integer::from(Integer::factorial(j)));
    Ok(acc.value() * j_fact)
}

/// `c*_k(w) = P_k[h_1(arg), ..., h_k(arg)]` with `arg = 2 tau (w - c) / sigma^2`.
pub fn c_star(k: u32, w: &Real, p: &CirParams, ctx: &PrecisionContext) -> Result<Real, CirError> {
    let arg = p.series_argument(w);
    let s = p.boundary_index();
    let h: Vec<Real> = (1..=k).map(|j| h_series(j, &arg, &s, ctx)).collect::<Result<_, _>>()?;
    Ok(log_partition_poly(k, &h)?)
}

/// All `c*_k(w)` for `k = 1..=big_k`, sharing one `h` evaluation.
fn c_star_profile(big_k: u32, w: &Real, p: &CirParams, ctx: &PrecisionContext) -> Result<Vec<Real>, CirError> {
    let arg = p.series_argument(w);
    let s = p.boundary_index();
    let h: Vec<Real> = (1..=big_k).map(|j| h_series(j, &arg, &s, ctx)).collect::<Result<_, _>>()?;
    (1..=big_k)
        .into_par_iter()
        .map(|k| log_partition_poly(k, &h[..k as usize]).map_err(CirError::from))
        .collect()
}

/// Exact FPT cumulants `c_k(T) = (-tau)^(-k) [c*_k(y0) - c*_k(S)]`.
///
/// The degenerate start `y0 = S` yields the all-zero vector (the passage time
/// is identically zero).
pub fn fpt_cumulants(p: &CirParams, big_k: u32, ctx: &PrecisionContext) -> Result<CumulantVector, CirError> {
    assert!(big_k >= 1);
    let prec = ctx.digits();
    if p.is_degenerate() {
        return Ok(CumulantVector::from_values(vec![Float::with_val(prec, 0); big_k as usize]));
    }
    let star_y0 = c_star_profile(big_k, p.y0(), p, ctx)?;
    let star_s = c_star_profile(big_k, p.threshold(), p, ctx)?;
    let mut values = Vec::with_capacity(big_k as usize);
    let mut tau_pow = Float::with_val(prec, 1);
    for k in 1..=big_k as usize {
        tau_pow *= p.tau();
        let diff = Float::with_val(prec, &star_y0[k - 1] - &star_s[k - 1]);
        let signed = if k % 2 == 0 { diff } else { -diff };
        values.push(signed / &tau_pow);
    }
    Ok(CumulantVector::from_values(values))
}

/// Moments from cumulants by the classical binomial recursion
/// `m_k = c_k + sum_{i=1}^{k-1} C(k-1, i-1) c_i m_{k-i}`.
pub fn cumulants_to_moments(c: &CumulantVector) -> MomentVector {
    let prec = c.values.first().map_or(53, |v| v.prec());
    let big_k = c.order();
    let mut m: Vec<Real> = Vec::with_capacity(big_k);
    for k in 1..=big_k {
        let mut acc = c.get(k).clone();
        for i in 1..k {
            let binom = Integer::from(Integer::binomial_u((k - 1) as u32, (i - 1) as u32));
            let term = Float::with_val(prec, c.get(i) * &m[k - i - 1]);
            acc += Float::with_val(prec, &binom) * term;
        }
        m.push(acc);
    }
    MomentVector::from_values(m)
}

/// Inverse of [`cumulants_to_moments`]: `c_k = m_k - sum C(k-1, i-1) c_i m_{k-i}`.
pub fn moments_to_cumulants(m: &MomentVector) -> CumulantVector {
    let prec = m.values.first().map_or(53, |v| v.prec());
    let big_k = m.order();
    let mut c: Vec<Real> = Vec::with_capacity(big_k);
    for k in 1..=big_k {
        let mut acc = m.get(k).clone();
        for i in 1..k {
            let binom = Integer::from(Integer::binomial_u((k - 1) as u32, (i - 1) as u32));
            let term = Float::with_val(prec, &c[i - 1] * m.get(k - i));
            acc -= Float::with_val(prec, &binom) * term;
        }
        c.push(acc);
    }
    CumulantVector::from_values(c)
}

/// Moments straight from the complete-Bell convolution
/// `m_k = (-1)^k tau^(-k) sum_i C(k,i) Y_{k-i}[c*(y0)] Y_i[-c*(S)]`.
///
/// An independent route from [`cumulants_to_moments`]; the two must agree.
pub fn fpt_moments_bell(p: &CirParams, big_k: u32, ctx: &PrecisionContext) -> Result<MomentVector, CirError> {
    assert!(big_k >= 1);
    let prec = ctx.digits();
    if p.is_degenerate() {
        return Ok(MomentVector::from_values(vec![Float::with_val(prec, 0); big_k as usize]));
    }
    let star_y0 = c_star_profile(big_k, p.y0(), p, ctx)?;
    let star_s_neg: Vec<Real> = c_star_profile(big_k, p.threshold(), p, ctx)?
        .into_iter()
        .map(|v| -v)
        .collect();
    // Y_j tables for both argument lists, j = 0..=K
    let bell_of = |xs: &[Real]| -> Result<Vec<Real>, CirError> {
        let mut out = Vec::with_capacity(big_k as usize + 1);
        for j in 0..=big_k {
            out.push(complete_bell(j, &xs[..j as usize])?);
        }
        Ok(out)
    };
    let y_a = bell_of(&star_y0)?;
    let y_b = bell_of(&star_s_neg)?;
    let mut values = Vec::with_capacity(big_k as usize);
    let mut tau_pow = Float::with_val(prec, 1);
    for k in 1..=big_k as usize {
        tau_pow *= p.tau();
        let mut sum = Float::with_val(prec, 0);
        for i in 0..=k {
            let binom = Integer::from(Integer::binomial_u(k as u32, i as u32));
            sum += Float::with_val(prec, &binom) * Float::with_val(prec, &y_a[k - i] * &y_b[i]);
        }
        let signed = if k % 2 == 0 { sum } else { -sum };
        values.push(signed / &tau_pow);
    }
    Ok(MomentVector::from_values(values))
}

/// All-double cumulant pipeline used by the order-selection pass: the same
/// Stirling series, partition polynomials and sign bookkeeping evaluated in
/// IEEE doubles. Entries turn NaN/inf once double precision is exhausted,
/// which downstream selection treats as breakdown.
pub(crate) fn fpt_cumulants_f64(p: &CirParams, big_k: u32) -> Vec<f64> {
    let tau = p.tau().to_f64();
    let sigma = p.sigma().to_f64();
    let c = p.lower().to_f64();
    let s = p.boundary_index().to_f64();
    let arg = |w: f64| 2.0 * tau * (w - c) / (sigma * sigma);
    let star = |y: f64| -> Vec<f64> {
        let h: Vec<f64> = (1..=big_k).map(|j| h_series_f64(j, y, s)).collect();
        (1..=big_k)
            .map(|k| crate::bell::log_partition_poly_f64(k, &h[..k as usize]))
            .collect()
    };
    let star_y0 = star(arg(p.y0().to_f64()));
    let star_s = star(arg(p.threshold().to_f64()));
    let mut tau_pow = 1.0f64;
    (1..=big_k as usize)
        .map(|k| {
            tau_pow *= tau;
            let diff = star_y0[k - 1] - star_s[k - 1];
            (if k % 2 == 0 { diff } else { -diff }) / tau_pow
        })
        .collect()
}

fn h_series_f64(j: u32, y: f64, s: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let mut y_pow = y.powi(j as i32);
    let mut factorial = 1.0f64;
    for r in 1..=j {
        factorial *= r as f64;
    }
    let mut rising = 1.0f64;
    for r in 0..j {
        rising *= s + r as f64;
    }
    let j_fact = factorial;
    let mut sum = 0.0f64;
    let mut small = 0u8;
    let mut n = j;
    loop {
        let term = unsigned_stirling_first(n, j).to_f64() * y_pow / (factorial * rising);
        sum += term;
        if !term.is_finite() {
            break;
        }
        if term.abs() <= sum.abs() * 1e-17 {
            small += 1;
            if small >= 2 {
                break;
            }
        } else {
            small = 0;
        }
        if n > j + 400 {
            break;
        }
        y_pow *= y;
        factorial *= (n + 1) as f64;
        rising *= s + n as f64;
        n += 1;
    }
    sum * j_fact
}

/// FPT Laplace transform `g~(z) = Phi(z/tau, s, arg(y0)) / Phi(z/tau, s, arg(S))`
/// for `z > 0`. Diagnostic only.
pub fn laplace_transform(z: &Real, p: &CirParams, ctx: &PrecisionContext) -> Result<Real, CirError> {
    assert!(z.cmp0() == Some(Ordering::Greater), "laplace_transform requires z > 0");
    let prec = ctx.digits();
    let a = Float::with_val(prec, z / p.tau());
    let s = p.boundary_index();
    let num = kummer_phi(&a, &s, &p.series_argument(p.y0()), ctx)?;
    let den = kummer_phi(&a, &s, &p.series_argument(p.threshold()), ctx)?;
    Ok(num / den)
}
