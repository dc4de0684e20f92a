//! Truncated Laguerre-Gamma expansion of the FPT pdf and cdf.
//!
//! The pdf is approximated by `g_n(t) = f_(alpha,beta)(t) p_n(t)` where
//! `p_n(t) = sum_k h_{n,k} (-beta t)^k / k!` and the coefficient arrays stem
//! from the FPT moments. Coefficients are computed along two algebraically
//! equivalent routes (a direct binomial sum and a one-step recursion) and
//! cross-checked; on disagreement the working precision doubles and the build
//! restarts. Order selection follows the normalization / sign-condition
//! stopping rule evaluated in IEEE double arithmetic, which is what makes the
//! returned order finite: the normalization identity holds analytically at
//! every order, so its residual is a pure cancellation probe.

use std::cmp::Ordering;

use rug::ops::Pow;
use rug::{Float, Integer};
use thiserror::Error;

use crate::cir::{cumulants_to_moments, fpt_cumulants, CirError, CirParams, CumulantVector, MomentVector};
use crate::fastmath;
use crate::precision::{PrecisionContext, Real};
use crate::specfun::{lower_incomplete_gamma, rising_factorial, upper_incomplete_gamma, SpecFunError};

/// Default tolerance in the order-selection stopping rule.
pub const DEFAULT_EPS: f64 = 1e-3;

/// Default order budget.
pub const DEFAULT_N_MAX: usize = 60;

/// Relative agreement demanded between the two coefficient routes.
const ROUTE_AGREEMENT: f64 = 1e-10;

/// Hard ceiling for precision escalation, binary digits.
const MAX_DIGITS: u32 = 1 << 15;

#[derive(Debug, Error)]
pub enum ExpansionError {
    /// The requested reference parameters are outside the gamma family.
    #[error("invalid gamma reference: {what}")]
    InvalidReference { what: String },
    /// No order satisfies the sign conditions within the budget.
    #[error("no truncation order within the budget satisfies the sign conditions")]
    NoValidOrder,
    /// The moment vector is shorter than the requested order needs.
    #[error("insufficient moments: order {needed} needed, {got} available")]
    InsufficientMoments { needed: usize, got: usize },
    /// Precision escalation hit its ceiling without route agreement.
    #[error("coefficient routes disagree even at {digits} binary digits")]
    PrecisionExhausted { digits: u32 },
    #[error(transparent)]
    Cir(#[from] CirError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// Parameters of the reference gamma density
/// `f_(alpha,beta)(t) = beta (beta t)^alpha e^(-beta t) / Gamma(alpha+1)`,
/// plus the standardization scale the expansion lives on (`1` when
/// unstandardized).
#[derive(Clone, Debug)]
pub struct GammaReference {
    alpha: Real,
    beta: Real,
    sigma_t: Real,
}

impl GammaReference {
    pub fn new(alpha: Real, beta: Real, sigma_t: Real) -> Result<Self, ExpansionError> {
        if alpha <= -1.0 || alpha.is_nan() {
            return Err(ExpansionError::InvalidReference { what: format!("alpha = {} <= -1", alpha.to_f64()) });
        }
        if !(beta.cmp0() == Some(Ordering::Greater)) {
            return Err(ExpansionError::InvalidReference { what: "beta must be positive".into() });
        }
        if !(sigma_t.cmp0() == Some(Ordering::Greater)) {
            return Err(ExpansionError::InvalidReference { what: "sigma_t must be positive".into() });
        }
        Ok(Self { alpha, beta, sigma_t })
    }

    pub fn alpha(&self) -> &Real {
        &self.alpha
    }

    pub fn beta(&self) -> &Real {
        &self.beta
    }

    /// Standardization scale `sigma_T` (1 when unstandardized).
    pub fn sigma_t(&self) -> &Real {
        &self.sigma_t
    }

    fn prec(&self) -> u32 {
        self.alpha.prec().max(self.beta.prec())
    }

    fn at_precision(&self, prec: u32) -> Self {
        Self {
            alpha: Float::with_val(prec, &self.alpha),
            beta: Float::with_val(prec, &self.beta),
            sigma_t: Float::with_val(prec, &self.sigma_t),
        }
    }

    /// Reference density at `t` (zero outside the support `t > 0`).
    pub fn pdf(&self, t: &Real) -> Real {
        let prec = self.prec().max(t.prec());
        if !(t.cmp0() == Some(Ordering::Greater)) {
            return Float::with_val(prec, 0);
        }
        let bt = Float::with_val(prec, &self.beta * t);
        let ln_bt = Float::with_val(prec, bt.ln_ref());
        let ln_gamma = Float::with_val(prec, Float::with_val(prec, &self.alpha + 1u32).ln_gamma_ref());
        let ln_beta = Float::with_val(prec, self.beta.ln_ref());
        Float::with_val(prec, ln_beta + &self.alpha * ln_bt - bt - ln_gamma).exp()
    }

    /// Reference density in double precision.
    pub fn pdf_f64(&self, t: f64) -> f64 {
        fastmath::gamma_pdf(self.alpha.to_f64(), self.beta.to_f64(), t)
    }

    /// Reference cdf in double precision: regularized `P(alpha+1, beta t)`.
    pub fn cdf_f64(&self, t: f64) -> f64 {
        fastmath::gamma_cdf(self.alpha.to_f64(), self.beta.to_f64(), t)
    }
}

/// Moment-matching parameter choice `alpha = c1^2/c2 - 1`, `beta = c1/c2`.
///
/// With these the reference matches the first two moments of `T`, and the
/// first two nontrivial expansion coefficients vanish.
pub fn select_gamma_params(c1: &Real, c2: &Real) -> Result<GammaReference, ExpansionError> {
    if !(c1.cmp0() == Some(Ordering::Greater)) || !(c2.cmp0() == Some(Ordering::Greater)) {
        return Err(ExpansionError::InvalidReference { what: "cumulants c1, c2 must be positive".into() });
    }
    let prec = c1.prec().max(c2.prec());
    let alpha = Float::with_val(prec, c1.square_ref()) / c2 - 1u32;
    let beta = Float::with_val(prec, c1 / c2);
    GammaReference::new(alpha, beta, Float::with_val(prec, 1))
}

/// Rescales cumulants to the standardized variable `T~ = T / sigma_T` with
/// `sigma_T = sqrt(c_2)`: returns `c_k(T~) = c_k / sigma_T^k` (so the new
/// `c_2` is exactly one) together with `sigma_T`.
pub fn standardize(c: &CumulantVector) -> (CumulantVector, Real) {
    assert!(c.order() >= 2, "standardize needs at least two cumulants");
    assert!(c.get(2).cmp0() == Some(Ordering::Greater), "standardize requires c2 > 0");
    let prec = c.get(1).prec();
    let sigma_t = Float::with_val(prec, c.get(2).sqrt_ref());
    let mut scaled = Vec::with_capacity(c.order());
    let mut scale = Float::with_val(prec, 1);
    for k in 1..=c.order() {
        scale *= &sigma_t;
        scaled.push(Float::with_val(prec, c.get(k) / &scale));
    }
    (CumulantVector::from_values(scaled), sigma_t)
}

/// Binomial with real upper index:
/// `C(alpha + j, m) = (alpha+j)(alpha+j-1)...(alpha+j-m+1) / m!`,
/// computed as an exact finite product at working precision.
fn binomial_alpha(alpha: &Real, j: usize, m: usize, prec: u32) -> Real {
    let mut num = Float::with_val(prec, 1);
    for r in (j - m + 1)..=j {
        num *= Float::with_val(prec, alpha + r as u32);
    }
    num / Float::with_val(prec, Integer::from(Integer::factorial(m as u32)))
}

/// Direct-route coefficient
/// `B_k = sum_{j=0}^k C(k,j) (-beta)^j m_j / <alpha+1>_j` (with `B_0 = 1`).
pub fn coeff_b_direct(k: usize, moments: &MomentVector, reference: &GammaReference) -> Real {
    coeff_b_direct_scaled(k, moments, reference).0
}

/// Direct route plus the largest absolute summand, which callers use as the
/// cancellation scale when judging route agreement near zero.
fn coeff_b_direct_scaled(k: usize, moments: &MomentVector, reference: &GammaReference) -> (Real, Real) {
    let prec = reference.prec();
    let alpha_plus_1 = Float::with_val(prec, &reference.alpha + 1u32);
    let mut sum = Float::with_val(prec, 1); // j = 0 term
    let mut max_abs = Float::with_val(prec, 1);
    let mut neg_beta_pow = Float::with_val(prec, 1);
    let mut rising = Float::with_val(prec, 1);
    for j in 1..=k {
        neg_beta_pow *= Float::with_val(prec, -&reference.beta);
        rising *= Float::with_val(prec, &alpha_plus_1 + (j as u32 - 1));
        let binom = Float::with_val(prec, Integer::from(Integer::binomial_u(k as u32, j as u32)));
        let term = binom * Float::with_val(prec, &neg_beta_pow * moments.get(j)) / &rising;
        let abs = Float::with_val(prec, term.abs_ref());
        if abs > max_abs {
            max_abs = abs;
        }
        sum += term;
    }
    (sum, max_abs)
}

/// Recursive-route coefficient: given `B_0..B_n` (`b_prev`), returns
/// `B_{n+1} = sum_{j=1}^{n+1} C(n+1,j) (-1)^(j+1) B_{n+1-j}
///            + (-beta)^(n+1) m_{n+1} / <alpha+1>_{n+1}`.
pub fn coeff_b_recursive(b_prev: &[Real], moments: &MomentVector, reference: &GammaReference) -> Real {
    let prec = reference.prec();
    let n1 = b_prev.len(); // computing B_{n1}
    let mut sum = Float::with_val(prec, 0);
    for (j, b_prev_j) in b_prev.iter().rev().enumerate().map(|(i, b)| (i + 1, b)) {
        let binom = Float::with_val(prec, Integer::from(Integer::binomial_u(n1 as u32, j as u32)));
        let term = binom * b_prev_j;
        if j % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    let alpha_plus_1 = Float::with_val(prec, &reference.alpha + 1u32);
    let rising = rising_factorial(&alpha_plus_1, n1 as u32);
    let neg_beta_pow = Float::with_val(prec, -&reference.beta).pow(n1 as u32);
    sum + neg_beta_pow * moments.get(n1) / rising
}

/// One step of the `h`-array recursion: from `h_{n,.}` and `B_{n+1}` to
/// `h_{n+1,.}`, using `h_{n+1,i} = h_{n,i} + B_{n+1} C(alpha+n+1, n+1-i)` and
/// `h_{n+1,n+1} = B_{n+1}`.
pub fn coeff_h_update(h: &[Real], b_next: &Real, alpha: &Real) -> Vec<Real> {
    let prec = alpha.prec();
    let n1 = h.len(); // new top index
    let mut out = Vec::with_capacity(n1 + 1);
    // C(alpha+n+1, m) built down from m = n+1-i as i rises; iterate i upward
    // computing the product directly per entry (n is small, clarity wins).
    for (i, h_i) in h.iter().enumerate() {
        let binom = binomial_alpha(alpha, n1, n1 - i, prec);
        out.push(Float::with_val(prec, h_i + Float::with_val(prec, b_next * binom)));
    }
    out.push(b_next.clone());
    out
}

/// Full `h` array at order `n = b.len() - 1` from scratch:
/// `h_{n,k} = sum_{j=k}^n B_j C(alpha+j, j-k)`.
pub fn h_from_scratch(b: &[Real], alpha: &Real) -> Vec<Real> {
    let prec = alpha.prec();
    let n = b.len() - 1;
    (0..=n)
        .map(|k| {
            let mut sum = Float::with_val(prec, 0);
            for (j, b_j) in b.iter().enumerate().skip(k) {
                sum += Float::with_val(prec, b_j * binomial_alpha(alpha, j, j - k, prec));
            }
            sum
        })
        .collect()
}

/// Left side of the normalization identity
/// `h_{n,0} + sum_{i=1}^n (-1)^i / i! h_{n,i} (alpha+i)_i`, which equals one
/// analytically at every order.
pub fn normalization_lhs(h: &[Real], alpha: &Real) -> Real {
    let prec = alpha.prec();
    let alpha_plus_1 = Float::with_val(prec, alpha + 1u32);
    let mut sum = h[0].clone();
    let mut rising = Float::with_val(prec, 1);
    let mut fact = Float::with_val(prec, 1);
    for (i, h_i) in h.iter().enumerate().skip(1) {
        rising *= Float::with_val(prec, &alpha_plus_1 + (i as u32 - 1));
        fact *= i as u32;
        let term = Float::with_val(prec, h_i * &rising) / &fact;
        if i % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    sum
}

fn norm_lhs_f64(h: &[f64], alpha: f64) -> f64 {
    let mut sum = h[0];
    let mut rising = 1.0;
    let mut fact = 1.0;
    for (i, h_i) in h.iter().enumerate().skip(1) {
        rising *= alpha + i as f64;
        fact *= i as f64;
        let term = h_i * rising / fact;
        if i % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    sum
}

/// How many consecutive orders of non-decaying `|B_n|` end the climb: once
/// the coefficients stop shrinking, the computable tail error stops
/// improving and higher orders add oscillation without accuracy.
const COEFF_STALL_RUN: usize = 6;

/// Truncation-order selection in IEEE double arithmetic.
///
/// Grows `n` while the normalization residual stays within `eps` and the
/// coefficient magnitudes keep decaying, tracking the largest order whose
/// sign conditions (`h_{n,0} > 0` and `(-1)^n h_{n,n} > 0`) hold. Returns
/// `(best_order, capped)` where `capped` reports that the order budget, not
/// a stopping condition, ended the climb.
fn select_order(moments: &[f64], alpha: f64, beta: f64, eps: f64, cap: usize) -> (usize, bool) {
    let mut b = vec![1.0f64];
    let mut h = vec![1.0f64];
    let mut best = 0usize;
    let mut capped = true;
    let mut n = 0usize;
    let mut rise_run = 0usize;
    while n < cap {
        // recursive route, double precision
        let n1 = n + 1;
        let mut b_next = 0.0;
        let mut binom = 1.0f64; // C(n1, j)
        for j in 1..=n1 {
            binom *= (n1 - j + 1) as f64 / j as f64;
            let term = binom * b[n1 - j];
            b_next += if j % 2 == 1 { term } else { -term };
        }
        let mut rising = 1.0;
        for r in 0..n1 {
            rising *= alpha + 1.0 + r as f64;
        }
        b_next += (-beta).powi(n1 as i32) * moments[n1 - 1] / rising;
        // h update
        let mut new_h = Vec::with_capacity(n1 + 1);
        for (i, h_i) in h.iter().enumerate() {
            let mut c = 1.0f64; // C(alpha+n1, n1-i)
            for r in (i + 1)..=n1 {
                c *= alpha + r as f64;
            }
            for m in 1..=(n1 - i) {
                c /= m as f64;
            }
            new_h.push(h_i + b_next * c);
        }
        new_h.push(b_next);
        b.push(b_next);
        h = new_h;
        n = n1;
        let resid = (norm_lhs_f64(&h, alpha) - 1.0).abs();
        if !resid.is_finite() || resid > eps {
            capped = false;
            break;
        }
        let sign_ok = h[0] > 0.0 && (if n.is_multiple_of(2) { b[n] > 0.0 } else { b[n] < 0.0 });
        if sign_ok {
            best = n;
        }
        // coefficient-decay stall (tracked from n = 3; B_1 and B_2 vanish by
        // the moment-matched parameter choice, so they carry no signal)
        if n >= 4 {
            if b[n].abs() >= b[n - 1].abs() {
                rise_run += 1;
            } else {
                rise_run = 0;
            }
            if rise_run >= COEFF_STALL_RUN {
                capped = false;
                break;
            }
        }
    }
    (best, capped)
}

/// The built expansion: reference parameters, coefficient arrays, and the
/// moments that produced them. Immutable and safe to evaluate concurrently.
#[derive(Clone, Debug)]
pub struct LaguerreGammaExpansion {
    reference: GammaReference,
    b: Vec<Real>,
    h: Vec<Real>,
    moments: MomentVector,
    gamma_alpha1: Real,
    ctx: PrecisionContext,
    capped: bool,
    // double-precision caches for grid evaluation
    h_f64: Vec<f64>,
    cdf_weights_f64: Vec<f64>,
    alpha_f64: f64,
    beta_f64: f64,
}

impl LaguerreGammaExpansion {
    fn assemble(
        reference: GammaReference,
        b: Vec<Real>,
        moments: MomentVector,
        ctx: PrecisionContext,
        capped: bool,
    ) -> Self {
        let prec = reference.prec();
        let h = h_from_scratch(&b, &reference.alpha);
        let gamma_alpha1 = Float::with_val(prec, Float::with_val(prec, &reference.alpha + 1u32).gamma_ref());
        let alpha_f64 = reference.alpha.to_f64();
        let beta_f64 = reference.beta.to_f64();
        let h_f64: Vec<f64> = h.iter().map(Float::to_f64).collect();
        // w_k = (-1)^k h_k <alpha+1>_k / k!, the weights of the regularized
        // lower incomplete gammas in the cdf
        let mut cdf_weights_f64 = Vec::with_capacity(h.len());
        let mut rising = 1.0f64;
        let mut fact = 1.0f64;
        for (k, h_k) in h_f64.iter().enumerate() {
            if k > 0 {
                rising *= alpha_f64 + k as f64;
                fact *= k as f64;
            }
            let w = h_k * rising / fact;
            cdf_weights_f64.push(if k % 2 == 0 { w } else { -w });
        }
        Self {
            reference,
            b,
            h,
            moments,
            gamma_alpha1,
            ctx,
            capped,
            h_f64,
            cdf_weights_f64,
            alpha_f64,
            beta_f64,
        }
    }

    pub fn reference(&self) -> &GammaReference {
        &self.reference
    }

    /// Truncation order `n`.
    pub fn order(&self) -> usize {
        self.h.len() - 1
    }

    /// Coefficients `B_0..B_n`.
    pub fn coefficients_b(&self) -> &[Real] {
        &self.b
    }

    /// Coefficients `h_{n,0}..h_{n,n}`.
    pub fn coefficients_h(&self) -> &[Real] {
        &self.h
    }

    pub fn moments(&self) -> &MomentVector {
        &self.moments
    }

    /// True when order selection exhausted its budget while the
    /// normalization residual was still healthy (the returned order is the
    /// best seen, not a converged stop).
    pub fn was_capped(&self) -> bool {
        self.capped
    }

    /// Binary digits of the final (possibly escalated) coefficient build.
    pub fn digits_used(&self) -> u32 {
        self.reference.prec()
    }

    pub fn precision_context(&self) -> &PrecisionContext {
        &self.ctx
    }

    /// Ratio polynomial `p_n(t) = sum_k h_{n,k} (-beta t)^k / k!` by nested
    /// (Horner-style) products.
    pub fn p_poly(&self, t: &Real) -> Real {
        let prec = self.reference.prec();
        let n = self.order();
        let u = Float::with_val(prec, -Float::with_val(prec, &self.reference.beta * t));
        let mut s = self.h[n].clone();
        for k in (0..n).rev() {
            s = &self.h[k] + s * &u / (k as u32 + 1);
        }
        s
    }

    /// Approximated pdf `g_n(t) = f_(alpha,beta)(t) p_n(t)`. May be negative;
    /// see the correction layer.
    pub fn pdf(&self, t: &Real) -> Real {
        self.reference.pdf(t) * self.p_poly(t)
    }

    /// Analytic derivative `g_n'(t) = f(t) [ (alpha/t - beta) p_n(t) + p_n'(t) ]`.
    pub fn pdf_derivative(&self, t: &Real) -> Real {
        let prec = self.reference.prec();
        let n = self.order();
        let u = Float::with_val(prec, -Float::with_val(prec, &self.reference.beta * t));
        // p'(t) = -beta sum_{k>=1} h_k u^(k-1) / (k-1)!
        let mut s = if n >= 1 { self.h[n].clone() } else { Float::with_val(prec, 0) };
        for k in (1..n).rev() {
            s = &self.h[k] + s * &u / (k as u32);
        }
        let p_prime = -Float::with_val(prec, &self.reference.beta * s);
        let ratio = Float::with_val(prec, &self.reference.alpha / t) - &self.reference.beta;
        self.reference.pdf(t) * (ratio * self.p_poly(t) + p_prime)
    }

    /// Approximated cdf
    /// `G_n(t) = (1/Gamma(alpha+1)) sum_k (-1)^k/k! h_{n,k} gamma(alpha+k+1, beta t)`.
    pub fn cdf(&self, t: &Real) -> Result<Real, ExpansionError> {
        let prec = self.reference.prec();
        if !(t.cmp0() == Some(Ordering::Greater)) {
            return Ok(Float::with_val(prec, 0));
        }
        let bt = Float::with_val(prec, &self.reference.beta * t);
        let mut sum = Float::with_val(prec, 0);
        let mut fact = Float::with_val(prec, 1);
        for (k, h_k) in self.h.iter().enumerate() {
            if k > 0 {
                fact *= k as u32;
            }
            let a = Float::with_val(prec, &self.reference.alpha + (k as u32 + 1));
            let lower = lower_incomplete_gamma(&a, &bt, &self.ctx)?;
            let term = Float::with_val(prec, h_k * lower) / &fact;
            if k % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
        }
        Ok(sum / &self.gamma_alpha1)
    }

    /// Increment `G_n(t+dt) - G_n(t)` through upper-incomplete-gamma
    /// differences, which cancel better than subtracting two cdf values.
    pub fn cdf_increment(&self, t: &Real, dt: &Real) -> Result<Real, ExpansionError> {
        let prec = self.reference.prec();
        let bt = Float::with_val(prec, &self.reference.beta * t);
        let bt2 = Float::with_val(prec, &self.reference.beta * Float::with_val(prec, t + dt));
        let mut sum = Float::with_val(prec, 0);
        let mut fact = Float::with_val(prec, 1);
        for (k, h_k) in self.h.iter().enumerate() {
            if k > 0 {
                fact *= k as u32;
            }
            let a = Float::with_val(prec, &self.reference.alpha + (k as u32 + 1));
            let hi = upper_incomplete_gamma(&a, &bt, &self.ctx)?;
            let lo = upper_incomplete_gamma(&a, &bt2, &self.ctx)?;
            let term = Float::with_val(prec, h_k * Float::with_val(prec, hi - lo)) / &fact;
            if k % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
        }
        Ok(sum / &self.gamma_alpha1)
    }

    /// Residual `|LHS - 1|` of the normalization identity at this order.
    pub fn normalization_residual(&self) -> Real {
        let one = Float::with_val(self.reference.prec(), 1);
        (normalization_lhs(&self.h, &self.reference.alpha) - one).abs()
    }

    /// Double-precision `p_n(t)`.
    pub fn p_poly_f64(&self, t: f64) -> f64 {
        let u = -self.beta_f64 * t;
        let n = self.order();
        let mut s = self.h_f64[n];
        for k in (0..n).rev() {
            s = self.h_f64[k] + s * u / (k + 1) as f64;
        }
        s
    }

    /// Double-precision pdf for grid work.
    pub fn pdf_f64(&self, t: f64) -> f64 {
        fastmath::gamma_pdf(self.alpha_f64, self.beta_f64, t) * self.p_poly_f64(t)
    }

    /// Double-precision derivative of the pdf.
    pub fn pdf_derivative_f64(&self, t: f64) -> f64 {
        let u = -self.beta_f64 * t;
        let n = self.order();
        let mut s = if n >= 1 { self.h_f64[n] } else { 0.0 };
        for k in (1..n).rev() {
            s = self.h_f64[k] + s * u / k as f64;
        }
        let p_prime = -self.beta_f64 * s;
        let f = fastmath::gamma_pdf(self.alpha_f64, self.beta_f64, t);
        f * ((self.alpha_f64 / t - self.beta_f64) * self.p_poly_f64(t) + p_prime)
    }

    /// Double-precision cdf for grid work.
    pub fn cdf_f64(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let bt = self.beta_f64 * t;
        let mut sum = 0.0;
        for (k, w) in self.cdf_weights_f64.iter().enumerate() {
            sum += w * fastmath::gamma_p(self.alpha_f64 + k as f64 + 1.0, bt);
        }
        sum
    }

    /// Double-precision increment `G_n(t+dt) - G_n(t)` through
    /// upper-incomplete-gamma differences.
    pub fn cdf_increment_f64(&self, t: f64, dt: f64) -> f64 {
        let bt = self.beta_f64 * t;
        let bt2 = self.beta_f64 * (t + dt);
        let mut sum = 0.0;
        for (k, w) in self.cdf_weights_f64.iter().enumerate() {
            let a = self.alpha_f64 + k as f64 + 1.0;
            let (hi, lo) = if bt <= 0.0 {
                (1.0, fastmath::gamma_q(a, bt2))
            } else {
                (fastmath::gamma_q(a, bt), fastmath::gamma_q(a, bt2))
            };
            sum += w * (hi - lo);
        }
        sum
    }

    /// Rebuilds evaluation machinery from a stored reference and `B`
    /// coefficients (wire-format deserialization). The moment metadata is
    /// empty; evaluation does not need it.
    pub(crate) fn from_parts(reference: GammaReference, b: Vec<Real>, ctx: PrecisionContext) -> Self {
        Self::assemble(reference, b, MomentVector::from_values(Vec::new()), ctx, false)
    }

    /// Expansion truncated to a lower order `n` (coefficients reused, `h`
    /// rebuilt).
    pub fn with_order(&self, n: usize) -> Self {
        assert!(n <= self.order());
        Self::assemble(
            self.reference.clone(),
            self.b[..=n].to_vec(),
            self.moments.clone(),
            self.ctx.clone(),
            self.capped,
        )
    }
}

/// Builds the expansion for the given moments and reference.
///
/// Order selection runs in double arithmetic with tolerance `eps` and budget
/// `n_max` (capped by the available moments); the returned coefficient arrays
/// are then recomputed at `ctx` precision with the two coefficient routes
/// cross-checked, doubling the precision on disagreement. The returned order
/// additionally satisfies the sign conditions `h_{n,0} > 0`,
/// `(-1)^n h_{n,n} > 0` at final precision.
pub fn build_expansion(
    moments: &MomentVector,
    reference: &GammaReference,
    eps: f64,
    n_max: usize,
    ctx: &PrecisionContext,
) -> Result<LaguerreGammaExpansion, ExpansionError> {
    if moments.order() < 2 {
        return Err(ExpansionError::InsufficientMoments { needed: 2, got: moments.order() });
    }
    let cap = n_max.min(moments.order() - 1);
    let mf: Vec<f64> = moments.values().iter().map(Float::to_f64).collect();
    let (n_sel, capped) = select_order(&mf, reference.alpha.to_f64(), reference.beta.to_f64(), eps, cap);
    finalize_with_signs(n_sel, moments, reference, ctx, capped && n_sel == cap)
}

/// Recomputes coefficients at context precision and backs the order off to
/// the nearest one whose sign conditions hold there (double arithmetic can
/// mistake a sign near zero).
fn finalize_with_signs(
    n_sel: usize,
    moments: &MomentVector,
    reference: &GammaReference,
    ctx: &PrecisionContext,
    capped: bool,
) -> Result<LaguerreGammaExpansion, ExpansionError> {
    let (b, work_ctx) = checked_coefficients(n_sel, moments, reference, ctx)?;
    let mut n_final = n_sel;
    loop {
        let h = h_from_scratch(&b[..=n_final], &Float::with_val(work_ctx.digits(), &reference.alpha));
        let top_ok = match b[n_final].cmp0() {
            Some(Ordering::Greater) => n_final.is_multiple_of(2),
            Some(Ordering::Less) => !n_final.is_multiple_of(2),
            _ => n_final == 0,
        };
        if h[0].cmp0() == Some(Ordering::Greater) && (top_ok || n_final == 0) {
            break;
        }
        if n_final == 0 {
            return Err(ExpansionError::NoValidOrder);
        }
        n_final -= 1;
    }
    let prec = work_ctx.digits();
    let reference = reference.at_precision(prec);
    let moments_hp = lift_moments(moments, prec);
    Ok(LaguerreGammaExpansion::assemble(
        reference,
        b[..=n_final].to_vec(),
        moments_hp,
        work_ctx,
        capped,
    ))
}

/// Builds at a forced order with no stopping rule (the high-precision
/// regime): dual-route checking and precision escalation still apply, sign
/// conditions are not enforced.
pub fn build_at_order(
    moments: &MomentVector,
    reference: &GammaReference,
    n: usize,
    ctx: &PrecisionContext,
) -> Result<LaguerreGammaExpansion, ExpansionError> {
    if moments.order() < n.max(1) {
        return Err(ExpansionError::InsufficientMoments { needed: n, got: moments.order() });
    }
    let (b, work_ctx) = checked_coefficients(n, moments, reference, ctx)?;
    let prec = work_ctx.digits();
    let reference = reference.at_precision(prec);
    let moments_hp = lift_moments(moments, prec);
    Ok(LaguerreGammaExpansion::assemble(reference, b, moments_hp, work_ctx, false))
}

fn lift_moments(moments: &MomentVector, prec: u32) -> MomentVector {
    MomentVector::from_values(moments.values().iter().map(|m| Float::with_val(prec, m)).collect())
}

fn lift_cumulants(c: &CumulantVector, prec: u32) -> CumulantVector {
    CumulantVector::from_values(c.values().iter().map(|v| Float::with_val(prec, v)).collect())
}

/// Computes `B_0..B_n` by both routes at escalating precision until they
/// agree to [`ROUTE_AGREEMENT`] relative (with an absolute floor scaled by
/// the cancellation magnitude of the direct sum).
fn checked_coefficients(
    n: usize,
    moments: &MomentVector,
    reference: &GammaReference,
    ctx: &PrecisionContext,
) -> Result<(Vec<Real>, PrecisionContext), ExpansionError> {
    let mut work = ctx.clone();
    'escalate: loop {
        let prec = work.digits();
        let reference_hp = reference.at_precision(prec);
        let moments_hp = lift_moments(moments, prec);
        let mut b: Vec<Real> = vec![Float::with_val(prec, 1)];
        for k in 1..=n {
            let (direct, term_scale) = coeff_b_direct_scaled(k, &moments_hp, &reference_hp);
            let recursive = coeff_b_recursive(&b, &moments_hp, &reference_hp);
            let diff = Float::with_val(prec, &direct - &recursive).abs();
            let mag = Float::with_val(prec, direct.abs_ref()).max(&Float::with_val(prec, recursive.abs_ref()));
            // noise floor: both routes cancelled down to rounding of the
            // largest summand
            let floor = term_scale * Float::with_val(prec, Float::i_exp(1, 40 - prec as i32));
            let rel_ok = diff <= Float::with_val(prec, &mag * ROUTE_AGREEMENT);
            if !(rel_ok || diff <= floor) {
                if work.digits() * 2 > MAX_DIGITS {
                    return Err(ExpansionError::PrecisionExhausted { digits: work.digits() });
                }
                work = work.doubled();
                continue 'escalate;
            }
            b.push(recursive);
        }
        return Ok((b, work));
    }
}

/// Fourier coefficient `a_k = E[Q_k^(alpha)(beta T)]`, computed from the
/// moment representation of `Q_k` — an independent route from the `B_k`
/// recursion, related by `a_k = (-1)^k B_k sqrt(<alpha+1>_k / k!)`.
pub fn fourier_coefficient_a(k: usize, moments: &MomentVector, reference: &GammaReference) -> Real {
    let prec = reference.prec();
    let alpha = &reference.alpha;
    // sum_i C(alpha+k, k-i) (-beta)^i m_i / i!
    let mut sum = Float::with_val(prec, 0);
    let mut neg_beta_pow = Float::with_val(prec, 1);
    let mut fact = Float::with_val(prec, 1);
    for i in 0..=k {
        if i > 0 {
            neg_beta_pow *= Float::with_val(prec, -&reference.beta);
            fact *= i as u32;
        }
        let m_i = if i == 0 { Float::with_val(prec, 1) } else { Float::with_val(prec, moments.get(i)) };
        let term = binomial_alpha(alpha, k, k - i, prec) * Float::with_val(prec, &neg_beta_pow * m_i) / &fact;
        sum += term;
    }
    let alpha_plus_1 = Float::with_val(prec, alpha + 1u32);
    let norm = Float::with_val(
        prec,
        Float::with_val(prec, Integer::from(Integer::factorial(k as u32))) / rising_factorial(&alpha_plus_1, k as u32),
    )
    .sqrt();
    let signed = if k.is_multiple_of(2) { sum } else { -sum };
    signed * norm
}

/// Computable lower bound on the `L^2` tail error:
/// `sqrt(sum_{k=n+1}^{k_max} a_k^2)`.
pub fn tail_error_estimate(moments: &MomentVector, reference: &GammaReference, n: usize, k_max: usize) -> Real {
    assert!(k_max > n, "tail_error_estimate requires k_max > n");
    let prec = reference.prec();
    let mut sum = Float::with_val(prec, 0);
    for k in (n + 1)..=k_max {
        let a = fourier_coefficient_a(k, moments, reference);
        sum += Float::with_val(prec, a.square_ref());
    }
    sum.sqrt()
}

/// A standardized expansion pipeline result: the expansion of
/// `T~ = T / sigma_T` together with the raw cumulants it came from.
#[derive(Clone, Debug)]
pub struct StandardizedExpansion {
    pub expansion: LaguerreGammaExpansion,
    pub cumulants: CumulantVector,
    pub sigma_t: Real,
}

/// End-to-end build from model parameters: cumulants, standardization,
/// moment-matched reference, stopping rule.
///
/// The stopping rule runs on an all-double moment pipeline (Stirling series,
/// partition polynomials and recursions in IEEE doubles), mirroring the
/// arithmetic the rule was designed to probe: the normalization identity
/// holds analytically at every order, so its residual only ever reflects
/// cancellation in the arithmetic that feeds it. The returned coefficients
/// are then rebuilt at context precision for the selected order.
pub fn build_standardized(
    params: &CirParams,
    eps: f64,
    n_max: usize,
    ctx: &PrecisionContext,
) -> Result<StandardizedExpansion, ExpansionError> {
    if params.is_degenerate() {
        return Err(CirError::DegenerateStart.into());
    }
    // selection on the double pipeline, growing the order budget on demand
    let mut k64 = (n_max + 1).min(24);
    let (n_sel, capped) = loop {
        let cum64 = crate::cir::fpt_cumulants_f64(params, k64 as u32);
        let sigma = cum64[1].sqrt();
        let mut scale = 1.0f64;
        let std64: Vec<f64> = cum64
            .iter()
            .map(|c| {
                scale *= sigma;
                c / scale
            })
            .collect();
        let alpha = std64[0] * std64[0] / std64[1] - 1.0;
        let beta = std64[0] / std64[1];
        let mom64 = moments_from_cumulants_f64(&std64);
        let cap = n_max.min(mom64.len() - 1);
        let (n_sel, capped) = select_order(&mom64, alpha, beta, eps, cap);
        if capped && cap < n_max {
            k64 = (k64 * 2).min(n_max + 1);
            continue;
        }
        break (n_sel, capped);
    };
    // exact build at the selected order
    let big_k = (n_sel as u32 + 1).max(2);
    let cumulants = fpt_cumulants(params, big_k, ctx)?;
    let (std_cum, sigma_t) = standardize(&cumulants);
    let reference = select_gamma_params(std_cum.get(1), std_cum.get(2))?;
    let moments = cumulants_to_moments(&std_cum);
    let expansion = finalize_with_signs(n_sel, &moments, &reference, ctx, capped)?;
    let prec = expansion.digits_used();
    let expansion = LaguerreGammaExpansion {
        reference: GammaReference {
            alpha: expansion.reference.alpha.clone(),
            beta: expansion.reference.beta.clone(),
            sigma_t: Float::with_val(prec, &sigma_t),
        },
        ..expansion
    };
    Ok(StandardizedExpansion { expansion, cumulants: lift_cumulants(&cumulants, prec), sigma_t })
}

fn moments_from_cumulants_f64(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut m = Vec::with_capacity(n);
    for k in 1..=n {
        let mut acc = c[k - 1];
        let mut binom = 1.0f64; // C(k-1, i-1)
        for i in 1..k {
            // C(k-1, i-1): update from i-1 to i
            if i > 1 {
                binom *= (k - i + 1) as f64 / (i - 1) as f64;
            }
            acc += binom * c[i - 1] * m[k - i - 1];
        }
        m.push(acc);
    }
    m
}
