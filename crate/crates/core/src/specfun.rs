//! Extended-precision special functions underlying the cumulant and
//! expansion layers: rising factorials, Kummer's confluent hypergeometric
//! function, incomplete gamma functions, generalized Laguerre polynomials and
//! unsigned Stirling numbers of the first kind.

use std::cmp::Ordering;
use std::sync::RwLock;

use rug::{Float, Integer};
use thiserror::Error;

use crate::precision::{PrecisionContext, Real, SeriesSum};

/// Failures of the iterative special-function evaluators.
#[derive(Debug, Error)]
pub enum SpecFunError {
    /// A series or continued fraction hit the term cap before meeting the
    /// stopping tolerance.
    #[error("{what} did not converge within {max_terms} terms")]
    NonConvergent { what: &'static str, max_terms: usize },
    /// Kummer's function is undefined when `b` is zero or a negative integer.
    #[error("kummer_phi undefined for b = {b}: zero or negative integer")]
    InvalidB { b: f64 },
}

/// Rising factorial `<x>_n = x (x+1) ... (x+n-1)`, with `<x>_0 = 1`.
pub fn rising_factorial(x: &Real, n: u32) -> Real {
    let prec = x.prec();
    let mut acc = Float::with_val(prec, 1);
    for i in 0..n {
        acc *= Float::with_val(prec, x + i);
    }
    acc
}

/// Kummer's confluent hypergeometric function of the first kind,
/// `Phi(a, b, z) = sum_n <a>_n z^n / (<b>_n n!)`.
///
/// Terms are accumulated until two consecutive relative increments drop below
/// `ctx.series_tol`. Negative arguments are routed through Kummer's
/// transformation `Phi(a, b, z) = e^z Phi(b - a, b, -z)` so the summed series
/// has nonnegative argument.
pub fn kummer_phi(a: &Real, b: &Real, z: &Real, ctx: &PrecisionContext) -> Result<Real, SpecFunError> {
    if is_zero_or_negative_integer(b) {
        return Err(SpecFunError::InvalidB { b: b.to_f64() });
    }
    let prec = ctx.digits();
    if z.cmp0() == Some(Ordering::Less) {
        let b_minus_a = Float::with_val(prec, b - a);
        let neg_z = Float::with_val(prec, -z);
        let phi = kummer_series(&b_minus_a, b, &neg_z, ctx)?;
        let ez = Float::with_val(prec, z.exp_ref());
        return Ok(ez * phi);
    }
    kummer_series(a, b, z, ctx)
}

fn kummer_series(a: &Real, b: &Real, z: &Real, ctx: &PrecisionContext) -> Result<Real, SpecFunError> {
    let prec = ctx.digits();
    let mut term = Float::with_val(prec, 1);
    let mut acc = SeriesSum::new(Float::with_val(prec, 0), ctx.series_tol());
    for n in 0..ctx.max_terms() {
        if acc.push(&term) {
            return Ok(acc.value());
        }
        let n = n as u32;
        // term_{n+1} = term_n * (a+n) z / ((b+n)(n+1))
        term *= Float::with_val(prec, a + n);
        term *= z;
        term /= Float::with_val(prec, b + n);
        term /= n + 1;
    }
    Err(SpecFunError::NonConvergent { what: "kummer_phi", max_terms: ctx.max_terms() })
}

fn is_zero_or_negative_integer(b: &Real) -> bool {
    match b.cmp0() {
        Some(Ordering::Equal) => true,
        Some(Ordering::Less) => b.is_integer(),
        _ => false,
    }
}

/// Upper incomplete gamma function `Gamma(a, t)` for `a > 0`, `t >= 0`.
///
/// Series for `t < a + 1` (through the lower function and the complement),
/// Lentz continued fraction otherwise; the tie at `t = a + 1` goes to the
/// series.
pub fn upper_incomplete_gamma(a: &Real, t: &Real, ctx: &PrecisionContext) -> Result<Real, SpecFunError> {
    let prec = ctx.digits();
    assert!(a.cmp0() == Some(Ordering::Greater), "upper_incomplete_gamma requires a > 0");
    assert!(t.cmp0() != Some(Ordering::Less), "upper_incomplete_gamma requires t >= 0");
    let complete = Float::with_val(prec, a.gamma_ref());
    if t.is_zero() {
        return Ok(complete);
    }
    let a_plus_1 = Float::with_val(prec, a + 1u32);
    if *t <= a_plus_1 {
        Ok(complete - lower_gamma_series(a, t, ctx)?)
    } else {
        upper_gamma_cf(a, t, ctx)
    }
}

/// Lower incomplete gamma function `gamma(a, t) = Gamma(a) - Gamma(a, t)`.
pub fn lower_incomplete_gamma(a: &Real, t: &Real, ctx: &PrecisionContext) -> Result<Real, SpecFunError> {
    let prec = ctx.digits();
    assert!(a.cmp0() == Some(Ordering::Greater), "lower_incomplete_gamma requires a > 0");
    assert!(t.cmp0() != Some(Ordering::Less), "lower_incomplete_gamma requires t >= 0");
    if t.is_zero() {
        return Ok(Float::with_val(prec, 0));
    }
    let a_plus_1 = Float::with_val(prec, a + 1u32);
    if *t <= a_plus_1 {
        lower_gamma_series(a, t, ctx)
    } else {
        let complete = Float::with_val(prec, a.gamma_ref());
        Ok(complete - upper_gamma_cf(a, t, ctx)?)
    }
}

/// `gamma(a, t) = t^a e^{-t} sum_n t^n / (a (a+1) ... (a+n))`; all terms are
/// positive, so there is no cancellation.
fn lower_gamma_series(a: &Real, t: &Real, ctx: &PrecisionContext) -> Result<Real, SpecFunError> {
    let prec = ctx.digits();
    let mut term = Float::with_val(prec, 1) / a;
    let mut acc = SeriesSum::new(Float::with_val(prec, 0), ctx.series_tol());
    let mut converged = false;
    for n in 0..ctx.max_terms() {
        if acc.push(&term) {
            converged = true;
            break;
        }
        term *= t;
        term /= Float::with_val(prec, a + (n as u32 + 1));
    }
    if !converged {
        return Err(SpecFunError::NonConvergent { what: "lower_incomplete_gamma series", max_terms: ctx.max_terms() });
    }
    Ok(acc.value() * prefactor(a, t, prec))
}

/// Modified Lentz continued fraction for `Gamma(a, t)`, `t > a + 1`.
fn upper_gamma_cf(a: &Real, t: &Real, ctx: &PrecisionContext) -> Result<Real, SpecFunError> {
    let prec = ctx.digits();
    let tiny = Float::with_val(prec, Float::i_exp(1, -(prec as i32 * 4)));
    let tol = ctx.series_tol();
    let mut b = Float::with_val(prec, t + 1u32) - a;
    let mut c = Float::with_val(prec, tiny.recip_ref());
    let mut d = Float::with_val(prec, b.recip_ref());
    let mut h = d.clone();
    for i in 1..ctx.max_terms() {
        // a_i = -i (i - a)
        let an = -Float::with_val(prec, Float::with_val(prec, i) - a) * i as u32;
        b += 2u32;
        d = Float::with_val(prec, &an * &d) + &b;
        if d.clone().abs() < tiny {
            d = tiny.clone();
        }
        c = Float::with_val(prec, &an / &c) + &b;
        if c.clone().abs() < tiny {
            c = tiny.clone();
        }
        d = d.recip();
        let delta = Float::with_val(prec, &d * &c);
        h *= &delta;
        let dev = Float::with_val(prec, &delta - 1u32).abs();
        if dev < tol {
            return Ok(h * prefactor(a, t, prec));
        }
    }
    Err(SpecFunError::NonConvergent { what: "upper_incomplete_gamma continued fraction", max_terms: ctx.max_terms() })
}

/// `t^a e^{-t}` evaluated in log space.
fn prefactor(a: &Real, t: &Real, prec: u32) -> Real {
    let ln_t = Float::with_val(prec, t.ln_ref());
    Float::with_val(prec, a * ln_t - t).exp()
}

/// Generalized Laguerre polynomial `L_k^(alpha)(t)` via the three-term
/// recurrence `(k+1) L_{k+1} = (2k+1+alpha-t) L_k - (k+alpha) L_{k-1}`.
pub fn laguerre(k: u32, alpha: &Real, t: &Real) -> Real {
    let prec = alpha.prec().max(t.prec());
    if k == 0 {
        return Float::with_val(prec, 1);
    }
    let mut lm1 = Float::with_val(prec, 1);
    let mut l = Float::with_val(prec, alpha + 1u32) - t;
    for i in 1..k {
        let coeff = Float::with_val(prec, alpha + (2 * i + 1)) - t;
        let next = (coeff * &l - Float::with_val(prec, alpha + i) * &lm1) / (i + 1);
        lm1 = l;
        l = Float::with_val(prec, next);
    }
    l
}

/// Orthonormal Laguerre sequence
/// `Q_k^(alpha)(t) = (-1)^k sqrt(k! / <alpha+1>_k) L_k^(alpha)(t)`,
/// orthonormal in `L^2` of the gamma reference with parameters `(alpha, beta)`
/// when evaluated at `beta t`.
pub fn orthonormal_q(k: u32, alpha: &Real, t: &Real) -> Real {
    let prec = alpha.prec().max(t.prec());
    let alpha_plus_1 = Float::with_val(prec, alpha + 1u32);
    let rising = rising_factorial(&alpha_plus_1, k);
    let fact = Float::with_val(prec, Integer::from(Integer::factorial(k)));
    let norm = Float::with_val(prec, fact / rising).sqrt();
    let sign = if k.is_multiple_of(2) { 1 } else { -1 };
    sign * norm * laguerre(k, alpha, t)
}

static STIRLING_ROWS: RwLock<Vec<Vec<Integer>>> = RwLock::new(Vec::new());

/// Unsigned Stirling number of the first kind `[n, j]`, computed exactly via
/// `[n+1, j] = n [n, j] + [n, j-1]` and memoized.
///
/// Returns zero for `j > n`. The memo table supports concurrent reads;
/// extensions are serialized behind a write lock.
pub fn unsigned_stirling_first(n: u32, j: u32) -> Integer {
    if j > n {
        return Integer::new();
    }
    {
        let rows = STIRLING_ROWS.read().unwrap();
        if let Some(row) = rows.get(n as usize) {
            return row[j as usize].clone();
        }
    }
    let mut rows = STIRLING_ROWS.write().unwrap();
    if rows.is_empty() {
        rows.push(vec![Integer::from(1)]);
    }
    while rows.len() <= n as usize {
        let m = rows.len(); // building row m from row m-1
        let prev = &rows[m - 1];
        let mut row = Vec::with_capacity(m + 1);
        row.push(Integer::new()); // [m, 0] = 0 for m >= 1
        for jj in 1..=m {
            let from_prev = if jj < m { Integer::from(&prev[jj] * (m as u32 - 1)) } else { Integer::new() };
            let carry = prev[jj - 1].clone();
            row.push(from_prev + carry);
        }
        rows.push(row);
    }
    rows[n as usize][j as usize].clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PrecisionContext {
        PrecisionContext::default()
    }

    #[test]
    fn rising_factorial_basics() {
        let c = ctx();
        assert_eq!(rising_factorial(&c.real(3), 0), 1);
        // <1>_4 = 4!
        assert_eq!(rising_factorial(&c.real(1), 4), 24);
        // direct product oracle
        let v = rising_factorial(&c.real(2.5), 3);
        assert!((v.to_f64() - 39.375).abs() < 1e-12);
    }

    #[test]
    fn kummer_trivial_values() {
        let c = ctx();
        let one = kummer_phi(&c.real(2), &c.real(5), &c.real(0), &c).unwrap();
        assert_eq!(one, 1);
        // Phi(1,1,z) = e^z; the series stops at series_tol (1e-30) relative
        let e = kummer_phi(&c.real(1), &c.real(1), &c.real(1), &c).unwrap();
        let diff = (e - c.real(1).exp()).abs();
        assert!(diff < 1e-28);
        // Phi(1,2,z) = (e^z - 1)/z
        let v = kummer_phi(&c.real(1), &c.real(2), &c.real(2), &c).unwrap();
        let expect = (c.real(2).exp() - c.real(1)) / c.real(2);
        assert!((v - expect).abs() < 1e-28);
    }

    #[test]
    fn kummer_rejects_bad_b() {
        let c = ctx();
        assert!(matches!(
            kummer_phi(&c.real(1), &c.real(0), &c.real(1), &c),
            Err(SpecFunError::InvalidB { .. })
        ));
        assert!(matches!(
            kummer_phi(&c.real(1), &c.real(-3), &c.real(1), &c),
            Err(SpecFunError::InvalidB { .. })
        ));
        // negative but non-integer b is fine
        assert!(kummer_phi(&c.real(1), &c.real(-2.5), &c.real(1), &c).is_ok());
    }

    #[test]
    fn kummer_negative_argument_transform() {
        let c = ctx();
        // Phi(1,1,-z) = e^{-z}
        let v = kummer_phi(&c.real(1), &c.real(1), &c.real(-3), &c).unwrap();
        let expect = c.real(-3).exp();
        assert!((v - expect).abs() < 1e-28);
    }

    #[test]
    fn incomplete_gamma_trivial_values() {
        let c = ctx();
        // Gamma(1, t) = e^{-t}, to series-tolerance accuracy
        let v = upper_incomplete_gamma(&c.real(1), &c.real(2), &c).unwrap();
        assert!((v - c.real(-2).exp()).abs() < 1e-28);
        // Gamma(3, 0) = 2! = 2
        let v = upper_incomplete_gamma(&c.real(3), &c.real(0), &c).unwrap();
        assert!((v - c.real(2)).abs() < 1e-70);
    }

    #[test]
    fn incomplete_gamma_complement() {
        // branch-consistency check; the independent quadrature oracle lives
        // in the integration suite
        let c = ctx();
        for (a, t) in [(0.5, 1.0), (2.3, 0.7), (4.0, 9.0), (1.0, 1.9)] {
            let a = c.real(a);
            let t = c.real(t);
            let upper = upper_incomplete_gamma(&a, &t, &c).unwrap();
            let lower = lower_incomplete_gamma(&a, &t, &c).unwrap();
            let complete = c.real(a.gamma_ref());
            let diff = (upper + lower - complete).abs();
            assert!(diff < 1e-28, "complement identity failed");
        }
    }

    #[test]
    fn laguerre_low_orders() {
        let c = ctx();
        assert_eq!(laguerre(0, &c.real(0.3), &c.real(7)), 1);
        let v = laguerre(1, &c.real(0.5), &c.real(2));
        assert!((v.to_f64() + 0.5).abs() < 1e-15);
        // explicit sum at k=2, alpha=0, t=1: (t^2 - 4t + 2)/2 = -1/2
        let v = laguerre(2, &c.real(0), &c.real(1));
        assert!((v.to_f64() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn laguerre_matches_explicit_sum() {
        // recurrence vs the defining binomial sum, k <= 12
        use rug::ops::Pow;
        let c = ctx();
        let alpha = c.real(0.367);
        for k in 0..=12u32 {
            for &t in &[0.1f64, 1.0, 3.7, 10.0] {
                let t = c.real(t);
                let rec = laguerre(k, &alpha, &t);
                // sum_i C(k+alpha, k-i) (-t)^i / i!
                let mut sum = c.zero();
                for i in 0..=k {
                    let mut term = c.one();
                    // C(k+alpha, k-i) = prod_{r=i+1}^{k} (alpha+r) / (k-i)!
                    for r in (i + 1)..=k {
                        term *= c.real(&alpha + r);
                    }
                    term /= c.real(Integer::from(Integer::factorial(k - i)));
                    let ti = c.real(-&t).pow(i);
                    term *= ti / c.real(Integer::from(Integer::factorial(i)));
                    sum += term;
                }
                let denom = c.real(rec.abs_ref()).max(&c.one());
                let rel = c.real(&rec - &sum).abs() / denom;
                assert!(rel < 1e-60, "k={k} t={t}");
            }
        }
    }

    #[test]
    fn orthonormal_q_basics() {
        let c = ctx();
        assert_eq!(orthonormal_q(0, &c.real(1.2), &c.real(3)), 1);
        // k=1, alpha=0, t=0: -(Gamma(2)/Gamma(1))^{-1/2} L_1(0) = -1
        let v = orthonormal_q(1, &c.real(0), &c.real(0));
        assert!((v.to_f64() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn stirling_values() {
        assert_eq!(unsigned_stirling_first(5, 5), 1);
        assert_eq!(unsigned_stirling_first(3, 2), 3);
        // [n, 1] = (n-1)!
        assert_eq!(unsigned_stirling_first(4, 1), 6);
        assert_eq!(unsigned_stirling_first(0, 0), 1);
        assert_eq!(unsigned_stirling_first(2, 5), 0);
        // row sums: sum_j [n, j] = n!
        let total: Integer = (0..=6).map(|j| unsigned_stirling_first(6, j)).sum();
        assert_eq!(total, Integer::from(Integer::factorial(6)));
    }
}
