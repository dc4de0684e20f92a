//! Extended-precision scalar type and evaluation context.

use rug::float::ParseFloatError;
use rug::Float;

/// Working scalar for everything upstream of the Monte Carlo layer.
///
/// A multiprecision binary float; the precision of each value is fixed at
/// creation, normally through a [`PrecisionContext`].
pub type Real = Float;

/// Default working precision in binary digits.
///
/// High enough to push the coefficient recursion well past the orders where
/// IEEE doubles break down; see `expansion::build_expansion`.
pub const DEFAULT_DIGITS: u32 = 256;

/// Default relative tolerance for truncating infinite series.
pub const DEFAULT_SERIES_TOL: f64 = 1e-30;

/// Default cap on series terms before reporting non-convergence.
pub const DEFAULT_MAX_TERMS: usize = 10_000;

/// Precision and series-truncation policy shared by the special-function and
/// cumulant layers.
///
/// All operations taking a context are pure; values built from the same
/// context are safe to share across threads.
#[derive(Clone, Debug)]
pub struct PrecisionContext {
    digits: u32,
    series_tol: f64,
    max_terms: usize,
}

impl Default for PrecisionContext {
    fn default() -> Self {
        Self::with_digits(DEFAULT_DIGITS)
    }
}

impl PrecisionContext {
    /// Context with explicit precision, tolerance and term cap.
    ///
    /// Panics if `digits < 53`, `series_tol` is outside `(0, 1)` or
    /// `max_terms == 0`.
    pub fn new(digits: u32, series_tol: f64, max_terms: usize) -> Self {
        assert!(digits >= 53, "precision below an IEEE double is not supported");
        assert!(series_tol > 0.0 && series_tol < 1.0, "series_tol must lie in (0, 1)");
        assert!(max_terms >= 1, "max_terms must be positive");
        Self { digits, series_tol, max_terms }
    }

    /// Context at `digits` binary digits with the default truncation policy.
    ///
    /// Above the default precision the series tolerance tightens along with
    /// the digits, so that raising the precision actually buys accuracy.
    pub fn with_digits(digits: u32) -> Self {
        let series_tol = if digits <= DEFAULT_DIGITS {
            DEFAULT_SERIES_TOL
        } else {
            DEFAULT_SERIES_TOL * (-((digits - DEFAULT_DIGITS) as f64) * std::f64::consts::LN_2).exp()
        };
        // f64 underflows around 1e-308; fall back to a subnormal-safe floor.
        let series_tol = series_tol.max(1e-300);
        Self::new(digits, series_tol, DEFAULT_MAX_TERMS)
    }

    /// Same policy at twice the precision (used by escalation loops).
    pub fn doubled(&self) -> Self {
        Self::with_digits(self.digits * 2).with_max_terms(self.max_terms)
    }

    /// Replaces the term cap.
    pub fn with_max_terms(mut self, max_terms: usize) -> Self {
        assert!(max_terms >= 1);
        self.max_terms = max_terms;
        self
    }

    /// Replaces the series tolerance.
    pub fn with_series_tol(mut self, series_tol: f64) -> Self {
        assert!(series_tol > 0.0 && series_tol < 1.0);
        self.series_tol = series_tol;
        self
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn series_tol(&self) -> f64 {
        self.series_tol
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }

    /// A value at this context's precision.
    pub fn real<T>(&self, value: T) -> Real
    where
        Float: rug::Assign<T>,
    {
        Float::with_val(self.digits, value)
    }

    /// Parses a decimal string at this context's precision.
    pub fn parse(&self, s: &str) -> Result<Real, ParseFloatError> {
        Ok(Float::with_val(self.digits, Float::parse(s)?))
    }

    pub fn zero(&self) -> Real {
        Float::with_val(self.digits, 0)
    }

    pub fn one(&self) -> Real {
        Float::with_val(self.digits, 1)
    }
}

/// Tracks a partial sum and reports convergence once two consecutive
/// increments are small relative to the sum.
///
/// The two-in-a-row rule guards against even/odd term cancellation in
/// alternating series.
pub(crate) struct SeriesSum {
    sum: Real,
    small_streak: u8,
    tol: f64,
}

impl SeriesSum {
    pub fn new(start: Real, tol: f64) -> Self {
        Self { sum: start, small_streak: 0, tol }
    }

    /// Adds `term`; returns `true` once converged.
    pub fn push(&mut self, term: &Real) -> bool {
        self.sum += term;
        let small = if term.is_zero() {
            true
        } else if self.sum.is_zero() {
            false
        } else {
            let prec = self.sum.prec();
            let ratio = Float::with_val(prec, term.abs_ref()) / Float::with_val(prec, self.sum.abs_ref());
            ratio < self.tol
        };
        if small {
            self.small_streak += 1;
        } else {
            self.small_streak = 0;
        }
        self.small_streak >= 2
    }

    pub fn value(self) -> Real {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_defaults() {
        let ctx = PrecisionContext::default();
        assert_eq!(ctx.digits(), 256);
        assert_eq!(ctx.series_tol(), 1e-30);
        assert_eq!(ctx.max_terms(), 10_000);
    }

    #[test]
    fn tolerance_tightens_with_digits() {
        let base = PrecisionContext::with_digits(256);
        let high = PrecisionContext::with_digits(512);
        assert!(high.series_tol() < base.series_tol());
    }

    #[test]
    #[should_panic]
    fn rejects_sub_double_precision() {
        PrecisionContext::with_digits(32);
    }

    #[test]
    fn series_sum_two_in_a_row() {
        let ctx = PrecisionContext::with_digits(64).with_series_tol(1e-6);
        // Geometric series 1 + 1/2 + 1/4 + ... converges to 2.
        let mut acc = SeriesSum::new(ctx.zero(), ctx.series_tol());
        let mut term = ctx.one();
        let mut converged = false;
        for _ in 0..200 {
            if acc.push(&term) {
                converged = true;
                break;
            }
            term /= 2u32;
        }
        assert!(converged);
        let v = acc.value();
        assert!((v.to_f64() - 2.0).abs() < 1e-4);
    }
}
