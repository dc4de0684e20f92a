//! Positivity and monotonicity repairs of the truncated expansion.
//!
//! The truncated pdf can dip negative on intervals left of the mode (near the
//! origin) or right of it (in the tail). An origin dip is replaced by a power
//! patch `a t^delta` that preserves the origin-decay condition
//! `delta > alpha/2 + 1`; a tail dip by a decaying exponential `a e^(bt)`,
//! matching the surrounding values. Separately, a cdf evaluated on a grid can
//! lose monotonicity where the pdf is negative; the grid repair bridges each
//! dip with a straight line.

use thiserror::Error;

use crate::expansion::LaguerreGammaExpansion;
use crate::fastmath;

#[derive(Debug, Error)]
pub enum CorrectionError {
    /// A patch could not be fitted (no valid anchor or exponent).
    #[error("correction fit failure: {what}")]
    FitFailure { what: String },
}

/// An open interval on which the truncated pdf is negative.
#[derive(Clone, Copy, Debug)]
pub struct NegativeInterval {
    pub lo: f64,
    pub hi: f64,
}

/// Functional form of a replacement patch.
#[derive(Clone, Copy, Debug)]
pub enum PatchForm {
    /// `a t^delta` on `[0, hi]`.
    Power { a: f64, delta: f64 },
    /// `a e^(b t)` with `b < 0`.
    Exponential { a: f64, b: f64 },
}

/// One replacement patch with its interval.
#[derive(Clone, Copy, Debug)]
pub struct PdfPatch {
    pub lo: f64,
    pub hi: f64,
    pub form: PatchForm,
}

impl PdfPatch {
    pub fn eval(&self, t: f64) -> f64 {
        match self.form {
            PatchForm::Power { a, delta } => {
                if t <= 0.0 {
                    0.0
                } else {
                    a * t.powf(delta)
                }
            }
            PatchForm::Exponential { a, b } => a * (b * t).exp(),
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }
}

/// The expansion with its negative dips patched; nonnegative on `(0, inf)`.
#[derive(Clone, Debug)]
pub struct CorrectedPdf {
    base: LaguerreGammaExpansion,
    patches: Vec<PdfPatch>,
}

impl CorrectedPdf {
    pub fn base(&self) -> &LaguerreGammaExpansion {
        &self.base
    }

    pub fn patches(&self) -> &[PdfPatch] {
        &self.patches
    }

    /// Corrected density.
    pub fn pdf_f64(&self, t: f64) -> f64 {
        for p in &self.patches {
            if p.contains(t) {
                return p.eval(t);
            }
        }
        self.base.pdf_f64(t)
    }

    /// Corrected density over the reference density (the ratio the
    /// acceptance-rejection envelope bounds).
    pub fn ratio_f64(&self, t: f64) -> f64 {
        let f = self.base.reference().pdf_f64(t);
        if f <= 0.0 {
            return 0.0;
        }
        self.pdf_f64(t) / f
    }
}

/// Upper end of the scan window: the reference gamma quantile at `mass`.
pub fn scan_upper_limit(e: &LaguerreGammaExpansion, mass: f64) -> f64 {
    let alpha = e.reference().alpha().to_f64();
    let beta = e.reference().beta().to_f64();
    let guess = (alpha + 1.0).max(1.0) / beta * 4.0;
    fastmath::gamma_cdf_inverse(alpha, beta, mass, guess, 1e-12)
}

/// Scan grid: log-spaced near the origin, linear through the bulk.
fn scan_grid(t_hi: f64, points: usize) -> Vec<f64> {
    let half = points / 2;
    let mut grid = Vec::with_capacity(points);
    let lo = t_hi * 1e-8;
    let split = t_hi * 0.1;
    let log_lo = lo.ln();
    let log_hi = split.ln();
    for i in 0..half {
        let frac = i as f64 / (half - 1) as f64;
        grid.push((log_lo + frac * (log_hi - log_lo)).exp());
    }
    for i in 1..=(points - half) {
        let frac = i as f64 / (points - half) as f64;
        grid.push(split + frac * (t_hi - split));
    }
    grid
}

/// Locates the sign changes of `p_n` on `(0, t_hi)` by a dense grid scan
/// (default 4096 points, log-spaced near the origin) refined by bisection to
/// a relative bracket width of `1e-12`. Returns the maximal open intervals on
/// which the truncated pdf is negative; empty when the pdf is nonnegative.
///
/// When the top coefficient makes `p_n` negative at infinity (an order
/// violating the tail sign condition), the trailing interval is unbounded
/// and is reported with `hi = +inf`, its start located beyond `t_hi` if
/// needed.
pub fn find_negative_intervals(e: &LaguerreGammaExpansion, t_hi: f64) -> Vec<NegativeInterval> {
    let grid = scan_grid(t_hi, 4096);
    let sign = |t: f64| e.p_poly_f64(t) < 0.0;
    let mut roots: Vec<(f64, bool)> = Vec::new(); // (t, entering_negative)
    let mut prev_t = grid[0];
    let mut prev_neg = sign(prev_t);
    if prev_neg {
        roots.push((0.0, true));
    }
    for &t in &grid[1..] {
        let neg = sign(t);
        if neg != prev_neg {
            let root = bisect_sign_change(&|x| sign(x), prev_t, t);
            roots.push((root, neg));
        }
        prev_t = t;
        prev_neg = neg;
    }
    // analytic tail sign: p ~ (-1)^n h_{n,n} (beta t)^n / n! as t -> inf
    let n = e.order();
    let top = e.coefficients_h()[n].to_f64();
    let negative_at_infinity = n >= 1 && if n.is_multiple_of(2) { top < 0.0 } else { top > 0.0 };
    if prev_neg {
        if negative_at_infinity {
            roots.push((f64::INFINITY, false));
        } else {
            roots.push((t_hi, false));
        }
    } else if negative_at_infinity {
        // the downcross lies beyond the scan window; expand and bisect
        let mut lo = t_hi;
        let mut hi = t_hi * 2.0;
        let mut found = false;
        for _ in 0..60 {
            if sign(hi) {
                found = true;
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        if found {
            let root = bisect_sign_change(&|x| sign(x), lo, hi);
            roots.push((root, true));
            roots.push((f64::INFINITY, false));
        }
    }
    let mut intervals = Vec::new();
    let mut open: Option<f64> = None;
    for (t, entering) in roots {
        if entering {
            open = Some(t);
        } else if let Some(lo) = open.take() {
            intervals.push(NegativeInterval { lo, hi: t });
        }
    }
    intervals
}

fn bisect_sign_change(neg: &dyn Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    let lo_neg = neg(lo);
    for _ in 0..80 {
        if (hi - lo) <= 1e-12 * hi.abs().max(1e-300) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if neg(mid) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Approximate mode of the truncated pdf: grid argmax polished by
/// golden-section search (tolerance `1e-10` in `t`).
pub fn mode_of(e: &LaguerreGammaExpansion, t_hi: f64) -> f64 {
    let grid = scan_grid(t_hi, 4096);
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &t) in grid.iter().enumerate() {
        let v = e.pdf_f64(t);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut a = if best_i == 0 { grid[0] * 0.5 } else { grid[best_i - 1] };
    let mut b = if best_i + 1 == grid.len() { t_hi } else { grid[best_i + 1] };
    // golden-section maximization
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = e.pdf_f64(c);
    let mut fd = e.pdf_f64(d);
    while (b - a) > 1e-10 * b.max(1.0) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = e.pdf_f64(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = e.pdf_f64(d);
        }
    }
    0.5 * (a + b)
}

/// Power patch `a t^delta` covering an origin-side dip.
///
/// The right junction `t2p` is the first point past the dip where the
/// accumulated mass `G_n(t)` is positive again; `a` and `delta` match the
/// pdf value and derivative there. The exponent must satisfy
/// `delta > alpha/2 + 1` (origin-decay condition); when the slope match
/// violates it, the fallback pins `delta = alpha/2 + 1 + 0.1` and matches the
/// value only.
pub fn correct_origin(
    e: &LaguerreGammaExpansion,
    neg: &NegativeInterval,
    mode: f64,
) -> Result<PdfPatch, CorrectionError> {
    assert!(neg.hi <= mode, "origin correction expects a dip left of the mode");
    // first t in (neg.hi, mode) with positive accumulated mass
    let steps = 2048;
    let mut t2p = None;
    for i in 1..=steps {
        let t = neg.hi + (mode - neg.hi) * i as f64 / steps as f64;
        if e.cdf_f64(t) > 0.0 {
            t2p = Some(t);
            break;
        }
    }
    let t2p = t2p.ok_or_else(|| CorrectionError::FitFailure {
        what: "no junction with positive accumulated mass before the mode".into(),
    })?;
    let g2 = e.pdf_f64(t2p);
    if g2 <= 0.0 {
        return Err(CorrectionError::FitFailure { what: "pdf nonpositive at the origin-patch junction".into() });
    }
    let alpha = e.reference().alpha().to_f64();
    let min_delta = alpha / 2.0 + 1.0;
    let slope = e.pdf_derivative_f64(t2p);
    let delta = t2p * slope / g2;
    let delta = if delta > min_delta {
        delta
    } else {
        // fallback: keep the decay condition, match value only
        min_delta + 0.1
    };
    let a = g2 / t2p.powf(delta);
    if !a.is_finite() || a <= 0.0 {
        return Err(CorrectionError::FitFailure { what: "origin patch scale not positive/finite".into() });
    }
    Ok(PdfPatch { lo: 0.0, hi: t2p, form: PatchForm::Power { a, delta } })
}

/// Exponential patch `a e^(bt)` covering a tail-side dip.
///
/// The right anchor is the first point past the dip where the pdf starts
/// decreasing; the left anchor is the leftmost point in `(t1/10, t1)` whose
/// pdf value exceeds the right anchor's. The two value matches determine
/// `a > 0` and `b < 0`.
pub fn correct_tail(
    e: &LaguerreGammaExpansion,
    neg: &NegativeInterval,
    t_hi: f64,
) -> Result<PdfPatch, CorrectionError> {
    // t2' = min{ t > t2 : g_n'(t) < 0 }
    let steps = 4096;
    let mut t2p = None;
    for i in 1..=steps {
        let t = neg.hi + (t_hi - neg.hi) * i as f64 / steps as f64;
        if e.pdf_derivative_f64(t) < 0.0 {
            t2p = Some(t);
            break;
        }
    }
    let t2p = t2p.ok_or_else(|| CorrectionError::FitFailure {
        what: "no decreasing point past the tail dip within the scan window".into(),
    })?;
    let g2 = e.pdf_f64(t2p);
    if g2 <= 0.0 {
        return Err(CorrectionError::FitFailure { what: "no valid right anchor: pdf nonpositive there".into() });
    }
    // t1' = min{ t < t1 : g_n(t) > g_n(t2') }, scanned over (t1/10, t1)
    let lo_window = neg.lo / 10.0;
    let mut t1p = None;
    for i in 0..steps {
        let t = lo_window + (neg.lo - lo_window) * i as f64 / steps as f64;
        if t > 0.0 && e.pdf_f64(t) > g2 {
            t1p = Some(t);
            break;
        }
    }
    let t1p = t1p.ok_or_else(|| CorrectionError::FitFailure {
        what: "no left anchor above the right-anchor value".into(),
    })?;
    let g1 = e.pdf_f64(t1p);
    let b = (g2.ln() - g1.ln()) / (t2p - t1p);
    let a = g1 * (-b * t1p).exp();
    if b >= 0.0 || b.is_nan() || !a.is_finite() || a <= 0.0 {
        return Err(CorrectionError::FitFailure { what: format!("degenerate exponential fit: a={a}, b={b}") });
    }
    Ok(PdfPatch { lo: t1p, hi: t2p, form: PatchForm::Exponential { a, b } })
}

/// Exponential patch for a tail dip that never recovers (the top
/// coefficient's sign makes the whole far tail negative, as happens at
/// orders violating the sign conditions). Anchored where the remaining mass
/// is already small — the reference 0.999 quantile, or closer to the dip if
/// the dip starts earlier — and matched in value and slope there, so the
/// decaying exponential replaces only a sliver of mass.
pub fn correct_tail_unbounded(
    e: &LaguerreGammaExpansion,
    neg: &NegativeInterval,
    mode: f64,
) -> Result<PdfPatch, CorrectionError> {
    let alpha = e.reference().alpha().to_f64();
    let beta = e.reference().beta().to_f64();
    let q999 = fastmath::gamma_cdf_inverse(alpha, beta, 0.999, (alpha + 1.0).max(1.0) / beta * 4.0, 1e-12);
    let mut t1p = q999.min(0.1 * mode + 0.9 * neg.lo);
    // the anchor must sit strictly inside the positive region
    let steps = 2048;
    let mut found = e.pdf_f64(t1p) > 0.0 && e.pdf_derivative_f64(t1p) < 0.0;
    if !found {
        for i in 1..steps {
            let t = mode + (neg.lo - mode) * i as f64 / steps as f64;
            if e.pdf_f64(t) > 0.0 && e.pdf_derivative_f64(t) < 0.0 && t < neg.lo {
                t1p = t;
                found = true;
            }
        }
    }
    if !found {
        return Err(CorrectionError::FitFailure { what: "no anchor for the unbounded tail patch".into() });
    }
    let g1 = e.pdf_f64(t1p);
    let b = e.pdf_derivative_f64(t1p) / g1;
    let a = g1 * (-b * t1p).exp();
    if b >= 0.0 || b.is_nan() || !a.is_finite() || a <= 0.0 {
        return Err(CorrectionError::FitFailure { what: "degenerate unbounded tail fit".into() });
    }
    Ok(PdfPatch { lo: t1p, hi: f64::INFINITY, form: PatchForm::Exponential { a, b } })
}

/// Full positivity repair: locate the dips, classify each against the mode,
/// and patch. A dip that reaches the scan boundary is treated as an
/// unbounded tail dip. Patches are disjoint and sorted.
pub fn apply_corrections(e: &LaguerreGammaExpansion) -> Result<CorrectedPdf, CorrectionError> {
    let t_hi = scan_upper_limit(e, 0.9999);
    let intervals = find_negative_intervals(e, t_hi);
    let mode = mode_of(e, t_hi);
    let mut patches: Vec<PdfPatch> = Vec::new();
    for neg in &intervals {
        let patch = if (neg.hi.is_infinite() || neg.hi >= t_hi * (1.0 - 1e-9)) && neg.lo > mode {
            correct_tail_unbounded(e, neg, mode)?
        } else if neg.hi <= mode {
            correct_origin(e, neg, mode)?
        } else if neg.lo >= mode {
            correct_tail(e, neg, t_hi)?
        } else {
            return Err(CorrectionError::FitFailure {
                what: "negative interval straddles the mode; the approximation is unusable".into(),
            });
        };
        patches.push(patch);
    }
    patches.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for w in patches.windows(2) {
        if w[1].lo < w[0].hi {
            return Err(CorrectionError::FitFailure { what: "overlapping patches".into() });
        }
    }
    Ok(CorrectedPdf { base: e.clone(), patches })
}

/// Monotonicity repair of a cdf sampled on an increasing grid.
///
/// Repeatedly finds the first decreasing increment, anchors at the last point
/// before the dip (the origin when the very first increment is negative),
/// bridges with a straight line to the first later point exceeding the
/// anchor, and continues. The output is nondecreasing and clamped to
/// `[0, 1]`; values outside bridged intervals are untouched.
pub fn correct_cdf_monotone(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    let n = out.len();
    let mut search_from = 1usize;
    while search_from < n {
        // first decreasing increment
        let mut dip = None;
        for i in search_from..n {
            if out[i] < out[i - 1] {
                dip = Some(i);
                break;
            }
        }
        let Some(dip) = dip else { break };
        let anchor = dip - 1;
        // first recovery above the anchor value
        let mut recovery = None;
        for j in (anchor + 1)..n {
            if out[j] > out[anchor] {
                recovery = Some(j);
                break;
            }
        }
        match recovery {
            Some(j) => {
                let t_span = (j - anchor) as f64;
                for i in (anchor + 1)..j {
                    let frac = (i - anchor) as f64 / t_span;
                    out[i] = out[anchor] + frac * (out[j] - out[anchor]);
                }
                search_from = j + 1;
            }
            None => {
                // dip never recovers: hold the anchor value to the end
                let hold = out[anchor];
                for v in out.iter_mut().skip(anchor + 1) {
                    *v = hold;
                }
                break;
            }
        }
    }
    // final clamp
    let mut running = 0.0f64;
    for v in out.iter_mut() {
        *v = v.clamp(0.0, 1.0).max(running);
        running = *v;
    }
    out
}

/// Monotone-corrected cdf value at `t`: evaluates the cdf on a grid over
/// `[0, t]`, repairs it, and returns the endpoint.
pub fn corrected_cdf_at(e: &LaguerreGammaExpansion, t: f64, grid_points: usize) -> f64 {
    let n = grid_points.max(16);
    let values: Vec<f64> = (0..=n).map(|i| e.cdf_f64(t * i as f64 / n as f64)).collect();
    *correct_cdf_monotone(&values).last().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_repair_hand_trace() {
        // synthetic dip at unit spacing
        let input = [0.0, 0.1, 0.08, 0.09, 0.15];
        let out = correct_cdf_monotone(&input);
        let d = (0.15 - 0.1) / 3.0;
        let expect = [0.0, 0.1, 0.1 + d, 0.1 + 2.0 * d, 0.15];
        for (a, b) in out.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15, "{out:?}");
        }
    }

    #[test]
    fn monotone_repair_identity_on_monotone_input() {
        let input = [0.0, 0.2, 0.5, 0.9, 1.0];
        let out = correct_cdf_monotone(&input);
        assert_eq!(out, input);
    }

    #[test]
    fn monotone_repair_unrecovered_dip() {
        let input = [0.0, 0.3, 0.2, 0.25];
        let out = correct_cdf_monotone(&input);
        assert_eq!(out, vec![0.0, 0.3, 0.3, 0.3]);
    }

    #[test]
    fn monotone_repair_origin_case() {
        // first increment already negative: bridge starts at the origin
        let input = [0.05, 0.02, 0.01, 0.2];
        let out = correct_cdf_monotone(&input);
        assert!((out[1] - 0.1).abs() < 1e-15 && (out[2] - 0.15).abs() < 1e-15, "{out:?}");
        assert!(out.windows(2).all(|w| w[1] >= w[0]));
    }
}
