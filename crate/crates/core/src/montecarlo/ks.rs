//! Kolmogorov-Smirnov distances: the primary two-sample and
//! sample-vs-function validation metrics.

/// Two-sample KS statistic `sup_t |F_a(t) - F_b(t)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        let gap = (i as f64 / na - j as f64 / nb).abs();
        if gap > d {
            d = gap;
        }
    }
    d
}

/// KS distance of a sample against a continuous cdf, with the argmax point.
///
/// The supremum of `|F_n(t) - G(t)|` for a step `F_n` against a monotone `G`
/// is attained at a sample point, approaching from one side or the other.
pub fn ks_vs_cdf(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    assert!(!sample.is_empty());
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut at = xs[0];
    for (i, &x) in xs.iter().enumerate() {
        let g = cdf(x);
        let upper = ((i + 1) as f64 / n - g).abs();
        let lower = (g - i as f64 / n).abs();
        let gap = upper.max(lower);
        if gap > d {
            d = gap;
            at = x;
        }
    }
    (d, at)
}
