//! Positivity and monotonicity repairs exercised on the regimes that need
//! them, plus grid-level invariants.

mod common;

use cirfpt::cir::{cumulants_to_moments, fpt_cumulants};
use cirfpt::correction::{
    apply_corrections, correct_cdf_monotone, correct_origin, find_negative_intervals, mode_of,
    scan_upper_limit, PatchForm,
};
use cirfpt::expansion::{build_at_order, build_standardized, select_gamma_params, standardize};
use cirfpt::precision::PrecisionContext;
use cirfpt::presets;
use cirfpt::{CirParams, LaguerreGammaExpansion};
use common::integrate;

fn ctx() -> PrecisionContext {
    PrecisionContext::default()
}

fn forced(p: &CirParams, n: usize, c: &PrecisionContext) -> LaguerreGammaExpansion {
    let cum = fpt_cumulants(p, (n as u32 + 1).max(2), c).unwrap();
    let (std_cum, _) = standardize(&cum);
    let reference = select_gamma_params(std_cum.get(1), std_cum.get(2)).unwrap();
    build_at_order(&cumulants_to_moments(&std_cum), &reference, n, c).unwrap()
}

/// Order 0 is the bare reference density: nothing to correct.
#[test]
fn order_zero_has_no_negative_intervals() {
    let c = ctx();
    let p = presets::light_tail(&c).unwrap();
    let e = forced(&p, 0, &c);
    let t_hi = scan_upper_limit(&e, 0.9999);
    assert!(find_negative_intervals(&e, t_hi).is_empty());
}

/// Origin-side dip (the low-boundary-shifted regime at order 10, which
/// violates `h_{n,0} > 0`): located, patched with a power form meeting the
/// decay condition, and nonnegative afterwards.
#[test]
fn origin_dip_repair() {
    let c = ctx();
    let p = presets::shifted_lower_boundary(&c).unwrap();
    let e = forced(&p, 10, &c);
    let t_hi = scan_upper_limit(&e, 0.9999);
    let negs = find_negative_intervals(&e, t_hi);
    assert!(!negs.is_empty(), "expected an origin dip at order 10");
    let mode = mode_of(&e, t_hi);
    assert!(negs[0].hi < mode, "dip should lie left of the mode");

    let patch = correct_origin(&e, &negs[0], mode).unwrap();
    let (a, delta) = match patch.form {
        PatchForm::Power { a, delta } => (a, delta),
        _ => panic!("origin patch must be a power form"),
    };
    let alpha = e.reference().alpha().to_f64();
    assert!(delta > alpha / 2.0 + 1.0, "decay condition: delta = {delta}");
    assert!(a > 0.0);

    // value match at the junction
    let g2 = e.pdf_f64(patch.hi);
    assert!((patch.eval(patch.hi) - g2).abs() < 1e-10 * g2.abs().max(1e-12));
    // slope match by central difference (when the slope fit was used)
    let h = 1e-7;
    let patch_slope = (patch.eval(patch.hi + h) - patch.eval(patch.hi - h)) / (2.0 * h);
    let pdf_slope = (e.pdf_f64(patch.hi + h) - e.pdf_f64(patch.hi - h)) / (2.0 * h);
    let slope_rel = (patch_slope - pdf_slope).abs() / pdf_slope.abs().max(1e-9);
    assert!(slope_rel < 1e-4, "slope mismatch {slope_rel:.2e}");

    let corrected = apply_corrections(&e).unwrap();
    let mut min_v = f64::INFINITY;
    for i in 1..=100_000 {
        let t = t_hi * i as f64 / 100_000.0;
        min_v = min_v.min(corrected.pdf_f64(t));
    }
    assert!(min_v >= -1e-15, "corrected pdf dips to {min_v:.2e}");
}

/// Tail-side negativity (the light-tail regime at order 10, which violates
/// the top sign condition): the unbounded exponential patch keeps the far
/// tail positive, continuous and mass-neutral to the stated bound.
#[test]
fn tail_dip_repair() {
    let c = ctx();
    let p = presets::light_tail(&c).unwrap();
    let e = forced(&p, 10, &c);
    let t_hi = scan_upper_limit(&e, 0.9999);
    let negs = find_negative_intervals(&e, t_hi);
    assert!(!negs.is_empty(), "expected a tail dip at order 10");
    let mode = mode_of(&e, t_hi);
    assert!(negs.last().unwrap().lo > mode);

    let corrected = apply_corrections(&e).unwrap();
    let patch = corrected.patches().last().copied().unwrap();
    let (a, b) = match patch.form {
        PatchForm::Exponential { a, b } => (a, b),
        _ => panic!("tail patch must be exponential"),
    };
    assert!(a > 0.0 && b < 0.0, "a = {a}, b = {b}");

    // junction continuity within 1e-8 relative
    let g1 = e.pdf_f64(patch.lo);
    assert!((patch.eval(patch.lo) - g1).abs() < 1e-8 * g1.abs());

    // nonnegative over an extended grid (the dip lies beyond the 0.9999
    // quantile here)
    let mut min_v = f64::INFINITY;
    for i in 1..=100_000 {
        let t = 3.0 * t_hi * i as f64 / 100_000.0;
        min_v = min_v.min(corrected.pdf_f64(t));
    }
    assert!(min_v >= -1e-15, "corrected pdf dips to {min_v:.2e}");

    // patch-local mass perturbation below 1e-2, total mass within 5e-3
    let local_hi = (3.0 * t_hi).min(patch.lo + 60.0);
    let local = integrate(&|t: f64| corrected.pdf_f64(t) - e.pdf_f64(t), patch.lo, local_hi, 1e-10);
    assert!(local.abs() < 1e-2, "patch mass shift {local:.2e}");
    let mass = integrate(&|t: f64| corrected.pdf_f64(t), 1e-12, 3.0 * t_hi, 1e-9);
    assert!((mass - 1.0).abs() < 5e-3, "total mass {mass}");
}

/// The three presets at their selected orders: corrected pdf nonnegative on
/// a 1e5-point grid, continuous at junctions, total mass within 5e-3.
#[test]
fn corrected_presets_nonnegative() {
    let c = ctx();
    for (name, p) in presets::all(&c) {
        let built = build_standardized(&p, 1e-3, 60, &c).unwrap();
        let corrected = apply_corrections(&built.expansion).unwrap();
        let t_hi = scan_upper_limit(&built.expansion, 0.9999);
        let mut min_v = f64::INFINITY;
        for i in 1..=100_000 {
            let t = t_hi * i as f64 / 100_000.0;
            min_v = min_v.min(corrected.pdf_f64(t));
        }
        assert!(min_v >= -1e-15, "{name}: min {min_v:.2e}");
        for patch in corrected.patches() {
            for edge in [patch.lo, patch.hi] {
                if edge <= 0.0 || !edge.is_finite() {
                    continue;
                }
                let inside = patch.eval(edge);
                let outside = built.expansion.pdf_f64(edge);
                assert!(
                    (inside - outside).abs() <= 1e-8 * outside.abs().max(1e-12),
                    "{name}: junction jump at {edge}"
                );
            }
        }
        let mass = integrate(&|t: f64| corrected.pdf_f64(t), 1e-12, t_hi * 1.5, 1e-9);
        assert!((mass - 1.0).abs() < 5e-3, "{name}: mass {mass}");
    }
}

/// Monotone repair on a dense grid of the uncorrected cdf: output
/// nondecreasing in [0, 1], close to the input, and its numerical derivative
/// nonnegative.
#[test]
fn cdf_monotone_repair_on_dense_grid() {
    let c = ctx();
    let p = presets::light_tail(&c).unwrap();
    // order 10 so the cdf actually wiggles in the tail
    let e = forced(&p, 10, &c);
    let dt = 1e-4;
    let hi = 12.0f64;
    let n = (hi / dt) as usize;
    let values: Vec<f64> = (0..=n).map(|i| e.cdf_f64(i as f64 * dt)).collect();
    let repaired = correct_cdf_monotone(&values);
    let mut sup_dev = 0.0f64;
    for (r, v) in repaired.iter().zip(values.iter()) {
        sup_dev = sup_dev.max((r - v).abs());
    }
    assert!(sup_dev < 1e-3, "sup deviation {sup_dev:.2e}");
    assert!(repaired.windows(2).all(|w| w[1] >= w[0]), "not monotone");
    assert!(repaired.iter().all(|v| (0.0..=1.0).contains(v)));
    // equality wherever the input was already locally increasing outside
    // bridged regions: spot-check the midrange
    let mid = n / 3;
    assert_eq!(repaired[mid], values[mid]);
}
