//! Cross-route and Laplace-transform oracles for the cumulant engine.

mod common;

use cirfpt::cir::{cumulants_to_moments, fpt_cumulants, fpt_moments_bell, laplace_transform};
use cirfpt::expansion::standardize;
use cirfpt::montecarlo::{simulate_fpt_milstein, Method, SimulationConfig};
use cirfpt::precision::PrecisionContext;
use cirfpt::presets;
use common::rel_err;

fn ctx() -> PrecisionContext {
    PrecisionContext::default()
}

/// The complete-Bell convolution route and the binomial recursion route must
/// produce the same moments.
#[test]
fn moment_routes_agree_to_order_ten() {
    let c = ctx();
    for (name, p) in presets::all(&c) {
        let bell = fpt_moments_bell(&p, 10, &c).unwrap();
        let recursion = cumulants_to_moments(&fpt_cumulants(&p, 10, &c).unwrap());
        for k in 1..=10 {
            let rel = rel_err(bell.get(k).to_f64(), recursion.get(k).to_f64());
            assert!(rel < 1e-10, "{name} k={k}: {rel:.2e}");
        }
    }
}

/// Finite differences of `-log g~(z)` at `z -> 0+` reproduce the first two
/// cumulants (Richardson-extrapolated central differences).
#[test]
fn laplace_derivatives_match_cumulants() {
    let c = ctx();
    for (name, p) in presets::all(&c) {
        let cum = fpt_cumulants(&p, 2, &c).unwrap();
        let neg_log_lt = |z: f64| -> f64 {
            -laplace_transform(&c.real(z), &p, &c).unwrap().to_f64().ln()
        };
        // K(z) = -log g~(z) = c1 z - c2 z^2/2 + ... (Laplace sign convention)
        // first derivative at 0+ by central differences with step halving
        let d1 = |h: f64| (neg_log_lt(2.0 * h) - neg_log_lt(h)) / h; // forward-ish on (0,..)
        // Richardson on the forward difference of the odd extension:
        // use K(z)/z -> c1 as z -> 0, extrapolated
        let g1 = |h: f64| neg_log_lt(h) / h;
        let (h1, h2) = (1e-3, 5e-4);
        let c1_est = 2.0 * g1(h2) - g1(h1); // removes the O(h) term
        assert!(rel_err(c1_est, cum.get(1).to_f64()) < 1e-3, "{name}: c1 {c1_est}");
        // second cumulant from K(z) = c1 z - c2 z^2/2 + c3 z^3/6 ...:
        // c2(h) = 2 (c1 h - K(h)) / h^2 has error O(h); extrapolate
        let c1 = cum.get(1).to_f64();
        let c2_at = |h: f64| 2.0 * (c1 * h - neg_log_lt(h)) / (h * h);
        let c2_est = 2.0 * c2_at(h2) - c2_at(h1);
        assert!(rel_err(c2_est, cum.get(2).to_f64()) < 1e-3, "{name}: c2 {c2_est} vs {}", cum.get(2).to_f64());
        let _ = d1;
    }
}

/// Scale covariance: the standardization path rescales cumulants by exact
/// powers of `sigma_T`.
#[test]
fn standardization_scale_covariance() {
    let c = ctx();
    let p = presets::light_tail(&c).unwrap();
    let cum = fpt_cumulants(&p, 8, &c).unwrap();
    let (std_cum, sigma_t) = standardize(&cum);
    let mut power = c.one();
    for k in 1..=8 {
        power *= &sigma_t;
        let recovered = c.real(std_cum.get(k) * &power);
        let rel = c.real(&recovered - cum.get(k)).abs() / c.real(cum.get(k).abs_ref());
        assert!(rel.to_f64() < 1e-70, "k={k}");
        // and c2 of the standardized vector is exactly one
        if k == 2 {
            let one_dev = c.real(std_cum.get(2) - 1u32).abs();
            assert!(one_dev.to_f64() < 1e-70);
        }
    }
}

/// Monte Carlo Laplace oracle: `g~(1)` against the sample mean of
/// `exp(-T_i)` from a Milstein run.
#[test]
fn laplace_value_against_monte_carlo() {
    let c = ctx();
    let p = presets::light_tail(&c).unwrap();
    let analytic = laplace_transform(&c.one(), &p, &c).unwrap().to_f64();
    assert!(analytic > 0.0 && analytic < 1.0);
    let cfg = SimulationConfig { dt: 5e-4, t_max: 60.0, n_paths: 20_000, seed: 99, method: Method::Milstein };
    let sample = simulate_fpt_milstein(&p, &cfg).unwrap();
    assert_eq!(sample.censored, 0);
    let vals: Vec<f64> = sample.times.iter().map(|t| (-t).exp()).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() as f64 - 1.0);
    let se = (var / vals.len() as f64).sqrt();
    assert!(
        (mean - analytic).abs() < 3.0 * se + 1e-3,
        "MC {mean} vs analytic {analytic} (se {se:.1e})"
    );
}

/// Positivity of the first two cumulants across all presets.
#[test]
fn cumulant_signs() {
    let c = ctx();
    for (name, p) in presets::all(&c) {
        let cum = fpt_cumulants(&p, 2, &c).unwrap();
        assert!(cum.get(1).to_f64() > 0.0, "{name}: c1");
        assert!(cum.get(2).to_f64() > 0.0, "{name}: c2");
    }
}
