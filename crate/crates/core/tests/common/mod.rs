//! Shared oracles for the integration suite: adaptive quadrature and a
//! substitution rule for gamma-weighted integrals with a singular weight.
//! These stay independent of the library's own special-function layer.

#![allow(dead_code)]

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    // composite start: 64 uniform panels so localized mass cannot hide from
    // the coarse probe, each refined adaptively
    let panels = 64;
    let mut total = 0.0;
    for i in 0..panels {
        let pa = a + (b - a) * i as f64 / panels as f64;
        let pb = a + (b - a) * (i + 1) as f64 / panels as f64;
        let fa = f(pa);
        let fb = f(pb);
        let (whole, m, fm) = simpson(f, pa, fa, pb, fb);
        total += recurse(f, pa, fa, pb, fb, whole, m, fm, tol / panels as f64, 44);
    }
    total
}

/// `int_0^inf phi(u) u^alpha e^(-u) du` for `alpha > -1`, handled through the
/// substitution `u = v^p`, `p = 1/(alpha+1)`, which removes the endpoint
/// singularity: the integral becomes `p int phi(v^p) e^(-v^p) dv`.
pub fn integrate_gamma_weight(phi: &dyn Fn(f64) -> f64, alpha: f64, u_hi: f64, tol: f64) -> f64 {
    let p = 1.0 / (alpha + 1.0);
    let v_hi = u_hi.powf(1.0 / p);
    let g = move |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let u = v.powf(p);
        phi(u) * (-u).exp()
    };
    p * integrate(&g, 0.0, v_hi, tol)
}

/// Relative deviation helper used all over the suite.
pub fn rel_err(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(1e-300)
}

#[cfg(test)]
mod self_checks {
    use super::*;

    #[test]
    fn simpson_on_smooth_integrand() {
        let v = integrate(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn gamma_weight_normalization() {
        // int u^alpha e^-u du = Gamma(alpha+1)
        for &alpha in &[-0.34f64, 0.367, 0.7] {
            let v = integrate_gamma_weight(&|_| 1.0, alpha, 60.0, 1e-10);
            let want = libm::tgamma(alpha + 1.0);
            assert!((v - want).abs() < 1e-8 * want, "alpha={alpha}: {v} vs {want}");
        }
    }
}
