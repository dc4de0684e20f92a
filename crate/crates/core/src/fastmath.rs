//! Double-precision special functions for the simulation and sampling fast
//! paths. The extended-precision counterparts in [`crate::specfun`] are the
//! reference implementations; these exist so that Monte Carlo loops and the
//! acceptance-rejection sampler do not pay multiprecision cost per draw.

/// Natural log of the gamma function for `x > 0`.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Regularized lower incomplete gamma `P(a, x)` for `a > 0`, `x >= 0`.
///
/// Series for `x < a + 1`, Lentz continued fraction otherwise.
pub(crate) fn gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub(crate) fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut term = sum;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    h * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Density of the gamma law with pdf `beta (beta t)^alpha e^(-beta t) / Gamma(alpha+1)`.
pub(crate) fn gamma_pdf(alpha: f64, beta: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let ln_f = beta.ln() + alpha * (beta * t).ln() - beta * t - ln_gamma(alpha + 1.0);
    ln_f.exp()
}

/// Cdf of the same gamma law: `P(alpha+1, beta t)`.
pub(crate) fn gamma_cdf(alpha: f64, beta: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    gamma_p(alpha + 1.0, beta * t)
}

/// Inverts `gamma_cdf(alpha, beta, .) = p` on `(0, hi]` by bisection with a
/// Newton polish, to `tol` in probability.
pub(crate) fn gamma_cdf_inverse(alpha: f64, beta: f64, p: f64, hi: f64, tol: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&p));
    if p <= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0f64;
    let mut hi = hi;
    // Expand the bracket in case the requested mass lies beyond `hi`.
    while gamma_cdf(alpha, beta, hi) < p {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = gamma_cdf(alpha, beta, mid) - p;
        if f.abs() < tol || (hi - lo) < 1e-15 * hi.max(1.0) {
            return newton_polish(alpha, beta, p, mid, tol);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    newton_polish(alpha, beta, p, 0.5 * (lo + hi), tol)
}

fn newton_polish(alpha: f64, beta: f64, p: f64, mut t: f64, tol: f64) -> f64 {
    for _ in 0..8 {
        let f = gamma_cdf(alpha, beta, t) - p;
        if f.abs() < tol {
            break;
        }
        let dens = gamma_pdf(alpha, beta, t);
        if dens <= 0.0 {
            break;
        }
        let step = f / dens;
        let next = t - step;
        if next > 0.0 {
            t = next;
        } else {
            t *= 0.5;
        }
    }
    t
}

/// Generalized Laguerre polynomial `L_k^(alpha)(t)` by the three-term recurrence.
pub(crate) fn laguerre(k: usize, alpha: f64, t: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut lm1 = 1.0;
    let mut l = 1.0 + alpha - t;
    for i in 1..k {
        let i = i as f64;
        let next = ((2.0 * i + 1.0 + alpha - t) * l - (i + alpha) * lm1) / (i + 1.0);
        lm1 = l;
        l = next;
    }
    l
}
