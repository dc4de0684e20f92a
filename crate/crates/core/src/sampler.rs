//! Modified acceptance-rejection FPT generator built on the corrected
//! expansion.
//!
//! Draws below a truncation point `C` come from classical acceptance-
//! rejection against the truncated reference gamma; with probability `eps` a
//! draw is instead taken from a shifted exponential tail law on `(C, inf)`.
//! `C` comes from the one-sided Vysochanskij-Petunin bound (the FPT law is
//! unimodal), `C = mean + r(eps)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::correction::{corrected_cdf_at, CorrectedPdf};
use crate::fastmath;
use crate::montecarlo::{FptSample, Method};

#[derive(Debug, Error)]
pub enum SamplerError {
    /// The envelope constant came out below one, which contradicts
    /// `E[ratio] = 1` for the conditional densities.
    #[error("invalid envelope: M = {m} < 1")]
    InvalidEnvelope { m: f64 },
    /// An acceptance ratio exceeded one: the envelope was underestimated.
    #[error("envelope violation at t = {at}: ratio = {ratio}")]
    EnvelopeViolation { at: f64, ratio: f64 },
    #[error("invalid sampler config: {what}")]
    ConfigError { what: String },
}

/// Acceptance-rejection controls. `eps` is both the tail-probability budget
/// behind the truncation point and the tail-branch mixture weight.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ArConfig {
    pub eps: f64,
    pub n_draws: usize,
    pub seed: u64,
}

/// Envelope and efficiency diagnostics of a run.
#[derive(Clone, Copy, Debug)]
pub struct ArReport {
    pub truncation: f64,
    pub envelope: f64,
    pub proposals: u64,
    pub accepted: u64,
    pub tail_draws: u64,
}

/// One-sided Vysochanskij-Petunin radius `r(eps)` for a unimodal law with
/// variance `sigma2`:
/// `sqrt(4 sigma^2 / (9 eps) - sigma^2)` for `eps <= 1/6`,
/// `sqrt(4 sigma^2 / (1 + 3 eps) - sigma^2)` for `1/6 < eps <= 1`.
pub fn vp_radius(eps: f64, sigma2: f64) -> f64 {
    assert!(eps > 0.0 && eps <= 1.0, "eps must lie in (0, 1]");
    assert!(sigma2 > 0.0);
    if eps <= 1.0 / 6.0 {
        (4.0 * sigma2 / (9.0 * eps) - sigma2).sqrt()
    } else {
        (4.0 * sigma2 / (1.0 + 3.0 * eps) - sigma2).sqrt()
    }
}

/// Truncation point `C = mean + r(eps)`, guaranteeing `P(T > C) <= eps`.
pub fn truncation_point(eps: f64, mean: f64, sigma2: f64) -> f64 {
    mean + vp_radius(eps, sigma2)
}

/// Envelope constant: the supremum over `(0, C]` of the ratio between the
/// conditional corrected pdf and the conditional reference density,
/// `M = [P(X <= C) / P(T_n <= C)] max_{t in (0,C]} p(t)` with `p` the
/// corrected-pdf-to-reference ratio. The maximum is located by a 1024-point
/// grid scan polished with golden-section search.
pub fn envelope_constant(pdf: &CorrectedPdf, c_point: f64) -> Result<f64, SamplerError> {
    let p_x = pdf.base().reference().cdf_f64(c_point);
    let p_tn = corrected_cdf_at(pdf.base(), c_point, 4096);
    if p_x <= 0.0 || p_tn <= 0.0 || p_x.is_nan() || p_tn.is_nan() {
        return Err(SamplerError::ConfigError { what: "vanishing truncated mass".into() });
    }
    let max_ratio = max_ratio_on(pdf, c_point);
    let m = p_x / p_tn * max_ratio;
    if m < 1.0 - 1e-9 {
        return Err(SamplerError::InvalidEnvelope { m });
    }
    Ok(m)
}

fn max_ratio_on(pdf: &CorrectedPdf, c_point: f64) -> f64 {
    let n = 1024usize;
    let mut best_i = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for i in 1..=n {
        let t = c_point * i as f64 / n as f64;
        let v = pdf.ratio_f64(t);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let a0 = c_point * (best_i.saturating_sub(1)) as f64 / n as f64;
    let b0 = c_point * ((best_i + 1).min(n)) as f64 / n as f64;
    let (mut a, mut b) = (a0.max(c_point / n as f64 * 1e-6), b0);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = pdf.ratio_f64(c);
    let mut fd = pdf.ratio_f64(d);
    for _ in 0..200 {
        if (b - a) <= 1e-12 * b.max(1.0) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = pdf.ratio_f64(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = pdf.ratio_f64(d);
        }
    }
    best_v.max(pdf.ratio_f64(0.5 * (a + b)))
}

/// Exact draw from the reference gamma conditioned to `(0, C]`, by inverting
/// the regularized incomplete gamma at `u P(X <= C)` (bisection plus Newton,
/// tolerance `1e-12` in probability).
pub fn sample_truncated_gamma(alpha: f64, beta: f64, c_point: f64, rng: &mut impl Rng) -> f64 {
    let mass = fastmath::gamma_cdf(alpha, beta, c_point);
    let u: f64 = crate::montecarlo::open01(rng);
    let t = fastmath::gamma_cdf_inverse(alpha, beta, u * mass, c_point, 1e-12);
    t.min(c_point)
}

/// Draw from the shifted exponential tail law on `(C, inf)` with scale
/// `mean`: `t = C - mean ln(1 - u)`.
pub fn sample_truncated_exponential(c_point: f64, mean: f64, rng: &mut impl Rng) -> f64 {
    assert!(mean > 0.0);
    let u: f64 = crate::montecarlo::open01(rng);
    c_point - mean * (1.0 - u).ln()
}

/// Runs the modified acceptance-rejection generator: `n_draws` independent
/// draws, each from its own RNG substream (stream = draw index), ordered by
/// draw index.
///
/// With probability `eps` a draw comes from the exponential tail; otherwise
/// truncated-gamma proposals are tested against the corrected-density ratio
/// until acceptance. Draws are de-standardized by `sigma_T` on output.
pub fn ar_sample(pdf: &CorrectedPdf, mean: f64, cfg: &ArConfig) -> Result<(FptSample, ArReport), SamplerError> {
    if !(cfg.eps > 0.0 && cfg.eps <= 1.0) {
        return Err(SamplerError::ConfigError { what: "eps must lie in (0, 1]".into() });
    }
    if cfg.n_draws == 0 {
        return Err(SamplerError::ConfigError { what: "n_draws must be at least 1".into() });
    }
    let variance = 1.0; // the expansion is standardized; see `ar_sample_with_variance`
    ar_sample_with_variance(pdf, mean, variance, cfg)
}

/// As [`ar_sample`] with an explicit variance for the Vysochanskij-Petunin
/// truncation (use 1 for standardized expansions).
pub fn ar_sample_with_variance(
    pdf: &CorrectedPdf,
    mean: f64,
    variance: f64,
    cfg: &ArConfig,
) -> Result<(FptSample, ArReport), SamplerError> {
    let c_point = truncation_point(cfg.eps, mean, variance);
    let m = envelope_constant(pdf, c_point)?;
    let alpha = pdf.base().reference().alpha().to_f64();
    let beta = pdf.base().reference().beta().to_f64();
    let sigma_t = pdf.base().reference().sigma_t().to_f64();
    let p_x = pdf.base().reference().cdf_f64(c_point);
    let p_tn = corrected_cdf_at(pdf.base(), c_point, 4096);
    let cond_scale = p_x / p_tn; // ratio of truncated masses in the acceptance ratio

    struct DrawOut {
        value: f64,
        proposals: u64,
        tail: bool,
        violation: Option<(f64, f64)>,
    }

    let draws: Vec<DrawOut> = (0..cfg.n_draws as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(idx);
            let branch: f64 = rng.random();
            if branch < cfg.eps {
                let t = sample_truncated_exponential(c_point, mean, &mut rng);
                return DrawOut { value: t, proposals: 0, tail: true, violation: None };
            }
            let mut proposals = 0u64;
            loop {
                let g = sample_truncated_gamma(alpha, beta, c_point, &mut rng);
                proposals += 1;
                let ratio = pdf.ratio_f64(g) * cond_scale / m;
                if ratio > 1.0 + 1e-9 {
                    return DrawOut { value: g, proposals, tail: false, violation: Some((g, ratio)) };
                }
                let u: f64 = rng.random();
                if u <= ratio {
                    return DrawOut { value: g, proposals, tail: false, violation: None };
                }
                if proposals > 1_000_000 {
                    // pathological envelope; report as violation
                    return DrawOut { value: g, proposals, tail: false, violation: Some((g, -1.0)) };
                }
            }
        })
        .collect();

    let mut times = Vec::with_capacity(cfg.n_draws);
    let mut proposals = 0u64;
    let mut accepted = 0u64;
    let mut tail_draws = 0u64;
    for d in draws {
        if let Some((at, ratio)) = d.violation {
            return Err(SamplerError::EnvelopeViolation { at, ratio });
        }
        proposals += d.proposals;
        if d.tail {
            tail_draws += 1;
        } else {
            accepted += 1;
        }
        times.push(d.value * sigma_t);
    }
    let digest = {
        // provenance digest over the AR configuration
        let mut h: u64 = 0xcbf29ce484222325;
        for bytes in [
            cfg.eps.to_bits().to_le_bytes(),
            (cfg.n_draws as u64).to_le_bytes(),
            cfg.seed.to_le_bytes(),
            c_point.to_bits().to_le_bytes(),
        ] {
            for b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    };
    let sample = FptSample {
        times,
        censored: 0,
        method: Method::AcceptanceRejection,
        config_digest: digest,
        clamp_activations: 0,
    };
    let report = ArReport { truncation: c_point, envelope: m, proposals, accepted, tail_draws };
    Ok((sample, report))
}
