//! Ground-truth FPT sampling by SDE discretization (Milstein) and by exact
//! transition-density stepping, plus empirical statistics and the
//! orthogonal-series density estimator.
//!
//! Paths are independent with counter-based RNG substreams derived from
//! `(seed, path index)`, so results do not depend on scheduling order.

pub mod ks;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Poisson, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::cir::{moments_to_cumulants, CirParams, CumulantVector, MomentVector};
use crate::expansion::GammaReference;
use crate::fastmath;
use crate::precision::PrecisionContext;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {what}")]
    ConfigError { what: String },
    #[error("empty sample")]
    EmptySample,
}

/// Path-generation method recorded in sample provenance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Milstein,
    Transition,
    AcceptanceRejection,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Milstein => "milstein",
            Method::Transition => "transition",
            Method::AcceptanceRejection => "ar",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "milstein" => Some(Method::Milstein),
            "transition" => Some(Method::Transition),
            "ar" => Some(Method::AcceptanceRejection),
            _ => None,
        }
    }
}

/// Simulation controls. `dt` is the time step, `t_max` the censoring
/// horizon. Serializes to/from flat JSON.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SimulationConfig {
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub method: Method,
}

impl SimulationConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.dt.is_nan() || self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(SimError::ConfigError { what: "dt must be positive and finite".into() });
        }
        if self.t_max.is_nan() || self.t_max <= self.dt {
            return Err(SimError::ConfigError { what: "t_max must exceed dt".into() });
        }
        if self.n_paths == 0 {
            return Err(SimError::ConfigError { what: "n_paths must be at least 1".into() });
        }
        Ok(())
    }

    /// Stable digest of the configuration for provenance headers (FNV-1a).
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(&self.dt.to_bits().to_le_bytes());
        eat(&self.t_max.to_bits().to_le_bytes());
        eat(&(self.n_paths as u64).to_le_bytes());
        eat(&self.seed.to_le_bytes());
        eat(self.method.tag().as_bytes());
        h
    }
}

/// A collection of FPT draws with provenance and censoring metadata.
#[derive(Clone, Debug)]
pub struct FptSample {
    pub times: Vec<f64>,
    pub censored: usize,
    pub method: Method,
    pub config_digest: u64,
    /// Milstein-only: how often the positivity clamp fired.
    pub clamp_activations: u64,
}

impl FptSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.times.iter().sum::<f64>() / self.times.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.times.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / (self.times.len() as f64 - 1.0)
    }

    /// Sample scaled by `1/scale` (used to standardize draws).
    pub fn scaled(&self, scale: f64) -> FptSample {
        FptSample {
            times: self.times.iter().map(|t| t / scale).collect(),
            ..self.clone()
        }
    }
}

fn path_rng(seed: u64, path: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

struct PathOutcome {
    fpt: Option<f64>,
    clamps: u64,
}

/// Probability that a Brownian bridge from `y` to `y_next` (both below the
/// threshold) touched it inside a step of length `dt` with local diffusion
/// `g`: `exp(-2 (S-y)(S-y_next) / (g^2 dt))`. Discretely monitored maxima
/// systematically miss these intra-step crossings; skipping the test leaves
/// an O(sqrt(dt)) barrier bias that dominates every other error at the
/// default step size.
fn bridge_crossing_prob(s_thr: f64, y: f64, y_next: f64, g: f64, dt: f64) -> f64 {
    if g <= 0.0 {
        return 0.0;
    }
    (-2.0 * (s_thr - y) * (s_thr - y_next) / (g * g * dt)).exp()
}

/// Milstein scheme for `dY = (-tau Y + mu) dt + sigma sqrt(Y - c) dW`:
/// the Euler step plus the Ito correction `(sigma^2/4)(dW^2 - dt)`.
/// Crossing times are linearly interpolated inside the bracketing step when
/// the endpoint exceeds the threshold; intra-step crossings are recovered by
/// the Brownian-bridge test. The state is clamped to stay above the entrance
/// boundary.
pub fn simulate_fpt_milstein(p: &CirParams, cfg: &SimulationConfig) -> Result<FptSample, SimError> {
    cfg.validate()?;
    let tau = p.tau().to_f64();
    let mu = p.mu().to_f64();
    let sigma = p.sigma().to_f64();
    let c = p.lower().to_f64();
    let y0 = p.y0().to_f64();
    let s_thr = p.threshold().to_f64();
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let ito = sigma * sigma / 4.0;
    let clamp_floor = c + 1e-12 * c.abs().max(1.0);
    let n_steps = (cfg.t_max / dt).ceil() as u64;

    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|path| {
            if y0 >= s_thr {
                return PathOutcome { fpt: Some(0.0), clamps: 0 };
            }
            let mut rng = path_rng(cfg.seed, path);
            let mut y = y0;
            let mut clamps = 0u64;
            for step in 0..n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                let dw = sqrt_dt * z;
                let g = sigma * (y - c).max(0.0).sqrt();
                let mut y_next = y + (-tau * y + mu) * dt + g * dw + ito * (dw * dw - dt);
                if y_next < clamp_floor {
                    y_next = clamp_floor;
                    clamps += 1;
                }
                let t_prev = step as f64 * dt;
                if y_next >= s_thr {
                    let frac = if y_next > y { (s_thr - y) / (y_next - y) } else { 1.0 };
                    return PathOutcome { fpt: Some(t_prev + frac * dt), clamps };
                }
                let u: f64 = rng.random();
                if u < bridge_crossing_prob(s_thr, y, y_next, g, dt) {
                    return PathOutcome { fpt: Some(t_prev + 0.5 * dt), clamps };
                }
                y = y_next;
            }
            PathOutcome { fpt: None, clamps }
        })
        .collect();

    Ok(collect_outcomes(outcomes, cfg, Method::Milstein))
}

/// Exact-transition stepping: over each step the shifted state `X = Y - c`
/// is `q` times a noncentral chi-square with `2s` degrees of freedom, where
/// `q = sigma^2 (1 - e^(-tau dt)) / (4 tau)` and the noncentrality is
/// `X e^(-tau dt) / q`. The noncentral draw is exact: Poisson-mixed central
/// chi-square (a gamma with inflated shape).
pub fn simulate_fpt_transition(p: &CirParams, cfg: &SimulationConfig) -> Result<FptSample, SimError> {
    cfg.validate()?;
    let tau = p.tau().to_f64();
    let sigma = p.sigma().to_f64();
    let c = p.lower().to_f64();
    let y0 = p.y0().to_f64();
    let s_thr = p.threshold().to_f64();
    let s_index = p.boundary_index().to_f64();
    let dt = cfg.dt;
    let decay = (-tau * dt).exp();
    let q = sigma * sigma * (1.0 - decay) / (4.0 * tau);
    let half_dof = s_index; // d/2 with d = 2s
    let n_steps = (cfg.t_max / dt).ceil() as u64;

    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|path| {
            if y0 >= s_thr {
                return PathOutcome { fpt: Some(0.0), clamps: 0 };
            }
            let mut rng = path_rng(cfg.seed, path);
            let mut x = y0 - c;
            for step in 0..n_steps {
                let lambda = x * decay / q;
                let j = if lambda > 0.0 {
                    Poisson::new(lambda / 2.0).expect("positive lambda").sample(&mut rng)
                } else {
                    0.0
                };
                let shape = half_dof + j;
                let w: f64 = GammaDist::new(shape, 2.0).expect("positive shape").sample(&mut rng);
                let x_next = q * w;
                let y_prev = x + c;
                let y_next = x_next + c;
                let t_prev = step as f64 * dt;
                if y_next >= s_thr {
                    let frac = if y_next > y_prev { (s_thr - y_prev) / (y_next - y_prev) } else { 1.0 };
                    return PathOutcome { fpt: Some(t_prev + frac * dt), clamps: 0 };
                }
                let g = sigma * x.max(0.0).sqrt();
                let u: f64 = rng.random();
                if u < bridge_crossing_prob(s_thr, y_prev, y_next, g, dt) {
                    return PathOutcome { fpt: Some(t_prev + 0.5 * dt), clamps: 0 };
                }
                x = x_next;
            }
            PathOutcome { fpt: None, clamps: 0 }
        })
        .collect();

    Ok(collect_outcomes(outcomes, cfg, Method::Transition))
}

fn collect_outcomes(outcomes: Vec<PathOutcome>, cfg: &SimulationConfig, method: Method) -> FptSample {
    let mut times = Vec::with_capacity(outcomes.len());
    let mut censored = 0usize;
    let mut clamps = 0u64;
    for o in outcomes {
        clamps += o.clamps;
        match o.fpt {
            Some(t) => times.push(t),
            None => censored += 1,
        }
    }
    FptSample { times, censored, method, config_digest: cfg.digest(), clamp_activations: clamps }
}

/// Right-continuous empirical cdf. Censored paths are excluded from both the
/// numerator and the denominator; `excluded_censored` records how many, since
/// the tail is underestimated when it is nonzero.
#[derive(Clone, Debug)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
    pub excluded_censored: usize,
}

impl EmpiricalCdf {
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.sorted.partition_point(|&x| x <= t);
        idx as f64 / self.sorted.len() as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.sorted
    }
}

pub fn empirical_cdf(s: &FptSample) -> Result<EmpiricalCdf, SimError> {
    if s.times.is_empty() {
        return Err(SimError::EmptySample);
    }
    let mut sorted = s.times.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalCdf { sorted, excluded_censored: s.censored })
}

/// Raw sample moments `m_k = (1/N) sum T_i^k`, `k = 1..=order`, lifted into a
/// [`MomentVector`] at double precision.
pub fn sample_moments(s: &FptSample, order: usize) -> Result<MomentVector, SimError> {
    if s.times.is_empty() {
        return Err(SimError::EmptySample);
    }
    let ctx = PrecisionContext::with_digits(53);
    let n = s.times.len() as f64;
    let values = (1..=order)
        .map(|k| {
            let sum: f64 = s.times.iter().map(|t| t.powi(k as i32)).sum();
            ctx.real(sum / n)
        })
        .collect();
    Ok(MomentVector::from_values(values))
}

/// Sample cumulants by inverting the moment recursion on the raw sample
/// moments (biased; not k-statistics).
pub fn sample_cumulants(s: &FptSample, order: usize) -> Result<CumulantVector, SimError> {
    Ok(moments_to_cumulants(&sample_moments(s, order)?))
}

/// Orthogonal-series density estimate
/// `g~_n(t) = f_(alpha,beta)(t) (1 + sum_k lbar_k b_k L_k(beta t))` with
/// `lbar_k` the sample mean of `L_k(beta T_i)` and
/// `b_k = k! Gamma(alpha+1) / Gamma(alpha+1+k)`.
#[derive(Clone, Debug)]
pub struct SeriesDensityEstimate {
    alpha: f64,
    beta: f64,
    lbar: Vec<f64>,
    weight: Vec<f64>,
}

impl SeriesDensityEstimate {
    pub fn eval(&self, t: f64) -> f64 {
        let mut series = 1.0;
        for (k, (l, w)) in self.lbar.iter().zip(self.weight.iter()).enumerate().skip(1) {
            series += l * w * fastmath::laguerre(k, self.alpha, self.beta * t);
        }
        fastmath::gamma_pdf(self.alpha, self.beta, t) * series
    }

    /// Sample means of the Laguerre polynomials, index `k`.
    pub fn laguerre_means(&self) -> &[f64] {
        &self.lbar
    }

    /// Orthogonality weights `b_k`.
    pub fn weights(&self) -> &[f64] {
        &self.weight
    }
}

pub fn orthogonal_series_estimate(
    s: &FptSample,
    reference: &GammaReference,
    n: usize,
) -> Result<SeriesDensityEstimate, SimError> {
    if s.times.is_empty() {
        return Err(SimError::EmptySample);
    }
    let alpha = reference.alpha().to_f64();
    let beta = reference.beta().to_f64();
    let count = s.times.len() as f64;
    let mut lbar = vec![1.0f64];
    for k in 1..=n {
        lbar.push(s.times.iter().map(|&t| fastmath::laguerre(k, alpha, beta * t)).sum::<f64>() / count);
    }
    let weight = laguerre_weights(alpha, n);
    Ok(SeriesDensityEstimate { alpha, beta, lbar, weight })
}

/// `b_k = k! Gamma(alpha+1) / Gamma(alpha+1+k) = k! / <alpha+1>_k`.
fn laguerre_weights(alpha: f64, n: usize) -> Vec<f64> {
    let mut weight = vec![1.0f64];
    let mut fact = 1.0;
    let mut rising = 1.0;
    for k in 1..=n {
        fact *= k as f64;
        rising *= alpha + k as f64;
        weight.push(fact / rising);
    }
    weight
}

/// Empirical variance term of the mean integrated squared error:
/// `(1/N) sum_{k=1}^n b_k Var[L_k(beta T)]`. The bias tail is not estimable
/// from data and is not returned.
pub fn mise_first_term(s: &FptSample, reference: &GammaReference, n: usize) -> Result<f64, SimError> {
    if s.times.is_empty() {
        return Err(SimError::EmptySample);
    }
    let alpha = reference.alpha().to_f64();
    let beta = reference.beta().to_f64();
    let count = s.times.len() as f64;
    let weight = laguerre_weights(alpha, n);
    let mut total = 0.0;
    for (k, w) in weight.iter().enumerate().skip(1) {
        let vals: Vec<f64> = s.times.iter().map(|&t| fastmath::laguerre(k, alpha, beta * t)).collect();
        let mean = vals.iter().sum::<f64>() / count;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
        total += w * var;
    }
    Ok(total / count)
}

/// Vasicek spacing estimator of the differential entropy:
/// `H^ = (1/N) sum ln[ (N/(2m)) (T_(i+m) - T_(i-m)) ]` with clamped order
/// statistics.
pub fn vasicek_entropy(s: &FptSample, m: usize) -> Result<f64, SimError> {
    if s.times.is_empty() {
        return Err(SimError::EmptySample);
    }
    let n = s.times.len();
    if m < 1 || n < 4 * m {
        return Err(SimError::ConfigError { what: format!("vasicek window m={m} needs N >= 4m, got N={n}") });
    }
    let mut sorted = s.times.clone();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let hi = (i + m).min(n - 1);
        let lo = i.saturating_sub(m);
        let spacing = (sorted[hi] - sorted[lo]).max(f64::MIN_POSITIVE);
        acc += (nf / (2.0 * m as f64) * spacing).ln();
    }
    Ok(acc / nf)
}

/// Dispersion summary: moment-based `c_v` and the entropy-based
/// `c_h = exp(H^ - 1) / mean`, with the Vasicek window `m = floor(sqrt(N))`.
#[derive(Clone, Copy, Debug)]
pub struct DispersionReport {
    pub c_v: f64,
    pub c_h: f64,
    pub mean: f64,
    pub variance: f64,
}

pub fn dispersion_report(s: &FptSample) -> Result<DispersionReport, SimError> {
    if s.times.is_empty() {
        return Err(SimError::EmptySample);
    }
    let mean = s.mean();
    let variance = s.variance();
    let m = (s.times.len() as f64).sqrt().floor() as usize;
    let entropy = vasicek_entropy(s, m.max(1))?;
    let c_h = (entropy - 1.0).exp() / mean;
    Ok(DispersionReport { c_v: variance.sqrt() / mean, c_h, mean, variance })
}

/// Uniform draw from the open interval `(0, 1)`.
pub(crate) fn open01(rng: &mut impl Rng) -> f64 {
    rng.sample(Open01)
}
