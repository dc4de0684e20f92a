//! Approximation of first-passage-time (FPT) laws of the Cox-Ingersoll-Ross
//! (square-root) diffusion through a constant threshold.
//!
//! The pipeline:
//!
//! 1. exact FPT cumulants of the CIR process from a Kummer-function Laplace
//!    transform, via Stirling-number series and logarithmic polynomials
//!    ([`cir`], [`bell`], [`specfun`]);
//! 2. a truncated Laguerre-Gamma orthogonal expansion of the FPT pdf and cdf
//!    driven by those cumulants, with data-independent stopping rules
//!    ([`expansion`]);
//! 3. positivity and monotonicity repairs of the truncated approximant
//!    ([`correction`]);
//! 4. Monte Carlo ground truth (Milstein and exact-transition path sampling)
//!    plus orthogonal-series density estimation from samples ([`montecarlo`]);
//! 5. an acceptance-rejection FPT generator built on the corrected expansion
//!    ([`sampler`]).
//!
//! Everything upstream of the Monte Carlo layer runs at configurable extended
//! precision (default 256 binary digits); see [`PrecisionContext`].

pub mod bell;
pub mod cir;
pub mod correction;
pub mod expansion;
mod fastmath;
pub mod io;
pub mod montecarlo;
pub mod precision;
pub mod presets;
pub mod sampler;
pub mod specfun;

pub use cir::{CirParams, CumulantVector, MomentVector};
pub use correction::CorrectedPdf;
pub use expansion::{GammaReference, LaguerreGammaExpansion};
pub use montecarlo::{FptSample, Method, SimulationConfig};
pub use precision::{PrecisionContext, Real};
