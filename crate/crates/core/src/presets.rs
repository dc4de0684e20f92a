//! Reference parameter sets used across the test-suite, benchmarks and
//! examples. They exercise qualitatively different passage-time regimes.

use crate::cir::{CirError, CirParams};
use crate::precision::PrecisionContext;

/// Light-tailed regime: coefficient of variation below one, fastest series
/// convergence. `tau = 2/3`, `mu = 0.9`, `sigma = 1.2`, `c = 0`, `y0 = 0.2`,
/// `S = 1`.
pub fn light_tail(ctx: &PrecisionContext) -> Result<CirParams, CirError> {
    CirParams::new(
        ctx.real(2) / 3u32,
        ctx.real(0.9),
        ctx.real(1.2),
        ctx.zero(),
        ctx.real(0.2),
        ctx.one(),
    )
}

/// Heavy-tailed regime: coefficient of variation above one, the hard case for
/// the coefficient recursion. `tau = 0.25`, `mu = 0.005`, `sigma = 0.1`,
/// `c = 0`, `y0 = 0.01`, `S = 0.02`.
pub fn heavy_tail(ctx: &PrecisionContext) -> Result<CirParams, CirError> {
    CirParams::new(
        ctx.real(0.25),
        ctx.real(0.005),
        ctx.real(0.1),
        ctx.zero(),
        ctx.real(0.01),
        ctx.real(0.02),
    )
}

/// Negative lower boundary far from the start: intermediate tail weight.
/// `tau = 0.2`, `mu = 3`, `sigma = 1.2`, `c = -10`, `y0 = 0`, `S = 10`.
pub fn shifted_lower_boundary(ctx: &PrecisionContext) -> Result<CirParams, CirError> {
    CirParams::new(
        ctx.real(0.2),
        ctx.real(3),
        ctx.real(1.2),
        ctx.real(-10),
        ctx.zero(),
        ctx.real(10),
    )
}

/// All three presets with short labels, for table-driven tests.
pub fn all(ctx: &PrecisionContext) -> Vec<(&'static str, CirParams)> {
    vec![
        ("light_tail", light_tail(ctx).unwrap()),
        ("heavy_tail", heavy_tail(ctx).unwrap()),
        ("shifted_lower_boundary", shifted_lower_boundary(ctx).unwrap()),
    ]
}
