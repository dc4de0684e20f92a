//! Wire formats: CIR parameter JSON, the expansion JSON with decimal-string
//! numerics, and the plain-text sample-file format.
//!
//! Sample files hold one decimal FPT per line after `#`-prefixed header lines
//! carrying provenance (`method`, `dt`, `seed`, `censored`, ...). Expansion
//! JSON stores every numeric field as a decimal string so extended precision
//! survives the round trip.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cir::{CirError, CirParams};
use crate::expansion::{ExpansionError, GammaReference, LaguerreGammaExpansion};
use crate::montecarlo::{FptSample, Method};
use crate::precision::{PrecisionContext, Real};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed input: {what}")]
    Malformed { what: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Cir(#[from] CirError),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
}

/// JSON shape of the CIR parameters: a flat object with keys
/// `tau, mu, sigma, c, y0, S`, each a number or a decimal string.
#[derive(Debug, Serialize, Deserialize)]
pub struct CirParamsDto {
    pub tau: NumberOrString,
    pub mu: NumberOrString,
    pub sigma: NumberOrString,
    pub c: NumberOrString,
    pub y0: NumberOrString,
    #[serde(rename = "S")]
    pub threshold: NumberOrString,
}

/// A numeric JSON field that may arrive as a number or as a decimal string
/// (strings preserve digits beyond double precision).
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberOrString {
    Number(f64),
    Text(String),
}

impl NumberOrString {
    fn to_real(&self, ctx: &PrecisionContext) -> Result<Real, IoError> {
        match self {
            NumberOrString::Number(v) => Ok(ctx.real(*v)),
            NumberOrString::Text(s) => ctx
                .parse(s.trim())
                .map_err(|e| IoError::Malformed { what: format!("bad numeric string {s:?}: {e}") }),
        }
    }
}

/// Parses CIR parameters from JSON text at the context's precision.
pub fn params_from_json(text: &str, ctx: &PrecisionContext) -> Result<CirParams, IoError> {
    let dto: CirParamsDto = serde_json::from_str(text)?;
    Ok(CirParams::new(
        dto.tau.to_real(ctx)?,
        dto.mu.to_real(ctx)?,
        dto.sigma.to_real(ctx)?,
        dto.c.to_real(ctx)?,
        dto.y0.to_real(ctx)?,
        dto.threshold.to_real(ctx)?,
    )?)
}

/// Serializes CIR parameters to the flat JSON object (decimal strings).
pub fn params_to_json(p: &CirParams) -> serde_json::Value {
    let s = |v: &Real| serde_json::Value::String(real_to_decimal(v));
    serde_json::json!({
        "tau": s(p.tau()),
        "mu": s(p.mu()),
        "sigma": s(p.sigma()),
        "c": s(p.lower()),
        "y0": s(p.y0()),
        "S": s(p.threshold()),
    })
}

/// Full-precision decimal rendering (round-trips exactly through
/// [`PrecisionContext::parse`] at the same precision).
pub fn real_to_decimal(v: &Real) -> String {
    v.to_string_radix(10, None)
}

/// JSON shape of a built expansion:
/// `{alpha, beta, sigma_T, n, B[], h[]}` with decimal-string numerics.
#[derive(Debug, Serialize, Deserialize)]
pub struct ExpansionDto {
    pub alpha: String,
    pub beta: String,
    #[serde(rename = "sigma_T")]
    pub sigma_t: String,
    pub n: usize,
    #[serde(rename = "B")]
    pub b: Vec<String>,
    pub h: Vec<String>,
}

impl ExpansionDto {
    pub fn from_expansion(e: &LaguerreGammaExpansion) -> Self {
        Self {
            alpha: real_to_decimal(e.reference().alpha()),
            beta: real_to_decimal(e.reference().beta()),
            sigma_t: real_to_decimal(e.reference().sigma_t()),
            n: e.order(),
            b: e.coefficients_b().iter().map(real_to_decimal).collect(),
            h: e.coefficients_h().iter().map(real_to_decimal).collect(),
        }
    }

    /// Rebuilds the evaluation machinery at the context's precision. The
    /// moment vector is not stored in the wire format; evaluation (pdf, cdf,
    /// increments, normalization residual) does not need it.
    pub fn into_expansion(&self, ctx: &PrecisionContext) -> Result<LaguerreGammaExpansion, IoError> {
        let parse = |s: &String| {
            ctx.parse(s.trim())
                .map_err(|e| IoError::Malformed { what: format!("bad decimal {s:?}: {e}") })
        };
        let alpha = parse(&self.alpha)?;
        let beta = parse(&self.beta)?;
        let sigma_t = parse(&self.sigma_t)?;
        let b: Vec<Real> = self.b.iter().map(parse).collect::<Result<_, _>>()?;
        if b.len() != self.n + 1 {
            return Err(IoError::Malformed { what: format!("B has {} entries, expected n+1 = {}", b.len(), self.n + 1) });
        }
        let reference = GammaReference::new(alpha, beta, sigma_t)?;
        Ok(LaguerreGammaExpansion::from_parts(reference, b, ctx.clone()))
    }
}

/// Writes a sample file: provenance headers then one decimal FPT per line.
/// `extra_headers` lines (already `key=value`) are appended to the standard
/// provenance block.
pub fn write_sample(w: &mut impl Write, s: &FptSample, dt: Option<f64>, seed: u64, extra_headers: &[String]) -> Result<(), IoError> {
    writeln!(w, "# cirfpt sample v1")?;
    writeln!(w, "# method={}", s.method.tag())?;
    if let Some(dt) = dt {
        writeln!(w, "# dt={dt}")?;
    }
    writeln!(w, "# seed={seed}")?;
    writeln!(w, "# n={}", s.times.len())?;
    writeln!(w, "# censored={}", s.censored)?;
    writeln!(w, "# clamp_activations={}", s.clamp_activations)?;
    writeln!(w, "# config_digest={:#018x}", s.config_digest)?;
    for line in extra_headers {
        writeln!(w, "# {line}")?;
    }
    for t in &s.times {
        writeln!(w, "{t}")?;
    }
    Ok(())
}

/// Parsed sample file: the sample plus all `key=value` header fields.
pub struct SampleFile {
    pub sample: FptSample,
    pub headers: BTreeMap<String, String>,
}

/// Reads a sample file written by [`write_sample`].
pub fn read_sample(r: &mut impl BufRead) -> Result<SampleFile, IoError> {
    let mut headers = BTreeMap::new();
    let mut times = Vec::new();
    for line in r.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                headers.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        let t: f64 = trimmed
            .parse()
            .map_err(|_| IoError::Malformed { what: format!("bad sample line {trimmed:?}") })?;
        times.push(t);
    }
    let method = headers
        .get("method")
        .and_then(|m| Method::from_tag(m))
        .unwrap_or(Method::Milstein);
    let censored = headers.get("censored").and_then(|v| v.parse().ok()).unwrap_or(0);
    let clamp_activations = headers.get("clamp_activations").and_then(|v| v.parse().ok()).unwrap_or(0);
    let config_digest = headers
        .get("config_digest")
        .and_then(|v| u64::from_str_radix(v.trim_start_matches("0x"), 16).ok())
        .unwrap_or(0);
    Ok(SampleFile {
        sample: FptSample { times, censored, method, config_digest, clamp_activations },
        headers,
    })
}
