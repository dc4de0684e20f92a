//! Run manifest carried by every output file: command, inputs, config hash,
//! tool version, precision, timestamp.
//!
//! The timestamp honors `SOURCE_DATE_EPOCH` (the reproducible-builds
//! convention), so pinned environments produce byte-identical outputs.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use cirfpt::PrecisionContext;

pub struct Manifest {
    command: String,
    params: Option<String>,
    args: Vec<(String, String)>,
    config_hash: u64,
    tool_version: &'static str,
    precision_digits: u32,
    timestamp: u64,
}

impl Manifest {
    pub fn new(command: &str, params: Option<&Path>, ctx: &PrecisionContext, args: &[(&str, String)]) -> Self {
        let mut hash: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
        };
        eat(command.as_bytes());
        if let Some(p) = params {
            eat(p.to_string_lossy().as_bytes());
        }
        for (k, v) in args {
            eat(k.as_bytes());
            eat(v.as_bytes());
        }
        eat(&ctx.digits().to_le_bytes());
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or_else(|| {
                SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
            });
        Self {
            command: command.to_string(),
            params: params.map(|p| p.to_string_lossy().into_owned()),
            args: args.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            config_hash: hash,
            tool_version: env!("CARGO_PKG_VERSION"),
            precision_digits: ctx.digits(),
            timestamp,
        }
    }

    pub fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("command={}", self.command),
            format!("config_hash={:#018x}", self.config_hash),
            format!("tool_version={}", self.tool_version),
            format!("precision_digits={}", self.precision_digits),
            format!("timestamp={}", self.timestamp),
        ];
        if let Some(p) = &self.params {
            lines.insert(1, format!("params={p}"));
        }
        for (k, v) in &self.args {
            lines.push(format!("{k}={v}"));
        }
        lines
    }

    pub fn as_json(&self) -> serde_json::Value {
        serde_json::json!({
            "command": self.command,
            "params": self.params,
            "config_hash": format!("{:#018x}", self.config_hash),
            "tool_version": self.tool_version,
            "precision_digits": self.precision_digits,
            "timestamp": self.timestamp,
        })
    }
}
