//! Batch command-line front end: wires the cumulant engine, expansion builder,
//! corrections, simulators and the acceptance-rejection sampler together and
//! emits machine-readable artifacts (JSON, CSV, sample files).
//!
//! Exit codes: 0 success, 1 input error, 2 model-invariant violation,
//! 3 numerical failure.

mod manifest;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use cirfpt::cir::{cumulants_to_moments, fpt_cumulants, CirError};
use cirfpt::correction::{apply_corrections, correct_cdf_monotone, scan_upper_limit, CorrectionError};
use cirfpt::expansion::{
    build_at_order, build_expansion, build_standardized, select_gamma_params, standardize,
    ExpansionError, DEFAULT_EPS, DEFAULT_N_MAX,
};
use cirfpt::io::{params_from_json, read_sample, write_sample, ExpansionDto, IoError};
use cirfpt::montecarlo::{
    dispersion_report, empirical_cdf, ks::ks_vs_cdf, orthogonal_series_estimate, sample_cumulants,
    simulate_fpt_milstein, simulate_fpt_transition, Method, SimError, SimulationConfig,
};
use cirfpt::sampler::{ar_sample, ArConfig, SamplerError};
use cirfpt::specfun::SpecFunError;
use cirfpt::PrecisionContext;

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "cirfpt", version, about = "CIR first-passage-time approximation toolkit")]
struct Cli {
    /// Working precision in binary digits.
    #[arg(long, global = true, env = "CIRFPT_DIGITS", default_value_t = 256)]
    digits: u32,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact FPT cumulants, moments and reference parameters from a params file.
    Moments {
        params: PathBuf,
        /// Highest cumulant/moment order.
        #[arg(long, default_value_t = 8)]
        order: u32,
        /// Series truncation tolerance (relative).
        #[arg(long)]
        tol: Option<f64>,
        /// Output JSON path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the Laguerre-Gamma expansion and emit its JSON plus a (t, pdf, cdf) grid CSV.
    Expand {
        params: PathBuf,
        /// Stopping-rule tolerance.
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        /// Order budget for the stopping rule.
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        nmax: usize,
        /// Force a fixed truncation order, bypassing the stopping rule.
        #[arg(long)]
        order: Option<usize>,
        /// Standardize to unit variance before expanding.
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        standardize: bool,
        /// Apply positivity/monotonicity corrections to the emitted grid.
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        correct: bool,
        /// Number of grid rows in the CSV.
        #[arg(long, default_value_t = 2000)]
        grid_points: usize,
        /// Upper end of the grid (original time units; derived if omitted).
        #[arg(long)]
        t_hi: Option<f64>,
        /// Output prefix: writes <prefix>.expansion.json and <prefix>.grid.csv.
        #[arg(long, default_value = "expansion")]
        out_prefix: String,
    },
    /// Monte Carlo FPT sample by SDE or transition-density simulation.
    Simulate {
        params: PathBuf,
        /// milstein | transition
        #[arg(long, default_value = "milstein")]
        method: String,
        /// Number of paths.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Time step.
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Censoring horizon (default 40 E[T]).
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output sample file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Acceptance-rejection FPT sample from the corrected expansion.
    Ar {
        params: PathBuf,
        /// Tail budget / tail mixture weight.
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        /// Number of draws.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Stopping-rule tolerance for the underlying expansion.
        #[arg(long, default_value_t = DEFAULT_EPS)]
        expansion_eps: f64,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        nmax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Orthogonal-series density estimate from a sample file.
    Estimate {
        sample: PathBuf,
        /// Series order n.
        #[arg(long, default_value_t = 10)]
        order: usize,
        #[arg(long, default_value_t = 500)]
        grid_points: usize,
        /// Output CSV (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare an expansion JSON against a sample file (KS, sup cdf error).
    Validate {
        expansion: PathBuf,
        sample: PathBuf,
        /// Output JSON (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Model(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Model(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Model(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("i/o failure: {e}"))
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Cir(c) => c.into(),
            IoError::Expansion(x) => x.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<CirError> for CliError {
    fn from(e: CirError) -> Self {
        match e {
            CirError::SpecFun(s) => s.into(),
            CirError::Bell(b) => CliError::Numerical(b.to_string()),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<SpecFunError> for CliError {
    fn from(e: SpecFunError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<ExpansionError> for CliError {
    fn from(e: ExpansionError) -> Self {
        match e {
            ExpansionError::Cir(c) => c.into(),
            ExpansionError::InvalidReference { .. } => CliError::Model(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<CorrectionError> for CliError {
    fn from(e: CorrectionError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ConfigError { .. } => CliError::Input(e.to_string()),
            SimError::EmptySample => CliError::Input(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::ConfigError { .. } => CliError::Input(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cirfpt: error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn read_params(path: &Path, ctx: &PrecisionContext) -> Result<cirfpt::CirParams, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(params_from_json(&text, ctx)?)
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = PrecisionContext::with_digits(cli.digits.max(53));
    match cli.cmd {
        Cmd::Moments { params, order, tol, out } => {
            let ctx = match tol {
                Some(t) if t > 0.0 && t < 1.0 => ctx.with_series_tol(t),
                Some(t) => return Err(CliError::Input(format!("tol must lie in (0,1), got {t}"))),
                None => ctx,
            };
            let p = read_params(&params, &ctx)?;
            let manifest = Manifest::new("moments", Some(&params), &ctx, &[("order", order.to_string())]);
            let cum = fpt_cumulants(&p, order.max(2), &ctx)?;
            let mom = cumulants_to_moments(&cum);
            let (std_cum, sigma_t) = standardize(&cum);
            let reference = select_gamma_params(std_cum.get(1), std_cum.get(2))?;
            let dec = cirfpt::io::real_to_decimal;
            let json = serde_json::json!({
                "manifest": manifest.as_json(),
                "cumulants": cum.values().iter().map(dec).collect::<Vec<_>>(),
                "moments": mom.values().iter().map(dec).collect::<Vec<_>>(),
                "mean": cum.get(1).to_f64(),
                "variance": cum.get(2).to_f64(),
                "c_v": cum.coefficient_of_variation().to_f64(),
                "skewness": mom.skewness().map(|v| v.to_f64()),
                "kurtosis": mom.excess_kurtosis().map(|v| v.to_f64()),
                "alpha": reference.alpha().to_f64(),
                "beta": reference.beta().to_f64(),
                "sigma_T": sigma_t.to_f64(),
            });
            emit(out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&json).unwrap()))
        }
        Cmd::Expand {
            params,
            eps,
            nmax,
            order,
            standardize: do_std,
            correct,
            grid_points,
            t_hi,
            out_prefix,
        } => {
            let p = read_params(&params, &ctx)?;
            let manifest = Manifest::new(
                "expand",
                Some(&params),
                &ctx,
                &[
                    ("eps", eps.to_string()),
                    ("nmax", nmax.to_string()),
                    ("standardize", do_std.to_string()),
                    ("correct", correct.to_string()),
                ],
            );
            // build (standardized or raw scale)
            let (expansion, sigma_t) = if do_std {
                match order {
                    Some(n) => {
                        let cum = fpt_cumulants(&p, (n as u32 + 1).max(2), &ctx)?;
                        let (std_cum, sigma_t) = standardize(&cum);
                        let reference = select_gamma_params(std_cum.get(1), std_cum.get(2))?;
                        let moments = cumulants_to_moments(&std_cum);
                        let e = build_at_order(&moments, &reference, n, &ctx)?;
                        (e, sigma_t.to_f64())
                    }
                    None => {
                        let built = build_standardized(&p, eps, nmax, &ctx)?;
                        let sigma_t = built.sigma_t.to_f64();
                        (built.expansion, sigma_t)
                    }
                }
            } else {
                let big_k = order.map(|n| n as u32 + 1).unwrap_or((nmax as u32 + 1).min(24)).max(2);
                let cum = fpt_cumulants(&p, big_k, &ctx)?;
                let reference = select_gamma_params(cum.get(1), cum.get(2))?;
                let moments = cumulants_to_moments(&cum);
                let e = match order {
                    Some(n) => build_at_order(&moments, &reference, n, &ctx)?,
                    None => build_expansion(&moments, &reference, eps, nmax, &ctx)?,
                };
                (e, 1.0)
            };
            let dto = ExpansionDto::from_expansion(&expansion);
            let json = serde_json::json!({
                "manifest": manifest.as_json(),
                "order": expansion.order(),
                "capped": expansion.was_capped(),
                "normalization_residual": expansion.normalization_residual().to_f64(),
                "expansion": serde_json::to_value(&dto).unwrap(),
            });
            fs::write(format!("{out_prefix}.expansion.json"), format!("{}\n", serde_json::to_string_pretty(&json).unwrap()))?;

            // grid in original time units
            let hi = t_hi.unwrap_or_else(|| scan_upper_limit(&expansion, 0.9999) * sigma_t);
            let corrected = if correct { Some(apply_corrections(&expansion)?) } else { None };
            let n_rows = grid_points.max(2);
            let ts: Vec<f64> = (1..=n_rows).map(|i| hi * i as f64 / n_rows as f64).collect();
            let mut pdf_col = Vec::with_capacity(n_rows);
            let mut cdf_col = Vec::with_capacity(n_rows);
            for &t in &ts {
                let ts_std = t / sigma_t;
                let pdf = match &corrected {
                    Some(c) => c.pdf_f64(ts_std) / sigma_t,
                    None => expansion.pdf_f64(ts_std) / sigma_t,
                };
                pdf_col.push(pdf);
                cdf_col.push(expansion.cdf_f64(ts_std));
            }
            if correct {
                cdf_col = correct_cdf_monotone(&cdf_col);
            }
            let mut csv = String::new();
            for line in manifest.header_lines() {
                csv.push_str(&format!("# {line}\n"));
            }
            if correct {
                csv.push_str("t,pdf,cdf\n");
                for i in 0..n_rows {
                    csv.push_str(&format!("{},{},{}\n", ts[i], pdf_col[i], cdf_col[i]));
                }
            } else {
                csv.push_str("t,pdf,cdf,negative\n");
                for i in 0..n_rows {
                    let flag = if pdf_col[i] < 0.0 { 1 } else { 0 };
                    csv.push_str(&format!("{},{},{},{}\n", ts[i], pdf_col[i], cdf_col[i], flag));
                }
            }
            fs::write(format!("{out_prefix}.grid.csv"), csv)?;
            Ok(())
        }
        Cmd::Simulate { params, method, n, dt, tmax, seed, out } => {
            let p = read_params(&params, &ctx)?;
            let method = match method.as_str() {
                "milstein" => Method::Milstein,
                "transition" => Method::Transition,
                other => return Err(CliError::Input(format!("unknown method {other:?}"))),
            };
            let t_max = match tmax {
                Some(t) => t,
                None => {
                    let cum = fpt_cumulants(&p, 2, &ctx)?;
                    40.0 * cum.get(1).to_f64()
                }
            };
            let cfg = SimulationConfig { dt, t_max, n_paths: n, seed, method };
            let sample = match method {
                Method::Milstein => simulate_fpt_milstein(&p, &cfg)?,
                Method::Transition => simulate_fpt_transition(&p, &cfg)?,
                Method::AcceptanceRejection => unreachable!(),
            };
            let manifest = Manifest::new(
                "simulate",
                Some(&params),
                &ctx,
                &[
                    ("method", method.tag().to_string()),
                    ("n", n.to_string()),
                    ("dt", dt.to_string()),
                    ("tmax", t_max.to_string()),
                    ("seed", seed.to_string()),
                ],
            );
            let mut buf = Vec::new();
            write_sample(&mut buf, &sample, Some(dt), seed, &manifest.header_lines())
                .map_err(|e| CliError::Input(e.to_string()))?;
            emit(out.as_deref(), &String::from_utf8(buf).unwrap())
        }
        Cmd::Ar { params, eps, n, seed, expansion_eps, nmax, out } => {
            let p = read_params(&params, &ctx)?;
            let built = build_standardized(&p, expansion_eps, nmax, &ctx)?;
            let corrected = apply_corrections(&built.expansion)?;
            let mean = built.expansion.moments().get(1).to_f64();
            let cfg = ArConfig { eps, n_draws: n, seed };
            let (sample, report) = ar_sample(&corrected, mean, &cfg)?;
            let manifest = Manifest::new(
                "ar",
                Some(&params),
                &ctx,
                &[
                    ("eps", eps.to_string()),
                    ("n", n.to_string()),
                    ("seed", seed.to_string()),
                    ("C", report.truncation.to_string()),
                    ("M", report.envelope.to_string()),
                    ("proposals", report.proposals.to_string()),
                    ("tail_draws", report.tail_draws.to_string()),
                ],
            );
            let mut buf = Vec::new();
            write_sample(&mut buf, &sample, None, seed, &manifest.header_lines())
                .map_err(|e| CliError::Input(e.to_string()))?;
            emit(out.as_deref(), &String::from_utf8(buf).unwrap())
        }
        Cmd::Estimate { sample, order, grid_points, out } => {
            let file = fs::File::open(&sample)
                .map_err(|e| CliError::Input(format!("cannot open {}: {e}", sample.display())))?;
            let parsed = read_sample(&mut BufReader::new(file))?;
            if parsed.sample.times.is_empty() {
                return Err(CliError::Input("sample file holds no observations".into()));
            }
            let cum = sample_cumulants(&parsed.sample, 2)?;
            let reference = select_gamma_params(cum.get(1), cum.get(2))?;
            let estimate = orthogonal_series_estimate(&parsed.sample, &reference, order)?;
            let disp = dispersion_report(&parsed.sample)?;
            let manifest = Manifest::new("estimate", Some(&sample), &ctx, &[("order", order.to_string())]);
            let hi = parsed.sample.times.iter().cloned().fold(f64::MIN, f64::max);
            let mut csv = String::new();
            for line in manifest.header_lines() {
                csv.push_str(&format!("# {line}\n"));
            }
            csv.push_str(&format!("# alpha={} beta={}\n", reference.alpha().to_f64(), reference.beta().to_f64()));
            csv.push_str(&format!("# c_v={} c_h={}\n", disp.c_v, disp.c_h));
            csv.push_str("t,density\n");
            let n_rows = grid_points.max(2);
            for i in 1..=n_rows {
                let t = hi * i as f64 / n_rows as f64;
                csv.push_str(&format!("{},{}\n", t, estimate.eval(t)));
            }
            emit(out.as_deref(), &csv)
        }
        Cmd::Validate { expansion, sample, out } => {
            let text = fs::read_to_string(&expansion)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", expansion.display())))?;
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Input(e.to_string()))?;
            let dto: ExpansionDto = serde_json::from_value(
                value.get("expansion").cloned().unwrap_or(value.clone()),
            )
            .map_err(|e| CliError::Input(format!("bad expansion JSON: {e}")))?;
            let exp = dto.into_expansion(&ctx)?;
            let file = fs::File::open(&sample)
                .map_err(|e| CliError::Input(format!("cannot open {}: {e}", sample.display())))?;
            let parsed = read_sample(&mut BufReader::new(file))?;
            if parsed.sample.times.is_empty() {
                return Err(CliError::Input("sample file holds no observations".into()));
            }
            let sigma_t = exp.reference().sigma_t().to_f64();
            let standardized = parsed.sample.scaled(sigma_t);
            let _ecdf = empirical_cdf(&standardized)?;
            // monotone-corrected cdf on a grid covering the sample
            let hi = standardized.times.iter().cloned().fold(f64::MIN, f64::max) * 1.05;
            let n_grid = 8192;
            let grid_cdf: Vec<f64> = (0..=n_grid).map(|i| exp.cdf_f64(hi * i as f64 / n_grid as f64)).collect();
            let grid_cdf = correct_cdf_monotone(&grid_cdf);
            let cdf_at = |t: f64| -> f64 {
                if t <= 0.0 {
                    return 0.0;
                }
                let pos = (t / hi * n_grid as f64).min(n_grid as f64);
                let i = pos.floor() as usize;
                if i >= n_grid {
                    return grid_cdf[n_grid];
                }
                let frac = pos - i as f64;
                grid_cdf[i] * (1.0 - frac) + grid_cdf[i + 1] * frac
            };
            let (ks, at) = ks_vs_cdf(&standardized.times, cdf_at);
            let manifest = Manifest::new("validate", Some(&expansion), &ctx, &[]);
            let json = serde_json::json!({
                "manifest": manifest.as_json(),
                "n": exp.order(),
                "alpha": exp.reference().alpha().to_f64(),
                "beta": exp.reference().beta().to_f64(),
                "sigma_T": sigma_t,
                "ks": ks,
                "sup_cdf_error": ks,
                "argmax_t": at,
                "sample_size": standardized.times.len(),
                "censored": parsed.sample.censored,
            });
            emit(out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&json).unwrap()))
        }
    }
}
