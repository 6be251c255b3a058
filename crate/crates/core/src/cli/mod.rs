//! Batch driver: resolves a config, runs one experiment and writes its artifacts.
//!
//! Exit status: 0 on success, 2 on validation errors, 3 on numerical or I/O failure.
//! Artifacts are built in memory and written last; if any write fails the ones already
//! written are removed.

pub mod config;
pub mod svg;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};

use crate::combinatorics::{coefficient, enumerate_indices, free_leg_profile, gaussian_moment, ContractionIndex};
use crate::constants::{
    breuer_major_sigma, c_hq, c_hq_by_quadrature, fou_covariance, k_x_alpha, limit_constants, ma_covariance, KMethod,
};
use crate::error::{Error, Result};
use crate::functionals::{critical_ou_scan, hou_experiment, scan_scaling, HouConfig, ScalingReport, ScanConfig};
use crate::hermite::{classify_regime, expand};
use crate::power_counting::{check_integrability, check_integrability_bounded, divergence_oracle, OracleSettings, PowerCountingProblem};
use crate::process::{fgn, hermite_path, hou_path, HurstSpec, MaGrid, MaSimulator, SamplePath};

use config::{
    parse_override, resolve, ConstantsParams, ExperimentConfig, KMethodParam, Params, PathKindParam, Quantity, Subcommand,
};
use svg::{loglog_plot, Line};

/// Environment variable naming the output directory when `--out` is absent.
pub const OUT_ENV: &str = "HERMITE_LAB_OUT";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Debug, Parser)]
#[command(name = "hermite-lab", version, about = "Polynomial functionals of Hermite-driven moving averages")]
pub struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    pub subcommand: Subcommand,
    /// TOML config (schema_version = 1).
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output directory; beats $HERMITE_LAB_OUT and the config's output.dir.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override a parameter of the subcommand's table, e.g. `--set kernel.rate=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
}

/// Parses arguments, runs, reports, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&args) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("hermite-lab: {e}");
            e.exit_code()
        }
    }
}

/// Resolves the config and runs it; returns the one-line summary.
pub fn run(args: &Args) -> Result<String> {
    let file = match &args.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut overrides = args.overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>>>()?;
    if let Some(s) = args.seed {
        overrides.push((vec!["seed".into()], toml::Value::Integer(seed_as_toml(s)?)));
    }
    if let Some(r) = args.replications {
        let r = i64::try_from(r).map_err(|_| Error::Config("replications too large".into()))?;
        overrides.push((vec!["replications".into()], toml::Value::Integer(r)));
    }
    let cfg = resolve(file.as_deref(), args.subcommand, &overrides)?;
    let out = output_dir(args.out.as_deref(), std::env::var_os(OUT_ENV), &cfg);
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
    }
    let threads = args.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    eprintln!("hermite-lab: {} with {threads} thread(s) -> {}", cfg.subcommand, out.display());
    let (artifacts, summary) = pool.install(|| execute(&cfg))?;
    write_artifacts(&out, &cfg, &artifacts)?;
    Ok(format!("{summary} [{}]", out.display()))
}

fn seed_as_toml(s: u64) -> Result<i64> {
    // TOML integers are signed 64-bit.
    i64::try_from(s).map_err(|_| Error::Config(format!("seed {s} exceeds {}", i64::MAX)))
}

fn output_dir(flag: Option<&Path>, env: Option<OsString>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(e) = env.filter(|e| !e.is_empty()) {
        return PathBuf::from(e);
    }
    cfg.output
        .dir
        .clone()
        .unwrap_or_else(|| Path::new("hermite-lab-out").join(cfg.subcommand.name()))
}

/// File name and contents.
pub type Artifact = (String, Vec<u8>);

fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, artifacts: &[Artifact]) -> Result<()> {
    let created_dir = !dir.exists();
    let mut written: Vec<PathBuf> = Vec::new();
    let mut attempt = || -> Result<()> {
        fs::create_dir_all(dir)?;
        let resolved = cfg.to_toml()?;
        for (name, bytes) in std::iter::once(&(RESOLVED_CONFIG.to_string(), resolved.into_bytes())).chain(artifacts) {
            let path = dir.join(name);
            written.push(path.clone());
            fs::write(&path, bytes)?;
        }
        Ok(())
    };
    let result = attempt();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        if created_dir {
            let _ = fs::remove_dir(dir);
        }
    }
    result
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn execute(cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, String)> {
    match &cfg.params {
        Params::Simulate(p) => {
            let spec = HurstSpec::new(p.q, p.h)?;
            if p.steps == 0 {
                return Err(Error::invalid("steps must be positive"));
            }
            let path = match p.kind {
                PathKindParam::Fgn => fgn(p.h, p.steps, p.t_max / p.steps as f64, p.seed, p.stream)?,
                PathKindParam::Hermite => {
                    hermite_path(spec, p.steps, p.t_max, p.steps * p.substeps.max(1), p.seed, p.stream)?
                }
                PathKindParam::MovingAverage => {
                    let mut grid = MaGrid::new(p.t_max / p.steps as f64, p.t_max);
                    grid.substeps = p.substeps;
                    MaSimulator::new(spec, &p.kernel, grid)?.sample_path(p.seed, p.stream)
                }
                PathKindParam::Hou => hou_path(spec, p.alpha, p.steps, p.t_max, p.seed, p.stream)?,
            };
            simulate_artifacts(&path, p.binary)
        }
        Params::ScanScaling(p) => {
            let spec = HurstSpec::new(p.q, p.h)?;
            let mut sc = ScanConfig::new(spec, p.kernel.clone(), p.polynomial.0.clone(), p.horizons.clone(), p.replications, p.seed);
            sc.dt = p.dt;
            sc.substeps = p.substeps;
            sc.t_points = p.t_points.clone();
            sc.fit_points = p.fit_points;
            if p.critical_ou {
                let r = critical_ou_scan(&sc)?;
                let mut csv = String::from("T,variance,normalized\n");
                for pt in &r.points {
                    let _ = writeln!(csv, "{},{},{}", pt.horizon, pt.variance, pt.normalized);
                }
                let last = r.points.last().map_or(f64::NAN, |pt| pt.normalized);
                let summary = format!(
                    "scan-scaling critical: Var/(T log T) = {last:.4} at T = {} (stated constant² {:.4})",
                    sc.horizons.last().copied().unwrap_or(f64::NAN),
                    r.stated_constant_squared
                );
                return Ok((
                    vec![("critical.json".into(), json_bytes(&r)?), ("critical.csv".into(), csv.into_bytes())],
                    summary,
                ));
            }
            let r = scan_scaling(&sc)?;
            if !r.regime_agreement {
                eprintln!(
                    "hermite-lab: fitted slope {} ± {} disagrees with predicted {}",
                    r.slope, r.slope_se, r.predicted_slope
                );
            }
            if r.diagnostics.underpowered {
                eprintln!("hermite-lab: {} replications is below the diagnostics minimum", r.replications);
            }
            let mut artifacts = vec![
                ("scaling.json".into(), json_bytes(&r)?),
                ("scaling.csv".into(), scaling_csv(&r).into_bytes()),
            ];
            if p.svg {
                artifacts.push(("scaling.svg".into(), scaling_svg(&r).into_bytes()));
            }
            let summary = format!(
                "scan-scaling: slope {:.4} ± {:.4}, predicted {} ({:?}), skew {:.3}, ex. kurtosis {:.3}",
                r.slope,
                r.slope_se,
                r.predicted_slope_exact,
                r.regime.family,
                r.diagnostics.skewness,
                r.diagnostics.excess_kurtosis
            );
            Ok((artifacts, summary))
        }
        Params::Rank(p) => {
            let e = expand(&p.polynomial.0, &p.variance.0)?;
            let mut out = json!({
                "polynomial": p.polynomial.0,
                "variance": p.variance.0.to_string(),
                "rank": e.rank,
                "mean_term": e.mean_term.to_string(),
                "expansion": e.coeffs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<BTreeMap<_, _>>(),
            });
            let regime = match (p.q, &p.h) {
                (Some(q), Some(h)) => Some(classify_regime(q, &h.0, &p.polynomial.0, &p.variance.0)?),
                (None, None) => None,
                _ => return Err(Error::invalid("rank: give both q and H to classify the regime")),
            };
            if let Some(r) = &regime {
                out["regime"] = serde_json::to_value(r)?;
            }
            let rank = e.rank.map_or("undefined".to_string(), |r| r.to_string());
            let summary = match regime {
                Some(r) => format!("rank: {rank}, regime {:?}, normalization exponent {}", r.family, r.normalization_exponent),
                None => format!("rank: {rank}"),
            };
            Ok((vec![("rank.json".into(), json_bytes(&out)?)], summary))
        }
        Params::Constants(p) => constants(p),
        Params::PowerCount(p) => {
            let rats = |v: &[config::Rational]| v.iter().map(|r| r.0.clone()).collect::<Vec<_>>();
            let pair = |v: &[[config::Rational; 2]]| v.iter().map(|[a, b]| (a.0.clone(), b.0.clone())).collect::<Vec<_>>();
            let mut problem = PowerCountingProblem::new(
                p.dimension,
                p.functionals.iter().map(|f| rats(f)).collect(),
                pair(&p.exponents),
            )?;
            if let Some(b) = &p.bounds {
                problem = problem.with_bounds(pair(b))?;
            }
            let verdict = if p.bounded_domain {
                check_integrability_bounded(&problem)?
            } else {
                check_integrability(&problem)?
            };
            let mut out = serde_json::to_value(&verdict)?;
            let mut summary = format!("power-count: {}", serde_json::to_value(verdict.finite)?.as_str().unwrap_or("?"));
            if let Some(w) = &verdict.witness {
                let _ = write!(summary, ", witness {:?} on {:?} = {}", w.condition, w.subset, w.value);
            }
            if p.oracle {
                let o = divergence_oracle(&problem, OracleSettings::default())?;
                let _ = write!(summary, ", oracle {:?}", o.verdict);
                out["oracle"] = serde_json::to_value(&o)?;
            }
            Ok((vec![("power_count.json".into(), json_bytes(&out)?)], summary))
        }
        Params::Hou(p) => {
            let r = hou_experiment(&HouConfig {
                spec: HurstSpec::new(p.q, p.h)?,
                alpha: p.alpha,
                f: p.f.0.clone(),
                horizon: p.horizon,
                dt: p.dt,
                substeps: p.substeps,
                replications: p.replications,
                seed: p.seed,
            })?;
            let mut csv = String::from("replication,average\n");
            for (i, a) in r.averages.iter().enumerate() {
                let _ = writeln!(csv, "{i},{a}");
            }
            let summary = match r.reference {
                Some(reference) => format!(
                    "hou: mean average {:.6} (sd {:.3e}), reference {reference:.6}, deviation {:.2} sd",
                    r.mean,
                    r.sd,
                    r.deviation_in_sd.unwrap_or(f64::NAN)
                ),
                None => format!("hou: mean average {:.6} (sd {:.3e})", r.mean, r.sd),
            };
            Ok((vec![("hou.json".into(), json_bytes(&r)?), ("hou.csv".into(), csv.into_bytes())], summary))
        }
        Params::Combinatorics(p) => {
            let indices = enumerate_indices(p.n, p.q, p.order)?;
            let mut csv = String::from("order,coefficient,entries\n");
            let mut rows = Vec::with_capacity(indices.len());
            for a in &indices {
                let c = coefficient(a);
                let prof = free_leg_profile(a);
                let entries = a.entries().iter().map(|e| e.to_string()).collect::<Vec<_>>().join(";");
                let _ = writeln!(csv, "{},{},{entries}", prof.order, c.value);
                rows.push(json!({
                    "entries": a.entries(),
                    "coefficient": c.value.to_string(),
                    "free": prof.free,
                    "cumulative": prof.cumulative,
                    "order": prof.order,
                }));
            }
            let moments = p
                .gaussian_moments
                .iter()
                .map(|&n| Ok((n.to_string(), gaussian_moment(n)?.to_string())))
                .collect::<Result<BTreeMap<_, _>>>()?;
            let out = json!({ "n": p.n, "q": p.q, "order": p.order, "indices": rows, "gaussian_moments": moments });
            let summary = format!("combinatorics: {} contraction indices for n = {}, q = {}", indices.len(), p.n, p.q);
            Ok((
                vec![("combinatorics.json".into(), json_bytes(&out)?), ("combinatorics.csv".into(), csv.into_bytes())],
                summary,
            ))
        }
    }
}

fn simulate_artifacts(path: &SamplePath, binary: bool) -> Result<(Vec<Artifact>, String)> {
    let meta = json!({ "t0": path.t0, "dt": path.dt, "len": path.len(), "meta": path.meta });
    let mut artifacts = vec![
        ("path.csv".to_string(), path.to_csv().into_bytes()),
        ("path.json".to_string(), json_bytes(&meta)?),
    ];
    if binary {
        let mut buf = Vec::new();
        path.write_binary(&mut buf)?;
        artifacts.push(("path.bin".into(), buf));
    }
    let summary = format!("simulate: {} points on [{}, {}]", path.len(), path.t0, path.t_end());
    Ok((artifacts, summary))
}

fn constants(p: &ConstantsParams) -> Result<(Vec<Artifact>, String)> {
    let spec = HurstSpec::new(p.q, p.h)?;
    let method = match p.method {
        KMethodParam::Auto => KMethod::Auto,
        KMethodParam::Quadrature => KMethod::Quadrature,
        KMethodParam::MonteCarlo => KMethod::MonteCarlo { samples: p.mc_samples, seed: p.seed },
    };
    let need_poly = || p.polynomial.as_ref().map(|x| &x.0).ok_or_else(|| Error::invalid("constants: polynomial required"));
    let mut out = serde_json::Map::new();
    let mut csv = None;
    let mut parts = Vec::new();
    for q in &p.quantities {
        let (key, value): (&str, Value) = match q {
            Quantity::CHq => {
                let r = c_hq(spec);
                parts.push(format!("c_Hq = {:.10}", r.value));
                ("c_hq", serde_json::to_value(r)?)
            }
            Quantity::CHqQuadrature => {
                let r = c_hq_by_quadrature(spec)?;
                parts.push(format!("c_Hq (quadrature) = {:.10}", r.value));
                ("c_hq_quadrature", serde_json::to_value(r)?)
            }
            Quantity::KXAlpha => {
                let a = p.alpha.as_ref().ok_or_else(|| Error::invalid("constants: alpha required for k_x_alpha"))?;
                let idx = ContractionIndex::new(a.n, p.q, a.entries.clone())?;
                let r = k_x_alpha(&p.kernel, &idx, spec, method)?;
                parts.push(format!("K = {:.8} ± {:.2e}", r.value, r.abs_error_estimate));
                ("k_x_alpha", serde_json::to_value(r)?)
            }
            Quantity::LimitConstants => {
                let r = limit_constants(need_poly()?, &p.kernel, spec, method)?;
                parts.push(format!("K1 = {:.6e}, K2 = {:.6e}", r.k1.value, r.k2.value));
                ("limit_constants", serde_json::to_value(r)?)
            }
            Quantity::BreuerMajor => {
                if p.q != 1 {
                    return Err(Error::Regime("Breuer-Major variance needs q = 1".into()));
                }
                let r = breuer_major_sigma(need_poly()?, &p.kernel, p.h)?;
                parts.push(format!("sigma² = {:.8}", r.sigma2.value));
                ("breuer_major", serde_json::to_value(r)?)
            }
            Quantity::Covariance | Quantity::FouCovariance => {
                if p.lags.is_empty() {
                    return Err(Error::invalid("constants: lags required for covariance"));
                }
                let fou = *q == Quantity::FouCovariance;
                let mut rows = Vec::new();
                let mut text = String::from("s,rho,abs_error\n");
                for &s in &p.lags {
                    let r = if fou { fou_covariance(p.h, p.fou_alpha, s)? } else { ma_covariance(&p.kernel, p.h, s)? };
                    let _ = writeln!(text, "{s},{},{}", r.value, r.abs_error_estimate);
                    rows.push(json!({ "s": s, "result": r }));
                }
                if csv.is_none() || !fou {
                    csv = Some(text);
                }
                parts.push(format!("rho({}) = {:.8}", p.lags[0], rows[0]["result"]["value"]));
                (if fou { "fou_covariance" } else { "covariance" }, Value::Array(rows))
            }
        };
        out.insert(key.to_string(), value);
    }
    let mut artifacts = vec![("constants.json".to_string(), json_bytes(&out)?)];
    if let Some(c) = csv {
        artifacts.push(("covariance.csv".into(), c.into_bytes()));
    }
    Ok((artifacts, format!("constants: {}", parts.join(", "))))
}

/// `T,variance,variance_se,log_variance_se,mean,skewness,excess_kurtosis` per horizon.
pub fn scaling_csv(r: &ScalingReport) -> String {
    let mut s = String::from("T,variance,variance_se,log_variance_se,mean,skewness,excess_kurtosis\n");
    for h in &r.horizons {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            h.horizon, h.variance, h.variance_se, h.log_variance_se, h.mean, h.skewness, h.excess_kurtosis
        );
    }
    s
}

fn scaling_svg(r: &ScalingReport) -> String {
    let pts: Vec<_> = r
        .horizons
        .iter()
        .map(|h| (h.horizon.ln(), h.variance.ln(), h.log_variance_se))
        .collect();
    // Predicted line through the weighted centroid of the fitted points.
    let fit: Vec<_> = pts.iter().filter(|p| r.fit_horizons.iter().any(|t| (t.ln() - p.0).abs() < 1e-12)).collect();
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for p in &fit {
        let w = 1.0 / (p.2 * p.2);
        sw += w;
        sx += w * p.0;
        sy += w * p.1;
    }
    let anchor = (sy - r.predicted_slope * sx) / sw;
    let lines = [
        Line {
            slope: r.slope,
            intercept: r.intercept,
            label: format!("fitted slope {:.3} ± {:.3}", r.slope, r.slope_se),
            color: "#1f77b4",
            dashed: false,
        },
        Line {
            slope: r.predicted_slope,
            intercept: anchor,
            label: format!("predicted slope {}", r.predicted_slope_exact),
            color: "#d62728",
            dashed: true,
        },
    ];
    loglog_plot(&format!("{:?} regime", r.regime.family), &pts, &lines)
}
