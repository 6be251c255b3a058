//! Versioned TOML experiment configuration.
//!
//! Resolution order is flags > config file > defaults. Overrides are merged into the raw TOML
//! table before typed deserialization, so a flag is validated exactly like the key it replaces.

use std::fmt;
use std::path::PathBuf;

use num_rational::BigRational;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::constants::DEFAULT_MC_SAMPLES;
use crate::error::{Error, Result};
use crate::hermite::{parse_rational, rational_from_f64, Polynomial};
use crate::process::{Kernel, DEFAULT_SUBSTEPS};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Simulate,
    ScanScaling,
    Rank,
    Constants,
    PowerCount,
    Hou,
    Combinatorics,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::Simulate,
        Subcommand::ScanScaling,
        Subcommand::Rank,
        Subcommand::Constants,
        Subcommand::PowerCount,
        Subcommand::Hou,
        Subcommand::Combinatorics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::ScanScaling => "scan-scaling",
            Subcommand::Rank => "rank",
            Subcommand::Constants => "constants",
            Subcommand::PowerCount => "power-count",
            Subcommand::Hou => "hou",
            Subcommand::Combinatorics => "combinatorics",
        }
    }

    /// Name of the parameter table, e.g. `[scan_scaling]`.
    pub fn table(self) -> &'static str {
        match self {
            Subcommand::ScanScaling => "scan_scaling",
            Subcommand::PowerCount => "power_count",
            other => other.name(),
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Exact rational read from an integer, a float (taken at its exact binary value) or a
/// string such as `"3/4"`; always written back as a string.
#[derive(Debug, Clone, PartialEq)]
pub struct Rational(pub BigRational);

#[derive(Deserialize)]
#[serde(untagged)]
enum RationalRepr {
    Int(i64),
    Float(f64),
    Text(String),
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = match RationalRepr::deserialize(d)? {
            RationalRepr::Int(i) => Ok(BigRational::from_integer(i.into())),
            RationalRepr::Float(x) => rational_from_f64(x),
            RationalRepr::Text(s) => parse_rational(&s),
        };
        r.map(Rational).map_err(de::Error::custom)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

/// Polynomial coefficients in increasing degree, as a list or a whitespace/comma separated
/// string.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySpec(pub Polynomial);

#[derive(Deserialize)]
#[serde(untagged)]
enum PolyRepr {
    List(Vec<Rational>),
    Text(String),
}

impl<'de> Deserialize<'de> for PolySpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match PolyRepr::deserialize(d)? {
            PolyRepr::List(v) if v.is_empty() => Err(de::Error::custom("empty coefficient list")),
            PolyRepr::List(v) => Ok(PolySpec(Polynomial::new(v.into_iter().map(|r| r.0).collect()))),
            PolyRepr::Text(s) => Polynomial::parse(&s).map(PolySpec).map_err(de::Error::custom),
        }
    }
}

impl Serialize for PolySpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let c = self.0.coeffs();
        if c.is_empty() {
            return vec!["0".to_string()].serialize(s);
        }
        c.iter().map(|r| r.to_string()).collect::<Vec<_>>().serialize(s)
    }
}

fn default_kernel() -> Kernel {
    Kernel::Exponential { rate: 1.0 }
}
fn one() -> f64 {
    1.0
}
fn default_substeps() -> usize {
    DEFAULT_SUBSTEPS
}
fn default_horizons() -> Vec<f64> {
    (8..=13).map(|k| 2f64.powi(k)).collect()
}
fn default_dt() -> f64 {
    0.5
}
fn default_t_points() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn default_fit_points() -> usize {
    5
}
fn default_replications() -> usize {
    500
}
fn default_true() -> bool {
    true
}
fn unit_variance() -> Rational {
    Rational(BigRational::from_integer(1.into()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKindParam {
    Fgn,
    Hermite,
    MovingAverage,
    Hou,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub kind: PathKindParam,
    #[serde(default = "default_q")]
    pub q: u32,
    #[serde(rename = "H")]
    pub h: f64,
    /// Output grid steps.
    pub steps: usize,
    pub t_max: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
    /// Ornstein-Uhlenbeck rate for `kind = "hou"`.
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    /// Also write `path.bin`.
    #[serde(default)]
    pub binary: bool,
}

fn default_q() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanParams {
    pub q: u32,
    #[serde(rename = "H")]
    pub h: f64,
    pub polynomial: PolySpec,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_t_points")]
    pub t_points: Vec<f64>,
    #[serde(default = "default_fit_points")]
    pub fit_points: usize,
    /// Run the `√(T log T)` scan for the critical Ornstein-Uhlenbeck case instead.
    #[serde(default)]
    pub critical_ou: bool,
    #[serde(default = "default_true")]
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankParams {
    pub polynomial: PolySpec,
    #[serde(default = "unit_variance")]
    pub variance: Rational,
    /// With `H`, also classify the limit regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Rational>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `c_{H,q}` in closed form.
    CHq,
    /// `c_{H,q}` from the defining variance integral.
    CHqQuadrature,
    KXAlpha,
    LimitConstants,
    /// `ρ(s)` of the moving average over `lags`.
    Covariance,
    /// Closed-form fOU covariance check over `lags` with rate `fou_alpha`.
    FouCovariance,
    BreuerMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMethodParam {
    Auto,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaParam {
    pub n: usize,
    /// Upper-triangular entries `α_12, α_13, …, α_{n−1,n}` row by row.
    pub entries: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsParams {
    pub q: u32,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(default = "default_quantities")]
    pub quantities: Vec<Quantity>,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<PolySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaParam>,
    #[serde(default = "default_k_method")]
    pub method: KMethodParam,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lags: Vec<f64>,
    #[serde(default = "one")]
    pub fou_alpha: f64,
}

fn default_quantities() -> Vec<Quantity> {
    vec![Quantity::CHq]
}
fn default_k_method() -> KMethodParam {
    KMethodParam::Auto
}
fn default_mc_samples() -> usize {
    DEFAULT_MC_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCountParams {
    pub dimension: usize,
    pub functionals: Vec<Vec<Rational>>,
    /// `[μ, ν]` per functional.
    pub exponents: Vec<[Rational; 2]>,
    /// `[a, b]` per functional; defaults to `[1, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<[Rational; 2]>>,
    /// Integrate over `[−1, 1]ⁿ` only, checking condition (a).
    #[serde(default)]
    pub bounded_domain: bool,
    /// Also run the numerical divergence oracle (dimension ≤ 2).
    #[serde(default)]
    pub oracle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouParams {
    pub q: u32,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    pub f: PolySpec,
    pub horizon: f64,
    #[serde(default = "default_hou_dt")]
    pub dt: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_hou_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_hou_dt() -> f64 {
    0.25
}
fn default_hou_replications() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinatoricsParams {
    pub n: usize,
    pub q: u32,
    /// Keep only indices with this many free legs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    /// Even `n` for which to report `E N^n = (n−1)!!`.
    #[serde(default)]
    pub gaussian_moments: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Simulate(SimulateParams),
    ScanScaling(ScanParams),
    Rank(RankParams),
    Constants(ConstantsParams),
    PowerCount(PowerCountParams),
    Hou(HouParams),
    Combinatorics(CombinatoricsParams),
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub subcommand: Subcommand,
    pub output: OutputConfig,
    pub params: Params,
}

impl ExperimentConfig {
    /// The resolved config as TOML, written next to every run's artifacts.
    pub fn to_toml(&self) -> Result<String> {
        let mut t = Table::new();
        t.insert("schema_version".into(), Value::Integer(self.schema_version.into()));
        t.insert("subcommand".into(), Value::String(self.subcommand.name().into()));
        let output = Value::try_from(&self.output).map_err(|e| Error::Config(e.to_string()))?;
        if output.as_table().is_some_and(|o| !o.is_empty()) {
            t.insert("output".into(), output);
        }
        let params = Value::try_from(&self.params).map_err(|e| Error::Config(e.to_string()))?;
        t.insert(self.subcommand.table().into(), params);
        toml::to_string(&t).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parses one `key=value` override; the value is read as TOML and falls back to a bare string.
/// Dotted keys address nested tables, e.g. `kernel.rate=2`.
pub fn parse_override(text: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {text:?} is not of the form key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(|s| s.trim().to_string()).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    };
    Ok((path, value))
}

fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty override path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path crosses non-table key {p:?}")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn typed<T: serde::de::DeserializeOwned>(table: Table, what: &str) -> Result<T> {
    Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("[{what}] {}", e.message())))
}

/// Builds the resolved config from an optional file body, the subcommand named on the command
/// line and `key=value` overrides applied to the subcommand's table.
pub fn resolve(
    file: Option<&str>,
    subcommand: Subcommand,
    overrides: &[(Vec<String>, Value)],
) -> Result<ExperimentConfig> {
    let mut root: Table = match file {
        Some(text) => text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?,
        None => Table::new(),
    };
    let version = match root.remove("schema_version") {
        None if file.is_none() => SCHEMA_VERSION,
        None => return Err(Error::Config("missing schema_version".into())),
        Some(Value::Integer(v)) => u32::try_from(v).map_err(|_| Error::Config(format!("bad schema_version {v}")))?,
        Some(v) => return Err(Error::Config(format!("schema_version must be an integer, got {v}"))),
    };
    if version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported schema_version {version}; this build reads {SCHEMA_VERSION}"
        )));
    }
    if let Some(v) = root.remove("subcommand") {
        let named = v.as_str().unwrap_or_default();
        if named != subcommand.name() {
            return Err(Error::Config(format!(
                "config is for subcommand {v}, but {subcommand} was requested"
            )));
        }
    }
    let output: OutputConfig = match root.remove("output") {
        Some(Value::Table(t)) => typed(t, "output")?,
        Some(_) => return Err(Error::Config("output must be a table".into())),
        None => OutputConfig::default(),
    };
    let mut params = match root.remove(subcommand.table()) {
        Some(Value::Table(t)) => t,
        Some(_) => return Err(Error::Config(format!("{} must be a table", subcommand.table()))),
        None => Table::new(),
    };
    if let Some(key) = root.keys().next() {
        let hint = if Subcommand::ALL.iter().any(|s| s.table() == key) {
            format!(" (table for a different subcommand than {subcommand})")
        } else {
            String::new()
        };
        return Err(Error::Config(format!("unknown key {key:?}{hint}")));
    }
    for (path, value) in overrides {
        set_path(&mut params, path, value.clone())?;
    }
    let what = subcommand.table();
    let params = match subcommand {
        Subcommand::Simulate => Params::Simulate(typed(params, what)?),
        Subcommand::ScanScaling => Params::ScanScaling(typed(params, what)?),
        Subcommand::Rank => Params::Rank(typed(params, what)?),
        Subcommand::Constants => Params::Constants(typed(params, what)?),
        Subcommand::PowerCount => Params::PowerCount(typed(params, what)?),
        Subcommand::Hou => Params::Hou(typed(params, what)?),
        Subcommand::Combinatorics => Params::Combinatorics(typed(params, what)?),
    };
    Ok(ExperimentConfig {
        schema_version: version,
        subcommand,
        output,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCAN: &str = r#"
schema_version = 1
subcommand = "scan-scaling"

[scan_scaling]
q = 2
H = 0.8
polynomial = [0, 0, 1]
kernel = { kind = "exponential", rate = 1.0 }
"#;

    fn scan(cfg: &ExperimentConfig) -> &ScanParams {
        match &cfg.params {
            Params::ScanScaling(p) => p,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = resolve(Some(SCAN), Subcommand::ScanScaling, &[]).unwrap();
        let p = scan(&cfg);
        assert_eq!(p.replications, 500);
        assert_eq!(p.horizons.len(), 6);
        assert_eq!(p.polynomial.0, Polynomial::from_i64(&[0, 0, 1]));
    }

    #[test]
    fn overrides_beat_file() {
        let o = [
            parse_override("replications=7").unwrap(),
            parse_override("kernel.rate = 2.5").unwrap(),
            parse_override("polynomial=0 1 1/2").unwrap(),
        ];
        let cfg = resolve(Some(SCAN), Subcommand::ScanScaling, &o).unwrap();
        let p = scan(&cfg);
        assert_eq!(p.replications, 7);
        assert_eq!(p.kernel, Kernel::Exponential { rate: 2.5 });
        assert_eq!(p.polynomial.0, Polynomial::parse("0 1 1/2").unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SCAN.replace("q = 2", "q = 2\nreplicatons = 4");
        assert!(matches!(resolve(Some(&bad), Subcommand::ScanScaling, &[]), Err(Error::Config(_))));
        let bad = format!("{SCAN}\n[rank]\npolynomial = [1]\n");
        assert!(resolve(Some(&bad), Subcommand::ScanScaling, &[]).is_err());
        assert!(resolve(Some(SCAN), Subcommand::Rank, &[]).is_err());
        let bad = SCAN.replace("schema_version = 1", "schema_version = 2");
        assert!(resolve(Some(&bad), Subcommand::ScanScaling, &[]).is_err());
        let o = [parse_override("kernel.bogus=1").unwrap()];
        assert!(resolve(Some(SCAN), Subcommand::ScanScaling, &o).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let o = [parse_override("horizons=[16.0, 32.0, 64.0, 128.0, 256.0]").unwrap()];
        let cfg = resolve(Some(SCAN), Subcommand::ScanScaling, &o).unwrap();
        let text = cfg.to_toml().unwrap();
        let again = resolve(Some(&text), Subcommand::ScanScaling, &[]).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(text, again.to_toml().unwrap());
    }

    #[test]
    fn rationals_accept_three_spellings() {
        let text = "schema_version = 1\n[rank]\npolynomial = [\"1/3\", 2, 0.5]\nvariance = \"9\"\nq = 1\nH = \"3/4\"\n";
        let cfg = resolve(Some(text), Subcommand::Rank, &[]).unwrap();
        let Params::Rank(p) = cfg.params else { panic!() };
        assert_eq!(p.polynomial.0, Polynomial::parse("1/3 2 1/2").unwrap());
        assert_eq!(p.h.unwrap().0, parse_rational("0.75").unwrap());
    }
}
