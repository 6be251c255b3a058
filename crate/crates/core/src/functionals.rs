//! Integral functionals `S_T(t) = ∫_0^{Tt} (P(X_s) − E P(X_s)) ds` of simulated paths, variance
//! scaling scans across horizons and marginal diagnostics of the rescaled limit.

use num_rational::BigRational;
use num_traits::One;
use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{critical_ou_constant, ma_covariance};
use crate::error::{Error, Result};
use crate::hermite::{classify_regime, expand, h0_exact, rational_from_f64, rational_to_f64, Polynomial, RegimeFamily, RegimeLabel};
use crate::process::{stream_rng, HurstSpec, Kernel, MaGrid, MaSimulator, SamplePath, DEFAULT_SUBSTEPS};
use crate::stats::{dagostino_pearson, weighted_line_fit, Moments, NormalityTest};

/// Replications below this count are flagged as underpowered.
pub const MIN_REPLICATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalSample {
    pub horizon: f64,
    pub t_points: Vec<f64>,
    pub values: Vec<f64>,
    pub replication: u64,
    pub centering: f64,
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Running trapezoid integral of `P(X) − centering` on a uniform grid.
///
/// Between grid points the integrand is interpolated linearly, so the integral up to any time
/// is exactly additive.
struct PrefixIntegral {
    dt: f64,
    f: Vec<f64>,
    cum: Vec<f64>,
}

impl PrefixIntegral {
    fn new(values: &[f64], dt: f64, coeffs: &[f64], centering: f64) -> Self {
        let f: Vec<f64> = values.iter().map(|&x| horner(coeffs, x) - centering).collect();
        let mut cum = Vec::with_capacity(f.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in f.windows(2) {
            acc += 0.5 * dt * (w[0] + w[1]);
            cum.push(acc);
        }
        PrefixIntegral { dt, f, cum }
    }

    fn span(&self) -> f64 {
        (self.f.len() - 1) as f64 * self.dt
    }

    /// `∫_0^τ`, for `0 ≤ τ ≤ span`.
    fn to(&self, tau: f64) -> f64 {
        let pos = tau / self.dt;
        let k = (pos.floor() as usize).min(self.f.len() - 1);
        let frac = pos - k as f64;
        // Snap grid-aligned horizons to avoid a spurious zero-width partial cell.
        if frac.abs() < 1e-9 || k + 1 == self.f.len() {
            return self.cum[k];
        }
        let h = frac * self.dt;
        let f_tau = self.f[k] + frac * (self.f[k + 1] - self.f[k]);
        self.cum[k] + 0.5 * h * (self.f[k] + f_tau)
    }
}

fn check_t_points(t_points: &[f64]) -> Result<()> {
    if t_points.is_empty() || t_points.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::invalid("t_points must be nonempty and lie in (0, 1]"));
    }
    Ok(())
}

fn check_coverage(span: f64, horizon: f64) -> Result<()> {
    if !(horizon > 0.0) || horizon > span * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("horizon {horizon} exceeds path coverage {span}")));
    }
    Ok(())
}

/// `S_T(t)` for each `t`, with time measured from the start of the path.
pub fn evaluate_functional(
    x: &SamplePath,
    p: &Polynomial,
    horizon: f64,
    t_points: &[f64],
    centering: f64,
) -> Result<FunctionalSample> {
    check_t_points(t_points)?;
    if x.len() < 2 {
        return Err(Error::invalid("path needs at least two points"));
    }
    let prefix = PrefixIntegral::new(&x.values, x.dt, &p.to_f64(), centering);
    check_coverage(prefix.span(), horizon)?;
    Ok(FunctionalSample {
        horizon,
        t_points: t_points.to_vec(),
        values: t_points.iter().map(|t| prefix.to(horizon * t)).collect(),
        replication: x.meta.stream,
        centering,
    })
}

/// `(1/T) ∫_0^T f(U_s) ds`.
pub fn hou_ergodic_average(u: &SamplePath, f: &Polynomial, horizon: f64) -> Result<f64> {
    Ok(evaluate_functional(u, f, horizon, &[1.0], 0.0)?.values[0] / horizon)
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub spec: HurstSpec,
    pub kernel: Kernel,
    pub polynomial: Polynomial,
    /// Geometric, strictly increasing.
    pub horizons: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub dt: f64,
    pub substeps: usize,
    pub t_points: Vec<f64>,
    /// Number of largest horizons used in the slope fit.
    pub fit_points: usize,
}

impl ScanConfig {
    pub fn new(spec: HurstSpec, kernel: Kernel, polynomial: Polynomial, horizons: Vec<f64>, replications: usize, seed: u64) -> Self {
        ScanConfig {
            spec,
            kernel,
            polynomial,
            horizons,
            replications,
            seed,
            dt: 0.5,
            substeps: DEFAULT_SUBSTEPS,
            t_points: vec![0.25, 0.5, 1.0],
            fit_points: 5,
        }
    }

    fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        check_t_points(&self.t_points)?;
        if !self.t_points.contains(&1.0) {
            return Err(Error::invalid("t_points must include 1"));
        }
        let h = &self.horizons;
        if h.len() < 5 {
            return Err(Error::invalid(format!("need at least 5 horizons, got {}", h.len())));
        }
        if h.iter().any(|t| !(t.is_finite() && *t > 0.0)) || h.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("horizons must be positive and strictly increasing"));
        }
        let ratio = h[1] / h[0];
        if h.windows(2).any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-9) {
            return Err(Error::invalid("horizons must form a geometric grid"));
        }
        if self.replications < 2 {
            return Err(Error::invalid("need at least 2 replications"));
        }
        if self.fit_points < 2 || self.fit_points > h.len() {
            return Err(Error::invalid(format!("fit_points must lie in [2, {}]", h.len())));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        for &t in h {
            let steps = t / self.dt;
            if (steps - steps.round()).abs() > 1e-9 * steps {
                return Err(Error::invalid(format!("horizon {t} is not a multiple of dt = {}", self.dt)));
            }
        }
        if self.polynomial.is_constant() {
            return Err(Error::RankUndefined);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CenteringMethod {
    /// Gaussian moments at the exact variance of the simulated model.
    ExactGaussian,
    /// Mean of `P(X)` pooled over every grid point of every replication.
    PooledMonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonStats {
    pub horizon: f64,
    pub mean: f64,
    pub variance: f64,
    /// Delta-method standard error of the variance.
    pub variance_se: f64,
    pub log_variance_se: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Sample variance of `S_T(t)` for each of the configured `t`.
    pub variance_by_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfSimilarityPoint {
    pub t: f64,
    pub variance: f64,
    /// `Var S_T(t) / t^{2 H_limit}`.
    pub ratio: f64,
    /// `ratio` divided by its value at `t = 1`.
    pub relative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LimitShape {
    /// Brownian motion or fBm: Gaussian marginals.
    Gaussian,
    /// Rosenblatt: skewed marginals.
    Skewed,
    /// Hermite process of order `d ≥ 2`: non-Gaussian marginals.
    NonGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitDiagnostics {
    pub replications: usize,
    pub underpowered: bool,
    pub expected_shape: LimitShape,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Skewness divided by its asymptotic standard error `sqrt(6/n)` under normality.
    pub skewness_z: f64,
    pub normality: Option<NormalityTest>,
    pub limit_hurst: f64,
    pub self_similarity: Vec<SelfSimilarityPoint>,
}

/// Marginal diagnostics of the rescaled functional at the largest horizon.
///
/// `samples` are the values of `S_T(1)` (any fixed rescaling leaves the statistics unchanged);
/// `variance_by_t` pairs with `t_points` for the self-similarity ratios.
pub fn limit_diagnostics(
    samples: &[f64],
    regime: &RegimeLabel,
    t_points: &[f64],
    variance_by_t: &[f64],
) -> Result<LimitDiagnostics> {
    if t_points.len() != variance_by_t.len() {
        return Err(Error::invalid("t_points and variances differ in length"));
    }
    let m = Moments::of(samples)?;
    let n = samples.len();
    let limit_hurst = rational_to_f64(&regime.limit_hurst_or_half());
    let at_one = t_points
        .iter()
        .zip(variance_by_t)
        .find(|(t, _)| **t == 1.0)
        .map(|(_, v)| *v);
    let self_similarity = t_points
        .iter()
        .zip(variance_by_t)
        .map(|(&t, &v)| {
            let ratio = v / t.powf(2.0 * limit_hurst);
            SelfSimilarityPoint {
                t,
                variance: v,
                ratio,
                relative: at_one.map_or(f64::NAN, |one| ratio / one),
            }
        })
        .collect();
    let expected_shape = match regime.family {
        RegimeFamily::Brownian | RegimeFamily::Fbm => LimitShape::Gaussian,
        RegimeFamily::Rosenblatt => LimitShape::Skewed,
        RegimeFamily::HermiteD if regime.rank_used == 1 => LimitShape::Gaussian,
        RegimeFamily::HermiteD => LimitShape::NonGaussian,
    };
    Ok(LimitDiagnostics {
        replications: n,
        underpowered: n < MIN_REPLICATIONS,
        expected_shape,
        skewness: m.skewness,
        excess_kurtosis: m.excess_kurtosis,
        skewness_z: m.skewness / (6.0 / n as f64).sqrt(),
        normality: dagostino_pearson(&m).ok(),
        limit_hurst,
        self_similarity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub regime: RegimeLabel,
    pub predicted_slope: f64,
    /// Exact rational form of the predicted slope.
    pub predicted_slope_exact: String,
    /// `α₀ = 1 − 2H₀`, the exponent under which chaos terms of order ≥ 3 vanish.
    pub vanishing_exponent_alpha0: String,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub fit_horizons: Vec<f64>,
    /// `|slope − predicted| < 2·slope_se + 0.1`.
    pub regime_agreement: bool,
    pub horizons: Vec<HorizonStats>,
    pub centering: f64,
    pub centering_method: CenteringMethod,
    pub model_variance: f64,
    pub replications: usize,
    pub seed: u64,
    pub dt: f64,
    pub substeps: usize,
    pub t_points: Vec<f64>,
    pub diagnostics: LimitDiagnostics,
}

/// Stream id of replication `r` at horizon index `j`; horizons never share noise.
fn stream_id(j: usize, r: usize) -> u64 {
    ((j as u64) << 32) | r as u64
}

struct RawHorizon {
    /// `∫_0^{Tt} P(X)` per replication and `t`, uncentered.
    raw: Vec<Vec<f64>>,
    /// Sum of `P(X_k)` over the grid, for pooled centering.
    point_sum: f64,
    points: usize,
}

struct Simulated {
    horizons: Vec<RawHorizon>,
    model_variance: f64,
}

fn simulate(cfg: &ScanConfig) -> Result<Simulated> {
    let coeffs = cfg.polynomial.to_f64();
    let mut out = Vec::with_capacity(cfg.horizons.len());
    let mut model_variance = f64::NAN;
    for (j, &horizon) in cfg.horizons.iter().enumerate() {
        let mut grid = MaGrid::new(cfg.dt, horizon);
        grid.substeps = cfg.substeps;
        let sim = MaSimulator::new(cfg.spec, &cfg.kernel, grid)?;
        model_variance = sim.model_variance();
        let per_rep: Vec<(Vec<f64>, f64)> = (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let values = sim.sample(&mut stream_rng(cfg.seed, stream_id(j, r)));
                let point_sum: f64 = values.iter().map(|&x| horner(&coeffs, x)).sum();
                let prefix = PrefixIntegral::new(&values, cfg.dt, &coeffs, 0.0);
                (cfg.t_points.iter().map(|t| prefix.to(horizon * t)).collect(), point_sum)
            })
            .collect();
        let points = sim.output_len() * cfg.replications;
        let mut point_sum = 0.0;
        let mut raw = Vec::with_capacity(per_rep.len());
        for (v, s) in per_rep {
            point_sum += s;
            raw.push(v);
        }
        out.push(RawHorizon { raw, point_sum, points });
    }
    Ok(Simulated {
        horizons: out,
        model_variance,
    })
}

fn centering_for(cfg: &ScanConfig, sim: &Simulated) -> Result<(f64, CenteringMethod)> {
    if cfg.spec.q() == 1 {
        let var = rational_from_f64(sim.model_variance)?;
        Ok((rational_to_f64(&cfg.polynomial.gaussian_mean(&var)), CenteringMethod::ExactGaussian))
    } else {
        let (s, n) = sim
            .horizons
            .iter()
            .fold((0.0, 0usize), |(s, n), h| (s + h.point_sum, n + h.points));
        Ok((s / n as f64, CenteringMethod::PooledMonteCarlo))
    }
}

/// Centered `S_T(t)` samples: outer index replication, inner index `t`.
fn centered(cfg: &ScanConfig, raw: &RawHorizon, horizon: f64, centering: f64) -> Vec<Vec<f64>> {
    raw.raw
        .iter()
        .map(|v| v.iter().zip(&cfg.t_points).map(|(x, t)| x - centering * horizon * t).collect())
        .collect()
}

fn horizon_stats(cfg: &ScanConfig, horizon: f64, samples: &[Vec<f64>]) -> Result<HorizonStats> {
    let one = cfg.t_points.iter().position(|&t| t == 1.0).expect("validated");
    let column = |i: usize| samples.iter().map(|v| v[i]).collect::<Vec<f64>>();
    let m = Moments::of(&column(one))?;
    if !(m.variance > 0.0) || !m.variance.is_finite() {
        return Err(Error::Numerical(format!(
            "variance estimate {} is not positive at T = {horizon}; is P degenerate?",
            m.variance
        )));
    }
    let variance_by_t = (0..cfg.t_points.len())
        .map(|i| Moments::of(&column(i)).map(|m| m.variance))
        .collect::<Result<Vec<f64>>>()?;
    let log_se = m.log_variance_se();
    Ok(HorizonStats {
        horizon,
        mean: m.mean,
        variance: m.variance,
        variance_se: m.variance * log_se,
        log_variance_se: log_se,
        skewness: m.skewness,
        excess_kurtosis: m.excess_kurtosis,
        variance_by_t,
    })
}

/// Regime label for the configured process, with the rank taken at the model variance.
pub fn regime_for(spec: HurstSpec, p: &Polynomial, variance: f64) -> Result<RegimeLabel> {
    let h = rational_from_f64(spec.h())?;
    classify_regime(spec.q(), &h, p, &rational_from_f64(variance)?)
}

/// Estimates the growth exponent of `Var S_T(1)` and compares it with the limit theorems.
pub fn scan_scaling(cfg: &ScanConfig) -> Result<ScalingReport> {
    cfg.validate()?;
    // Classify before the expensive part so unsupported regimes fail fast.
    let probe = {
        let mut grid = MaGrid::new(cfg.dt, cfg.horizons[0]);
        grid.substeps = cfg.substeps;
        MaSimulator::new(cfg.spec, &cfg.kernel, grid)?.model_variance()
    };
    let regime = regime_for(cfg.spec, &cfg.polynomial, probe)?;
    let sim = simulate(cfg)?;
    let (centering, centering_method) = centering_for(cfg, &sim)?;
    let mut horizons = Vec::with_capacity(cfg.horizons.len());
    let mut last_samples = Vec::new();
    for (raw, &t) in sim.horizons.iter().zip(&cfg.horizons) {
        let samples = centered(cfg, raw, t, centering);
        horizons.push(horizon_stats(cfg, t, &samples)?);
        last_samples = samples;
    }
    let top = &horizons[horizons.len() - cfg.fit_points..];
    let fit = weighted_line_fit(
        &top.iter().map(|h| h.horizon.ln()).collect::<Vec<_>>(),
        &top.iter().map(|h| h.variance.ln()).collect::<Vec<_>>(),
        &top.iter().map(|h| h.log_variance_se).collect::<Vec<_>>(),
    )?;
    let predicted = regime.variance_slope();
    let predicted_slope = rational_to_f64(&predicted);
    let h0 = h0_exact(cfg.spec.q(), &rational_from_f64(cfg.spec.h())?);
    let alpha0 = BigRational::one() - &h0 - h0;
    let one = cfg.t_points.iter().position(|&t| t == 1.0).expect("validated");
    let last = horizons.last().expect("at least 5 horizons");
    let diagnostics = limit_diagnostics(
        &last_samples.iter().map(|v| v[one]).collect::<Vec<_>>(),
        &regime,
        &cfg.t_points,
        &last.variance_by_t,
    )?;
    Ok(ScalingReport {
        predicted_slope,
        predicted_slope_exact: predicted.to_string(),
        vanishing_exponent_alpha0: alpha0.to_string(),
        slope: fit.slope,
        slope_se: fit.slope_se,
        intercept: fit.intercept,
        fit_horizons: top.iter().map(|h| h.horizon).collect(),
        regime_agreement: (fit.slope - predicted_slope).abs() < 2.0 * fit.slope_se + 0.1,
        regime,
        horizons,
        centering,
        centering_method,
        model_variance: sim.model_variance,
        replications: cfg.replications,
        seed: cfg.seed,
        dt: cfg.dt,
        substeps: cfg.substeps,
        t_points: cfg.t_points.clone(),
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub horizon: f64,
    pub variance: f64,
    /// `Var S_T(1) / (T log T)`.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalReport {
    pub rank: usize,
    pub points: Vec<CriticalPoint>,
    /// Square of the stated constant; informational only.
    pub stated_constant_squared: f64,
    pub centering: f64,
}

/// `√(T log T)` scan at the critical Hurst index `H = 1 − 1/(2d)` for the exponential kernel.
pub fn critical_ou_scan(cfg: &ScanConfig) -> Result<CriticalReport> {
    cfg.validate()?;
    let Kernel::Exponential { rate } = cfg.kernel else {
        return Err(Error::invalid("the critical scan is only defined for the exponential kernel"));
    };
    if cfg.spec.q() != 1 {
        return Err(Error::invalid("the critical scan needs q = 1"));
    }
    let sim = simulate(cfg)?;
    let rank = match regime_for(cfg.spec, &cfg.polynomial, sim.model_variance) {
        Err(Error::CriticalCase { d }) => d,
        Ok(label) => {
            return Err(Error::Regime(format!(
                "H = {} is not critical for rank {}",
                cfg.spec.h(),
                label.rank_used
            )))
        }
        Err(e) => return Err(e),
    };
    let (centering, _) = centering_for(cfg, &sim)?;
    let one = cfg.t_points.iter().position(|&t| t == 1.0).expect("validated");
    let mut points = Vec::new();
    for (raw, &t) in sim.horizons.iter().zip(&cfg.horizons) {
        let samples = centered(cfg, raw, t, centering);
        let m = Moments::of(&samples.iter().map(|v| v[one]).collect::<Vec<_>>())?;
        points.push(CriticalPoint {
            horizon: t,
            variance: m.variance,
            normalized: m.variance / (t * t.ln()),
        });
    }
    // The stated constant uses the coefficient of H_d at the continuous variance.
    let rho0 = ma_covariance(&cfg.kernel, cfg.spec.h(), 0.0)?.value;
    let expansion = expand(&cfg.polynomial, &rational_from_f64(rho0)?)?;
    let a_d = expansion.coeffs.get(&rank).map_or(0.0, rational_to_f64);
    let c = critical_ou_constant(a_d, rank, rate)?.value;
    Ok(CriticalReport {
        rank,
        points,
        stated_constant_squared: c * c,
        centering,
    })
}

#[derive(Debug, Clone)]
pub struct HouConfig {
    pub spec: HurstSpec,
    pub alpha: f64,
    pub f: Polynomial,
    pub horizon: f64,
    pub dt: f64,
    pub substeps: usize,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HouReport {
    pub averages: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// `E f(U_0)` from the covariance quadrature, when `f` has degree at most 2.
    pub reference: Option<f64>,
    /// `E f(U_0)` at the exact variance of the simulated model, same restriction.
    pub model_reference: Option<f64>,
    pub rho0: f64,
    pub model_variance: f64,
    /// `|average − reference| / sd` for replication 0.
    pub deviation_in_sd: Option<f64>,
    /// `|mean of the averages − reference| / sd`.
    pub mean_deviation_in_sd: Option<f64>,
}

fn second_moment_mean(f: &Polynomial, variance: f64) -> Option<f64> {
    if f.degree() > 2 {
        return None;
    }
    let c = f.to_f64();
    Some(c.first().copied().unwrap_or(0.0) + c.get(2).copied().unwrap_or(0.0) * variance)
}

/// Ergodic averages `(1/T)∫_0^T f(U_s) ds` of the Hermite-Ornstein-Uhlenbeck process.
pub fn hou_experiment(cfg: &HouConfig) -> Result<HouReport> {
    if cfg.replications < 2 {
        return Err(Error::invalid("need at least 2 replications"));
    }
    let kernel = Kernel::exponential(cfg.alpha)?;
    let mut grid = MaGrid::new(cfg.dt, cfg.horizon);
    grid.substeps = cfg.substeps;
    let sim = MaSimulator::new(cfg.spec, &kernel, grid)?;
    let coeffs = cfg.f.to_f64();
    let averages: Vec<f64> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let values = sim.sample(&mut stream_rng(cfg.seed, r as u64));
            PrefixIntegral::new(&values, cfg.dt, &coeffs, 0.0).to(cfg.horizon) / cfg.horizon
        })
        .collect();
    let m = Moments::of(&averages)?;
    let rho0 = ma_covariance(&kernel, cfg.spec.h(), 0.0)?.value;
    let model_variance = sim.model_variance();
    let reference = second_moment_mean(&cfg.f, rho0);
    let sd = m.variance.sqrt();
    Ok(HouReport {
        deviation_in_sd: reference.map(|r| (averages[0] - r).abs() / sd),
        mean_deviation_in_sd: reference.map(|r| (m.mean - r).abs() / sd),
        averages,
        mean: m.mean,
        sd,
        reference,
        model_reference: second_moment_mean(&cfg.f, model_variance),
        rho0,
        model_variance,
    })
}

#[cfg(test)]
mod tests;
