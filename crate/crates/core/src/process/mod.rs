//! Fractional Gaussian noise, Hermite-process paths and their moving averages.

mod fgn;
mod io;
mod kernel;

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fgn::{fgn_autocovariance, FgnSampler};
pub use io::{read_binary, read_csv, MAGIC};
pub use kernel::{DecayClass, Kernel, DEFAULT_TAIL_TOL};

/// Internal Hermite-sum steps per output step used when callers do not choose.
pub const DEFAULT_SUBSTEPS: usize = 4;

/// Order `q` and Hurst index `H` of a Hermite process; `H₀` is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct HurstSpec {
    q: u32,
    h: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecRepr {
    q: u32,
    #[serde(rename = "H")]
    h: f64,
    #[serde(rename = "H0", default, skip_serializing_if = "Option::is_none")]
    h0: Option<f64>,
}

impl TryFrom<SpecRepr> for HurstSpec {
    type Error = Error;
    fn try_from(r: SpecRepr) -> Result<Self> {
        let spec = HurstSpec::new(r.q, r.h)?;
        if let Some(h0) = r.h0 {
            if (h0 - spec.h0()).abs() > 1e-12 {
                return Err(Error::invalid(format!("H0={h0} inconsistent with q={} H={}", r.q, r.h)));
            }
        }
        Ok(spec)
    }
}

impl From<HurstSpec> for SpecRepr {
    fn from(s: HurstSpec) -> Self {
        SpecRepr { q: s.q, h: s.h, h0: Some(s.h0()) }
    }
}

impl HurstSpec {
    pub fn new(q: u32, h: f64) -> Result<Self> {
        if q == 0 {
            return Err(Error::invalid("q must be at least 1"));
        }
        if !(h > 0.5 && h < 1.0) {
            return Err(Error::invalid(format!("H must lie in (1/2, 1), got {h}")));
        }
        Ok(HurstSpec { q, h })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn h0(&self) -> f64 {
        1.0 - (1.0 - self.h) / self.q as f64
    }
}

/// Random source for one `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Probabilists' Hermite polynomial `H_q(x)` for unit variance.
pub fn hermite_eval(q: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if q == 0 {
        return prev;
    }
    for k in 1..q {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn factorial(q: u32) -> f64 {
    (1..=q).map(f64::from).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    FgnIncrements,
    Hermite,
    MovingAverage,
}

/// Everything needed to regenerate a path bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathMeta {
    pub kind: PathKind,
    /// Hurst index of the noise for fGn increments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fgn_hurst: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<HurstSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
    pub truncation: f64,
    pub burn_in: f64,
    pub substeps: usize,
    pub seed: u64,
    pub stream: u64,
}

/// Values on the uniform grid `t0, t0 + dt, t0 + 2dt, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub meta: PathMeta,
}

impl SamplePath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.values.len().saturating_sub(1))
    }

    /// Index of the grid point at time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        let i = x.round();
        if (x - i).abs() > 1e-6 || i < 0.0 || i as usize >= self.values.len() {
            return None;
        }
        Some(i as usize)
    }
}

/// `n` values of fGn with step `dt`, so that partial sums form fBm on that grid.
pub fn fgn(h0: f64, n: usize, dt: f64, seed: u64, stream: u64) -> Result<SamplePath> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let sampler = FgnSampler::new(h0, n)?;
    let scale = dt.powf(h0);
    let values = sampler
        .sample(&mut stream_rng(seed, stream))
        .into_iter()
        .map(|v| v * scale)
        .collect();
    Ok(SamplePath {
        t0: 0.0,
        dt,
        values,
        meta: PathMeta {
            kind: PathKind::FgnIncrements,
            fgn_hurst: Some(h0),
            spec: None,
            kernel: None,
            truncation: 0.0,
            burn_in: 0.0,
            substeps: 1,
            seed,
            stream,
        },
    })
}

/// Increments of a Hermite process on a uniform grid, built from Hermite variations.
///
/// Each output step of length `dt` aggregates `substeps` values `H_q(ξ_i)` of a unit-variance
/// fGn `ξ` with Hurst index `H₀`. The sums are scaled by the exact standard deviation of the
/// sum over one time unit, so `Var Z(1) = 1` holds at every resolution. For `q = 1` the result
/// is exact fBm.
#[derive(Debug)]
pub struct HermiteNoise {
    spec: HurstSpec,
    steps: usize,
    substeps: usize,
    dt: f64,
    scale: f64,
    sampler: FgnSampler,
}

impl HermiteNoise {
    pub fn new(spec: HurstSpec, steps: usize, dt: f64, substeps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("need at least one step"));
        }
        if substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let fine = steps * substeps;
        let sampler = FgnSampler::new(spec.h0(), fine.max(2))?;
        let per_unit = substeps as f64 / dt;
        let scale = 1.0 / block_variance(spec, per_unit).sqrt();
        Ok(HermiteNoise { spec, steps, substeps, dt, scale, sampler })
    }

    pub fn spec(&self) -> HurstSpec {
        self.spec
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let xi = self.sampler.sample(rng);
        let q = self.spec.q;
        xi.chunks(self.substeps)
            .take(self.steps)
            .map(|c| c.iter().map(|&v| hermite_eval(q, v)).sum::<f64>() * self.scale)
            .collect()
    }

    /// Exact covariance of two increments `lag` steps apart under this discrete model.
    pub fn increment_covariance(&self, lag: usize) -> f64 {
        let s = self.substeps as i64;
        let q = self.spec.q as i32;
        let h0 = self.spec.h0();
        let base = lag as i64 * s;
        let mut total = 0.0;
        for d in -(s - 1)..s {
            total += (s - d.abs()) as f64 * fgn_autocovariance(h0, base + d).powi(q);
        }
        total * factorial(self.spec.q) * self.scale * self.scale
    }
}

/// `Var Σ_{i<j} H_q(ξ_i)` for unit fGn `ξ` of Hurst `H₀`; log-interpolated for fractional `j`.
fn block_variance(spec: HurstSpec, j: f64) -> f64 {
    if spec.q == 1 {
        return j.powf(2.0 * spec.h);
    }
    let exact = |j: usize| -> f64 {
        let q = spec.q as i32;
        let h0 = spec.h0();
        let mut v = j as f64;
        for k in 1..j {
            v += 2.0 * (j - k) as f64 * fgn_autocovariance(h0, k as i64).powi(q);
        }
        v * factorial(spec.q)
    };
    if j < 1.0 {
        return exact(1) * j.powf(2.0 * spec.h);
    }
    let lo = j.floor();
    let v_lo = exact(lo as usize);
    if j == lo {
        return v_lo;
    }
    let v_hi = exact(lo as usize + 1);
    let w = (j / lo).ln() / ((lo + 1.0) / lo).ln();
    (v_lo.ln() * (1.0 - w) + v_hi.ln() * w).exp()
}

fn cumulative(t0_value: f64, increments: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(increments.len() + 1);
    let mut acc = t0_value;
    z.push(acc);
    for d in increments {
        acc += d;
        z.push(acc);
    }
    z
}

/// Hermite-process path on `[0, t_max]` with `n_grid` output steps.
///
/// `n_internal` is the number of Hermite-sum steps across the whole horizon; it is rounded up
/// to a multiple of `n_grid`.
pub fn hermite_path(
    spec: HurstSpec,
    n_grid: usize,
    t_max: f64,
    n_internal: usize,
    seed: u64,
    stream: u64,
) -> Result<SamplePath> {
    if n_grid == 0 {
        return Err(Error::invalid("n_grid must be positive"));
    }
    if n_internal < n_grid {
        return Err(Error::invalid(format!(
            "n_internal ({n_internal}) must be at least n_grid ({n_grid})"
        )));
    }
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::invalid(format!("t_max must be positive, got {t_max}")));
    }
    let substeps = n_internal.div_ceil(n_grid);
    hermite_path_on(spec, 0.0, n_grid, t_max / n_grid as f64, substeps, seed, stream)
}

/// Hermite-process path on `t0, t0 + dt, …, t0 + steps·dt`, pinned to 0 at `t0`.
///
/// By stationarity of increments this has the law of `Z(· ) − Z(t0)`.
pub fn hermite_path_on(
    spec: HurstSpec,
    t0: f64,
    steps: usize,
    dt: f64,
    substeps: usize,
    seed: u64,
    stream: u64,
) -> Result<SamplePath> {
    let noise = HermiteNoise::new(spec, steps, dt, substeps)?;
    let dz = noise.sample(&mut stream_rng(seed, stream));
    Ok(SamplePath {
        t0,
        dt,
        values: cumulative(0.0, &dz),
        meta: PathMeta {
            kind: PathKind::Hermite,
            fgn_hurst: None,
            spec: Some(spec),
            kernel: None,
            truncation: 0.0,
            burn_in: 0.0,
            substeps,
            seed,
            stream,
        },
    })
}

/// Discrete causal filter `X_i = Σ_l w_l ΔZ_{i−1−l}` with `w_l` the cell averages of `x`.
pub struct MovingAverage {
    weights: Vec<f64>,
    plan: Option<ConvolutionPlan>,
}

struct ConvolutionPlan {
    input_len: usize,
    spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

const DIRECT_CONVOLUTION_TAPS: usize = 48;

impl MovingAverage {
    /// Filter for grid step `dt` keeping the kernel on `[0, truncation)`.
    pub fn new(kernel: &Kernel, dt: f64, truncation: f64, tail_tol: f64) -> Result<Self> {
        kernel.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let taps = ((truncation / dt).ceil() as usize).max(1);
        let covered = taps as f64 * dt;
        let tail = kernel.abs_tail(covered);
        if tail > tail_tol {
            return Err(Error::TailMass {
                tail,
                truncation,
                tol: tail_tol,
                suggested: kernel.truncation_for(tail_tol),
            });
        }
        Ok(MovingAverage { weights: kernel.cell_averages(dt, taps), plan: None })
    }

    pub fn from_weights(weights: Vec<f64>) -> Self {
        MovingAverage { weights, plan: None }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn taps(&self) -> usize {
        self.weights.len()
    }

    /// Precomputes the FFT of the weights for inputs of `input_len` increments.
    pub fn with_plan(mut self, input_len: usize) -> Self {
        if self.weights.len() <= DIRECT_CONVOLUTION_TAPS {
            return self;
        }
        let size = (input_len + self.weights.len()).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); size];
        for (s, w) in spectrum.iter_mut().zip(&self.weights) {
            s.re = *w;
        }
        forward.process(&mut spectrum);
        self.plan = Some(ConvolutionPlan { input_len, spectrum, forward, inverse });
        self
    }

    /// `y[k] = Σ_l w_l dz[k − l]` for every `k < dz.len()`.
    pub fn convolve(&self, dz: &[f64]) -> Vec<f64> {
        match &self.plan {
            Some(plan) if plan.input_len == dz.len() => {
                let size = plan.spectrum.len();
                let mut buf = vec![Complex64::new(0.0, 0.0); size];
                for (b, v) in buf.iter_mut().zip(dz) {
                    b.re = *v;
                }
                plan.forward.process(&mut buf);
                for (b, s) in buf.iter_mut().zip(&plan.spectrum) {
                    *b *= s;
                }
                plan.inverse.process(&mut buf);
                let norm = 1.0 / size as f64;
                buf[..dz.len()].iter().map(|z| z.re * norm).collect()
            }
            None if self.weights.len() > DIRECT_CONVOLUTION_TAPS => {
                let planned = MovingAverage::from_weights(self.weights.clone()).with_plan(dz.len());
                planned.convolve(dz)
            }
            _ => {
                let w = &self.weights;
                (0..dz.len())
                    .map(|k| {
                        let lmax = w.len().min(k + 1);
                        (0..lmax).map(|l| w[l] * dz[k - l]).sum()
                    })
                    .collect()
            }
        }
    }

    /// Exact `Var X` when the increments have covariance `r(lag)`.
    pub fn model_variance(&self, r: impl Fn(usize) -> f64) -> f64 {
        let w = &self.weights;
        let mut total = 0.0;
        for lag in 0..w.len() {
            let a: f64 = (0..w.len() - lag).map(|l| w[l] * w[l + lag]).sum();
            total += if lag == 0 { a * r(0) } else { 2.0 * a * r(lag) };
        }
        total
    }
}

/// Moving average `X(t) = ∫_{t−M}^t x(t − u) dZ_u` on the grid of `z`, from time 0 on.
///
/// `z` must start at or before `−(truncation + burn_in)`.
pub fn moving_average(z: &SamplePath, kernel: &Kernel, truncation: f64, burn_in: f64) -> Result<SamplePath> {
    moving_average_with_tol(z, kernel, truncation, burn_in, DEFAULT_TAIL_TOL)
}

pub fn moving_average_with_tol(
    z: &SamplePath,
    kernel: &Kernel,
    truncation: f64,
    burn_in: f64,
    tail_tol: f64,
) -> Result<SamplePath> {
    let filter = MovingAverage::new(kernel, z.dt, truncation, tail_tol)?;
    let start = ((-z.t0) / z.dt).round();
    if (start * z.dt + z.t0).abs() > 1e-9 * z.dt.max(1.0) {
        return Err(Error::invalid("time 0 is not on the input grid"));
    }
    let need = filter.taps() as f64 + (burn_in / z.dt).ceil();
    if start < need {
        return Err(Error::invalid(format!(
            "input starts at {} but the filter needs history back to {}",
            z.t0,
            -need * z.dt
        )));
    }
    let start = start as usize;
    if start >= z.values.len() {
        return Err(Error::invalid("input path ends before time 0"));
    }
    let dz: Vec<f64> = z.values.windows(2).map(|p| p[1] - p[0]).collect();
    let y = filter.convolve(&dz);
    // X at Z-grid index i uses increments up to index i − 1.
    let values = y[start - 1..].to_vec();
    Ok(SamplePath {
        t0: 0.0,
        dt: z.dt,
        values,
        meta: PathMeta {
            kind: PathKind::MovingAverage,
            fgn_hurst: None,
            spec: z.meta.spec,
            kernel: Some(kernel.clone()),
            truncation,
            burn_in,
            substeps: z.meta.substeps,
            seed: z.meta.seed,
            stream: z.meta.stream,
        },
    })
}

/// Reusable sampler of moving-average paths on `[0, t_max]`.
///
/// Holds the fGn embedding and the filter spectrum, so repeated draws cost two FFTs each.
pub struct MaSimulator {
    noise: HermiteNoise,
    filter: MovingAverage,
    kernel: Kernel,
    history: usize,
    out_len: usize,
    truncation: f64,
    burn_in: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MaGrid {
    pub dt: f64,
    pub t_max: f64,
    pub substeps: usize,
    /// `None` picks the smallest truncation meeting `tail_tol`.
    pub truncation: Option<f64>,
    /// `None` uses the truncation length.
    pub burn_in: Option<f64>,
    pub tail_tol: f64,
}

impl MaGrid {
    pub fn new(dt: f64, t_max: f64) -> Self {
        MaGrid {
            dt,
            t_max,
            substeps: DEFAULT_SUBSTEPS,
            truncation: None,
            burn_in: None,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

impl MaSimulator {
    pub fn new(spec: HurstSpec, kernel: &Kernel, grid: MaGrid) -> Result<Self> {
        kernel.validate()?;
        if !(grid.t_max.is_finite() && grid.t_max > 0.0) {
            return Err(Error::invalid(format!("t_max must be positive, got {}", grid.t_max)));
        }
        let dt = grid.dt;
        if !(dt.is_finite() && dt > 0.0 && dt <= grid.t_max) {
            return Err(Error::invalid(format!("dt must lie in (0, t_max], got {dt}")));
        }
        let truncation = grid.truncation.unwrap_or_else(|| kernel.truncation_for(grid.tail_tol));
        let burn_in = grid.burn_in.unwrap_or(truncation);
        let steps_out = (grid.t_max / dt).round() as usize;
        if ((steps_out as f64) * dt - grid.t_max).abs() > 1e-9 * grid.t_max {
            return Err(Error::invalid("t_max must be a multiple of dt"));
        }
        let filter_probe = MovingAverage::new(kernel, dt, truncation, grid.tail_tol)?;
        let history = filter_probe.taps() + (burn_in / dt).ceil() as usize;
        let total = history + steps_out;
        let noise = HermiteNoise::new(spec, total, dt, grid.substeps)?;
        let filter = filter_probe.with_plan(total);
        Ok(MaSimulator {
            noise,
            filter,
            kernel: kernel.clone(),
            history,
            out_len: steps_out + 1,
            truncation,
            burn_in,
        })
    }

    pub fn spec(&self) -> HurstSpec {
        self.noise.spec
    }

    pub fn dt(&self) -> f64 {
        self.noise.dt
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn burn_in(&self) -> f64 {
        self.burn_in
    }

    pub fn output_len(&self) -> usize {
        self.out_len
    }

    /// `X(k·dt)` for `k = 0..=t_max/dt`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let dz = self.noise.sample(rng);
        let y = self.filter.convolve(&dz);
        y[self.history - 1..].to_vec()
    }

    pub fn sample_path(&self, seed: u64, stream: u64) -> SamplePath {
        let values = self.sample(&mut stream_rng(seed, stream));
        SamplePath {
            t0: 0.0,
            dt: self.noise.dt,
            values,
            meta: PathMeta {
                kind: PathKind::MovingAverage,
                fgn_hurst: None,
                spec: Some(self.noise.spec),
                kernel: Some(self.kernel.clone()),
                truncation: self.truncation,
                burn_in: self.burn_in,
                substeps: self.noise.substeps,
                seed,
                stream,
            },
        }
    }

    /// Exact `Var X(t)` of the simulated discrete model.
    pub fn model_variance(&self) -> f64 {
        self.filter.model_variance(|lag| self.noise.increment_covariance(lag))
    }
}

/// Hermite-Ornstein-Uhlenbeck path `∫_{−∞}^t e^{−α(t−u)} dZ_u` on `[0, t_max]`.
pub fn hou_path(
    spec: HurstSpec,
    alpha: f64,
    n_grid: usize,
    t_max: f64,
    seed: u64,
    stream: u64,
) -> Result<SamplePath> {
    if n_grid == 0 {
        return Err(Error::invalid("n_grid must be positive"));
    }
    let kernel = Kernel::exponential(alpha)?;
    let grid = MaGrid::new(t_max / n_grid as f64, t_max);
    Ok(MaSimulator::new(spec, &kernel, grid)?.sample_path(seed, stream))
}
