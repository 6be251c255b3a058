//! Explicit constants: Hermite-process normalizations, contraction integrals, limit
//! constants, moving-average covariances and Breuer-Major variances.

use std::cell::Cell;

use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::combinatorics::{coefficient, enumerate_indices, ContractionIndex};
use crate::error::{Error, Result};
use crate::hermite::{classify_regime, expand, rational_from_f64, rational_to_f64, Polynomial, RegimeFamily};
use crate::power_counting::hls_admissible;
use crate::process::{stream_rng, HurstSpec, Kernel};
use crate::quadrature::{integrate, integrate_half_line, integrate_power_singular, Estimate, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub method: Method,
    /// SHA-256 of the canonical JSON of the inputs.
    pub inputs_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ConstantResult {
    fn new(value: f64, err: f64, method: Method, inputs: &serde_json::Value) -> Self {
        ConstantResult {
            value,
            abs_error_estimate: err.abs(),
            method,
            inputs_digest: digest(inputs),
            seed: None,
        }
    }
}

fn digest(inputs: &serde_json::Value) -> String {
    let bytes = Sha256::digest(inputs.to_string().as_bytes());
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn check_finite(what: &str, est: Estimate) -> Result<Estimate> {
    if est.value.is_finite() && est.error.is_finite() {
        Ok(est)
    } else {
        Err(Error::Numerical(format!("{what}: non-finite result")))
    }
}

/// `c_{H,q}` with `c² = H(2H−1) / (q!·B(H₀−½, 2−2H₀)^q)`.
pub fn c_hq(spec: HurstSpec) -> ConstantResult {
    let (q, h, h0) = (spec.q(), spec.h(), spec.h0());
    let log_c2 = (h * (2.0 * h - 1.0)).ln() - ln_gamma(q as f64 + 1.0) - q as f64 * ln_beta(h0 - 0.5, 2.0 - 2.0 * h0);
    let value = (0.5 * log_c2).exp();
    ConstantResult::new(
        value,
        value * 8.0 * f64::EPSILON * (q as f64 + 2.0),
        Method::ClosedForm,
        &serde_json::json!({"op": "c_hq", "q": q, "H": h}),
    )
}

/// `c_{H,q}` from the defining variance: `1/c² = q!·B^q·∬_{[0,1]²}|s−s′|^{2H−2}`, with the Beta
/// factor `∫_0^∞ t^a (1+t)^a dt`, `a = H₀ − 3/2`, and both integrals done numerically.
pub fn c_hq_by_quadrature(spec: HurstSpec) -> Result<ConstantResult> {
    let (q, h, h0) = (spec.q(), spec.h(), spec.h0());
    let tol = Tolerance::new(1e-14, 1e-11);
    let a = h0 - 1.5;
    let beta = check_finite(
        "Beta integral",
        integrate_half_line(|t| t.powf(a) * (1.0 + t).powf(a), a, 2.0 * a, tol)?,
    )?;
    let e = 2.0 * h - 2.0;
    let inner_err = Cell::new(0.0f64);
    let square = integrate(
        |s| {
            // ∫_0^1 |s − s′|^e ds′ split at the singular point, in distance coordinates.
            let mut total = 0.0;
            for len in [s, 1.0 - s] {
                if len > 0.0 {
                    if let Ok(est) = integrate_power_singular(|d: f64| d.powf(e), len, e, tol) {
                        total += est.value;
                        inner_err.set(inner_err.get().max(est.error));
                    } else {
                        return f64::NAN;
                    }
                }
            }
            total
        },
        0.0,
        1.0,
        tol,
    )?;
    let square = check_finite("variance integral", square)?;
    let fact: f64 = (1..=q).map(f64::from).product();
    let inv_c2 = fact * beta.value.powi(q as i32) * square.value;
    let rel = q as f64 * beta.error / beta.value + (square.error + inner_err.get()) / square.value;
    let value = inv_c2.sqrt().recip();
    Ok(ConstantResult::new(
        value,
        0.5 * rel * value,
        Method::Quadrature,
        &serde_json::json!({"op": "c_hq_quadrature", "q": q, "H": h}),
    ))
}

/// Integrate the overlap `∫_0^∞ Π_k x(a + o_k) da` of shifted kernel copies.
fn overlap(kernel: &Kernel, offsets: &[f64]) -> f64 {
    match kernel {
        Kernel::Exponential { rate } => {
            let n = offsets.len() as f64;
            (-rate * offsets.iter().sum::<f64>()).exp() / (n * rate)
        }
        Kernel::Tabulated { samples, dt } => {
            // Piecewise constant: the product only changes where some shifted copy jumps.
            let end = samples.len() as f64 * dt;
            let hi = offsets.iter().fold(f64::INFINITY, |m, &o| m.min(end - o));
            if hi <= 0.0 {
                return 0.0;
            }
            let mut cuts = vec![0.0, hi];
            for &o in offsets {
                let first = (o / dt).ceil() as i64;
                let mut k = first;
                loop {
                    let c = k as f64 * dt - o;
                    if c >= hi {
                        break;
                    }
                    if c > 0.0 {
                        cuts.push(c);
                    }
                    k += 1;
                }
            }
            cuts.sort_by(|a, b| a.total_cmp(b));
            cuts.dedup();
            cuts.windows(2)
                .map(|w| {
                    let mid = 0.5 * (w[0] + w[1]);
                    let prod: f64 = offsets.iter().map(|&o| kernel.eval(mid + o)).product();
                    prod * (w[1] - w[0])
                })
                .sum()
        }
        Kernel::PowerCutoff { .. } => overlap_by_quadrature(kernel, offsets),
    }
}

fn overlap_by_quadrature(kernel: &Kernel, offsets: &[f64]) -> f64 {
    let decay = tail_power(kernel).map_or(f64::NEG_INFINITY, |p| p * offsets.len() as f64);
    integrate_half_line(
        |a| offsets.iter().map(|&o| kernel.eval(a + o)).product(),
        0.0,
        decay,
        Tolerance::new(1e-15, 1e-11),
    )
    .map_or(f64::NAN, |e| e.value)
}

/// Power `p` with `x(s) ~ s^p` at infinity, if the kernel decays only polynomially.
fn tail_power(kernel: &Kernel) -> Option<f64> {
    match kernel {
        Kernel::PowerCutoff { exponent, .. } => Some(-exponent),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KMethod {
    /// Quadrature for `n ≤ 3`, Monte Carlo beyond.
    Auto,
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Default Monte Carlo sample count for `n ≥ 4`.
pub const DEFAULT_MC_SAMPLES: usize = 400_000;

/// `K_{x,α,H₀} = ∫_{ℝ₊ⁿ} Π_k x(v_k) Π_{i<j} |v_i − v_j|^{(2H₀−2)α_ij} dv`.
pub fn k_x_alpha(kernel: &Kernel, alpha: &ContractionIndex, spec: HurstSpec, method: KMethod) -> Result<ConstantResult> {
    kernel.validate()?;
    if alpha.q() != spec.q() {
        return Err(Error::invalid(format!("contraction index has q = {}, spec has q = {}", alpha.q(), spec.q())));
    }
    let h = rational_from_f64(spec.h())?;
    let report = hls_admissible(&h, alpha)?;
    if !report.admissible {
        return Err(Error::HlsPrecondition(report.violations.join("; ")));
    }
    let n = alpha.n();
    let inputs = serde_json::json!({
        "op": "k_x_alpha",
        "kernel": kernel,
        "alpha": alpha.entries(),
        "n": n,
        "q": spec.q(),
        "H": spec.h(),
    });
    if alpha.total() == 0 {
        let value = kernel.integral().powi(n as i32);
        return Ok(ConstantResult::new(value, value.abs() * 4.0 * f64::EPSILON * n as f64, Method::ClosedForm, &inputs));
    }
    let e = 2.0 * spec.h0() - 2.0;
    let exps = |i: usize, j: usize| e * alpha.get(i, j) as f64;
    let method = match method {
        KMethod::Auto if n <= 3 => KMethod::Quadrature,
        KMethod::Auto => KMethod::MonteCarlo { samples: DEFAULT_MC_SAMPLES, seed: 0 },
        m => m,
    };
    match method {
        KMethod::Quadrature => {
            let est = match n {
                2 => k2_quadrature(kernel, exps(0, 1))?,
                3 => k3_quadrature(kernel, &exps)?,
                _ => return Err(Error::invalid(format!("quadrature is available for n <= 3, got n = {n}"))),
            };
            let est = check_finite("K quadrature", est)?;
            Ok(ConstantResult::new(est.value, est.error, Method::Quadrature, &inputs))
        }
        KMethod::MonteCarlo { samples, seed } => {
            let est = k_monte_carlo(kernel, n, &exps, samples, seed)?;
            let mut r = ConstantResult::new(est.value, est.error, Method::MonteCarlo, &inputs);
            r.seed = Some(seed);
            Ok(r)
        }
        KMethod::Auto => unreachable!(),
    }
}

fn k_tol() -> Tolerance {
    Tolerance::new(1e-13, 1e-9)
}

/// `n = 2`: `2∫_0^∞ g^{e} A(g) dg` with `A(g) = ∫ x(a) x(a+g) da`.
fn k2_quadrature(kernel: &Kernel, e: f64) -> Result<Estimate> {
    let decay = tail_power(kernel).map_or(f64::NEG_INFINITY, |p| p + e);
    let w = kernel_scale(kernel);
    let est = integrate_half_line(
        |u| {
            let g = w * u;
            g.powf(e) * overlap(kernel, &[0.0, g])
        },
        e,
        decay,
        k_tol(),
    )?;
    Ok(Estimate {
        value: 2.0 * w * est.value,
        error: 2.0 * w * est.error,
    })
}

/// `n = 3`: sum over the six orderings of the three points, written with the two gaps.
fn k3_quadrature(kernel: &Kernel, exps: &dyn Fn(usize, usize) -> f64) -> Result<Estimate> {
    const ORDERS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let decay = tail_power(kernel);
    let w = kernel_scale(kernel);
    let inner_tol = Tolerance::new(1e-14, 1e-10);
    let mut total = Estimate::zero();
    for ord in ORDERS {
        let pair = |a: usize, b: usize| exps(a.min(b), a.max(b));
        let (e1, e2, e12) = (pair(ord[0], ord[1]), pair(ord[1], ord[2]), pair(ord[0], ord[2]));
        let inner_err = Cell::new(0.0f64);
        let failed = Cell::new(false);
        let inner = |g1: f64| -> f64 {
            // ∫_0^∞ g2^{e2} (g1+g2)^{e12} B(g1, g2) dg2, split at g2 = g1.
            let f = |g2: f64| g2.powf(e2) * (g1 + g2).powf(e12) * overlap(kernel, &[0.0, g1, g1 + g2]);
            let near = integrate_power_singular(f, g1, e2, inner_tol);
            let far_decay = decay.map_or(f64::NEG_INFINITY, |p| p + e2 + e12);
            let far = integrate_half_line(|v| f(g1 + w * v), 0.0, far_decay, inner_tol);
            match (near, far) {
                (Ok(a), Ok(b)) => {
                    let s = Estimate {
                        value: a.value + w * b.value,
                        error: a.error + w * b.error,
                    };
                    inner_err.set(inner_err.get().max(s.error / s.value.abs().max(f64::MIN_POSITIVE)));
                    s.value
                }
                _ => {
                    failed.set(true);
                    0.0
                }
            }
        };
        let e0 = e1 + (e2 + e12 + 1.0).min(0.0);
        let far_decay = decay.map_or(f64::NEG_INFINITY, |p| p + e1 + e12 + 1.0);
        let est = integrate_half_line(|u| (w * u).powf(e1) * inner(w * u), e0, far_decay, k_tol())?;
        if failed.get() {
            return Err(Error::Numerical("inner quadrature of the three-point contraction failed".into()));
        }
        total = total
            + Estimate {
                value: w * est.value,
                error: w * (est.error + inner_err.get() * est.value.abs()),
            };
    }
    Ok(total)
}

/// Draws from the density `|x| / ∫|x|`.
fn sample_abs_kernel<R: Rng + ?Sized>(kernel: &Kernel, cdf: &[f64], rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    match kernel {
        Kernel::Exponential { rate } => -(1.0 - u).ln() / rate,
        Kernel::PowerCutoff { exponent, scale } => scale * ((1.0 - u).powf(-1.0 / (exponent - 1.0)) - 1.0),
        Kernel::Tabulated { dt, .. } => {
            let total = *cdf.last().unwrap();
            let target = u * total;
            let k = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
            let w: f64 = rng.gen();
            (k as f64 + w) * dt
        }
    }
}

/// Importance sampling with the kernel's own normalized magnitude as proposal.
fn k_monte_carlo(
    kernel: &Kernel,
    n: usize,
    exps: &dyn Fn(usize, usize) -> f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if samples < 2 {
        return Err(Error::invalid("Monte Carlo needs at least 2 samples"));
    }
    let mass = kernel.abs_integral();
    let cdf: Vec<f64> = match kernel {
        Kernel::Tabulated { samples, .. } => samples
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v.abs();
                Some(*acc)
            })
            .collect(),
        _ => Vec::new(),
    };
    let pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, exps(i, j)))
        .filter(|p| p.2 != 0.0)
        .collect();
    let scale = mass.powi(n as i32);
    let mut rng = stream_rng(seed, 0);
    let mut v = vec![0.0; n];
    let (mut sum, mut sq) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let mut sign = 1.0;
        for slot in v.iter_mut() {
            *slot = sample_abs_kernel(kernel, &cdf, &mut rng);
            sign *= kernel.eval(*slot).signum();
        }
        let w: f64 = sign * pairs.iter().map(|&(i, j, e)| (v[i] - v[j]).abs().powf(e)).product::<f64>();
        if w.is_finite() {
            sum += w;
            sq += w * w;
        }
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = (sq / m - mean * mean).max(0.0) * m / (m - 1.0);
    Ok(Estimate {
        value: scale * mean,
        error: scale * (var / m).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitTerm {
    /// Power of `x` in `P`.
    pub n: usize,
    /// Number of free legs, i.e. the chaos order of the limit.
    pub order: u32,
    pub alpha: Vec<u32>,
    pub coefficient: String,
    /// Exponent of `B(H₀−½, 2−2H₀)` carried by the term, `|α|`.
    pub beta_power: u32,
    pub k: ConstantResult,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitConstants {
    pub k1: ConstantResult,
    pub k2: ConstantResult,
    pub terms: Vec<LimitTerm>,
}

/// `K₁` (first chaos, fBm limit) and `K₂` (second chaos, Rosenblatt limit) for `q ≥ 2`.
///
/// Each term is `a_n c_{H,q}^n C_α β^{|α|} K_{x,α,H₀} / c_{H(m),m}` with `H(m) = 1 − m(1−H)/q`
/// and `β = B(H₀−½, 2−2H₀)`: every contracted pair of Hermite kernels integrates to
/// `β |v−w|^{2H₀−2}`, and that factor survives into the limit. The `n = 1, q = 2` term reduces
/// to `a₁∫x` because `H(2) = H`.
pub fn limit_constants(p: &Polynomial, kernel: &Kernel, spec: HurstSpec, method: KMethod) -> Result<LimitConstants> {
    let q = spec.q();
    if q < 2 {
        return Err(Error::Regime("limit constants K1, K2 are defined for q >= 2".into()));
    }
    let c = c_hq(spec).value;
    let beta = ln_beta(spec.h0() - 0.5, 2.0 - 2.0 * spec.h0()).exp();
    let mut sums = [(0.0f64, 0.0f64, Method::ClosedForm); 2];
    let mut terms = Vec::new();
    for (n, a) in p.coeffs().iter().enumerate().skip(1) {
        if a.is_zero() {
            continue;
        }
        let a = rational_to_f64(a);
        for m in 1..=2u32 {
            if m as usize > n * q as usize || !(n * q as usize - m as usize).is_multiple_of(2) {
                continue;
            }
            let hm = 1.0 - m as f64 * (1.0 - spec.h()) / q as f64;
            let c_m = c_hq(HurstSpec::new(m, hm)?).value;
            let slot = &mut sums[m as usize - 1];
            for alpha in enumerate_indices(n, q, Some(m))? {
                let coef = coefficient(&alpha).value;
                let k = k_x_alpha(kernel, &alpha, spec, method)?;
                let factor = a * c.powi(n as i32) * coef.to_f64().unwrap_or(f64::INFINITY) * beta.powi(alpha.total() as i32) / c_m;
                let contribution = factor * k.value;
                slot.0 += contribution;
                slot.1 += factor.abs() * k.abs_error_estimate;
                slot.2 = slot.2.max(k.method);
                terms.push(LimitTerm {
                    n,
                    order: m,
                    alpha: alpha.entries().to_vec(),
                    coefficient: coef.to_string(),
                    beta_power: alpha.total(),
                    k,
                    contribution,
                });
            }
        }
    }
    let inputs = |which: &str| {
        serde_json::json!({
            "op": which,
            "polynomial": p,
            "kernel": kernel,
            "q": q,
            "H": spec.h(),
        })
    };
    let k1 = ConstantResult::new(sums[0].0, sums[0].1, sums[0].2, &inputs("k1"));
    let k2 = ConstantResult::new(sums[1].0, sums[1].1, sums[1].2, &inputs("k2"));
    Ok(LimitConstants { k1, k2, terms })
}

/// Covariance `ρ(s) = E[X_s X_0]` of the first-order moving average `X = ∫ x(t−u) dB^H_u`:
/// `H(2H−1) ∫_0^∞ A(w) (|s+w|^{2H−2} + |s−w|^{2H−2}) dw`, `A(w) = ∫ x(a) x(a+w) da`.
pub fn ma_covariance(kernel: &Kernel, h: f64, s: f64) -> Result<ConstantResult> {
    kernel.validate()?;
    if !(h > 0.5 && h < 1.0) {
        return Err(Error::invalid(format!("H must lie in (1/2, 1), got {h}")));
    }
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::invalid(format!("lag must be finite and nonnegative, got {s}")));
    }
    let est = covariance_estimate(kernel, h, s)?;
    Ok(ConstantResult::new(
        est.value,
        est.error,
        Method::Quadrature,
        &serde_json::json!({"op": "ma_covariance", "kernel": kernel, "H": h, "s": s}),
    ))
}

/// [`ma_covariance`] for the exponential kernel `e^{−α s}` (fractional Ornstein-Uhlenbeck).
pub fn fou_covariance(h: f64, alpha: f64, s: f64) -> Result<ConstantResult> {
    ma_covariance(&Kernel::exponential(alpha)?, h, s)
}

/// Length over which the kernel (and hence `A`) varies.
fn kernel_scale(kernel: &Kernel) -> f64 {
    match kernel {
        Kernel::Exponential { rate } => 1.0 / rate,
        Kernel::PowerCutoff { scale, .. } => *scale,
        Kernel::Tabulated { samples, dt } => samples.len() as f64 * dt,
    }
}

/// `∫_a^b f` on panels `[a, a+w], [a+w, a+2w], [a+2w, a+4w], …` so that features near `a`
/// are resolved however long the interval.
fn integrate_graded<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, w: f64, tol: Tolerance) -> Result<Estimate> {
    let mut total = Estimate::zero();
    let mut lo = a;
    let mut width = w;
    while lo < b {
        let hi = (lo + width).min(b);
        total = total + integrate(&mut f, lo, hi, tol)?;
        lo = hi;
        width *= 2.0;
    }
    Ok(total)
}

fn covariance_estimate(kernel: &Kernel, h: f64, s: f64) -> Result<Estimate> {
    let e = 2.0 * h - 2.0;
    let tol = Tolerance::new(1e-15, 1e-10);
    let a = |w: f64| overlap(kernel, &[0.0, w]);
    let decay = tail_power(kernel).map_or(f64::NEG_INFINITY, |p| p + e);
    let scale = kernel_scale(kernel);
    let mut total = Estimate::zero();
    if s > 0.0 {
        let half = 0.5 * s;
        // w ∈ [0, s/2]: smooth in w, kernel features near w = 0.
        total = total + integrate_graded(|w| a(w) * ((s + w).powf(e) + (s - w).powf(e)), 0.0, half, scale, tol)?;
        // w ∈ [s/2, s]: singular at w = s, distance coordinate u = s − w.
        total = total + integrate_power_singular(|u| a(s - u) * ((2.0 * s - u).powf(e) + u.powf(e)), half, e, tol)?;
    }
    // w ∈ [s, ∞): t = w − s, measured in units of the kernel scale.
    let far = integrate_half_line(
        |v| {
            let t = scale * v;
            a(s + t) * ((2.0 * s + t).powf(e) + t.powf(e))
        },
        e,
        decay,
        tol,
    )?;
    total = total
        + Estimate {
            value: scale * far.value,
            error: scale * far.error,
        };
    let c = h * (2.0 * h - 1.0);
    check_finite(
        "covariance",
        Estimate {
            value: c * total.value,
            error: c * total.error,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreuerMajor {
    /// `Σ_k k! b_k² · 2∫_0^∞ ρ(s)^k ds`, the asymptotic `Var S_T(1) / T`.
    pub sigma2: ConstantResult,
    pub rho0: f64,
    pub rank: usize,
    /// `(k, b_k)` in the Hermite basis of `N(0, ρ(0))`.
    pub coefficients: Vec<(usize, f64)>,
}

/// Brownian-regime variance for `q = 1`.
pub fn breuer_major_sigma(p: &Polynomial, kernel: &Kernel, h: f64) -> Result<BreuerMajor> {
    let rho0 = ma_covariance(kernel, h, 0.0)?;
    let variance = rational_from_f64(rho0.value)?;
    let h_rat = rational_from_f64(h)?;
    let label = classify_regime(1, &h_rat, p, &variance)?;
    let e = 2.0 * h - 2.0;
    let d = label.rank_used;
    if label.family != RegimeFamily::Brownian || d as f64 * e >= -1.0 {
        return Err(Error::Regime(format!(
            "Breuer-Major needs d(2H-2) < -1; rank {d} at H = {h} gives {}",
            d as f64 * e
        )));
    }
    let expansion = expand(p, &variance)?;
    let coefficients: Vec<(usize, f64)> = expansion.coeffs.iter().map(|(&k, b)| (k, rational_to_f64(b))).collect();
    // ρ(s) ~ s^{2H−2} whenever ∫x ≠ 0; a faster decay only makes the substitution conservative.
    let decay = e;
    let rho_err = Cell::new(0.0f64);
    let failed = Cell::new(false);
    let rho = |s: f64| match covariance_estimate(kernel, h, s) {
        Ok(r) => {
            rho_err.set(rho_err.get().max(r.error / r.value.abs().max(f64::MIN_POSITIVE)));
            r.value
        }
        Err(_) => {
            failed.set(true);
            0.0
        }
    };
    // Cache ρ on the nodes of the first power so higher powers reuse it.
    let mut cache: Vec<(f64, f64)> = Vec::new();
    let mut sigma2 = 0.0;
    let mut err = 0.0;
    let tol = Tolerance::new(1e-14, 1e-8);
    for &(k, b) in &coefficients {
        let mut eval = |s: f64| {
            let r = match cache.binary_search_by(|probe| probe.0.total_cmp(&s)) {
                Ok(i) => cache[i].1,
                Err(i) => {
                    let r = rho(s);
                    cache.insert(i, (s, r));
                    r
                }
            };
            r.powi(k as i32)
        };
        let est = integrate_half_line(&mut eval, 0.0, k as f64 * decay, tol)?;
        if failed.get() {
            return Err(Error::Numerical("covariance quadrature failed inside Breuer-Major integral".into()));
        }
        let fact: f64 = (1..=k).map(|j| j as f64).product();
        let weight = fact * b * b * 2.0;
        sigma2 += weight * est.value;
        err += weight * (est.error + k as f64 * rho_err.get() * est.value.abs());
    }
    let inputs = serde_json::json!({"op": "breuer_major", "polynomial": p, "kernel": kernel, "H": h});
    Ok(BreuerMajor {
        sigma2: ConstantResult::new(sigma2, err, Method::Quadrature, &inputs),
        rho0: rho0.value,
        rank: d,
        coefficients,
    })
}

/// `a_d √(d! · 3/(16α²))`, the constant of the `√(T log T)` normalization at the critical Hurst
/// index for the Ornstein-Uhlenbeck kernel. Reported for information only.
pub fn critical_ou_constant(a_d: f64, d: usize, alpha: f64) -> Result<ConstantResult> {
    if d == 0 || !(alpha > 0.0) {
        return Err(Error::invalid("need d >= 1 and alpha > 0"));
    }
    let fact: f64 = (1..=d).map(|j| j as f64).product();
    let value = a_d * (fact * 3.0 / (16.0 * alpha * alpha)).sqrt();
    Ok(ConstantResult::new(
        value,
        value.abs() * 4.0 * f64::EPSILON,
        Method::ClosedForm,
        &serde_json::json!({"op": "critical_ou", "a_d": a_d, "d": d, "alpha": alpha}),
    ))
}

#[cfg(test)]
mod tests;
