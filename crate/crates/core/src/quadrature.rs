//! Adaptive Gauss-Kronrod quadrature with helpers for endpoint power singularities
//! and half-line integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn zero() -> Self {
        Estimate { value: 0.0, error: 0.0 }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, o: Estimate) -> Estimate {
        Estimate {
            value: self.value + o.value,
            error: self.error + o.error,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-12,
            rel: 1e-10,
            max_intervals: 2000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs,
            rel,
            ..Default::default()
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod panel with the embedded 7-point Gauss rule.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Estimate {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kron * h;
    let diff = ((kron - gauss) * h).abs();
    // QUADPACK-style error scaling, softened for smooth integrands.
    let error = if diff == 0.0 {
        0.0
    } else {
        diff.min((200.0 * diff).powf(1.5))
    };
    Estimate { value, error: error.max(f64::EPSILON * value.abs() * 50.0) }
}

struct Panel {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.est.error == o.est.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.est.error.total_cmp(&o.est.error)
    }
}

/// Globally adaptive quadrature of `f` over `[a, b]`.
///
/// Returns the best estimate even when the interval budget runs out; the error
/// field then carries the unresolved remainder.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid(format!("finite bounds required, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(Estimate::zero());
    }
    if a > b {
        let e = integrate(f, b, a, tol)?;
        return Ok(Estimate { value: -e.value, error: e.error });
    }
    let first = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    let mut total = first;
    heap.push(Panel { a, b, est: first });
    while heap.len() < tol.max_intervals {
        if total.error <= tol.abs.max(tol.rel * total.value.abs()) {
            break;
        }
        let worst = heap.pop().unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let left = gk15(&mut f, worst.a, mid);
        let right = gk15(&mut f, mid, worst.b);
        total.value += left.value + right.value - worst.est.value;
        total.error += left.error + right.error - worst.est.error;
        heap.push(Panel { a: worst.a, b: mid, est: left });
        heap.push(Panel { a: mid, b: worst.b, est: right });
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    let mut panels: Vec<Panel> = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value: f64 = panels.iter().map(|p| p.est.value).sum();
    let error: f64 = panels.iter().map(|p| p.est.error).sum();
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite integral on [{a}, {b}]")));
    }
    Ok(Estimate { value, error })
}

/// `∫_0^len f(t) dt` for `f(t) ~ t^e` near 0, with `e > −1`.
///
/// Substitutes `t = len·v^{1/(1+e)}`, which makes the integrand bounded at `v = 0`.
/// Callers pass the distance to the singular point so no precision is lost near it.
pub fn integrate_power_singular<F: FnMut(f64) -> f64>(
    mut f: F,
    len: f64,
    e: f64,
    tol: Tolerance,
) -> Result<Estimate> {
    if e <= -1.0 {
        return Err(Error::invalid(format!("non-integrable endpoint exponent {e}")));
    }
    if e == 0.0 {
        return integrate(f, 0.0, len, tol);
    }
    let k = 1.0 / (1.0 + e);
    integrate(
        |v| {
            if v <= 0.0 {
                return 0.0;
            }
            let vk = v.powf(k);
            let t = len * vk;
            if t <= 0.0 {
                return 0.0;
            }
            f(t) * len * k * vk / v
        },
        0.0,
        1.0,
        tol,
    )
}

/// `∫_0^∞ f(t) dt`, split as `∫_0^1 f + ∫_0^1 f(1/s)/s² ds`.
///
/// `e0` is the power behaviour of `f` at 0 and `e_inf` its power decay at infinity
/// (`f64::NEG_INFINITY` for faster than any power); both only steer the substitutions.
pub fn integrate_half_line<F: FnMut(f64) -> f64>(mut f: F, e0: f64, e_inf: f64, tol: Tolerance) -> Result<Estimate> {
    let near = integrate_power_singular(&mut f, 1.0, e0, tol)?;
    let far_exponent = if e_inf.is_finite() { (-e_inf - 2.0).min(0.0) } else { 0.0 };
    if far_exponent <= -1.0 {
        return Err(Error::invalid(format!("integrand decays like t^{e_inf}, not integrable at infinity")));
    }
    let far = integrate_power_singular(
        |s| {
            let t = 1.0 / s;
            if !t.is_finite() {
                return 0.0;
            }
            f(t) / (s * s)
        },
        1.0,
        far_exponent,
        tol,
    )?;
    Ok(near + far)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}
