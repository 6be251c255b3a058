use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on the kernel mass discarded by truncating the infinite past.
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

/// Causal moving-average kernel `x`, vanishing on `(−∞, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `e^{−rate·s}`.
    Exponential { rate: f64 },
    /// `(1 + s/scale)^{−exponent}`, requires `exponent > 1`.
    PowerCutoff { exponent: f64, scale: f64 },
    /// Piecewise constant: `samples[k]` on `[k·dt, (k+1)·dt)`, zero afterwards.
    Tabulated { samples: Vec<f64>, dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayClass {
    /// Bounded with `y^L x(y) → 0` for every `L` below `sup_exponent` (infinite when unbounded).
    Sl { sup_exponent: f64 },
    /// Only known to lie in `L¹ ∩ L^{1/H}`.
    L1L1OverH,
}

impl Kernel {
    pub fn exponential(rate: f64) -> Result<Self> {
        let k = Kernel::Exponential { rate };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::invalid(format!("exponential rate must be positive, got {rate}")));
                }
            }
            Kernel::PowerCutoff { exponent, scale } => {
                if !(exponent.is_finite() && *exponent > 1.0) {
                    return Err(Error::invalid(format!("power kernel exponent must exceed 1, got {exponent}")));
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::invalid(format!("power kernel scale must be positive, got {scale}")));
                }
            }
            Kernel::Tabulated { samples, dt } => {
                if samples.is_empty() {
                    return Err(Error::invalid("tabulated kernel needs at least one sample"));
                }
                if !(dt.is_finite() && *dt > 0.0) {
                    return Err(Error::invalid(format!("tabulated kernel dt must be positive, got {dt}")));
                }
                if samples.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("tabulated kernel has non-finite samples"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match self {
            Kernel::Exponential { rate } => (-rate * s).exp(),
            Kernel::PowerCutoff { exponent, scale } => (1.0 + s / scale).powf(-exponent),
            Kernel::Tabulated { samples, dt } => {
                let k = (s / dt).floor() as usize;
                samples.get(k).copied().unwrap_or(0.0)
            }
        }
    }

    /// `∫_0^s x`.
    pub fn cumulative(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            Kernel::Exponential { rate } => -(-rate * s).exp_m1() / rate,
            Kernel::PowerCutoff { exponent, scale } => {
                let l1 = exponent - 1.0;
                scale / l1 * (1.0 - (1.0 + s / scale).powf(-l1))
            }
            Kernel::Tabulated { samples, dt } => tabulated_cumulative(samples, *dt, s, |v| v),
        }
    }

    /// `∫_0^∞ x`.
    pub fn integral(&self) -> f64 {
        match self {
            Kernel::Exponential { rate } => 1.0 / rate,
            Kernel::PowerCutoff { exponent, scale } => scale / (exponent - 1.0),
            Kernel::Tabulated { samples, dt } => samples.iter().sum::<f64>() * dt,
        }
    }

    /// `∫_0^∞ |x|`.
    pub fn abs_integral(&self) -> f64 {
        match self {
            Kernel::Tabulated { samples, dt } => samples.iter().map(|v| v.abs()).sum::<f64>() * dt,
            _ => self.integral(),
        }
    }

    /// `∫_M^∞ |x|`.
    pub fn abs_tail(&self, m: f64) -> f64 {
        let m = m.max(0.0);
        match self {
            Kernel::Exponential { rate } => (-rate * m).exp() / rate,
            Kernel::PowerCutoff { exponent, scale } => {
                scale / (exponent - 1.0) * (1.0 + m / scale).powf(1.0 - exponent)
            }
            Kernel::Tabulated { samples, dt } => {
                (self.abs_integral() - tabulated_cumulative(samples, *dt, m, f64::abs)).max(0.0)
            }
        }
    }

    /// Smallest truncation whose discarded tail mass is at most `tol`.
    pub fn truncation_for(&self, tol: f64) -> f64 {
        match self {
            Kernel::Exponential { rate } => ((1.0 / (tol * rate)).ln() / rate).max(0.0),
            Kernel::PowerCutoff { exponent, scale } => {
                let l1 = exponent - 1.0;
                (scale * ((tol * l1 / scale).powf(-1.0 / l1) - 1.0)).max(0.0)
            }
            Kernel::Tabulated { samples, dt } => {
                // Support end, trimmed of trailing cells whose combined mass is within tolerance.
                let mut tail = 0.0;
                let mut end = samples.len();
                while end > 0 && tail + samples[end - 1].abs() * dt <= tol {
                    tail += samples[end - 1].abs() * dt;
                    end -= 1;
                }
                end as f64 * dt
            }
        }
    }

    pub fn decay_class(&self) -> DecayClass {
        match self {
            Kernel::PowerCutoff { exponent, .. } => DecayClass::Sl { sup_exponent: *exponent },
            _ => DecayClass::Sl { sup_exponent: f64::INFINITY },
        }
    }

    /// Whether `x ∈ S_L`.
    pub fn in_sl(&self, l: f64) -> bool {
        match self.decay_class() {
            DecayClass::Sl { sup_exponent } => l < sup_exponent,
            DecayClass::L1L1OverH => false,
        }
    }

    /// Average of `x` over each cell `[k·dt, (k+1)·dt)`, `k < taps`.
    pub fn cell_averages(&self, dt: f64, taps: usize) -> Vec<f64> {
        let mut prev = 0.0;
        (0..taps)
            .map(|k| {
                let next = self.cumulative((k + 1) as f64 * dt);
                let w = (next - prev) / dt;
                prev = next;
                w
            })
            .collect()
    }
}

fn tabulated_cumulative(samples: &[f64], dt: f64, s: f64, g: impl Fn(f64) -> f64) -> f64 {
    let full = ((s / dt).floor() as usize).min(samples.len());
    let mut total: f64 = samples[..full].iter().map(|&v| g(v)).sum::<f64>() * dt;
    if full < samples.len() {
        total += g(samples[full]) * (s - full as f64 * dt);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_half_line, Tolerance};

    fn kernels() -> Vec<Kernel> {
        vec![
            Kernel::Exponential { rate: 1.3 },
            Kernel::PowerCutoff { exponent: 2.5, scale: 0.7 },
            Kernel::Tabulated { samples: vec![1.0, -0.5, 2.0], dt: 0.25 },
        ]
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let tol = Tolerance::new(1e-12, 1e-10);
        for k in kernels() {
            k.validate().unwrap();
            let total = if let Kernel::Tabulated { .. } = k {
                integrate(|s| k.eval(s), 0.0, 0.75, Tolerance { max_intervals: 20000, ..tol }).unwrap().value
            } else {
                integrate_half_line(|s| k.eval(s), 0.0, f64::NEG_INFINITY, tol).unwrap().value
            };
            assert!((total - k.integral()).abs() < 1e-6, "{k:?}");
            for s in [0.1, 0.6, 2.0] {
                let q = integrate(|u| k.eval(u), 0.0, s, Tolerance { max_intervals: 20000, ..tol }).unwrap();
                assert!((q.value - k.cumulative(s)).abs() < 1e-6, "{k:?} s={s}");
            }
        }
    }

    #[test]
    fn truncation_bounds_tail() {
        for k in kernels() {
            for tol in [1e-3, 1e-6] {
                let m = k.truncation_for(tol);
                assert!(k.abs_tail(m) <= tol * (1.0 + 1e-9), "{k:?}");
                if m > 0.01 {
                    assert!(k.abs_tail(m * 0.9) > tol * 0.999 || matches!(k, Kernel::Tabulated { .. }));
                }
            }
        }
        let e = Kernel::Exponential { rate: 1.0 };
        assert!((e.truncation_for(1e-6) - 1e6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Kernel::exponential(0.0).is_err());
        assert!(Kernel::PowerCutoff { exponent: 1.0, scale: 1.0 }.validate().is_err());
        assert!(Kernel::Tabulated { samples: vec![], dt: 1.0 }.validate().is_err());
        assert_eq!(Kernel::Exponential { rate: 1.0 }.eval(-1.0), 0.0);
    }

    #[test]
    fn decay_classes() {
        assert!(Kernel::Exponential { rate: 2.0 }.in_sl(50.0));
        let p = Kernel::PowerCutoff { exponent: 2.0, scale: 1.0 };
        assert!(p.in_sl(1.5));
        assert!(!p.in_sl(2.0));
    }

    #[test]
    fn cell_averages_conserve_mass() {
        let k = Kernel::Exponential { rate: 1.0 };
        let w = k.cell_averages(0.1, 400);
        let mass: f64 = w.iter().sum::<f64>() * 0.1;
        assert!((mass - k.cumulative(40.0)).abs() < 1e-12);
        let t = Kernel::Tabulated { samples: vec![4.0], dt: 0.25 };
        assert_eq!(t.cell_averages(0.25, 3), vec![4.0, 0.0, 0.0]);
    }
}
