//! Sample moments, a D'Agostino-Pearson normality test and weighted line fits.

use serde::Serialize;

use crate::error::{Error, Result};

/// Central sample moments of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased variance.
    pub variance: f64,
    /// `m3 / m2^{3/2}` with biased central moments.
    pub skewness: f64,
    /// `m4 / m2² − 3` with biased central moments.
    pub excess_kurtosis: f64,
}

impl Moments {
    pub fn of(x: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 samples, got {n}")));
        }
        let nf = n as f64;
        let mean = x.iter().sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in x {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let variance = m2 / (nf - 1.0);
        let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
        Ok(Moments {
            n,
            mean,
            variance,
            skewness: m3 / m2.powf(1.5),
            excess_kurtosis: m4 / (m2 * m2) - 3.0,
        })
    }

    /// Standard error of `ln variance`, by the delta method: `sqrt((κ − 1)/n)` with `κ` the
    /// (non-excess) kurtosis.
    pub fn log_variance_se(&self) -> f64 {
        ((self.excess_kurtosis + 2.0).max(0.0) / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityTest {
    pub skew_z: f64,
    pub kurtosis_z: f64,
    /// `skew_z² + kurtosis_z²`, asymptotically χ²₂ under normality.
    pub k2: f64,
    pub p_value: f64,
}

/// D'Agostino's skewness test combined with the Anscombe-Glynn kurtosis test.
pub fn dagostino_pearson(m: &Moments) -> Result<NormalityTest> {
    let n = m.n as f64;
    if m.n < 20 {
        return Err(Error::invalid(format!("normality test needs at least 20 samples, got {}", m.n)));
    }
    let y = m.skewness * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let skew_z = delta * (y / alpha).asinh();

    let b2 = m.excess_kurtosis + 3.0;
    let mean = 3.0 * (n - 1.0) / (n + 1.0);
    let var = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0).powi(2) * (n + 3.0) * (n + 5.0));
    let x = (b2 - mean) / var.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term = (1.0 - 2.0 / a) / (1.0 + x * (2.0 / (a - 4.0)).sqrt());
    let kurtosis_z = ((1.0 - 2.0 / (9.0 * a)) - term.cbrt()) / (2.0 / (9.0 * a)).sqrt();

    let k2 = skew_z * skew_z + kurtosis_z * kurtosis_z;
    Ok(NormalityTest {
        skew_z,
        kurtosis_z,
        k2,
        p_value: (-0.5 * k2).exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

/// Weighted least squares `y ≈ intercept + slope·x` with weights `1/se²`; the slope SE assumes
/// the given standard errors are exact.
pub fn weighted_line_fit(x: &[f64], y: &[f64], se: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != se.len() || x.len() < 2 {
        return Err(Error::invalid("line fit needs at least 2 points with matching lengths"));
    }
    if se.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Numerical("line fit: standard errors must be positive".into()));
    }
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("line fit: abscissae must not all coincide"));
    }
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    Ok(LineFit {
        slope,
        slope_se: sxx.recip().sqrt(),
        intercept: ym - slope * xm,
    })
}
