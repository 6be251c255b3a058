use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Autocovariance of unit-step fractional Gaussian noise at integer lag `k`.
pub fn fgn_autocovariance(h0: f64, k: i64) -> f64 {
    let a = 2.0 * h0;
    let k = k.unsigned_abs();
    if k < 64 {
        let k = k as f64;
        return 0.5 * ((k + 1.0).powf(a) - 2.0 * k.powf(a) + (k - 1.0).abs().powf(a));
    }
    // The second difference cancels badly for large k; sum its binomial series in 1/k instead:
    // ((1+x)^a + (1−x)^a − 2)/2 = Σ_{j≥1} C(a, 2j) x^{2j}.
    let k = k as f64;
    let x2 = (1.0 / k).powi(2);
    let mut binom = a * (a - 1.0) / 2.0;
    let mut pow = x2;
    let mut sum = 0.0;
    for j in 1..40 {
        let term = binom * pow;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
        let m = 2.0 * j as f64;
        binom *= (a - m) * (a - m - 1.0) / ((m + 1.0) * (m + 2.0));
        pow *= x2;
    }
    k.powf(a) * sum
}

/// Circulant-embedding sampler for `n` consecutive values of unit-step fGn.
///
/// Eigenvalues and the FFT plan are computed once; every call to [`FgnSampler::sample`]
/// costs one FFT of the embedding size.
pub struct FgnSampler {
    n: usize,
    amplitudes: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FgnSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FgnSampler")
            .field("n", &self.n)
            .field("embedding", &self.amplitudes.len())
            .finish()
    }
}

impl FgnSampler {
    pub fn new(h0: f64, n: usize) -> Result<Self> {
        if !(h0 > 0.0 && h0 < 1.0) {
            return Err(Error::invalid(format!("fGn Hurst index must lie in (0, 1), got {h0}")));
        }
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 samples, got {n}")));
        }
        let base = (2 * (n - 1)).next_power_of_two();
        let mut planner = FftPlanner::new();
        for m in [base, 2 * base, 4 * base, 8 * base] {
            let half = m / 2;
            let mut c: Vec<Complex64> = (0..m)
                .map(|j| {
                    let lag = if j <= half { j } else { m - j };
                    Complex64::new(fgn_autocovariance(h0, lag as i64), 0.0)
                })
                .collect();
            let fft = planner.plan_fft_forward(m);
            fft.process(&mut c);
            let lmax = c.iter().fold(0.0f64, |a, z| a.max(z.re));
            if c.iter().any(|z| z.re < -1e-10 * lmax) {
                continue;
            }
            let amplitudes = c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
            return Ok(FgnSampler { n, amplitudes, fft });
        }
        Err(Error::Numerical(format!(
            "circulant embedding not nonnegative for H0={h0}, n={n} even after padding x8"
        )))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn embedding_size(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut buf: Vec<Complex64> = self
            .amplitudes
            .iter()
            .map(|&a| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(a * re, a * im)
            })
            .collect();
        self.fft.process(&mut buf);
        buf.truncate(self.n);
        buf.into_iter().map(|z| z.re).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn autocovariance_values() {
        assert!((fgn_autocovariance(0.5, 1)).abs() < 1e-15);
        assert_eq!(fgn_autocovariance(0.7, 0), 1.0);
        let expected = (2f64.powf(1.8) - 2.0) / 2.0;
        assert!((fgn_autocovariance(0.9, 1) - expected).abs() < 1e-15);
        assert!((expected - 0.741).abs() < 1e-3);
        assert_eq!(fgn_autocovariance(0.8, -3), fgn_autocovariance(0.8, 3));
    }

    #[test]
    fn large_lags_are_accurate() {
        // Against the direct formula where it is still well conditioned, and the asymptote beyond.
        for h0 in [0.55, 0.8, 0.95] {
            let a = 2.0 * h0;
            for k in [64i64, 65, 100, 1000] {
                let kf = k as f64;
                let direct = 0.5 * ((kf + 1.0).powf(a) - 2.0 * kf.powf(a) + (kf - 1.0).powf(a));
                let got = fgn_autocovariance(h0, k);
                assert!((got - direct).abs() < 1e-9 * direct, "h0={h0} k={k}: {got} vs {direct}");
            }
            let k = 1i64 << 40;
            let asym = h0 * (2.0 * h0 - 1.0) * (k as f64).powf(a - 2.0);
            assert!((fgn_autocovariance(h0, k) / asym - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn long_embedding_near_unit_hurst() {
        let s = FgnSampler::new(14.0 / 15.0, 1_052_160).unwrap();
        assert_eq!(s.embedding_size(), 1 << 22);
    }

    #[test]
    fn embedding_is_power_of_two() {
        let s = FgnSampler::new(0.75, 1000).unwrap();
        assert_eq!(s.embedding_size(), 2048);
        assert_eq!(s.len(), 1000);
        assert!(FgnSampler::new(1.0, 10).is_err());
        assert!(FgnSampler::new(0.6, 1).is_err());
    }

    #[test]
    fn lag_covariances_match() {
        // Pool lag products over replications; check within 4 standard errors.
        let n = 512;
        let reps = 400;
        for h0 in [0.3, 0.6, 0.9] {
            let s = FgnSampler::new(h0, n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut sums = [0.0f64; 4];
            let mut sq = [0.0f64; 4];
            for _ in 0..reps {
                let x = s.sample(&mut rng);
                for lag in 0..4 {
                    let v = x[0] * x[lag] + x[n / 2] * x[n / 2 + lag];
                    sums[lag] += v / 2.0;
                    sq[lag] += (v / 2.0).powi(2);
                }
            }
            for lag in 0..4 {
                let mean = sums[lag] / reps as f64;
                let var = sq[lag] / reps as f64 - mean * mean;
                let se = (var / reps as f64).sqrt();
                let target = fgn_autocovariance(h0, lag as i64);
                assert!((mean - target).abs() < 4.0 * se, "h0={h0} lag={lag}: {mean} vs {target}");
            }
        }
    }
}
