use super::*;
use crate::process::{PathKind, PathMeta};
use proptest::prelude::*;

fn path(values: Vec<f64>, dt: f64) -> SamplePath {
    SamplePath {
        t0: 0.0,
        dt,
        values,
        meta: PathMeta {
            kind: PathKind::MovingAverage,
            fgn_hurst: None,
            spec: None,
            kernel: None,
            truncation: 0.0,
            burn_in: 0.0,
            substeps: 1,
            seed: 0,
            stream: 4,
        },
    }
}

/// Integral of the piecewise-linear interpolant of `g` over `[a, b]`, piece by piece.
fn linear_interpolant_integral(g: &[f64], dt: f64, a: f64, b: f64) -> f64 {
    let at = |t: f64| {
        let k = ((t / dt).floor() as usize).min(g.len() - 2);
        let u = t / dt - k as f64;
        g[k] * (1.0 - u) + g[k + 1] * u
    };
    let mut cuts = vec![a];
    let mut k = (a / dt).floor() as usize + 1;
    while (k as f64) * dt < b {
        cuts.push(k as f64 * dt);
        k += 1;
    }
    cuts.push(b);
    cuts.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (at(w[0]) + at(w[1]))).sum()
}

fn small_scan(spec: HurstSpec, p: Polynomial, reps: usize, seed: u64) -> ScanConfig {
    let horizons = (4..=8).map(|k| 2f64.powi(k)).collect();
    ScanConfig::new(spec, Kernel::exponential(1.0).unwrap(), p, horizons, reps, seed)
}

#[test]
fn constant_functional_vanishes() {
    let x = path(vec![0.3, -1.0, 2.0, 0.5, 0.1], 0.25);
    let s = evaluate_functional(&x, &Polynomial::from_i64(&[5]), 1.0, &[0.3, 0.5, 1.0], 5.0).unwrap();
    assert!(s.values.iter().all(|v| *v == 0.0));
    assert_eq!(s.replication, 4);
}

#[test]
fn trapezoid_is_exact_for_linear_integrand() {
    let dt = 0.1;
    let x = path((0..=20).map(|k| 1.0 + 2.0 * k as f64 * dt).collect(), dt);
    let s = evaluate_functional(&x, &Polynomial::from_i64(&[0, 1]), 2.0, &[0.37, 1.0], 0.0).unwrap();
    for (t, v) in s.t_points.iter().zip(&s.values) {
        let tau = 2.0 * t;
        assert!((v - (tau + tau * tau)).abs() < 1e-12, "t={t}: {v}");
    }
}

#[test]
fn coverage_is_enforced() {
    let x = path(vec![0.0; 11], 0.1);
    let p = Polynomial::from_i64(&[0, 1]);
    assert!(evaluate_functional(&x, &p, 1.0, &[1.0], 0.0).is_ok());
    assert!(evaluate_functional(&x, &p, 1.01, &[1.0], 0.0).is_err());
    assert!(evaluate_functional(&x, &p, 1.0, &[0.0], 0.0).is_err());
    assert!(evaluate_functional(&x, &p, 1.0, &[1.5], 0.0).is_err());
}

#[test]
fn ergodic_average_of_one() {
    let x = path(vec![0.7, -0.2, 3.0, 1.0], 0.5);
    let avg = hou_ergodic_average(&x, &Polynomial::from_i64(&[1]), 1.5).unwrap();
    assert!((avg - 1.0).abs() < 1e-15);
}

#[test]
fn scan_validation() {
    let spec = HurstSpec::new(1, 0.55).unwrap();
    let mut cfg = small_scan(spec, Polynomial::from_i64(&[0, 0, 1]), 10, 1);
    cfg.horizons = vec![16.0, 32.0, 64.0, 128.0];
    assert!(scan_scaling(&cfg).is_err());
    cfg.horizons = vec![16.0, 32.0, 64.0, 128.0, 200.0];
    assert!(scan_scaling(&cfg).is_err());
    cfg.horizons = vec![16.0, 32.0, 64.0, 128.0, 256.0];
    cfg.dt = 0.3;
    assert!(scan_scaling(&cfg).is_err());
    let cfg = small_scan(spec, Polynomial::from_i64(&[2]), 10, 1);
    assert!(matches!(scan_scaling(&cfg), Err(Error::RankUndefined)));
    // P = x with q = 1 sits on the critical line only at H = 1/2; any H > 1/2 is rank-1 HERMITE_D.
    let cfg = small_scan(HurstSpec::new(1, 0.75).unwrap(), Polynomial::from_i64(&[0, 0, 1]), 10, 1);
    assert!(matches!(scan_scaling(&cfg), Err(Error::CriticalCase { d: 2 })));
}

#[test]
fn brownian_scan_small() {
    let spec = HurstSpec::new(1, 0.55).unwrap();
    let r = scan_scaling(&small_scan(spec, Polynomial::from_i64(&[0, 0, 1]), 300, 5)).unwrap();
    assert_eq!(r.regime.family, RegimeFamily::Brownian);
    assert_eq!(r.predicted_slope, 1.0);
    assert_eq!(r.centering_method, CenteringMethod::ExactGaussian);
    assert!((r.centering - r.model_variance).abs() < 1e-15);
    assert!((r.slope - 1.0).abs() < 4.0 * r.slope_se + 0.1, "{} ± {}", r.slope, r.slope_se);
    assert!(!r.diagnostics.underpowered);
    assert_eq!(r.vanishing_exponent_alpha0, "-1/10");
    let last = r.diagnostics.self_similarity.last().unwrap();
    assert_eq!(last.relative, 1.0);
}

#[test]
fn pooled_centering_tracks_model_variance() {
    let spec = HurstSpec::new(2, 0.8).unwrap();
    let r = scan_scaling(&small_scan(spec, Polynomial::from_i64(&[0, 0, 1]), 60, 9)).unwrap();
    assert_eq!(r.centering_method, CenteringMethod::PooledMonteCarlo);
    assert_eq!(r.regime.family, RegimeFamily::Rosenblatt);
    assert!((r.centering / r.model_variance - 1.0).abs() < 0.1, "{} vs {}", r.centering, r.model_variance);
    assert!(r.diagnostics.underpowered);
}

#[test]
fn scan_is_thread_count_invariant() {
    let spec = HurstSpec::new(2, 0.8).unwrap();
    let cfg = small_scan(spec, Polynomial::from_i64(&[0, 0, 1]), 24, 77);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| scan_scaling(&cfg).unwrap())
    };
    let a = serde_json::to_string(&run(1)).unwrap();
    let b = serde_json::to_string(&run(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scaling_polynomial_keeps_slope() {
    let spec = HurstSpec::new(1, 0.7).unwrap();
    let base = scan_scaling(&small_scan(spec, Polynomial::from_i64(&[0, 0, 1]), 40, 3)).unwrap();
    let scaled = scan_scaling(&small_scan(spec, Polynomial::from_i64(&[0, 0, 4]), 40, 3)).unwrap();
    assert!((base.slope - scaled.slope).abs() < 1e-9);
    for (a, b) in base.horizons.iter().zip(&scaled.horizons) {
        assert_eq!(b.variance, 16.0 * a.variance);
    }
}

#[test]
fn diagnostics_flag_small_samples() {
    let label = regime_for(HurstSpec::new(1, 0.55).unwrap(), &Polynomial::from_i64(&[0, 0, 1]), 1.0).unwrap();
    let x: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64).collect();
    let d = limit_diagnostics(&x, &label, &[0.5, 1.0], &[1.0, 2.0]).unwrap();
    assert!(d.underpowered);
    assert_eq!(d.expected_shape, LimitShape::Gaussian);
    assert!((d.self_similarity[0].ratio - 2.0).abs() < 1e-12);
    assert!((d.self_similarity[0].relative - 1.0).abs() < 1e-12);
}

#[test]
fn critical_scan_requires_critical_index() {
    let p = Polynomial::from_i64(&[0, 0, 1]);
    let cfg = small_scan(HurstSpec::new(1, 0.7).unwrap(), p.clone(), 10, 1);
    assert!(matches!(critical_ou_scan(&cfg), Err(Error::Regime(_))));
    let cfg = small_scan(HurstSpec::new(1, 0.75).unwrap(), p, 20, 1);
    let r = critical_ou_scan(&cfg).unwrap();
    assert_eq!(r.rank, 2);
    assert!((r.stated_constant_squared - 6.0 / 16.0).abs() < 1e-12);
    assert!(r.points.iter().all(|p| p.normalized > 0.0));
}

#[test]
fn hou_reference_is_second_moment() {
    let cfg = HouConfig {
        spec: HurstSpec::new(1, 0.7).unwrap(),
        alpha: 1.0,
        f: Polynomial::from_i64(&[1, 0, 2]),
        horizon: 64.0,
        dt: 0.25,
        substeps: 1,
        replications: 20,
        seed: 2,
    };
    let r = hou_experiment(&cfg).unwrap();
    assert!((r.reference.unwrap() - (1.0 + 2.0 * r.rho0)).abs() < 1e-12);
    assert_eq!(r.averages.len(), 20);
    let cubic = HouConfig {
        f: Polynomial::from_i64(&[0, 0, 0, 1]),
        ..cfg
    };
    assert!(hou_experiment(&cubic).unwrap().reference.is_none());
}

proptest! {
    #[test]
    fn functional_is_additive(
        xs in prop::collection::vec(-3.0f64..3.0, 12..40),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
        c0 in -2i64..3, c1 in -2i64..3, c2 in -2i64..3,
        centering in -1.0f64..1.0,
    ) {
        let dt = 0.125;
        let x = path(xs.clone(), dt);
        let p = Polynomial::from_i64(&[c0, c1, c2]);
        let horizon = (xs.len() - 1) as f64 * dt;
        let (lo, hi) = (a.min(b).max(1e-3), a.max(b).max(2e-3));
        let s = evaluate_functional(&x, &p, horizon, &[lo, hi], centering).unwrap();
        let g: Vec<f64> = xs.iter().map(|&v| horner(&p.to_f64(), v) - centering).collect();
        let piece = linear_interpolant_integral(&g, dt, horizon * lo, horizon * hi);
        let scale = g.iter().map(|v| v.abs()).sum::<f64>() * dt + 1.0;
        prop_assert!((s.values[1] - s.values[0] - piece).abs() < 1e-12 * scale);
    }

    #[test]
    fn functional_scales_exactly(xs in prop::collection::vec(-3.0f64..3.0, 5..30), k in -4i32..5) {
        let c = 2f64.powi(k);
        let x = path(xs.clone(), 0.5);
        let horizon = (xs.len() - 1) as f64 * 0.5;
        let p = Polynomial::from_i64(&[1, -2, 3]);
        let pc = p.scale(&rational_from_f64(c).unwrap());
        let a = evaluate_functional(&x, &p, horizon, &[0.5, 1.0], 0.25).unwrap();
        let b = evaluate_functional(&x, &pc, horizon, &[0.5, 1.0], 0.25 * c).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            prop_assert_eq!(u * c, *v);
        }
    }
}
