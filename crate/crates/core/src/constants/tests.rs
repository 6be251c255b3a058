use super::*;
use crate::process::fgn_autocovariance;
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn spec(q: u32, h: f64) -> HurstSpec {
    HurstSpec::new(q, h).unwrap()
}

fn idx(n: usize, q: u32, entries: &[u32]) -> ContractionIndex {
    ContractionIndex::new(n, q, entries.to_vec()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300)
}

/// Mandelbrot-Van Ness normalization of fBm, an independent route to `c_{H,1}`.
fn mvn_c1(h: f64) -> f64 {
    let c2 = (h - 0.5).powi(2) * 2.0 * h * (std::f64::consts::PI * h).sin() * gamma(2.0 * h) / gamma(h + 0.5).powi(2);
    c2.sqrt()
}

/// Covariance of unit-length fBm increments at real lag `s`.
fn box_covariance(h: f64, s: f64) -> f64 {
    let a = 2.0 * h;
    let s = s.abs();
    if s > 100.0 {
        // Even Taylor series of the second difference; the direct form cancels.
        let x2 = s.powi(-2);
        let c2 = a * (a - 1.0);
        return 0.5 * s.powf(a) * (c2 * x2 + c2 * (a - 2.0) * (a - 3.0) / 12.0 * x2 * x2);
    }
    0.5 * ((s + 1.0).powf(a) - 2.0 * s.powf(a) + (s - 1.0).abs().powf(a))
}

#[test]
fn c_hq_first_order_matches_mandelbrot_van_ness() {
    for h in [0.55, 0.7, 0.85, 0.95] {
        let c = c_hq(spec(1, h));
        assert_eq!(c.method, Method::ClosedForm);
        assert!(close(c.value, mvn_c1(h), 1e-12), "H={h}: {} vs {}", c.value, mvn_c1(h));
    }
}

#[test]
fn c_hq_closed_form_vs_quadrature() {
    for (q, h) in [(1, 0.7), (2, 0.8), (3, 0.9), (4, 0.75)] {
        let a = c_hq(spec(q, h));
        let b = c_hq_by_quadrature(spec(q, h)).unwrap();
        assert!((a.value - b.value).abs() < 1e-6, "q={q} H={h}: {} vs {}", a.value, b.value);
        assert!(b.abs_error_estimate < 1e-6);
    }
}

#[test]
fn c_hq_vanishes_at_half() {
    let mut prev = f64::INFINITY;
    for h in [0.6, 0.55, 0.51, 0.501, 0.5001] {
        let c = c_hq(spec(1, h)).value;
        assert!(c > 0.0 && c < prev);
        prev = c;
    }
    assert!(prev < 0.02);
}

#[test]
fn digest_tracks_inputs() {
    let a = c_hq(spec(2, 0.8));
    let b = c_hq(spec(2, 0.8));
    let c = c_hq(spec(2, 0.81));
    assert_eq!(a.inputs_digest, b.inputs_digest);
    assert_ne!(a.inputs_digest, c.inputs_digest);
    assert_eq!(a.inputs_digest.len(), 64);
}

#[test]
fn k_trivial_index_is_power_of_integral() {
    let k = Kernel::PowerCutoff { exponent: 3.0, scale: 2.0 };
    let r = k_x_alpha(&k, &idx(3, 2, &[0, 0, 0]), spec(2, 0.8), KMethod::Auto).unwrap();
    assert_eq!(r.method, Method::ClosedForm);
    assert!(close(r.value, 1.0, 1e-14));
}

#[test]
fn k_two_points_exponential_closed_form() {
    // ∫∫ e^{−a(v+v′)} |v−v′|^e = Γ(e+1)/a^{e+2}.
    for (q, h, a12, rate) in [(2, 0.8, 1, 1.0), (3, 0.8, 1, 1.0), (3, 0.9, 2, 0.7), (4, 0.9, 3, 2.0f64), (2, 0.7, 1, 1e-3), (2, 0.7, 1, 1e3)] {
        let s = spec(q, h);
        let e = (2.0 * s.h0() - 2.0) * a12 as f64;
        let exact = gamma(e + 1.0) / rate.powf(e + 2.0);
        let r = k_x_alpha(&Kernel::exponential(rate).unwrap(), &idx(2, q, &[a12]), s, KMethod::Quadrature).unwrap();
        assert!(close(r.value, exact, 1e-8), "{q} {h} {a12}: {} vs {exact}", r.value);
        assert!(r.abs_error_estimate <= 1e-6 * exact);
    }
}

#[test]
fn k_two_points_dual_method() {
    for (q, h, a12) in [(2, 0.8, 1), (3, 0.8, 1), (3, 0.8, 2)] {
        let s = spec(q, h);
        let k = Kernel::exponential(1.0).unwrap();
        let quad = k_x_alpha(&k, &idx(2, q, &[a12]), s, KMethod::Quadrature).unwrap();
        let mc = k_x_alpha(&k, &idx(2, q, &[a12]), s, KMethod::MonteCarlo { samples: 400_000, seed: 7 }).unwrap();
        assert_eq!(mc.seed, Some(7));
        let bound = 3.0 * (quad.abs_error_estimate + mc.abs_error_estimate);
        assert!((quad.value - mc.value).abs() < bound, "{q} {h} {a12}: {} vs {} ± {}", quad.value, mc.value, mc.abs_error_estimate);
    }
}

#[test]
fn k_three_points_dual_method() {
    let cases: Vec<(Kernel, HurstSpec, Vec<u32>)> = vec![
        (Kernel::exponential(1.0).unwrap(), spec(2, 0.8), vec![1, 0, 1]),
        (Kernel::exponential(1.5).unwrap(), spec(3, 0.8), vec![2, 1, 1]),
        (Kernel::Tabulated { samples: vec![1.0, 0.5, 0.25], dt: 0.5 }, spec(3, 0.8), vec![1, 1, 1]),
        (Kernel::Tabulated { samples: vec![2.0, 1.0], dt: 0.01 }, spec(2, 0.8), vec![1, 0, 1]),
        (Kernel::exponential(40.0).unwrap(), spec(3, 0.8), vec![2, 1, 1]),
    ];
    for (k, s, entries) in cases {
        let a = idx(3, s.q(), &entries);
        let quad = k_x_alpha(&k, &a, s, KMethod::Quadrature).unwrap();
        let mc = k_x_alpha(&k, &a, s, KMethod::MonteCarlo { samples: 400_000, seed: 3 }).unwrap();
        let bound = 3.0 * (quad.abs_error_estimate + mc.abs_error_estimate);
        assert!(
            (quad.value - mc.value).abs() < bound,
            "{entries:?}: {} vs {} ± {}",
            quad.value,
            mc.value,
            mc.abs_error_estimate
        );
        assert!(quad.abs_error_estimate < 1e-5 * quad.value);
    }
}

#[test]
fn k_refuses_outside_hls() {
    // All legs contracted: p sits exactly at 1/H.
    let err = k_x_alpha(&Kernel::exponential(1.0).unwrap(), &idx(2, 2, &[2]), spec(2, 0.8), KMethod::Auto).unwrap_err();
    assert!(matches!(err, Error::HlsPrecondition(_)), "{err}");
    let err = k_x_alpha(&Kernel::exponential(1.0).unwrap(), &idx(2, 3, &[1]), spec(2, 0.8), KMethod::Auto).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn k_four_points_uses_monte_carlo() {
    let s = spec(2, 0.8);
    let a = idx(4, 2, &[1, 0, 0, 0, 0, 1]);
    let r = k_x_alpha(&Kernel::exponential(1.0).unwrap(), &a, s, KMethod::Auto).unwrap();
    assert_eq!(r.method, Method::MonteCarlo);
    // Disjoint pairs factorize into two n = 2 integrals.
    let pair = k_x_alpha(&Kernel::exponential(1.0).unwrap(), &idx(2, 2, &[1]), s, KMethod::Quadrature).unwrap();
    assert!((r.value - pair.value.powi(2)).abs() < 4.0 * r.abs_error_estimate);
    assert!(r.abs_error_estimate < 1e-2 * r.value);
}

#[test]
fn limit_constants_linear_second_order() {
    let rate = 1.7;
    let k = Kernel::exponential(rate).unwrap();
    let p = Polynomial::from_i64(&[0, 3]);
    let lc = limit_constants(&p, &k, spec(2, 0.8), KMethod::Auto).unwrap();
    assert_eq!(lc.k1.value, 0.0);
    assert!(close(lc.k2.value, 3.0 / rate, 1e-12), "{}", lc.k2.value);
}

#[test]
fn limit_constants_square_second_order() {
    // P = x², q = 2: one index (α₁₂ = 1), C_α = 4, K = Γ(2H₀−1)/a^{2H₀}; assemble by hand.
    let (h, rate) = (0.8, 1.3f64);
    let s = spec(2, h);
    let h0 = s.h0();
    let beta = gamma(h0 - 0.5) * gamma(2.0 - 2.0 * h0) / gamma(1.5 - h0);
    let c = (h * (2.0 * h - 1.0) / (2.0 * beta * beta)).sqrt();
    let k = gamma(2.0 * h0 - 1.0) / rate.powf(2.0 * h0);
    let expected = c * c * 4.0 * beta * k / c;
    let lc = limit_constants(&Polynomial::from_i64(&[0, 0, 1]), &Kernel::exponential(rate).unwrap(), s, KMethod::Auto).unwrap();
    assert_eq!(lc.terms.len(), 1);
    assert_eq!(lc.terms[0].beta_power, 1);
    assert!(close(lc.k2.value, expected, 1e-8), "{} vs {expected}", lc.k2.value);
    assert_eq!(lc.k1.value, 0.0);
}

#[test]
fn limit_constants_even_polynomial_odd_order() {
    let k = Kernel::exponential(1.0).unwrap();
    let p = Polynomial::from_i64(&[1, 0, 1]);
    let lc = limit_constants(&p, &k, spec(3, 0.8), KMethod::Auto).unwrap();
    assert_eq!(lc.k1.value, 0.0);
    assert!(lc.k2.value > 0.0);
    assert!(lc.terms.iter().all(|t| t.order == 2));
}

#[test]
fn limit_constants_cubic_third_order() {
    let k = Kernel::exponential(1.0).unwrap();
    let p = Polynomial::from_i64(&[0, 0, 0, 1]);
    let lc = limit_constants(&p, &k, spec(3, 0.8), KMethod::Auto).unwrap();
    assert!(lc.k1.value > 0.0 && lc.k1.value.is_finite());
    assert!(lc.k1.abs_error_estimate < 1e-4 * lc.k1.value);
    assert!(lc.terms.iter().all(|t| t.contribution > 0.0));
    assert!(matches!(
        limit_constants(&p, &k, spec(1, 0.8), KMethod::Auto),
        Err(Error::Regime(_))
    ));
}

#[test]
fn fou_variance_at_zero_lag() {
    for h in [0.55, 0.7, 0.9] {
        for rate in [1.0, 2.5] {
            let r = fou_covariance(h, rate, 0.0).unwrap();
            let exact = h * gamma(2.0 * h) / rate.powf(2.0 * h);
            assert!(close(r.value, exact, 1e-8), "H={h} a={rate}: {} vs {exact}", r.value);
        }
    }
}

#[test]
fn box_kernel_covariance_is_increment_covariance() {
    let k = Kernel::Tabulated { samples: vec![1.0], dt: 1.0 };
    for h in [0.6, 0.8] {
        for s in [0.0, 0.3, 1.0, 2.5, 7.0, 40.0] {
            let r = ma_covariance(&k, h, s).unwrap();
            let exact = box_covariance(h, s);
            assert!((r.value - exact).abs() < 1e-8 * exact.abs().max(1e-3), "H={h} s={s}: {} vs {exact}", r.value);
        }
        let lag = ma_covariance(&k, h, 3.0).unwrap().value;
        assert!((lag - fgn_autocovariance(h, 3)).abs() < 1e-8);
    }
}

#[test]
fn overlaps_match_direct_quadrature() {
    let tol = Tolerance::new(1e-14, 1e-11);
    let e = Kernel::exponential(1.3).unwrap();
    let t = Kernel::Tabulated { samples: vec![1.0, -0.5, 2.0, 0.25], dt: 0.3 };
    for offs in [vec![0.0, 0.4], vec![0.0, 0.17, 0.95], vec![0.0, 2.0]] {
        let direct = overlap_by_quadrature(&e, &offs);
        assert!(close(overlap(&e, &offs), direct, 1e-9));
        let direct = integrate(|a| offs.iter().map(|&o| t.eval(a + o)).product(), 0.0, 1.2, tol).unwrap();
        assert!((overlap(&t, &offs) - direct.value).abs() < 1e-6, "{offs:?}");
    }
}

#[test]
fn fou_covariance_decay() {
    let h = 0.7;
    let scaled: Vec<f64> = [10.0, 20.0, 40.0, 80.0]
        .iter()
        .map(|&s| fou_covariance(h, 1.0, s).unwrap().value * s.powf(2.0 - 2.0 * h))
        .collect();
    let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(lo > 0.0 && (hi - lo) / lo < 0.1, "{scaled:?}");
    // The tail constant is H(2H−1)(∫x)².
    assert!(close(scaled[3], h * (2.0 * h - 1.0), 0.01), "{scaled:?}");
    let mut prev = f64::INFINITY;
    for s in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
        let r = fou_covariance(h, 1.0, s).unwrap().value;
        assert!(r > 0.0 && r < prev);
        prev = r;
    }
    let slow = fou_covariance(0.9, 1.0, 20.0).unwrap().value / fou_covariance(0.9, 1.0, 0.0).unwrap().value;
    let fast = fou_covariance(0.55, 1.0, 20.0).unwrap().value / fou_covariance(0.55, 1.0, 0.0).unwrap().value;
    assert!(fast < slow);
}

#[test]
fn breuer_major_box_kernel_square() {
    // P = x² has b_2 = 1, so σ² = 2!·2∫ρ² with ρ the increment covariance.
    let h = 0.6;
    let k = Kernel::Tabulated { samples: vec![1.0], dt: 1.0 };
    let bm = breuer_major_sigma(&Polynomial::from_i64(&[0, 0, 1]), &k, h).unwrap();
    let tol = Tolerance::new(1e-14, 1e-11);
    let near = integrate(|s| box_covariance(h, s).powi(2), 0.0, 1.0, tol).unwrap().value;
    let mid = integrate(|s| box_covariance(h, s).powi(2), 1.0, 64.0, tol).unwrap().value;
    let far = integrate_half_line(|t| box_covariance(h, 64.0 + t).powi(2), 0.0, 4.0 * h - 4.0, tol).unwrap().value;
    let exact = 4.0 * (near + mid + far);
    assert!(close(bm.sigma2.value, exact, 1e-6), "{} vs {exact}", bm.sigma2.value);
    assert_eq!(bm.rank, 2);
    assert!(close(bm.rho0, 1.0, 1e-9));
}

#[test]
fn breuer_major_preconditions() {
    let k = Kernel::exponential(1.0).unwrap();
    assert!(breuer_major_sigma(&Polynomial::from_i64(&[0, 1]), &k, 0.7).is_err());
    // d = 2 at H = 3/4 is the critical case.
    assert!(matches!(
        breuer_major_sigma(&Polynomial::from_i64(&[0, 0, 1]), &k, 0.75),
        Err(Error::CriticalCase { d: 2 })
    ));
    let bm = breuer_major_sigma(&Polynomial::from_i64(&[0, 0, 1]), &k, 0.55).unwrap();
    assert!(bm.sigma2.value > 0.0 && bm.sigma2.value.is_finite());
    assert!(bm.sigma2.abs_error_estimate < 1e-4 * bm.sigma2.value);
}

#[test]
fn critical_constant() {
    let c = critical_ou_constant(1.0, 2, 1.0).unwrap();
    assert!(close(c.value, (6.0f64 / 16.0).sqrt(), 1e-15));
    assert!(critical_ou_constant(1.0, 0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn k_positive_for_nonnegative_kernels(h in 0.55f64..0.95, rate in 0.3f64..3.0, a12 in 1u32..3) {
        let s = spec(3, h);
        let a = idx(2, 3, &[a12]);
        if let Ok(r) = k_x_alpha(&Kernel::exponential(rate).unwrap(), &a, s, KMethod::Quadrature) {
            prop_assert!(r.value > 0.0 && r.abs_error_estimate >= 0.0);
        }
        let c = c_hq(s);
        prop_assert!(c.value > 0.0);
    }

    #[test]
    fn box_covariance_everywhere(h in 0.52f64..0.98, s in 0.0f64..12.0) {
        let k = Kernel::Tabulated { samples: vec![1.0], dt: 1.0 };
        let r = ma_covariance(&k, h, s).unwrap();
        let exact = box_covariance(h, s);
        prop_assert!((r.value - exact).abs() < 1e-7 * exact.abs().max(1e-2));
    }

    // Whatever the HLS lemma admits, the quadrature must integrate; what it rejects is refused.
    #[test]
    fn quadrature_follows_hls(h in 0.55f64..0.95, rate in 0.5f64..2.5, q in 1u32..5, a in 0u32..5, b in 0u32..3, three in any::<bool>()) {
        let a = a.min(q);
        let entries = if three { vec![a.min(1), if q >= 2 { b.min(1) } else { 0 }, 0] } else { vec![a] };
        let alpha = idx(if three { 3 } else { 2 }, q, &entries);
        let hr = crate::hermite::rational_from_f64(h).unwrap();
        let admissible = hls_admissible(&hr, &alpha).unwrap().admissible || alpha.total() == 0;
        let r = k_x_alpha(&Kernel::exponential(rate).unwrap(), &alpha, spec(q, h), KMethod::Quadrature);
        if admissible {
            let r = r.unwrap();
            prop_assert!(r.value.is_finite() && r.value > 0.0);
            prop_assert!(r.abs_error_estimate.is_finite() && r.abs_error_estimate <= 1e-3 * r.value);
        } else {
            prop_assert!(matches!(r, Err(Error::HlsPrecondition(_))));
        }
    }
}
