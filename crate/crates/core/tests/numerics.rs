use pml_core::numerics::*;
use pml_core::PmlError;
use proptest::prelude::*;

/// erf(x) = 2/sqrt(pi) e^{-x^2} sum_n 2^n x^{2n+1} / (2n+1)!!.
/// All terms are positive, so there is no cancellation.
fn erf_series(x: f64) -> f64 {
    let ax = x.abs();
    let mut term = ax;
    let mut sum = ax;
    let mut n = 0;
    while n < 30 || term > 1e-18 * sum {
        n += 1;
        term *= 2.0 * ax * ax / (2 * n + 1) as f64;
        sum += term;
    }
    let v = 2.0 / std::f64::consts::PI.sqrt() * (-ax * ax).exp() * sum;
    v.copysign(x)
}

/// erfc(x) for x >= 3 from its continued fraction, evaluated by Lentz's method.
fn erfc_cf(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { 1.0 / tiny } else { 1.0 / d };
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x * x).exp() / (std::f64::consts::PI.sqrt() * f)
}

fn phi_oracle(x: f64) -> f64 {
    let z = x / 2f64.sqrt();
    if z < -3.0 {
        0.5 * erfc_cf(-z)
    } else if z > 3.0 {
        1.0 - 0.5 * erfc_cf(z)
    } else {
        0.5 * (1.0 + erf_series(z))
    }
}

fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn erf_matches_series_oracle() {
    for k in -400..=400 {
        let x = k as f64 / 100.0;
        let want = erf_series(x);
        let got = erf(x);
        assert!((got - want).abs() <= 1e-14 * want.abs().max(1e-300) + 1e-16, "x={x}: {got} vs {want}");
    }
}

#[test]
fn erfc_matches_continued_fraction() {
    for k in 0..=240 {
        let x = 3.0 + k as f64 / 10.0;
        let want = erfc_cf(x);
        let got = erfc(x);
        assert!((got / want - 1.0).abs() < 1e-13, "x={x}: {got} vs {want}");
    }
}

#[test]
fn cdf_examples() {
    assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
    let v = std_normal_cdf(0.5).unwrap();
    assert!((v - phi_oracle(0.5)).abs() < 1e-15);
    assert!((v - 0.691_462_461_274_013_1).abs() < 1e-12);
    assert!((std_normal_cdf(1.959964).unwrap() - 0.975).abs() < 1e-6);
    for x in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
        assert!(matches!(std_normal_cdf(x), Err(PmlError::Domain { .. })));
        assert!(matches!(std_normal_pdf(x), Err(PmlError::Domain { .. })));
    }
}

#[test]
fn cdf_against_oracle_on_a_grid() {
    for k in -1200..=1200 {
        let x = k as f64 / 100.0;
        let want = phi_oracle(x);
        let got = std_normal_cdf(x).unwrap();
        assert!((got - want).abs() <= 1e-12, "x={x}");
        if x < -4.25 {
            assert!((got / want - 1.0).abs() < 1e-12, "relative, x={x}");
        }
    }
}

#[test]
fn pdf_examples() {
    assert!((std_normal_pdf(0.0).unwrap() - 0.398_942_280_4).abs() < 1e-10);
    assert_eq!(std_normal_pdf(1.3).unwrap(), std_normal_pdf(-1.3).unwrap());
    assert_eq!(std_normal_pdf(40.0).unwrap(), 0.0);
    let x: f64 = 0.7;
    assert!((std_normal_pdf(x).unwrap() - (-x * x / 2.0).exp() / SQRT_2PI).abs() < 1e-16);
}

#[test]
fn quantile_examples() {
    assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
    for p in [0.9, 0.975, 1e-10, 0.3] {
        let want = bisect(|x| phi_oracle(x) - p, -10.0, 10.0);
        let got = std_normal_quantile(p).unwrap();
        assert!((got - want).abs() < 1e-9, "p={p}: {got} vs {want}");
    }
    assert!((std_normal_quantile(0.9).unwrap() - 1.2815516).abs() < 1e-7);
    assert!((std_normal_quantile(0.975).unwrap() - 1.959964).abs() < 1e-5);
    for p in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(matches!(std_normal_quantile(p), Err(PmlError::Domain { .. })));
    }
}

#[test]
fn integrate_examples() {
    let cfg = QuadratureConfig::default();
    let pdf = |x: f64| std_normal_pdf(x).unwrap();
    assert!((integrate(pdf, f64::NEG_INFINITY, f64::INFINITY, &cfg).unwrap() - 1.0).abs() < 1e-10);
    assert!((integrate(pdf, 0.0, f64::INFINITY, &cfg).unwrap() - 0.5).abs() < 1e-10);
    let m = integrate(|x| x * pdf(x), 0.0, f64::INFINITY, &cfg).unwrap();
    assert!((m - 1.0 / SQRT_2PI).abs() < 1e-8);
}

#[test]
fn integrate_reports_last_estimate_on_failure() {
    let cfg = QuadratureConfig {
        panel_count: 256,
        abs_tol: 1e-300,
        ..QuadratureConfig::default()
    };
    match integrate(|x| (1e4 * x).sin().abs(), 0.0, 1.0, &cfg) {
        Err(PmlError::Numerical { last_estimate, .. }) => {
            let v = last_estimate.unwrap();
            assert!((v - 2.0 / std::f64::consts::PI).abs() < 1e-2);
        }
        other => panic!("expected a numerical error, got {other:?}"),
    }
}

#[test]
fn quadrature_config_validation() {
    assert!(QuadratureConfig::default().validate().is_ok());
    let bad = [
        (QuadratureConfig { truncation_halfwidth: 7.0, ..Default::default() }, "/truncation_halfwidth"),
        (QuadratureConfig { panel_count: 100, ..Default::default() }, "/panel_count"),
        (QuadratureConfig { abs_tol: 0.0, ..Default::default() }, "/abs_tol"),
    ];
    for (cfg, ptr) in bad {
        match cfg.validate() {
            Err(PmlError::Invalid { field, .. }) => assert_eq!(field, ptr),
            other => panic!("{other:?}"),
        }
    }
    let parsed: QuadratureConfig = serde_json::from_str(r#"{"panel_count": 4096}"#).unwrap();
    assert_eq!(parsed.truncation_halfwidth, 10.0);
    assert_eq!(parsed.panel_count, 4096);
    assert!(serde_json::from_str::<QuadratureConfig>(r#"{"panels": 4096}"#).is_err());
}

#[test]
fn root_finding_examples() {
    let r = find_root_increasing(|x| x - 1.0, 0.0, 2.0, 1e-12).unwrap();
    assert!((r - 1.0).abs() < 1e-12);
    let r = find_root_increasing(|x| std_normal_cdf(x).unwrap() - 0.9, 0.0, 5.0, 1e-12).unwrap();
    assert!((r - 1.2815516).abs() < 1e-7);
    assert!(matches!(
        find_root_increasing(|x| x + 1.0, 0.0, 2.0, 1e-12),
        Err(PmlError::Precondition { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cdf_derivative_is_pdf(x in -8.0f64..8.0) {
        let d = central_difference(|t| std_normal_cdf(t).unwrap(), x, 1e-5);
        prop_assert!((d - std_normal_pdf(x).unwrap()).abs() <= 1e-6);
    }

    #[test]
    fn cdf_symmetry(x in -30.0f64..30.0) {
        let s = std_normal_cdf(-x).unwrap() + std_normal_cdf(x).unwrap();
        prop_assert!((s - 1.0).abs() <= 1e-15);
        prop_assert_eq!(std_normal_sf(x).unwrap(), std_normal_cdf(-x).unwrap());
    }

    #[test]
    fn cdf_is_monotone(x in -10.0f64..10.0, dx in 1e-6f64..1.0) {
        prop_assert!(std_normal_cdf(x + dx).unwrap() >= std_normal_cdf(x).unwrap());
    }

    #[test]
    fn quantile_inverts_cdf(x in -6.0f64..6.0) {
        let p = std_normal_cdf(x).unwrap();
        prop_assert!((std_normal_quantile(p).unwrap() - x).abs() <= 1e-8);
    }

    #[test]
    fn quantile_is_accurate_and_increasing(p in 1e-12f64..0.999_999, dp in 1e-9f64..1e-3) {
        let q = std_normal_quantile(p).unwrap();
        prop_assert!((std_normal_cdf(q).unwrap() - p).abs() <= 1e-10);
        if p + dp < 1.0 {
            prop_assert!(std_normal_quantile(p + dp).unwrap() > q);
        }
    }

    #[test]
    fn integrate_is_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, k in 0.5f64..4.0, c in -2.0f64..2.0) {
        let cfg = QuadratureConfig::default();
        let f = |x: f64| (k * x).cos();
        let g = |x: f64| (-(x - c) * (x - c)).exp();
        let lhs = integrate(|x| alpha * f(x) + beta * g(x), -1.0, 2.0, &cfg).unwrap();
        let rhs = alpha * integrate(f, -1.0, 2.0, &cfg).unwrap() + beta * integrate(g, -1.0, 2.0, &cfg).unwrap();
        prop_assert!((lhs - rhs).abs() <= cfg.abs_tol * 10.0);
    }
}
