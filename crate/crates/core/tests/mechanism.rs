use std::sync::OnceLock;

use pml_core::mechanism::{Mechanism, MechanismConfig};
use pml_core::numerics::{std_normal_cdf, std_normal_quantile, QuadratureConfig};
use pml_core::priors::{linspace, PriorSpec};
use pml_core::PmlError;
use proptest::prelude::*;

fn build(prior: PriorSpec, sigma_n: f64) -> Mechanism {
    MechanismConfig {
        prior,
        sigma_n,
        quadrature: QuadratureConfig::default(),
    }
    .build()
    .unwrap()
}

fn bimodal() -> PriorSpec {
    PriorSpec::GaussianMixture {
        weights: vec![0.5, 0.5],
        means: vec![-2.0, 2.0],
        sigmas: vec![1.0, 1.0],
    }
}

fn canonical() -> &'static Mechanism {
    static M: OnceLock<Mechanism> = OnceLock::new();
    M.get_or_init(|| build(PriorSpec::Gaussian { sigma_x: 1.0 }, 1.0))
}

fn slc() -> &'static Mechanism {
    static M: OnceLock<Mechanism> = OnceLock::new();
    M.get_or_init(|| build(PriorSpec::StronglyLogConcave { beta: 1.0, c: 1.0, p: 4.0 }, 1.0))
}

fn mixture() -> &'static Mechanism {
    static M: OnceLock<Mechanism> = OnceLock::new();
    M.get_or_init(|| build(bimodal(), 1.0))
}

fn normal_density(y: f64, mean: f64, var: f64) -> f64 {
    (-(y - mean) * (y - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Posterior mean and variance from Bayes' rule by direct quadrature of the
/// prior density against the noise kernel.
fn bayes_moments(m: &Mechanism, y: f64) -> (f64, f64) {
    let p = m.prior();
    let (lo, hi) = p.window();
    let s = m.sigma_n();
    let w = |x: f64| p.density_at(x).unwrap() * normal_density(y, x, s * s);
    let z = simpson(w, lo, hi, 40_000);
    let m1 = simpson(|x| x * w(x), lo, hi, 40_000) / z;
    let m2 = simpson(|x| (x - m1) * (x - m1) * w(x), lo, hi, 40_000) / z;
    (m1, m2)
}

#[test]
fn gaussian_marginal_closed_forms() {
    let m = canonical();
    assert!((m.marginal_density(0.0).unwrap() - 1.0 / (4.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    assert!((m.marginal_cdf(0.0) - 0.5).abs() < 1e-15);
    let q = m.marginal_quantile(0.95).unwrap();
    assert!((q - 2f64.sqrt() * std_normal_quantile(0.95).unwrap()).abs() < 1e-9);
    assert!((q - 2.3262).abs() < 1e-4);
    for y in linspace(-8.0, 8.0, 161) {
        assert!((m.marginal_density(y).unwrap() - normal_density(y, 0.0, 2.0)).abs() < 1e-9);
        let f = std_normal_cdf(y / 2f64.sqrt()).unwrap();
        assert!((m.marginal_cdf(y) - f).abs() < 1e-12);
        let sf = pml_core::numerics::std_normal_sf(y / 2f64.sqrt()).unwrap();
        assert!((m.marginal_sf(y) / sf - 1.0).abs() < 1e-9, "y={y}");
    }
}

#[test]
fn marginal_examples_for_other_priors() {
    let want = 0.5 * normal_density(0.0, -2.0, 2.0) + 0.5 * normal_density(0.0, 2.0, 2.0);
    let got = mixture().marginal_density(0.0).unwrap();
    assert!((got - want).abs() < 1e-12);
    assert!((got - 0.103_776_8).abs() < 1e-7);
}

#[test]
fn marginal_integrates_to_one() {
    let grid_prior = {
        let xs = linspace(-4.0, 4.0, 81);
        let log_density = xs.iter().map(|x| -0.5 * x * x).collect();
        build(PriorSpec::Grid { xs, log_density }, 0.5)
    };
    for m in [canonical(), slc(), mixture(), &grid_prior] {
        let (lo, hi) = m.prior().window();
        let w = 12.0 * m.sigma_n();
        let total = simpson(|y| m.marginal_density(y).unwrap(), lo - w, hi + w, 20_000);
        assert!((total - 1.0).abs() < 1e-7, "{:?}: {total}", m.prior().spec());
    }
}

#[test]
fn quantile_round_trip_and_errors() {
    for m in [canonical(), slc(), mixture()] {
        for k in 1..=99 {
            let p = k as f64 / 100.0;
            let y = m.marginal_quantile(p).unwrap();
            assert!((m.marginal_cdf(y) - p).abs() <= 1e-9, "p={p}");
            let y2 = m.marginal_upper_quantile(p).unwrap();
            assert!((m.marginal_sf(y2) - p).abs() <= 1e-9, "q={p}");
        }
        for p in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(matches!(m.marginal_quantile(p), Err(PmlError::Domain { .. })));
        }
    }
}

#[test]
fn gaussian_posterior_closed_forms() {
    for (sx, sn) in [(1.0, 1.0), (2.0, 0.5), (3f64.sqrt(), 1.0), (0.3, 2.0)] {
        let m = build(PriorSpec::Gaussian { sigma_x: sx }, sn);
        let (vx, vn) = (sx * sx, sn * sn);
        let sy = (vx + vn).sqrt();
        for y in linspace(-5.0 * sy, 5.0 * sy, 41) {
            let mean = m.posterior_mean(y).unwrap();
            assert!((mean - y * vx / (vx + vn)).abs() < 1e-8, "sx={sx} y={y}");
            let var = m.posterior_variance(y).unwrap();
            assert!((var - vx * vn / (vx + vn)).abs() < 1e-8, "sx={sx} y={y}");
        }
    }
    let boundary = build(PriorSpec::Gaussian { sigma_x: 3f64.sqrt() }, 1.0);
    assert!((boundary.posterior_variance(0.7).unwrap() - 0.75).abs() < 1e-12);
    assert!(canonical().posterior_mean(0.0).unwrap().abs() < 1e-15);
}

#[test]
fn tweedie_matches_bayes_quadrature() {
    for m in [slc(), mixture()] {
        let sy = m.marginal_std();
        for y in linspace(-5.0 * sy, 5.0 * sy, 21) {
            let (mean, var) = bayes_moments(m, y);
            assert!((m.posterior_mean(y).unwrap() - mean).abs() < 1e-6, "y={y}");
            assert!((m.posterior_variance(y).unwrap() - var).abs() < 1e-6, "y={y}");
        }
    }
    assert!(slc().posterior_mean(0.0).unwrap().abs() < 1e-12);
}

#[test]
fn info_density_closed_form() {
    let m = canonical();
    assert!((m.info_density(0.0, 0.0).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-12);
    let (vn, vy): (f64, f64) = (1.0, 2.0);
    for x in linspace(-4.0, 4.0, 50) {
        for y in linspace(-6.0, 6.0, 50) {
            let want = 0.5 * (vy / vn).ln() - (y - x) * (y - x) / (2.0 * vn) + y * y / (2.0 * vy);
            assert!((m.info_density(x, y).unwrap() - want).abs() < 1e-8);
        }
    }
    assert!(m.info_density(f64::NAN, 0.0).is_err());
}

#[test]
fn conditional_density_integrates_to_one() {
    let m = mixture();
    for x in [-2.5, 0.0, 1.3] {
        let total = simpson(
            |y| m.info_density(x, y).unwrap().exp() * m.marginal_density(y).unwrap(),
            x - 12.0,
            x + 12.0,
            4000,
        );
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn tail_threshold_examples() {
    let g = canonical().unimodal_tail_threshold().unwrap();
    assert!(g > 0.0 && g < 0.05, "{g}");

    let m = mixture();
    let big_m = m.unimodal_tail_threshold().unwrap();
    assert!(big_m > 1.5 && big_m < 2.5, "{big_m}");
    let (_, hi) = m.y_window();
    for y in linspace(big_m, hi, 2000) {
        assert!(m.marginal_density_derivative(y).unwrap() < 0.0);
        assert!(m.marginal_density_derivative(-y).unwrap() > 0.0);
    }
    // The marginal has its modes inside (-M, M).
    assert!(m.marginal_density_derivative(big_m - 0.5).unwrap() > 0.0);

    let xs = linspace(-6.0, 6.0, 241);
    let log_density = xs.iter().map(|x| -0.1 * x * x + 2.0 * (6.0 * x).sin()).collect();
    let wiggly = build(PriorSpec::Grid { xs, log_density }, 0.05);
    assert_eq!(wiggly.unimodal_tail_threshold(), None, "{:?}", wiggly.y_window());
}

#[test]
fn config_validation() {
    let bad = MechanismConfig {
        prior: PriorSpec::Gaussian { sigma_x: 1.0 },
        sigma_n: 0.0,
        quadrature: QuadratureConfig::default(),
    };
    assert!(matches!(bad.validate(), Err(PmlError::Invalid { ref field, .. }) if field == "/sigma_n"));
    let bad = MechanismConfig {
        prior: PriorSpec::Gaussian { sigma_x: -1.0 },
        sigma_n: 1.0,
        quadrature: QuadratureConfig::default(),
    };
    assert!(matches!(bad.build(), Err(PmlError::Invalid { ref field, .. }) if field == "/prior/sigma_x"));
    let bad = MechanismConfig {
        prior: PriorSpec::Gaussian { sigma_x: 1.0 },
        sigma_n: 1.0,
        quadrature: QuadratureConfig {
            panel_count: 3,
            ..QuadratureConfig::default()
        },
    };
    assert!(matches!(bad.validate(), Err(PmlError::Invalid { ref field, .. }) if field == "/quadrature/panel_count"));
    let cfg: MechanismConfig =
        serde_json::from_str(r#"{"prior": {"type": "gaussian", "sigma_x": 1}, "sigma_n": 1}"#).unwrap();
    assert_eq!(cfg.quadrature, QuadratureConfig::default());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn concavity_identity_holds(x in -3.0f64..3.0, y in -6.0f64..6.0, which in 0usize..3) {
        let m = [canonical(), slc(), mixture()][which];
        let h = 1e-3;
        let fd = (m.info_density(x, y + h).unwrap() - 2.0 * m.info_density(x, y).unwrap()
            + m.info_density(x, y - h).unwrap()) / (h * h);
        let target = -m.posterior_variance(y).unwrap() / m.sigma_n().powi(4);
        prop_assert!(fd < 0.0);
        prop_assert!((fd - target).abs() <= 1e-4 * (1.0 + target.abs()));
    }

    #[test]
    fn cdf_nondecreasing_and_in_range(y in -15.0f64..15.0, dy in 1e-6f64..2.0, which in 0usize..3) {
        let m = [canonical(), slc(), mixture()][which];
        let (a, b) = (m.marginal_cdf(y), m.marginal_cdf(y + dy));
        prop_assert!(a <= b);
        prop_assert!(a > 0.0 && b < 1.0 || y > 8.0);
        prop_assert!((m.marginal_cdf(y) + m.marginal_sf(y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_variance_is_nonnegative(y in -20.0f64..20.0, which in 0usize..3) {
        let m = [canonical(), slc(), mixture()][which];
        prop_assert!(m.posterior_variance(y).unwrap() >= 0.0);
    }
}
