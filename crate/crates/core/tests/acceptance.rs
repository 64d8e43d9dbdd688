//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always shown; exits non-zero if any fails.

use std::process::Command;
use std::time::Instant;

use pml_core::envelope::{condition_report, envelope_bruteforce_lower_bound};
use pml_core::leakage::{interval_leakage, set_leakage_oracle, Interval};
use pml_core::mechanism::{Mechanism, MechanismConfig};
use pml_core::numerics::QuadratureConfig;
use pml_core::priors::{linspace, PriorSpec};
use pml_core::verify::{
    bathtub_triple, check_bathtub_optimality, check_brascamp_lieb_bound, check_concavity_identity,
    check_interval_monotonicity, check_tail_window_search, check_tail_worst_bound, CheckResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn build(prior: PriorSpec, sigma_n: f64) -> Mechanism {
    MechanismConfig {
        prior,
        sigma_n,
        quadrature: QuadratureConfig::default(),
    }
    .build()
    .expect("mechanism")
}

fn gaussian() -> Mechanism {
    build(PriorSpec::Gaussian { sigma_x: 1.0 }, 1.0)
}

fn slc(beta: f64, c: f64, p: f64) -> Mechanism {
    build(PriorSpec::StronglyLogConcave { beta, c, p }, 1.0)
}

fn mixture() -> Mechanism {
    build(
        PriorSpec::GaussianMixture {
            weights: vec![0.5, 0.5],
            means: vec![-2.0, 2.0],
            sigmas: vec![1.0, 1.0],
        },
        1.0,
    )
}

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn require(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn all_pass(results: &[CheckResult]) -> Outcome {
    match results.iter().find(|r| !(r.applicable && r.passed)) {
        None => {
            let worst = results.iter().map(|r| r.worst_violation / r.tolerance).fold(0.0, f64::max);
            Ok(format!("{} checks, worst violation/tolerance {worst:.3e}", results.len()))
        }
        Some(r) => Err(format!("{} failed: {} > {} ({})", r.name, r.worst_violation, r.tolerance, r.details)),
    }
}

/// Brute-force search over `max_cells` 1..=6: never above `ln(2/delta)` by
/// more than 1e-4, and within 1e-4 of it from two cells on.
fn envelope_search(m: &Mechanism, deltas: &[f64], budget_s: f64) -> Outcome {
    let start = Instant::now();
    let mut worst_gap: f64 = 0.0;
    for &d in deltas {
        let target = (2.0 / d).ln();
        for k in 1..=6 {
            let v = envelope_bruteforce_lower_bound(m, d, k).map_err(|e| e.to_string())?.value.value();
            if v > target + 1e-4 {
                return Err(format!("delta={d} max_cells={k}: {v} exceeds ln(2/delta) = {target}"));
            }
            if k >= 2 {
                if (v - target).abs() > 1e-4 {
                    return Err(format!("delta={d} max_cells={k}: {v} vs ln(2/delta) = {target}"));
                }
                worst_gap = worst_gap.max((v - target).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    require(
        secs <= budget_s,
        format!("max |gap| {worst_gap:.2e} nats, {secs:.1} s (budget {budget_s} s)"),
    )
}

fn c1() -> Outcome {
    envelope_search(&gaussian(), &[0.05, 0.1, 0.2, 0.4], 60.0)
}

fn c2() -> Outcome {
    let m = slc(1.0, 1.0, 4.0);
    let report = condition_report(&m).map_err(|e| e.to_string())?;
    if !report.passes() {
        return Err(format!("condition report does not pass: {report:?}"));
    }
    envelope_search(&m, &[0.05, 0.1], 120.0)
}

fn c3() -> Outcome {
    let m = gaussian();
    let results = [0.05, 0.2]
        .iter()
        .enumerate()
        .map(|(i, &d)| check_tail_worst_bound(&m, d, 500, 100 + i as u64))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    all_pass(&results)
}

fn c4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut compare = |m: &Mechanism, n: usize, tol: f64| -> Result<f64, String> {
        let mut worst: f64 = 0.0;
        for _ in 0..n {
            let a = rng.gen_range(-4.0..4.0);
            let iv = Interval::new(a, a + rng.gen_range(0.01..4.0)).map_err(|e| e.to_string())?;
            let closed = interval_leakage(m, &iv).map_err(|e| e.to_string())?.value();
            let oracle = set_leakage_oracle(m, &[iv]).map_err(|e| e.to_string())?.value();
            let gap = (closed - oracle).abs();
            if gap > tol {
                return Err(format!("{iv}: closed form {closed} vs oracle {oracle}"));
            }
            worst = worst.max(gap);
        }
        Ok(worst)
    };
    let g = compare(&gaussian(), 200, 1e-5)?;
    let s = compare(&slc(1.0, 1.0, 4.0), 50, 1e-4)?;
    let x = compare(&mixture(), 50, 1e-4)?;
    Ok(format!("worst gap Gaussian {g:.2e}, quadrature priors {:.2e}", s.max(x)))
}

fn c5() -> Outcome {
    let mut results = Vec::new();
    for m in [gaussian(), slc(1.0, 1.0, 4.0)] {
        let start = m.unimodal_tail_threshold().ok_or("no tail threshold")?.max(0.0);
        let sy = m.marginal_std();
        for k in 0..5 {
            let a = start + 0.1 * sy + 0.5 * sy * k as f64;
            results.push(check_interval_monotonicity(&m, a, a + 8.0 * sy, 500).map_err(|e| e.to_string())?);
        }
    }
    all_pass(&results)
}

fn c6() -> Outcome {
    let results = [gaussian(), slc(1.0, 1.0, 4.0), mixture()]
        .iter()
        .map(|m| check_concavity_identity(m, 100, 6))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    all_pass(&results)
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

/// Posterior mean from Bayes' rule, integrating the prior density against
/// the Gaussian kernel.
fn bayes_mean(m: &Mechanism, y: f64) -> f64 {
    let p = m.prior();
    let (lo, hi) = p.window();
    let s = m.sigma_n();
    let w = |x: f64| p.density_at(x).unwrap() * (-(y - x) * (y - x) / (2.0 * s * s)).exp();
    simpson(|x| x * w(x), lo, hi, 40_000) / simpson(w, lo, hi, 40_000)
}

fn c7() -> Outcome {
    let mut worst_closed: f64 = 0.0;
    let mut worst_bayes: f64 = 0.0;
    for m in [gaussian(), slc(1.0, 1.0, 4.0), mixture()] {
        let sy = m.marginal_std();
        for y in linspace(-5.0 * sy, 5.0 * sy, 41) {
            let mean = m.posterior_mean(y).map_err(|e| e.to_string())?;
            let gap = (mean - bayes_mean(&m, y)).abs();
            if gap > 1e-6 {
                return Err(format!("{:?}, y={y}: Bayes-quadrature gap {gap:e}", m.prior().spec()));
            }
            worst_bayes = worst_bayes.max(gap);
            if let PriorSpec::Gaussian { sigma_x } = m.prior().spec() {
                let closed = sigma_x * sigma_x * y / (sy * sy);
                let gap = (mean - closed).abs();
                if gap > 1e-8 {
                    return Err(format!("Gaussian y={y}: closed-form gap {gap:e}"));
                }
                worst_closed = worst_closed.max(gap);
            }
        }
    }
    Ok(format!("worst gap closed form {worst_closed:.2e}, Bayes quadrature {worst_bayes:.2e}"))
}

fn c8() -> Outcome {
    let priors = [slc(1.0, 1.0, 4.0), slc(0.8, 0.5, 3.0), slc(3f64.sqrt(), 2.0, 1.5)];
    let results = priors
        .iter()
        .map(check_brascamp_lieb_bound)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    all_pass(&results)?;
    let m = gaussian();
    let (lo, hi) = m.scan_window();
    let mut worst: f64 = 0.0;
    for y in linspace(lo, hi, 2001) {
        worst = worst.max((m.posterior_variance(y).map_err(|e| e.to_string())? - 0.5).abs());
    }
    require(
        worst <= 1e-8,
        format!("three strongly log-concave priors within bound, Gaussian equality gap {worst:.2e}"),
    )
}

fn c9() -> Outcome {
    let m = gaussian();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (lo, hi) = m.scan_window();
    let sy = m.marginal_std();
    let mut results = Vec::new();
    for i in 0..10 {
        let (x, range, delta) = bathtub_triple(&m, &mut rng, lo, hi, sy).map_err(|e| e.to_string())?;
        results.push(check_bathtub_optimality(&m, x, &range, delta, 200, 90 + i).map_err(|e| e.to_string())?);
    }
    results.push(check_tail_window_search(&m, 6, 9).map_err(|e| e.to_string())?);
    all_pass(&results)
}

fn c10() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("canonical.json");
    std::fs::write(&cfg, r#"{"prior": {"type": "gaussian", "sigma_x": 1}, "sigma_n": 1}"#).map_err(|e| e.to_string())?;
    let cfg = cfg.to_str().unwrap();
    let runs: [&[&str]; 2] = [
        &["verify", "--config", cfg, "--suite", "all", "--seed", "7"],
        &["envelope", "--config", cfg, "--deltas", "0.05,0.1,0.2,0.4"],
    ];
    let mut sizes = Vec::new();
    for args in runs {
        let once = || {
            Command::new(env!("CARGO_BIN_EXE_pml"))
                .args(args)
                .output()
                .map_err(|e| e.to_string())
        };
        let (a, b) = (once()?, once()?);
        if a.status.code() != Some(0) || b.status.code() != Some(0) {
            return Err(format!("{}: exit {:?} / {:?}", args[0], a.status.code(), b.status.code()));
        }
        if a.stdout != b.stdout {
            return Err(format!("{}: outputs differ", args[0]));
        }
        sizes.push(format!("{} {} bytes", args[0], a.stdout.len()));
    }
    Ok(format!("byte-identical reruns: {}", sizes.join(", ")))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("envelope search, Gaussian prior", c1),
        ("envelope search, strongly log-concave prior", c2),
        ("tail events are worst", c3),
        ("closed-form interval leakage vs oracle", c4),
        ("interval leakage monotone in length", c5),
        ("concavity identity", c6),
        ("Tweedie posterior mean", c7),
        ("Brascamp-Lieb variance bound", c8),
        ("bathtub optimality and tail windows", c9),
        ("CLI determinism", c10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {:>2} {name}: {msg} [{secs:.1} s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {msg} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
