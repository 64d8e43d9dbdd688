//! Numerical checks of the structural facts the envelope rests on: the
//! concavity identity for the information density, monotonicity of interval
//! leakage in the tails, the tail bound, level-set optimality and the
//! posterior variance bound for strongly log-concave priors.
//!
//! Every check owns a seeded generator, so reports are reproducible.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::envelope::condition_report;
use crate::error::{PmlError, Result};
use crate::leakage::{interval_leakage, mass_ahead, mass_behind, set_leakage_oracle, worst_interval_search, Interval};
use crate::mechanism::Mechanism;
use crate::numerics::{find_root_illinois, golden_section_max, norm_cdf, norm_pdf, second_difference};
use crate::priors::{linspace, PriorSpec};

/// Where the worst violation was observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Location {
    Point(f64),
    Pair(f64, f64),
}

/// Outcome of one check. `passed` is `worst_violation <= tolerance`.
/// Checks whose hypotheses do not hold for the mechanism are still run but
/// marked `applicable: false`; they do not count towards the suite verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub applicable: bool,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub location: Option<Location>,
    pub details: String,
}

impl CheckResult {
    fn new(name: &str, worst: f64, tolerance: f64, location: Option<Location>, details: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed: worst <= tolerance,
            applicable: true,
            worst_violation: worst,
            tolerance,
            location,
            details,
        }
    }

    fn not_applicable(name: &str, details: impl Into<String>) -> Self {
        CheckResult {
            name: name.to_string(),
            passed: true,
            applicable: false,
            worst_violation: 0.0,
            tolerance: 0.0,
            location: None,
            details: details.into(),
        }
    }
}

/// Running maximum of a violation measure together with its location.
struct Worst {
    value: f64,
    at: Option<Location>,
}

impl Worst {
    fn new() -> Self {
        Worst { value: 0.0, at: None }
    }

    fn update(&mut self, v: f64, at: Location) {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v > self.value || self.at.is_none() {
            self.value = self.value.max(v);
            self.at = Some(at);
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Second differences of `y -> i(x; y)` against `-Var[X | Y = y] / sigma_n^4`
/// at `n_samples` random points. Relative tolerance 1e-4; every second
/// difference must also be negative.
pub fn check_concavity_identity(m: &Mechanism, n_samples: usize, seed: u64) -> Result<CheckResult> {
    const NAME: &str = "concavity_identity";
    const TOL: f64 = 1e-4;
    if n_samples == 0 {
        return Err(PmlError::domain(NAME, "n_samples must be at least 1"));
    }
    let mut rng = rng_for(seed, 1);
    let (ylo, yhi) = m.scan_window();
    let (plo, phi) = m.prior().window();
    let (xlo, xhi) = (plo.max(ylo), phi.min(yhi));
    let s4 = m.sigma_n().powi(4);
    let h = 1e-3 * m.sigma_n();
    let mut worst = Worst::new();
    let mut positive = 0usize;
    for _ in 0..n_samples {
        let x = rng.gen_range(xlo..xhi);
        let y = rng.gen_range(ylo + h..yhi - h);
        let fd = second_difference(|t| m.info_density(x, t).unwrap_or(f64::NAN), y, h);
        let err = match m.posterior_variance(y) {
            Ok(v) => {
                let target = -v / s4;
                let rel = (fd - target).abs() / (1.0 + target.abs());
                if fd < 0.0 {
                    rel
                } else {
                    positive += 1;
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        };
        worst.update(err, Location::Pair(x, y));
    }
    Ok(CheckResult::new(
        NAME,
        worst.value,
        TOL,
        worst.at,
        format!("{n_samples} points, step {h:e}, {positive} non-negative second differences"),
    ))
}

/// Rounding resolution of a leakage value: successive values closer than
/// this are indistinguishable ties rather than decreases.
fn ulps(l: f64) -> f64 {
    4.0 * f64::EPSILON * l.abs().max(1.0)
}

fn monotone_precondition(m: &Mechanism, a: f64, op: &'static str) -> Result<()> {
    let is_gaussian = matches!(m.prior().spec(), PriorSpec::Gaussian { .. });
    if is_gaussian {
        if !(a > 0.0) {
            return Err(PmlError::domain(op, format!("a = {a} must be positive")));
        }
        return Ok(());
    }
    match m.unimodal_tail_threshold() {
        Some(big_m) if a > big_m => Ok(()),
        Some(big_m) => Err(PmlError::domain(op, format!("a = {a} must exceed the tail threshold {big_m}"))),
        None => Err(PmlError::domain(op, "the marginal has no certified monotone tails")),
    }
}

/// Along `n_grid` points `b` in `(a, b_max]`: the derivative numerator
/// `u(b) = r(b) - s(b)` of `b -> ln num(b - a) - ln P_Y(a, b)` stays above
/// `-1e-8`, the leakage of `(a, b)` strictly increases and, when
/// `b_max >= a + 8 sigma_Y`, ends within 0.01 nats of `ln (1 / P_Y(a, inf))`.
///
/// The reported violation is normalized by each part's tolerance, so the
/// check passes iff it is at most 1.
pub fn check_interval_monotonicity(m: &Mechanism, a: f64, b_max: f64, n_grid: usize) -> Result<CheckResult> {
    const NAME: &str = "interval_monotonicity";
    const U_TOL: f64 = 1e-8;
    const LIMIT_TOL: f64 = 0.01;
    monotone_precondition(m, a, NAME)?;
    if !(b_max > a) || !b_max.is_finite() || n_grid < 2 {
        return Err(PmlError::domain(NAME, format!("need a < b_max and n_grid >= 2, got ({a}, {b_max}, {n_grid})")));
    }
    let sigma = m.sigma_n();
    let mut worst = Worst::new();
    let mut u_min = f64::INFINITY;
    let mut min_step = f64::INFINITY;
    let mut prev: Option<f64> = None;
    let mut ties = 0usize;
    for k in 1..=n_grid {
        let b = a + (b_max - a) * k as f64 / n_grid as f64;
        let z = (b - a) / (2.0 * sigma);
        let r = norm_pdf(z) / (sigma * (2.0 * norm_cdf(z) - 1.0));
        let s = m.marginal_density(b)? / m.prob_between(a, b);
        let u = r - s;
        u_min = u_min.min(u);
        worst.update(-u / U_TOL, Location::Point(b));
        let l = interval_leakage(m, &Interval::new(a, b)?)?.value();
        if let Some(p) = prev {
            let step = l - p;
            min_step = min_step.min(step);
            if step <= 0.0 {
                if step < -ulps(l) {
                    worst.update(2.0 + -step / 1e-12, Location::Point(b));
                } else {
                    ties += 1;
                }
            }
        }
        prev = Some(l);
    }
    let mut details = format!("min u = {u_min:e}, min leakage step = {min_step:e}, {ties} ties at rounding level");
    if b_max >= a + 8.0 * m.marginal_std() {
        let limit = -m.marginal_sf(a).ln();
        let gap = (prev.unwrap_or(f64::NAN) - limit).abs();
        worst.update(gap / LIMIT_TOL, Location::Point(b_max));
        details.push_str(&format!(", terminal gap = {gap:e}"));
    }
    Ok(CheckResult::new(NAME, worst.value, 1.0, worst.at, details))
}

/// For `xi` in `(0, 0.1 sigma_n]`, the leakage of `(a, a + xi)` increases,
/// and the derivative numerator behaves like `-phi(0) f_Y'(a) xi^2 / (2 sigma_n)`
/// (relative tolerance 1e-3 after Richardson extrapolation). Requires
/// `f_Y'(a) < 0`.
pub fn check_small_interval_growth(m: &Mechanism, a: f64, n_grid: usize) -> Result<CheckResult> {
    const NAME: &str = "small_interval_growth";
    const COEF_TOL: f64 = 1e-3;
    let slope = m.marginal_density_derivative(a)?;
    if !(slope < 0.0) {
        return Err(PmlError::domain(NAME, format!("f_Y'({a}) = {slope} is not negative")));
    }
    if n_grid < 2 {
        return Err(PmlError::domain(NAME, "n_grid must be at least 2"));
    }
    let sigma = m.sigma_n();
    let numerator = |xi: f64| -> Result<f64> {
        let z = xi / (2.0 * sigma);
        Ok(norm_pdf(z) / sigma * m.prob_between(a, a + xi) - m.marginal_density(a + xi)? * (2.0 * norm_cdf(z) - 1.0))
    };
    let mut worst = Worst::new();
    let mut prev: Option<f64> = None;
    for k in 1..=n_grid {
        let xi = 0.1 * sigma * k as f64 / n_grid as f64;
        let l = interval_leakage(m, &Interval::new(a, a + xi)?)?.value();
        if let Some(p) = prev {
            if !(l > p) {
                worst.update(2.0 + (p - l) / 1e-12, Location::Point(xi));
            }
        }
        if !(numerator(xi)? > 0.0) {
            worst.update(2.0, Location::Point(xi));
        }
        prev = Some(l);
    }
    let coef = -norm_pdf(0.0) * slope / (2.0 * sigma);
    let xi = 1e-2 * sigma;
    let ratio = |t: f64| numerator(t).map(|n| n / (t * t));
    let extrapolated = 2.0 * ratio(0.5 * xi)? - ratio(xi)?;
    let rel = (extrapolated - coef).abs() / coef;
    worst.update(rel / COEF_TOL, Location::Point(a));
    Ok(CheckResult::new(
        NAME,
        worst.value,
        1.0,
        worst.at,
        format!("leading coefficient {coef:e}, extrapolated {extrapolated:e}"),
    ))
}

/// Random union of at most four disjoint intervals with endpoints drawn in
/// `[lo, hi]` and `P_Y` equal to `target`: intervals past the target are
/// dropped and the last one is shrunk or grown. `None` when the draw cannot
/// be completed inside `[lo, hi]` (or, with `allow_tail`, below `hi`).
fn random_union<R: Rng>(m: &Mechanism, rng: &mut R, lo: f64, hi: f64, target: f64, allow_tail: bool) -> Option<Vec<Interval>> {
    let k = rng.gen_range(1..=4usize);
    let mut pts: Vec<f64> = (0..2 * k).map(|_| rng.gen_range(lo..hi)).collect();
    pts.sort_by(f64::total_cmp);
    if allow_tail && rng.gen_bool(0.125) {
        pts[0] = f64::NEG_INFINITY;
    }
    let mut out = Vec::with_capacity(k);
    let mut acc = 0.0;
    for pair in pts.chunks(2) {
        let (u, v) = (pair[0], pair[1]);
        let p = m.prob_between(u, v);
        let need = target - acc;
        if p >= need || out.len() + 1 == k {
            let v = mass_ahead(m, u, need).ok()?;
            if !(v <= hi) {
                return None;
            }
            out.push(Interval { lo: u, hi: v });
            break;
        }
        out.push(Interval { lo: u, hi: v });
        acc += p;
    }
    let mass: f64 = out.iter().map(|iv| m.prob_between(iv.lo, iv.hi)).sum();
    ((mass - target).abs() <= 1e-6 * target.max(1e-3)).then_some(out)
}

/// Tails of mass `delta` leak `ln (1 / delta)` to within 1e-5, and random
/// unions of at most four intervals with `P_Y >= delta` leak no more than
/// `ln (1 / delta) + 1e-5` (leakage computed by the brute-force oracle).
pub fn check_tail_worst_bound(m: &Mechanism, delta: f64, n_random_sets: usize, seed: u64) -> Result<CheckResult> {
    const NAME: &str = "tail_worst_bound";
    const TOL: f64 = 1e-5;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PmlError::domain(NAME, format!("delta = {delta} must lie in (0, 1)")));
    }
    let bound = -delta.ln();
    let mut worst = Worst::new();
    let tl = m.marginal_quantile(delta)?;
    let tr = m.marginal_upper_quantile(delta)?;
    for iv in [Interval::new(f64::NEG_INFINITY, tl)?, Interval::new(tr, f64::INFINITY)?] {
        let l = interval_leakage(m, &iv)?.value();
        worst.update((l - bound).abs(), Location::Pair(iv.lo, iv.hi));
    }
    let mut rng = rng_for(seed, 2);
    let (lo, hi) = m.scan_window();
    let mut checked = 0usize;
    let mut max_leak = f64::NEG_INFINITY;
    let mut attempts = 0usize;
    while checked < n_random_sets && attempts < 100 * n_random_sets.max(1) {
        attempts += 1;
        let target = if checked.is_multiple_of(2) {
            delta
        } else {
            (delta + rng.gen_range(0.0..1.0) * (1.0 - delta) * 0.5).min(1.0 - 1e-9)
        };
        let Some(union) = random_union(m, &mut rng, lo, hi, target, true) else {
            continue;
        };
        let l = set_leakage_oracle(m, &union)?.value();
        max_leak = max_leak.max(l);
        let first = union[0];
        let last = union[union.len() - 1];
        worst.update(l - bound, Location::Pair(first.lo, last.hi));
        checked += 1;
    }
    if checked < n_random_sets {
        return Err(PmlError::numerical(
            NAME,
            format!("only {checked} of {n_random_sets} random sets could be drawn"),
        ));
    }
    Ok(CheckResult::new(
        NAME,
        worst.value,
        TOL,
        worst.at,
        format!("bound {bound:.9}, {checked} random unions, largest leakage {max_leak:.9}"),
    ))
}

/// The interval `{y in range : i(x; y) > tau}` with `P_Y` equal to `delta`.
/// Concavity of `i(x; .)` makes every super-level set an interval.
pub fn super_level_interval(m: &Mechanism, x: f64, range: &Interval, delta: f64) -> Result<Interval> {
    const OP: &str = "super_level_interval";
    range.check(OP)?;
    let (wlo, whi) = m.y_window();
    let (lo, hi) = (range.lo.max(wlo), range.hi.min(whi));
    let total = m.prob_between(lo, hi);
    if !(delta > 0.0 && delta < total) {
        return Err(PmlError::domain(OP, format!("delta = {delta} must lie in (0, P(range) = {total})")));
    }
    let info = |y: f64| m.info_density(x, y).unwrap_or(f64::NEG_INFINITY);
    let scale = 1.0 + lo.abs().max(hi.abs());
    let (peak, top) = golden_section_max(info, lo, hi, 1e-12 * scale);
    let (ilo, ihi) = (info(lo), info(hi));
    let ends = |tau: f64| -> Result<(f64, f64)> {
        let u = if ilo >= tau || peak <= lo {
            lo
        } else {
            find_root_illinois(|y| info(y) - tau, lo, peak, 1e-14 * scale, 0.0)?
        };
        let v = if ihi >= tau || peak >= hi {
            hi
        } else {
            find_root_illinois(|y| tau - info(y), peak, hi, 1e-14 * scale, 0.0)?
        };
        Ok((u, v))
    };
    let mut failure = None;
    let mut mass_excess = |tau: f64| match ends(tau) {
        Ok((u, v)) => delta - m.prob_between(u, v),
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let tau = find_root_illinois(&mut mass_excess, ilo.min(ihi), top, 1e-15 * (1.0 + top.abs()), 1e-14)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let (u, v) = ends(tau)?;
    Interval::new(u, v)
}

/// The super-level interval of `i(x; .)` within `range` at mass `delta`
/// captures at least as much conditional probability `P(. | X = x)` as
/// `n_random` random unions of equal `P_Y` mass (tolerance 1e-6).
pub fn check_bathtub_optimality(
    m: &Mechanism,
    x: f64,
    range: &Interval,
    delta: f64,
    n_random: usize,
    seed: u64,
) -> Result<CheckResult> {
    const NAME: &str = "bathtub_optimality";
    const TOL: f64 = 1e-6;
    let (wlo, whi) = m.y_window();
    let (lo, hi) = (range.lo.max(wlo), range.hi.min(whi));
    let total = m.prob_between(lo, hi);
    if !(delta > 0.0 && delta < total) {
        return Err(PmlError::domain(NAME, format!("delta = {delta} must lie in (0, P(range) = {total})")));
    }
    let best = super_level_interval(m, x, range, delta)?;
    let p_best = m.conditional_prob(x, best.lo, best.hi);
    let mut rng = rng_for(seed, 3);
    let mut worst = Worst::new();
    let mut checked = 0usize;
    let mut attempts = 0usize;
    while checked < n_random && attempts < 200 * n_random.max(1) {
        attempts += 1;
        let Some(union) = random_union(m, &mut rng, lo, hi, delta, false) else {
            continue;
        };
        let p: f64 = union.iter().map(|iv| m.conditional_prob(x, iv.lo, iv.hi)).sum();
        worst.update(p - p_best, Location::Pair(union[0].lo, union[union.len() - 1].hi));
        checked += 1;
    }
    if checked < n_random {
        return Err(PmlError::numerical(
            NAME,
            format!("only {checked} of {n_random} random sets could be drawn"),
        ));
    }
    Ok(CheckResult::new(
        NAME,
        worst.value,
        TOL,
        worst.at,
        format!("super-level interval {best} with conditional probability {p_best:.9}"),
    ))
}

/// In windows beyond the tail threshold, the longest interval of a given
/// mass found by `worst_interval_search` is the sub-level set of `f_Y`,
/// i.e. the part of the window adjacent to the outer tail. Endpoint gaps are
/// relative to `1 + |endpoint|`, tolerance 1e-6.
pub fn check_tail_window_search(m: &Mechanism, n_windows: usize, seed: u64) -> Result<CheckResult> {
    const NAME: &str = "tail_window_search";
    const TOL: f64 = 1e-6;
    let Some(big_m) = m.unimodal_tail_threshold() else {
        return Ok(CheckResult::not_applicable(NAME, "no certified monotone tails"));
    };
    let sy = m.marginal_std();
    let (wlo, whi) = m.y_window();
    // Windows stay inside the working window on both sides.
    let edge = whi.min(-wlo);
    if !(edge - big_m > 0.1 * sy) {
        return Ok(CheckResult::not_applicable(NAME, "no room beyond M inside the working window"));
    }
    let room = edge - big_m;
    let mut rng = rng_for(seed, 4);
    let mut worst = Worst::new();
    for k in 0..n_windows {
        let a = big_m + rng.gen_range(0.05..1.0) * sy.min(0.5 * room);
        let b = (a + rng.gen_range(1.0..3.0) * sy).min(edge);
        let frac = rng.gen_range(0.2..0.8);
        let right = k % 2 == 0;
        let window = if right { Interval::new(a, b)? } else { Interval::new(-b, -a)? };
        let d = frac * m.prob_between(window.lo, window.hi);
        let expected = if right {
            Interval::new(mass_behind(m, window.hi, d)?, window.hi)?
        } else {
            Interval::new(window.lo, mass_ahead(m, window.lo, d)?)?
        };
        let (found, _) = worst_interval_search(m, &window, d)?;
        let gap = ((found.lo - expected.lo).abs() / (1.0 + expected.lo.abs()))
            .max((found.hi - expected.hi).abs() / (1.0 + expected.hi.abs()));
        worst.update(gap, Location::Pair(found.lo, found.hi));
    }
    Ok(CheckResult::new(
        NAME,
        worst.value,
        TOL,
        worst.at,
        format!("{n_windows} windows beyond M = {big_m:.6}"),
    ))
}

/// `Var[X | Y = y] <= (1/sigma_n^2 + 1/beta^2)^-1 + 1e-6` on a grid over
/// the scan window, for Gaussian (`beta = sigma_x`) and strongly
/// log-concave priors.
pub fn check_brascamp_lieb_bound(m: &Mechanism) -> Result<CheckResult> {
    const NAME: &str = "brascamp_lieb_bound";
    const TOL: f64 = 1e-6;
    let beta = match m.prior().spec() {
        PriorSpec::Gaussian { sigma_x } => *sigma_x,
        PriorSpec::StronglyLogConcave { beta, .. } => *beta,
        _ => return Ok(CheckResult::not_applicable(NAME, "prior is not strongly log-concave")),
    };
    let sn2 = m.sigma_n() * m.sigma_n();
    let bound = 1.0 / (1.0 / sn2 + 1.0 / (beta * beta));
    let (lo, hi) = m.scan_window();
    let mut worst = Worst::new();
    let mut sup = f64::NEG_INFINITY;
    for y in linspace(lo, hi, 2001) {
        let v = m.posterior_variance(y)?;
        sup = sup.max(v);
        worst.update((v - bound).max(0.0), Location::Point(y));
    }
    Ok(CheckResult::new(
        NAME,
        worst.value,
        TOL,
        worst.at,
        format!("bound {bound:.9}, largest posterior variance {sup:.9}"),
    ))
}

/// Named groups of checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Concavity,
    Monotonicity,
    Tails,
    Bathtub,
    BrascampLieb,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["all", "concavity", "monotonicity", "tails", "bathtub", "brascamp-lieb"];

    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "all" => Suite::All,
            "concavity" => Suite::Concavity,
            "monotonicity" => Suite::Monotonicity,
            "tails" => Suite::Tails,
            "bathtub" => Suite::Bathtub,
            "brascamp-lieb" => Suite::BrascampLieb,
            _ => return Err(format!("unknown suite {s:?}; expected one of {}", Suite::NAMES.join(", "))),
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = [Suite::All, Suite::Concavity, Suite::Monotonicity, Suite::Tails, Suite::Bathtub, Suite::BrascampLieb]
            .iter()
            .position(|s| s == self)
            .unwrap();
        f.write_str(Suite::NAMES[i])
    }
}

/// Runs a suite with its default parameters. Monotonicity checks are marked
/// not applicable outside the regime where the closed-form envelope holds.
pub fn run_suite(m: &Mechanism, suite: Suite, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    if suite.includes(Suite::Concavity) {
        out.push(check_concavity_identity(m, 100, seed)?);
    }
    if suite.includes(Suite::Monotonicity) {
        let in_regime = match m.prior().spec() {
            PriorSpec::Gaussian { .. } => condition_report(m)?.gaussian_ratio_ok == Some(true),
            _ => condition_report(m)?.passes(),
        };
        match m.unimodal_tail_threshold() {
            Some(big_m) => {
                let sy = m.marginal_std();
                let start = big_m.max(0.0);
                for k in 0..5 {
                    let a = start + 0.1 * sy + 0.4 * sy * k as f64;
                    let mut r = check_interval_monotonicity(m, a, a + 8.0 * sy, 500)?;
                    r.name = format!("{}[a={a:.4}]", r.name);
                    r.applicable = in_regime;
                    out.push(r);
                }
                let a = start + 0.5 * sy;
                let mut r = check_small_interval_growth(m, a, 50)?;
                r.name = format!("{}[a={a:.4}]", r.name);
                out.push(r);
            }
            None => out.push(CheckResult::not_applicable(
                "interval_monotonicity",
                "no certified monotone tails",
            )),
        }
    }
    if suite.includes(Suite::Tails) {
        for (i, delta) in [0.05, 0.2].into_iter().enumerate() {
            let mut r = check_tail_worst_bound(m, delta, 500, seed.wrapping_add(i as u64))?;
            r.name = format!("{}[delta={delta}]", r.name);
            out.push(r);
        }
    }
    if suite.includes(Suite::Bathtub) {
        let mut rng = rng_for(seed, 5);
        let (lo, hi) = m.scan_window();
        let sy = m.marginal_std();
        for i in 0..10 {
            let (x, range, delta) = bathtub_triple(m, &mut rng, lo, hi, sy)?;
            let mut r = check_bathtub_optimality(m, x, &range, delta, 200, seed.wrapping_add(i))?;
            r.name = format!("{}[{i}]", r.name);
            out.push(r);
        }
        out.push(check_tail_window_search(m, 6, seed)?);
    }
    if suite.includes(Suite::BrascampLieb) {
        out.push(check_brascamp_lieb_bound(m)?);
    }
    Ok(out)
}

/// A random `(x, range, delta)` with `range` around `x` inside the scan
/// window and `delta` a random fraction of its mass.
pub fn bathtub_triple<R: Rng>(m: &Mechanism, rng: &mut R, lo: f64, hi: f64, sy: f64) -> Result<(f64, Interval, f64)> {
    let x = rng.gen_range(-1.5..1.5) * sy + m.prior_mean();
    let range = Interval::new((x - rng.gen_range(0.5..3.0) * sy).max(lo), (x + rng.gen_range(0.5..3.0) * sy).min(hi))?;
    let delta = rng.gen_range(0.1..0.6) * m.prob_between(range.lo, range.hi);
    Ok((x, range, delta))
}

/// True when every applicable check passed.
pub fn suite_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| !r.applicable || r.passed)
}
