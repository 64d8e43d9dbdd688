//! Deterministic PML envelope: regime diagnostics, the closed form
//! `ln(2 / delta)` and a brute-force lower bound over tail-slice
//! post-processings.

use serde::{Deserialize, Serialize};

use crate::error::{PmlError, Result};
use crate::leakage::{
    delta_quantile_of, interval_leakage, mass_ahead, mass_behind, Cell, FinitePartition, Interval, LeakageNats,
    MASS_SLACK,
};
use crate::mechanism::Mechanism;
use crate::numerics::golden_section_max;
use crate::priors::{check_strong_log_concavity, linspace, PriorSpec};

const VARIANCE_SCAN_POINTS: usize = 2048;
const CONCAVITY_GRID_POINTS: usize = 2001;
/// Mass resolution of the brute-force search is `delta / UNITS`.
const UNITS: usize = 32;
pub const MAX_CELLS: usize = 6;

/// Which hypotheses of the closed-form envelope hold for a mechanism.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub sup_posterior_variance: f64,
    pub argsup_y: f64,
    pub variance_threshold: f64,
    pub variance_ok: bool,
    /// `None` when not applicable (grid priors).
    pub slc_ok: Option<bool>,
    pub beta_effective: Option<f64>,
    /// `None` when no monotone-tail threshold was found.
    pub tail_unimodal_m: Option<f64>,
    /// Only applicable to Gaussian priors.
    pub gaussian_ratio_ok: Option<bool>,
}

impl ConditionReport {
    /// Variance bound and monotone tails both certified.
    pub fn passes(&self) -> bool {
        self.variance_ok && self.tail_unimodal_m.is_some()
    }
}

pub fn condition_report(m: &Mechanism) -> Result<ConditionReport> {
    let sn2 = m.sigma_n() * m.sigma_n();
    let threshold = 0.75 * sn2;
    let (lo, hi) = m.scan_window();
    let ys = linspace(lo, hi, VARIANCE_SCAN_POINTS);
    let mut best = (ys[0], f64::NEG_INFINITY);
    let mut best_k = 0;
    for (k, &y) in ys.iter().enumerate() {
        let v = m.posterior_variance(y)?;
        if v > best.1 {
            best = (y, v);
            best_k = k;
        }
    }
    let a = ys[best_k.saturating_sub(1)];
    let b = ys[(best_k + 1).min(ys.len() - 1)];
    let mut failure = None;
    let refined = golden_section_max(
        |y| match m.posterior_variance(y) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        a,
        b,
        1e-9 * (hi - lo),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    if refined.1 > best.1 {
        best = refined;
    }

    let prior = m.prior();
    let (slc_ok, beta_effective) = if prior.is_approximate() {
        (None, None)
    } else {
        let (plo, phi) = prior.window();
        let grid = linspace(plo, phi, CONCAVITY_GRID_POINTS);
        let r = check_strong_log_concavity(prior, 3f64.sqrt() * m.sigma_n(), &grid)?;
        let beta = (r.min_theta_second > 0.0).then(|| 1.0 / r.min_theta_second.sqrt());
        (Some(r.holds), beta)
    };
    let gaussian_ratio_ok = match prior.spec() {
        PriorSpec::Gaussian { sigma_x } => {
            let sx2 = sigma_x * sigma_x;
            Some(sx2 * sn2 / (sx2 + sn2) <= threshold + 1e-6)
        }
        _ => None,
    };
    Ok(ConditionReport {
        sup_posterior_variance: best.1,
        argsup_y: best.0,
        variance_threshold: threshold,
        variance_ok: best.1 <= threshold + 1e-6,
        slc_ok,
        beta_effective,
        tail_unimodal_m: m.unimodal_tail_threshold(),
        gaussian_ratio_ok,
    })
}

/// How an envelope value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Hypotheses certified: the value is exactly `ln(2 / delta)`.
    ClosedForm,
    /// Outside the certified regime: the value is the best δ-quantile the
    /// search found, a lower bound on the envelope.
    LowerBoundOnly,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::ClosedForm => "ClosedForm",
            Regime::LowerBoundOnly => "LowerBoundOnly",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopePoint {
    pub delta: f64,
    pub epsilon_d: LeakageNats,
    pub regime: Regime,
    pub witness: FinitePartition,
}

/// Largest `delta` on the grid `k / 256` below which the sub-level-set
/// separation used for the closed form holds, scanning upward and stopping
/// at the first failure. `None` when the monotone-tail threshold is missing
/// or the smallest grid value already fails.
pub fn delta0_estimate(m: &Mechanism) -> Option<f64> {
    let big_m = m.unimodal_tail_threshold()?;
    let mut best = None;
    for k in 1..128 {
        let delta = k as f64 / 256.0;
        match separation_holds(m, big_m, delta) {
            Ok(true) => best = Some(delta),
            _ => break,
        }
    }
    best
}

fn separation_holds(m: &Mechanism, big_m: f64, delta: f64) -> Result<bool> {
    let (a, b) = m.y_window();
    if delta >= m.prob_between(a, b) {
        return Ok(false);
    }
    let b_delta = mass_ahead(m, a, delta)?;
    let a_delta = mass_behind(m, b, delta)?;
    if !(b_delta < -big_m && a_delta > big_m) {
        return Ok(false);
    }
    let tau_l = m.marginal_log_density(b_delta)?;
    let tau_r = m.marginal_log_density(a_delta)?;
    // b1: first point right of b_delta where f_Y drops below tau_L again.
    let b1 = crossing(m, b_delta, b, tau_l, true)?;
    // a1: last point left of a_delta where f_Y is below tau_R.
    let a1 = crossing(m, a_delta, a, tau_r, false)?;
    Ok(a1 < b1 && m.prob_between(a1, b1) > delta)
}

/// Walks the cached grid from `start` toward `end` and returns the first
/// point where `ln f_Y < level`, refined by bisection on the exact density;
/// `end` if there is none.
fn crossing(m: &Mechanism, start: f64, end: f64, level: f64, rightward: bool) -> Result<f64> {
    let grid = m.y_grid();
    let logf = m.y_grid_log_density();
    let inside = |y: f64| if rightward { y > start && y <= end } else { y < start && y >= end };
    let order: Box<dyn Iterator<Item = usize>> = if rightward {
        Box::new(0..grid.len())
    } else {
        Box::new((0..grid.len()).rev())
    };
    let mut prev = start;
    for k in order {
        let y = grid[k];
        if !inside(y) {
            continue;
        }
        if logf[k] < level {
            let (mut a, mut b) = (prev, y);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if m.marginal_log_density(mid)? < level {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(0.5 * (a + b));
        }
        prev = y;
    }
    Ok(end)
}

/// The two-tail post-processing with tails of mass `delta / 2` each.
pub fn two_tail_witness(m: &Mechanism, delta: f64) -> Result<FinitePartition> {
    let (tl, tr) = crate::leakage::tail_thresholds(m, 0.5 * delta, 0.5 * delta)?;
    Ok(FinitePartition::new(vec![
        Cell::new(f64::NEG_INFINITY, tl, "L1"),
        Cell::new(tl, tr, "core"),
        Cell::new(tr, f64::INFINITY, "R1"),
    ]))
}

fn check_delta(op: &'static str, delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(PmlError::domain(op, format!("delta must lie in (0, 1), got {delta}")))
    }
}

pub fn envelope_point(m: &Mechanism, delta: f64) -> Result<EnvelopePoint> {
    check_delta("envelope_point", delta)?;
    let report = condition_report(m)?;
    let delta0 = delta0_estimate(m);
    point_with(m, delta, &report, delta0)
}

fn point_with(m: &Mechanism, delta: f64, report: &ConditionReport, delta0: Option<f64>) -> Result<EnvelopePoint> {
    let closed = match m.prior().spec() {
        PriorSpec::Gaussian { .. } => report.variance_ok && delta < 0.5,
        _ => report.passes() && delta0.is_some_and(|d0| delta <= d0) && delta < 0.5,
    };
    if closed {
        Ok(EnvelopePoint {
            delta,
            epsilon_d: LeakageNats::new((2.0 / delta).ln()),
            regime: Regime::ClosedForm,
            witness: two_tail_witness(m, delta)?,
        })
    } else {
        let r = envelope_bruteforce_lower_bound(m, delta, MAX_CELLS)?;
        Ok(EnvelopePoint {
            delta,
            epsilon_d: r.value,
            regime: Regime::LowerBoundOnly,
            witness: r.witness,
        })
    }
}

pub fn envelope_curve(m: &Mechanism, deltas: &[f64]) -> Result<Vec<EnvelopePoint>> {
    for &d in deltas {
        check_delta("envelope_curve", d)?;
    }
    let report = condition_report(m)?;
    let delta0 = delta0_estimate(m);
    deltas.iter().map(|&d| point_with(m, d, &report, delta0)).collect()
}

/// Outcome of the brute-force search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceResult {
    pub value: LeakageNats,
    pub witness: FinitePartition,
    /// Left slice masses from the outermost inward.
    pub left_masses: Vec<f64>,
    /// Right slice masses from the outermost inward.
    pub right_masses: Vec<f64>,
}

struct SliceTables {
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
    core: Vec<f64>,
}

fn slice_tables(m: &Mechanism, delta: f64) -> Result<SliceTables> {
    let unit = delta / UNITS as f64;
    let mut lc = vec![f64::NEG_INFINITY; UNITS + 1];
    let mut rc = vec![f64::INFINITY; UNITS + 1];
    for i in 1..=UNITS {
        lc[i] = m.marginal_quantile(i as f64 * unit)?;
        rc[i] = m.marginal_upper_quantile(i as f64 * unit)?;
    }
    let mut left = vec![vec![f64::NAN; UNITS + 1]; UNITS + 1];
    let mut right = vec![vec![f64::NAN; UNITS + 1]; UNITS + 1];
    for i in 0..UNITS {
        for j in i + 1..=UNITS {
            left[i][j] = interval_leakage(m, &Interval::new(lc[i], lc[j])?)?.value();
            right[i][j] = interval_leakage(m, &Interval::new(rc[j], rc[i])?)?.value();
        }
    }
    let core = (0..=UNITS)
        .map(|a| Ok(interval_leakage(m, &Interval::new(lc[a], rc[UNITS - a])?)?.value()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SliceTables { left, right, core })
}

/// Calls `f` on every composition of `total` into `parts` positive parts, in
/// lexicographic order.
fn for_each_composition<F: FnMut(&[usize])>(total: usize, parts: usize, f: &mut F) {
    fn rec<F: FnMut(&[usize])>(buf: &mut Vec<usize>, left: usize, parts: usize, f: &mut F) {
        if parts == 1 {
            buf.push(left);
            f(buf);
            buf.pop();
            return;
        }
        for first in 1..=left - (parts - 1) {
            buf.push(first);
            rec(buf, left - first, parts - 1, f);
            buf.pop();
        }
    }
    if parts >= 1 && parts <= total {
        rec(&mut Vec::with_capacity(parts), total, parts, f);
    }
}

/// δ-quantile of `(mass, leakage)` pairs held in a fixed buffer.
fn quantile_small(items: &mut [(f64, f64)], delta: f64) -> f64 {
    items.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut acc = 0.0;
    for &(mass, leak) in items.iter() {
        acc += mass;
        if acc >= delta - MASS_SLACK {
            return leak;
        }
    }
    items.last().map_or(0.0, |x| x.1)
}

#[derive(Debug, Clone)]
struct Evaluated {
    value: f64,
    /// Leakages sorted ascending, for leximin comparison.
    profile: Vec<f64>,
    partition: FinitePartition,
}

fn better(a: &Evaluated, b: &Evaluated) -> bool {
    const EPS: f64 = 1e-12;
    if a.value > b.value + EPS {
        return true;
    }
    if a.value < b.value - EPS {
        return false;
    }
    for (x, y) in a.profile.iter().zip(&b.profile) {
        if x > &(y + EPS) {
            return true;
        }
        if x < &(y - EPS) {
            return false;
        }
    }
    false
}

/// Evaluates the allocation with slice masses `left` and `right` (outermost
/// first) on the true marginal.
fn evaluate(m: &Mechanism, delta: f64, left: &[f64], right: &[f64]) -> Result<Evaluated> {
    let mut cells = Vec::new();
    let mut items = Vec::new();
    let mut lo = f64::NEG_INFINITY;
    let mut cum = 0.0;
    for (j, w) in left.iter().enumerate() {
        cum += w;
        let hi = m.marginal_quantile(cum)?;
        let iv = Interval::new(lo, hi)?;
        items.push((m.prob_between(lo, hi), interval_leakage(m, &iv)?.value()));
        cells.push(Cell::new(lo, hi, format!("L{}", j + 1)));
        lo = hi;
    }
    let mut right_cells = Vec::new();
    let mut hi = f64::INFINITY;
    cum = 0.0;
    for (j, w) in right.iter().enumerate() {
        cum += w;
        let cut = m.marginal_upper_quantile(cum)?;
        let iv = Interval::new(cut, hi)?;
        items.push((m.prob_between(cut, hi), interval_leakage(m, &iv)?.value()));
        right_cells.push(Cell::new(cut, hi, format!("R{}", j + 1)));
        hi = cut;
    }
    let core = Interval::new(lo, hi)?;
    items.push((m.prob_between(lo, hi), interval_leakage(m, &core)?.value()));
    cells.push(Cell::new(lo, hi, "core"));
    cells.extend(right_cells.into_iter().rev());
    let value = delta_quantile_of(&items, delta);
    let mut profile: Vec<f64> = items.iter().map(|x| x.1).collect();
    profile.sort_by(f64::total_cmp);
    Ok(Evaluated {
        value,
        profile,
        partition: FinitePartition::new(cells),
    })
}

/// Best δ-quantile over post-processings whose high-leakage outcomes are
/// consecutive slices of the two tails (at most `max_cells` of them, the
/// rest of the line mapped to one core outcome). Allocations of the bad mass
/// `delta` over a grid of resolution `delta / 32` are enumerated exhaustively,
/// then the best one is polished by pairwise mass transfers.
pub fn envelope_bruteforce_lower_bound(m: &Mechanism, delta: f64, max_cells: usize) -> Result<BruteForceResult> {
    const OP: &str = "envelope_bruteforce_lower_bound";
    check_delta(OP, delta)?;
    if !(1..=MAX_CELLS).contains(&max_cells) {
        return Err(PmlError::domain(OP, format!("max_cells must lie in [1, {MAX_CELLS}], got {max_cells}")));
    }
    let t = slice_tables(m, delta)?;
    let unit = delta / UNITS as f64;
    let core_mass = 1.0 - delta;

    let mut best_value = f64::NEG_INFINITY;
    let mut best: (usize, Vec<usize>) = (0, Vec::new());
    let mut items = [(0.0, 0.0); MAX_CELLS + 1];
    for k in 1..=max_cells {
        for kl in 0..=k {
            for_each_composition(UNITS, k, &mut |parts: &[usize]| {
                let mut n = 0;
                let mut cum = 0;
                for &p in &parts[..kl] {
                    items[n] = (p as f64 * unit, t.left[cum][cum + p]);
                    cum += p;
                    n += 1;
                }
                let left_units = cum;
                cum = 0;
                for &p in &parts[kl..] {
                    items[n] = (p as f64 * unit, t.right[cum][cum + p]);
                    cum += p;
                    n += 1;
                }
                items[n] = (core_mass, t.core[left_units]);
                n += 1;
                let v = quantile_small(&mut items[..n], delta);
                if v > best_value {
                    best_value = v;
                    best = (kl, parts.to_vec());
                }
            });
        }
    }

    let (kl, parts) = best;
    let mut left: Vec<f64> = parts[..kl].iter().map(|&p| p as f64 * unit).collect();
    let mut right: Vec<f64> = parts[kl..].iter().map(|&p| p as f64 * unit).collect();
    let mut current = evaluate(m, delta, &left, &right)?;

    // Pattern search on continuous masses: move mass between two slices.
    let n = left.len() + right.len();
    let min_mass = delta * f64::powi(2.0, -20);
    let mut step = delta / 64.0;
    let floor = delta * f64::powi(2.0, -16);
    let mut evals = 0;
    while step >= floor && n > 1 && evals < 4000 {
        let mut improved = false;
        'moves: for from in 0..n {
            for to in 0..n {
                if from == to {
                    continue;
                }
                let mut masses: Vec<f64> = left.iter().chain(&right).cloned().collect();
                if masses[from] - step < min_mass {
                    continue;
                }
                masses[from] -= step;
                masses[to] += step;
                let (l, r) = masses.split_at(left.len());
                evals += 1;
                let cand = evaluate(m, delta, l, r)?;
                if better(&cand, &current) {
                    left = l.to_vec();
                    right = r.to_vec();
                    current = cand;
                    improved = true;
                    break 'moves;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    Ok(BruteForceResult {
        value: LeakageNats::new(current.value),
        witness: current.partition,
        left_masses: left,
        right_masses: right,
    })
}
