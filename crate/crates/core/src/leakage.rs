//! Event and interval leakage, δ-quantiles of finite post-processings, tail
//! thresholds and the worst equal-mass interval.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PmlError, Result};
use crate::mechanism::Mechanism;
use crate::numerics::{golden_section_max, maximize_on_grid, norm_centered_mass};

/// Slack on accumulated probability when comparing against a level δ.
pub const MASS_SLACK: f64 = 1e-10;

/// Serde adapter for extended reals written as numbers or `"-inf"` / `"inf"`.
pub mod ext_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!(
                    "expected a number, \"-inf\" or \"inf\", got \"{other}\""
                ))),
            },
        }
    }
}

/// Interval `(lo, hi)` of the extended real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    #[serde(with = "ext_real")]
    pub lo: f64,
    #[serde(with = "ext_real")]
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let iv = Self { lo, hi };
        iv.check("Interval::new")?;
        Ok(iv)
    }

    pub const FULL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub(crate) fn check(&self, op: &'static str) -> Result<()> {
        if self.lo.is_nan() || self.hi.is_nan() || self.lo > self.hi || self.lo == f64::INFINITY || self.hi == f64::NEG_INFINITY {
            return Err(PmlError::domain(op, format!("invalid interval {self}")));
        }
        Ok(())
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn is_full_line(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// A leakage value in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LeakageNats(f64);

impl LeakageNats {
    pub const ZERO: LeakageNats = LeakageNats(0.0);

    /// Leakage is nonnegative; rounding noise below zero is clipped.
    pub fn new(v: f64) -> Self {
        LeakageNats(if v < 0.0 && v > -1e-9 { 0.0 } else { v })
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for LeakageNats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One cell of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    #[serde(with = "ext_real")]
    pub lo: f64,
    #[serde(with = "ext_real")]
    pub hi: f64,
    pub label: String,
}

impl Cell {
    pub fn new(lo: f64, hi: f64, label: impl Into<String>) -> Self {
        Self { lo, hi, label: label.into() }
    }

    pub fn interval(&self) -> Interval {
        Interval { lo: self.lo, hi: self.hi }
    }
}

/// A deterministic post-processing `h(Y)` with finitely many outcomes:
/// consecutive interval cells covering the line, each mapped to a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinitePartition {
    pub cells: Vec<Cell>,
}

/// One outcome of a partition with its probability and leakage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub label: String,
    pub intervals: Vec<Interval>,
    pub mass: f64,
    pub leakage: LeakageNats,
}

impl FinitePartition {
    pub fn new(cells: Vec<Cell>) -> Self {
        Self { cells }
    }

    /// Every `y` mapped to one label.
    pub fn trivial(label: &str) -> Self {
        Self::new(vec![Cell::new(f64::NEG_INFINITY, f64::INFINITY, label)])
    }

    /// Checks that the cells are consecutive, cover the working window and
    /// carry total probability one.
    pub fn validate(&self, m: &Mechanism) -> Result<()> {
        const OP: &str = "FinitePartition::validate";
        if self.cells.is_empty() {
            return Err(PmlError::domain(OP, "partition has no cells"));
        }
        for (i, c) in self.cells.iter().enumerate() {
            c.interval().check(OP)?;
            if !(c.lo < c.hi) {
                return Err(PmlError::domain(OP, format!("cell {i} is empty")));
            }
            if i > 0 && self.cells[i - 1].hi != c.lo {
                return Err(PmlError::domain(OP, format!("cells {} and {i} are not adjacent", i - 1)));
            }
        }
        let (wlo, whi) = m.y_window();
        if self.cells[0].lo > wlo || self.cells[self.cells.len() - 1].hi < whi {
            return Err(PmlError::domain(OP, "cells do not cover the working window"));
        }
        let total: f64 = self.cells.iter().map(|c| m.prob_between(c.lo, c.hi)).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(PmlError::domain(OP, format!("cell probabilities sum to {total}")));
        }
        Ok(())
    }

    /// Cells grouped by label, with adjacent cells merged, in label order.
    pub fn outcomes(&self) -> BTreeMap<String, Vec<Interval>> {
        let mut groups: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
        for c in &self.cells {
            let g = groups.entry(c.label.clone()).or_default();
            match g.last_mut() {
                Some(last) if last.hi == c.lo => last.hi = c.hi,
                _ => g.push(c.interval()),
            }
        }
        groups
    }
}

/// `sup_x P(lo < Y < hi | X = x)` over the prior support, using that the
/// conditional probability is maximized at the clamped midpoint.
fn interval_sup(m: &Mechanism, iv: &Interval) -> f64 {
    let (s0, s1) = m.prior().support();
    if s0 == f64::NEG_INFINITY && s1 == f64::INFINITY {
        if iv.is_bounded() {
            return norm_centered_mass(0.5 * iv.len() / m.sigma_n());
        }
        return 1.0;
    }
    let mid = if iv.is_bounded() {
        0.5 * (iv.lo + iv.hi)
    } else if iv.lo == f64::NEG_INFINITY && iv.hi == f64::INFINITY {
        0.0
    } else if iv.lo == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    m.conditional_prob(mid.clamp(s0, s1), iv.lo, iv.hi)
}

/// Leakage of the event `Y in iv`:
/// `ln [(2 Phi((b - a) / (2 sigma_n)) - 1) / P_Y(a, b)]` for bounded intervals,
/// `ln (1 / P_Y(iv))` for tails and 0 for the full line.
pub fn interval_leakage(m: &Mechanism, iv: &Interval) -> Result<LeakageNats> {
    const OP: &str = "interval_leakage";
    iv.check(OP)?;
    if iv.is_full_line() {
        return Ok(LeakageNats::ZERO);
    }
    if !(iv.lo < iv.hi) {
        return Err(PmlError::domain(OP, format!("degenerate interval {iv}")));
    }
    let p = m.prob_between(iv.lo, iv.hi);
    if !(p > 0.0) {
        return Err(PmlError::domain(OP, format!("interval {iv} has zero probability")));
    }
    let sup = interval_sup(m, iv);
    if iv.is_bounded() || m.prior().is_approximate() {
        Ok(LeakageNats::new((sup / p).ln()))
    } else {
        Ok(LeakageNats::new(-p.ln()))
    }
}

fn sorted_union(op: &'static str, union: &[Interval]) -> Result<Vec<Interval>> {
    if union.is_empty() {
        return Err(PmlError::domain(op, "empty union"));
    }
    let mut v = union.to_vec();
    for iv in &v {
        iv.check(op)?;
    }
    v.retain(|iv| iv.lo < iv.hi);
    v.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for w in v.windows(2) {
        if w[1].lo < w[0].hi {
            return Err(PmlError::domain(op, format!("intervals {} and {} overlap", w[0], w[1])));
        }
    }
    Ok(v)
}

/// Brute-force leakage of a finite union of disjoint intervals: the
/// supremum over `x` of `P(union | X = x)` is located on a dense grid of `x`
/// values and refined by golden-section search. Only tails over an unbounded
/// support are handled symbolically (the supremum is 1, approached as
/// `x -> -+inf`).
pub fn set_leakage_oracle(m: &Mechanism, union: &[Interval]) -> Result<LeakageNats> {
    const OP: &str = "set_leakage_oracle";
    let ivs = sorted_union(OP, union)?;
    let p: f64 = ivs.iter().map(|iv| m.prob_between(iv.lo, iv.hi)).sum();
    if !(p > 0.0) {
        return Err(PmlError::domain(OP, "union has zero probability"));
    }
    let p = p.min(1.0);
    let (s0, s1) = m.prior().support();
    let open_left = ivs.iter().any(|iv| iv.lo == f64::NEG_INFINITY) && s0 == f64::NEG_INFINITY;
    let open_right = ivs.iter().any(|iv| iv.hi == f64::INFINITY) && s1 == f64::INFINITY;
    if open_left || open_right {
        return Ok(LeakageNats::new(-p.ln()));
    }
    let sigma = m.sigma_n();
    let cond = |x: f64| ivs.iter().map(|iv| m.conditional_prob(x, iv.lo, iv.hi)).sum::<f64>();
    let finite = ivs.iter().flat_map(|iv| [iv.lo, iv.hi]).filter(|v| v.is_finite());
    let (flo, fhi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = m.config().truncation_halfwidth * sigma;
    let lo = (flo - pad).max(s0);
    let hi = (fhi + pad).min(s1);
    let sup = if lo.is_finite() && hi.is_finite() && lo < hi {
        let n = (((hi - lo) / (sigma / 64.0)).ceil() as usize + 1).clamp(1025, 400_001);
        maximize_on_grid(cond, lo, hi, n, 1e-10 * sigma).1
    } else {
        cond(if lo.is_finite() { lo } else { hi })
    };
    Ok(LeakageNats::new((sup / p).ln()))
}

/// Probability and oracle leakage of every outcome of `part`, in label order.
/// Outcomes of zero probability are dropped.
pub fn partition_outcomes(m: &Mechanism, part: &FinitePartition) -> Result<Vec<Outcome>> {
    part.validate(m)?;
    let groups: Vec<(String, Vec<Interval>)> = part.outcomes().into_iter().collect();
    let evaluated: Vec<Result<Option<Outcome>>> = groups
        .into_par_iter()
        .map(|(label, intervals)| {
            let mass: f64 = intervals.iter().map(|iv| m.prob_between(iv.lo, iv.hi)).sum();
            if !(mass > 0.0) {
                return Ok(None);
            }
            let leakage = set_leakage_oracle(m, &intervals)?;
            Ok(Some(Outcome {
                label,
                intervals,
                mass,
                leakage,
            }))
        })
        .collect();
    let mut out = Vec::new();
    for r in evaluated {
        if let Some(o) = r? {
            out.push(o);
        }
    }
    Ok(out)
}

/// δ-quantile of the leakage of a list of `(mass, leakage)` outcomes:
/// outcomes are taken in decreasing leakage until their mass reaches δ and
/// the leakage of the last one taken is returned. Ties keep input order.
pub fn delta_quantile_of(outcomes: &[(f64, f64)], delta: f64) -> f64 {
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| outcomes[b].1.total_cmp(&outcomes[a].1).then(a.cmp(&b)));
    let mut acc = 0.0;
    let mut last = 0.0;
    for i in order {
        let (mass, leak) = outcomes[i];
        if !(mass > 0.0) {
            continue;
        }
        acc += mass;
        last = leak;
        if acc >= delta - MASS_SLACK {
            break;
        }
    }
    last
}

/// PML δ-quantile of the post-processing `part`.
pub fn partition_delta_quantile(m: &Mechanism, part: &FinitePartition, delta: f64) -> Result<LeakageNats> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PmlError::domain(
            "partition_delta_quantile",
            format!("delta must lie in (0, 1), got {delta}"),
        ));
    }
    let outcomes = partition_outcomes(m, part)?;
    let pairs: Vec<(f64, f64)> = outcomes.iter().map(|o| (o.mass, o.leakage.value())).collect();
    Ok(LeakageNats::new(delta_quantile_of(&pairs, delta)))
}

/// Cut points with `P_Y(-inf, t_L) = delta_left` and `P_Y(t_R, inf) = delta_right`.
pub fn tail_thresholds(m: &Mechanism, delta_left: f64, delta_right: f64) -> Result<(f64, f64)> {
    const OP: &str = "tail_thresholds";
    for d in [delta_left, delta_right] {
        if !(d > 0.0 && d < 1.0) {
            return Err(PmlError::domain(OP, format!("tail masses must lie in (0, 1), got {d}")));
        }
    }
    if !(delta_left + delta_right < 1.0) {
        return Err(PmlError::domain(
            OP,
            format!("tail masses {delta_left} + {delta_right} must sum to less than 1"),
        ));
    }
    Ok((m.marginal_quantile(delta_left)?, m.marginal_upper_quantile(delta_right)?))
}

/// The `v > u` with `P_Y(u, v) = delta`, computed on whichever side of the
/// median avoids cancellation.
pub fn mass_ahead(m: &Mechanism, u: f64, delta: f64) -> Result<f64> {
    let fu = m.marginal_cdf(u);
    if fu + delta <= 0.5 {
        m.marginal_quantile(fu + delta)
    } else {
        let rest = m.marginal_sf(u) - delta;
        if !(rest > 0.0) {
            return Err(PmlError::domain("mass_ahead", format!("less than {delta} mass above {u}")));
        }
        m.marginal_upper_quantile(rest)
    }
}

/// The `u < v` with `P_Y(u, v) = delta`.
pub fn mass_behind(m: &Mechanism, v: f64, delta: f64) -> Result<f64> {
    let sv = m.marginal_sf(v);
    if sv + delta <= 0.5 {
        m.marginal_upper_quantile(sv + delta)
    } else {
        let rest = m.marginal_cdf(v) - delta;
        if !(rest > 0.0) {
            return Err(PmlError::domain("mass_behind", format!("less than {delta} mass below {v}")));
        }
        m.marginal_quantile(rest)
    }
}

/// Longest interval `(u, v)` inside the bounded `range` with `P_Y(u, v) = delta`
/// and its leakage. Among equal-mass intervals the longest one leaks most.
pub fn worst_interval_search(m: &Mechanism, range: &Interval, delta: f64) -> Result<(Interval, LeakageNats)> {
    const OP: &str = "worst_interval_search";
    range.check(OP)?;
    if !range.is_bounded() {
        return Err(PmlError::domain(OP, format!("range {range} must be bounded")));
    }
    let total = m.prob_between(range.lo, range.hi);
    if !(delta > 0.0 && delta < total) {
        return Err(PmlError::domain(
            OP,
            format!("delta = {delta} must lie in (0, P(range) = {total})"),
        ));
    }
    let u_max = mass_behind(m, range.hi, delta)?.max(range.lo);
    let length = |u: f64| match mass_ahead(m, u, delta) {
        Ok(v) => v.min(range.hi) - u,
        Err(_) => f64::NEG_INFINITY,
    };
    let (u, _) = if !(u_max > range.lo) {
        (range.lo, length(range.lo))
    } else if m.unimodal_tail_threshold().is_some() {
        maximize_on_grid(length, range.lo, u_max, 512, 1e-8)
    } else {
        let (u0, l0) = maximize_on_grid(&length, range.lo, u_max, 8192, 1e-8);
        let step = (u_max - range.lo) / 8191.0;
        let refined = golden_section_max(&length, (u0 - step).max(range.lo), (u0 + step).min(u_max), 1e-8);
        if refined.1 > l0 {
            refined
        } else {
            (u0, l0)
        }
    };
    let v = mass_ahead(m, u, delta)?.min(range.hi);
    let iv = Interval::new(u, v)?;
    Ok((iv, interval_leakage(m, &iv)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::MechanismConfig;
    use crate::numerics::{norm_cdf, QuadratureConfig};
    use crate::priors::PriorSpec;

    fn canonical() -> Mechanism {
        MechanismConfig {
            prior: PriorSpec::Gaussian { sigma_x: 1.0 },
            sigma_n: 1.0,
            quadrature: QuadratureConfig::default(),
        }
        .build()
        .unwrap()
    }

    #[test]
    fn full_line_and_tails() {
        let m = canonical();
        assert_eq!(interval_leakage(&m, &Interval::FULL).unwrap().value(), 0.0);
        let (_, tr) = tail_thresholds(&m, 0.05, 0.05).unwrap();
        assert!((tr - 2.0f64.sqrt() * 1.6448536269514722).abs() < 1e-8);
        let l = interval_leakage(&m, &Interval::new(tr, f64::INFINITY).unwrap()).unwrap();
        assert!((l.value() - 20f64.ln()).abs() < 1e-9);
        assert!(tail_thresholds(&m, 0.5, 0.5).is_err());
    }

    #[test]
    fn bounded_interval_closed_form() {
        let m = canonical();
        let iv = Interval::new(1.0, 2.0).unwrap();
        let s = 2f64.sqrt();
        let exact = ((2.0 * norm_cdf(0.5) - 1.0) / (norm_cdf(2.0 / s) - norm_cdf(1.0 / s))).ln();
        let l = interval_leakage(&m, &iv).unwrap().value();
        assert!((l - exact).abs() < 1e-10);
        let o = set_leakage_oracle(&m, &[iv]).unwrap().value();
        assert!((l - o).abs() < 1e-5);
        assert!(interval_leakage(&m, &Interval::new(1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn trivial_partition_has_zero_quantile() {
        let m = canonical();
        let q = partition_delta_quantile(&m, &FinitePartition::trivial("all"), 0.3).unwrap();
        assert_eq!(q.value(), 0.0);
        assert!(partition_delta_quantile(&m, &FinitePartition::trivial("all"), 1.0).is_err());
    }

    #[test]
    fn two_tail_partition() {
        let m = canonical();
        let delta = 0.1;
        let (tl, tr) = tail_thresholds(&m, delta / 2.0, delta / 2.0).unwrap();
        let part = FinitePartition::new(vec![
            Cell::new(f64::NEG_INFINITY, tl, "L"),
            Cell::new(tl, tr, "core"),
            Cell::new(tr, f64::INFINITY, "R"),
        ]);
        let q = partition_delta_quantile(&m, &part, delta).unwrap().value();
        assert!((q - (2.0 / delta).ln()).abs() < 1e-9);
    }

    #[test]
    fn worst_interval_forced_full() {
        let m = canonical();
        let range = Interval::new(-1.0, 1.0).unwrap();
        let p = m.prob_between(-1.0, 1.0);
        let (iv, _) = worst_interval_search(&m, &range, p - 1e-6).unwrap();
        assert!((iv.lo + 1.0).abs() < 1e-4 && (iv.hi - 1.0).abs() < 1e-4);
    }

    #[test]
    fn partition_json() {
        let p: FinitePartition =
            serde_json::from_str(r#"{"cells":[{"lo":"-inf","hi":0,"label":"a"},{"lo":0,"hi":"inf","label":"b"}]}"#)
                .unwrap();
        assert_eq!(p.cells[0].lo, f64::NEG_INFINITY);
        assert_eq!(p.cells[1].hi, f64::INFINITY);
        let back = serde_json::to_string(&p).unwrap();
        assert!(back.contains("\"-inf\""));
    }
}
