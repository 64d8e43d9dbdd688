use serde::{Deserialize, Serialize};

use crate::error::{PmlError, Result};

/// Controls truncation and resolution of every quadrature in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Half-width of the integration window in standardized units.
    pub truncation_halfwidth: f64,
    /// Number of panels of the composite rule.
    pub panel_count: usize,
    /// Stopping tolerance between successive refinements.
    pub abs_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            truncation_halfwidth: 10.0,
            panel_count: 2048,
            abs_tol: 1e-12,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.truncation_halfwidth >= 8.0) || !self.truncation_halfwidth.is_finite() {
            return Err(PmlError::invalid(
                "/truncation_halfwidth",
                format!("must be a finite number >= 8, got {}", self.truncation_halfwidth),
            ));
        }
        if self.panel_count < 256 {
            return Err(PmlError::invalid(
                "/panel_count",
                format!("must be >= 256, got {}", self.panel_count),
            ));
        }
        if !(self.abs_tol > 0.0) || !self.abs_tol.is_finite() {
            return Err(PmlError::invalid(
                "/abs_tol",
                format!("must be a positive finite number, got {}", self.abs_tol),
            ));
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

const RULE_ORDER: usize = 5;
const MAX_REFINEMENTS: usize = 8;

fn composite<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        let mut panel = 0.0;
        for (t, w) in rule.0.iter().zip(&rule.1) {
            panel += w * f(mid + 0.5 * h * t);
        }
        total += 0.5 * h * panel;
    }
    total
}

/// Integrates `f` over `[a, b]` with a composite Gauss-Legendre rule, doubling
/// the panel count until two successive estimates agree to `cfg.abs_tol`.
///
/// Infinite endpoints are replaced by `-+cfg.truncation_halfwidth`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64> {
    const OP: &str = "integrate";
    if a.is_nan() || b.is_nan() {
        return Err(PmlError::domain(OP, "NaN endpoint"));
    }
    if a > b {
        return Err(PmlError::precondition(OP, format!("need a <= b, got [{a}, {b}]")));
    }
    let w = cfg.truncation_halfwidth;
    let lo = if a.is_infinite() { -w } else { a };
    let hi = if b.is_infinite() { w } else { b };
    if lo >= hi {
        return Ok(0.0);
    }
    let rule = gauss_legendre(RULE_ORDER);
    let mut panels = cfg.panel_count.max(1);
    let mut prev = composite(&mut f, lo, hi, panels, &rule);
    if !prev.is_finite() {
        return Err(PmlError::numerical(OP, "integrand is not finite on the interval"));
    }
    for _ in 0..MAX_REFINEMENTS {
        panels *= 2;
        let cur = composite(&mut f, lo, hi, panels, &rule);
        if !cur.is_finite() {
            return Err(PmlError::numerical(OP, "integrand is not finite on the interval"));
        }
        if (cur - prev).abs() < cfg.abs_tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(PmlError::Numerical {
        op: OP,
        msg: format!("no convergence after {MAX_REFINEMENTS} refinements"),
        last_estimate: Some(prev),
    })
}
