//! Secret distributions `f_X = exp(-theta) / Z` and log-concavity diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{PmlError, Result};
use crate::numerics::{integrate, QuadratureConfig, LN_SQRT_2PI};

/// Parametric description of the prior on the secret `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum PriorSpec {
    /// `N(0, sigma_x^2)`.
    #[serde(rename = "gaussian")]
    Gaussian { sigma_x: f64 },
    /// `theta(x) = x^2 / (2 beta^2) + c |x|^p / p`, which is
    /// `beta`-strongly log-concave for every `c >= 0`, `p >= 1`.
    #[serde(rename = "slc")]
    StronglyLogConcave { beta: f64, c: f64, p: f64 },
    /// Finite mixture of Gaussians.
    #[serde(rename = "mixture")]
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        sigmas: Vec<f64>,
    },
    /// Piecewise-linear log density on `[xs[0], xs[n-1]]`, zero outside.
    /// Approximate: the support is bounded.
    #[serde(rename = "grid")]
    Grid { xs: Vec<f64>, log_density: Vec<f64> },
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PmlError::invalid(field, format!("must be a positive finite number, got {v}")))
    }
}

impl PriorSpec {
    /// Checks parameter constraints. Error fields are JSON pointers relative
    /// to the prior object.
    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::Gaussian { sigma_x } => positive("/sigma_x", *sigma_x),
            PriorSpec::StronglyLogConcave { beta, c, p } => {
                positive("/beta", *beta)?;
                if !(*c >= 0.0 && c.is_finite()) {
                    return Err(PmlError::invalid("/c", format!("must be finite and >= 0, got {c}")));
                }
                if !(*p >= 1.0 && p.is_finite()) {
                    return Err(PmlError::invalid("/p", format!("must be finite and >= 1, got {p}")));
                }
                Ok(())
            }
            PriorSpec::GaussianMixture { weights, means, sigmas } => {
                if weights.is_empty() {
                    return Err(PmlError::invalid("/weights", "must not be empty"));
                }
                if means.len() != weights.len() {
                    return Err(PmlError::invalid(
                        "/means",
                        format!("expected {} entries, got {}", weights.len(), means.len()),
                    ));
                }
                if sigmas.len() != weights.len() {
                    return Err(PmlError::invalid(
                        "/sigmas",
                        format!("expected {} entries, got {}", weights.len(), sigmas.len()),
                    ));
                }
                for (i, w) in weights.iter().enumerate() {
                    if !(*w >= 0.0 && *w <= 1.0) {
                        return Err(PmlError::invalid(
                            format!("/weights/{i}"),
                            format!("must be a probability, got {w}"),
                        ));
                    }
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(PmlError::invalid("/weights", format!("must sum to 1, got {total}")));
                }
                for (i, m) in means.iter().enumerate() {
                    if !m.is_finite() {
                        return Err(PmlError::invalid(format!("/means/{i}"), "must be finite"));
                    }
                }
                for (i, s) in sigmas.iter().enumerate() {
                    positive(&format!("/sigmas/{i}"), *s)?;
                }
                Ok(())
            }
            PriorSpec::Grid { xs, log_density } => {
                if xs.len() < 2 {
                    return Err(PmlError::invalid("/xs", "need at least 2 points"));
                }
                if log_density.len() != xs.len() {
                    return Err(PmlError::invalid(
                        "/log_density",
                        format!("expected {} entries, got {}", xs.len(), log_density.len()),
                    ));
                }
                for (i, x) in xs.iter().enumerate() {
                    if !x.is_finite() {
                        return Err(PmlError::invalid(format!("/xs/{i}"), "must be finite"));
                    }
                    if i > 0 && *x <= xs[i - 1] {
                        return Err(PmlError::invalid(format!("/xs/{i}"), "xs must be strictly increasing"));
                    }
                }
                for (i, l) in log_density.iter().enumerate() {
                    if !l.is_finite() {
                        return Err(PmlError::invalid(format!("/log_density/{i}"), "must be finite"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Unnormalized potential `theta(x)`; infinite outside a grid's support.
    pub fn potential(&self, x: f64) -> f64 {
        match self {
            PriorSpec::Gaussian { sigma_x } => 0.5 * (x / sigma_x).powi(2),
            PriorSpec::StronglyLogConcave { beta, c, p } => {
                let g = 0.5 * (x / beta).powi(2);
                if *c == 0.0 {
                    g
                } else {
                    g + c * x.abs().powf(*p) / p
                }
            }
            PriorSpec::GaussianMixture { .. } => {
                let (log_g, _, _) = self.mixture_terms(x);
                -log_g
            }
            PriorSpec::Grid { xs, log_density } => match grid_segment(xs, x) {
                Some(k) => {
                    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
                    -(log_density[k] + t * (log_density[k + 1] - log_density[k]))
                }
                None => f64::INFINITY,
            },
        }
    }

    /// For a mixture: `(ln g, g'/g, g''/g)` with `g` the mixture density.
    fn mixture_terms(&self, x: f64) -> (f64, f64, f64) {
        let PriorSpec::GaussianMixture { weights, means, sigmas } = self else {
            unreachable!("mixture_terms on a non-mixture prior");
        };
        let logs: Vec<f64> = weights
            .iter()
            .zip(means)
            .zip(sigmas)
            .map(|((w, m), s)| w.ln() - s.ln() - LN_SQRT_2PI - 0.5 * ((x - m) / s).powi(2))
            .collect();
        let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for ((l, m), s) in logs.iter().zip(means).zip(sigmas) {
            let e = (l - shift).exp();
            let z = (x - m) / (s * s);
            s0 += e;
            s1 -= e * z;
            s2 += e * (z * z - 1.0 / (s * s));
        }
        (shift + s0.ln(), s1 / s0, s2 / s0)
    }
}

/// Index `k` with `xs[k] <= x <= xs[k+1]`, or `None` outside the grid.
fn grid_segment(xs: &[f64], x: f64) -> Option<usize> {
    let n = xs.len();
    if !(x >= xs[0] && x <= xs[n - 1]) {
        return None;
    }
    let k = xs.partition_point(|v| *v <= x);
    Some(k.saturating_sub(1).min(n - 2))
}

/// `Z = integral of exp(-theta)`; closed form where available.
pub fn normalization_constant(spec: &PriorSpec, cfg: &QuadratureConfig) -> Result<f64> {
    log_normalization(spec, cfg).map(f64::exp)
}

fn log_normalization(spec: &PriorSpec, cfg: &QuadratureConfig) -> Result<f64> {
    spec.validate()?;
    match spec {
        PriorSpec::Gaussian { sigma_x } => Ok(sigma_x.ln() + LN_SQRT_2PI),
        PriorSpec::GaussianMixture { .. } => Ok(0.0),
        PriorSpec::StronglyLogConcave { beta, .. } => {
            let edge = cfg.truncation_halfwidth * beta;
            // Even integrand; x = u^4 smooths the |x|^p kink at the origin.
            let half = integrate(
                |u| {
                    let u3 = u * u * u;
                    4.0 * u3 * (-spec.potential(u3 * u)).exp()
                },
                0.0,
                edge.powf(0.25),
                cfg,
            )?;
            let z = 2.0 * half;
            if !(z > 0.0 && z.is_finite()) {
                return Err(PmlError::Model(format!("normalization integral is {z}")));
            }
            let edge_density = (-spec.potential(edge)).exp() / z;
            if edge_density * 2.0 * edge > 1e-10 {
                return Err(PmlError::Model(format!(
                    "density does not decay at the truncation boundary (f({edge}) = {edge_density:e})"
                )));
            }
            Ok(z.ln())
        }
        PriorSpec::Grid { xs, log_density } => {
            let shift = log_density.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..xs.len() - 1 {
                let h = xs[k + 1] - xs[k];
                let l0 = log_density[k] - shift;
                let d = log_density[k + 1] - log_density[k];
                let factor = if d.abs() < 1e-12 { 1.0 + 0.5 * d } else { d.exp_m1() / d };
                total += h * l0.exp() * factor;
            }
            Ok(shift + total.ln())
        }
    }
}

/// A validated, normalized prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    spec: PriorSpec,
    log_norm: f64,
    window: (f64, f64),
}

impl Prior {
    pub fn new(spec: PriorSpec, cfg: &QuadratureConfig) -> Result<Self> {
        let log_norm = log_normalization(&spec, cfg)?;
        let w = cfg.truncation_halfwidth;
        let window = match &spec {
            PriorSpec::Gaussian { sigma_x } => (-w * sigma_x, w * sigma_x),
            PriorSpec::StronglyLogConcave { beta, .. } => (-w * beta, w * beta),
            PriorSpec::GaussianMixture { means, sigmas, .. } => {
                let lo = means.iter().zip(sigmas).map(|(m, s)| m - w * s).fold(f64::INFINITY, f64::min);
                let hi = means.iter().zip(sigmas).map(|(m, s)| m + w * s).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            PriorSpec::Grid { xs, .. } => (xs[0], xs[xs.len() - 1]),
        };
        Ok(Self { spec, log_norm, window })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    /// Window outside of which the prior mass is negligible (the support for grids).
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    /// Support of the prior: the whole line except for grids.
    pub fn support(&self) -> (f64, f64) {
        match self.spec {
            PriorSpec::Grid { .. } => self.window,
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Whether the prior is only an approximation (bounded support grid).
    pub fn is_approximate(&self) -> bool {
        matches!(self.spec, PriorSpec::Grid { .. })
    }

    pub fn normalization_constant(&self) -> f64 {
        self.log_norm.exp()
    }

    /// `ln f_X(x)`; `-inf` outside a grid's support.
    pub fn log_density(&self, x: f64) -> f64 {
        -self.spec.potential(x) - self.log_norm
    }

    pub fn density_at(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(PmlError::domain("density_at", "NaN argument"));
        }
        if let PriorSpec::Grid { xs, .. } = &self.spec {
            if grid_segment(xs, x).is_none() {
                return Err(PmlError::domain(
                    "density_at",
                    format!("{x} lies outside the grid support [{}, {}]", xs[0], xs[xs.len() - 1]),
                ));
            }
        }
        Ok(self.log_density(x).exp())
    }

    /// Finite-difference step used for grid priors.
    fn grid_fd_step(&self) -> f64 {
        match &self.spec {
            PriorSpec::Grid { xs, .. } => {
                let spacing = xs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
                (2.0 * spacing).max(1e-4)
            }
            _ => 1e-4,
        }
    }

    /// `theta''(x)`: analytic for parametric priors, a central difference for
    /// grids. `None` where it is not defined (the kink of `|x|^p` for `p < 2`,
    /// or too close to a grid edge).
    pub fn theta_second(&self, x: f64) -> Option<f64> {
        match &self.spec {
            PriorSpec::Gaussian { sigma_x } => Some(1.0 / (sigma_x * sigma_x)),
            PriorSpec::StronglyLogConcave { beta, c, p } => {
                let base = 1.0 / (beta * beta);
                if *c == 0.0 || *p == 1.0 {
                    return Some(base);
                }
                if *p < 2.0 && x.abs() < 1e-6 {
                    return None;
                }
                if *p == 2.0 {
                    return Some(base + c);
                }
                Some(base + c * (p - 1.0) * x.abs().powf(p - 2.0))
            }
            PriorSpec::GaussianMixture { .. } => {
                let (_, d1, d2) = self.spec.mixture_terms(x);
                Some(d1 * d1 - d2)
            }
            PriorSpec::Grid { .. } => {
                let h = self.grid_fd_step();
                let (lo, hi) = self.window;
                if x - h < lo || x + h > hi {
                    return None;
                }
                Some(self.theta_second_fd(x, h))
            }
        }
    }

    /// Central second difference of `theta` with step `h`.
    pub fn theta_second_fd(&self, x: f64, h: f64) -> f64 {
        let t = |v: f64| self.spec.potential(v);
        (t(x + h) - 2.0 * t(x) + t(x - h)) / (h * h)
    }
}

/// Result of a strong log-concavity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcavityReport {
    pub holds: bool,
    pub min_theta_second: f64,
    pub argmin: f64,
}

/// Checks `theta'' >= 1 / beta_claim^2` (up to 1e-6) on `grid`. Points where
/// `theta''` is undefined are skipped.
pub fn check_strong_log_concavity(prior: &Prior, beta_claim: f64, grid: &[f64]) -> Result<ConcavityReport> {
    const OP: &str = "check_strong_log_concavity";
    if !(beta_claim > 0.0) {
        return Err(PmlError::domain(OP, format!("beta_claim must be positive, got {beta_claim}")));
    }
    if let PriorSpec::Grid { xs, .. } = prior.spec() {
        if xs.len() < 3 {
            return Err(PmlError::domain(OP, "grid prior needs at least 3 points"));
        }
    }
    let mut min = f64::INFINITY;
    let mut argmin = f64::NAN;
    for &x in grid {
        if let Some(v) = prior.theta_second(x) {
            if v < min {
                min = v;
                argmin = x;
            }
        }
    }
    if !min.is_finite() {
        return Err(PmlError::domain(OP, "theta'' is undefined at every grid point"));
    }
    Ok(ConcavityReport {
        holds: min >= 1.0 / (beta_claim * beta_claim) - 1e-6,
        min_theta_second: min,
        argmin,
    })
}

/// `n` equispaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| if k == n - 1 { hi } else { lo + k as f64 * step }).collect()
}
