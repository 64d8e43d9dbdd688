//! The Gaussian mechanism `Y = X + N`: marginal, posterior and information density.
//!
//! The prior is discretized once on composite Gauss-Legendre nodes over its
//! window. Every marginal and posterior quantity is an exact finite sum over
//! those nodes, so Tweedie's formula and the variance identity hold for the
//! discretized prior up to rounding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PmlError, Result};
use crate::numerics::{gauss_legendre, norm_cdf, norm_interval, norm_sf, QuadratureConfig, LN_SQRT_2PI};
use crate::priors::{Prior, PriorSpec};

/// Number of cached points for the marginal table.
pub const DEFAULT_Y_GRID_POINTS: usize = 4096;
const NODE_ORDER: usize = 4;
const MAX_PANELS: usize = 1 << 16;
/// Tail mass cut off by the scan window on each side.
const SCAN_TAIL_MASS: f64 = 1e-9;

/// JSON form of a mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismConfig {
    pub prior: PriorSpec,
    pub sigma_n: f64,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

impl MechanismConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate().map_err(|e| e.nested("/prior"))?;
        if !(self.sigma_n > 0.0 && self.sigma_n.is_finite()) {
            return Err(PmlError::invalid(
                "/sigma_n",
                format!("must be a positive finite number, got {}", self.sigma_n),
            ));
        }
        self.quadrature.validate().map_err(|e| e.nested("/quadrature"))
    }

    pub fn build(&self) -> Result<Mechanism> {
        self.validate()?;
        let prior = Prior::new(self.prior.clone(), &self.quadrature)?;
        Mechanism::new(prior, self.sigma_n, self.quadrature.clone())
    }
}

#[derive(Debug, Clone)]
struct MarginalTable {
    ys: Vec<f64>,
    log_density: Vec<f64>,
    density: Vec<f64>,
    score: Vec<f64>,
    cdf: Vec<f64>,
    sf: Vec<f64>,
}

/// Weighted sums `s_k = sum_i w_i (x_i - y)^k` with the weights scaled so
/// that the largest is one; `log_scale` restores the scale.
#[derive(Debug, Clone, Copy)]
struct KernelSums {
    log_scale: f64,
    s0: f64,
    s1: f64,
    s2: f64,
}

/// `Y = X + N` with `N ~ N(0, sigma_n^2)` independent of `X`.
#[derive(Debug, Clone)]
pub struct Mechanism {
    prior: Prior,
    sigma_n: f64,
    cfg: QuadratureConfig,
    xs: Vec<f64>,
    mass: Vec<f64>,
    log_mass: Vec<f64>,
    prior_mean: f64,
    prior_var: f64,
    y_window: (f64, f64),
    table: MarginalTable,
    scan_window: (f64, f64),
}

fn node_edges(prior: &Prior, sigma_n: f64, panel_count: usize) -> Vec<f64> {
    let max_width = sigma_n / 8.0;
    match prior.spec() {
        PriorSpec::Grid { xs, .. } => {
            let per_segment = panel_count.div_ceil(xs.len() - 1).max(1);
            let mut edges = vec![xs[0]];
            for w in xs.windows(2) {
                let m = per_segment.max(((w[1] - w[0]) / max_width).ceil() as usize).min(MAX_PANELS);
                let h = (w[1] - w[0]) / m as f64;
                for k in 1..m {
                    edges.push(w[0] + k as f64 * h);
                }
                edges.push(w[1]);
            }
            edges
        }
        _ => {
            let (lo, hi) = prior.window();
            let mut n = panel_count.max(((hi - lo) / max_width).ceil() as usize).min(MAX_PANELS);
            // Even count keeps 0 on a panel edge for symmetric windows.
            n += n % 2;
            crate::priors::linspace(lo, hi, n + 1)
        }
    }
}

impl Mechanism {
    pub fn new(prior: Prior, sigma_n: f64, cfg: QuadratureConfig) -> Result<Self> {
        Self::with_grid_points(prior, sigma_n, cfg, DEFAULT_Y_GRID_POINTS)
    }

    pub fn with_grid_points(prior: Prior, sigma_n: f64, cfg: QuadratureConfig, grid_points: usize) -> Result<Self> {
        if !(sigma_n > 0.0 && sigma_n.is_finite()) {
            return Err(PmlError::invalid("/sigma_n", format!("must be a positive finite number, got {sigma_n}")));
        }
        cfg.validate().map_err(|e| e.nested("/quadrature"))?;
        if grid_points < 16 {
            return Err(PmlError::domain("Mechanism::new", "need at least 16 grid points"));
        }

        let (t, w) = gauss_legendre(NODE_ORDER);
        let edges = node_edges(&prior, sigma_n, cfg.panel_count);
        let mut xs = Vec::with_capacity(edges.len() * NODE_ORDER);
        let mut log_mass = Vec::with_capacity(edges.len() * NODE_ORDER);
        for e in edges.windows(2) {
            let (mid, half) = (0.5 * (e[0] + e[1]), 0.5 * (e[1] - e[0]));
            for (ti, wi) in t.iter().zip(&w) {
                let x = mid + half * ti;
                let lm = (half * wi).ln() + prior.log_density(x);
                if lm.is_finite() && lm > -740.0 {
                    xs.push(x);
                    log_mass.push(lm);
                }
            }
        }
        if xs.is_empty() {
            return Err(PmlError::Model("prior has no mass on its window".into()));
        }
        let shift = log_mass.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = log_mass.iter().map(|l| (l - shift).exp()).sum();
        let log_total = shift + total.ln();
        for l in log_mass.iter_mut() {
            *l -= log_total;
        }
        let mass: Vec<f64> = log_mass.iter().map(|l| l.exp()).collect();
        let prior_mean: f64 = xs.iter().zip(&mass).map(|(x, m)| x * m).sum();
        let prior_var: f64 = xs.iter().zip(&mass).map(|(x, m)| m * (x - prior_mean).powi(2)).sum();

        let wn = cfg.truncation_halfwidth * sigma_n;
        let (plo, phi) = prior.window();
        let solve_range = (plo - wn, phi + wn);
        let y_window = if prior.is_approximate() { (plo, phi) } else { solve_range };

        let mut m = Self {
            prior,
            sigma_n,
            cfg,
            xs,
            mass,
            log_mass,
            prior_mean,
            prior_var,
            y_window,
            table: MarginalTable {
                ys: Vec::new(),
                log_density: Vec::new(),
                density: Vec::new(),
                score: Vec::new(),
                cdf: Vec::new(),
                sf: Vec::new(),
            },
            scan_window: solve_range,
        };
        m.fill_table(solve_range, grid_points);
        let lo = m.marginal_quantile(SCAN_TAIL_MASS)?;
        let hi = m.marginal_upper_quantile(SCAN_TAIL_MASS)?;
        m.scan_window = (lo.max(m.y_window.0), hi.min(m.y_window.1));
        Ok(m)
    }

    /// Tabulates `f_Y` and the score exactly; `F_Y` and `1 - F_Y` are
    /// accumulated from exact end values by integrating the cubic Hermite
    /// interpolant of `f_Y`, so the table is monotone and keeps relative
    /// accuracy in both tails.
    fn fill_table(&mut self, range: (f64, f64), n: usize) {
        let ys = crate::priors::linspace(range.0, range.1, n);
        let s2 = self.sigma_n * self.sigma_n;
        let rows: Vec<(f64, f64)> = ys
            .par_iter()
            .map(|&y| {
                let k = self.kernel_sums(y);
                (self.log_density_from(&k), k.s1 / (k.s0 * s2))
            })
            .collect();
        let log_density: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let density: Vec<f64> = log_density.iter().map(|l| l.exp()).collect();
        let score: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let step = |k: usize| {
            let h = ys[k + 1] - ys[k];
            let (d0, d1) = (density[k] * score[k], density[k + 1] * score[k + 1]);
            (0.5 * h * (density[k] + density[k + 1]) + h * h * (d0 - d1) / 12.0).max(0.0)
        };
        let mut cdf = vec![0.0; n];
        cdf[0] = self.cdf_raw(ys[0]);
        for k in 0..n - 1 {
            cdf[k + 1] = (cdf[k] + step(k)).min(1.0);
        }
        let mut sf = vec![0.0; n];
        sf[n - 1] = self.sf_raw(ys[n - 1]);
        for k in (0..n - 1).rev() {
            sf[k] = (sf[k + 1] + step(k)).min(1.0);
        }
        self.table = MarginalTable {
            ys,
            log_density,
            density,
            score,
            cdf,
            sf,
        };
    }

    /// Linear interpolation of the tabulated density, exact outside the table.
    fn density_estimate(&self, y: f64) -> f64 {
        let t = &self.table;
        let n = t.ys.len();
        if !(y > t.ys[0] && y < t.ys[n - 1]) {
            return self.density_from(&self.kernel_sums(y));
        }
        let h = t.ys[1] - t.ys[0];
        let k = (((y - t.ys[0]) / h) as usize).min(n - 2);
        let s = ((y - t.ys[k]) / h).clamp(0.0, 1.0);
        t.density[k] + s * (t.density[k + 1] - t.density[k])
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.cfg
    }

    /// Working window for `y`. For grid priors this is the declared support.
    pub fn y_window(&self) -> (f64, f64) {
        self.y_window
    }

    /// Window on which posterior suprema are scanned: the working window
    /// clipped to the marginal quantiles at `1e-9` and `1 - 1e-9`.
    pub fn scan_window(&self) -> (f64, f64) {
        self.scan_window
    }

    /// Cached `y` grid.
    pub fn y_grid(&self) -> &[f64] {
        &self.table.ys
    }

    /// `ln f_Y` on the cached grid.
    pub fn y_grid_log_density(&self) -> &[f64] {
        &self.table.log_density
    }

    /// Mean of the (discretized) prior.
    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Variance of the (discretized) prior.
    pub fn prior_variance(&self) -> f64 {
        self.prior_var
    }

    /// Standard deviation of `Y`.
    pub fn marginal_std(&self) -> f64 {
        (self.prior_var + self.sigma_n * self.sigma_n).sqrt()
    }

    /// Discretized prior as `(nodes, masses)`.
    pub fn prior_nodes(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.mass)
    }

    fn kernel_sums(&self, y: f64) -> KernelSums {
        let c = 0.5 / (self.sigma_n * self.sigma_n);
        let mut shift = f64::NEG_INFINITY;
        for (x, lm) in self.xs.iter().zip(&self.log_mass) {
            let e = lm - c * (x - y) * (x - y);
            if e > shift {
                shift = e;
            }
        }
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (x, lm) in self.xs.iter().zip(&self.log_mass) {
            let d = x - y;
            let w = (lm - c * d * d - shift).exp();
            s0 += w;
            s1 += w * d;
            s2 += w * d * d;
        }
        KernelSums { log_scale: shift, s0, s1, s2 }
    }

    fn log_density_from(&self, k: &KernelSums) -> f64 {
        k.log_scale + k.s0.ln() - self.sigma_n.ln() - LN_SQRT_2PI
    }

    fn density_from(&self, k: &KernelSums) -> f64 {
        self.log_density_from(k).exp()
    }

    fn check_y(op: &'static str, y: f64) -> Result<()> {
        if y.is_finite() {
            Ok(())
        } else {
            Err(PmlError::domain(op, format!("y must be finite, got {y}")))
        }
    }

    /// `f_Y(y)`.
    pub fn marginal_density(&self, y: f64) -> Result<f64> {
        Self::check_y("marginal_density", y)?;
        Ok(self.density_from(&self.kernel_sums(y)))
    }

    /// `ln f_Y(y)`, accurate where `f_Y` itself underflows.
    pub fn marginal_log_density(&self, y: f64) -> Result<f64> {
        Self::check_y("marginal_log_density", y)?;
        Ok(self.log_density_from(&self.kernel_sums(y)))
    }

    /// `f_Y'(y)` by differentiating the kernel under the sum.
    pub fn marginal_density_derivative(&self, y: f64) -> Result<f64> {
        Self::check_y("marginal_density_derivative", y)?;
        let k = self.kernel_sums(y);
        Ok(self.density_from(&k) * k.s1 / (k.s0 * self.sigma_n * self.sigma_n))
    }

    /// Score `f_Y'(y) / f_Y(y)`.
    pub fn marginal_score(&self, y: f64) -> Result<f64> {
        Self::check_y("marginal_score", y)?;
        let k = self.kernel_sums(y);
        Ok(k.s1 / (k.s0 * self.sigma_n * self.sigma_n))
    }

    fn cdf_raw(&self, y: f64) -> f64 {
        let inv = 1.0 / self.sigma_n;
        self.xs.iter().zip(&self.mass).map(|(x, m)| m * norm_cdf((y - x) * inv)).sum::<f64>().min(1.0)
    }

    fn sf_raw(&self, y: f64) -> f64 {
        let inv = 1.0 / self.sigma_n;
        self.xs.iter().zip(&self.mass).map(|(x, m)| m * norm_sf((y - x) * inv)).sum::<f64>().min(1.0)
    }

    /// `F_Y(y)`; infinite arguments give 0 or 1.
    pub fn marginal_cdf(&self, y: f64) -> f64 {
        if y == f64::NEG_INFINITY {
            0.0
        } else if y == f64::INFINITY {
            1.0
        } else {
            self.cdf_raw(y)
        }
    }

    /// `1 - F_Y(y)` without cancellation.
    pub fn marginal_sf(&self, y: f64) -> f64 {
        if y == f64::NEG_INFINITY {
            1.0
        } else if y == f64::INFINITY {
            0.0
        } else {
            self.sf_raw(y)
        }
    }

    /// `P(a < Y < b)`.
    pub fn prob_between(&self, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        match (a.is_infinite(), b.is_infinite()) {
            (true, true) => 1.0,
            (true, false) => self.cdf_raw(b),
            (false, true) => self.sf_raw(a),
            (false, false) => {
                let inv = 1.0 / self.sigma_n;
                self.xs
                    .iter()
                    .zip(&self.mass)
                    .map(|(x, m)| m * norm_interval((a - x) * inv, (b - x) * inv))
                    .sum::<f64>()
                    .min(1.0)
            }
        }
    }

    /// `P(a < Y < b | X = x)`.
    pub fn conditional_prob(&self, x: f64, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        norm_interval((a - x) / self.sigma_n, (b - x) / self.sigma_n)
    }

    /// `F_Y^{-1}(p)`.
    pub fn marginal_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(PmlError::domain("marginal_quantile", format!("probability must lie in (0, 1), got {p}")));
        }
        if p > 0.5 {
            return self.invert(1.0 - p, true);
        }
        self.invert(p, false)
    }

    /// The `y` with `P(Y > y) = q`.
    pub fn marginal_upper_quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(PmlError::domain(
                "marginal_upper_quantile",
                format!("probability must lie in (0, 1), got {q}"),
            ));
        }
        if q > 0.5 {
            return self.invert(1.0 - q, false);
        }
        self.invert(q, true)
    }

    /// Solves `F_Y(y) = target` (or `1 - F_Y(y) = target` when `upper`).
    /// Starts from the Hermite interpolant of the table and polishes with
    /// safeguarded Newton steps on the true function.
    fn invert(&self, target: f64, upper: bool) -> Result<f64> {
        const OP: &str = "marginal_quantile";
        let t = &self.table;
        let n = t.ys.len();
        // g is increasing in y in both cases, with g' = f_Y.
        let g = |y: f64| if upper { target - self.sf_raw(y) } else { self.cdf_raw(y) - target };
        let gt = |k: usize| if upper { target - t.sf[k] } else { t.cdf[k] - target };
        let h = t.ys[1] - t.ys[0];
        let k = {
            let (mut a, mut b) = (0, n);
            while a < b {
                let mid = (a + b) / 2;
                if gt(mid) < 0.0 {
                    a = mid + 1;
                } else {
                    b = mid;
                }
            }
            a
        };
        let mut y = if k == 0 {
            t.ys[0] - h
        } else if k == n {
            t.ys[n - 1] + h
        } else {
            hermite_root(t.ys[k - 1], t.ys[k], gt(k - 1), gt(k), t.density[k - 1], t.density[k])
        };
        let tol = 1e-13 * target;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut reach = h;
        let mut gy = g(y);
        for _ in 0..200 {
            if gy.abs() <= tol {
                return Ok(y);
            }
            if gy < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            if hi - lo <= 4.0 * f64::EPSILON * y.abs().max(f64::MIN_POSITIVE) {
                break;
            }
            let f = self.density_estimate(y);
            let cand = y - gy / f;
            y = if f > 0.0 && cand > lo && cand < hi {
                cand
            } else if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                reach *= 2.0;
                if lo.is_finite() {
                    lo + reach
                } else {
                    hi - reach
                }
            };
            if !y.is_finite() {
                break;
            }
            gy = g(y);
        }
        if !(gy.abs() <= 1e-9) {
            return Err(PmlError::Numerical {
                op: OP,
                msg: format!("inverse did not reach tolerance for target {target}"),
                last_estimate: Some(y),
            });
        }
        Ok(y)
    }

    /// `E[X | Y = y]` by Tweedie's formula `y + sigma_n^2 f_Y'(y) / f_Y(y)`.
    pub fn posterior_mean(&self, y: f64) -> Result<f64> {
        Self::check_y("posterior_mean", y)?;
        let k = self.kernel_sums(y);
        let s2 = self.sigma_n * self.sigma_n;
        let score = k.s1 / (k.s0 * s2);
        let v = s2 * score + y;
        if !v.is_finite() {
            return Err(PmlError::numerical("posterior_mean", format!("non-finite score at y = {y}")));
        }
        Ok(v)
    }

    /// `d/dy E[X | Y = y] = sigma_n^2 (f''/f - (f'/f)^2) + 1`, with both
    /// derivatives taken analytically through the kernel.
    pub fn posterior_mean_derivative(&self, y: f64) -> Result<f64> {
        Self::check_y("posterior_mean_derivative", y)?;
        let k = self.kernel_sums(y);
        let s2 = self.sigma_n * self.sigma_n;
        let score = k.s1 / (k.s0 * s2);
        let curv = k.s2 / (k.s0 * s2 * s2) - 1.0 / s2;
        Ok(s2 * (curv - score * score) + 1.0)
    }

    /// Posterior weights at `y`, scaled so that the largest is one.
    fn posterior_weights(&self, y: f64) -> Vec<f64> {
        let c = 0.5 / (self.sigma_n * self.sigma_n);
        let mut w: Vec<f64> = self
            .xs
            .iter()
            .zip(&self.log_mass)
            .map(|(x, lm)| lm - c * (x - y) * (x - y))
            .collect();
        let shift = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in w.iter_mut() {
            *v = (*v - shift).exp();
        }
        w
    }

    /// Posterior mean and variance from the posterior weights directly.
    pub fn posterior_moments_direct(&self, y: f64) -> Result<(f64, f64)> {
        Self::check_y("posterior_moments_direct", y)?;
        Ok(self.direct_moments(&self.posterior_weights(y)))
    }

    fn direct_moments(&self, w: &[f64]) -> (f64, f64) {
        let total: f64 = w.iter().sum();
        let mean = w.iter().zip(&self.xs).map(|(w, x)| w * x).sum::<f64>() / total;
        let var = w.iter().zip(&self.xs).map(|(w, x)| w * (x - mean) * (x - mean)).sum::<f64>() / total;
        (mean, var)
    }

    /// `Var[X | Y = y]`. Returns the direct second moment and fails when it
    /// disagrees with `sigma_n^2 * d/dy E[X | Y = y]`.
    pub fn posterior_variance(&self, y: f64) -> Result<f64> {
        Self::check_y("posterior_variance", y)?;
        let w = self.posterior_weights(y);
        let (_, direct) = self.direct_moments(&w);
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (w, x) in w.iter().zip(&self.xs) {
            let d = x - y;
            s0 += w;
            s1 += w * d;
            s2 += w * d * d;
        }
        let ss = self.sigma_n * self.sigma_n;
        let score = s1 / (s0 * ss);
        let curv = s2 / (s0 * ss * ss) - 1.0 / ss;
        let via_mean = ss * (ss * (curv - score * score) + 1.0);
        let scale = ss.max(direct.abs());
        if !((direct - via_mean).abs() <= 1e-5 * scale) {
            return Err(PmlError::numerical(
                "posterior_variance",
                format!("routes disagree at y = {y}: direct {direct:e}, derivative {via_mean:e}"),
            ));
        }
        Ok(direct.max(0.0))
    }

    /// Information density `i(x; y) = ln f_{Y|X}(y|x) - ln f_Y(y)`.
    pub fn info_density(&self, x: f64, y: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(PmlError::domain("info_density", format!("x must be finite, got {x}")));
        }
        Self::check_y("info_density", y)?;
        let z = (y - x) / self.sigma_n;
        Ok(-0.5 * z * z - LN_SQRT_2PI - self.sigma_n.ln() - self.marginal_log_density(y)?)
    }

    /// Smallest `M >= 0` such that `f_Y` is increasing on the cached grid
    /// below `-M` and decreasing above `M` within the working window.
    /// `None` when the monotone tails cannot be certified, including when a
    /// sign change sits within three grid steps or three noise scales of the
    /// window edge, where it cannot be told apart from the edge itself.
    pub fn unimodal_tail_threshold(&self) -> Option<f64> {
        let t = &self.table;
        let (wlo, whi) = self.y_window;
        let idx: Vec<usize> = (0..t.ys.len()).filter(|&i| t.ys[i] >= wlo && t.ys[i] <= whi).collect();
        if idx.len() < 8 {
            return None;
        }
        let h = t.ys[1] - t.ys[0];
        let last_up = idx.iter().rposition(|&i| t.score[i] >= 0.0);
        let first_down = idx.iter().position(|&i| t.score[i] <= 0.0);
        let (Some(ku), Some(kd)) = (last_up, first_down) else {
            return None;
        };
        let y_plus = t.ys[idx[ku]];
        let y_minus = t.ys[idx[kd]];
        let margin = (3.0 * h).max(3.0 * self.sigma_n);
        if ku + 3 >= idx.len() || kd < 3 || y_plus > whi - margin || y_minus < wlo + margin {
            return None;
        }
        Some(y_plus.max(-y_minus).max(0.0) + h)
    }
}

/// Root of the cubic Hermite interpolant through `(a, ga, da)` and `(b, gb, db)`
/// with `ga < 0 <= gb`, by bisection.
fn hermite_root(a: f64, b: f64, ga: f64, gb: f64, da: f64, db: f64) -> f64 {
    let h = b - a;
    let eval = |s: f64| {
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * ga + (s3 - 2.0 * s2 + s) * h * da + (-2.0 * s3 + 3.0 * s2) * gb + (s3 - s2) * h * db
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    a + 0.5 * (lo + hi) * h
}

impl PmlError {
    /// Prefixes the JSON pointer of an `Invalid` error.
    pub fn nested(self, prefix: &str) -> Self {
        match self {
            PmlError::Invalid { field, msg } => PmlError::Invalid {
                field: format!("{prefix}{field}"),
                msg,
            },
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(sx: f64, sn: f64) -> Mechanism {
        MechanismConfig {
            prior: PriorSpec::Gaussian { sigma_x: sx },
            sigma_n: sn,
            quadrature: QuadratureConfig::default(),
        }
        .build()
        .unwrap()
    }

    #[test]
    fn gaussian_marginal_closed_form() {
        let m = gaussian(1.0, 1.0);
        let s = 2f64.sqrt();
        for &y in &[-6.0, -2.0, 0.0, 0.3, 4.0] {
            let exact = crate::numerics::norm_pdf(y / s) / s;
            assert!((m.marginal_density(y).unwrap() - exact).abs() < 1e-12, "y={y}");
            assert!((m.marginal_cdf(y) - norm_cdf(y / s)).abs() < 1e-12);
        }
        assert!((m.marginal_density(0.0).unwrap() - 0.28209479177387814).abs() < 1e-12);
        assert!((m.marginal_cdf(0.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn quantiles() {
        let m = gaussian(1.0, 1.0);
        let q = m.marginal_quantile(0.95).unwrap();
        assert!((q - 2.0f64.sqrt() * 1.6448536269514722).abs() < 1e-9);
        for k in 1..100 {
            let p = k as f64 / 100.0;
            let y = m.marginal_quantile(p).unwrap();
            assert!((m.marginal_cdf(y) - p).abs() < 1e-12);
        }
        let y = m.marginal_upper_quantile(1e-12).unwrap();
        assert!((m.marginal_sf(y) / 1e-12 - 1.0).abs() < 1e-9);
        assert!(m.marginal_quantile(1.0).is_err());
        assert!(m.marginal_quantile(0.0).is_err());
    }

    #[test]
    fn gaussian_posterior() {
        let m = gaussian(1.0, 1.0);
        for &y in &[-5.0, -1.0, 0.0, 2.5, 7.0] {
            assert!((m.posterior_mean(y).unwrap() - 0.5 * y).abs() < 1e-8);
            assert!((m.posterior_variance(y).unwrap() - 0.5).abs() < 1e-8);
        }
        let b = gaussian(3f64.sqrt(), 1.0);
        assert!((b.posterior_variance(1.0).unwrap() - 0.75).abs() < 1e-8);
    }

    #[test]
    fn info_density_closed_form() {
        let m = gaussian(1.0, 1.0);
        assert!((m.info_density(0.0, 0.0).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn mixture_marginal() {
        let m = MechanismConfig {
            prior: PriorSpec::GaussianMixture {
                weights: vec![0.5, 0.5],
                means: vec![-2.0, 2.0],
                sigmas: vec![1.0, 1.0],
            },
            sigma_n: 1.0,
            quadrature: QuadratureConfig::default(),
        }
        .build()
        .unwrap();
        assert!((m.marginal_density(0.0).unwrap() - 0.10377687435514868).abs() < 1e-9);
        let mm = m.unimodal_tail_threshold().unwrap();
        assert!(mm > 1.5 && mm < 2.5, "M = {mm}");
    }

    #[test]
    fn gaussian_threshold_is_grid_resolution() {
        let m = gaussian(1.0, 1.0);
        let h = m.y_grid()[1] - m.y_grid()[0];
        assert!((m.unimodal_tail_threshold().unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn config_validation_pointers() {
        let cfg = MechanismConfig {
            prior: PriorSpec::Gaussian { sigma_x: -1.0 },
            sigma_n: 1.0,
            quadrature: QuadratureConfig::default(),
        };
        match cfg.validate() {
            Err(PmlError::Invalid { field, .. }) => assert_eq!(field, "/prior/sigma_x"),
            other => panic!("{other:?}"),
        }
    }
}
