use crate::error::{PmlError, Result};

/// Bisection for a nondecreasing `g` with `g(lo) <= 0 <= g(hi)`. Stops when
/// the bracket is narrower than `tol`.
pub fn find_root_increasing<G: FnMut(f64) -> f64>(mut g: G, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    const OP: &str = "find_root_increasing";
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(PmlError::domain(OP, format!("bad bracket [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(PmlError::domain(OP, format!("tolerance must be positive, got {tol}")));
    }
    let (mut lo, mut hi) = (lo, hi);
    let glo = g(lo);
    let ghi = g(hi);
    if !(glo <= 0.0) || !(ghi >= 0.0) {
        return Err(PmlError::precondition(
            OP,
            format!("root not bracketed: g({lo}) = {glo}, g({hi}) = {ghi}"),
        ));
    }
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Regula falsi with the Illinois modification for a nondecreasing `g` with
/// `g(lo) <= 0 <= g(hi)`. Stops when `|g| <= gtol` or the bracket is
/// narrower than `xtol`; converges superlinearly for smooth `g`.
pub fn find_root_illinois<G: FnMut(f64) -> f64>(mut g: G, lo: f64, hi: f64, xtol: f64, gtol: f64) -> Result<f64> {
    const OP: &str = "find_root_illinois";
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(PmlError::domain(OP, format!("bad bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut ga, mut gb) = (g(a), g(b));
    if !(ga <= 0.0) || !(gb >= 0.0) {
        return Err(PmlError::precondition(
            OP,
            format!("root not bracketed: g({lo}) = {ga}, g({hi}) = {gb}"),
        ));
    }
    if ga.abs() <= gtol {
        return Ok(a);
    }
    if gb.abs() <= gtol {
        return Ok(b);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let mut c = (a * gb - b * ga) / (gb - ga);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let gc = g(c);
        if gc.abs() <= gtol || gc.is_nan() {
            return Ok(c);
        }
        if gc < 0.0 {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        if b - a <= xtol {
            break;
        }
    }
    Ok(if -ga < gb { a } else { b })
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
/// Returns the abscissa and the value there.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while b - a > tol && iters < 200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Maximizes `f` over `[lo, hi]` by scanning `n` equispaced points and then
/// running a golden-section search around the best one. Only the basin of
/// the best grid point is refined.
pub fn maximize_on_grid<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, n: usize, tol: f64) -> (f64, f64) {
    let n = n.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = (lo, f(lo));
    let mut best_k = 0;
    for k in 1..n {
        let x = if k == n - 1 { hi } else { lo + k as f64 * step };
        let v = f(x);
        if v > best.1 {
            best = (x, v);
            best_k = k;
        }
    }
    let a = lo + best_k.saturating_sub(1) as f64 * step;
    let b = (lo + (best_k + 1) as f64 * step).min(hi);
    let refined = golden_section_max(&mut f, a, b, tol);
    if refined.1 > best.1 {
        refined
    } else {
        best
    }
}
