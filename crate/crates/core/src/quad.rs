//! Quadrature and numerical differentiation on uniform grids.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Adaptive Simpson quadrature of `f` on `[a, b]` to relative tolerance
/// `rel_tol` (absolute floor `1e-300`).
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let (value, achieved) = adaptive_simpson_budget(f, a, b, rel_tol, DEFAULT_BUDGET);
    if !value.is_finite() || achieved > rel_tol * 10.0 {
        return Err(Error::QuadratureNonConvergence { achieved, requested: rel_tol });
    }
    Ok(value)
}

const DEFAULT_BUDGET: usize = 1 << 20;

/// As [`adaptive_simpson`], but stops refining after about `max_evals`
/// evaluations and returns `(value, achieved relative error estimate)`
/// instead of failing. Meant for integrands whose round-off noise sits above
/// the requested tolerance.
pub fn adaptive_simpson_budget(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, max_evals: usize) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // Coarse scale estimate for the absolute target.
    let scale = whole.abs().max(1e-300);
    let mut st = SimpsonState { worst: 0.0, budget: max_evals };
    let value = simpson_rec(f, a, b, fa, fm, fb, whole, rel_tol * scale, 50, &mut st);
    (value, st.worst / value.abs().max(1e-300))
}

struct SimpsonState {
    worst: f64,
    budget: usize,
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32, st: &mut SimpsonState) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    st.budget = st.budget.saturating_sub(2);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 || st.budget == 0 {
        st.worst += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, st) + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, st)
}

/// Cumulative integral `I_i = ∫_{x_0}^{x_i} f` of uniformly spaced samples.
///
/// Composite Simpson for even `i`; for odd `i >= 3` the first three panels use
/// the 3/8 rule. `I_1` uses the four-point one-sided formula, so the rule is
/// fourth order everywhere when `len >= 4`.
pub fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n < 4 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * h * (f[i - 1] + f[i]);
        }
        return out;
    }
    out[1] = h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]);
    // even prefix sums via Simpson
    let mut even = 0.0;
    let mut i = 2;
    while i < n {
        even += h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
        out[i] = even;
        i += 2;
    }
    if n > 3 {
        let three_eighths = 3.0 * h / 8.0 * (f[0] + 3.0 * f[1] + 3.0 * f[2] + f[3]);
        let mut acc = three_eighths;
        out[3] = acc;
        let mut i = 5;
        while i < n {
            acc += h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
            out[i] = acc;
            i += 2;
        }
    }
    out
}

/// Periodic trapezoid sum `Δθ Σ g_j` (spectrally accurate for smooth periodic `g`).
pub fn periodic_trapezoid(g: &[f64], period: f64) -> f64 {
    period / g.len() as f64 * g.iter().sum::<f64>()
}

/// First derivative at interior index `i` of uniformly spaced samples by central
/// differences with one Richardson level (fourth order).
///
/// Falls back to the plain central difference at `i = 1` or `i = len - 2`, and
/// returns `None` at the endpoints. The second value is the Richardson
/// correction magnitude, a differentiation error estimate.
pub fn richardson_derivative(f: &[f64], h: f64, i: usize) -> Option<(f64, f64)> {
    let n = f.len();
    if i == 0 || i + 1 >= n {
        return None;
    }
    let d1 = (f[i + 1] - f[i - 1]) / (2.0 * h);
    if i < 2 || i + 2 >= n {
        return Some((d1, f64::NAN));
    }
    let d2 = (f[i + 2] - f[i - 2]) / (4.0 * h);
    let rich = (4.0 * d1 - d2) / 3.0;
    Some((rich, (rich - d1).abs()))
}

/// Fourth-order first-derivative weights for offsets `-2..=2` on a uniform grid.
pub const D1_CENTRAL4: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];

/// Sixth-order first-derivative weights for offsets `-3..=3`.
pub const D1_CENTRAL6: [f64; 7] = [-1.0 / 60.0, 9.0 / 60.0, -45.0 / 60.0, 0.0, 45.0 / 60.0, -9.0 / 60.0, 1.0 / 60.0];

/// Fourth-order first derivative at sample `i` using whichever five-point
/// stencil fits inside `0..len` (centered when possible).
pub fn fd4_first(f: &[f64], h: f64, i: usize) -> f64 {
    let n = f.len();
    debug_assert!(n >= 5);
    let start = i.saturating_sub(2).min(n - 5);
    let k = i - start; // position of i inside the stencil
    let w: [f64; 5] = match k {
        0 => [-25.0, 48.0, -36.0, 16.0, -3.0],
        1 => [-3.0, -10.0, 18.0, -6.0, 1.0],
        2 => [1.0, -8.0, 0.0, 8.0, -1.0],
        3 => [-1.0, 6.0, -18.0, 10.0, 3.0],
        _ => [3.0, -16.0, 36.0, -48.0, 25.0],
    };
    (0..5).map(|j| w[j] * f[start + j]).sum::<f64>() / (12.0 * h)
}

/// Fourth-order first derivative at `i` over the five-point window closest to
/// centered for which `clean(start)` holds, with `|fd4 - fd2|` on the same
/// window as an error estimate. `None` when no window is clean.
pub fn fd4_first_clean(f: &[f64], h: f64, i: usize, clean: impl Fn(usize) -> bool) -> Option<(f64, f64)> {
    let n = f.len();
    if n < 5 || i >= n {
        return None;
    }
    let top = n - 5;
    let centered = i.saturating_sub(2).min(top);
    let mut order = vec![centered];
    for off in 1..=2usize {
        if centered >= off {
            order.push(centered - off);
        }
        if centered + off <= top {
            order.push(centered + off);
        }
    }
    let start = order.into_iter().find(|&s| s <= i && i < s + 5 && clean(s))?;
    let k = i - start;
    let w: [f64; 5] = match k {
        0 => [-25.0, 48.0, -36.0, 16.0, -3.0],
        1 => [-3.0, -10.0, 18.0, -6.0, 1.0],
        2 => [1.0, -8.0, 0.0, 8.0, -1.0],
        3 => [-1.0, 6.0, -18.0, 10.0, 3.0],
        _ => [3.0, -16.0, 36.0, -48.0, 25.0],
    };
    let d4 = (0..5).map(|j| w[j] * f[start + j]).sum::<f64>() / (12.0 * h);
    let d2 = match k {
        0 => (-3.0 * f[i] + 4.0 * f[i + 1] - f[i + 2]) / (2.0 * h),
        4 => (3.0 * f[i] - 4.0 * f[i - 1] + f[i - 2]) / (2.0 * h),
        _ => (f[i + 1] - f[i - 1]) / (2.0 * h),
    };
    Some((d4, (d4 - d2).abs()))
}
