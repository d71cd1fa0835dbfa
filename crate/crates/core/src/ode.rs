//! One-dimensional and radial ODEs for `f_q(u) = |u|^{q-2}u`.
//!
//! The integrator is classical RK4 on a uniform output grid. Near a zero of
//! `u` the right-hand side is only Hölder continuous, so inside a small window
//! around each simple zero the equation is integrated with `u` as independent
//! variable and state `(t, Q)`, `Q = u'^2 + 2|u|^q/q`. There `Q' = -2(N-1)u'/t`
//! is regular and, for `N = 1`, constant, so zero crossings cost no energy.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, abs_pow, signed_pow};

/// How a trajectory was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TrajectoryKind {
    /// `-u'' = f_q(u)` on the line.
    Plane,
    /// `u'' + (N-1)/r u' = -f_q(u)` from `r = 0`.
    Radial,
    /// Values sampled from a closed form.
    Sampled,
}

/// A zero crossing located by the integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ZeroEvent {
    pub t: f64,
    pub du: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OdeTrajectory {
    pub kind: TrajectoryKind,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub h: f64,
    pub q: f64,
    /// `1` for the plane ODE.
    pub dimension: usize,
    /// Initial data `(u(t_0), u'(t_0))`.
    pub initial: (f64, f64),
    pub events: Vec<ZeroEvent>,
}

impl OdeTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        *self.t.last().unwrap_or(&0.0)
    }

    pub fn energy_at(&self, i: usize) -> f64 {
        0.5 * self.du[i] * self.du[i] + abs_pow(self.u[i], self.q) / self.q
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Cubic Hermite dense output `(u, u')` at `t` (clamped to the grid).
    pub fn dense(&self, t: f64) -> (f64, f64) {
        let n = self.len();
        if n == 1 {
            return (self.u[0], self.du[0]);
        }
        let x = ((t - self.t[0]) / self.h).clamp(0.0, (n - 1) as f64);
        let i = (libm::floor(x) as usize).min(n - 2);
        hermite(self.h, self.u[i], self.du[i], self.u[i + 1], self.du[i + 1], x - i as f64)
    }
}

/// Cubic Hermite value and derivative at fraction `s` of a step `h`.
pub(crate) fn hermite(h: f64, u0: f64, d0: f64, u1: f64, d1: f64, s: f64) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let u = h00 * u0 + h10 * h * d0 + h01 * u1 + h11 * h * d1;
    let du = ((6.0 * s2 - 6.0 * s) * u0 + (3.0 * s2 - 4.0 * s + 1.0) * h * d0 + (-6.0 * s2 + 6.0 * s) * u1 + (3.0 * s2 - 2.0 * s) * h * d1) / h;
    (u, du)
}

fn check_q_open(q: f64) -> Result<()> {
    if !(q > 1.0 && q < 2.0) {
        return Err(Error::invalid("q", "the counterexample needs q in (1,2)"));
    }
    Ok(())
}

fn check_q(q: f64) -> Result<()> {
    if !(1.0..2.0).contains(&q) {
        return Err(Error::invalid("q", "q must lie in [1,2)"));
    }
    Ok(())
}

/// Constant and exponent of the profile `c (t - t0)^p` solving `u'' = f_q(u)`.
pub fn counterexample_constants(q: f64) -> Result<(f64, f64)> {
    check_q_open(q)?;
    let c = math::powf(2.0 * q / ((2.0 - q) * (2.0 - q)), 1.0 / (q - 2.0));
    Ok((c, 2.0 / (2.0 - q)))
}

/// `(u(t), u''(t))` for the glued profile: `c (t-t0)^p` for `t > t0`, zero otherwise.
pub fn counterexample_profile(q: f64, t0: f64, t: f64) -> Result<(f64, f64)> {
    let (c, p) = counterexample_constants(q)?;
    if t <= t0 {
        return Ok((0.0, 0.0));
    }
    let tau = t - t0;
    Ok((c * math::powf(tau, p), c * p * (p - 1.0) * math::powf(tau, p - 2.0)))
}

/// First derivative of the glued profile.
pub fn counterexample_derivative(q: f64, t0: f64, t: f64) -> Result<f64> {
    let (c, p) = counterexample_constants(q)?;
    if t <= t0 {
        return Ok(0.0);
    }
    Ok(c * p * math::powf(t - t0, p - 1.0))
}

/// Samples the glued profile on `n + 1` uniform points of `[t_min, t_max]`.
pub fn counterexample_trajectory(q: f64, t0: f64, t_min: f64, t_max: f64, n: usize) -> Result<OdeTrajectory> {
    if n == 0 || !(t_max > t_min) {
        return Err(Error::invalid("grid", "need t_max > t_min and at least one step"));
    }
    let h = (t_max - t_min) / n as f64;
    let mut t = Vec::with_capacity(n + 1);
    let mut u = Vec::with_capacity(n + 1);
    let mut du = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let ti = t_min + i as f64 * h;
        t.push(ti);
        u.push(counterexample_profile(q, t0, ti)?.0);
        du.push(counterexample_derivative(q, t0, ti)?);
    }
    Ok(OdeTrajectory {
        kind: TrajectoryKind::Sampled,
        initial: (u[0], du[0]),
        t,
        u,
        du,
        h,
        q,
        dimension: 1,
        events: Vec::new(),
    })
}

/// `max |u'' - f_q(u)| / max(1, |u''|)` over the sample points.
pub fn counterexample_residual(q: f64, t0: f64, ts: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &t in ts {
        let (u, upp) = counterexample_profile(q, t0, t)?;
        let r = (upp - signed_pow(u, q)).abs() / upp.abs().max(1.0);
        worst = worst.max(r);
    }
    Ok(worst)
}

/// `E_i = u_i'^2/2 + |u_i|^q/q`.
pub fn conserved_energy(traj: &OdeTrajectory) -> Vec<f64> {
    (0..traj.len()).map(|i| traj.energy_at(i)).collect()
}

/// `max_i |E_i - E_0|`.
pub fn energy_drift(traj: &OdeTrajectory) -> f64 {
    let e = conserved_energy(traj);
    e.iter().fold(0.0, |m, v| m.max((v - e[0]).abs()))
}

/// Right-hand side of `u'' = -(N-1)/t u' - f_q(u)`.
#[derive(Clone, Copy)]
struct System {
    q: f64,
    damping: f64,
}

impl System {
    fn accel(&self, t: f64, u: f64, p: f64) -> f64 {
        let damp = if self.damping == 0.0 { 0.0 } else { self.damping / t * p };
        -damp - signed_pow(u, self.q)
    }

    fn rk4(&self, t: f64, u: f64, p: f64, h: f64) -> (f64, f64) {
        let k1u = p;
        let k1p = self.accel(t, u, p);
        let k2u = p + 0.5 * h * k1p;
        let k2p = self.accel(t + 0.5 * h, u + 0.5 * h * k1u, k2u);
        let k3u = p + 0.5 * h * k2p;
        let k3p = self.accel(t + 0.5 * h, u + 0.5 * h * k2u, k3u);
        let k4u = p + h * k3p;
        let k4p = self.accel(t + h, u + h * k3u, k4u);
        (
            u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
            p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        )
    }

    fn big_f(&self, u: f64) -> f64 {
        abs_pow(u, self.q) / self.q
    }

    /// `(dt/du, dQ/du)` with `u' = sp sqrt(Q - 2F(u))`.
    fn u_rhs(&self, u: f64, t: f64, big_q: f64, sp: f64) -> (f64, f64) {
        let p = sp * math::sqrt((big_q - 2.0 * self.big_f(u)).max(0.0));
        let dq = if self.damping == 0.0 { 0.0 } else { -2.0 * self.damping * p / t };
        (1.0 / p, dq)
    }

    /// RK4 in `u` from `u0` to `u1` (same closed half-line), `m` substeps.
    fn integrate_u(&self, u0: f64, u1: f64, t: f64, big_q: f64, sp: f64, m: usize) -> (f64, f64) {
        let du = (u1 - u0) / m as f64;
        let (mut t, mut qq) = (t, big_q);
        for k in 0..m {
            let u = u0 + k as f64 * du;
            let (a1, b1) = self.u_rhs(u, t, qq, sp);
            let (a2, b2) = self.u_rhs(u + 0.5 * du, t + 0.5 * du * a1, qq + 0.5 * du * b1, sp);
            let (a3, b3) = self.u_rhs(u + 0.5 * du, t + 0.5 * du * a2, qq + 0.5 * du * b2, sp);
            let (a4, b4) = self.u_rhs(u + du, t + du * a3, qq + du * b3, sp);
            t += du / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            qq += du / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        }
        (t, qq)
    }

    /// Half-width of the zero window at energy level `e`.
    fn window(&self, e: f64) -> f64 {
        WINDOW_FRACTION * math::powf(self.q * e, 1.0 / self.q)
    }
}

/// Window half-width as a fraction of the amplitude `(qE)^{1/q}`.
const WINDOW_FRACTION: f64 = 0.4;
/// RK4 substeps per segment in `u`-mode.
const U_SUBSTEPS: usize = 4;

/// Advances from `(t, u, p)` to `t_target` with `u` as independent variable,
/// crossing at most one zero, which is recorded.
fn advance_u_mode(sys: &System, t: f64, u: f64, p: f64, t_target: f64, events: &mut Vec<ZeroEvent>) -> (f64, f64) {
    let sp = math::sgn(p);
    let mut t_cur = t;
    let mut u_cur = u;
    let mut q_cur = p * p + 2.0 * sys.big_f(u);
    // Heading towards zero?
    if u != 0.0 && u * p < 0.0 {
        let (t0, q0) = sys.integrate_u(u, 0.0, t, q_cur, sp, U_SUBSTEPS);
        if t0 <= t_target {
            events.push(ZeroEvent {
                t: t0,
                du: sp * math::sqrt(q0.max(0.0)),
            });
            t_cur = t0;
            u_cur = 0.0;
            q_cur = q0;
        } else {
            return solve_u_end(sys, t_cur, u_cur, q_cur, sp, t_target, Some(0.0));
        }
    }
    solve_u_end(sys, t_cur, u_cur, q_cur, sp, t_target, None)
}

/// Newton search for `u_end` with `t(u_end) = t_target`; `bound` keeps iterates
/// on the near side of a zero that is not reached.
fn solve_u_end(sys: &System, t: f64, u: f64, big_q: f64, sp: f64, t_target: f64, bound: Option<f64>) -> (f64, f64) {
    let p0 = sp * math::sqrt((big_q - 2.0 * sys.big_f(u)).max(0.0));
    let mut u_end = u + p0 * (t_target - t);
    let clamp = |v: f64| match bound {
        Some(b) if (v - b) * (u - b) <= 0.0 => 0.5 * (u + b) + 0.5 * (b - u) * 0.999,
        _ => v,
    };
    u_end = clamp(u_end);
    let mut p_end = p0;
    for _ in 0..30 {
        let (t_end, q_end) = sys.integrate_u(u, u_end, t, big_q, sp, U_SUBSTEPS);
        p_end = sp * math::sqrt((q_end - 2.0 * sys.big_f(u_end)).max(0.0));
        let res = t_end - t_target;
        let step = res * p_end;
        u_end = clamp(u_end - step);
        if res.abs() <= 1e-15 * t_target.abs().max(1.0) || step.abs() <= 1e-17 * u_end.abs().max(1e-300) {
            let (_, q_end) = sys.integrate_u(u, u_end, t, big_q, sp, U_SUBSTEPS);
            p_end = sp * math::sqrt((q_end - 2.0 * sys.big_f(u_end)).max(0.0));
            break;
        }
    }
    (u_end, p_end)
}

/// Integrates on the uniform grid `t_0 + i h`, `i = start..=n`, from the state
/// stored at index `start`.
fn march(sys: &System, t: &[f64], u: &mut [f64], du: &mut [f64], start: usize, h: f64, events: &mut Vec<ZeroEvent>) -> Result<()> {
    for i in start..t.len() - 1 {
        let (ti, ui, pi) = (t[i], u[i], du[i]);
        let e = 0.5 * pi * pi + sys.big_f(ui);
        let w = sys.window(e);
        // u' must stay well away from zero inside the window.
        let window_ok = 2.0 * sys.big_f(w) <= 0.75 * (pi * pi + 2.0 * sys.big_f(ui)) && pi != 0.0;
        let next = if window_ok && ui.abs() < w {
            advance_u_mode(sys, ti, ui, pi, t[i + 1], events)
        } else {
            let trial = sys.rk4(ti, ui, pi, h);
            if window_ok && trial.0 * ui < 0.0 {
                advance_u_mode(sys, ti, ui, pi, t[i + 1], events)
            } else {
                trial
            }
        };
        if !next.0.is_finite() || !next.1.is_finite() {
            return Err(Error::IntegrationBlowUp { last_good_radius: ti });
        }
        u[i + 1] = next.0;
        du[i + 1] = next.1;
    }
    Ok(())
}

fn grid(t_max: f64, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) || !(t_max > 0.0) {
        return Err(Error::invalid("h", "step and final time must be positive"));
    }
    let n = libm::round(t_max / h) as usize;
    if n == 0 {
        return Err(Error::invalid("h", "step larger than the interval"));
    }
    Ok((0..=n).map(|i| i as f64 * h).collect())
}

/// Integrates `-u'' = f_q(u)`, `u(0) = a`, `u'(0) = b` on `[0, t_max]`.
pub fn integrate_plane(q: f64, a: f64, b: f64, t_max: f64, h: f64) -> Result<OdeTrajectory> {
    check_q(q)?;
    let t = grid(t_max, h)?;
    let mut u = vec![0.0; t.len()];
    let mut du = vec![0.0; t.len()];
    u[0] = a;
    du[0] = b;
    let sys = System { q, damping: 0.0 };
    let mut events = Vec::new();
    march(&sys, &t, &mut u, &mut du, 0, h, &mut events)?;
    Ok(OdeTrajectory {
        kind: TrajectoryKind::Plane,
        t,
        u,
        du,
        h,
        q,
        dimension: 1,
        initial: (a, b),
        events,
    })
}

/// Number of steps covered by the series start.
pub const SERIES_STEPS: usize = 10;

/// Radial profile of `-Δu = f_q(u)` in `R^N` with `u(0) = a`, `u'(0) = 0`.
///
/// On `[0, 10h]` the three-term expansion
/// `a - f(a) r²/(2N) + f'(a) f(a) r⁴/(8N(N+2))` is used; RK4 takes over from there.
/// `N = 1` is the plane ODE.
pub fn integrate_radial(n: usize, q: f64, a: f64, r_max: f64, h: f64) -> Result<OdeTrajectory> {
    check_q(q)?;
    if n == 0 {
        return Err(Error::invalid("dimension", "N must be positive"));
    }
    if a == 0.0 || !a.is_finite() {
        return Err(Error::invalid("a", "u(0) must be finite and nonzero"));
    }
    if n == 1 {
        let mut traj = integrate_plane(q, a, 0.0, r_max, h)?;
        traj.kind = TrajectoryKind::Radial;
        return Ok(traj);
    }
    let t = grid(r_max, h)?;
    let mut u = vec![0.0; t.len()];
    let mut du = vec![0.0; t.len()];
    let nf = n as f64;
    let fa = signed_pow(a, q);
    let dfa = if q == 1.0 { 0.0 } else { (q - 1.0) * abs_pow(a, q - 2.0) };
    let b2 = -fa / (2.0 * nf);
    let b4 = dfa * fa / (8.0 * nf * (nf + 2.0));
    let start = SERIES_STEPS.min(t.len() - 1);
    for i in 0..=start {
        let r = t[i];
        let r2 = r * r;
        u[i] = a + b2 * r2 + b4 * r2 * r2;
        du[i] = 2.0 * b2 * r + 4.0 * b4 * r2 * r;
    }
    let sys = System { q, damping: nf - 1.0 };
    let mut events = Vec::new();
    march(&sys, &t, &mut u, &mut du, start, h, &mut events)?;
    Ok(OdeTrajectory {
        kind: TrajectoryKind::Radial,
        t,
        u,
        du,
        h,
        q,
        dimension: n,
        initial: (a, 0.0),
        events,
    })
}

/// Radial profile plus a step-halving error estimate `max |u_h - u_{h/2}| / 15`
/// over the common grid points.
pub fn integrate_radial_with_estimate(n: usize, q: f64, a: f64, r_max: f64, h: f64) -> Result<(OdeTrajectory, f64)> {
    let coarse = integrate_radial(n, q, a, r_max, h)?;
    let fine = integrate_radial(n, q, a, r_max, 0.5 * h)?;
    let mut est: f64 = 0.0;
    for i in 0..coarse.len() {
        if 2 * i < fine.len() {
            est = est.max((coarse.u[i] - fine.u[2 * i]).abs());
        }
    }
    Ok((coarse, est / 15.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ZeroRecord {
    pub r: f64,
    pub du_abs: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ZeroAudit {
    pub threshold: f64,
    pub zeros: Vec<ZeroRecord>,
}

impl ZeroAudit {
    pub fn degenerate_count(&self) -> usize {
        self.zeros.iter().filter(|z| z.degenerate).count()
    }
}

/// Default degeneracy threshold `1e-6 sqrt(2 E_0)`.
pub fn default_zero_threshold(traj: &OdeTrajectory) -> f64 {
    1e-6 * math::sqrt(2.0 * traj.energy_at(0))
}

/// Locates zeros of `u` and flags those with `|u'| <= threshold` as degenerate.
///
/// Sign changes between samples are refined by bisection on the Hermite dense
/// output, or taken from the integrator's crossing record when one lies in the
/// bracket. A maximal run of exactly-zero samples counts as one zero, placed at
/// its end next to the nonzero part.
pub fn zero_audit(traj: &OdeTrajectory, threshold: Option<f64>) -> ZeroAudit {
    let threshold = threshold.unwrap_or_else(|| default_zero_threshold(traj));
    let mut zeros = Vec::new();
    let n = traj.len();
    let mut i = 0;
    while i < n {
        if traj.u[i] == 0.0 {
            let start = i;
            while i + 1 < n && traj.u[i + 1] == 0.0 {
                i += 1;
            }
            let end = i;
            let at = if start == 0 && end + 1 < n {
                end
            } else if end + 1 == n && start > 0 {
                start
            } else {
                (start + end) / 2
            };
            let d = (start..=end).fold(0.0f64, |m, k| m.max(traj.du[k].abs()));
            let d = if start == end { traj.du[at].abs() } else { d };
            zeros.push(ZeroRecord {
                r: traj.t[at],
                du_abs: d,
                degenerate: d <= threshold,
            });
            i += 1;
            continue;
        }
        if i + 1 < n && traj.u[i + 1] != 0.0 && traj.u[i] * traj.u[i + 1] < 0.0 {
            let (a, b) = (traj.t[i], traj.t[i + 1]);
            let rec = traj.events.iter().find(|e| e.t >= a && e.t <= b);
            let (r, d) = match rec {
                Some(e) => (e.t, e.du.abs()),
                None => {
                    let (mut lo, mut hi) = (a, b);
                    let s_lo = math::sgn(traj.u[i]);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if math::sgn(traj.dense(mid).0) == s_lo {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let r = 0.5 * (lo + hi);
                    (r, traj.dense(r).1.abs())
                }
            };
            zeros.push(ZeroRecord {
                r,
                du_abs: d,
                degenerate: d <= threshold,
            });
        }
        i += 1;
    }
    ZeroAudit { threshold, zeros }
}

/// Separated solution `w(x,t) = ((2-q)/(q-1)(t-t0))^{-(q-1)/(2-q)} f_q(u(x))` of
/// `w_t = Δ(|w|^{m-1}w)`, `m = 1/(q-1)`, built on a radial profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PmeField {
    pub base: OdeTrajectory,
    pub q: f64,
    pub m: f64,
    pub t0: f64,
}

impl PmeField {
    pub fn new(base: OdeTrajectory, t0: f64) -> Result<Self> {
        let q = base.q;
        check_q_open(q)?;
        if base.kind != TrajectoryKind::Radial {
            return Err(Error::invalid("base", "expected a radial profile"));
        }
        Ok(PmeField {
            base,
            q,
            m: 1.0 / (q - 1.0),
            t0,
        })
    }

    /// Time factor `T(t)` with `T' = -T^m`.
    pub fn time_factor(&self, t: f64) -> Result<f64> {
        if !(t > self.t0) {
            return Err(Error::invalid("t", "times must exceed t0"));
        }
        let c = (2.0 - self.q) / (self.q - 1.0);
        Ok(math::powf(c * (t - self.t0), -(self.q - 1.0) / (2.0 - self.q)))
    }

    /// `w` at grid index `i` of the base profile.
    pub fn w(&self, i: usize, t: f64) -> Result<f64> {
        Ok(self.time_factor(t)? * signed_pow(self.base.u[i], self.q))
    }

    /// `w_t` at grid index `i`, from the exact time derivative of `T`.
    pub fn w_t(&self, i: usize, t: f64) -> Result<f64> {
        let c = (2.0 - self.q) / (self.q - 1.0);
        let e = -(self.q - 1.0) / (2.0 - self.q);
        let dt = e * c * math::powf(c * (t - self.t0), e - 1.0);
        Ok(dt * signed_pow(self.base.u[i], self.q))
    }
}

/// Half-width, in cells, of the band around zeros left out of PME residuals.
pub const PME_ZERO_BAND: usize = 32;

/// One row of a PME residual grid.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PmeSample {
    pub x: f64,
    pub t: f64,
    pub w: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmeResidual {
    pub max_residual: f64,
    pub w_max: f64,
    pub samples: Vec<PmeSample>,
    /// Radii left out because they lie within [`PME_ZERO_BAND`] cells of a zero of `u`.
    pub skipped_radii: usize,
}

/// Radial Laplacian of the profile at index `i`: `u'' + (N-1)/r u'`, with `u''`
/// from fourth-order differences of `u'`; `N u''(0)` at the origin.
///
/// `u''` is only Hölder continuous across a zero of `u`, so the stencil must not
/// straddle a sign change; `None` when no such five-point window contains `i`.
pub fn radial_laplacian(traj: &OdeTrajectory, i: usize) -> Option<f64> {
    let one_sign = |s: usize| traj.u[s..s + 5].iter().all(|&v| v > 0.0) || traj.u[s..s + 5].iter().all(|&v| v < 0.0);
    let (upp, _) = crate::quad::fd4_first_clean(&traj.du, traj.h, i, one_sign)?;
    Some(if i == 0 {
        traj.dimension as f64 * upp
    } else {
        upp + (traj.dimension as f64 - 1.0) / traj.t[i] * traj.du[i]
    })
}

/// `max |w_t - Δ(|w|^{m-1}w)|` over `n_space` radii of the base grid times the
/// given times; the spatial Laplacian is taken from the sampled profile.
///
/// Near a zero `z` of the profile `u''` behaves like `|r - z|^{q-1}`, so
/// difference quotients there measure the regularity rather than the step.
/// Radii within [`PME_ZERO_BAND`] cells of a sign change are skipped and counted.
pub fn pme_separated_residual(field: &PmeField, n_space: usize, times: &[f64]) -> Result<PmeResidual> {
    if times.iter().any(|&t| !(t > field.t0)) {
        return Err(Error::invalid("t", "times must exceed t0"));
    }
    let base = &field.base;
    let n = base.len();
    if n < 5 {
        return Err(Error::invalid("base", "profile too short"));
    }
    let n_space = n_space.clamp(1, n);
    let mut samples = Vec::with_capacity(n_space * times.len());
    let mut max_residual: f64 = 0.0;
    let mut w_max: f64 = 0.0;
    let mut skipped_radii = 0;
    let crossings: Vec<usize> = (0..n - 1).filter(|&k| base.u[k] == 0.0 || (base.u[k] > 0.0) != (base.u[k + 1] > 0.0)).collect();
    for k in 0..n_space {
        let i = if n_space == 1 { 0 } else { k * (n - 1) / (n_space - 1) };
        let near_zero = crossings.iter().any(|&c| c.abs_diff(i) <= PME_ZERO_BAND);
        let lap = if near_zero { None } else { radial_laplacian(base, i) };
        let Some(lap_u) = lap else {
            skipped_radii += 1;
            continue;
        };
        for &t in times {
            let tf = field.time_factor(t)?;
            let w = field.w(i, t)?;
            // |w|^{m-1} w = T^m u exactly.
            let lap = math::powf(tf, field.m) * lap_u;
            let res = field.w_t(i, t)? - lap;
            max_residual = max_residual.max(res.abs());
            w_max = w_max.max(w.abs());
            samples.push(PmeSample {
                x: base.t[i],
                t,
                w,
                residual: res,
            });
        }
    }
    Ok(PmeResidual {
        max_residual,
        w_max,
        samples,
        skipped_radii,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_values() {
        let (u, upp) = counterexample_profile(1.5, 0.0, 2.0).unwrap();
        assert!((u - 1.0 / 9.0).abs() < 1e-15);
        assert!((upp - 1.0 / 3.0).abs() < 1e-15);
        let (u, upp) = counterexample_profile(1.5, 0.0, 1.0).unwrap();
        assert!((u - 1.0 / 144.0).abs() < 1e-17);
        assert!((upp - 1.0 / 12.0).abs() < 1e-16);
        assert_eq!(counterexample_profile(1.3, 0.5, 0.2).unwrap(), (0.0, 0.0));
        assert!(counterexample_profile(2.0, 0.0, 1.0).is_err());
        assert!(counterexample_profile(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn energy_initial_values() {
        let t = integrate_plane(1.5, 1.0, 0.0, 1.0, 0.01).unwrap();
        assert!((conserved_energy(&t)[0] - 2.0 / 3.0).abs() < 1e-15);
        let t = integrate_plane(1.3, 0.0, 1.0, 1.0, 0.01).unwrap();
        assert!((conserved_energy(&t)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn plane_energy_drift_small() {
        let t = integrate_plane(1.5, 1.0, 0.0, 10.0, 1e-3).unwrap();
        assert!(!t.events.is_empty());
        assert!(energy_drift(&t) < 1e-8, "drift {}", energy_drift(&t));
    }

    #[test]
    fn radial_series_curvature() {
        let t = integrate_radial(3, 1.5, 1.0, 0.5, 1e-3).unwrap();
        assert!(t.du[1] < 0.0);
        let upp0 = (t.du[1] - t.du[0]) / t.h;
        assert!((upp0 + 1.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn radial_energy_non_increasing() {
        let t = integrate_radial(3, 1.5, 1.0, 12.0, 1e-3).unwrap();
        let e = conserved_energy(&t);
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn glued_zero_is_degenerate() {
        let t = counterexample_trajectory(1.5, 0.0, -1.0, 1.0, 1000).unwrap();
        let audit = zero_audit(&t, None);
        assert_eq!(audit.zeros.len(), 1);
        assert_eq!(audit.degenerate_count(), 1);
        assert!(audit.zeros[0].r.abs() < 1e-12);
    }

    #[test]
    fn plane_zeros_carry_energy() {
        let t = integrate_plane(1.5, 1.0, 0.0, 10.0, 1e-3).unwrap();
        let audit = zero_audit(&t, None);
        assert!(audit.zeros.len() >= 2);
        for z in &audit.zeros {
            assert!(!z.degenerate);
            assert!((z.du_abs * z.du_abs - 4.0 / 3.0).abs() < 1e-9, "{z:?}");
        }
    }

    #[test]
    fn hermite_exact_for_cubic() {
        let f = |t: f64| t * t * t - t;
        let df = |t: f64| 3.0 * t * t - 1.0;
        let (u, d) = hermite(0.5, f(1.0), df(1.0), f(1.5), df(1.5), 0.3);
        assert!((u - f(1.15)).abs() < 1e-14);
        assert!((d - df(1.15)).abs() < 1e-13);
    }

    #[test]
    fn pme_residual_small_away_from_zeros() {
        let base = integrate_radial(3, 1.5, 0.5, 10.0, 1e-3).unwrap();
        let field = PmeField::new(base, 0.0).unwrap();
        assert_eq!(field.m, 2.0);
        let res = pme_separated_residual(&field, 64, &[1.0, 3.0]).unwrap();
        assert!(res.max_residual <= 1e-6 * res.w_max, "{:e}", res.max_residual / res.w_max);
        assert!(res.skipped_radii < 8);
        assert!(pme_separated_residual(&field, 64, &[0.0]).is_err());
    }

    #[test]
    fn pme_time_factor_solves_its_ode() {
        let base = integrate_radial(2, 1.5, 0.5, 1.0, 1e-3).unwrap();
        let field = PmeField::new(base, 0.5).unwrap();
        let (t, dt) = (2.0, 1e-5);
        let d = (field.time_factor(t + dt).unwrap() - field.time_factor(t - dt).unwrap()) / (2.0 * dt);
        assert!((d + field.time_factor(t).unwrap().powf(field.m)).abs() < 1e-8);
    }
}
