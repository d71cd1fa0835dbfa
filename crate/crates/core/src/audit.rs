//! Replays the vanishing-on-a-ball contradiction argument on a candidate
//! field: vanishing radius, lower bound for `D`, bounded frequency and the
//! `log H` slope contradiction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::SolutionField;
use crate::frequency::{frequency_profile, FrequencyProfile, ProfileOptions, SCHEMA_VERSION};
use crate::math;
use crate::model::{c_constant, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AuditControls {
    /// `d(r) <= tol_d * d(δ1)` counts as vanishing.
    pub tol_d: f64,
    /// Gate passes when `‖ρ‖_∞ <= gate_factor * truncation estimate`.
    pub gate_factor: f64,
    /// Gate tolerance `gate_fallback * max(1, ‖u‖_∞)` for fields without a
    /// truncation estimate.
    pub gate_fallback: f64,
    /// Run the certificate steps even when the residual gate fails.
    pub bypass_gate: bool,
    pub h_floor_rel: f64,
    /// Relative slack of the monotonicity check of `N(r) e^{C3 r}`.
    pub monotone_slack: f64,
    /// Replace the detected vanishing radius (the chain is then non-binding).
    pub force_r0: Option<f64>,
}

impl Default for AuditControls {
    fn default() -> Self {
        AuditControls {
            tol_d: 1e-10,
            gate_factor: 10.0,
            gate_fallback: 1e-6,
            bypass_gate: false,
            h_floor_rel: 1e-14,
            monotone_slack: 1e-8,
            force_r0: None,
        }
    }
}

impl AuditControls {
    pub fn validate(&self) -> Result<()> {
        let positive = [("tol_d", self.tol_d), ("gate_factor", self.gate_factor), ("gate_fallback", self.gate_fallback)];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if !(self.h_floor_rel >= 0.0) || !(self.monotone_slack >= 0.0) {
            return Err(Error::invalid("controls", "floors and slacks must be non-negative"));
        }
        if let Some(r) = self.force_r0 {
            if !(r > 0.0) {
                return Err(Error::invalid("force_r0", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Classification {
    GenuineNonvanishing,
    ContradictionCertified,
    ResidualVeto,
    Inconclusive,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::GenuineNonvanishing => "genuine_nonvanishing",
            Classification::ContradictionCertified => "contradiction_certified",
            Classification::ResidualVeto => "residual_veto",
            Classification::Inconclusive => "inconclusive",
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(self) -> i32 {
        match self {
            Classification::GenuineNonvanishing => 0,
            Classification::ContradictionCertified => 4,
            Classification::ResidualVeto => 5,
            Classification::Inconclusive => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Step {
    ResidualGate,
    VanishingDetected,
    LowerBoundD,
    FrequencyBounded,
    LogHContradiction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepVerdict {
    pub step: Step,
    pub status: Status,
    /// Worst margin of the step's inequality (negative when violated).
    pub margin: Option<f64>,
    pub fail_radius: Option<f64>,
    pub detail: String,
}

impl StepVerdict {
    fn new(step: Step, status: Status, detail: String) -> Self {
        StepVerdict {
            step,
            status,
            margin: None,
            fail_radius: None,
            detail,
        }
    }
}

/// Constants of the chain; `None` until the step that defines them runs.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Constants {
    pub c_nq: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    /// Empirical constants of the variable-coefficient route (not closed form).
    pub fitted: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CertificateChain {
    pub schema_version: u32,
    pub outer_radius: f64,
    pub r0: f64,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub r3: Option<f64>,
    pub constants: Constants,
    pub steps: Vec<StepVerdict>,
    pub classification: Classification,
    /// The step that decided the classification.
    pub deciding_step: Option<Step>,
    pub residual_sup: f64,
    pub residual_tolerance: f64,
    pub whole_grid_zero: bool,
    /// False when `r0` was forced rather than detected.
    pub binding: bool,
    pub general_route: bool,
}

impl CertificateChain {
    pub fn step(&self, s: Step) -> Option<&StepVerdict> {
        self.steps.iter().find(|v| v.step == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vanishing {
    pub r0: f64,
    pub index: usize,
    pub whole_grid_zero: bool,
}

/// Largest grid radius with `d(r) <= tol_d d(δ1)`; `r0 = 0` when that is the
/// origin.
pub fn vanishing_radius(profile: &FrequencyProfile, tol_d: f64) -> Result<Vanishing> {
    if !(tol_d > 0.0) {
        return Err(Error::invalid("tol_d", "must be positive"));
    }
    let last = *profile.d.last().ok_or_else(|| Error::invalid("profile", "empty"))?;
    if !(last > 0.0) {
        return Ok(Vanishing {
            r0: profile.outer_radius(),
            index: profile.len() - 1,
            whole_grid_zero: true,
        });
    }
    let thr = tol_d * last;
    let index = profile.d.iter().rposition(|&v| v <= thr).unwrap_or(0);
    Ok(Vanishing {
        r0: profile.r[index],
        index,
        whole_grid_zero: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    pub r1: f64,
    pub c1: f64,
    pub c2: f64,
    pub verdict: StepVerdict,
}

/// `C1 = C/r0^{N-1}`, `C2 = (2-q)/2 r0^{N-2}` and `r1 = r0 + (2-q)/(2 C1)`
/// (capped at `r1_cap`); checks `D >= C2 d` on grid radii in `(r0, r1)`.
pub fn lower_bound_certificate(profile: &FrequencyProfile, r0: f64, q: f64, r1_cap: f64) -> Result<LowerBound> {
    if !(r0 > 0.0) {
        return Err(Error::invalid("r0", "the lower bound needs r0 > 0"));
    }
    let n = profile.dimension;
    let c = c_constant(n, q);
    let c1 = c / math::powi(r0, n as i32 - 1);
    let c2 = (2.0 - q) / 2.0 * math::powi(r0, n as i32 - 2);
    let r1 = (r0 + (2.0 - q) / (2.0 * c1)).min(r1_cap).min(profile.outer_radius());
    let mut worst: Option<(f64, f64)> = None;
    for i in 0..profile.len() {
        let r = profile.r[i];
        if r <= r0 || r >= r1 {
            continue;
        }
        let m = profile.big_d[i] - c2 * profile.d[i];
        if worst.is_none_or(|(w, _)| m < w) {
            worst = Some((m, r));
        }
    }
    let verdict = match worst {
        None => StepVerdict::new(Step::LowerBoundD, Status::Inconclusive, format!("no grid radii in ({r0}, {r1})")),
        Some((m, r)) => {
            let status = if m >= 0.0 { Status::Pass } else { Status::Fail };
            StepVerdict {
                step: Step::LowerBoundD,
                status,
                margin: Some(m),
                fail_radius: (m < 0.0).then_some(r),
                detail: format!("min(D - C2 d) over ({r0}, {r1}) at r = {r}"),
            }
        }
    };
    Ok(LowerBound { r1, c1, c2, verdict })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBound {
    pub r2: f64,
    pub r3: f64,
    pub c3: f64,
    pub c4: f64,
    pub verdict: StepVerdict,
}

/// Picks `r2` as the largest grid radius in `(r0, r1)` with `H` above the
/// floor, `r3` as the start of the positivity interval of `H` below `r2`, and
/// checks that `N(r) e^{C3 r}` is non-decreasing on `(r3, r2]` with
/// `C3 = C/(r0 C2)`; `C4 = N(r2) e^{C3 r2}`.
pub fn frequency_bound_certificate(profile: &FrequencyProfile, r0: f64, r1: f64, q: f64, c2: f64, slack: f64) -> Option<FrequencyBound> {
    let c = c_constant(profile.dimension, q);
    let c3 = c / (r0 * c2);
    let floor = profile.h_floor;
    let i2 = (0..profile.len())
        .rev()
        .find(|&i| profile.r[i] > r0 && profile.r[i] < r1 && profile.h[i] > floor && profile.freq[i].is_some())?;
    let mut i3 = i2;
    while i3 > 0 && profile.h[i3 - 1] > floor && profile.freq[i3 - 1].is_some() {
        i3 -= 1;
    }
    // first index of the positivity run is i3; r3 is the grid radius below it
    let r3_index = i3.saturating_sub(1);
    let r2 = profile.r[i2];
    let r3 = profile.r[r3_index];
    let g = |i: usize| profile.freq[i].unwrap_or(f64::NAN) * math::exp(c3 * profile.r[i]);
    let c4 = g(i2);
    let mut worst = (f64::INFINITY, r2);
    let mut failed = None;
    for i in i3 + 1..=i2 {
        let (a, b) = (g(i - 1), g(i));
        let m = b - a + slack * a.abs().max(b.abs());
        if m < worst.0 {
            worst = (m, profile.r[i]);
        }
        if !(m >= 0.0) && failed.is_none() {
            failed = Some(profile.r[i]);
        }
    }
    let n_max = (i3..=i2).map(|i| profile.freq[i].unwrap_or(f64::NAN)).fold(f64::NEG_INFINITY, f64::max);
    let status = if failed.is_some() || !(n_max <= c4 * (1.0 + slack)) {
        Status::Fail
    } else {
        Status::Pass
    };
    Some(FrequencyBound {
        r2,
        r3,
        c3,
        c4,
        verdict: StepVerdict {
            step: Step::FrequencyBounded,
            status,
            margin: Some(worst.0.min(c4 - n_max)),
            fail_radius: failed,
            detail: format!("N(r) e^(C3 r) on ({r3}, {r2}]; max N = {n_max:.6e}, C4 = {c4:.6e}"),
        },
    })
}

/// Checks the slope bound `(log(H/r^{N-1}))' <= 2 C4 / r0` on `(r3, r2]` and
/// that integrating it back from `r2` forces `H(r3)` above the floor although
/// `H(r3)` is at or below it.
pub fn log_h_contradiction(profile: &FrequencyProfile, r0: f64, r3: f64, r2: f64, c4: f64) -> Result<StepVerdict> {
    let i3 = profile.index_of(r3)?;
    let i2 = profile.index_of(r2)?;
    let nm1 = profile.dimension as f64 - 1.0;
    let bound = 2.0 * c4 / r0;
    let logh: Vec<f64> = (0..profile.len())
        .map(|i| {
            let r = profile.r[i];
            if r > 0.0 && profile.h[i] > profile.h_floor {
                math::ln(profile.h[i]) - nm1 * math::ln(r)
            } else {
                f64::NAN
            }
        })
        .collect();
    let mut worst = f64::INFINITY;
    let mut fail = None;
    for i in i3 + 1..=i2 {
        let Some((slope, est)) = profile.derivative(&logh, i) else { continue };
        let m = bound + est - slope;
        if m < worst {
            worst = m;
        }
        if m < 0.0 && fail.is_none() {
            fail = Some(profile.r[i]);
        }
    }
    if let Some(r) = fail {
        return Ok(StepVerdict {
            step: Step::LogHContradiction,
            status: Status::Fail,
            margin: Some(worst),
            fail_radius: Some(r),
            detail: format!("slope exceeds 2 C4 / r0 = {bound:.6e}"),
        });
    }
    let h2 = profile.h[i2];
    let forced = h2 * math::powf(r3 / r2, nm1) * math::exp(-bound * (r2 - r3));
    let vanishes = profile.h[i3] <= profile.h_floor;
    let contradiction = vanishes && forced > profile.h_floor;
    Ok(StepVerdict {
        step: Step::LogHContradiction,
        status: if contradiction { Status::Pass } else { Status::Inconclusive },
        margin: Some(forced - profile.h_floor),
        fail_radius: None,
        detail: format!("forced H(r3) >= {forced:.6e}, observed {:.6e}, floor {:.6e}", profile.h[i3], profile.h_floor),
    })
}

/// Largest grid radius `r <= cap` with `C_fit ‖u‖_{L∞(B_r)}^{2-q} + C1 (r - r0) < (2-q)/2`.
fn general_r1(profile: &FrequencyProfile, sup_ball: &[f64], r0: f64, q: f64, c1: f64, c_fit: f64, cap: f64) -> f64 {
    let mut r1 = r0;
    for i in 0..profile.len() {
        let r = profile.r[i];
        if r <= r0 || r > cap {
            continue;
        }
        if c_fit * math::powf(sup_ball[i], 2.0 - q) + c1 * (r - r0) < (2.0 - q) / 2.0 {
            r1 = r;
        } else {
            break;
        }
    }
    r1
}

/// Runs the full chain on `field`.
pub fn audit(spec: &ProblemSpec, field: &SolutionField, controls: &AuditControls) -> Result<CertificateChain> {
    controls.validate()?;
    let profile = frequency_profile(
        spec,
        field,
        ProfileOptions {
            h_floor_rel: controls.h_floor_rel,
        },
    )?;
    let rho = field.residual(spec)?;
    let sup_ball = field.sup_on_balls();
    audit_profile(spec, &profile, &rho, &sup_ball, field.truncation_estimate, controls)
}

/// The chain on precomputed data: `rho` per node in field order and
/// `sup_ball[i] = ‖u‖_{L∞(B_{r_i})}`.
pub fn audit_profile(
    spec: &ProblemSpec,
    profile: &FrequencyProfile,
    rho: &[f64],
    sup_ball: &[f64],
    truncation_estimate: Option<f64>,
    controls: &AuditControls,
) -> Result<CertificateChain> {
    controls.validate()?;
    let q = spec.nonlinearity.homogeneous_q().unwrap_or(spec.nonlinearity.q);
    if !(q > 0.0 && q < 2.0) {
        return Err(Error::invalid("q", "the audit needs a sublinear exponent in (0, 2)"));
    }
    let general = !profile.model_coefficients || spec.nonlinearity.homogeneous_q().is_none();
    let u_max = *sup_ball.last().unwrap_or(&0.0);
    let residual_sup = rho.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual_tolerance = match truncation_estimate {
        Some(t) if t > 0.0 => controls.gate_factor * t,
        _ => controls.gate_fallback * u_max.max(1.0),
    };
    let mut chain = CertificateChain {
        schema_version: SCHEMA_VERSION,
        outer_radius: profile.outer_radius(),
        r0: 0.0,
        r1: None,
        r2: None,
        r3: None,
        constants: Constants {
            c_nq: c_constant(profile.dimension, q),
            ..Constants::default()
        },
        steps: Vec::new(),
        classification: Classification::Inconclusive,
        deciding_step: None,
        residual_sup,
        residual_tolerance,
        whole_grid_zero: false,
        binding: controls.force_r0.is_none(),
        general_route: general,
    };
    let mut gate_ok = residual_sup <= residual_tolerance;
    let mut gate = StepVerdict::new(
        Step::ResidualGate,
        if gate_ok { Status::Pass } else { Status::Fail },
        format!("sup |rho| = {residual_sup:.3e}, tolerance {residual_tolerance:.3e}"),
    );
    gate.margin = Some(residual_tolerance - residual_sup);

    let van = vanishing_radius(profile, controls.tol_d)?;
    chain.whole_grid_zero = van.whole_grid_zero;
    chain.r0 = controls.force_r0.unwrap_or(van.r0);
    if let Some(r) = controls.force_r0 {
        // a forced r0 only stands if the field really vanishes on B_{r0}
        let i = profile.index_of(r)?;
        let zero_tol = controls.gate_fallback * u_max.max(1.0);
        if sup_ball[i] > zero_tol {
            gate_ok = false;
            gate.status = Status::Fail;
            gate.detail = format!("field is not zero on B_{r}: sup |u| = {:.3e}", sup_ball[i]);
        }
    }
    chain.steps.push(gate);
    let mut van_step = StepVerdict::new(
        Step::VanishingDetected,
        if chain.r0 > 0.0 { Status::Pass } else { Status::Fail },
        format!("r0 = {}", chain.r0),
    );
    if van.whole_grid_zero {
        van_step.detail = "field identically negligible on the grid".into();
        chain.steps.push(van_step);
        chain.classification = Classification::GenuineNonvanishing;
        chain.deciding_step = Some(Step::VanishingDetected);
        return Ok(chain);
    }
    chain.steps.push(van_step);
    if chain.r0 == 0.0 {
        chain.classification = Classification::GenuineNonvanishing;
        chain.deciding_step = Some(Step::VanishingDetected);
        return Ok(chain);
    }
    if !gate_ok && !controls.bypass_gate {
        chain.classification = Classification::ResidualVeto;
        chain.deciding_step = Some(Step::ResidualGate);
        return Ok(chain);
    }
    let r0 = chain.r0;
    let mut lb = lower_bound_certificate(profile, r0, q, profile.outer_radius())?;
    if general {
        let c_fit = effective_u2_constant(profile, q);
        chain.constants.fitted.push(("u2_bound_constant".into(), c_fit));
        lb = lower_bound_certificate(profile, r0, q, general_r1(profile, sup_ball, r0, q, lb.c1, c_fit, lb.r1))?;
    }
    chain.r1 = Some(lb.r1);
    chain.constants.c1 = Some(lb.c1);
    chain.constants.c2 = Some(lb.c2);
    let lb_status = lb.verdict.status;
    chain.steps.push(lb.verdict);
    match lb_status {
        Status::Fail => {
            chain.classification = Classification::ContradictionCertified;
            chain.deciding_step = Some(Step::LowerBoundD);
            return Ok(chain);
        }
        Status::Inconclusive | Status::Skipped => {
            chain.classification = Classification::Inconclusive;
            chain.deciding_step = Some(Step::LowerBoundD);
            return Ok(chain);
        }
        Status::Pass => {}
    }

    let Some(fb) = frequency_bound_certificate(profile, r0, lb.r1, q, lb.c2, controls.monotone_slack) else {
        chain.steps.push(StepVerdict::new(
            Step::FrequencyBounded,
            Status::Inconclusive,
            "no r2 with H above the floor".into(),
        ));
        chain.classification = Classification::Inconclusive;
        chain.deciding_step = Some(Step::FrequencyBounded);
        return Ok(chain);
    };
    chain.r2 = Some(fb.r2);
    chain.r3 = Some(fb.r3);
    chain.constants.c3 = Some(fb.c3);
    chain.constants.c4 = Some(fb.c4);
    let fb_status = fb.verdict.status;
    chain.steps.push(fb.verdict);
    if fb_status == Status::Fail {
        chain.classification = Classification::ContradictionCertified;
        chain.deciding_step = Some(Step::FrequencyBounded);
        return Ok(chain);
    }

    let lh = log_h_contradiction(profile, r0, fb.r3, fb.r2, fb.c4)?;
    chain.classification = match lh.status {
        Status::Pass | Status::Fail => Classification::ContradictionCertified,
        _ => Classification::Inconclusive,
    };
    chain.deciding_step = Some(Step::LogHContradiction);
    chain.steps.push(lh);
    Ok(chain)
}

/// `max_r ∫_S u² / (‖u‖_{L∞(S)}^{2-q} ∫_S F)` over radii where it is defined.
fn effective_u2_constant(profile: &FrequencyProfile, q: f64) -> f64 {
    (1..profile.len())
        .filter_map(|i| {
            let base = math::powf(profile.sphere.sup[i], 2.0 - q) * profile.dprime[i];
            (base > 0.0).then(|| profile.plain_h[i] / base)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frequency::SphereSums;
    use crate::solver::{glued_radial, solve_radial};
    use alloc::vec;

    fn synthetic(n: usize, r: Vec<f64>, h: Vec<f64>, big_d: Vec<f64>, d: Vec<f64>) -> FrequencyProfile {
        let len = r.len();
        let dr = r[1] - r[0];
        let freq = (0..len).map(|i| (h[i] > 0.0 && r[i] > 0.0).then(|| r[i] * big_d[i] / h[i])).collect();
        FrequencyProfile {
            schema_version: SCHEMA_VERSION,
            dimension: n,
            dr,
            model_coefficients: true,
            dprime: vec![0.0; len],
            freq,
            surface_d: big_d.clone(),
            plain_h: h.clone(),
            ball_u_rho: vec![0.0; len],
            ball_x_rho: vec![0.0; len],
            ball_f_u: vec![0.0; len],
            cs_gap: vec![0.0; len],
            h_floor: 1e-30,
            lambda_min: 1.0,
            lambda_max: 1.0,
            kinks: vec![false; len - 1],
            sphere: SphereSums::default(),
            d1: big_d.clone(),
            r,
            h,
            big_d,
            d,
        }
    }

    #[test]
    fn constants_follow_their_definitions() {
        for (n, q, r0) in [(2, 1.5, 0.3), (3, 1.2, 0.5), (3, 1.8, 0.25)] {
            let r: Vec<f64> = (0..101).map(|i| i as f64 * 0.01).collect();
            let d: Vec<f64> = r.iter().map(|&x| if x > r0 { (x - r0).powi(3) } else { 0.0 }).collect();
            let p = synthetic(n, r, vec![1.0; 101], d.iter().map(|v| 10.0 * v).collect(), d);
            let lb = lower_bound_certificate(&p, r0, q, 1.0).unwrap();
            let c = c_constant(n, q);
            assert!((lb.c1 * math::powi(r0, n as i32 - 1) - c).abs() < 1e-12 * c);
            assert!((2.0 * lb.c2 - (2.0 - q) * math::powi(r0, n as i32 - 2)).abs() < 1e-12);
            let c3 = c / (r0 * lb.c2);
            assert!((c3 * r0 * lb.c2 - c).abs() < 1e-12 * c);
        }
    }

    #[test]
    fn lower_bound_boundary_case_has_zero_margin() {
        let (n, q, r0) = (2, 1.5, 0.3);
        let c2 = (2.0 - q) / 2.0;
        let r: Vec<f64> = (0..101).map(|i| i as f64 * 0.01).collect();
        let d: Vec<f64> = r.iter().map(|&x| if x > r0 { x - r0 } else { 0.0 }).collect();
        let p = synthetic(n, r, vec![1.0; 101], d.iter().map(|v| c2 * v).collect(), d);
        let lb = lower_bound_certificate(&p, r0, q, 1.0).unwrap();
        assert_eq!(lb.verdict.status, Status::Pass);
        assert_eq!(lb.verdict.margin, Some(0.0));
    }

    #[test]
    fn exponential_frequency_passes_with_equality() {
        let (n, q, r0, r1) = (2, 1.5, 0.3, 0.9);
        let c2 = (2.0 - q) / 2.0;
        let c3 = c_constant(n, q) / (r0 * c2);
        let r: Vec<f64> = (0..101).map(|i| i as f64 * 0.01).collect();
        let h: Vec<f64> = r.iter().map(|&x| if x > r0 { 1.0 } else { 0.0 }).collect();
        // N(r) = e^{-C3 r}: D = H N / r
        let big_d: Vec<f64> = r.iter().map(|&x| if x > 0.0 { math::exp(-c3 * x) / x } else { 0.0 }).collect();
        let p = synthetic(n, r, h, big_d, vec![0.0; 101]);
        let fb = frequency_bound_certificate(&p, r0, r1, q, c2, 1e-12).unwrap();
        assert_eq!(fb.verdict.status, Status::Pass);
        assert!(fb.verdict.margin.unwrap().abs() < 1e-12);
    }

    #[test]
    fn log_h_flat_profile_is_not_contradictory() {
        let r: Vec<f64> = (0..101).map(|i| i as f64 * 0.01).collect();
        let h: Vec<f64> = r.to_vec();
        let p = synthetic(2, r, h, vec![0.0; 101], vec![0.0; 101]);
        let v = log_h_contradiction(&p, 0.3, 0.3, 0.8, 1.0).unwrap();
        assert_eq!(v.status, Status::Inconclusive);
    }

    #[test]
    fn log_h_vanishing_with_bounded_slope_is_contradictory() {
        let r: Vec<f64> = (0..101).map(|i| i as f64 * 0.01).collect();
        // H vanishes at 0.3, and is r^{N-1} e^{r} above it: slope 1
        let h: Vec<f64> = r.iter().map(|&x| if x > 0.305 { x * math::exp(x) } else { 0.0 }).collect();
        let p = synthetic(2, r, h, vec![0.0; 101], vec![0.0; 101]);
        let v = log_h_contradiction(&p, 0.3, 0.3, 0.8, 1.0).unwrap();
        assert_eq!(v.status, Status::Pass, "{}", v.detail);
    }

    #[test]
    fn zero_field_is_trivially_genuine() {
        let spec = ProblemSpec::model(2, 1.0, 1.5);
        let f = crate::solver::radial_from_fn(2, 1.0, 200, |_| 0.0, |_| 0.0);
        let c = audit(&spec, &f, &AuditControls::default()).unwrap();
        assert!(c.whole_grid_zero);
        assert_eq!(c.classification, Classification::GenuineNonvanishing);
    }

    #[test]
    fn radial_solution_is_genuine() {
        let spec = ProblemSpec::model(2, 4.0, 1.5);
        let f = solve_radial(&spec, 0.5, 2e-3).unwrap();
        let c = audit(&spec, &f, &AuditControls::default()).unwrap();
        assert_eq!(c.r0, 0.0);
        assert_eq!(c.classification, Classification::GenuineNonvanishing);
        assert!(c.constants.c1.is_none());
        assert_eq!(c.step(Step::ResidualGate).unwrap().status, Status::Pass);
    }

    #[test]
    fn forced_r0_on_solution_is_vetoed() {
        let spec = ProblemSpec::model(2, 4.0, 1.5);
        let f = solve_radial(&spec, 0.5, 2e-3).unwrap();
        let ctl = AuditControls {
            force_r0: Some(0.5),
            ..AuditControls::default()
        };
        let c = audit(&spec, &f, &ctl).unwrap();
        assert!(!c.binding);
        assert_eq!(c.classification, Classification::ResidualVeto);
    }

    #[test]
    fn glued_field_is_rejected() {
        let spec = ProblemSpec::model(2, 1.0, 1.5);
        let f = glued_radial(2, 1.5, 0.3, 1.0, 1000).unwrap();
        let c = audit(&spec, &f, &AuditControls::default()).unwrap();
        assert_eq!(c.classification, Classification::ResidualVeto);
        let ctl = AuditControls {
            bypass_gate: true,
            ..AuditControls::default()
        };
        let c = audit(&spec, &f, &ctl).unwrap();
        assert!(c.r0 >= 0.3 && c.r0 < 0.35, "{}", c.r0);
        assert_eq!(c.classification, Classification::ContradictionCertified);
        assert_eq!(c.deciding_step, Some(Step::FrequencyBounded));
    }

    #[test]
    fn vanishing_radius_with_tight_tolerance() {
        let spec = ProblemSpec::model(2, 1.0, 1.5);
        let f = glued_radial(2, 1.5, 0.3, 1.0, 1000).unwrap();
        let p = frequency_profile(&spec, &f, ProfileOptions::default()).unwrap();
        let v = vanishing_radius(&p, 1e-40).unwrap();
        assert!((v.r0 - 0.3).abs() <= 1e-3 + 1e-12, "{}", v.r0);
    }

    #[test]
    fn bad_controls_rejected() {
        let spec = ProblemSpec::model(2, 1.0, 1.5);
        let f = glued_radial(2, 1.5, 0.3, 1.0, 100).unwrap();
        let ctl = AuditControls {
            tol_d: 0.0,
            ..AuditControls::default()
        };
        assert!(audit(&spec, &f, &ctl).is_err());
    }
}
