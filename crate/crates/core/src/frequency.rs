//! Frequency quantities `H, D, D1, d, N` on a solution field and the
//! residual-corrected identities they satisfy.
//!
//! Every identity is checked in a form that stays exact for arbitrary smooth
//! fields: wherever the equation is used, `ρ = div(A∇u) + Vu + f` is carried
//! along as an explicit correction term.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{radial_cumulative, Representation, SolutionField, SphereNodes};
use crate::linalg::Mat;
use crate::math;
use crate::model::{c_constant, CoefficientSample, ProblemSpec};
use crate::quad::{cumulative_simpson, fd4_first_clean};
use crate::Vector;

/// Version of the profile and report layouts.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProfileOptions {
    /// `N` is only formed where `H > h_floor_rel * max H`.
    pub h_floor_rel: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions { h_floor_rel: 1e-14 }
    }
}

/// Sphere integrals per radius that the identity checks consume.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SphereSums {
    /// `∫_S ⟨A∇u,∇u⟩`
    pub energy: Vec<f64>,
    /// `∫_S (Vu² + f u)` with the full nonlinearity
    pub potential: Vec<f64>,
    /// `∫_S f u` with the sublinear part only
    pub f_u: Vec<f64>,
    /// `∫_S ⟨A∇u,ν⟩²/μ`
    pub flux2: Vec<f64>,
    /// `∫_S u² div(A∇|x|)`
    pub div_term: Vec<f64>,
    /// `∫_S u ρ`
    pub u_rho: Vec<f64>,
    /// `∫_S ⟨∇u,x⟩ ρ`
    pub x_rho: Vec<f64>,
    /// `max_S |u|`
    pub sup: Vec<f64>,
}

/// Sampled frequency quantities on the field's radius grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrequencyProfile {
    pub schema_version: u32,
    pub dimension: usize,
    pub dr: f64,
    /// `A ≡ id` and `V ≡ 0`.
    pub model_coefficients: bool,
    pub r: Vec<f64>,
    /// `∫_S u² μ`
    pub h: Vec<f64>,
    /// `∫_B ⟨A∇u,∇u⟩ - ∫_B (Vu² + f u)`
    pub big_d: Vec<f64>,
    pub d1: Vec<f64>,
    /// `∫_B F(x,u)`
    pub d: Vec<f64>,
    /// `∫_S F(x,u)`
    pub dprime: Vec<f64>,
    /// `r D / H` where `H` is above the floor.
    pub freq: Vec<Option<f64>>,
    /// `∫_S u ⟨A∇u,ν⟩`
    pub surface_d: Vec<f64>,
    /// `∫_S u²`
    pub plain_h: Vec<f64>,
    /// `∫_B u ρ`
    pub ball_u_rho: Vec<f64>,
    /// `∫_B ⟨∇u,x⟩ ρ`
    pub ball_x_rho: Vec<f64>,
    /// `∫_B f u`
    pub ball_f_u: Vec<f64>,
    /// `∫_S ⟨A∇u,ν⟩²/μ - surfaceD²/H`
    pub cs_gap: Vec<f64>,
    pub h_floor: f64,
    /// Extreme eigenvalues of `A` over the sampled nodes.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `kinks[k]`: the profile may be non-smooth between radii `k` and `k+1`
    /// (sign changes of a radial profile).
    pub kinks: Vec<bool>,
    pub sphere: SphereSums,
}

fn nu_of(x: &Vector, r: f64) -> Vector {
    if r > 0.0 {
        [x[0] / r, x[1] / r, x[2] / r]
    } else {
        [1.0, 0.0, 0.0]
    }
}

fn dot(a: &Vector, b: &Vector) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `div(A∇|x|) = (∂_i a_ij) x_j / r + (tr A - μ) / r` at `x ≠ 0`.
pub fn div_a_grad_norm(s: &CoefficientSample, n: usize, x: &Vector) -> f64 {
    let r = math::norm(&x[..n]);
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += s.grad[i].get(i, j) * x[j];
        }
    }
    let mu = s.a.form(x, x) / (r * r);
    (acc + s.a.trace() - mu) / r
}

/// `μ`, `Z = A x / μ`, its Jacobian `jac[h][j] = ∂_h Z_j` and `div Z` at `x ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZSample {
    pub mu: f64,
    pub z: Vector,
    pub jac: [[f64; 3]; 3],
    pub div_z: f64,
}

pub fn z_field(s: &CoefficientSample, n: usize, x: &Vector) -> ZSample {
    let r2: f64 = (0..n).map(|k| x[k] * x[k]).sum();
    let ax = s.a.mul_vec(x);
    let axx = dot(&ax, x);
    let mu = axx / r2;
    let mut z = [0.0; 3];
    for j in 0..n {
        z[j] = ax[j] / mu;
    }
    let mut jac = [[0.0; 3]; 3];
    let mut div_z = 0.0;
    for h in 0..n {
        let dax = s.grad[h].mul_vec(x);
        let dmu = (dot(&dax, x) + 2.0 * ax[h]) / r2 - 2.0 * axx * x[h] / (r2 * r2);
        for j in 0..n {
            let d_axj = dax[j] + s.a.get(j, h);
            jac[h][j] = d_axj / mu - ax[j] * dmu / (mu * mu);
        }
        div_z += jac[h][h];
    }
    ZSample { mu, z, jac, div_z }
}

fn kinks_of(field: &SolutionField) -> Vec<bool> {
    let n = field.n_radii();
    match &field.repr {
        Representation::Radial(f) => (0..n - 1)
            .map(|k| {
                let (a, b) = (f.u[k], f.u[k + 1]);
                a * b < 0.0 || ((a == 0.0) != (b == 0.0))
            })
            .collect(),
        Representation::Grid2d(_) => vec![false; n - 1],
    }
}

impl FrequencyProfile {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn outer_radius(&self) -> f64 {
        *self.r.last().unwrap_or(&0.0)
    }

    pub fn index_of(&self, r: f64) -> Result<usize> {
        let x = r / self.dr;
        let i = libm::round(x);
        if !(r >= 0.0) || i as usize >= self.len() || (x - i).abs() > 1e-9 {
            return Err(Error::OutOfGrid {
                radius: r,
                max: self.outer_radius(),
            });
        }
        Ok(i as usize)
    }

    /// Derivative of a profile array with a window that avoids kinks and
    /// non-finite entries; `(value, error estimate)`.
    pub fn derivative(&self, values: &[f64], i: usize) -> Option<(f64, f64)> {
        fd4_first_clean(values, self.dr, i, |s| {
            (s..s + 4).all(|k| !self.kinks[k]) && values[s..s + 5].iter().all(|v| v.is_finite())
        })
    }

    /// Interior radii used by the identity checks.
    pub fn audited(&self) -> core::ops::Range<usize> {
        2..self.len().saturating_sub(2)
    }

    /// `N` with `NaN` where it is undefined.
    pub fn freq_or_nan(&self) -> Vec<f64> {
        self.freq.iter().map(|v| v.unwrap_or(f64::NAN)).collect()
    }

    /// `D'(r)` as the sphere integral of the volume density.
    pub fn d_prime_exact(&self) -> Vec<f64> {
        self.sphere.energy.iter().zip(&self.sphere.potential).map(|(a, b)| a - b).collect()
    }
}

/// Computes the frequency profile on every radius of the field's grid.
pub fn frequency_profile(spec: &ProblemSpec, field: &SolutionField, opts: ProfileOptions) -> Result<FrequencyProfile> {
    spec.validate()?;
    if field.dimension() != spec.dimension {
        return Err(Error::invalid("field", "dimension differs from the problem"));
    }
    if !(opts.h_floor_rel >= 0.0) {
        return Err(Error::invalid("h_floor_rel", "must be non-negative"));
    }
    let spheres = field.spheres(spec)?;
    let n = spec.dimension;
    let nr = spheres.len();
    let mut h = vec![0.0; nr];
    let mut plain = vec![0.0; nr];
    let mut sd = vec![0.0; nr];
    let mut fsum = vec![0.0; nr];
    let mut ss = SphereSums {
        energy: vec![0.0; nr],
        potential: vec![0.0; nr],
        f_u: vec![0.0; nr],
        flux2: vec![0.0; nr],
        div_term: vec![0.0; nr],
        u_rho: vec![0.0; nr],
        x_rho: vec![0.0; nr],
        sup: vec![0.0; nr],
    };
    let (mut lmin, mut lmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, sph) in spheres.iter().enumerate() {
        let r = sph.r;
        for (node, &w) in sph.nodes.iter().zip(&sph.weights) {
            let x = node.x;
            let cs = spec.coefficients.sample(&x);
            let (lo, hi) = cs.a.eigen_bounds();
            lmin = lmin.min(lo);
            lmax = lmax.max(hi);
            let u = node.u;
            let ag = cs.a.mul_vec(&node.grad);
            let nu = nu_of(&x, r);
            let mu = if r > 0.0 { cs.a.form(&x, &x) / (r * r) } else { cs.a.form(&nu, &nu) };
            let flux = dot(&ag, &nu);
            let v = spec.potential.eval(&x);
            let big_f = spec.nonlinearity.primitive(&x, u)?;
            h[i] += w * u * u * mu;
            plain[i] += w * u * u;
            sd[i] += w * u * flux;
            fsum[i] += w * big_f;
            ss.energy[i] += w * dot(&ag, &node.grad);
            ss.potential[i] += w * (v * u * u + spec.nonlinearity.total(&x, u) * u);
            ss.f_u[i] += w * spec.nonlinearity.f(&x, u) * u;
            ss.flux2[i] += w * flux * flux / mu;
            if r > 0.0 {
                ss.div_term[i] += w * u * u * div_a_grad_norm(&cs, n, &x);
            }
            ss.u_rho[i] += w * u * node.rho;
            ss.x_rho[i] += w * dot(&node.grad, &x) * node.rho;
            ss.sup[i] = ss.sup[i].max(u.abs());
        }
    }
    let dr = field.dr();
    let (d1, pot, d, ball_f_u) = match &field.repr {
        // |u|^q-type integrands are only Hölder at zeros of a radial profile
        Representation::Radial(f) => {
            let area = math::unit_sphere_area(n);
            let w = |s: f64| area * math::powi(s, n as i32 - 1);
            let x = |s: f64| [s, 0.0, 0.0];
            let nl = &spec.nonlinearity;
            (
                radial_cumulative(f, &|s, _, du| w(s) * du * du)?,
                radial_cumulative(f, &|s, u, _| w(s) * nl.total(&x(s), u) * u)?,
                radial_cumulative(f, &|s, u, _| w(s) * nl.primitive(&x(s), u).unwrap_or(f64::NAN))?,
                radial_cumulative(f, &|s, u, _| w(s) * nl.f(&x(s), u) * u)?,
            )
        }
        Representation::Grid2d(_) => (
            cumulative_simpson(&ss.energy, dr),
            cumulative_simpson(&ss.potential, dr),
            cumulative_simpson(&fsum, dr),
            cumulative_simpson(&ss.f_u, dr),
        ),
    };
    let big_d: Vec<f64> = d1.iter().zip(&pot).map(|(a, b)| a - b).collect();
    let h_max = h.iter().copied().fold(0.0, f64::max);
    let h_floor = opts.h_floor_rel * h_max;
    let r: Vec<f64> = spheres.iter().map(|s| s.r).collect();
    let freq = (0..nr)
        .map(|i| {
            if r[i] > 0.0 && h[i] > h_floor && h[i] > 0.0 {
                Some(r[i] * big_d[i] / h[i])
            } else {
                None
            }
        })
        .collect();
    let cs_gap = (0..nr)
        .map(|i| {
            if h[i] > h_floor && h[i] > 0.0 {
                ss.flux2[i] - sd[i] * sd[i] / h[i]
            } else {
                0.0
            }
        })
        .collect();
    Ok(FrequencyProfile {
        schema_version: SCHEMA_VERSION,
        dimension: n,
        dr,
        model_coefficients: spec.coefficients.is_identity() && spec.potential.is_zero(),
        ball_u_rho: cumulative_simpson(&ss.u_rho, dr),
        ball_x_rho: cumulative_simpson(&ss.x_rho, dr),
        ball_f_u,
        r,
        h,
        big_d,
        d1,
        d,
        dprime: fsum,
        freq,
        surface_d: sd,
        plain_h: plain,
        cs_gap,
        h_floor,
        lambda_min: lmin,
        lambda_max: lmax,
        kinks: kinks_of(field),
        sphere: ss,
    })
}

fn sphere_at(spec: &ProblemSpec, field: &SolutionField, r: f64) -> Result<(usize, Vec<SphereNodes>)> {
    let i = field.index_of(r)?;
    Ok((i, field.spheres(spec)?))
}

/// `∫_{S_r} g` over the field's nodes on the sphere of radius `r`.
pub fn sphere_integral(spec: &ProblemSpec, field: &SolutionField, r: f64, g: impl Fn(&crate::field::NodeData) -> f64) -> Result<f64> {
    let (i, s) = sphere_at(spec, field, r)?;
    Ok(s[i].integrate(g))
}

/// `∫_{B_r} g`: composite Simpson over radii of sphere integrals.
pub fn ball_integral(spec: &ProblemSpec, field: &SolutionField, r: f64, g: impl Fn(&crate::field::NodeData) -> f64) -> Result<f64> {
    let (i, s) = sphere_at(spec, field, r)?;
    let per: Vec<f64> = s.iter().map(|sp| sp.integrate(&g)).collect();
    Ok(cumulative_simpson(&per, field.dr())[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CheckKind {
    /// `lhs = rhs`
    Equality,
    /// `lhs >= rhs - slack`
    LowerBound,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

/// Per-radius outcome of one identity or inequality.
///
/// For equalities the residual is `|lhs - rhs|`; for lower bounds it is the
/// violation `max(0, rhs - slack - lhs)`. Relative residuals divide by
/// `scale`, the largest term magnitude over the audited radii.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IdentityReport {
    pub schema_version: u32,
    pub name: String,
    pub kind: CheckKind,
    pub radii: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub slack: Vec<f64>,
    pub abs_residual: Vec<f64>,
    pub rel_residual: Vec<f64>,
    pub scale: f64,
    pub tolerance: f64,
    pub max_rel_residual: f64,
    pub pass: bool,
    pub flags: Vec<String>,
    pub columns: Vec<Column>,
}

impl IdentityReport {
    fn build(name: &str, kind: CheckKind, rows: Vec<Row>, scale_floor: f64, tolerance: f64) -> Self {
        let mut scale = rows.iter().map(|r| r.scale).fold(0.0, f64::max);
        if scale == 0.0 {
            scale = scale_floor.max(1.0);
        }
        let mut rep = IdentityReport {
            schema_version: SCHEMA_VERSION,
            name: name.to_string(),
            kind,
            radii: Vec::with_capacity(rows.len()),
            lhs: Vec::new(),
            rhs: Vec::new(),
            slack: Vec::new(),
            abs_residual: Vec::new(),
            rel_residual: Vec::new(),
            scale,
            tolerance,
            max_rel_residual: 0.0,
            pass: true,
            flags: Vec::new(),
            columns: Vec::new(),
        };
        for row in &rows {
            let res = match kind {
                CheckKind::Equality => (row.lhs - row.rhs).abs(),
                CheckKind::LowerBound => (row.rhs - row.slack - row.lhs).max(0.0),
            };
            let rel = res / scale;
            rep.radii.push(row.r);
            rep.lhs.push(row.lhs);
            rep.rhs.push(row.rhs);
            rep.slack.push(row.slack);
            rep.abs_residual.push(res);
            rep.rel_residual.push(rel);
            // NaN residuals count as failures
            if !(rel <= rep.max_rel_residual) {
                rep.max_rel_residual = if rel.is_nan() { f64::INFINITY } else { rel };
            }
        }
        if rows.is_empty() {
            rep.flags.push("no audited radii".to_string());
        }
        rep.pass = !rows.is_empty() && rep.max_rel_residual <= tolerance;
        for (k, name) in rows.first().map(|r| r.extra_names).unwrap_or(&[]).iter().enumerate() {
            rep.columns.push(Column {
                name: name.to_string(),
                values: rows.iter().map(|r| r.extra[k]).collect(),
            });
        }
        rep
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    /// Radius with the largest relative residual.
    pub fn worst_radius(&self) -> Option<f64> {
        let k = (0..self.radii.len()).max_by(|&a, &b| self.rel_residual[a].total_cmp(&self.rel_residual[b]))?;
        Some(self.radii[k])
    }

    fn coarse_guard(&mut self, n_radii: usize) {
        if n_radii < COARSE_RADII {
            self.tolerance *= COARSE_INFLATION;
            self.pass = !self.radii.is_empty() && self.max_rel_residual <= self.tolerance;
            self.flags
                .push(format!("coarse grid ({n_radii} radii): tolerance inflated x{COARSE_INFLATION}"));
        }
    }
}

/// Grids with fewer radii get inflated tolerances and a flag.
const COARSE_RADII: usize = 16;
const COARSE_INFLATION: f64 = 100.0;

struct Row {
    r: f64,
    lhs: f64,
    rhs: f64,
    slack: f64,
    scale: f64,
    extra_names: &'static [&'static str],
    extra: Vec<f64>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Default tolerances of the identity checks (relative to the largest term).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct IdentityTolerances {
    pub h_prime_radial: f64,
    pub h_prime_grid: f64,
    pub pohozaev: f64,
    pub pohozaev_defect: f64,
    pub rellich: f64,
    pub derivative_one: f64,
    pub d_forms: f64,
    pub divergence: f64,
    /// Absolute floor for the Cauchy–Schwarz gap.
    pub cs_gap: f64,
}

impl Default for IdentityTolerances {
    fn default() -> Self {
        IdentityTolerances {
            h_prime_radial: 1e-6,
            h_prime_grid: 5e-5,
            pohozaev: 1e-6,
            pohozaev_defect: 1e-4,
            rellich: 5e-6,
            derivative_one: 1e-6,
            d_forms: 1e-6,
            divergence: 1e-6,
            cs_gap: 1e-10,
        }
    }
}

/// `H' = 2 surfaceD + ∫_S u² div(A∇|x|)`; with `A = id` this is
/// `H' = (N-1)/r H + 2 surfaceD`. `H'` by fourth-order differences.
pub fn verify_h_prime(profile: &FrequencyProfile, radial: bool, tol: &IdentityTolerances) -> IdentityReport {
    let nm1 = profile.dimension as f64 - 1.0;
    let mut rows = Vec::new();
    for i in profile.audited() {
        let r = profile.r[i];
        let Some((hp, est)) = profile.derivative(&profile.h, i) else { continue };
        let model = nm1 / r * profile.h[i] + 2.0 * profile.surface_d[i];
        let general = 2.0 * profile.surface_d[i] + profile.sphere.div_term[i];
        let rhs = if profile.model_coefficients { model } else { general };
        let scale = hp
            .abs()
            .max((nm1 / r * profile.h[i]).abs())
            .max((2.0 * profile.surface_d[i]).abs())
            .max(profile.sphere.div_term[i].abs());
        rows.push(Row {
            r,
            lhs: hp,
            rhs,
            slack: 0.0,
            scale,
            extra_names: &["model_rhs", "general_rhs", "diff_error"],
            extra: vec![model, general, est],
        });
    }
    let t = if radial { tol.h_prime_radial } else { tol.h_prime_grid };
    let mut rep = IdentityReport::build("h_prime", CheckKind::Equality, rows, 0.0, t);
    rep.coarse_guard(profile.len());
    rep
}

pub fn model_exponent(spec: &ProblemSpec) -> Result<Option<f64>> {
    if !(spec.coefficients.is_identity() && spec.potential.is_zero()) {
        return Err(Error::Unsupported("model identities need A = id and V = 0"));
    }
    if spec.is_linear() {
        return Ok(None);
    }
    match spec.nonlinearity.homogeneous_q() {
        Some(q) => Ok(Some(q)),
        None => Err(Error::Unsupported("model identities need f = |u|^(q-2)u or f = 0")),
    }
}

struct PohozaevTerms {
    lhs: f64,
    uncorrected: f64,
    correction: f64,
    scale: f64,
}

fn pohozaev_terms(profile: &FrequencyProfile, q: Option<f64>, i: usize) -> PohozaevTerms {
    let n = profile.dimension as f64;
    let r = profile.r[i];
    let dprime = profile.sphere.energy[i] - profile.sphere.potential[i];
    let (vol, surf) = match q {
        Some(q) => {
            let c = c_constant(profile.dimension, q);
            (-c / (q * r) * profile.ball_f_u[i], (2.0 - q) / q * profile.sphere.f_u[i])
        }
        None => (0.0, 0.0),
    };
    let lead = (n - 2.0) / r * profile.big_d[i];
    let flux = 2.0 * profile.sphere.flux2[i];
    let correction = -2.0 / r * profile.ball_x_rho[i];
    let scale = [dprime, lead, vol, flux, surf, correction].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    PohozaevTerms {
        lhs: dprime,
        uncorrected: lead + vol + flux + surf,
        correction,
        scale,
    }
}

/// `D' = (N-2)/r D - C/(qr) ∫_B|u|^q + ∫_S (2u_ν² + (2-q)/q |u|^q) - (2/r) ∫_B ⟨∇u,x⟩ρ`
/// for `-Δu = |u|^{q-2}u - ρ` (the `q`-terms drop when `f = 0`).
pub fn verify_pohozaev_model(spec: &ProblemSpec, profile: &FrequencyProfile, tol: &IdentityTolerances) -> Result<IdentityReport> {
    let q = model_exponent(spec)?;
    let dfd: Vec<f64> = profile.big_d.clone();
    let mut rows = Vec::new();
    for i in profile.audited() {
        let t = pohozaev_terms(profile, q, i);
        let fd = profile.derivative(&dfd, i).map_or(f64::NAN, |v| v.0);
        rows.push(Row {
            r: profile.r[i],
            lhs: t.lhs,
            rhs: t.uncorrected + t.correction,
            slack: 0.0,
            scale: t.scale,
            extra_names: &["uncorrected_rhs", "correction", "defect", "d_prime_fd"],
            extra: vec![t.uncorrected, t.correction, t.lhs - t.uncorrected, fd],
        });
    }
    let mut rep = IdentityReport::build("pohozaev", CheckKind::Equality, rows, 0.0, tol.pohozaev);
    rep.coarse_guard(profile.len());
    Ok(rep)
}

/// Compares the defect of the uncorrected Pohozaev identity with the
/// `ρ`-correction term, relative to the largest correction.
pub fn verify_pohozaev_defect(spec: &ProblemSpec, profile: &FrequencyProfile, tol: &IdentityTolerances) -> Result<IdentityReport> {
    let q = model_exponent(spec)?;
    let mut rows = Vec::new();
    let mut corr_max: f64 = 0.0;
    for i in profile.audited() {
        let t = pohozaev_terms(profile, q, i);
        corr_max = corr_max.max(t.correction.abs());
        rows.push(Row {
            r: profile.r[i],
            lhs: t.lhs - t.uncorrected,
            rhs: t.correction,
            slack: 0.0,
            scale: 0.0,
            extra_names: &[],
            extra: vec![],
        });
    }
    for row in &mut rows {
        row.scale = corr_max;
    }
    let mut rep = IdentityReport::build("pohozaev_defect", CheckKind::Equality, rows, 0.0, tol.pohozaev_defect);
    if corr_max == 0.0 {
        rep.flags.push("correction term vanishes".to_string());
    }
    Ok(rep)
}

/// `N' >= (1/H)[(r/q)(2-q)∫_S|u|^q - (C/q)∫_B|u|^q]`, with the exact `ρ`
/// corrections `(2r/H)(surfaceD ∫_B uρ / H) - (2/H)∫_B⟨∇u,x⟩ρ` added to the
/// right side. Slack is the differentiation error estimate of `N'`.
pub fn verify_n_prime_bound(spec: &ProblemSpec, profile: &FrequencyProfile) -> Result<IdentityReport> {
    let q = model_exponent(spec)?;
    let nvals = profile.freq_or_nan();
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for i in profile.audited() {
        let (r, h) = (profile.r[i], profile.h[i]);
        let Some((np, est)) = profile.derivative(&nvals, i) else {
            skipped += 1;
            continue;
        };
        let bound = match q {
            Some(q) => {
                let c = c_constant(profile.dimension, q);
                (r / q * (2.0 - q) * profile.sphere.f_u[i] - c / q * profile.ball_f_u[i]) / h
            }
            None => 0.0,
        };
        let corr = 2.0 * r / h * (profile.surface_d[i] * profile.ball_u_rho[i] / h) - 2.0 * profile.ball_x_rho[i] / h;
        let gap_term = 2.0 * r / h * profile.cs_gap[i];
        // round-off of differencing N plus that of the right side
        let window = nvals[i.saturating_sub(2)..(i + 3).min(nvals.len())].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rounding = 64.0 * f64::EPSILON * (window / profile.dr + bound.abs() + corr.abs());
        rows.push(Row {
            r,
            lhs: np,
            rhs: bound + corr,
            slack: est + rounding,
            scale: np.abs().max(bound.abs()).max(corr.abs()).max(gap_term.abs()),
            extra_names: &["bound", "corrections", "gap_term", "cs_gap", "diff_error"],
            extra: vec![bound, corr, gap_term, profile.cs_gap[i], est],
        });
    }
    let mut rep = IdentityReport::build("n_prime_bound", CheckKind::LowerBound, rows, 0.0, 0.0);
    if skipped > 0 {
        rep.flags
            .push(format!("{skipped} radii without a clean stencil (H below floor or sign change)"));
    }
    Ok(rep)
}

/// `cs_gap = ∫_S ⟨A∇u,ν⟩²/μ - surfaceD²/H >= -tol` wherever `H` is above the floor.
pub fn verify_cs_gap(profile: &FrequencyProfile, tol: &IdentityTolerances) -> IdentityReport {
    let rows = (1..profile.len())
        .filter(|&i| profile.h[i] > profile.h_floor && profile.h[i] > 0.0)
        .map(|i| Row {
            r: profile.r[i],
            lhs: profile.cs_gap[i],
            rhs: 0.0,
            slack: tol.cs_gap,
            scale: 1.0,
            extra_names: &[],
            extra: vec![],
        })
        .collect();
    IdentityReport::build("cs_gap", CheckKind::LowerBound, rows, 1.0, 0.0)
}

/// `(log(H/r^{N-1}))' = 2N/r + 2∫_B uρ / H` for `A = id`, `V = 0`.
pub fn verify_derivative_one(spec: &ProblemSpec, profile: &FrequencyProfile, tol: &IdentityTolerances) -> Result<IdentityReport> {
    model_exponent(spec)?;
    let nm1 = profile.dimension as f64 - 1.0;
    let mut rows = Vec::new();
    for i in profile.audited() {
        let (r, h) = (profile.r[i], profile.h[i]);
        let Some(nf) = profile.freq[i] else { continue };
        let clean = (i.saturating_sub(2)..(i + 3).min(profile.len())).all(|k| profile.h[k] > profile.h_floor);
        if !clean {
            continue;
        }
        let Some((hp, est)) = profile.derivative(&profile.h, i) else { continue };
        let lhs = hp / h - nm1 / r;
        let rhs = 2.0 * nf / r + 2.0 * profile.ball_u_rho[i] / h;
        rows.push(Row {
            r,
            lhs,
            rhs,
            slack: 0.0,
            scale: lhs.abs().max(rhs.abs()),
            extra_names: &["diff_error"],
            extra: vec![est / h],
        });
    }
    let mut rep = IdentityReport::build("derivative_one", CheckKind::Equality, rows, 0.0, tol.derivative_one);
    rep.coarse_guard(profile.len());
    Ok(rep)
}

/// `surfaceD = D + ∫_B uρ`: surface and volume forms of `D`.
pub fn verify_d_forms(profile: &FrequencyProfile, tol: &IdentityTolerances) -> IdentityReport {
    let rows = profile
        .audited()
        .map(|i| Row {
            r: profile.r[i],
            lhs: profile.surface_d[i],
            rhs: profile.big_d[i] + profile.ball_u_rho[i],
            slack: 0.0,
            scale: profile.surface_d[i].abs().max(profile.d1[i].abs()).max(profile.big_d[i].abs()),
            extra_names: &[],
            extra: vec![],
        })
        .collect();
    let mut rep = IdentityReport::build("d_forms", CheckKind::Equality, rows, 0.0, tol.d_forms);
    rep.coarse_guard(profile.len());
    rep
}

/// `d` non-decreasing and `d' >= 0` (round-off slack `1e-14 max d`).
pub fn verify_d_monotone(profile: &FrequencyProfile) -> IdentityReport {
    let slack = 1e-14 * max_abs(&profile.d).max(max_abs(&profile.dprime));
    let rows = (1..profile.len())
        .map(|i| Row {
            r: profile.r[i],
            lhs: (profile.d[i] - profile.d[i - 1]).min(profile.dprime[i]),
            rhs: 0.0,
            slack,
            scale: 1.0,
            extra_names: &[],
            extra: vec![],
        })
        .collect();
    IdentityReport::build("d_monotone", CheckKind::LowerBound, rows, 1.0, 0.0)
}

/// `(ε0^q/κ2) ‖u‖_{L∞(S)}^{2-q} ∫_S F >= ∫_S u²`; the column
/// `effective_constant` is `∫_S u² / (‖u‖^{2-q} ∫_S F)`.
pub fn verify_u2_bounds(spec: &ProblemSpec, profile: &FrequencyProfile) -> Result<IdentityReport> {
    let nl = &spec.nonlinearity;
    if !(nl.kappa2 > 0.0) {
        return Err(Error::invalid("kappa2", "the u² bound needs kappa2 > 0"));
    }
    let q = nl.q;
    let c = math::powf(nl.eps0, q) / nl.kappa2;
    let rows = (1..profile.len())
        .map(|i| {
            let sup = profile.sphere.sup[i];
            let base = if sup > 0.0 { math::powf(sup, 2.0 - q) * profile.dprime[i] } else { 0.0 };
            let bound = c * base;
            let eff = if base > 0.0 { profile.plain_h[i] / base } else { 0.0 };
            Row {
                r: profile.r[i],
                lhs: bound,
                rhs: profile.plain_h[i],
                slack: 1e-12 * bound.abs(),
                scale: bound.abs().max(profile.plain_h[i].abs()),
                extra_names: &["effective_constant"],
                extra: vec![eff],
            }
        })
        .collect();
    let mut rep = IdentityReport::build("u2_bound", CheckKind::LowerBound, rows, 1.0, 0.0);
    rep.flags.push(format!("eps0^q/kappa2 = {c:.12e}"));
    Ok(rep)
}

/// `∫_S (2F - f u) >= (2-q) ∫_S F`.
pub fn verify_f_inequality(spec: &ProblemSpec, profile: &FrequencyProfile) -> IdentityReport {
    let q = spec.nonlinearity.q;
    let rows = (1..profile.len())
        .map(|i| {
            let lhs = 2.0 * profile.dprime[i] - profile.sphere.f_u[i];
            let rhs = (2.0 - q) * profile.dprime[i];
            Row {
                r: profile.r[i],
                lhs,
                rhs,
                slack: 1e-12 * lhs.abs().max(rhs.abs()),
                scale: lhs.abs().max(rhs.abs()),
                extra_names: &[],
                extra: vec![],
            }
        })
        .collect();
    IdentityReport::build("f_inequality", CheckKind::LowerBound, rows, 1.0, 0.0)
}

fn coefficient_sample(spec: &ProblemSpec, x: &Vector) -> CoefficientSample {
    spec.coefficients.sample(x)
}

/// `∫_B f ⟨Z,∇u⟩ = r ∫_S F - ∫_B (F div Z + ⟨∇₁F, Z⟩)`.
pub fn verify_divergence_identity(spec: &ProblemSpec, field: &SolutionField, tol: &IdentityTolerances) -> Result<IdentityReport> {
    let spheres = field.spheres(spec)?;
    let n = spec.dimension;
    let nr = spheres.len();
    let (mut lhs_s, mut vol_s, mut f_s) = (vec![0.0; nr], vec![0.0; nr], vec![0.0; nr]);
    for (i, sph) in spheres.iter().enumerate() {
        if sph.r == 0.0 {
            continue;
        }
        for (node, &w) in sph.nodes.iter().zip(&sph.weights) {
            let x = node.x;
            let zs = z_field(&coefficient_sample(spec, &x), n, &x);
            let big_f = spec.nonlinearity.primitive(&x, node.u)?;
            let gf = spec.nonlinearity.grad_x_primitive(&x, node.u, n, spec.fd_step())?;
            lhs_s[i] += w * spec.nonlinearity.f(&x, node.u) * dot(&zs.z, &node.grad);
            vol_s[i] += w * (big_f * zs.div_z + dot(&gf, &zs.z));
            f_s[i] += w * big_f;
        }
    }
    let dr = field.dr();
    let lhs_b = cumulative_simpson(&lhs_s, dr);
    let vol_b = cumulative_simpson(&vol_s, dr);
    let last = nr.saturating_sub(2);
    let rows = (2..last)
        .map(|i| {
            let r = spheres[i].r;
            let surf = r * f_s[i];
            Row {
                r,
                lhs: lhs_b[i],
                rhs: surf - vol_b[i],
                slack: 0.0,
                scale: lhs_b[i].abs().max(surf.abs()).max(vol_b[i].abs()),
                extra_names: &[],
                extra: vec![],
            }
        })
        .collect();
    let mut rep = IdentityReport::build("divergence_identity", CheckKind::Equality, rows, 0.0, tol.divergence);
    rep.coarse_guard(nr);
    Ok(rep)
}

/// Per-radius terms of the Rellich-type identities for `⟨A∇u,∇u⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct RellichTerms {
    pub r: Vec<f64>,
    /// `∫_B ⟨Z, ∇⟨A∇u,∇u⟩⟩` with the gradient of the energy density by differences.
    pub lhs: Vec<f64>,
    /// `∫_B ⟨Z,∇a_hl⟩ ∂_h u ∂_l u`
    pub t1: Vec<f64>,
    /// `2 ∫_S ⟨Z,∇u⟩⟨A∇u,ν⟩`
    pub t2: Vec<f64>,
    /// `2 ∫_B ⟨Z,∇u⟩ (Vu + f)`
    pub t3: Vec<f64>,
    /// `-2 ∫_B a_hl ∂_h Z_j ∂_j u ∂_l u`
    pub t4: Vec<f64>,
    /// `-2 ∫_B ⟨Z,∇u⟩ ρ`
    pub correction: Vec<f64>,
    /// `∫_B div Z ⟨A∇u,∇u⟩`
    pub div_energy: Vec<f64>,
    /// `r ∫_S ⟨A∇u,∇u⟩`
    pub surface_energy: Vec<f64>,
    /// `max_S |⟨Z,ν⟩ - r|`
    pub z_nu_defect: Vec<f64>,
}

impl RellichTerms {
    pub fn rhs(&self, i: usize) -> f64 {
        self.t1[i] + self.t2[i] + self.t3[i] + self.t4[i] + self.correction[i]
    }
}

pub fn rellich_terms(spec: &ProblemSpec, field: &SolutionField) -> Result<RellichTerms> {
    if !matches!(field.repr, Representation::Grid2d(_)) {
        return Err(Error::Unsupported("Rellich-type identities are checked on 2-D grid fields"));
    }
    let spheres = field.spheres(spec)?;
    let n = spec.dimension;
    let nr = spheres.len();
    let z = || vec![0.0; nr];
    let (mut lhs, mut t1, mut t2, mut t3, mut t4, mut corr, mut de, mut se, mut znu) = (z(), z(), z(), z(), z(), z(), z(), z(), z());
    for (i, sph) in spheres.iter().enumerate() {
        let r = sph.r;
        if r == 0.0 {
            continue;
        }
        for (node, &w) in sph.nodes.iter().zip(&sph.weights) {
            let x = node.x;
            let g = node.grad;
            let cs = coefficient_sample(spec, &x);
            let zs = z_field(&cs, n, &x);
            let ag = cs.a.mul_vec(&g);
            let e = dot(&ag, &g);
            let nu = nu_of(&x, r);
            let zg = dot(&zs.z, &g);
            let mut da = Mat::zeros(n);
            for k in 0..n {
                da = da.add(&cs.grad[k].scale(zs.z[k]));
            }
            let mut jz = 0.0;
            for h in 0..n {
                let dz_grad: f64 = (0..n).map(|j| zs.jac[h][j] * g[j]).sum();
                jz += ag[h] * dz_grad;
            }
            let eq = spec.potential.eval(&x) * node.u + spec.nonlinearity.total(&x, node.u);
            lhs[i] += w * dot(&zs.z, &node.grad_energy);
            t1[i] += w * da.form(&g, &g);
            t2[i] += w * 2.0 * zg * dot(&ag, &nu);
            t3[i] += w * 2.0 * zg * eq;
            t4[i] += w * (-2.0 * jz);
            corr[i] += w * (-2.0 * zg * node.rho);
            de[i] += w * zs.div_z * e;
            se[i] += w * e;
            znu[i] = f64::max(znu[i], (dot(&zs.z, &nu) - r).abs());
        }
    }
    let dr = field.dr();
    let r: Vec<f64> = spheres.iter().map(|s| s.r).collect();
    Ok(RellichTerms {
        lhs: cumulative_simpson(&lhs, dr),
        t1: cumulative_simpson(&t1, dr),
        t2,
        t3: cumulative_simpson(&t3, dr),
        t4: cumulative_simpson(&t4, dr),
        correction: cumulative_simpson(&corr, dr),
        div_energy: cumulative_simpson(&de, dr),
        surface_energy: se.iter().zip(&r).map(|(s, r)| s * r).collect(),
        z_nu_defect: znu,
        r,
    })
}

/// The two Rellich-type identities with the `ρ` correction:
///
/// `∫_B ⟨Z,∇e⟩ = T1 + T2 + T3 + T4 - 2∫_B⟨Z,∇u⟩ρ` and
/// `r ∫_S e = ∫_B div Z e + T1 + T2 + T3 + T4 - 2∫_B⟨Z,∇u⟩ρ`,
/// where `e = ⟨A∇u,∇u⟩`. The first uses differences of `e`, the second only
/// exact ingredients.
pub fn verify_rellich_general(spec: &ProblemSpec, field: &SolutionField, tol: &IdentityTolerances) -> Result<(IdentityReport, IdentityReport, RellichTerms)> {
    let t = rellich_terms(spec, field)?;
    let nr = t.r.len();
    let terms = |i: usize| [t.t1[i], t.t2[i], t.t3[i], t.t4[i], t.correction[i]].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut grad_form = Vec::new();
    let mut surface_form = Vec::new();
    for i in 2..nr.saturating_sub(2) {
        let rhs = t.rhs(i);
        grad_form.push(Row {
            r: t.r[i],
            lhs: t.lhs[i],
            rhs,
            slack: 0.0,
            scale: terms(i).max(t.lhs[i].abs()),
            extra_names: &["t1", "t2", "t3", "t4", "correction"],
            extra: vec![t.t1[i], t.t2[i], t.t3[i], t.t4[i], t.correction[i]],
        });
        let rhs10 = t.div_energy[i] + rhs;
        surface_form.push(Row {
            r: t.r[i],
            lhs: t.surface_energy[i],
            rhs: rhs10,
            slack: 0.0,
            scale: terms(i).max(t.surface_energy[i].abs()).max(t.div_energy[i].abs()),
            extra_names: &["div_energy", "z_nu_defect"],
            extra: vec![t.div_energy[i], t.z_nu_defect[i]],
        });
    }
    let mut grad_rep = IdentityReport::build("rellich_gradient_form", CheckKind::Equality, grad_form, 0.0, tol.rellich);
    let mut surface_rep = IdentityReport::build("rellich_surface_form", CheckKind::Equality, surface_form, 0.0, tol.rellich);
    grad_rep.coarse_guard(nr);
    surface_rep.coarse_guard(nr);
    Ok((grad_rep, surface_rep, t))
}

/// All checks that apply to `spec` and `field`, in a fixed order.
pub fn all_reports(spec: &ProblemSpec, field: &SolutionField, profile: &FrequencyProfile, tol: &IdentityTolerances) -> Result<Vec<IdentityReport>> {
    let radial = matches!(field.repr, Representation::Radial(_));
    let mut out = vec![
        verify_h_prime(profile, radial, tol),
        verify_d_forms(profile, tol),
        verify_cs_gap(profile, tol),
        verify_d_monotone(profile),
    ];
    let model = model_exponent(spec).is_ok();
    if model {
        out.push(verify_pohozaev_model(spec, profile, tol)?);
        out.push(verify_n_prime_bound(spec, profile)?);
        out.push(verify_derivative_one(spec, profile, tol)?);
    }
    if !spec.is_linear() {
        out.push(verify_f_inequality(spec, profile));
        if spec.nonlinearity.kappa2 > 0.0 {
            out.push(verify_u2_bounds(spec, profile)?);
        }
        out.push(verify_divergence_identity(spec, field, tol)?);
    }
    if !radial {
        let (grad_form, surface_form, _) = verify_rellich_general(spec, field, tol)?;
        out.push(grad_form);
        out.push(surface_form);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::field::PolarGrid;
    use crate::model::CoefficientField;
    use crate::solver::{glued_radial, solve_radial, ManufacturedProblem};

    fn grid(nr: usize, nt: usize, g: impl Fn(&Vector) -> f64) -> SolutionField {
        SolutionField::from_grid(PolarGrid::sample(nr, nt, 1.0, g).unwrap())
    }

    fn tol() -> IdentityTolerances {
        IdentityTolerances::default()
    }

    #[test]
    fn sphere_and_ball_integrals() {
        let spec = ProblemSpec::linear(2, 1.0);
        let one = grid(33, 64, |_| 1.0);
        let v = sphere_integral(&spec, &one, 1.0, |n| n.u * n.u).unwrap();
        assert!((v - 2.0 * math::PI).abs() < 1e-12);
        let x1 = grid(33, 64, |x| x[0]);
        let r = 0.5;
        let v = sphere_integral(&spec, &x1, r, |n| n.u * n.u).unwrap();
        assert!((v - math::PI * r * r * r).abs() < 1e-12);
        let v = ball_integral(&spec, &x1, r, |n| dot(&n.grad, &n.grad)).unwrap();
        assert!((v - math::PI * r * r).abs() < 1e-10);
        assert!(matches!(sphere_integral(&spec, &x1, 2.0, |n| n.u), Err(Error::OutOfGrid { .. })));
    }

    #[test]
    fn harmonic_frequencies() {
        let spec = ProblemSpec::linear(2, 1.0);
        for (k, f) in [(1.0, grid(65, 512, |x| x[0])), (2.0, grid(65, 512, |x| x[0] * x[1]))] {
            let p = frequency_profile(&spec, &f, ProfileOptions::default()).unwrap();
            for i in 1..p.len() {
                let n = p.freq[i].unwrap();
                assert!((n - k).abs() < 1e-6, "k={k} r={} N={n}", p.r[i]);
            }
        }
    }

    #[test]
    fn linear_field_identities_exact() {
        let spec = ProblemSpec::linear(2, 1.0);
        let f = grid(65, 64, |x| x[0]);
        let p = frequency_profile(&spec, &f, ProfileOptions::default()).unwrap();
        let h = verify_h_prime(&p, false, &tol());
        assert!(h.max_rel_residual < 1e-10, "{}", h.max_rel_residual);
        let mr = h.column("model_rhs").unwrap();
        let gr = h.column("general_rhs").unwrap();
        for (a, b) in mr.iter().zip(gr) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
        let poh = verify_pohozaev_model(&spec, &p, &tol()).unwrap();
        assert!(poh.max_rel_residual < 1e-8, "{}", poh.max_rel_residual);
        let np = verify_n_prime_bound(&spec, &p).unwrap();
        assert!(np.pass);
        for v in np.lhs.iter().chain(&np.rhs) {
            assert!(v.abs() < 1e-8);
        }
        for g in &p.cs_gap {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn z_field_identity_and_contact() {
        let cf = CoefficientField::identity(2);
        let x = [0.3, -0.4, 0.0];
        let z = z_field(&cf.sample(&x), 2, &x);
        assert_eq!(z.mu, 1.0);
        assert!((z.z[0] - 0.3).abs() < 1e-15 && (z.z[1] + 0.4).abs() < 1e-15);
        assert!((z.div_z - 2.0).abs() < 1e-15);
        let cf = CoefficientField::from_entries(2, vec![Expr::parse("1 + x1^2/4").unwrap(), Expr::Num(0.1), Expr::Num(1.0)]).unwrap();
        let s = cf.sample(&x);
        let z = z_field(&s, 2, &x);
        let r = 0.5;
        assert!((dot(&z.z, &[x[0] / r, x[1] / r, 0.0]) - r).abs() < 1e-12);
        // Jacobian against central differences
        let hstep = 1e-5;
        for h in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[h] += hstep;
            xm[h] -= hstep;
            let zp = z_field(&cf.sample(&xp), 2, &xp).z;
            let zm = z_field(&cf.sample(&xm), 2, &xm).z;
            for j in 0..2 {
                let fd = (zp[j] - zm[j]) / (2.0 * hstep);
                assert!((fd - z.jac[h][j]).abs() < 1e-8, "{h}{j}");
            }
        }
    }

    #[test]
    fn radial_solution_identities() {
        for (n, q) in [(2, 1.5), (3, 1.5), (2, 1.0), (3, 1.0)] {
            let spec = ProblemSpec::model(n, 4.0, q);
            let f = solve_radial(&spec, 0.5, 2e-3).unwrap();
            let p = frequency_profile(&spec, &f, ProfileOptions::default()).unwrap();
            let hp = verify_h_prime(&p, true, &tol());
            assert!(hp.pass, "N={n} q={q} H' {} at {:?}", hp.max_rel_residual, hp.worst_radius());
            let poh = verify_pohozaev_model(&spec, &p, &tol()).unwrap();
            assert!(poh.pass, "N={n} q={q} Pohozaev {} at {:?}", poh.max_rel_residual, poh.worst_radius());
            let np = verify_n_prime_bound(&spec, &p).unwrap();
            assert!(np.pass, "N={n} q={q} N' violation {} at {:?}", np.max_rel_residual, np.worst_radius());
            assert!(verify_cs_gap(&p, &tol()).pass);
            assert!(verify_d_monotone(&p).pass);
            assert!(verify_u2_bounds(&spec, &p).unwrap().pass);
            assert!(verify_f_inequality(&spec, &p).pass);
            let df = verify_d_forms(&p, &tol());
            assert!(df.pass, "N={n} q={q} D forms {}", df.max_rel_residual);
        }
    }

    #[test]
    fn glued_defect_matches_correction() {
        let spec = ProblemSpec::model(2, 1.0, 1.5);
        let f = glued_radial(2, 1.5, 0.3, 1.0, 2000).unwrap();
        let p = frequency_profile(&spec, &f, ProfileOptions::default()).unwrap();
        let rep = verify_pohozaev_defect(&spec, &p, &tol()).unwrap();
        assert!(rep.pass, "{}", rep.max_rel_residual);
        let poh = verify_pohozaev_model(&spec, &p, &tol()).unwrap();
        assert!(poh.pass, "{}", poh.max_rel_residual);
        let corr = poh.column("correction").unwrap();
        assert!(max_abs(corr) > 1e-3);
    }

    #[test]
    fn manufactured_rellich_identities() {
        let mp = ManufacturedProblem::default_2d(1.0);
        let f = mp.sample(129, 128).unwrap();
        let (grad_form, surface_form, t) = verify_rellich_general(&mp.spec, &f, &tol()).unwrap();
        assert!(grad_form.pass, "gradient form {}", grad_form.max_rel_residual);
        assert!(surface_form.pass, "surface form {}", surface_form.max_rel_residual);
        assert!(t.z_nu_defect.iter().all(|d| *d < 1e-12));
        let p = frequency_profile(&mp.spec, &f, ProfileOptions::default()).unwrap();
        let hp = verify_h_prime(&p, false, &tol());
        assert!(hp.pass, "{}", hp.max_rel_residual);
    }

    #[test]
    fn constant_field_rellich_trivial() {
        let mp = ManufacturedProblem::default_2d(1.0);
        let f = grid(33, 32, |_| 0.7);
        let t = rellich_terms(&mp.spec, &f).unwrap();
        for i in 0..t.r.len() {
            assert!(t.lhs[i].abs() < 1e-12 && t.rhs(i).abs() < 1e-12 && t.surface_energy[i].abs() < 1e-12);
        }
    }

    #[test]
    fn u2_bound_constant_field_ratio() {
        let spec = ProblemSpec::model(2, 1.0, 1.5);
        let f = grid(17, 32, |_| 0.4);
        let p = frequency_profile(&spec, &f, ProfileOptions::default()).unwrap();
        let rep = verify_u2_bounds(&spec, &p).unwrap();
        assert!(rep.pass);
        for v in &rep.column("effective_constant").unwrap()[1..] {
            assert!((v - 1.5).abs() < 1e-12);
        }
    }
}
