//! Solution fields: radial profiles in any dimension and 2-D polar grids.
//!
//! Polar grids use node radii `r_i = i Δr` (`i = 0` is the origin, stored as a
//! replicated row) and angles `θ_j = 2πj/n_θ` with `n_θ` divisible by 4.
//! Radial derivatives run along full lines through the origin, using
//! `u(-r, θ) = u(r, θ + π)`, with fourth-order stencils; angular derivatives
//! are spectral (exact for trigonometric polynomials of degree `< n_θ/2`).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, PI};
use crate::model::ProblemSpec;
use crate::ode::{hermite, OdeTrajectory};
use crate::quad::adaptive_simpson_budget;
use crate::Vector;

/// Radial profile `u(|x|)` sampled at `r_i = i h` together with `u'`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RadialField {
    pub dimension: usize,
    pub h: f64,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
}

/// Values on a polar grid, row-major `values[i * nt + j]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolarGrid {
    pub nr: usize,
    pub nt: usize,
    pub dr: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Representation {
    Radial(RadialField),
    Grid2d(PolarGrid),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolutionField {
    pub repr: Representation,
    /// Discretization error estimate of the producer, if known.
    pub truncation_estimate: Option<f64>,
}

impl PolarGrid {
    pub fn new(nr: usize, nt: usize, outer_radius: f64) -> Result<Self> {
        if nr < 6 {
            return Err(Error::invalid("nr", "need at least 6 radial nodes"));
        }
        if nt < 8 || !nt.is_multiple_of(4) {
            return Err(Error::invalid("ntheta", "need at least 8 angles, divisible by 4"));
        }
        if !(outer_radius > 0.0) {
            return Err(Error::invalid("outer_radius", "must be positive"));
        }
        Ok(PolarGrid {
            nr,
            nt,
            dr: outer_radius / (nr - 1) as f64,
            values: vec![0.0; nr * nt],
        })
    }

    /// Samples `g(x)` at every node.
    pub fn sample(nr: usize, nt: usize, outer_radius: f64, g: impl Fn(&Vector) -> f64) -> Result<Self> {
        let mut grid = Self::new(nr, nt, outer_radius)?;
        let origin = g(&[0.0; 3]);
        for j in 0..nt {
            grid.values[j] = origin;
        }
        for i in 1..nr {
            for j in 0..nt {
                let x = grid.point(i, j);
                grid.values[i * nt + j] = g(&x);
            }
        }
        Ok(grid)
    }

    pub fn outer_radius(&self) -> f64 {
        self.dr * (self.nr - 1) as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.nt as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.dtheta() * j as f64
    }

    pub fn point(&self, i: usize, j: usize) -> Vector {
        let r = self.dr * i as f64;
        let th = self.theta(j);
        [r * math::cos(th), r * math::sin(th), 0.0]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nt + j]
    }

    /// Same shape, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        PolarGrid { values, ..*self }
    }
}

/// Geometry of a polar grid without values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarGridShape {
    pub nr: usize,
    pub nt: usize,
    pub dr: f64,
}

impl PolarGridShape {
    fn of(g: &PolarGrid) -> Self {
        PolarGridShape { nr: g.nr, nt: g.nt, dr: g.dr }
    }

    fn dtheta(&self) -> f64 {
        2.0 * PI / self.nt as f64
    }

    /// Value of `arr` at signed radial index `s` on the line through `θ_j`.
    fn line(&self, arr: &[f64], s: isize, j: usize) -> f64 {
        if s >= 0 {
            arr[s as usize * self.nt + j]
        } else {
            arr[(-s) as usize * self.nt + (j + self.nt / 2) % self.nt]
        }
    }

    /// Fourth-order first derivative along the line through `θ_j` at radial
    /// index `i`, from a signed-index getter.
    fn d_line(&self, get: impl Fn(isize) -> f64, i: usize) -> f64 {
        let top = self.nr as isize - 1;
        let start = (i as isize - 2).min(top - 4);
        let k = i as isize - start;
        let w: [f64; 5] = match k {
            0 => [-25.0, 48.0, -36.0, 16.0, -3.0],
            1 => [-3.0, -10.0, 18.0, -6.0, 1.0],
            2 => [1.0, -8.0, 0.0, 8.0, -1.0],
            3 => [-1.0, 6.0, -18.0, 10.0, 3.0],
            _ => [3.0, -16.0, 36.0, -48.0, 25.0],
        };
        (0..5).map(|m| w[m] * get(start + m as isize)).sum::<f64>() / (12.0 * self.dr)
    }

    /// Fourth-order second derivative along the line through `θ_j`.
    fn d2_line(&self, get: impl Fn(isize) -> f64, i: usize) -> f64 {
        let top = self.nr as isize - 1;
        let ii = i as isize;
        let h2 = 12.0 * self.dr * self.dr;
        if ii + 2 <= top {
            return (-get(ii - 2) + 16.0 * get(ii - 1) - 30.0 * get(ii) + 16.0 * get(ii + 1) - get(ii + 2)) / h2;
        }
        let s = top - 5;
        let w: [f64; 6] = if ii == top {
            [-10.0, 61.0, -156.0, 214.0, -154.0, 45.0]
        } else {
            [1.0, -6.0, 14.0, -4.0, -15.0, 10.0]
        };
        (0..6).map(|m| w[m] * get(s + m as isize)).sum::<f64>() / h2
    }

    /// Spectral derivative in `θ` at node `(i, j)` (circulant cotangent rule).
    fn d_theta(&self, arr: &[f64], i: usize, j: usize) -> f64 {
        spectral_apply(&self.spectral_d1(), &arr[i * self.nt..(i + 1) * self.nt], j)
    }

    fn d2_theta(&self, arr: &[f64], i: usize, j: usize) -> f64 {
        spectral_apply(&self.spectral_d2(), &arr[i * self.nt..(i + 1) * self.nt], j)
    }

    /// First column `c[m]` of the periodic first-derivative matrix.
    fn spectral_d1(&self) -> Vec<f64> {
        let h = self.dtheta();
        (0..self.nt)
            .map(|m| {
                if m == 0 {
                    0.0
                } else {
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    0.5 * sign / libm::tan(0.5 * m as f64 * h)
                }
            })
            .collect()
    }

    fn spectral_d2(&self) -> Vec<f64> {
        let h = self.dtheta();
        (0..self.nt)
            .map(|m| {
                if m == 0 {
                    -PI * PI / (3.0 * h * h) - 1.0 / 6.0
                } else {
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    let s = math::sin(0.5 * m as f64 * h);
                    -0.5 * sign / (s * s)
                }
            })
            .collect()
    }

    /// Cartesian gradient of a nodal scalar at every node.
    pub fn gradient(&self, arr: &[f64]) -> Vec<[f64; 2]> {
        let (nr, nt) = (self.nr, self.nt);
        let mut out = vec![[0.0; 2]; nr * nt];
        // Origin: least squares over the directional derivatives of all lines.
        let mut g0 = [0.0; 2];
        for j in 0..nt {
            let th = self.dtheta() * j as f64;
            let d = self.d_line(|s| self.line(arr, s, j), 0);
            g0[0] += d * math::cos(th);
            g0[1] += d * math::sin(th);
        }
        g0[0] *= 2.0 / nt as f64;
        g0[1] *= 2.0 / nt as f64;
        for o in out.iter_mut().take(nt) {
            *o = g0;
        }
        for i in 1..nr {
            let r = self.dr * i as f64;
            for j in 0..nt {
                let th = self.dtheta() * j as f64;
                let (c, s) = (math::cos(th), math::sin(th));
                let ur = self.d_line(|k| self.line(arr, k, j), i);
                let ut = self.d_theta(arr, i, j) / r;
                out[i * nt + j] = [c * ur - s * ut, s * ur + c * ut];
            }
        }
        out
    }

    /// Divergence of a nodal Cartesian vector field `(wx, wy)`.
    pub fn divergence(&self, w: &[[f64; 2]]) -> Vec<f64> {
        let (nr, nt) = (self.nr, self.nt);
        let mut out = vec![0.0; nr * nt];
        let cs: Vec<(f64, f64)> = (0..nt)
            .map(|j| {
                let th = self.dtheta() * j as f64;
                (math::cos(th), math::sin(th))
            })
            .collect();
        // Component of w along the line direction e_j at signed index s.
        let along = |s: isize, j: usize| -> f64 {
            let (c, sn) = cs[j];
            let v = if s >= 0 {
                w[s as usize * nt + j]
            } else {
                w[(-s) as usize * nt + (j + nt / 2) % nt]
            };
            v[0] * c + v[1] * sn
        };
        // Origin: div = 2 * mean_j d/ds (w . e_j).
        let mut acc = 0.0;
        for j in 0..nt {
            acc += self.d_line(|s| along(s, j), 0);
        }
        let div0 = 2.0 * acc / nt as f64;
        for o in out.iter_mut().take(nt) {
            *o = div0;
        }
        let wt: Vec<f64> = (0..nr * nt)
            .map(|k| {
                let (c, s) = cs[k % nt];
                -w[k][0] * s + w[k][1] * c
            })
            .collect();
        for i in 1..nr {
            let r = self.dr * i as f64;
            for j in 0..nt {
                // (1/r) d/dr (r w_r) along the line: signed radius times component along e_j
                let drw = self.d_line(|s| s as f64 * self.dr * along(s, j), i);
                let dtw = self.d_theta(&wt, i, j);
                out[i * nt + j] = (drw + dtw) / r;
            }
        }
        out
    }

    /// Cartesian Hessian `[u_xx, u_xy, u_yy]` from polar second differences.
    pub fn hessian(&self, arr: &[f64]) -> Vec<[f64; 3]> {
        let (nr, nt) = (self.nr, self.nt);
        let mut out = vec![[0.0; 3]; nr * nt];
        // Origin: second directional derivatives d_j = e_jᵀ H e_j; fit H.
        let (mut a0, mut a2c, mut a2s) = (0.0, 0.0, 0.0);
        for j in 0..nt {
            let th = self.dtheta() * j as f64;
            let d = self.d2_line(|s| self.line(arr, s, j), 0);
            a0 += d;
            a2c += d * math::cos(2.0 * th);
            a2s += d * math::sin(2.0 * th);
        }
        let n = nt as f64;
        let (mean, c2, s2) = (a0 / n, 2.0 * a2c / n, 2.0 * a2s / n);
        // d(θ) = (uxx+uyy)/2 + (uxx-uyy)/2 cos2θ + uxy sin2θ
        for o in out.iter_mut().take(nt) {
            *o = [mean + c2, s2, mean - c2];
        }
        let rt: Vec<f64> = (0..nr * nt)
            .map(|k| {
                let (i, j) = (k / nt, k % nt);
                if i == 0 {
                    0.0
                } else {
                    self.d_theta(arr, i, j)
                }
            })
            .collect();
        for i in 1..nr {
            let r = self.dr * i as f64;
            for j in 0..nt {
                let th = self.dtheta() * j as f64;
                let (c, s) = (math::cos(th), math::sin(th));
                let ur = self.d_line(|k| self.line(arr, k, j), i);
                let urr = self.d2_line(|k| self.line(arr, k, j), i);
                let ut = rt[i * nt + j];
                let utt = self.d2_theta(arr, i, j);
                // in signed polar coordinates u_θ(-r, θ) = u_θ(r, θ + π)
                let urt = self.d_line(
                    |k| {
                        if k >= 0 {
                            rt[k as usize * nt + j]
                        } else {
                            rt[(-k) as usize * nt + (j + nt / 2) % nt]
                        }
                    },
                    i,
                );
                let a = urr;
                let b = ur / r + utt / (r * r);
                let m = urt / r - ut / (r * r);
                let uxx = c * c * a + s * s * b - 2.0 * s * c * m;
                let uyy = s * s * a + c * c * b + 2.0 * s * c * m;
                let uxy = s * c * (a - b) + (c * c - s * s) * m;
                out[i * nt + j] = [uxx, uxy, uyy];
            }
        }
        out
    }
}

/// `(D v)_j = Σ_k c[(j - k) mod n] v_k` for a circulant matrix with column `c`.
fn spectral_apply(c: &[f64], v: &[f64], j: usize) -> f64 {
    let n = v.len();
    (0..n).map(|k| c[(j + n - k) % n] * v[k]).sum()
}

/// Per-node data consumed by the frequency analysis.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeData {
    pub x: Vector,
    pub u: f64,
    pub grad: Vector,
    pub rho: f64,
    /// Gradient of `<A∇u, ∇u>` (grid fields only).
    pub grad_energy: Vector,
}

/// Nodes on one sphere with their surface quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereNodes {
    pub r: f64,
    pub weights: Vec<f64>,
    pub nodes: Vec<NodeData>,
}

impl SphereNodes {
    pub fn integrate(&self, g: impl Fn(&NodeData) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(n, w)| w * g(n)).sum()
    }
}

impl SolutionField {
    pub fn radial(traj: &OdeTrajectory) -> Self {
        SolutionField {
            repr: Representation::Radial(RadialField {
                dimension: traj.dimension,
                h: traj.h,
                u: traj.u.clone(),
                du: traj.du.clone(),
            }),
            truncation_estimate: None,
        }
    }

    pub fn from_radial(field: RadialField) -> Self {
        SolutionField {
            repr: Representation::Radial(field),
            truncation_estimate: None,
        }
    }

    pub fn from_grid(grid: PolarGrid) -> Self {
        SolutionField {
            repr: Representation::Grid2d(grid),
            truncation_estimate: None,
        }
    }

    pub fn dimension(&self) -> usize {
        match &self.repr {
            Representation::Radial(f) => f.dimension,
            Representation::Grid2d(_) => 2,
        }
    }

    pub fn dr(&self) -> f64 {
        match &self.repr {
            Representation::Radial(f) => f.h,
            Representation::Grid2d(g) => g.dr,
        }
    }

    pub fn n_radii(&self) -> usize {
        match &self.repr {
            Representation::Radial(f) => f.u.len(),
            Representation::Grid2d(g) => g.nr,
        }
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.dr() * i as f64
    }

    pub fn outer_radius(&self) -> f64 {
        self.radius(self.n_radii() - 1)
    }

    /// Grid index of radius `r`, or an error when `r` is off the grid.
    pub fn index_of(&self, r: f64) -> Result<usize> {
        let x = r / self.dr();
        let i = libm::round(x);
        if !(r >= 0.0) || i as usize >= self.n_radii() || (x - i).abs() > 1e-9 {
            return Err(Error::OutOfGrid {
                radius: r,
                max: self.outer_radius(),
            });
        }
        Ok(i as usize)
    }

    /// Values on the sphere of index `i`.
    pub fn sphere_values(&self, i: usize) -> &[f64] {
        match &self.repr {
            Representation::Radial(f) => core::slice::from_ref(&f.u[i]),
            Representation::Grid2d(g) => &g.values[i * g.nt..(i + 1) * g.nt],
        }
    }

    /// `max |u|` over the sphere of index `i`.
    pub fn sup_on_sphere(&self, i: usize) -> f64 {
        self.sphere_values(i).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖u‖_{L∞(B_{r_i})}` for every radius index.
    pub fn sup_on_balls(&self) -> Vec<f64> {
        let mut acc: f64 = 0.0;
        (0..self.n_radii())
            .map(|i| {
                acc = acc.max(self.sup_on_sphere(i));
                acc
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        *self.sup_on_balls().last().unwrap_or(&0.0)
    }

    /// Residual `ρ = div(A∇u) + Vu + f(x,u)` at every node.
    pub fn residual(&self, spec: &ProblemSpec) -> Result<Vec<f64>> {
        residual_field(spec, self)
    }

    /// All per-sphere node data, sphere weights included.
    pub fn spheres(&self, spec: &ProblemSpec) -> Result<Vec<SphereNodes>> {
        let rho = residual_field(spec, self)?;
        match &self.repr {
            Representation::Radial(f) => {
                let area = math::unit_sphere_area(f.dimension);
                Ok((0..f.u.len())
                    .map(|i| {
                        let r = f.h * i as f64;
                        SphereNodes {
                            r,
                            weights: vec![area * math::powi(r, f.dimension as i32 - 1)],
                            nodes: vec![NodeData {
                                x: [r, 0.0, 0.0],
                                u: f.u[i],
                                grad: [f.du[i], 0.0, 0.0],
                                rho: rho[i],
                                grad_energy: [0.0; 3],
                            }],
                        }
                    })
                    .collect())
            }
            Representation::Grid2d(g) => {
                let shape = PolarGridShape::of(g);
                let grad = shape.gradient(&g.values);
                let mut energy = vec![0.0; g.values.len()];
                for i in 0..g.nr {
                    for j in 0..g.nt {
                        let k = i * g.nt + j;
                        let x = g.point(i, j);
                        let a = spec.coefficients.eval(&x);
                        let gv = [grad[k][0], grad[k][1], 0.0];
                        energy[k] = a.form(&gv, &gv);
                    }
                }
                let grad_e = shape.gradient(&energy);
                let w = g.dtheta();
                Ok((0..g.nr)
                    .map(|i| {
                        let r = g.dr * i as f64;
                        SphereNodes {
                            r,
                            weights: vec![r * w; g.nt],
                            nodes: (0..g.nt)
                                .map(|j| {
                                    let k = i * g.nt + j;
                                    NodeData {
                                        x: g.point(i, j),
                                        u: g.values[k],
                                        grad: [grad[k][0], grad[k][1], 0.0],
                                        rho: rho[k],
                                        grad_energy: [grad_e[k][0], grad_e[k][1], 0.0],
                                    }
                                })
                                .collect(),
                        }
                    })
                    .collect())
            }
        }
    }

    /// Cartesian Hessian `[u_xx, u_xy, u_yy]` at every node of a grid field.
    pub fn hessian(&self) -> Result<Vec<[f64; 3]>> {
        match &self.repr {
            Representation::Grid2d(g) => Ok(PolarGridShape::of(g).hessian(&g.values)),
            Representation::Radial(_) => Err(Error::Unsupported("Hessian is provided for grid fields")),
        }
    }

    /// Cartesian gradient at every node of a grid field.
    pub fn grid_gradient(&self) -> Result<Vec<[f64; 2]>> {
        match &self.repr {
            Representation::Grid2d(g) => Ok(PolarGridShape::of(g).gradient(&g.values)),
            Representation::Radial(_) => Err(Error::Unsupported("use the profile derivative for radial fields")),
        }
    }
}

/// First derivative of `f` at `i` with a five-point stencil that does not
/// straddle a sign change of `u` when such a stencil exists (the profile's
/// second derivative is only Hölder continuous at zeros of `u`).
fn d1_sign_aware(f: &[f64], u: &[f64], h: f64, i: usize) -> f64 {
    let n = f.len();
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
    let clean = |s: usize| {
        let window = &u[s..s + 5];
        window.iter().all(|v| *v >= 0.0) || window.iter().all(|v| *v <= 0.0)
    };
    let start = order.iter().copied().find(|&s| s <= i && i < s + 5 && clean(s)).unwrap_or(centered);
    let k = i - start;
    let w: [f64; 5] = match k {
        0 => [-25.0, 48.0, -36.0, 16.0, -3.0],
        1 => [-3.0, -10.0, 18.0, -6.0, 1.0],
        2 => [1.0, -8.0, 0.0, 8.0, -1.0],
        3 => [-1.0, 6.0, -18.0, 10.0, 3.0],
        _ => [3.0, -16.0, 36.0, -48.0, 25.0],
    };
    (0..5).map(|j| w[j] * f[start + j]).sum::<f64>() / (12.0 * h)
}

/// `∫ g(s, u(s)) ds` over cell `k` of the cubic Hermite interpolant, split at
/// its sign changes so that each piece is smooth up to an endpoint.
fn cell_integral(f: &RadialField, k: usize, g: &dyn Fn(f64, f64, f64) -> f64) -> Result<f64> {
    const PROBES: usize = 8;
    let a = f.h * k as f64;
    let b = a + f.h;
    let pd = |s: f64| hermite(f.h, f.u[k], f.du[k], f.u[k + 1], f.du[k + 1], (s - a) / f.h);
    let p = |s: f64| pd(s).0;
    let gp = |s: f64| {
        let (u, du) = pd(s);
        g(s, u, du)
    };
    let mut cuts = vec![a];
    let (mut s0, mut v0) = (a, p(a));
    for m in 1..=PROBES {
        let s1 = a + f.h * m as f64 / PROBES as f64;
        let v1 = p(s1);
        if v0 * v1 < 0.0 {
            let (mut lo, mut hi) = (s0, s1);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if p(lo) * p(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
        (s0, v0) = (s1, v1);
    }
    cuts.push(b);
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        acc += adaptive_simpson_budget(&gp, w[0], w[1], CELL_REL_TOL, CELL_BUDGET).0;
    }
    if !acc.is_finite() {
        return Err(Error::invalid("field", "non-finite integrand on the radial profile"));
    }
    Ok(acc)
}

/// Cumulative `∫_0^{r_k} g(s, u(s), u'(s)) ds` on the Hermite interpolant of
/// the profile; accurate for integrands that are only Hölder at zeros of `u`.
pub fn radial_cumulative(f: &RadialField, g: &dyn Fn(f64, f64, f64) -> f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; f.u.len()];
    for k in 0..f.u.len() - 1 {
        out[k + 1] = out[k] + cell_integral(f, k, g)?;
    }
    Ok(out)
}

const CELL_REL_TOL: f64 = 1e-12;
// Hermite derivatives lose digits when u barely changes across a cell; the
// budget stops refinement at the round-off floor.
const CELL_BUDGET: usize = 2000;

/// Radial residual `ρ = W' + (N-1)/r u'` with `W = u' + ∫_0^r f(s, u(s)) ds`.
/// `W' = u'' + f` stays smooth where `u''` alone has the `|u|^{q-1}`
/// singularity of the nonlinearity at zeros of `u`; at the origin
/// `ρ = N (W' - f) + f`.
fn radial_residual(spec: &ProblemSpec, f: &RadialField) -> Result<Vec<f64>> {
    let n = f.u.len();
    let nd = f.dimension as f64;
    let integral = radial_cumulative(f, &|s, u, _| spec.nonlinearity.total(&[s, 0.0, 0.0], u))?;
    let w: Vec<f64> = f.du.iter().zip(&integral).map(|(d, i)| d + i).collect();
    Ok((0..n)
        .map(|i| {
            let r = f.h * i as f64;
            let wp = d1_sign_aware(&w, &f.u, f.h, i);
            let fi = spec.nonlinearity.total(&[r, 0.0, 0.0], f.u[i]);
            if i == 0 {
                nd * (wp - fi) + fi
            } else {
                wp + (nd - 1.0) / r * f.du[i]
            }
        })
        .collect())
}

/// `ρ(x) = div(A∇u) + V(x)u + f(x,u)` at every node of the field.
///
/// Radial fields need `A = id` and `V = 0` (see `radial_residual`).
pub fn residual_field(spec: &ProblemSpec, field: &SolutionField) -> Result<Vec<f64>> {
    match &field.repr {
        Representation::Radial(f) => {
            if !spec.coefficients.is_identity() || !spec.potential.is_zero() {
                return Err(Error::Unsupported("radial fields require A = id and V = 0"));
            }
            if f.u.len() < 5 {
                return Err(Error::invalid("field", "radial profile too short"));
            }
            radial_residual(spec, f)
        }
        Representation::Grid2d(g) => {
            if spec.dimension != 2 {
                return Err(Error::invalid("dimension", "grid fields are two-dimensional"));
            }
            let shape = PolarGridShape::of(g);
            let grad = shape.gradient(&g.values);
            let mut flux = vec![[0.0; 2]; grad.len()];
            for i in 0..g.nr {
                for j in 0..g.nt {
                    let k = i * g.nt + j;
                    let a = spec.coefficients.eval(&g.point(i, j));
                    let gv = a.mul_vec(&[grad[k][0], grad[k][1], 0.0]);
                    flux[k] = [gv[0], gv[1]];
                }
            }
            let div = shape.divergence(&flux);
            Ok((0..g.nr * g.nt)
                .map(|k| {
                    let x = g.point(k / g.nt, k % g.nt);
                    let u = g.values[k];
                    div[k] + spec.potential.eval(&x) * u + spec.nonlinearity.total(&x, u)
                })
                .collect())
        }
    }
}
