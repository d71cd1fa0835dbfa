//! Solution generation: radial shooting, a 2-D polar finite-element solver for
//! `-div(A∇u) = Vu + f(x,u) + g` and manufactured problems.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{residual_field, PolarGrid, RadialField, Representation, SolutionField};
use crate::linalg::{conjugate_gradient, Csr};
use crate::math;
use crate::model::ProblemSpec;
use crate::ode::integrate_radial;
use crate::Vector;

/// Radial solution of `-Δu = f_q(u)` on `B_{δ1}` with `u(0) = a`.
///
/// The truncation estimate is `max |ρ_h - ρ_{h/2}|` over the common radii,
/// i.e. the step-halving change of the residual.
pub fn solve_radial(spec: &ProblemSpec, a: f64, h: f64) -> Result<SolutionField> {
    let q = match spec.nonlinearity.homogeneous_q() {
        Some(q) if spec.coefficients.is_identity() && spec.potential.is_zero() => q,
        _ => return Err(Error::Unsupported("radial solves need A = id, V = 0 and homogeneous f_q")),
    };
    if !(a.abs() > 0.0 && a.abs() < spec.nonlinearity.eps0) {
        return Err(Error::invalid("a", "need 0 < |a| < eps0"));
    }
    let coarse = integrate_radial(spec.dimension, q, a, spec.outer_radius, h)?;
    let fine = integrate_radial(spec.dimension, q, a, spec.outer_radius, 0.5 * h)?;
    let fc = SolutionField::radial(&coarse);
    let ff = SolutionField::radial(&fine);
    let rc = residual_field(spec, &fc)?;
    let rf = residual_field(spec, &ff)?;
    let mut est: f64 = 0.0;
    for (i, v) in rc.iter().enumerate() {
        if 2 * i < rf.len() {
            est = est.max((v - rf[2 * i]).abs());
        }
    }
    Ok(SolutionField {
        truncation_estimate: Some(est),
        ..fc
    })
}

/// Controls for the damped fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationControls {
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for IterationControls {
    fn default() -> Self {
        IterationControls {
            damping: 0.5,
            tol: 1e-10,
            max_iters: 500,
        }
    }
}

/// Result of a 2-D solve, also returned when the iteration did not converge.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolve {
    pub field: SolutionField,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-distance between successive iterates.
    pub distances: Vec<f64>,
    /// `‖ρ‖_∞` of the returned field, source term included.
    pub residual_sup: f64,
    pub cg_iterations: usize,
}

struct Mesh {
    nr: usize,
    nt: usize,
    dr: f64,
}

impl Mesh {
    fn node(&self, i: usize, j: usize) -> usize {
        if i == 0 {
            0
        } else {
            1 + (i - 1) * self.nt + j % self.nt
        }
    }

    fn n_nodes(&self) -> usize {
        1 + (self.nr - 1) * self.nt
    }

    fn point(&self, k: usize) -> Vector {
        if k == 0 {
            return [0.0; 3];
        }
        let i = 1 + (k - 1) / self.nt;
        let j = (k - 1) % self.nt;
        let r = self.dr * i as f64;
        let th = 2.0 * math::PI * j as f64 / self.nt as f64;
        [r * math::cos(th), r * math::sin(th), 0.0]
    }

    fn is_boundary(&self, k: usize) -> bool {
        k != 0 && 1 + (k - 1) / self.nt == self.nr - 1
    }

    fn triangles(&self) -> Vec<[usize; 3]> {
        let mut t = Vec::with_capacity((2 * self.nr) * self.nt);
        for j in 0..self.nt {
            t.push([0, self.node(1, j), self.node(1, j + 1)]);
        }
        for i in 1..self.nr - 1 {
            for j in 0..self.nt {
                let (a, b, c, d) = (self.node(i, j), self.node(i + 1, j), self.node(i + 1, j + 1), self.node(i, j + 1));
                t.push([a, b, c]);
                t.push([a, c, d]);
            }
        }
        t
    }
}

/// Assembled P1 stiffness and consistent mass matrices (triplets).
struct Assembly {
    stiffness: Vec<(usize, usize, f64)>,
    mass: Vec<(usize, usize, f64)>,
}

fn assemble(spec: &ProblemSpec, mesh: &Mesh) -> Result<Assembly> {
    let mut stiffness = Vec::new();
    let mut mass = Vec::new();
    for tri in mesh.triangles() {
        let p: [Vector; 3] = [mesh.point(tri[0]), mesh.point(tri[1]), mesh.point(tri[2])];
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let area = 0.5 * det.abs();
        if !(area > 0.0) {
            return Err(Error::invalid("grid", "degenerate triangle"));
        }
        // gradients of barycentric coordinates
        let mut g = [[0.0; 2]; 3];
        for k in 0..3 {
            let (b, c) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            g[k] = [(b[1] - c[1]) / det, (c[0] - b[0]) / det];
        }
        let centroid = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0, 0.0];
        let a = spec.coefficients.eval(&centroid);
        for k in 0..3 {
            let ag = a.mul_vec(&[g[k][0], g[k][1], 0.0]);
            for l in 0..3 {
                let v = area * (ag[0] * g[l][0] + ag[1] * g[l][1]);
                stiffness.push((tri[k], tri[l], v));
            }
            for l in 0..3 {
                let m = if k == l { area / 6.0 } else { area / 12.0 };
                mass.push((tri[k], tri[l], m));
            }
        }
    }
    Ok(Assembly { stiffness, mass })
}

/// Solves `-div(A∇u) = V u + f(x,u) + source` on the disk with Dirichlet data
/// `boundary[j]` at `θ_j`, by damped fixed-point iteration over P1 finite
/// elements (consistent mass) on the triangulated polar grid. Returns the last iterate even when
/// the iteration does not converge.
pub fn solve_grid_2d_partial(
    spec: &ProblemSpec,
    nr: usize,
    nt: usize,
    boundary: &[f64],
    source: Option<&dyn Fn(&Vector) -> f64>,
    controls: IterationControls,
) -> Result<GridSolve> {
    if spec.dimension != 2 {
        return Err(Error::Unsupported("the grid solver is two-dimensional"));
    }
    if controls.tol <= 0.0 || !(0.0..1.0).contains(&controls.damping) {
        return Err(Error::invalid("controls", "need tol > 0 and damping in [0,1)"));
    }
    let shape = PolarGrid::new(nr, nt, spec.outer_radius)?;
    if boundary.len() != nt {
        return Err(Error::invalid("boundary", "one value per angle expected"));
    }
    let mesh = Mesh { nr, nt, dr: shape.dr };
    let asm = assemble(spec, &mesh)?;
    let n = mesh.n_nodes();
    // interior numbering
    let mut map = vec![usize::MAX; n];
    let mut interior = Vec::new();
    for (k, m) in map.iter_mut().enumerate() {
        if !mesh.is_boundary(k) {
            *m = interior.len();
            interior.push(k);
        }
    }
    let mut u = vec![0.0; n];
    for j in 0..nt {
        u[mesh.node(nr - 1, j)] = boundary[j];
    }
    let mut trip = Vec::new();
    let mut lift = vec![0.0; interior.len()];
    for &(r, c, v) in &asm.stiffness {
        if map[r] == usize::MAX {
            continue;
        }
        if map[c] == usize::MAX {
            lift[map[r]] -= v * u[c];
        } else {
            trip.push((map[r], map[c], v));
        }
    }
    let k_ii = Csr::from_triplets(interior.len(), trip);
    // load rows for interior nodes, columns over all nodes
    let mass_rows = Csr::from_triplets(n, asm.mass.iter().filter(|t| map[t.0] != usize::MAX).copied().collect());
    let mut load = vec![0.0; n];
    let mut weighted = vec![0.0; n];
    let points: Vec<Vector> = (0..n).map(|k| mesh.point(k)).collect();
    let v_at: Vec<f64> = points.iter().map(|x| spec.potential.eval(x)).collect();
    let g_at: Vec<f64> = points.iter().map(|x| source.map_or(0.0, |s| s(x))).collect();

    let mut distances = Vec::new();
    let mut converged = false;
    let mut cg_iterations = 0;
    let mut w = vec![0.0; interior.len()];
    let mut iterations = 0;
    while iterations < controls.max_iters {
        iterations += 1;
        for k in 0..n {
            load[k] = v_at[k] * u[k] + spec.nonlinearity.total(&points[k], u[k]) + g_at[k];
        }
        mass_rows.mul_vec(&load, &mut weighted);
        let mut rhs = lift.clone();
        for (ii, &k) in interior.iter().enumerate() {
            rhs[ii] += weighted[k];
        }
        let stats = conjugate_gradient(&k_ii, &rhs, &mut w, 1e-14, 20 * interior.len() + 100)?;
        cg_iterations += stats.iterations;
        let mut dist: f64 = 0.0;
        let d = if iterations == 1 { 0.0 } else { controls.damping };
        for (ii, &k) in interior.iter().enumerate() {
            let next = d * u[k] + (1.0 - d) * w[ii];
            dist = dist.max((next - u[k]).abs());
            u[k] = next;
        }
        distances.push(dist);
        if iterations > 1 && dist < controls.tol {
            converged = true;
            break;
        }
        // Linear problems converge after one exact solve.
        if spec.is_linear() && spec.potential.is_zero() && iterations >= 2 {
            converged = dist < controls.tol;
            if converged {
                break;
            }
        }
    }
    let mut grid = shape;
    for i in 0..nr {
        for j in 0..nt {
            grid.values[i * nt + j] = u[mesh.node(i, j)];
        }
    }
    let mut field = SolutionField::from_grid(grid);
    let rho = residual_field(spec, &field)?;
    let residual_sup = match &field.repr {
        Representation::Grid2d(g) => rho
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let x = g.point(k / nt, k % nt);
                (r + source.map_or(0.0, |s| s(&x))).abs()
            })
            .fold(0.0, f64::max),
        Representation::Radial(_) => unreachable!(),
    };
    field.truncation_estimate = Some(residual_sup);
    Ok(GridSolve {
        field,
        converged,
        iterations,
        distances,
        residual_sup,
        cg_iterations,
    })
}

/// As [`solve_grid_2d_partial`], failing with the last distance when the
/// iteration does not converge.
pub fn solve_grid_2d(
    spec: &ProblemSpec,
    nr: usize,
    nt: usize,
    boundary: &[f64],
    source: Option<&dyn Fn(&Vector) -> f64>,
    controls: IterationControls,
) -> Result<GridSolve> {
    let out = solve_grid_2d_partial(spec, nr, nt, boundary, source, controls)?;
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: out.iterations,
            distance: *out.distances.last().unwrap_or(&f64::INFINITY),
        });
    }
    Ok(out)
}

/// Boundary values `g(δ1 cos θ_j, δ1 sin θ_j)`.
pub fn boundary_from(nt: usize, radius: f64, g: impl Fn(&Vector) -> f64) -> Vec<f64> {
    (0..nt)
        .map(|j| {
            let th = 2.0 * math::PI * j as f64 / nt as f64;
            g(&[radius * math::cos(th), radius * math::sin(th), 0.0])
        })
        .collect()
}

/// Method of manufactured solutions: a chosen `u_exact` and the source
/// `g = -div(A∇u_exact) - V u_exact - f(x, u_exact)` that makes it exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedProblem {
    pub spec: ProblemSpec,
    pub u_exact: Expr,
}

/// Step for differences of the exact gradient.
const MMS_STEP: f64 = 1e-3;

impl ManufacturedProblem {
    pub fn new(spec: ProblemSpec, u_exact: Expr) -> Result<Self> {
        if u_exact.uses_s() {
            return Err(Error::invalid("u_exact", "may not depend on s"));
        }
        if spec.dimension > crate::MAX_DIM {
            return Err(Error::Unsupported("manufactured problems need N <= 3"));
        }
        Ok(ManufacturedProblem { spec, u_exact })
    }

    /// `(δ1² - |x|²)²` with `A = diag(1 + x1²/4, 1)`, `V = 0`, no nonlinearity.
    pub fn default_2d(outer_radius: f64) -> Self {
        let mut spec = ProblemSpec::linear(2, outer_radius);
        spec.coefficients = crate::model::CoefficientField::from_entries(2, vec![Expr::parse("1 + x1^2/4").unwrap(), Expr::Num(0.0), Expr::Num(1.0)]).unwrap();
        let d2 = outer_radius * outer_radius;
        let u = Expr::parse(&alloc::format!("({d2:e} - x1^2 - x2^2)^2")).unwrap();
        ManufacturedProblem { spec, u_exact: u }
    }

    pub fn exact(&self, x: &Vector) -> f64 {
        self.u_exact.eval(x, 0.0)
    }

    fn flux(&self, x: &Vector) -> Vector {
        let d = self.u_exact.eval_dual(x, 0.0);
        let g = [d.d[0], d.d[1], d.d[2]];
        self.spec.coefficients.eval(x).mul_vec(&g)
    }

    /// `div(A∇u_exact)`: exact gradients, fourth-order central differences of the flux.
    pub fn divergence(&self, x: &Vector) -> f64 {
        let h = MMS_STEP * self.spec.outer_radius.max(1.0);
        let mut acc = 0.0;
        for k in 0..self.spec.dimension {
            let at = |o: f64| {
                let mut y = *x;
                y[k] += o;
                self.flux(&y)[k]
            };
            acc += (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        }
        acc
    }

    pub fn source(&self, x: &Vector) -> f64 {
        let u = self.exact(x);
        -self.divergence(x) - self.spec.potential.eval(x) * u - self.spec.nonlinearity.total(x, u)
    }

    /// `u_exact` sampled on a polar grid.
    pub fn sample(&self, nr: usize, nt: usize) -> Result<SolutionField> {
        Ok(SolutionField::from_grid(PolarGrid::sample(nr, nt, self.spec.outer_radius, |x| self.exact(x))?))
    }

    /// Solves the source-augmented problem with boundary data from `u_exact`.
    pub fn solve(&self, nr: usize, nt: usize, controls: IterationControls) -> Result<GridSolve> {
        let boundary = boundary_from(nt, self.spec.outer_radius, |x| self.exact(x));
        let src = |x: &Vector| self.source(x);
        solve_grid_2d(&self.spec, nr, nt, &boundary, Some(&src), controls)
    }
}

/// Builds a radial field from closed forms `u(r)` and `u'(r)` on `n + 1` radii.
pub fn radial_from_fn(dimension: usize, r_max: f64, n: usize, u: impl Fn(f64) -> f64, du: impl Fn(f64) -> f64) -> SolutionField {
    let h = r_max / n as f64;
    SolutionField::from_radial(RadialField {
        dimension,
        h,
        u: (0..=n).map(|i| u(h * i as f64)).collect(),
        du: (0..=n).map(|i| du(h * i as f64)).collect(),
    })
}

/// Field that vanishes on `B_{r0}` and follows the glued profile
/// `c (|x| - r0)^{2/(2-q)}` outside; it is not a solution of `-Δu = f_q(u)`.
pub fn glued_radial(dimension: usize, q: f64, r0: f64, r_max: f64, n: usize) -> Result<SolutionField> {
    crate::ode::counterexample_constants(q)?;
    Ok(radial_from_fn(
        dimension,
        r_max,
        n,
        |r| crate::ode::counterexample_profile(q, r0, r).map(|v| v.0).unwrap_or(0.0),
        |r| crate::ode::counterexample_derivative(q, r0, r).unwrap_or(0.0),
    ))
}

/// Closed-form residual of the glued field: `2P^{q-1} + (N-1)/r P'` outside
/// `B_{r0}`, zero inside.
pub fn glued_residual(dimension: usize, q: f64, r0: f64, r: f64) -> Result<f64> {
    let (u, _) = crate::ode::counterexample_profile(q, r0, r)?;
    let du = crate::ode::counterexample_derivative(q, r0, r)?;
    if r <= r0 {
        return Ok(0.0);
    }
    Ok(2.0 * math::signed_pow(u, q) + (dimension as f64 - 1.0) / r * du)
}

/// Glued field sampled on a polar grid.
pub fn glued_grid(q: f64, r0: f64, outer_radius: f64, nr: usize, nt: usize) -> Result<SolutionField> {
    crate::ode::counterexample_constants(q)?;
    let g = PolarGrid::sample(nr, nt, outer_radius, |x| {
        let r = math::norm(&x[..2]);
        crate::ode::counterexample_profile(q, r0, r).map(|v| v.0).unwrap_or(0.0)
    })?;
    Ok(SolutionField::from_grid(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProblemSpec;

    #[test]
    fn harmonic_extension_of_linear_data_is_exact() {
        let spec = ProblemSpec::linear(2, 1.0);
        let b = boundary_from(32, 1.0, |x| x[0]);
        let out = solve_grid_2d(&spec, 17, 32, &b, None, IterationControls::default()).unwrap();
        if let Representation::Grid2d(g) = &out.field.repr {
            for i in 0..g.nr {
                for j in 0..g.nt {
                    assert!((g.at(i, j) - g.point(i, j)[0]).abs() < 1e-11);
                }
            }
        }
    }

    fn quadratic_error(nr: usize, nt: usize) -> f64 {
        let spec = ProblemSpec::linear(2, 1.0);
        let exact = |x: &Vector| x[0] * x[0] - x[1] * x[1];
        let b = boundary_from(nt, 1.0, exact);
        let out = solve_grid_2d(&spec, nr, nt, &b, None, IterationControls::default()).unwrap();
        let mut err: f64 = 0.0;
        if let Representation::Grid2d(g) = &out.field.repr {
            for i in 0..g.nr {
                for j in 0..g.nt {
                    err = err.max((g.at(i, j) - exact(&g.point(i, j))).abs());
                }
            }
        }
        err
    }

    #[test]
    fn harmonic_quadratic_second_order() {
        let e1 = quadratic_error(17, 32);
        let e2 = quadratic_error(33, 64);
        let order = math::log2(e1 / e2);
        assert!((1.8..=2.2).contains(&order), "order {order} ({e1}, {e2})");
    }

    #[test]
    fn manufactured_recovery() {
        let mp = ManufacturedProblem::default_2d(1.0);
        let err = |nr: usize, nt: usize| {
            let out = mp.solve(nr, nt, IterationControls::default()).unwrap();
            let mut e: f64 = 0.0;
            if let Representation::Grid2d(g) = &out.field.repr {
                for i in 0..g.nr {
                    for j in 0..g.nt {
                        e = e.max((g.at(i, j) - mp.exact(&g.point(i, j))).abs());
                    }
                }
            }
            e
        };
        let (e1, e2) = (err(17, 32), err(33, 64));
        assert!(e2 < 0.3 * e1, "{e1} {e2}");
    }

    #[test]
    fn radial_solve_small_residual() {
        let spec = ProblemSpec::model(3, 1.0, 1.0);
        let f = solve_radial(&spec, 0.1, 1e-3).unwrap();
        let rho = residual_field(&spec, &f).unwrap();
        let sup = rho.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup < 1e-8, "{sup}");
    }

    #[test]
    fn glued_residual_matches_closed_form() {
        let spec = ProblemSpec::model(2, 1.0, 1.5);
        let f = glued_radial(2, 1.5, 0.3, 1.0, 1000).unwrap();
        let rho = residual_field(&spec, &f).unwrap();
        for (i, v) in rho.iter().enumerate().skip(400).step_by(50) {
            let r = i as f64 * 1e-3;
            let exact = glued_residual(2, 1.5, 0.3, r).unwrap();
            assert!((v - exact).abs() < 1e-9 * exact.abs().max(1.0), "{r} {v} {exact}");
        }
    }

    #[test]
    fn nonlinear_grid_solve_converges() {
        let spec = ProblemSpec::model(2, 1.0, 1.5);
        let b = boundary_from(32, 1.0, |x| 0.2 + 0.05 * x[0]);
        let out = solve_grid_2d(&spec, 17, 32, &b, None, IterationControls::default()).unwrap();
        assert!(out.converged);
        let d = &out.distances;
        for k in 5..d.len() - 1 {
            assert!(d[k + 1] <= d[k], "{d:?}");
        }
    }
}
