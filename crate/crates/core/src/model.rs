//! Problem data for `-div(A(x)∇u) = V(x)u + f(x,u)` on a ball, sample-based
//! assumption checks and the affine normalization `A(x0) = id`.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::Mat;
use crate::math::{self, abs_pow, signed_pow};
use crate::quad::adaptive_simpson;
use crate::{Vector, MAX_DIM};

/// Relative tolerance for the primitive of tabulated nonlinearities.
pub const PRIMITIVE_REL_TOL: f64 = 1e-10;

/// `C_{N,q} = 2N - (N-2) q`.
pub fn c_constant(n: usize, q: f64) -> f64 {
    2.0 * n as f64 - (n as f64 - 2.0) * q
}

/// Affine change of variables `T(x) = S x + x0`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AffineMap {
    pub linear: Mat,
    pub shift: Vector,
}

impl AffineMap {
    pub fn apply(&self, x: &Vector) -> Vector {
        let mut y = self.linear.mul_vec(x);
        for (yi, si) in y.iter_mut().zip(&self.shift) {
            *yi += si;
        }
        y
    }

    /// Pulls a gradient at `T(x)` back to `x`: `S^T g`.
    fn pull_gradient(&self, g: &Vector) -> Vector {
        self.linear.transpose().mul_vec(g)
    }
}

/// A scalar field on the domain (potential `V`, power coefficients `c_k`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ScalarField {
    Const(f64),
    Expr(#[cfg_attr(feature = "serde", serde(with = "expr_serde"))] Expr),
    Pullback { base: Box<ScalarField>, map: AffineMap },
}

impl ScalarField {
    pub fn zero() -> Self {
        ScalarField::Const(0.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarField::Const(c) if *c == 0.0)
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        self.eval_grad(x).0
    }

    pub fn eval_grad(&self, x: &Vector) -> (f64, Vector) {
        match self {
            ScalarField::Const(c) => (*c, [0.0; MAX_DIM]),
            ScalarField::Expr(e) => {
                let d = e.eval_dual(x, 0.0);
                let mut g = [0.0; MAX_DIM];
                g.copy_from_slice(&d.d[..MAX_DIM]);
                (d.v, g)
            }
            ScalarField::Pullback { base, map } => {
                let (v, g) = base.eval_grad(&map.apply(x));
                (v, map.pull_gradient(&g))
            }
        }
    }
}

/// Which candidate formula is used for the pulled-back coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PullbackCandidate {
    /// `S^{-1} A(T x) S^{-1}`, the change-of-variables pullback.
    Standard,
    /// `S A(T x)^{-1} S`, the literal alternative formula.
    InverseSandwich,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CoefficientKind {
    Identity,
    /// Constant diagonal matrix.
    Diagonal(Vec<f64>),
    /// `I + ε q qᵀ` with `q = (cos φ, sin φ, 0)`, `φ = x1 + x2`.
    RotationPerturbed {
        eps: f64,
    },
    /// Upper-triangular entries in row-major order (`a11, a12, .., a22, ..`).
    Entries(#[cfg_attr(feature = "serde", serde(with = "expr_vec_serde"))] Vec<Expr>),
    Pullback {
        base: Box<CoefficientField>,
        map: AffineMap,
        inv_sqrt: Mat,
        candidate: PullbackCandidate,
    },
}

/// Symmetric, uniformly elliptic coefficient matrix `A(x)` with entry gradients.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoefficientField {
    pub n: usize,
    pub kind: CoefficientKind,
}

/// `A(x)` together with `∂_h A(x)` for `h < n`.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientSample {
    pub a: Mat,
    pub grad: [Mat; MAX_DIM],
}

impl CoefficientField {
    pub fn identity(n: usize) -> Self {
        CoefficientField {
            n,
            kind: CoefficientKind::Identity,
        }
    }

    pub fn diagonal(d: Vec<f64>) -> Self {
        CoefficientField {
            n: d.len(),
            kind: CoefficientKind::Diagonal(d),
        }
    }

    pub fn rotation_perturbed(n: usize, eps: f64) -> Self {
        CoefficientField {
            n,
            kind: CoefficientKind::RotationPerturbed { eps },
        }
    }

    /// Builds from upper-triangular expression entries.
    pub fn from_entries(n: usize, entries: Vec<Expr>) -> Result<Self> {
        if entries.len() != n * (n + 1) / 2 {
            return Err(Error::invalid(
                "coefficients",
                format!("expected {} upper-triangular entries, got {}", n * (n + 1) / 2, entries.len()),
            ));
        }
        if entries.iter().any(|e| e.uses_s()) {
            return Err(Error::invalid("coefficients", "entries may not depend on s"));
        }
        Ok(CoefficientField {
            n,
            kind: CoefficientKind::Entries(entries),
        })
    }

    pub fn is_identity(&self) -> bool {
        match &self.kind {
            CoefficientKind::Identity => true,
            CoefficientKind::Diagonal(d) => d.iter().all(|&v| v == 1.0),
            _ => false,
        }
    }

    pub fn eval(&self, x: &Vector) -> Mat {
        self.sample(x).a
    }

    pub fn sample(&self, x: &Vector) -> CoefficientSample {
        let n = self.n;
        let zero = Mat::zeros(n);
        match &self.kind {
            CoefficientKind::Identity => CoefficientSample {
                a: Mat::identity(n),
                grad: [zero; MAX_DIM],
            },
            CoefficientKind::Diagonal(d) => CoefficientSample {
                a: Mat::diag(d),
                grad: [zero; MAX_DIM],
            },
            CoefficientKind::RotationPerturbed { eps } => {
                let phi = x[0] + x[1];
                let (c, s) = (math::cos(phi), math::sin(phi));
                let mut a = Mat::identity(n);
                a.m[0][0] += eps * c * c;
                a.m[0][1] += eps * c * s;
                a.m[1][0] += eps * c * s;
                a.m[1][1] += eps * s * s;
                let mut dphi = Mat::zeros(n);
                dphi.m[0][0] = -2.0 * eps * c * s;
                dphi.m[0][1] = eps * (c * c - s * s);
                dphi.m[1][0] = dphi.m[0][1];
                dphi.m[1][1] = 2.0 * eps * c * s;
                let mut grad = [zero; MAX_DIM];
                grad[0] = dphi;
                grad[1] = dphi;
                CoefficientSample { a, grad }
            }
            CoefficientKind::Entries(entries) => {
                let mut a = Mat::zeros(n);
                let mut grad = [zero; MAX_DIM];
                let mut k = 0;
                for i in 0..n {
                    for j in i..n {
                        let d = entries[k].eval_dual(x, 0.0);
                        k += 1;
                        a.m[i][j] = d.v;
                        a.m[j][i] = d.v;
                        for (h, g) in grad.iter_mut().enumerate().take(n) {
                            g.m[i][j] = d.d[h];
                            g.m[j][i] = d.d[h];
                        }
                    }
                }
                CoefficientSample { a, grad }
            }
            CoefficientKind::Pullback {
                base,
                map,
                inv_sqrt,
                candidate,
            } => {
                let y = map.apply(x);
                let inner = base.sample(&y);
                let s = &map.linear;
                // ∂_{x_h} B(Tx) = Σ_k ∂_k B(Tx) S_{kh}
                let chain = |g: &[Mat; MAX_DIM], h: usize| -> Mat {
                    let mut acc = Mat::zeros(n);
                    for (k, gk) in g.iter().enumerate().take(n) {
                        acc = acc.add(&gk.scale(s.get(k, h)));
                    }
                    acc
                };
                match candidate {
                    PullbackCandidate::Standard => {
                        let a = inv_sqrt.mul(&inner.a).mul(inv_sqrt);
                        let mut grad = [zero; MAX_DIM];
                        for (h, gh) in grad.iter_mut().enumerate().take(n) {
                            *gh = inv_sqrt.mul(&chain(&inner.grad, h)).mul(inv_sqrt);
                        }
                        CoefficientSample { a, grad }
                    }
                    PullbackCandidate::InverseSandwich => {
                        let ainv = inner.a.spd_inverse().unwrap_or(Mat::identity(n));
                        let a = s.mul(&ainv).mul(s);
                        let mut grad = [zero; MAX_DIM];
                        for (h, gh) in grad.iter_mut().enumerate().take(n) {
                            // ∂(A^{-1}) = -A^{-1} (∂A) A^{-1}
                            let da = chain(&inner.grad, h);
                            let dinv = ainv.mul(&da).mul(&ainv).scale(-1.0);
                            *gh = s.mul(&dinv).mul(s);
                        }
                        CoefficientSample { a, grad }
                    }
                }
            }
        }
    }

    /// Ellipticity function `λ(x) = min(λ_min(A(x)), 1/λ_max(A(x)))`.
    pub fn ellipticity(&self, x: &Vector) -> f64 {
        let (lo, hi) = self.eval(x).eigen_bounds();
        lo.min(1.0 / hi)
    }
}

/// One term `c_k(x) |s|^{q_k - 2} s` of a sum of powers.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PowerTerm {
    pub q: f64,
    pub coeff: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NonlinearityKind {
    /// `f_q(s) = |s|^{q-2} s` (`sgn(s)` when `q = 1`).
    Homogeneous {
        q: f64,
    },
    SumOfPowers {
        terms: Vec<PowerTerm>,
    },
    /// `f(x, s)` given as an expression; the primitive is computed by quadrature.
    Tabulated {
        #[cfg_attr(feature = "serde", serde(with = "expr_serde"))]
        f: Expr,
    },
}

/// Sublinear nonlinearity with the parameters of the structural assumptions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NonlinearitySpec {
    pub kind: NonlinearityKind,
    pub eps0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub q: f64,
    /// Optional weakly superlinear part `h(x, s)`; it is treated as part of the
    /// potential (`h(x,s)/s` must stay bounded) and excluded from `F`.
    #[cfg_attr(feature = "serde", serde(default, with = "opt_expr_serde"))]
    pub superlinear: Option<Expr>,
    /// Change of variables applied to `x` before evaluation.
    #[cfg_attr(feature = "serde", serde(default))]
    pub transform: Option<AffineMap>,
}

impl NonlinearitySpec {
    pub fn homogeneous(q: f64) -> Self {
        // F(x, ±1) = 1/q, so with ε0 = 1 the floor κ2 = 1/q is sharp.
        NonlinearitySpec {
            kind: NonlinearityKind::Homogeneous { q },
            eps0: 1.0,
            kappa1: 0.0,
            kappa2: 1.0 / q,
            q,
            superlinear: None,
            transform: None,
        }
    }

    pub fn sum_of_powers(terms: Vec<PowerTerm>) -> Self {
        let q = terms.iter().map(|t| t.q).fold(f64::NEG_INFINITY, f64::max);
        NonlinearitySpec {
            kind: NonlinearityKind::SumOfPowers { terms },
            eps0: 1.0,
            kappa1: 1.0,
            kappa2: 0.0,
            q,
            superlinear: None,
            transform: None,
        }
    }

    pub fn tabulated(f: Expr, q: f64) -> Self {
        NonlinearitySpec {
            kind: NonlinearityKind::Tabulated { f },
            eps0: 1.0,
            kappa1: 1.0,
            kappa2: 0.0,
            q,
            superlinear: None,
            transform: None,
        }
    }

    pub fn with_params(mut self, eps0: f64, kappa1: f64, kappa2: f64) -> Self {
        self.eps0 = eps0;
        self.kappa1 = kappa1;
        self.kappa2 = kappa2;
        self
    }

    /// Exponent of the homogeneous kind, if that is the kind.
    pub fn homogeneous_q(&self) -> Option<f64> {
        match self.kind {
            NonlinearityKind::Homogeneous { q } if self.superlinear.is_none() => Some(q),
            _ => None,
        }
    }

    fn map_x(&self, x: &Vector) -> Vector {
        match &self.transform {
            Some(t) => t.apply(x),
            None => *x,
        }
    }

    /// Sublinear part `f(x, s)`.
    pub fn f(&self, x: &Vector, s: f64) -> f64 {
        let y = self.map_x(x);
        match &self.kind {
            NonlinearityKind::Homogeneous { q } => signed_pow(s, *q),
            NonlinearityKind::SumOfPowers { terms } => terms.iter().map(|t| t.coeff.eval(&y) * signed_pow(s, t.q)).sum(),
            NonlinearityKind::Tabulated { f } => f.eval(&y, s),
        }
    }

    /// Full right-hand side nonlinearity `h(x, s) + f(x, s)`.
    pub fn total(&self, x: &Vector, s: f64) -> f64 {
        let h = match &self.superlinear {
            Some(h) => h.eval(&self.map_x(x), s),
            None => 0.0,
        };
        h + self.f(x, s)
    }

    /// Primitive `F(x, s) = ∫_0^s f(x, t) dt` of the sublinear part.
    pub fn primitive(&self, x: &Vector, s: f64) -> Result<f64> {
        let y = self.map_x(x);
        match &self.kind {
            NonlinearityKind::Homogeneous { q } => Ok(abs_pow(s, *q) / q),
            NonlinearityKind::SumOfPowers { terms } => Ok(terms.iter().map(|t| t.coeff.eval(&y) * abs_pow(s, t.q) / t.q).sum()),
            NonlinearityKind::Tabulated { f } => adaptive_simpson(&|t| f.eval(&y, t), 0.0, s, PRIMITIVE_REL_TOL),
        }
    }

    /// `∇₁F(x, s)`; closed form for sum of powers, central differences with
    /// step `fd_step` for tabulated kinds.
    pub fn grad_x_primitive(&self, x: &Vector, s: f64, n: usize, fd_step: f64) -> Result<Vector> {
        let mut g = [0.0; MAX_DIM];
        match &self.kind {
            NonlinearityKind::Homogeneous { .. } => {}
            NonlinearityKind::SumOfPowers { terms } => {
                let y = self.map_x(x);
                for t in terms {
                    let (_, gc) = t.coeff.eval_grad(&y);
                    let w = abs_pow(s, t.q) / t.q;
                    for (gi, ci) in g.iter_mut().zip(gc) {
                        *gi += ci * w;
                    }
                }
                if let Some(tr) = &self.transform {
                    g = tr.pull_gradient(&g);
                }
            }
            NonlinearityKind::Tabulated { .. } => {
                for h in 0..n {
                    let mut xp = *x;
                    let mut xm = *x;
                    xp[h] += fd_step;
                    xm[h] -= fd_step;
                    g[h] = (self.primitive(&xp, s)? - self.primitive(&xm, s)?) / (2.0 * fd_step);
                }
            }
        }
        Ok(g)
    }
}

/// Problem data on the ball `B_{δ1}(0) ⊂ R^N`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProblemSpec {
    pub dimension: usize,
    pub outer_radius: f64,
    pub coefficients: CoefficientField,
    pub potential: ScalarField,
    pub nonlinearity: NonlinearitySpec,
}

impl ProblemSpec {
    /// `-Δu = f_q(u)` on `B_{δ1} ⊂ R^N`.
    pub fn model(dimension: usize, outer_radius: f64, q: f64) -> Self {
        ProblemSpec {
            dimension,
            outer_radius,
            coefficients: CoefficientField::identity(dimension),
            potential: ScalarField::zero(),
            nonlinearity: NonlinearitySpec::homogeneous(q),
        }
    }

    /// `-Δu = 0` (no potential, no nonlinearity).
    pub fn linear(dimension: usize, outer_radius: f64) -> Self {
        let mut spec = Self::model(dimension, outer_radius, 1.5);
        spec.nonlinearity.kind = NonlinearityKind::SumOfPowers { terms: Vec::new() };
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::invalid("dimension", "N must be at least 2"));
        }
        if !(self.outer_radius > 0.0) {
            return Err(Error::invalid("outer_radius", "δ1 must be positive"));
        }
        if self.coefficients.n != self.dimension {
            return Err(Error::invalid("coefficients", "matrix size differs from N"));
        }
        let q = self.nonlinearity.q;
        let linear = matches!(&self.nonlinearity.kind, NonlinearityKind::SumOfPowers { terms } if terms.is_empty());
        if !linear && !(1.0..2.0).contains(&q) {
            return Err(Error::invalid("q", "q must lie in [1,2)"));
        }
        if !self.is_model_radial() && self.dimension > MAX_DIM {
            return Err(Error::Unsupported("point-wise fields need N <= 3"));
        }
        Ok(())
    }

    /// `A = id`, `V = 0` and homogeneous `f_q` (or no nonlinearity).
    pub fn is_model_radial(&self) -> bool {
        self.coefficients.is_identity() && self.potential.is_zero() && (self.nonlinearity.homogeneous_q().is_some() || self.is_linear())
    }

    /// `f ≡ 0` and no superlinear part.
    pub fn is_linear(&self) -> bool {
        matches!(&self.nonlinearity.kind, NonlinearityKind::SumOfPowers { terms } if terms.is_empty()) && self.nonlinearity.superlinear.is_none()
    }

    /// Step used for finite-difference gradients: `1e-5 δ1`.
    pub fn fd_step(&self) -> f64 {
        1e-5 * self.outer_radius
    }
}

/// Evaluates the primitive `F(x, s)`.
pub fn eval_primitive(spec: &NonlinearitySpec, x: &Vector, s: f64) -> Result<f64> {
    spec.primitive(x, s)
}

/// `κ(x) = min{F(x, ε0), F(x, -ε0)} / ε0^q`.
pub fn sublinear_floor(spec: &NonlinearitySpec, x: &Vector) -> Result<f64> {
    let e = spec.eps0;
    let lo = spec.primitive(x, e)?.min(spec.primitive(x, -e)?);
    Ok(lo / math::powf(e, spec.q))
}

/// Tensor sample grid in `x ∈ B_{δ1}` and `s ∈ (-ε0, ε0) \ {0}`.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub points: Vec<Vector>,
    pub s_values: Vec<f64>,
}

impl SampleGrid {
    /// Deterministic grid: the origin plus points on concentric spheres.
    ///
    /// `n_x` is the target point count, `n_s` (even) the number of `s` samples,
    /// placed symmetrically at `ε0 (2k + 1 - n_s)/n_s`.
    pub fn ball(n: usize, radius: f64, n_x: usize, eps0: f64, n_s: usize) -> Self {
        let mut points = vec![[0.0; MAX_DIM]];
        let rings = (libm::ceil(math::sqrt(n_x as f64)) as usize).max(1);
        let per_ring = (n_x.saturating_sub(1) / rings).max(1);
        for k in 1..=rings {
            let r = radius * k as f64 / (rings as f64 + 0.5);
            for j in 0..per_ring {
                let mut p = [0.0; MAX_DIM];
                if n == 2 {
                    let th = 2.0 * math::PI * (j as f64 + 0.5 * (k % 2) as f64) / per_ring as f64;
                    p[0] = r * math::cos(th);
                    p[1] = r * math::sin(th);
                } else {
                    // Fibonacci sphere
                    let z = 1.0 - (2.0 * j as f64 + 1.0) / per_ring as f64;
                    let rho = math::sqrt((1.0 - z * z).max(0.0));
                    let th = math::PI * (3.0 - math::sqrt(5.0)) * j as f64;
                    p[0] = r * rho * math::cos(th);
                    p[1] = r * rho * math::sin(th);
                    p[2] = r * z;
                }
                points.push(p);
            }
        }
        let n_s = n_s.max(2) & !1;
        let s_values = (0..n_s).map(|k| eps0 * (2.0 * k as f64 + 1.0 - n_s as f64) / n_s as f64).collect();
        SampleGrid { points, s_values }
    }

    pub fn default_for(spec: &ProblemSpec) -> Self {
        Self::ball(spec.dimension, spec.outer_radius, 64, spec.nonlinearity.eps0, 256)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Clause {
    /// Symmetry, ellipticity sandwich and gradient consistency of `A`.
    A1,
    /// Boundedness of `V` (and of `h(x,s)/s` for a superlinear part).
    A2,
    /// `0 < f(x,s)s <= q F(x,s)` (and `c_k > 0` for sums of powers).
    A3i,
    /// `F(·, s)` is `C¹`: finite gradients consistent with finite differences.
    A3ii,
    /// `|∇₁F| <= κ1 F`.
    A3iii,
    /// `F(x, ±ε0) >= κ2 > 0`.
    A3iv,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Witness {
    pub x: Vector,
    pub s: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClauseVerdict {
    pub clause: Clause,
    pub pass: bool,
    /// Smallest observed slack (negative when violated).
    pub margin: f64,
    pub samples: usize,
    pub witness: Option<Witness>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssumptionReport {
    pub clauses: Vec<ClauseVerdict>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.pass)
    }

    pub fn clause(&self, c: Clause) -> Option<&ClauseVerdict> {
        self.clauses.iter().find(|v| v.clause == c)
    }

    pub fn failed_clauses(&self) -> Vec<Clause> {
        self.clauses.iter().filter(|c| !c.pass).map(|c| c.clause).collect()
    }
}

/// Tracks the smallest margin and where it occurred.
struct MarginTracker {
    margin: f64,
    witness: Option<Witness>,
    samples: usize,
    violated: bool,
}

impl MarginTracker {
    fn new() -> Self {
        MarginTracker {
            margin: f64::INFINITY,
            witness: None,
            samples: 0,
            violated: false,
        }
    }

    /// `margin` is the slack, `fails` whether this sample violates the clause.
    fn record(&mut self, x: &Vector, s: Option<f64>, margin: f64, fails: bool) {
        self.samples += 1;
        let better_witness = fails && !self.violated;
        if better_witness || (fails == self.violated && margin < self.margin) || margin.is_nan() {
            self.witness = Some(Witness { x: *x, s, value: margin });
        }
        if margin < self.margin || margin.is_nan() {
            self.margin = margin;
        }
        self.violated |= fails;
    }

    fn finish(self, clause: Clause, detail: String) -> ClauseVerdict {
        ClauseVerdict {
            clause,
            pass: !self.violated,
            margin: self.margin,
            samples: self.samples,
            witness: if self.violated { self.witness } else { None },
            detail,
        }
    }
}

/// Relative slack allowed in sampled inequalities (round-off only).
pub const CHECK_SLACK: f64 = 1e-12;

/// Samples (A1): symmetry, `λ|ξ|² <= <Aξ,ξ> <= λ^{-1}|ξ|²` over a fixed direction
/// set, and agreement of entry gradients with fourth-order central differences.
pub fn check_a1(coeffs: &CoefficientField, grid: &SampleGrid, fd_step: f64) -> ClauseVerdict {
    let n = coeffs.n;
    let mut t = MarginTracker::new();
    let mut dirs: Vec<Vector> = Vec::new();
    for k in 0..16 {
        let mut d = [0.0; MAX_DIM];
        let th = math::PI * k as f64 / 16.0;
        d[0] = math::cos(th);
        d[1] = math::sin(th);
        if n == 3 {
            let z = (k as f64 - 7.5) / 8.0;
            let rho = math::sqrt(1.0 - z * z);
            d[0] *= rho;
            d[1] *= rho;
            d[2] = z;
        }
        dirs.push(d);
    }
    let mut worst_grad: f64 = 0.0;
    for x in &grid.points {
        let sample = coeffs.sample(x);
        let a = sample.a;
        let asym = a.max_asymmetry();
        t.record(x, None, -asym, asym > CHECK_SLACK);
        let lambda = coeffs.ellipticity(x);
        for d in &dirs {
            let nn: f64 = d.iter().map(|v| v * v).sum();
            let form = a.form(d, d);
            let lower = form - lambda * nn;
            let upper = nn / lambda - form;
            let m = lower.min(upper);
            t.record(x, None, m, !(lambda > 0.0) || m < -CHECK_SLACK * nn / lambda);
        }
        for h in 0..n {
            let eval_at = |off: f64| {
                let mut y = *x;
                y[h] += off;
                coeffs.eval(&y)
            };
            let (p1, m1, p2, m2) = (eval_at(fd_step), eval_at(-fd_step), eval_at(2.0 * fd_step), eval_at(-2.0 * fd_step));
            for i in 0..n {
                for j in 0..n {
                    let fd = (8.0 * (p1.m[i][j] - m1.m[i][j]) - (p2.m[i][j] - m2.m[i][j])) / (12.0 * fd_step);
                    let err = (fd - sample.grad[h].m[i][j]).abs() / (1.0 + fd.abs());
                    worst_grad = worst_grad.max(err);
                    t.record(x, None, -err, err > 1e-6);
                }
            }
        }
    }
    t.finish(Clause::A1, format!("max relative gradient mismatch {worst_grad:e}"))
}

/// Checks the structural assumptions (A1)-(A3) on a sample grid.
pub fn check_assumptions(spec: &ProblemSpec, grid: &SampleGrid) -> Result<AssumptionReport> {
    let mut clauses = vec![check_a1(&spec.coefficients, grid, spec.fd_step())];

    let mut a2 = MarginTracker::new();
    let mut vmax: f64 = 0.0;
    let mut hmax: f64 = 0.0;
    for x in &grid.points {
        let v = spec.potential.eval(x);
        vmax = vmax.max(v.abs());
        a2.record(x, None, -v.abs(), !v.is_finite());
        if let Some(h) = &spec.nonlinearity.superlinear {
            for &s in &grid.s_values {
                let ratio = h.eval(x, s) / s;
                hmax = hmax.max(ratio.abs());
                a2.record(x, Some(s), -ratio.abs(), !ratio.is_finite());
            }
        }
    }
    clauses.push(a2.finish(Clause::A2, format!("sup|V| = {vmax:e}, sup|h/s| = {hmax:e}")));

    let mut rest = check_a3(&spec.nonlinearity, spec.dimension, grid, spec.fd_step())?;
    clauses.append(&mut rest.clauses);
    Ok(AssumptionReport { clauses })
}

/// Checks (A3) i)-iv) point-wise on the grid.
pub fn check_a3(spec: &NonlinearitySpec, n: usize, grid: &SampleGrid, fd_step: f64) -> Result<AssumptionReport> {
    let q = spec.q;
    let mut c1 = MarginTracker::new();
    let mut c2 = MarginTracker::new();
    let mut c3 = MarginTracker::new();
    let mut c4 = MarginTracker::new();
    let mut worst_upper_rel: f64 = f64::INFINITY;
    let mut worst_log_grad: f64 = 0.0;

    if let NonlinearityKind::SumOfPowers { terms } = &spec.kind {
        for x in &grid.points {
            for term in terms {
                let c = term.coeff.eval(x);
                c1.record(x, None, c, !(c > 0.0));
                let (_, g) = term.coeff.eval_grad(x);
                let ratio = math::norm(&g[..n]) / c;
                worst_log_grad = worst_log_grad.max(ratio);
            }
        }
    }

    for x in &grid.points {
        for &s in &grid.s_values {
            let f = spec.f(x, s);
            let big_f = spec.primitive(x, s)?;
            let fs = f * s;
            c1.record(x, Some(s), fs, !(fs > 0.0));
            let upper = q * big_f - fs;
            let scale = (q * big_f).abs().max(f64::MIN_POSITIVE);
            worst_upper_rel = worst_upper_rel.min(upper / scale);
            c1.record(x, Some(s), upper, upper < -CHECK_SLACK * scale);

            let g = spec.grad_x_primitive(x, s, n, fd_step)?;
            let finite = g.iter().all(|v| v.is_finite());
            // C¹ consistency against central differences of F.
            let mut mismatch: f64 = 0.0;
            if !matches!(spec.kind, NonlinearityKind::Tabulated { .. }) {
                for (h, gh) in g.iter().enumerate().take(n) {
                    let mut xp = *x;
                    let mut xm = *x;
                    xp[h] += fd_step;
                    xm[h] -= fd_step;
                    let fd = (spec.primitive(&xp, s)? - spec.primitive(&xm, s)?) / (2.0 * fd_step);
                    mismatch = mismatch.max((fd - gh).abs() / (1.0 + big_f.abs()));
                }
            }
            c2.record(x, Some(s), -mismatch, !finite || mismatch > 1e-6);

            let gnorm = math::norm(&g[..n]);
            let m3 = spec.kappa1 * big_f - gnorm;
            c3.record(x, Some(s), m3, m3 < -CHECK_SLACK * big_f.abs().max(f64::MIN_POSITIVE));
        }
        for s in [spec.eps0, -spec.eps0] {
            let big_f = spec.primitive(x, s)?;
            let m4 = big_f - spec.kappa2;
            c4.record(x, Some(s), m4, !(spec.kappa2 > 0.0) || m4 < -CHECK_SLACK * spec.kappa2.abs());
        }
    }
    let kappa_note = if spec.kappa2 > 0.0 {
        String::new()
    } else {
        String::from("; κ2 must be positive")
    };
    Ok(AssumptionReport {
        clauses: vec![
            c1.finish(Clause::A3i, format!("min relative slack of qF - fs: {worst_upper_rel:e}")),
            c2.finish(Clause::A3ii, String::from("∇₁F finite and consistent with central differences")),
            c3.finish(Clause::A3iii, format!("sup |∇c_k|/c_k = {worst_log_grad:e}")),
            c4.finish(Clause::A3iv, format!("κ2 = {}{kappa_note}", spec.kappa2)),
        ],
    })
}

/// Pulls `spec` back through `T(x) = A(x0)^{1/2} x + x0` so that the new
/// coefficient matrix is the identity at the origin.
///
/// The returned spec lives on the ball of radius
/// `(δ1 - |x0|)/sqrt(λ_max(A(x0)))`, whose image under `T` stays inside the
/// original ball.
pub fn normalize_coordinates(spec: &ProblemSpec, x0: &Vector) -> Result<ProblemSpec> {
    normalize_coordinates_with(spec, x0, PullbackCandidate::Standard)
}

pub fn normalize_coordinates_with(spec: &ProblemSpec, x0: &Vector, candidate: PullbackCandidate) -> Result<ProblemSpec> {
    let n = spec.dimension;
    if n > MAX_DIM {
        return Err(Error::Unsupported("normalization needs N <= 3"));
    }
    let a0 = spec.coefficients.eval(x0);
    let sqrt = a0.spd_sqrt()?;
    let inv_sqrt = a0.spd_inv_sqrt()?;
    let (_, lmax) = a0.eigen_bounds();
    let dist = math::norm(&x0[..n]);
    if dist >= spec.outer_radius {
        return Err(Error::invalid("x0", "base point outside the domain"));
    }
    let map = AffineMap { linear: sqrt, shift: *x0 };
    let mut nonlinearity = spec.nonlinearity.clone();
    nonlinearity.transform = Some(match &spec.nonlinearity.transform {
        Some(inner) => AffineMap {
            linear: inner.linear.mul(&map.linear),
            shift: inner.apply(&map.shift),
        },
        None => map.clone(),
    });
    let potential = match &spec.potential {
        ScalarField::Const(c) => ScalarField::Const(*c),
        other => ScalarField::Pullback {
            base: Box::new(other.clone()),
            map: map.clone(),
        },
    };
    let coefficients = CoefficientField {
        n,
        kind: CoefficientKind::Pullback {
            base: Box::new(spec.coefficients.clone()),
            map,
            inv_sqrt,
            candidate,
        },
    };
    Ok(ProblemSpec {
        dimension: n,
        outer_radius: (spec.outer_radius - dist) / math::sqrt(lmax),
        coefficients,
        potential,
        nonlinearity,
    })
}

/// Empirical `κ1` on the grid: `sup |∇₁F| / F` over samples with `F > 0`.
pub fn empirical_kappa1(spec: &NonlinearitySpec, n: usize, grid: &SampleGrid, fd_step: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in &grid.points {
        for &s in &grid.s_values {
            let big_f = spec.primitive(x, s)?;
            if big_f > 0.0 {
                let g = spec.grad_x_primitive(x, s, n, fd_step)?;
                worst = worst.max(math::norm(&g[..n]) / big_f);
            }
        }
    }
    Ok(worst)
}

#[cfg(feature = "serde")]
mod expr_serde {
    use super::Expr;
    use alloc::format;
    use alloc::string::String;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{e}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Expr, D::Error> {
        let text = String::deserialize(d)?;
        Expr::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(feature = "serde")]
mod expr_vec_serde {
    use super::Expr;
    use alloc::format;
    use alloc::string::String;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Expr], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|e| format!("{e}")))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Expr>, D::Error> {
        let texts = Vec::<String>::deserialize(d)?;
        texts.iter().map(|t| Expr::parse(t).map_err(serde::de::Error::custom)).collect()
    }
}

#[cfg(feature = "serde")]
mod opt_expr_serde {
    use super::Expr;
    use alloc::format;
    use alloc::string::String;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(e: &Option<Expr>, s: S) -> Result<S::Ok, S::Error> {
        match e {
            Some(e) => s.serialize_some(&format!("{e}")),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Expr>, D::Error> {
        let text = Option::<String>::deserialize(d)?;
        text.map(|t| Expr::parse(&t).map_err(serde::de::Error::custom)).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(a: f64, b: f64) -> Vector {
        [a, b, 0.0]
    }

    #[test]
    fn primitive_closed_forms() {
        let h = NonlinearitySpec::homogeneous(1.5);
        assert!((h.primitive(&pt(0.0, 0.0), 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let h1 = NonlinearitySpec::homogeneous(1.0);
        assert!((h1.primitive(&pt(0.0, 0.0), -0.5).unwrap() - 0.5).abs() < 1e-15);
        let s = NonlinearitySpec::sum_of_powers(vec![PowerTerm {
            q: 1.5,
            coeff: ScalarField::Const(2.0),
        }]);
        assert!((s.primitive(&pt(0.1, 0.2), 1.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sum_of_powers_primitive_matches_quadrature_of_f() {
        let s = NonlinearitySpec::sum_of_powers(vec![PowerTerm {
            q: 1.5,
            coeff: ScalarField::Const(2.0),
        }]);
        let x = pt(0.3, -0.1);
        let quad = adaptive_simpson(&|t| s.f(&x, t), 0.0, 1.0, 1e-12).unwrap();
        assert!((quad - 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn tabulated_primitive_uses_quadrature() {
        let t = NonlinearitySpec::tabulated(Expr::parse("abs(s)^(0.5)*sgn(s)").unwrap(), 1.5);
        let v = t.primitive(&pt(0.0, 0.0), 0.64).unwrap();
        let exact = math::powf(0.64, 1.5) / 1.5;
        assert!((v - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn c_constant_values() {
        assert_eq!(c_constant(3, 1.0), 5.0);
        assert_eq!(c_constant(2, 1.3), 4.0);
        assert_eq!(c_constant(3, 1.5), 4.5);
    }

    #[test]
    fn floor_values() {
        let h = NonlinearitySpec::homogeneous(1.5);
        assert!((sublinear_floor(&h, &pt(0.0, 0.0)).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let h1 = NonlinearitySpec::homogeneous(1.0).with_params(0.5, 0.0, 0.5);
        assert!((sublinear_floor(&h1, &pt(0.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_passes_a3_with_equality() {
        let spec = ProblemSpec::model(2, 1.0, 1.5);
        let grid = SampleGrid::default_for(&spec);
        let report = check_assumptions(&spec, &grid).unwrap();
        assert!(report.passed(), "{report:?}");
        let c = report.clause(Clause::A3i).unwrap();
        assert!(c.margin.abs() < 1e-15, "margin {}", c.margin);
    }

    #[test]
    fn wrong_sign_fails_a3i() {
        let mut spec = ProblemSpec::model(2, 1.0, 1.5);
        spec.nonlinearity = NonlinearitySpec::tabulated(Expr::parse("-abs(s)^(-0.5)*s").unwrap(), 1.5).with_params(1.0, 1.0, 0.1);
        let grid = SampleGrid::ball(2, 1.0, 16, 1.0, 16);
        let report = check_assumptions(&spec, &grid).unwrap();
        let c = report.clause(Clause::A3i).unwrap();
        assert!(!c.pass);
        let w = c.witness.as_ref().unwrap();
        assert!(w.s.is_some());
    }

    #[test]
    fn a1_detects_gradient_and_ellipticity() {
        let coeffs = CoefficientField::from_entries(2, vec![Expr::parse("1 + x1^2/4").unwrap(), Expr::Num(0.0), Expr::Num(1.0)]).unwrap();
        let grid = SampleGrid::ball(2, 1.0, 64, 1.0, 2);
        let v = check_a1(&coeffs, &grid, 1e-5);
        assert!(v.pass, "{v:?}");
        let rot = CoefficientField::rotation_perturbed(2, 0.3);
        assert!(check_a1(&rot, &grid, 1e-5).pass);
    }

    #[test]
    fn normalization_of_diagonal() {
        let mut spec = ProblemSpec::model(2, 1.0, 1.5);
        spec.coefficients = CoefficientField::diagonal(vec![4.0, 1.0]);
        let out = normalize_coordinates(&spec, &[0.0; 3]).unwrap();
        let a = out.coefficients.eval(&pt(0.2, 0.1));
        assert!(a.max_abs_diff(&Mat::identity(2)) < 1e-14);
        if let CoefficientKind::Pullback { map, .. } = &out.coefficients.kind {
            let y = map.apply(&pt(1.0, 1.0));
            assert!((y[0] - 2.0).abs() < 1e-14 && (y[1] - 1.0).abs() < 1e-14);
        } else {
            panic!("expected pullback");
        }
        assert!((out.outer_radius - 0.5).abs() < 1e-14);
    }

    #[test]
    fn not_spd_rejected() {
        let mut spec = ProblemSpec::model(2, 1.0, 1.5);
        spec.coefficients = CoefficientField::diagonal(vec![-1.0, 1.0]);
        assert_eq!(normalize_coordinates(&spec, &[0.0; 3]), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn validate_rejects_bad_q() {
        let spec = ProblemSpec::model(2, 1.0, 2.5);
        assert!(spec.validate().is_err());
        assert!(ProblemSpec::model(3, 1.0, 1.0).validate().is_ok());
    }
}
