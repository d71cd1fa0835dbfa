//! Run configuration: a TOML file with `[domain]`, `[coefficients]`,
//! `[potential]` and `[nonlinearity]` sections plus grid, tolerance and
//! command-specific tables. Every field has a default.

use std::path::{Path, PathBuf};

use freq_lab_core::audit::AuditControls;
use freq_lab_core::expr::Expr;
use freq_lab_core::frequency::IdentityTolerances;
use freq_lab_core::model::{CoefficientField, NonlinearitySpec, PowerTerm, ProblemSpec, ScalarField};
use freq_lab_core::solver::IterationControls;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for the random extra sample points of the assumption check.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub domain: DomainConfig,
    pub coefficients: CoefficientConfig,
    pub potential: PotentialConfig,
    pub nonlinearity: NonlinearityConfig,
    pub grid: GridConfig,
    pub tolerances: ToleranceConfig,
    pub ode: OdeConfig,
    pub solve: SolveConfig,
    pub check: CheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            output_dir: PathBuf::from("freq-lab-out"),
            domain: DomainConfig::default(),
            coefficients: CoefficientConfig::default(),
            potential: PotentialConfig::default(),
            nonlinearity: NonlinearityConfig::default(),
            grid: GridConfig::default(),
            tolerances: ToleranceConfig::default(),
            ode: OdeConfig::default(),
            solve: SolveConfig::default(),
            check: CheckConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub dimension: usize,
    pub outer_radius: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            dimension: 2,
            outer_radius: 1.0,
        }
    }
}

/// `matrix` is a built-in (`identity`, `diagonal(d1, .., dN)`,
/// `rotation_perturbed(eps)`); `entries` lists upper-triangular expressions
/// row by row and takes precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientConfig {
    pub matrix: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<String>>,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        CoefficientConfig {
            matrix: "identity".into(),
            entries: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    /// Expression in `x1..xN`; `"0"` switches the potential off.
    pub value: String,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig { value: "0".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    Homogeneous,
    SumOfPowers,
    Tabulated,
    /// `f ≡ 0`.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTermConfig {
    pub q: f64,
    pub coeff: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub kind: NonlinearityKind,
    pub q: f64,
    pub terms: Vec<PowerTermConfig>,
    /// `f(x, s)` for the tabulated kind.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    /// Weakly superlinear part `h(x, s)`, treated as a potential.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub superlinear: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa2: Option<f64>,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        NonlinearityConfig {
            kind: NonlinearityKind::Homogeneous,
            q: 1.5,
            terms: Vec::new(),
            f: None,
            superlinear: None,
            eps0: None,
            kappa1: None,
            kappa2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Radial step of ODE-based fields.
    pub h: f64,
    pub n_radii: usize,
    pub n_theta: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            h: 1e-3,
            n_radii: 129,
            n_theta: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub identities: IdentityTolerances,
    pub audit: AuditControls,
    pub iteration: IterationSettings,
    /// Floor of `H` relative to `max H` (also used by the audit).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_floor_rel: Option<f64>,
}

/// Serializable mirror of [`IterationControls`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationSettings {
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for IterationSettings {
    fn default() -> Self {
        let c = IterationControls::default();
        IterationSettings {
            damping: c.damping,
            tol: c.tol,
            max_iters: c.max_iters,
        }
    }
}

impl From<IterationSettings> for IterationControls {
    fn from(s: IterationSettings) -> Self {
        IterationControls {
            damping: s.damping,
            tol: s.tol,
            max_iters: s.max_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeMode {
    Counterexample,
    Energy,
    Shoot,
    Pme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeConfig {
    pub mode: OdeMode,
    pub q: f64,
    pub t0: f64,
    pub t_max: f64,
    /// Integration step of energy and shooting runs.
    pub h: f64,
    /// Integration step of the porous-medium base profile.
    pub pme_h: f64,
    /// Samples per branch of the explicit profile.
    pub points: usize,
    /// Initial data `u(0) = a`, `u'(0) = b`.
    pub a: f64,
    pub b: f64,
    /// Spatial dimension of shooting and porous-medium runs.
    pub dimension: usize,
    pub times: Vec<f64>,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig {
            mode: OdeMode::Counterexample,
            q: 1.5,
            t0: 0.0,
            t_max: 10.0,
            h: 1e-3,
            pme_h: 1e-4,
            points: 1000,
            a: 0.5,
            b: 0.0,
            dimension: 2,
            times: vec![1.0, 2.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Radial shooting for `A = id`, `V = 0`, homogeneous `f`.
    Radial,
    /// 2-D solve with Dirichlet data `boundary`.
    Grid,
    /// 2-D solves of a manufactured problem on successively refined grids.
    Manufactured,
    /// The expression `exact` sampled on the polar grid (not a solve).
    Sample,
    /// Radial field vanishing on `B_{r0}` with the explicit profile outside;
    /// a non-solution used to exercise the audit.
    Glued,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub mode: SolveMode,
    /// `u(0)` for radial solves.
    pub a: f64,
    /// Boundary data `g(x)` for grid solves.
    pub boundary: String,
    /// Exact solution for manufactured runs.
    pub exact: String,
    /// Radial node counts of the manufactured refinement sweep (`n_θ = n_r`).
    pub levels: Vec<usize>,
    /// Vanishing radius of glued fields.
    pub r0: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            mode: SolveMode::Radial,
            a: 0.5,
            boundary: "x1".into(),
            exact: "(1 - x1^2 - x2^2)^2".into(),
            levels: vec![32, 64, 128],
            r0: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub points: usize,
    pub s_samples: usize,
    /// Extra uniformly random points drawn with `seed`.
    pub random_points: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            points: 64,
            s_samples: 256,
            random_points: 32,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// Numeric controls must be positive.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |what: &str| Err(CliError::Config(format!("{what} must be positive")));
        if self.domain.dimension < 2 {
            return Err(CliError::Config("dimension must be at least 2".into()));
        }
        if !(self.domain.outer_radius > 0.0) {
            return bad("domain.outer_radius");
        }
        if !(self.grid.h > 0.0) {
            return bad("grid.h");
        }
        if self.grid.n_radii == 0 || self.grid.n_theta == 0 {
            return bad("grid sizes");
        }
        let it = &self.tolerances.iteration;
        if !(it.damping > 0.0 && it.damping <= 1.0) {
            return Err(CliError::Config("iteration.damping must lie in (0, 1]".into()));
        }
        if !(it.tol > 0.0) || it.max_iters == 0 {
            return bad("iteration controls");
        }
        let t = &self.tolerances.identities;
        let all = [
            t.h_prime_radial,
            t.h_prime_grid,
            t.pohozaev,
            t.pohozaev_defect,
            t.rellich,
            t.derivative_one,
            t.d_forms,
            t.divergence,
            t.cs_gap,
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return bad("identity tolerances");
        }
        self.tolerances.audit.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(f) = self.tolerances.h_floor_rel {
            if !(f > 0.0) {
                return bad("h_floor_rel");
            }
        }
        if !(self.ode.t_max > 0.0 && self.ode.h > 0.0 && self.ode.pme_h > 0.0) || self.ode.points == 0 {
            return bad("ode.t_max, ode.h, ode.pme_h and ode.points");
        }
        if self.solve.levels.is_empty() || self.check.points == 0 || self.check.s_samples == 0 {
            return bad("solve.levels and check sample counts");
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let n = self.domain.dimension;
        let mut spec = ProblemSpec::model(n, self.domain.outer_radius, self.nonlinearity.q);
        spec.coefficients = match &self.coefficients.entries {
            Some(entries) => CoefficientField::from_entries(n, entries.iter().map(|e| parse_expr(e)).collect::<Result<_, _>>()?)?,
            None => builtin_matrix(n, &self.coefficients.matrix)?,
        };
        spec.potential = scalar(&self.potential.value)?;
        let nl = &self.nonlinearity;
        let mut f = match nl.kind {
            NonlinearityKind::Homogeneous => NonlinearitySpec::homogeneous(nl.q),
            NonlinearityKind::SumOfPowers => {
                if nl.terms.is_empty() {
                    return Err(CliError::Config("sum_of_powers needs at least one term".into()));
                }
                let terms = nl
                    .terms
                    .iter()
                    .map(|t| {
                        Ok(PowerTerm {
                            q: t.q,
                            coeff: scalar(&t.coeff)?,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                NonlinearitySpec::sum_of_powers(terms)
            }
            NonlinearityKind::Tabulated => {
                let f = nl.f.as_deref().ok_or_else(|| CliError::Config("tabulated nonlinearity needs `f`".into()))?;
                NonlinearitySpec::tabulated(parse_expr(f)?, nl.q)
            }
            NonlinearityKind::None => ProblemSpec::linear(n, 1.0).nonlinearity,
        };
        f.eps0 = nl.eps0.unwrap_or(f.eps0);
        f.kappa1 = nl.kappa1.unwrap_or(f.kappa1);
        f.kappa2 = nl.kappa2.unwrap_or(f.kappa2);
        f.superlinear = nl.superlinear.as_deref().map(parse_expr).transpose()?;
        spec.nonlinearity = f;
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_expr(s: &str) -> Result<Expr, CliError> {
    Expr::parse(s).map_err(|e| CliError::Config(format!("`{s}`: {e}")))
}

fn scalar(s: &str) -> Result<ScalarField, CliError> {
    let e = parse_expr(s)?;
    Ok(match e {
        Expr::Num(v) => ScalarField::Const(v),
        e => ScalarField::Expr(e),
    })
}

fn builtin_matrix(n: usize, name: &str) -> Result<CoefficientField, CliError> {
    let name = name.trim();
    let args = |prefix: &str| -> Option<Result<Vec<f64>, CliError>> {
        let inner = name.strip_prefix(prefix)?.trim().strip_prefix('(')?.strip_suffix(')')?;
        Some(
            inner
                .split(',')
                .map(|a| a.trim().parse::<f64>().map_err(|e| CliError::Config(format!("`{name}`: {e}"))))
                .collect(),
        )
    };
    if name == "identity" {
        return Ok(CoefficientField::identity(n));
    }
    if let Some(d) = args("diagonal") {
        let d = d?;
        if d.len() != n {
            return Err(CliError::Config(format!("`{name}`: expected {n} diagonal entries")));
        }
        return Ok(CoefficientField::diagonal(d));
    }
    if let Some(e) = args("rotation_perturbed") {
        let e = e?;
        if e.len() != 1 {
            return Err(CliError::Config(format!("`{name}`: expected one parameter")));
        }
        return Ok(CoefficientField::rotation_perturbed(n, e[0]));
    }
    Err(CliError::Config(format!("unknown coefficient matrix `{name}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn builtins() {
        assert!(builtin_matrix(2, "identity").unwrap().is_identity());
        assert!(builtin_matrix(2, "diagonal(4, 1)").is_ok());
        assert!(builtin_matrix(2, "diagonal(4)").is_err());
        assert!(builtin_matrix(3, "rotation_perturbed(0.2)").is_ok());
        assert!(builtin_matrix(2, "bogus").is_err());
    }

    #[test]
    fn sections_build_a_spec() {
        let text = r#"
[domain]
dimension = 2
outer_radius = 0.8

[coefficients]
entries = ["1 + x1^2/4", "0", "1"]

[potential]
value = "0.5*x2"

[nonlinearity]
kind = "sum_of_powers"
terms = [{ q = 1.2, coeff = "1 + x1^2" }, { q = 1.6, coeff = "2" }]
"#;
        let spec = RunConfig::parse(text).unwrap().problem().unwrap();
        assert_eq!(spec.outer_radius, 0.8);
        assert!(!spec.coefficients.is_identity());
        assert!((spec.nonlinearity.q - 1.6).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::parse("[grid]\nh = -1.0\n").is_err());
        assert!(RunConfig::parse("[tolerances.audit]\ntol_d = 0.0\n").is_err());
        assert!(RunConfig::parse("unknown = 1\n").is_err());
        let mut c = RunConfig::default();
        c.nonlinearity.q = 2.5;
        assert!(c.problem().is_err());
    }
}
