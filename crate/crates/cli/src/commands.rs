use std::collections::BTreeMap;
use std::path::PathBuf;

use freq_lab_core::audit::audit;
use freq_lab_core::expr::Expr;
use freq_lab_core::field::{PolarGrid, Representation, SolutionField};
use freq_lab_core::frequency::{all_reports, frequency_profile, ProfileOptions, SCHEMA_VERSION};
use freq_lab_core::model::{check_assumptions, ProblemSpec, SampleGrid};
use freq_lab_core::ode::{
    counterexample_residual, counterexample_trajectory, energy_drift, integrate_plane, integrate_radial, pme_separated_residual, zero_audit, OdeTrajectory,
    PmeField,
};
use freq_lab_core::solver::{boundary_from, glued_radial, solve_grid_2d_partial, solve_radial, GridSolve, IterationControls, ManufacturedProblem};
use freq_lab_core::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{OdeMode, RunConfig, SolveMode};
use crate::formats::{self, csv, json as to_json, profile_csv, read_field_file, sha256_hex, write_field};
use crate::{now_ms, CliError, Outputs, RunRecord, EXIT_CHECK_FAILED, EXIT_NON_CONVERGENCE, EXIT_OK, RECORD_SCHEMA_VERSION, TOOL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ode,
    Solve,
    Frequency,
    Audit,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ode => "ode",
            Command::Solve => "solve",
            Command::Frequency => "frequency",
            Command::Audit => "audit",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: RunConfig,
    pub output_dir: PathBuf,
    /// Field file for `frequency` and `audit`.
    pub field: Option<PathBuf>,
    /// Worker threads for sweeps.
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub record: RunRecord,
}

/// Tolerance of the explicit-profile residual, relative to `max(1, |u''|)`.
pub const COUNTEREXAMPLE_TOL: f64 = 1e-12;
/// Energy drift bound and accepted order window of the plane integrator.
pub const ENERGY_DRIFT_TOL: f64 = 1e-8;
pub const ENERGY_ORDER: (f64, f64) = (3.8, 4.2);
/// Step ladder of the energy order measurement.
pub const ENERGY_LADDER: [f64; 3] = [1e-2, 5e-3, 2.5e-3];
/// Porous-medium residual bound relative to `‖w‖_∞`.
pub const PME_TOL: f64 = 1e-6;
/// Accepted window for measured orders of the 2-D solver.
pub const SOLVER_ORDER: (f64, f64) = (1.8, 2.2);

struct Ctx {
    out: Outputs,
    verdicts: BTreeMap<String, Value>,
    input: Vec<u8>,
}

impl Ctx {
    fn verdict(&mut self, k: &str, v: impl Serialize) {
        self.verdicts.insert(k.to_string(), serde_json::to_value(v).expect("serializable"));
    }
}

/// Runs `cmd`, writes its outputs and appends the run record.
pub fn run(cmd: Command, inv: &Invocation) -> Result<Outcome, CliError> {
    let started = now_ms();
    inv.config.validate()?;
    let mut ctx = Ctx {
        out: Outputs::new(&inv.output_dir)?,
        verdicts: BTreeMap::new(),
        input: Vec::new(),
    };
    let code = match cmd {
        Command::Ode => cmd_ode(inv, &mut ctx),
        Command::Solve => cmd_solve(inv, &mut ctx),
        Command::Frequency => cmd_frequency(inv, &mut ctx),
        Command::Audit => cmd_audit(inv, &mut ctx),
        Command::Check => cmd_check(inv, &mut ctx),
    }?;
    let record = RunRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        command: cmd.name().into(),
        tool_version: TOOL_VERSION.into(),
        config: inv.config.clone(),
        input_hash: input_hash(cmd, inv, &ctx.input),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        outputs: ctx.out.manifest().to_vec(),
        verdicts: ctx.verdicts,
        exit_code: code,
    };
    record.append_to(ctx.out.dir())?;
    Ok(Outcome { exit_code: code, record })
}

fn input_hash(cmd: Command, inv: &Invocation, extra: &[u8]) -> String {
    let mut cfg = inv.config.clone();
    // where results go does not change them
    cfg.output_dir = PathBuf::new();
    sha256_hex(&[cmd.name().as_bytes(), cfg.to_toml().as_bytes(), extra])
}

fn exit_for(pass: bool) -> i32 {
    if pass {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn trajectory_csv(t: &OdeTrajectory) -> String {
    csv(&["t", "u", "du"], (0..t.len()).map(|i| vec![t.t[i], t.u[i], t.du[i]]))
}

fn check_q(q: f64) -> Result<(), CliError> {
    if !(1.0..2.0).contains(&q) {
        return Err(CliError::Config("q must lie in [1,2)".into()));
    }
    Ok(())
}

fn cmd_ode(inv: &Invocation, ctx: &mut Ctx) -> Result<i32, CliError> {
    let o = &inv.config.ode;
    check_q(o.q)?;
    let summary;
    let pass;
    match o.mode {
        OdeMode::Counterexample => {
            let n = o.points;
            let pos: Vec<f64> = (1..=n).map(|k| o.t0 + o.t_max * k as f64 / n as f64).collect();
            let neg: Vec<f64> = (0..n).map(|k| o.t0 - o.t_max * k as f64 / n as f64).collect();
            let res = counterexample_residual(o.q, o.t0, &pos)?.max(counterexample_residual(o.q, o.t0, &neg)?);
            let traj = counterexample_trajectory(o.q, o.t0, o.t0 - o.t_max, o.t0 + o.t_max, 2 * n)?;
            ctx.out.write("trajectory.csv", &trajectory_csv(&traj))?;
            pass = res <= COUNTEREXAMPLE_TOL;
            summary = json!({"mode": "counterexample", "q": o.q, "max_residual": res, "tolerance": COUNTEREXAMPLE_TOL, "points_per_branch": n, "pass": pass});
        }
        OdeMode::Energy => {
            let traj = integrate_plane(o.q, o.a, o.b, o.t_max, o.h)?;
            let drift = energy_drift(&traj);
            let ladder = ENERGY_LADDER
                .iter()
                .map(|&h| Ok(energy_drift(&integrate_plane(o.q, o.a, o.b, o.t_max, h)?)))
                .collect::<Result<Vec<f64>, CliError>>()?;
            let orders: Vec<f64> = ladder.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
            let order = *orders.last().expect("ladder has three steps");
            ctx.out.write("trajectory.csv", &trajectory_csv(&traj))?;
            pass = drift <= ENERGY_DRIFT_TOL && order >= ENERGY_ORDER.0 && order <= ENERGY_ORDER.1;
            summary = json!({
                "mode": "energy", "q": o.q, "h": o.h, "initial_energy": traj.energy_at(0), "drift": drift,
                "drift_tolerance": ENERGY_DRIFT_TOL, "ladder_steps": ENERGY_LADDER, "ladder_drifts": ladder,
                "pair_orders": orders, "order": order, "pass": pass
            });
        }
        OdeMode::Shoot => {
            let traj = integrate_radial(o.dimension, o.q, o.a, o.t_max, o.h)?;
            let zeros = zero_audit(&traj, None);
            ctx.out.write("trajectory.csv", &trajectory_csv(&traj))?;
            pass = zeros.degenerate_count() == 0;
            summary =
                json!({"mode": "shoot", "q": o.q, "dimension": o.dimension, "a": o.a, "zeros": zeros, "degenerate": zeros.degenerate_count(), "pass": pass});
        }
        OdeMode::Pme => {
            let base = integrate_radial(o.dimension, o.q, o.a, o.t_max, o.pme_h)?;
            let field = PmeField::new(base, o.t0)?;
            let times: Vec<f64> = o.times.iter().map(|t| o.t0 + t).collect();
            let res = pme_separated_residual(&field, o.points, &times)?;
            ctx.out.write(
                "pme.csv",
                &csv(&["x", "t", "w", "residual"], res.samples.iter().map(|s| vec![s.x, s.t, s.w, s.residual])),
            )?;
            pass = res.max_residual <= PME_TOL * res.w_max;
            summary = json!({
                "mode": "pme", "q": o.q, "m": field.m, "dimension": o.dimension, "h": o.pme_h, "max_residual": res.max_residual,
                "w_max": res.w_max, "relative_residual": res.max_residual / res.w_max, "skipped_radii": res.skipped_radii, "tolerance": PME_TOL, "pass": pass
            });
        }
    }
    let summary = with_schema(summary);
    ctx.out.write("ode_summary.json", &to_json(&summary))?;
    ctx.verdict("pass", pass);
    Ok(exit_for(pass))
}

fn with_schema(mut v: Value) -> Value {
    v["schema_version"] = json!(SCHEMA_VERSION);
    v
}

/// Maximum difference at common nodes of a grid and its refinement.
fn grid_gap(coarse: &SolutionField, fine: &SolutionField) -> f64 {
    let (Representation::Grid2d(c), Representation::Grid2d(f)) = (&coarse.repr, &fine.repr) else {
        return f64::NAN;
    };
    let (si, sj) = ((f.nr - 1) / (c.nr - 1), f.nt / c.nt);
    let mut worst: f64 = 0.0;
    for i in 0..c.nr {
        for j in 0..c.nt {
            worst = worst.max((c.at(i, j) - f.at(si * i, sj * j)).abs());
        }
    }
    worst
}

/// Runs `f` over `items` on at most `jobs` threads, keeping the order.
fn parallel_map<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.max(1);
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    for (chunk_items, chunk_out) in items.chunks(jobs).zip(out.chunks_mut(jobs)) {
        std::thread::scope(|s| {
            for (item, slot) in chunk_items.iter().zip(chunk_out.iter_mut()) {
                let f = &f;
                s.spawn(move || *slot = Some(f(item)));
            }
        });
    }
    out.into_iter().map(|r| r.expect("every slot filled")).collect()
}

fn q_of(spec: &ProblemSpec) -> Option<f64> {
    (!spec.is_linear()).then_some(spec.nonlinearity.q)
}

fn write_nonconvergence(ctx: &mut Ctx, spec: &ProblemSpec, s: &GridSolve) -> Result<i32, CliError> {
    ctx.out.write("field.txt", &write_field(&s.field, q_of(spec)))?;
    let diag = with_schema(json!({
        "converged": false, "iterations": s.iterations, "distances": s.distances,
        "residual_sup": s.residual_sup, "cg_iterations": s.cg_iterations
    }));
    ctx.out.write("solve_summary.json", &to_json(&diag))?;
    ctx.verdict("converged", false);
    Ok(EXIT_NON_CONVERGENCE)
}

fn cmd_solve(inv: &Invocation, ctx: &mut Ctx) -> Result<i32, CliError> {
    let cfg = &inv.config;
    let spec = cfg.problem()?;
    let controls: IterationControls = cfg.tolerances.iteration.into();
    let (nr, nt) = (cfg.grid.n_radii, cfg.grid.n_theta);
    match cfg.solve.mode {
        SolveMode::Radial => {
            let field = solve_radial(&spec, cfg.solve.a, cfg.grid.h)?;
            let rho = field.residual(&spec)?;
            let sup = rho.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            ctx.out.write("field.txt", &write_field(&field, q_of(&spec)))?;
            let summary = with_schema(json!({
                "mode": "radial", "a": cfg.solve.a, "h": cfg.grid.h, "n_radii": field.n_radii(),
                "residual_sup": sup, "truncation_estimate": field.truncation_estimate
            }));
            ctx.out.write("solve_summary.json", &to_json(&summary))?;
            ctx.verdict("residual_sup", sup);
            Ok(EXIT_OK)
        }
        SolveMode::Grid => {
            if spec.dimension != 2 {
                return Err(CliError::Config("grid solves are two-dimensional".into()));
            }
            let g = Expr::parse(&cfg.solve.boundary).map_err(|e| CliError::Config(format!("boundary: {e}")))?;
            let bc = |n: usize| boundary_from(n, spec.outer_radius, |x: &Vector| g.eval(x, 0.0));
            let main = solve_grid_2d_partial(&spec, nr, nt, &bc(nt), None, controls)?;
            if !main.converged {
                return write_nonconvergence(ctx, &spec, &main);
            }
            // with the same data on two coarser grids the nodal gaps give an order
            let mut order = None;
            let harmonic = spec.is_linear() && spec.coefficients.is_identity() && spec.potential.is_zero();
            if harmonic && (nr - 1) % 4 == 0 && nt % 16 == 0 {
                let half = solve_grid_2d_partial(&spec, (nr - 1) / 2 + 1, nt / 2, &bc(nt / 2), None, controls)?;
                let quarter = solve_grid_2d_partial(&spec, (nr - 1) / 4 + 1, nt / 4, &bc(nt / 4), None, controls)?;
                order = Some((grid_gap(&quarter.field, &half.field) / grid_gap(&half.field, &main.field)).log2());
            }
            ctx.out.write("field.txt", &write_field(&main.field, q_of(&spec)))?;
            let summary = with_schema(json!({
                "mode": "grid", "n_radii": nr, "n_theta": nt, "converged": true, "iterations": main.iterations,
                "residual_sup": main.residual_sup, "measured_order": order
            }));
            ctx.out.write("solve_summary.json", &to_json(&summary))?;
            let pass = order.is_none_or(|p| p >= SOLVER_ORDER.0 && p <= SOLVER_ORDER.1);
            ctx.verdict("measured_order", order);
            Ok(exit_for(pass))
        }
        SolveMode::Sample => {
            if spec.dimension != 2 {
                return Err(CliError::Config("sampled fields are two-dimensional".into()));
            }
            let e = Expr::parse(&cfg.solve.exact).map_err(|e| CliError::Config(format!("exact: {e}")))?;
            let grid = PolarGrid::sample(nr, nt, spec.outer_radius, |x| e.eval(x, 0.0))?;
            ctx.out.write("field.txt", &write_field(&SolutionField::from_grid(grid), q_of(&spec)))?;
            Ok(EXIT_OK)
        }
        SolveMode::Glued => {
            let q = spec
                .nonlinearity
                .homogeneous_q()
                .ok_or_else(|| CliError::Config("glued fields need a homogeneous nonlinearity".into()))?;
            let n = (spec.outer_radius / cfg.grid.h).round() as usize;
            let field = glued_radial(spec.dimension, q, cfg.solve.r0, spec.outer_radius, n)?;
            ctx.out.write("field.txt", &write_field(&field, Some(q)))?;
            Ok(EXIT_OK)
        }
        SolveMode::Manufactured => {
            if spec.dimension != 2 {
                return Err(CliError::Config("manufactured solves are two-dimensional".into()));
            }
            let exact = Expr::parse(&cfg.solve.exact).map_err(|e| CliError::Config(format!("exact: {e}")))?;
            let m = ManufacturedProblem::new(spec.clone(), exact)?;
            let levels: Vec<usize> = cfg.solve.levels.clone();
            if levels.iter().any(|&l| l < 8 || l % 4 != 0) {
                return Err(CliError::Config("solve.levels must be multiples of 4, at least 8".into()));
            }
            let runs = parallel_map(inv.jobs, &levels, |&l| {
                let bc = boundary_from(l, m.spec.outer_radius, |x| m.exact(x));
                let src = |x: &Vector| m.source(x);
                solve_grid_2d_partial(&m.spec, l + 1, l, &bc, Some(&src), controls)
            });
            let mut errors = Vec::new();
            let mut last = None;
            for (run, &l) in runs.into_iter().zip(&levels) {
                let s = run?;
                if !s.converged {
                    return write_nonconvergence(ctx, &spec, &s);
                }
                let Representation::Grid2d(g) = &s.field.repr else { unreachable!() };
                let err = (0..g.nr)
                    .flat_map(|i| (0..g.nt).map(move |j| (i, j)))
                    .fold(0.0f64, |w, (i, j)| w.max((g.at(i, j) - m.exact(&g.point(i, j))).abs()));
                errors.push((l, g.dr, err));
                last = Some(s);
            }
            let orders: Vec<f64> = errors
                .windows(2)
                .map(|w| (w[0].2 / w[1].2).log2() / (w[1].0 as f64 / w[0].0 as f64).log2())
                .collect();
            let table = csv(
                &["n_radii", "n_theta", "dr", "max_error", "order"],
                errors
                    .iter()
                    .enumerate()
                    .map(|(k, &(l, dr, e))| vec![(l + 1) as f64, l as f64, dr, e, if k == 0 { f64::NAN } else { orders[k - 1] }]),
            );
            ctx.out.write("convergence.csv", &table)?;
            let s = last.expect("at least one level");
            ctx.out.write("field.txt", &write_field(&s.field, q_of(&spec)))?;
            let finest = orders.last().copied();
            let pass = finest.is_none_or(|p| p >= SOLVER_ORDER.0 && p <= SOLVER_ORDER.1);
            let summary = with_schema(
                json!({"mode": "manufactured", "levels": levels, "max_errors": errors.iter().map(|e| e.2).collect::<Vec<_>>(), "orders": orders, "pass": pass}),
            );
            ctx.out.write("solve_summary.json", &to_json(&summary))?;
            ctx.verdict("finest_order", finest);
            Ok(exit_for(pass))
        }
    }
}

fn load_field(inv: &Invocation, ctx: &mut Ctx, spec: &ProblemSpec) -> Result<SolutionField, CliError> {
    let path = inv
        .field
        .as_ref()
        .ok_or_else(|| CliError::Config("a field file is required (--field)".into()))?;
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read field {}: {e}", path.display())))?;
    ctx.input = bytes;
    let file = read_field_file(path)?;
    if file.field.dimension() != spec.dimension {
        return Err(CliError::Config(format!(
            "field has dimension {}, config says {}",
            file.field.dimension(),
            spec.dimension
        )));
    }
    Ok(file.field)
}

fn profile_options(cfg: &RunConfig) -> ProfileOptions {
    let mut o = ProfileOptions::default();
    if let Some(f) = cfg.tolerances.h_floor_rel {
        o.h_floor_rel = f;
    }
    o
}

fn cmd_frequency(inv: &Invocation, ctx: &mut Ctx) -> Result<i32, CliError> {
    let spec = inv.config.problem()?;
    let field = load_field(inv, ctx, &spec)?;
    let profile = frequency_profile(&spec, &field, profile_options(&inv.config))?;
    let reports = all_reports(&spec, &field, &profile, &inv.config.tolerances.identities)?;
    ctx.out.write("profile.csv", &profile_csv(&profile))?;
    let pass = reports.iter().all(|r| r.pass);
    let doc = json!({"schema_version": SCHEMA_VERSION, "tool_version": TOOL_VERSION, "pass": pass, "reports": reports});
    ctx.out.write("reports.json", &to_json(&doc))?;
    for r in &reports {
        ctx.verdict(&r.name, r.pass);
    }
    Ok(exit_for(pass))
}

fn cmd_audit(inv: &Invocation, ctx: &mut Ctx) -> Result<i32, CliError> {
    let spec = inv.config.problem()?;
    let field = load_field(inv, ctx, &spec)?;
    let mut controls = inv.config.tolerances.audit;
    if let Some(f) = inv.config.tolerances.h_floor_rel {
        controls.h_floor_rel = f;
    }
    let chain = audit(&spec, &field, &controls)?;
    let mut doc = serde_json::to_value(&chain).expect("serializable");
    doc["tool_version"] = json!(TOOL_VERSION);
    doc["input_hash"] = json!(input_hash(Command::Audit, inv, &ctx.input));
    ctx.out.write("certificate.json", &to_json(&doc))?;
    ctx.verdict("classification", chain.classification.as_str());
    if chain.whole_grid_zero {
        ctx.verdict("note", "field identically negligible on the grid");
    }
    Ok(chain.classification.exit_code())
}

fn sample_grid(cfg: &RunConfig, spec: &ProblemSpec) -> SampleGrid {
    let c = &cfg.check;
    let n = spec.dimension;
    let mut grid = SampleGrid::ball(n, spec.outer_radius, c.points, spec.nonlinearity.eps0, c.s_samples);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut added = 0;
    while added < c.random_points {
        let mut p = [0.0; freq_lab_core::MAX_DIM];
        for v in p.iter_mut().take(n.min(freq_lab_core::MAX_DIM)) {
            *v = rng.random_range(-1.0..1.0) * spec.outer_radius;
        }
        if p.iter().map(|v| v * v).sum::<f64>() < spec.outer_radius * spec.outer_radius {
            grid.points.push(p);
            added += 1;
        }
    }
    grid
}

fn cmd_check(inv: &Invocation, ctx: &mut Ctx) -> Result<i32, CliError> {
    let spec = inv.config.problem()?;
    let grid = sample_grid(&inv.config, &spec);
    let report = check_assumptions(&spec, &grid)?;
    let pass = report.passed();
    let doc = json!({"schema_version": SCHEMA_VERSION, "tool_version": TOOL_VERSION, "pass": pass, "points": grid.points.len(), "s_samples": grid.s_values.len(), "report": report});
    ctx.out.write("assumptions.json", &to_json(&doc))?;
    for c in &report.clauses {
        ctx.verdict(&format!("{:?}", c.clause), c.pass);
    }
    Ok(exit_for(pass))
}

/// Serializes a field next to the other outputs (used by tests and scripts).
pub fn field_text(field: &SolutionField, spec: &ProblemSpec) -> String {
    formats::write_field(field, q_of(spec))
}
