use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use freq_lab::config::{NonlinearityKind, OdeMode, RunConfig, SolveMode};
use freq_lab::{resolve_output_dir, run, CliError, Command, Invocation, EXIT_CONFIG};

/// Frequency functions and unique-continuation audits for sublinear
/// elliptic equations.
#[derive(Parser, Debug)]
#[command(name = "freq-lab", version)]
struct Cli {
    /// TOML run configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides FREQ_LAB_OUT and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the random sample points used by `check`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for refinement sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug, Default)]
struct Problem {
    /// Exponent of f(s) = |s|^(q-2) s.
    #[arg(long)]
    q: Option<f64>,
    /// Spatial dimension.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Switch the nonlinearity off (f = 0).
    #[arg(long)]
    linear: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Explicit profile, energy conservation, radial shooting and porous-medium runs.
    Ode {
        /// Residual of the explicit compactly supported profile.
        #[arg(long, conflicts_with_all = ["energy", "shoot", "pme"])]
        counterexample: bool,
        /// Energy drift and measured order of RK4 on -u'' = |u|^(q-2) u.
        #[arg(long, conflicts_with_all = ["shoot", "pme"])]
        energy: bool,
        /// Radial shooting from u(0) = a with a zero audit.
        #[arg(long, conflicts_with = "pme")]
        shoot: bool,
        /// Separated porous-medium solution built on a radial profile.
        #[arg(long)]
        pme: bool,
        /// Exponent q in [1, 2).
        #[arg(long)]
        q: Option<f64>,
        /// Dimension of radial runs.
        #[arg(long = "N")]
        n: Option<usize>,
        /// Initial value u(0).
        #[arg(long)]
        a: Option<f64>,
        /// Integration step (the porous-medium step for --pme).
        #[arg(long)]
        h: Option<f64>,
        /// End of the integration interval.
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Produce a solution field.
    Solve {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[command(flatten)]
        problem: Problem,
        /// u(0) for radial solves.
        #[arg(long)]
        a: Option<f64>,
        /// Radial step for radial solves.
        #[arg(long)]
        h: Option<f64>,
        /// Radii of polar grids, origin included.
        #[arg(long)]
        nr: Option<usize>,
        /// Angles of polar grids (a multiple of 4).
        #[arg(long)]
        nt: Option<usize>,
        /// Dirichlet data g(x1, x2) for grid solves.
        #[arg(long)]
        boundary: Option<String>,
        /// Expression for sampled fields and manufactured solutions.
        #[arg(long)]
        exact: Option<String>,
    },
    /// Frequency profile and identity checks of a field file.
    Frequency {
        /// Field file written by `solve`.
        #[arg(long)]
        field: PathBuf,
        #[command(flatten)]
        problem: Problem,
    },
    /// Vanishing-on-a-ball audit of a field file.
    Audit {
        /// Field file written by `solve`.
        #[arg(long)]
        field: PathBuf,
        #[command(flatten)]
        problem: Problem,
        /// Let the certificate chain decide even when the residual gate fails.
        #[arg(long)]
        bypass_gate: bool,
        /// Vanishing threshold for d(r), relative to d at the outer radius.
        #[arg(long)]
        tol_d: Option<f64>,
        /// Use this vanishing radius instead of detecting one.
        #[arg(long)]
        force_r0: Option<f64>,
    },
    /// Check the structural assumptions of the configured problem.
    Check {
        #[command(flatten)]
        problem: Problem,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Radial,
    Grid,
    Manufactured,
    Sample,
    Glued,
}

fn apply_problem(cfg: &mut RunConfig, p: &Problem) {
    if let Some(q) = p.q {
        cfg.nonlinearity.q = q;
    }
    if let Some(n) = p.n {
        cfg.domain.dimension = n;
    }
    if p.linear {
        cfg.nonlinearity.kind = NonlinearityKind::None;
    }
}

fn invocation(cli: Cli) -> Result<(Command, Invocation), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mut field = None;
    let cmd = match cli.command {
        Cmd::Ode {
            counterexample,
            energy,
            shoot,
            pme,
            q,
            n,
            a,
            h,
            t_max,
        } => {
            let o = &mut cfg.ode;
            o.mode = match (counterexample, energy, shoot, pme) {
                (_, true, _, _) => OdeMode::Energy,
                (_, _, true, _) => OdeMode::Shoot,
                (_, _, _, true) => OdeMode::Pme,
                (true, ..) => OdeMode::Counterexample,
                _ => o.mode,
            };
            o.q = q.unwrap_or(o.q);
            o.dimension = n.unwrap_or(o.dimension);
            o.a = a.unwrap_or(o.a);
            if let Some(h) = h {
                o.h = h;
                o.pme_h = h;
            }
            o.t_max = t_max.unwrap_or(o.t_max);
            Command::Ode
        }
        Cmd::Solve {
            mode,
            problem,
            a,
            h,
            nr,
            nt,
            boundary,
            exact,
        } => {
            apply_problem(&mut cfg, &problem);
            if let Some(m) = mode {
                cfg.solve.mode = match m {
                    Mode::Radial => SolveMode::Radial,
                    Mode::Grid => SolveMode::Grid,
                    Mode::Manufactured => SolveMode::Manufactured,
                    Mode::Sample => SolveMode::Sample,
                    Mode::Glued => SolveMode::Glued,
                };
            }
            cfg.solve.a = a.unwrap_or(cfg.solve.a);
            cfg.grid.h = h.unwrap_or(cfg.grid.h);
            cfg.grid.n_radii = nr.unwrap_or(cfg.grid.n_radii);
            cfg.grid.n_theta = nt.unwrap_or(cfg.grid.n_theta);
            if let Some(b) = boundary {
                cfg.solve.boundary = b;
            }
            if let Some(e) = exact {
                cfg.solve.exact = e;
            }
            Command::Solve
        }
        Cmd::Frequency { field: f, problem } => {
            apply_problem(&mut cfg, &problem);
            field = Some(f);
            Command::Frequency
        }
        Cmd::Audit {
            field: f,
            problem,
            bypass_gate,
            tol_d,
            force_r0,
        } => {
            apply_problem(&mut cfg, &problem);
            let a = &mut cfg.tolerances.audit;
            a.bypass_gate |= bypass_gate;
            a.tol_d = tol_d.unwrap_or(a.tol_d);
            a.force_r0 = force_r0.or(a.force_r0);
            field = Some(f);
            Command::Audit
        }
        Cmd::Check { problem } => {
            apply_problem(&mut cfg, &problem);
            Command::Check
        }
    };
    let env = std::env::var("FREQ_LAB_OUT").ok();
    let output_dir = resolve_output_dir(&cfg, cli.out.as_deref(), env.as_deref());
    Ok((
        cmd,
        Invocation {
            config: cfg,
            output_dir,
            field,
            jobs: cli.jobs,
        },
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = invocation(cli).and_then(|(cmd, inv)| run(cmd, &inv).map(|o| (o, inv.output_dir)));
    let code = match result {
        Ok((outcome, dir)) => {
            for (k, v) in &outcome.record.verdicts {
                println!("{k}: {v}");
            }
            println!("outputs: {}", dir.display());
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(u8::try_from(code).unwrap_or(EXIT_CONFIG as u8))
}
