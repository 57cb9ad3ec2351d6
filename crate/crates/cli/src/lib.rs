//! Command-line driver: `ocp run | forward | convergence | check-gradient | list-presets`.
//!
//! Exit status is 0 on success, 1 when a solve fails and 2 for usage or
//! configuration errors. `OCP_OUT` replaces the output directory of any
//! subcommand that writes files; `--out` takes precedence over it.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ocp_core::cases::{benchmark_options, run_convergence_study, AssignedControl, CaseKind};
use ocp_core::forward::solve_state;
use ocp_core::io::output::fmt_real;
use ocp_core::io::{self, RunConfig, RunSetup};
use ocp_core::optimize::{
    check_gradient, control_recovery_error, evaluate_objective, steepest_descent, terminal_relative_error,
};
use ocp_core::OcpError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "ocp",
    version,
    about = "Adjoint-based optimal control of advection-diffusion-reaction problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Source {
    /// TOML run configuration.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset instead of a configuration file (see `list-presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve an optimal control problem.
    Run {
        #[command(flatten)]
        source: Source,
        /// Override the optimizer tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Override the iteration limit.
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Solve the state for a given control, e.g. to generate a target.
    Forward {
        #[command(flatten)]
        source: Source,
        /// `constant:V`, `exponential:A:R`, `parabolic:A`, or `initial` for
        /// the configured initial guess.
        #[arg(long, default_value = "initial")]
        control: String,
    },
    /// Benchmark errors and observed rates over a mesh sequence.
    Convergence {
        /// Benchmark configuration supplying optimizer settings.
        config: Option<PathBuf>,
        /// Diffusion coefficients, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0])]
        eps: Vec<f64>,
        /// Cell counts, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![4, 8, 16, 32])]
        meshes: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the adjoint gradient with central differences.
    CheckGradient {
        #[command(flatten)]
        source: Source,
        /// Number of randomly chosen control entries, capped at the control size.
        #[arg(long, default_value_t = 10)]
        entries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Finite-difference perturbation.
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
        /// Override the relative tolerance of the linear solves.
        #[arg(long)]
        solver_tol: Option<f64>,
        /// Fail with status 1 if any relative mismatch exceeds this.
        #[arg(long)]
        max_mismatch: Option<f64>,
    },
    /// Print the shipped presets.
    ListPresets,
}

/// Error tagged with the exit status it maps to.
struct Failure {
    code: i32,
    message: String,
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    }
}

fn solver_err(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_SOLVER,
        message: e.to_string(),
    }
}

/// Output writes are not solver failures but are not configuration errors
/// either; an unwritable directory is reported as status 1.
fn io_err(e: OcpError) -> Failure {
    solver_err(format!("writing results: {e}"))
}

type Outcome = Result<(), Failure>;

/// Runs the CLI on `argv` (program name first) and returns the exit status.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let env_out = std::env::var_os("OCP_OUT").map(PathBuf::from);
    let outcome = match cli.command {
        Command::Run { source, tol, max_iter } => run(&source, env_out, tol, max_iter),
        Command::Forward { source, control } => forward(&source, env_out, &control),
        Command::Convergence {
            config,
            eps,
            meshes,
            out,
        } => convergence(config.as_deref(), &eps, &meshes, out.or(env_out)),
        Command::CheckGradient {
            source,
            entries,
            seed,
            delta,
            solver_tol,
            max_mismatch,
        } => gradient_check(&source, env_out, entries, seed, delta, solver_tol, max_mismatch),
        Command::ListPresets => {
            for p in io::presets() {
                println!("{:<32} {}", p.name, p.description);
            }
            Ok(())
        }
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load(source: &Source) -> Result<(RunConfig, PathBuf), Failure> {
    match (&source.config, &source.preset) {
        (Some(path), _) => {
            let cfg = io::parse_config(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((cfg, base))
        }
        (None, Some(name)) => io::preset(name)
            .map(|p| (p.config, PathBuf::from(".")))
            .ok_or_else(|| config_err(format!("unknown preset `{name}`; see `ocp list-presets`"))),
        (None, None) => Err(config_err("give a configuration file or --preset")),
    }
}

fn setup(source: &Source, env_out: Option<PathBuf>) -> Result<RunSetup, Failure> {
    let (cfg, base) = load(source)?;
    let mut s = io::resolve(&cfg, &base).map_err(config_err)?;
    if let Some(dir) = source.out.clone().or(env_out) {
        s.output_dir = dir;
    }
    Ok(s)
}

fn run(source: &Source, env_out: Option<PathBuf>, tol: Option<f64>, max_iter: Option<usize>) -> Outcome {
    let mut s = setup(source, env_out)?;
    if let Some(t) = tol {
        s.options.tol = t;
    }
    if let Some(m) = max_iter {
        s.options.max_iter = m;
    }
    let result = steepest_descent(&s.case, &s.initial, &s.options).map_err(solver_err)?;
    let mut extra = Vec::new();
    if let Some(r) = &s.case.reference {
        let e = control_recovery_error(&result.control, r).map_err(solver_err)?;
        extra.push(("E_u", fmt_real(e)));
    }
    if s.case.terminal_target().is_some() {
        let e = terminal_relative_error(&s.case, &result.state).map_err(solver_err)?;
        extra.push(("terminal_error", fmt_real(e)));
    }
    io::write_run_outputs(&s.output_dir, &s.case, &result, &extra, s.vtk).map_err(io_err)?;
    println!(
        "{}: {} iterations ({}), J = {:.6e}, J_u = {:.6e}, J_target = {:.6e}, |grad| = {:.3e}",
        s.case.name,
        result.iterations,
        result.stop_reason.as_str(),
        result.objective.j,
        result.objective.j_u,
        result.objective.j_target,
        result.grad_norm
    );
    for (k, v) in &extra {
        println!("{k} = {v}");
    }
    println!("results in {}", s.output_dir.display());
    Ok(())
}

fn parse_control_spec(spec: &str) -> Result<Option<AssignedControl>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| config_err(format!("--control: `{s}` is not a number")))
    };
    Ok(Some(match parts[..] {
        ["initial"] => return Ok(None),
        ["constant", v] => AssignedControl::Constant(num(v)?),
        ["exponential", a, r] => AssignedControl::Exponential {
            amplitude: num(a)?,
            rate: num(r)?,
        },
        ["parabolic", a] => AssignedControl::Parabolic { amplitude: num(a)? },
        _ => {
            return Err(config_err(format!(
                "--control: `{spec}` is not one of initial, constant:V, exponential:A:R, parabolic:A"
            )))
        }
    }))
}

fn forward(source: &Source, env_out: Option<PathBuf>, control: &str) -> Outcome {
    let s = setup(source, env_out)?;
    let u = match parse_control_spec(control)? {
        None => s.initial.clone(),
        Some(a) => a.build(&s.case).map_err(config_err)?,
    };
    let state = solve_state(&s.case, &u).map_err(solver_err)?;
    let obj = evaluate_objective(&s.case, &state, &u).map_err(solver_err)?;
    let dir = &s.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| io_err(e.into()))?;
    let last = state.primary().last();
    io::write_field_csv(&dir.join("state_final.csv"), last).map_err(io_err)?;
    io::write_control_csv(&dir.join("control.csv"), &u).map_err(io_err)?;
    io::write_summary(
        &dir.join("summary.csv"),
        &[
            ("case", s.case.name.clone()),
            ("kind", s.case.kind().as_str().to_string()),
            ("control", control.to_string()),
            ("J", fmt_real(obj.j)),
            ("J_u", fmt_real(obj.j_u)),
            ("J_target", fmt_real(obj.j_target)),
        ],
    )
    .map_err(io_err)?;
    if s.vtk {
        io::write_vtk(&dir.join("state_final.vtk"), last, "state").map_err(io_err)?;
    }
    println!(
        "{}: J = {:.6e}; final state in {}",
        s.case.name,
        obj.j,
        dir.join("state_final.csv").display()
    );
    Ok(())
}

fn convergence(config: Option<&Path>, eps: &[f64], meshes: &[usize], out: Option<PathBuf>) -> Outcome {
    if meshes.is_empty() || meshes.contains(&0) {
        return Err(config_err("--meshes needs positive cell counts"));
    }
    let (opts, dir) = match config {
        Some(path) => {
            let cfg = io::parse_config(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            if CaseKind::parse(&cfg.case.kind) != Some(CaseKind::Benchmark) {
                return Err(config_err("case.kind: convergence studies need the benchmark"));
            }
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let s = io::resolve(&cfg, &base).map_err(config_err)?;
            (s.options, s.output_dir)
        }
        None => (benchmark_options(1.0), PathBuf::from("out").join("convergence")),
    };
    let dir = out.unwrap_or(dir);
    let studies: Vec<_> = eps.iter().map(|&e| run_convergence_study(e, meshes, &opts)).collect();
    let rate = |r: Option<f64>| r.map_or("-".to_string(), |r| format!("{r:.3}"));
    let mut failed = false;
    for s in &studies {
        println!("epsilon = {}", s.epsilon);
        println!(
            "{:>6} {:>5} {:>12} {:>7} {:>12} {:>7}",
            "h", "iters", "E_y", "rate", "E_lambda", "rate"
        );
        for r in &s.rows {
            println!(
                "{:>6} {:>5} {:>12.4e} {:>7} {:>12.4e} {:>7}",
                format!("1/{}", r.cells),
                r.iterations,
                r.e_y,
                rate(r.rate_y),
                r.e_lambda,
                rate(r.rate_lambda)
            );
        }
        for (n, msg) in &s.failed {
            eprintln!("mesh {n} failed: {msg}");
            failed = true;
        }
    }
    std::fs::create_dir_all(&dir).map_err(|e| io_err(e.into()))?;
    io::write_convergence_csv(&dir.join("convergence.csv"), &studies).map_err(io_err)?;
    println!("table in {}", dir.join("convergence.csv").display());
    if failed {
        return Err(solver_err("some meshes failed"));
    }
    Ok(())
}

fn gradient_check(
    source: &Source,
    env_out: Option<PathBuf>,
    entries: usize,
    seed: u64,
    delta: f64,
    solver_tol: Option<f64>,
    max_mismatch: Option<f64>,
) -> Outcome {
    let mut s = setup(source, env_out)?;
    if let Some(t) = solver_tol {
        s.case.solver_tol = t;
    }
    let n = s.initial.n_entries();
    if entries == 0 {
        return Err(config_err("--entries must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, entries.min(n)).into_vec();
    picked.sort_unstable();
    let rows = check_gradient(&s.case, &s.initial, &picked, delta).map_err(solver_err)?;
    println!(
        "{:>8} {:>6} {:>6} {:>14} {:>14} {:>10}",
        "entry", "frame", "index", "adjoint", "differences", "mismatch"
    );
    for r in &rows {
        println!(
            "{:>8} {:>6} {:>6} {:>14.6e} {:>14.6e} {:>10.2e}",
            r.entry, r.frame, r.index, r.adjoint, r.finite_difference, r.relative_mismatch
        );
    }
    let worst = rows.iter().map(|r| r.relative_mismatch).fold(0.0, f64::max);
    println!("max relative mismatch {worst:.3e}");
    std::fs::create_dir_all(&s.output_dir).map_err(|e| io_err(e.into()))?;
    io::write_gradient_check_csv(&s.output_dir.join("gradient_check.csv"), &rows).map_err(io_err)?;
    match max_mismatch {
        Some(bound) if worst > bound => Err(solver_err(format!("mismatch {worst:.3e} exceeds {bound:.3e}"))),
        _ => Ok(()),
    }
}
