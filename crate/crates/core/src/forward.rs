//! Implicit Euler state solvers.

use crate::cases::{BenchmarkProblem, CaseDefinition, LightMode, LightProblem, Problem, TransportProblem};
use crate::discretize::{self, Bc, BoundaryConditions, Coefficient, FaceData, OperatorSpec};
use crate::error::{OcpError, Result};
use crate::mesh::{PatchId, ScalarField, StructuredGrid, Trajectory, VectorField};
use crate::optimize::{Control, ControlKind};

#[derive(Debug, Clone)]
pub struct BenchmarkState {
    pub y: Trajectory,
}

/// Free drug, bound drug and (concentrated mode) light intensity.
#[derive(Debug, Clone)]
pub struct LightState {
    pub free: Trajectory,
    pub bound: Trajectory,
    pub light: Option<Trajectory>,
}

#[derive(Debug, Clone)]
pub struct TransportState {
    pub y: Trajectory,
}

#[derive(Debug, Clone)]
pub enum State {
    Benchmark(BenchmarkState),
    Light(LightState),
    Transport(TransportState),
}

impl State {
    /// The observed quantity: `y`, or the free drug.
    pub fn primary(&self) -> &Trajectory {
        match self {
            State::Benchmark(s) => &s.y,
            State::Light(s) => &s.free,
            State::Transport(s) => &s.y,
        }
    }
}

/// Dispatches on the case's problem.
pub fn solve_state(case: &CaseDefinition, u: &Control) -> Result<State> {
    match &case.problem {
        Problem::Benchmark(_) => solve_state_benchmark(case, u).map(State::Benchmark),
        Problem::Light(l) => match l.mode {
            LightMode::Distributed => solve_state_light_distributed(case, u).map(State::Light),
            LightMode::Concentrated => solve_state_light_concentrated(case, u).map(State::Light),
        },
        Problem::Transport(t) => solve_state_transport(case, &t.velocity, u).map(State::Transport),
    }
}

fn check_control(case: &CaseDefinition, u: &Control, expect: &str, ok: bool) -> Result<()> {
    if !ok {
        return Err(OcpError::Shape(format!(
            "case `{}` needs a {expect} control",
            case.name
        )));
    }
    if u.n_steps() != case.n_steps || u.grid().n_cells() != case.grid.n_cells() {
        return Err(OcpError::Shape(format!(
            "control does not match the time levels or grid of case `{}`",
            case.name
        )));
    }
    Ok(())
}

fn frame(grid: &std::sync::Arc<StructuredGrid>, values: Vec<f64>) -> Result<ScalarField> {
    ScalarField::new(grid.clone(), values)
}

fn benchmark(case: &CaseDefinition) -> Result<&BenchmarkProblem> {
    match &case.problem {
        Problem::Benchmark(b) => Ok(b),
        _ => Err(OcpError::Invalid(format!("case `{}` is not the benchmark", case.name))),
    }
}

pub(crate) fn light(case: &CaseDefinition, mode: LightMode) -> Result<&LightProblem> {
    match &case.problem {
        Problem::Light(l) if l.mode == mode => Ok(l),
        _ => Err(OcpError::Invalid(format!(
            "case `{}` is not a {:?} light problem",
            case.name, mode
        ))),
    }
}

pub(crate) fn transport(case: &CaseDefinition) -> Result<&TransportProblem> {
    match &case.problem {
        Problem::Transport(t) => Ok(t),
        _ => Err(OcpError::Invalid(format!(
            "case `{}` is not a transport problem",
            case.name
        ))),
    }
}

/// `y_t + V.grad(y) - eps lap(y) = f + u`, Dirichlet data on the whole boundary.
pub fn solve_state_benchmark(case: &CaseDefinition, u: &Control) -> Result<BenchmarkState> {
    let p = benchmark(case)?;
    check_control(case, u, "distributed", u.kind() == ControlKind::Distributed)?;
    let grid = &case.grid;
    let v = VectorField::uniform(grid.clone(), p.velocity);
    let bc = BoundaryConditions::uniform(grid, Bc::dirichlet(p.boundary_value))?;
    let mut frames = Vec::with_capacity(case.n_steps + 1);
    frames.push(p.initial.clone());
    let mut src = vec![0.0; grid.n_cells()];
    for n in 1..=case.n_steps {
        let f = p.source.frame(n).values();
        for ((s, fi), ui) in src.iter_mut().zip(f).zip(u.at_level(n)) {
            *s = fi + ui;
        }
        let spec = OperatorSpec::diffusion(p.epsilon)
            .with_velocity(&v)
            .with_source(Coefficient::PerCell(&src));
        let prev: &ScalarField = &frames[n - 1];
        let next = discretize::step(grid, &spec, &bc, prev.values(), case.dt, case.solver_tol)?;
        frames.push(frame(grid, next)?);
    }
    Ok(BenchmarkState {
        y: Trajectory::new(case.dt, frames)?,
    })
}

/// Free-drug conditions: Dirichlet on the sink patch, flux elsewhere.
pub(crate) fn free_drug_bc(
    grid: &StructuredGrid,
    sink: PatchId,
    sink_value: f64,
    flux: f64,
) -> Result<BoundaryConditions> {
    let per_patch = (0..grid.n_patches())
        .map(|p| {
            if PatchId(p) == sink {
                Bc::dirichlet(sink_value)
            } else {
                Bc::neumann(flux)
            }
        })
        .collect();
    BoundaryConditions::from_vec(grid, per_patch)
}

/// Light conditions: Dirichlet data on the control patch, flux elsewhere.
pub(crate) fn light_bc(
    grid: &StructuredGrid,
    control: PatchId,
    value: FaceData,
    flux: f64,
) -> Result<BoundaryConditions> {
    let per_patch = (0..grid.n_patches())
        .map(|p| {
            if PatchId(p) == control {
                Bc::Dirichlet(value.clone())
            } else {
                Bc::neumann(flux)
            }
        })
        .collect();
    BoundaryConditions::from_vec(grid, per_patch)
}

/// Implicit decay of the bound drug, `c_b^{n+1} = c_b^n / (1 + gamma I dt)`.
fn release(bound: &[f64], intensity: &[f64], gamma: f64, dt: f64, level: usize) -> Result<Vec<f64>> {
    bound
        .iter()
        .zip(intensity)
        .enumerate()
        .map(|(c, (b, i))| {
            let d = 1.0 + gamma * i * dt;
            if d <= 0.0 {
                Err(OcpError::Step(format!(
                    "release factor 1 + gamma I dt = {d} is not positive in cell {c} at level {level}"
                )))
            } else {
                Ok(b / d)
            }
        })
        .collect()
}

/// Bound drug released by a distributed light intensity `u`.
pub fn solve_state_light_distributed(case: &CaseDefinition, u: &Control) -> Result<LightState> {
    let p = light(case, LightMode::Distributed)?;
    check_control(case, u, "distributed", u.kind() == ControlKind::Distributed)?;
    let grid = &case.grid;
    let bc = free_drug_bc(grid, p.sink_patch, p.free_sink_value, p.free_flux)?;
    let mut free = vec![p.free_initial.clone()];
    let mut bound = vec![p.bound_initial.clone()];
    let mut src = vec![0.0; grid.n_cells()];
    for n in 1..=case.n_steps {
        let intensity = u.at_level(n);
        let b = release(bound[n - 1].values(), intensity, p.gamma, case.dt, n)?;
        for ((s, bi), i) in src.iter_mut().zip(&b).zip(intensity) {
            *s = p.gamma * bi * i;
        }
        let spec = OperatorSpec::diffusion(p.drug_diffusion).with_source(Coefficient::PerCell(&src));
        let f = discretize::step(grid, &spec, &bc, free[n - 1].values(), case.dt, case.solver_tol)?;
        free.push(frame(grid, f)?);
        bound.push(frame(grid, b)?);
    }
    Ok(LightState {
        free: Trajectory::new(case.dt, free)?,
        bound: Trajectory::new(case.dt, bound)?,
        light: None,
    })
}

/// Light applied on a boundary patch, then release, then free-drug diffusion.
pub fn solve_state_light_concentrated(case: &CaseDefinition, u: &Control) -> Result<LightState> {
    let p = light(case, LightMode::Concentrated)?;
    let on_patch =
        matches!(u.kind(), ControlKind::BoundaryTrace(q) | ControlKind::BoundaryScalar(q) if q == p.control_patch);
    check_control(case, u, "boundary control on the light patch", on_patch)?;
    let grid = &case.grid;
    let free_bc = free_drug_bc(grid, p.sink_patch, p.free_sink_value, p.free_flux)?;
    let mut free = vec![p.free_initial.clone()];
    let mut bound = vec![p.bound_initial.clone()];
    let mut light = vec![ScalarField::constant(grid.clone(), p.light_initial)];
    let mut src = vec![0.0; grid.n_cells()];
    let light_spec = OperatorSpec::diffusion(p.light_diffusion)
        .with_reaction(Coefficient::Uniform(p.absorption))
        .with_time_scale(1.0 / p.light_speed);
    for n in 1..=case.n_steps {
        let lbc = light_bc(grid, p.control_patch, u.face_data(n), p.light_flux)?;
        let i = discretize::step(grid, &light_spec, &lbc, light[n - 1].values(), case.dt, case.solver_tol)?;
        let b = release(bound[n - 1].values(), &i, p.gamma, case.dt, n)?;
        for ((s, bi), ii) in src.iter_mut().zip(&b).zip(&i) {
            *s = p.gamma * bi * ii;
        }
        let spec = OperatorSpec::diffusion(p.drug_diffusion).with_source(Coefficient::PerCell(&src));
        let f = discretize::step(grid, &spec, &free_bc, free[n - 1].values(), case.dt, case.solver_tol)?;
        light.push(frame(grid, i)?);
        bound.push(frame(grid, b)?);
        free.push(frame(grid, f)?);
    }
    Ok(LightState {
        free: Trajectory::new(case.dt, free)?,
        bound: Trajectory::new(case.dt, bound)?,
        light: Some(Trajectory::new(case.dt, light)?),
    })
}

pub(crate) fn check_velocity(case: &CaseDefinition, velocity: &Trajectory<VectorField>) -> Result<()> {
    if velocity.n_steps() != case.n_steps {
        return Err(OcpError::Shape(format!(
            "velocity has {} steps, case has {}",
            velocity.n_steps(),
            case.n_steps
        )));
    }
    if (velocity.dt() - case.dt).abs() > 1e-12 * case.dt {
        return Err(OcpError::Shape(format!(
            "velocity time step {} differs from case time step {}",
            velocity.dt(),
            case.dt
        )));
    }
    if velocity.first().grid().cells() != case.grid.cells() || velocity.first().grid().dim() != case.grid.dim() {
        return Err(OcpError::Shape("velocity lives on another grid".into()));
    }
    Ok(())
}

pub(crate) fn transport_bc(case: &CaseDefinition, p: &TransportProblem, drug: FaceData) -> Result<BoundaryConditions> {
    let pt = p.patches;
    let per_patch = (0..case.grid.n_patches())
        .map(|k| {
            let id = PatchId(k);
            if id == pt.drug {
                Bc::Dirichlet(drug.clone())
            } else if id == pt.catheter {
                Bc::dirichlet(p.catheter_value)
            } else if id == pt.inlet {
                Bc::dirichlet(p.inlet_value)
            } else {
                Bc::neumann(p.wall_flux)
            }
        })
        .collect();
    BoundaryConditions::from_vec(&case.grid, per_patch)
}

/// Passive scalar advected by `velocity`, with the drug patch value as control.
pub fn solve_state_transport(
    case: &CaseDefinition,
    velocity: &Trajectory<VectorField>,
    u: &Control,
) -> Result<TransportState> {
    let p = transport(case)?;
    let on_patch =
        matches!(u.kind(), ControlKind::BoundaryTrace(q) | ControlKind::BoundaryScalar(q) if q == p.patches.drug);
    check_control(case, u, "boundary control on the drug patch", on_patch)?;
    check_velocity(case, velocity)?;
    let grid = &case.grid;
    let mut frames = vec![p.initial.clone()];
    for n in 1..=case.n_steps {
        let bc = transport_bc(case, p, u.face_data(n))?;
        let spec = OperatorSpec::diffusion(p.diffusivity).with_velocity(velocity.frame(n));
        let y = discretize::step(grid, &spec, &bc, frames[n - 1].values(), case.dt, case.solver_tol)?;
        frames.push(frame(grid, y)?);
    }
    Ok(TransportState {
        y: Trajectory::new(case.dt, frames)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{benchmark_case, light_case, transport_case, BenchmarkParams, LightParams, TransportParams};
    use crate::optimize::{Control, ControlLayout, TimeProfile};
    use proptest::prelude::*;

    fn small_light(distributed: bool) -> CaseDefinition {
        let mut p = if distributed {
            LightParams::distributed(5.0, 1e-4)
        } else {
            LightParams::concentrated_1d(5.0, 1e-4)
        };
        p.cells = [16, 1];
        p.t_final = 2.0;
        p.solver_tol = 1e-13;
        light_case(&p).unwrap()
    }

    fn small_transport() -> CaseDefinition {
        let p = TransportParams {
            cells: [32, 16],
            t_final: 0.2,
            solver_tol: 1e-13,
            ..TransportParams::default()
        };
        transport_case(&p, None).unwrap()
    }

    #[test]
    fn bound_drug_closed_form() {
        let case = small_light(true);
        let (gamma, dt) = (4e-3, case.dt);
        let u = Control::constant(case.control, case.grid.clone(), dt, case.n_steps, 3.0).unwrap();
        let s = solve_state_light_distributed(&case, &u).unwrap();
        let b0 = s.bound.first().values().to_vec();
        for n in 0..=case.n_steps {
            let factor = (1.0 + gamma * 3.0 * dt).powi(-(n as i32));
            for (b, init) in s.bound.frame(n).values().iter().zip(&b0) {
                assert!((b - init * factor).abs() <= 1e-15 * init.abs().max(1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn bound_drug_positive_and_non_increasing(level in 0.0f64..40.0, seed in 0u64..1000) {
            let case = small_light(true);
            let n = case.grid.n_cells();
            let frames: Vec<Vec<f64>> = vec![(0..n).map(|c| level * ((seed as f64 + c as f64) * 0.37).sin().abs()).collect()];
            let u = Control::new(case.control, case.grid.clone(), case.dt, case.n_steps, frames).unwrap();
            let s = solve_state_light_distributed(&case, &u).unwrap();
            for w in s.bound.frames().windows(2) {
                for (a, b) in w[0].values().iter().zip(w[1].values()) {
                    prop_assert!(*b >= 0.0);
                    prop_assert!(b <= a);
                }
            }
        }
    }

    #[test]
    fn release_rejects_non_positive_factor() {
        let case = small_light(true);
        let u = Control::constant(case.control, case.grid.clone(), case.dt, case.n_steps, -1e4).unwrap();
        assert!(matches!(solve_state(&case, &u), Err(OcpError::Step(_))));
    }

    #[test]
    fn benchmark_superposition() {
        let mut case = benchmark_case(&BenchmarkParams::new(0.1, 8)).unwrap();
        case.solver_tol = 1e-14;
        let layout = ControlLayout {
            kind: ControlKind::Distributed,
            profile: TimeProfile::PerLevel,
        };
        let n = case.grid.n_cells();
        let mk = |f: &dyn Fn(usize, usize) -> f64| {
            let frames = (0..=case.n_steps).map(|l| (0..n).map(|c| f(l, c)).collect()).collect();
            Control::new(layout, case.grid.clone(), case.dt, case.n_steps, frames).unwrap()
        };
        let u1 = mk(&|l, c| ((l * 7 + c) as f64 * 0.13).sin());
        let u2 = mk(&|l, c| ((l + 3 * c) as f64 * 0.29).cos() * 2.0);
        let sum = u1.axpy(1.0, &u2).unwrap();
        let y = |u: &Control| solve_state_benchmark(&case, u).unwrap().y;
        let (y0, y1, y2, y12) = (y(&case.zero_control().unwrap()), y(&u1), y(&u2), y(&sum));
        for k in 0..=case.n_steps {
            for c in 0..n {
                let lhs = y12.frame(k).values()[c] - y0.frame(k).values()[c];
                let rhs = (y1.frame(k).values()[c] - y0.frame(k).values()[c])
                    + (y2.frame(k).values()[c] - y0.frame(k).values()[c]);
                assert!((lhs - rhs).abs() <= 1e-10, "level {k} cell {c}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn initial_frames_are_exact() {
        let case = benchmark_case(&BenchmarkParams::new(1.0, 4)).unwrap();
        let s = solve_state_benchmark(&case, &case.zero_control().unwrap()).unwrap();
        let Problem::Benchmark(b) = &case.problem else {
            unreachable!()
        };
        assert_eq!(s.y.first(), &b.initial);
        assert_eq!(s.y.n_steps(), case.n_steps);
    }

    /// Total drug changes only through the diffusive flux at the sink.
    #[test]
    fn light_drug_budget() {
        for distributed in [true, false] {
            let case = small_light(distributed);
            let u = match case.control.kind {
                ControlKind::Distributed => {
                    Control::constant(case.control, case.grid.clone(), case.dt, case.n_steps, 4.0)
                }
                _ => Control::constant(case.control, case.grid.clone(), case.dt, case.n_steps, 8.0),
            }
            .unwrap();
            let s = match solve_state(&case, &u).unwrap() {
                State::Light(s) => s,
                _ => unreachable!(),
            };
            let g = &case.grid;
            let vol = g.cell_volume();
            let sink = g.patch_id("right").unwrap();
            let total = |n: usize| -> f64 {
                s.free
                    .frame(n)
                    .values()
                    .iter()
                    .zip(s.bound.frame(n).values())
                    .map(|(f, b)| (f + b) * vol)
                    .sum()
            };
            for n in 1..=case.n_steps {
                let f = s.free.frame(n).values();
                let outflow: f64 = g
                    .patch_faces(sink)
                    .iter()
                    .map(|face| 4e-4 * face.area * f[face.cell] / (0.5 * g.h()[face.axis()]))
                    .sum();
                let change = total(n) - total(n - 1);
                assert!(
                    (change + case.dt * outflow).abs() < 1e-12,
                    "step {n}: {change} vs {}",
                    -case.dt * outflow
                );
            }
        }
    }

    /// Mass change equals the sum of boundary fluxes evaluated with the
    /// discrete face values: Dirichlet data on inflow patches, the owner cell
    /// on zero-gradient patches.
    #[test]
    fn transport_flux_budget() {
        let case = small_transport();
        let Problem::Transport(p) = &case.problem else {
            unreachable!()
        };
        let u = Control::constant(case.control, case.grid.clone(), case.dt, case.n_steps, 1.0).unwrap();
        let s = solve_state_transport(&case, &p.velocity, &u).unwrap();
        let g = &case.grid;
        let vol = g.cell_volume();
        let eps = p.diffusivity;
        for n in 1..=case.n_steps {
            let y = s.y.frame(n).values();
            let v = p.velocity.frame(n);
            let mut inflow = 0.0;
            for (id, value) in [
                (p.patches.drug, Some(1.0)),
                (p.patches.catheter, Some(0.0)),
                (p.patches.inlet, Some(0.0)),
                (p.patches.outlet, None),
                (p.patches.wall, None),
            ] {
                for face in g.patch_faces(id) {
                    let flux = v.boundary_normal(face) * face.area;
                    let yp = y[face.cell];
                    inflow += match value {
                        Some(gv) => eps * face.area * (gv - yp) / (0.5 * g.h()[face.axis()]) - flux * gv,
                        None => -flux * yp,
                    };
                }
            }
            let change: f64 = y
                .iter()
                .zip(s.y.frame(n - 1).values())
                .map(|(a, b)| (a - b) * vol)
                .sum();
            assert!(
                (change - case.dt * inflow).abs() < 1e-12,
                "step {n}: {change} vs {}",
                case.dt * inflow
            );
        }
    }

    #[test]
    fn mismatched_controls_rejected() {
        let t = small_transport();
        let light = small_light(true);
        assert!(solve_state(&t, &light.zero_control().unwrap()).is_err());
        let bench = benchmark_case(&BenchmarkParams::new(1.0, 4)).unwrap();
        assert!(solve_state(&bench, &t.zero_control().unwrap()).is_err());
    }
}
