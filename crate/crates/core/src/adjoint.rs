//! Adjoint solvers.
//!
//! Each backward equation is rewritten in the reflected time `tau = T_f - t`
//! and marched forward in `tau` with the same assembly as the state. Reflected
//! step `m` (from `tau^{m-1}` to `tau^m`) produces forward frame `N - m` and
//! samples state, control and velocity at forward level `N - m + 1`, the
//! level whose implicit step it transposes. Results are stored on the forward
//! grid; frame `N` holds the terminal condition verbatim, and frame `n - 1`
//! is the multiplier of forward step `n`.

use crate::cases::{CaseDefinition, LightMode, Problem};
use crate::discretize::{self, Bc, BoundaryConditions, Coefficient, FaceData, OperatorSpec};
use crate::error::{OcpError, Result};
use crate::forward::{self, BenchmarkState, LightState, State, TransportState};
use crate::mesh::{PatchId, ScalarField, Trajectory, VectorField};
use crate::optimize::Control;

#[derive(Debug, Clone)]
pub enum AdjointState {
    Benchmark {
        lambda: Trajectory,
    },
    LightDistributed {
        /// Multiplier of the free-drug equation.
        free: Trajectory,
        /// Multiplier of the bound-drug equation.
        bound: Trajectory,
    },
    LightConcentrated {
        /// Multiplier of the light equation.
        light: Trajectory,
        free: Trajectory,
        bound: Trajectory,
    },
    Transport {
        lambda: Trajectory,
    },
}

/// Dispatches on the case's problem.
pub fn solve_adjoint(case: &CaseDefinition, state: &State, u: &Control) -> Result<AdjointState> {
    match (&case.problem, state) {
        (Problem::Benchmark(_), State::Benchmark(s)) => solve_adjoint_benchmark(s, case),
        (Problem::Light(l), State::Light(s)) if l.mode == LightMode::Distributed => {
            solve_adjoint_light_distributed(s, u, case)
        }
        (Problem::Light(_), State::Light(s)) => solve_adjoint_light_concentrated(s, case),
        (Problem::Transport(t), State::Transport(s)) => solve_adjoint_transport(s, &t.velocity, case),
        _ => Err(OcpError::Invalid(format!(
            "state does not belong to case `{}`",
            case.name
        ))),
    }
}

/// Reverses frames computed in reflected order into forward order.
fn unreflect(case: &CaseDefinition, grid_frames: Vec<Vec<f64>>) -> Result<Trajectory> {
    let frames = grid_frames
        .into_iter()
        .rev()
        .map(|v| ScalarField::new(case.grid.clone(), v))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(case.dt, frames)
}

fn check_state(case: &CaseDefinition, traj: &Trajectory) -> Result<()> {
    if traj.n_steps() != case.n_steps || traj.grid().n_cells() != case.grid.n_cells() {
        return Err(OcpError::Shape(format!("state does not match case `{}`", case.name)));
    }
    Ok(())
}

/// Tracking-type adjoint, `lambda(T_f) = 0`.
pub fn solve_adjoint_benchmark(state: &BenchmarkState, case: &CaseDefinition) -> Result<AdjointState> {
    solve_adjoint_benchmark_with_terminal(state, case, None)
}

/// As [`solve_adjoint_benchmark`], optionally replacing the zero terminal value.
pub fn solve_adjoint_benchmark_with_terminal(
    state: &BenchmarkState,
    case: &CaseDefinition,
    terminal: Option<&ScalarField>,
) -> Result<AdjointState> {
    let p = match &case.problem {
        Problem::Benchmark(b) => b,
        _ => return Err(OcpError::Invalid(format!("case `{}` is not the benchmark", case.name))),
    };
    check_state(case, &state.y)?;
    let grid = &case.grid;
    let n_steps = case.n_steps;
    let beta2 = case.weights.beta2;
    let v = VectorField::uniform(grid.clone(), [-p.velocity[0], -p.velocity[1]]);
    let bc = BoundaryConditions::uniform(grid, Bc::dirichlet(0.0))?;
    let init = match terminal {
        Some(t) if t.len() == grid.n_cells() => t.values().to_vec(),
        Some(_) => return Err(OcpError::Shape("terminal value lives on another grid".into())),
        None => vec![0.0; grid.n_cells()],
    };
    let mut out = vec![init];
    let mut src = vec![0.0; grid.n_cells()];
    for m in 1..=n_steps {
        let n = n_steps - m + 1;
        let y = state.y.frame(n).values();
        let yd = p.target.frame(n).values();
        for ((s, a), b) in src.iter_mut().zip(y).zip(yd) {
            *s = beta2 * (a - b);
        }
        let spec = OperatorSpec::diffusion(p.epsilon)
            .with_velocity(&v)
            .with_source(Coefficient::PerCell(&src));
        let next = discretize::step(grid, &spec, &bc, &out[m - 1], case.dt, case.solver_tol)?;
        out.push(next);
    }
    Ok(AdjointState::Benchmark {
        lambda: unreflect(case, out)?,
    })
}

fn terminal_mismatch(case: &CaseDefinition, last: &ScalarField) -> Result<Vec<f64>> {
    let target = case
        .terminal_target()
        .ok_or_else(|| OcpError::MissingTarget(case.name.clone()))?;
    let b3 = case.weights.beta3;
    Ok(last
        .values()
        .iter()
        .zip(target.values())
        .map(|(c, t)| b3 * (c - t))
        .collect())
}

/// Implicit reflected update of a per-cell ODE `d(mu)/dtau = gamma I (lam - mu)`.
fn bound_update(prev: &[f64], lam: &[f64], intensity: &[f64], gamma: f64, dt: f64) -> Vec<f64> {
    prev.iter()
        .zip(lam)
        .zip(intensity)
        .map(|((m, l), i)| {
            let k = dt * gamma * i;
            (m + k * l) / (1.0 + k)
        })
        .collect()
}

pub fn solve_adjoint_light_distributed(state: &LightState, u: &Control, case: &CaseDefinition) -> Result<AdjointState> {
    let p = forward::light(case, LightMode::Distributed)?;
    check_state(case, &state.free)?;
    let grid = &case.grid;
    let n_steps = case.n_steps;
    let bc = forward::free_drug_bc(grid, p.sink_patch, 0.0, 0.0)?;
    let spec = OperatorSpec::diffusion(p.drug_diffusion);
    let mut free = vec![terminal_mismatch(case, state.free.last())?];
    let mut bound = vec![vec![0.0; grid.n_cells()]];
    for m in 1..=n_steps {
        let n = n_steps - m + 1;
        let f = discretize::step(grid, &spec, &bc, &free[m - 1], case.dt, case.solver_tol)?;
        let b = bound_update(&bound[m - 1], &f, u.at_level(n), p.gamma, case.dt);
        free.push(f);
        bound.push(b);
    }
    Ok(AdjointState::LightDistributed {
        free: unreflect(case, free)?,
        bound: unreflect(case, bound)?,
    })
}

pub fn solve_adjoint_light_concentrated(state: &LightState, case: &CaseDefinition) -> Result<AdjointState> {
    let p = forward::light(case, LightMode::Concentrated)?;
    check_state(case, &state.free)?;
    let light_state = state
        .light
        .as_ref()
        .ok_or_else(|| OcpError::Invalid("concentrated state carries no light field".into()))?;
    let grid = &case.grid;
    let n_steps = case.n_steps;
    let free_bc = forward::free_drug_bc(grid, p.sink_patch, 0.0, 0.0)?;
    let light_bc = forward::light_bc(grid, p.control_patch, FaceData::Uniform(0.0), 0.0)?;
    let free_spec = OperatorSpec::diffusion(p.drug_diffusion);
    let zero = vec![0.0; grid.n_cells()];
    let mut free = vec![terminal_mismatch(case, state.free.last())?];
    let mut bound = vec![zero.clone()];
    let mut light = vec![zero];
    let mut src = vec![0.0; grid.n_cells()];
    for m in 1..=n_steps {
        let n = n_steps - m + 1;
        let f = discretize::step(grid, &free_spec, &free_bc, &free[m - 1], case.dt, case.solver_tol)?;
        let b = bound_update(&bound[m - 1], &f, light_state.frame(n).values(), p.gamma, case.dt);
        let cb = state.bound.frame(n).values();
        for (k, s) in src.iter_mut().enumerate() {
            *s = p.gamma * cb[k] * (f[k] - b[k]);
        }
        let spec = OperatorSpec::diffusion(p.light_diffusion)
            .with_reaction(Coefficient::Uniform(p.absorption))
            .with_time_scale(1.0 / p.light_speed)
            .with_source(Coefficient::PerCell(&src));
        let l = discretize::step(grid, &spec, &light_bc, &light[m - 1], case.dt, case.solver_tol)?;
        free.push(f);
        bound.push(b);
        light.push(l);
    }
    Ok(AdjointState::LightConcentrated {
        light: unreflect(case, light)?,
        free: unreflect(case, free)?,
        bound: unreflect(case, bound)?,
    })
}

/// Adjoint boundary conditions for transport: zero on the Dirichlet patches,
/// `lambda V.n + eps grad(lambda).n = 0` on outlet and wall.
pub(crate) fn transport_adjoint_bc(
    case: &CaseDefinition,
    velocity: &VectorField,
    diffusivity: f64,
    patches: &crate::cases::TransportPatches,
) -> Result<BoundaryConditions> {
    let grid = &case.grid;
    let per_patch = (0..grid.n_patches())
        .map(|k| {
            let id = PatchId(k);
            if id == patches.drug || id == patches.catheter || id == patches.inlet {
                Bc::dirichlet(0.0)
            } else {
                let a: Vec<f64> = grid
                    .patch_faces(id)
                    .iter()
                    .map(|f| velocity.boundary_normal(f))
                    .collect();
                Bc::robin(a, diffusivity)
            }
        })
        .collect();
    BoundaryConditions::from_vec(grid, per_patch)
}

/// Per-cell reaction `-sum (V.n) A / vol` over the Dirichlet faces of each
/// cell. The state carries no convective diagonal on those faces, so without
/// it the reversed-velocity operator differs from the state transpose there.
fn dirichlet_flux_correction(
    case: &CaseDefinition,
    velocity: &VectorField,
    patches: &crate::cases::TransportPatches,
) -> Vec<f64> {
    let grid = &case.grid;
    let vol = grid.cell_volume();
    let mut out = vec![0.0; grid.n_cells()];
    for id in [patches.drug, patches.catheter, patches.inlet] {
        for f in grid.patch_faces(id) {
            out[f.cell] -= velocity.boundary_normal(f) * f.area / vol;
        }
    }
    out
}

pub fn solve_adjoint_transport(
    state: &TransportState,
    velocity: &Trajectory<VectorField>,
    case: &CaseDefinition,
) -> Result<AdjointState> {
    let p = forward::transport(case)?;
    check_state(case, &state.y)?;
    forward::check_velocity(case, velocity)?;
    let grid = &case.grid;
    let n_steps = case.n_steps;
    let mut out = vec![terminal_mismatch(case, state.y.last())?];
    for m in 1..=n_steps {
        let n = n_steps - m + 1;
        let v = velocity.frame(n);
        let reversed = v.negated();
        let bc = transport_adjoint_bc(case, v, p.diffusivity, &p.patches)?;
        let correction = dirichlet_flux_correction(case, v, &p.patches);
        let spec = OperatorSpec::diffusion(p.diffusivity)
            .with_velocity(&reversed)
            .with_reaction(Coefficient::PerCell(&correction));
        let next = discretize::step(grid, &spec, &bc, &out[m - 1], case.dt, case.solver_tol)?;
        out.push(next);
    }
    Ok(AdjointState::Transport {
        lambda: unreflect(case, out)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{benchmark_case, light_case, transport_case, BenchmarkParams, LightParams, TransportParams};
    use crate::discretize::assemble_step;
    use crate::forward::solve_state;
    use crate::mesh::{ScalarField, Trajectory, VectorField};
    use crate::optimize::Control;
    use std::sync::Arc;

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    fn transpose(a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let n = a.len();
        (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        let scale = b.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol * scale, "{x} vs {y}");
        }
    }

    fn transport_small(velocity: Option<Trajectory<VectorField>>) -> CaseDefinition {
        let p = TransportParams {
            cells: [16, 16],
            t_final: 0.1,
            solver_tol: 1e-14,
            ..TransportParams::default()
        };
        transport_case(&p, velocity).unwrap()
    }

    fn light_small(distributed: bool) -> CaseDefinition {
        let mut p = if distributed {
            LightParams::distributed(5.0, 1e-4)
        } else {
            LightParams::concentrated_1d(5.0, 1e-4)
        };
        p.cells = [8, 1];
        p.t_final = 1.0;
        p.solver_tol = 1e-14;
        light_case(&p).unwrap()
    }

    /// The reflected march equals a backward march with the transposed
    /// state matrix of each step.
    #[test]
    fn transport_matches_transposed_state_march() {
        let case = transport_small(None);
        let p = forward::transport(&case).unwrap();
        let u = Control::constant(case.control, case.grid.clone(), case.dt, case.n_steps, 0.7).unwrap();
        let state = solve_state(&case, &u).unwrap();
        let State::Transport(s) = &state else { unreachable!() };
        let AdjointState::Transport { lambda } = solve_adjoint(&case, &state, &u).unwrap() else {
            unreachable!()
        };
        let grid = &case.grid;
        let mass = grid.cell_volume() / case.dt;
        let zero = ScalarField::zeros(grid.clone());
        let mut lam = terminal_mismatch(&case, s.y.last()).unwrap();
        assert_eq!(lambda.last().values(), &lam[..]);
        for k in (0..case.n_steps).rev() {
            let bc = forward::transport_bc(&case, p, FaceData::Uniform(0.0)).unwrap();
            let spec = OperatorSpec::diffusion(p.diffusivity).with_velocity(p.velocity.frame(k + 1));
            let a = assemble_step(&spec, &bc, &zero, case.dt).unwrap().matrix.to_dense();
            lam = dense_solve(transpose(a), lam.iter().map(|v| mass * v).collect());
            close(lambda.frame(k).values(), &lam, 1e-10);
        }
    }

    /// Benchmark on 8x8 cells against a dense backward march of the
    /// reversed-velocity operator with the tracking source.
    #[test]
    fn benchmark_matches_direct_backward_march() {
        let mut case = benchmark_case(&BenchmarkParams::new(0.5, 8)).unwrap();
        case.solver_tol = 1e-14;
        let Problem::Benchmark(b) = &case.problem else {
            unreachable!()
        };
        let u = case.zero_control().unwrap();
        let state = solve_state(&case, &u).unwrap();
        let State::Benchmark(s) = &state else { unreachable!() };
        let AdjointState::Benchmark { lambda } = solve_adjoint(&case, &state, &u).unwrap() else {
            unreachable!()
        };
        let grid = &case.grid;
        let vol = grid.cell_volume();
        let v = VectorField::uniform(grid.clone(), [-b.velocity[0], -b.velocity[1]]);
        let bc = BoundaryConditions::uniform(grid, Bc::dirichlet(0.0)).unwrap();
        let zero = ScalarField::zeros(grid.clone());
        let a = assemble_step(
            &OperatorSpec::diffusion(b.epsilon).with_velocity(&v),
            &bc,
            &zero,
            case.dt,
        )
        .unwrap()
        .matrix
        .to_dense();
        let mut lam = vec![0.0; grid.n_cells()];
        assert!(lambda.last().values().iter().all(|x| *x == 0.0));
        for k in (0..case.n_steps).rev() {
            let y = s.y.frame(k + 1).values();
            let yd = b.target.frame(k + 1).values();
            let rhs = (0..lam.len())
                .map(|c| vol / case.dt * lam[c] + vol * (y[c] - yd[c]))
                .collect();
            lam = dense_solve(a.clone(), rhs);
            close(lambda.frame(k).values(), &lam, 1e-10);
        }
    }

    /// Distributed light against a direct march of the coupled pair.
    #[test]
    fn distributed_light_matches_direct_march() {
        let case = light_small(true);
        let p = forward::light(&case, LightMode::Distributed).unwrap();
        let frames = vec![(0..8).map(|c| 2.0 + c as f64).collect()];
        let u = Control::new(case.control, case.grid.clone(), case.dt, case.n_steps, frames).unwrap();
        let state = solve_state(&case, &u).unwrap();
        let State::Light(s) = &state else { unreachable!() };
        let AdjointState::LightDistributed { free, bound } = solve_adjoint(&case, &state, &u).unwrap() else {
            unreachable!()
        };
        let grid = &case.grid;
        let bc = forward::free_drug_bc(grid, p.sink_patch, 0.0, 0.0).unwrap();
        let zero = ScalarField::zeros(grid.clone());
        let a = assemble_step(&OperatorSpec::diffusion(p.drug_diffusion), &bc, &zero, case.dt)
            .unwrap()
            .matrix
            .to_dense();
        let mass = grid.cell_volume() / case.dt;
        let mut lf = terminal_mismatch(&case, s.free.last()).unwrap();
        let mut lb = vec![0.0; 8];
        assert_eq!(free.last().values(), &lf[..]);
        assert!(bound.last().values().iter().all(|x| *x == 0.0));
        for k in (0..case.n_steps).rev() {
            lf = dense_solve(transpose(a.clone()), lf.iter().map(|v| mass * v).collect());
            let i = u.at_level(k + 1);
            lb = (0..8)
                .map(|c| {
                    let r = case.dt * p.gamma * i[c];
                    (lb[c] + r * lf[c]) / (1.0 + r)
                })
                .collect();
            close(free.frame(k).values(), &lf, 1e-10);
            close(bound.frame(k).values(), &lb, 1e-10);
        }
    }

    #[test]
    fn terminal_conditions_exact() {
        for distributed in [true, false] {
            let case = light_small(distributed);
            let u = Control::constant(case.control, case.grid.clone(), case.dt, case.n_steps, 3.0).unwrap();
            let state = solve_state(&case, &u).unwrap();
            let target = case.terminal_target().unwrap();
            let expect: Vec<f64> = state
                .primary()
                .last()
                .values()
                .iter()
                .zip(target.values())
                .map(|(c, t)| case.weights.beta3 * (c - t))
                .collect();
            match solve_adjoint(&case, &state, &u).unwrap() {
                AdjointState::LightDistributed { free, bound } => {
                    assert_eq!(free.last().values(), &expect[..]);
                    assert!(bound.last().values().iter().all(|x| *x == 0.0));
                }
                AdjointState::LightConcentrated { light, free, bound } => {
                    assert_eq!(free.last().values(), &expect[..]);
                    assert!(bound.last().values().iter().all(|x| *x == 0.0));
                    assert!(light.last().values().iter().all(|x| *x == 0.0));
                }
                _ => unreachable!(),
            }
        }
        let case = transport_small(None);
        let u = Control::constant(case.control, case.grid.clone(), case.dt, case.n_steps, 0.5).unwrap();
        let state = solve_state(&case, &u).unwrap();
        let AdjointState::Transport { lambda } = solve_adjoint(&case, &state, &u).unwrap() else {
            unreachable!()
        };
        let t = case.terminal_target().unwrap();
        for ((l, y), tv) in lambda
            .last()
            .values()
            .iter()
            .zip(state.primary().last().values())
            .zip(t.values())
        {
            assert_eq!(*l, y - tv);
        }
    }

    /// Without flow the outlet/wall Robin condition is a zero-gradient one.
    #[test]
    fn still_fluid_reduces_to_pure_diffusion() {
        let probe = transport_small(None);
        let grid: Arc<_> = probe.grid.clone();
        let still = Trajectory::new(
            probe.dt,
            vec![VectorField::uniform(grid.clone(), [0.0, 0.0]); probe.n_steps + 1],
        )
        .unwrap();
        let case = transport_small(Some(still));
        let p = forward::transport(&case).unwrap();
        let u = Control::constant(case.control, grid.clone(), case.dt, case.n_steps, 2.0).unwrap();
        let state = solve_state(&case, &u).unwrap();
        let AdjointState::Transport { lambda } = solve_adjoint(&case, &state, &u).unwrap() else {
            unreachable!()
        };
        let bc = BoundaryConditions::from_vec(
            &grid,
            (0..grid.n_patches())
                .map(|k| {
                    let id = PatchId(k);
                    if id == p.patches.outlet || id == p.patches.wall {
                        Bc::neumann(0.0)
                    } else {
                        Bc::dirichlet(0.0)
                    }
                })
                .collect(),
        )
        .unwrap();
        let mut lam = lambda.last().values().to_vec();
        for k in (0..case.n_steps).rev() {
            lam = discretize::step(
                &grid,
                &OperatorSpec::diffusion(p.diffusivity),
                &bc,
                &lam,
                case.dt,
                1e-14,
            )
            .unwrap();
            close(lambda.frame(k).values(), &lam, 1e-12);
        }
    }

    #[test]
    fn mismatched_state_rejected() {
        let t = transport_small(None);
        let l = light_small(true);
        let u = l.zero_control().unwrap();
        let state = solve_state(&l, &u).unwrap();
        assert!(solve_adjoint(&t, &state, &u).is_err());
    }
}
