//! Problem definitions: the manufactured benchmark, the two light-triggered
//! release models, and catheter drug transport in a prescribed flow.

mod manufactured;
mod params;
mod study;
mod velocity;

use std::sync::Arc;

pub use manufactured::{manufactured_fields, ManufacturedFields};
pub use params::{
    benchmark_case, light_case, transport_case, transport_grid, AssignedControl, BenchmarkParams, LightParams,
    TransportParams, LIGHT_BETA1_SWEEP, LIGHT_INTENSITIES,
};
pub use study::{
    benchmark_errors, benchmark_options, convergence_rate, run_benchmark, run_convergence_study, BenchmarkErrors,
    ConvergenceRow, ConvergenceStudy,
};
pub use velocity::{analytic_channel_velocity, channel_velocity_trajectory, ChannelFlow};

use crate::error::{OcpError, Result};
use crate::forward;
use crate::mesh::{PatchId, ScalarField, StructuredGrid, Trajectory, VectorField};
use crate::optimize::{Control, ControlLayout, RecoveryReference};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    /// Control energy.
    pub beta1: f64,
    /// Space-time tracking.
    pub beta2: f64,
    /// Terminal mismatch.
    pub beta3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseKind {
    Benchmark,
    LightDistributed,
    LightConcentrated1d,
    LightConcentrated2d,
    Transport,
}

impl CaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::Benchmark => "benchmark",
            CaseKind::LightDistributed => "light_distributed",
            CaseKind::LightConcentrated1d => "light_concentrated_1d",
            CaseKind::LightConcentrated2d => "light_concentrated_2d",
            CaseKind::Transport => "transport",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            CaseKind::Benchmark,
            CaseKind::LightDistributed,
            CaseKind::LightConcentrated1d,
            CaseKind::LightConcentrated2d,
            CaseKind::Transport,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

/// Advection-diffusion with a distributed control and space-time tracking.
#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    pub epsilon: f64,
    pub velocity: [f64; 2],
    pub initial: ScalarField,
    /// Dirichlet value on the whole boundary.
    pub boundary_value: f64,
    /// Forcing at every level.
    pub source: Trajectory,
    /// Tracking target at every level.
    pub target: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LightMode {
    /// Light intensity is the control itself, acting in every cell.
    Distributed,
    /// Light obeys its own diffusion-absorption equation, controlled by a
    /// Dirichlet value on one patch.
    Concentrated,
}

/// Free and bound drug released by light.
#[derive(Debug, Clone)]
pub struct LightProblem {
    pub mode: LightMode,
    pub drug_diffusion: f64,
    /// Release rate per unit intensity.
    pub gamma: f64,
    pub light_diffusion: f64,
    pub absorption: f64,
    /// Propagation speed; the light equation's time derivative is scaled by its inverse.
    pub light_speed: f64,
    pub free_initial: ScalarField,
    pub bound_initial: ScalarField,
    /// Dirichlet value of the free drug on `sink_patch`.
    pub free_sink_value: f64,
    /// Normal flux of the free drug on every other patch.
    pub free_flux: f64,
    pub light_initial: f64,
    /// Normal flux of the light on every patch except `control_patch`.
    pub light_flux: f64,
    /// Patch where the light is applied (concentrated mode).
    pub control_patch: PatchId,
    /// Patch where the free drug is removed.
    pub sink_patch: PatchId,
    /// Desired free drug at the final time.
    pub target: Option<ScalarField>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransportPatches {
    pub drug: PatchId,
    pub catheter: PatchId,
    pub inlet: PatchId,
    pub outlet: PatchId,
    pub wall: PatchId,
}

/// Passive scalar released through part of a catheter surface.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub diffusivity: f64,
    pub velocity: Arc<Trajectory<VectorField>>,
    pub initial: ScalarField,
    pub catheter_value: f64,
    pub inlet_value: f64,
    /// Normal flux on outlet and wall.
    pub wall_flux: f64,
    pub patches: TransportPatches,
    pub target: Option<ScalarField>,
}

#[derive(Debug, Clone)]
pub enum Problem {
    Benchmark(BenchmarkProblem),
    Light(LightProblem),
    Transport(TransportProblem),
}

/// Everything needed to run state, adjoint and optimization for one case.
#[derive(Debug, Clone)]
pub struct CaseDefinition {
    pub name: String,
    pub grid: Arc<StructuredGrid>,
    pub t_final: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub weights: Weights,
    pub control: ControlLayout,
    /// Relative tolerance of every linear solve.
    pub solver_tol: f64,
    /// Known control for recovery experiments.
    pub reference: Option<RecoveryReference>,
    pub problem: Problem,
}

impl CaseDefinition {
    pub fn kind(&self) -> CaseKind {
        match &self.problem {
            Problem::Benchmark(_) => CaseKind::Benchmark,
            Problem::Light(l) => match (l.mode, self.grid.dim()) {
                (LightMode::Distributed, _) => CaseKind::LightDistributed,
                (LightMode::Concentrated, 1) => CaseKind::LightConcentrated1d,
                (LightMode::Concentrated, _) => CaseKind::LightConcentrated2d,
            },
            Problem::Transport(_) => CaseKind::Transport,
        }
    }

    pub fn zero_control(&self) -> Result<Control> {
        Control::zeros(self.control, self.grid.clone(), self.dt, self.n_steps)
    }

    /// Number of steps for `t_final / dt`, which must be integral.
    pub fn steps_for(t_final: f64, dt: f64) -> Result<usize> {
        if !(dt.is_finite() && dt > 0.0 && t_final.is_finite() && t_final > 0.0) {
            return Err(OcpError::Invalid(format!(
                "final time {t_final} and time step {dt} must be positive"
            )));
        }
        let n = (t_final / dt).round();
        if ((n * dt) - t_final).abs() > 1e-12 * t_final || n < 1.0 {
            return Err(OcpError::Invalid(format!(
                "final time {t_final} is not an integral multiple of the time step {dt}"
            )));
        }
        Ok(n as usize)
    }

    /// Terminal field that the applications compare against, if any.
    pub fn terminal_target(&self) -> Option<&ScalarField> {
        match &self.problem {
            Problem::Benchmark(_) => None,
            Problem::Light(l) => l.target.as_ref(),
            Problem::Transport(t) => t.target.as_ref(),
        }
    }

    /// Copy of the case with a different terminal target.
    pub fn with_terminal_target(&self, target: ScalarField) -> Result<CaseDefinition> {
        if target.len() != self.grid.n_cells() {
            return Err(OcpError::Shape("target lives on another grid".into()));
        }
        let mut out = self.clone();
        match &mut out.problem {
            Problem::Benchmark(_) => return Err(OcpError::Invalid("the benchmark tracks a space-time target".into())),
            Problem::Light(l) => l.target = Some(target),
            Problem::Transport(t) => t.target = Some(target),
        }
        Ok(out)
    }

    pub fn check_consistency(&self) -> Result<()> {
        let n = CaseDefinition::steps_for(self.t_final, self.dt)?;
        if n != self.n_steps {
            return Err(OcpError::Invalid(format!(
                "case has {} steps but final time / step gives {n}",
                self.n_steps
            )));
        }
        let w = self.weights;
        if [w.beta1, w.beta2, w.beta3]
            .iter()
            .any(|b| !(b.is_finite() && *b >= 0.0))
        {
            return Err(OcpError::Invalid("weights must be finite and non-negative".into()));
        }
        crate::optimize::control::space_len(&self.grid, self.control.kind)?;
        Ok(())
    }
}

/// Runs the state with `assigned` and returns its terminal field as the
/// target (the free drug for light cases, the concentration for transport).
pub fn generate_target(case: &CaseDefinition, assigned: &Control) -> Result<ScalarField> {
    let state = forward::solve_state(case, assigned)?;
    match &case.problem {
        Problem::Benchmark(_) => Err(OcpError::Invalid(
            "the benchmark target is analytic; use the manufactured fields".into(),
        )),
        _ => Ok(state.primary().last().clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::{objective, ControlKind, TimeProfile};

    #[test]
    fn golden_defaults() {
        let b = benchmark_case(&BenchmarkParams::new(1.0, 16)).unwrap();
        assert_eq!((b.t_final, b.weights.beta1, b.weights.beta2), (1.0, 1.0, 1.0));
        assert_eq!(b.dt, 1.0 / 256.0);
        assert_eq!(b.n_steps, 256);

        let d = light_case(&LightParams::distributed(5.0, 1e-6)).unwrap();
        let Problem::Light(l) = &d.problem else { unreachable!() };
        assert_eq!((d.grid.cells(), d.t_final, d.dt, d.n_steps), ([256, 1], 10.0, 0.1, 100));
        assert_eq!((l.drug_diffusion, l.gamma, d.weights.beta3), (4e-4, 4e-3, 1.0));
        assert_eq!(d.kind(), CaseKind::LightDistributed);

        let c = light_case(&LightParams::concentrated_1d(5.0, 1e-6)).unwrap();
        let Problem::Light(l) = &c.problem else { unreachable!() };
        assert_eq!(
            (l.gamma, l.light_diffusion, l.absorption, l.light_speed),
            (1.5e-2, 4e-3, 4e-3, 1.0)
        );
        assert!(matches!(c.control.kind, ControlKind::BoundaryScalar(_)));
        assert_eq!(c.control.profile, TimeProfile::Constant);

        let c2 = light_case(&LightParams::concentrated_2d(15.0, 1e-6)).unwrap();
        assert_eq!(c2.grid.n_cells(), 4096);
        assert_eq!(c2.kind(), CaseKind::LightConcentrated2d);

        let t = transport_case(&TransportParams::default(), None).unwrap();
        let Problem::Transport(tp) = &t.problem else {
            unreachable!()
        };
        assert_eq!(
            (t.dt, t.t_final, tp.diffusivity, t.weights.beta1),
            (0.01, 0.8, 1e-3, 1e-6)
        );
    }

    #[test]
    fn bound_drug_initial_layout() {
        let d = light_case(&LightParams::distributed(5.0, 1e-6)).unwrap();
        let Problem::Light(l) = &d.problem else { unreachable!() };
        let ones = l.bound_initial.values().iter().filter(|v| **v == 1.0).count();
        // cell centres (i + 1/2) / 256 <= 0.25
        assert_eq!(ones, 64);
        assert_eq!(l.bound_initial.values().iter().filter(|v| **v == 0.0).count(), 192);
    }

    #[test]
    fn transport_patch_layout() {
        let g = transport_grid(&TransportParams::default()).unwrap();
        let rows = |name: &str| -> Vec<usize> {
            let id = g.patch_id(name).unwrap();
            g.patch_faces(id).iter().map(|f| g.ij(f.cell).1).collect()
        };
        assert_eq!(rows("drug"), vec![14, 15, 16, 17]);
        assert_eq!(rows("catheter"), vec![12, 13, 18, 19]);
        assert_eq!(rows("inlet").len(), 24);
        assert_eq!(g.patch_measure(g.patch_id("outlet").unwrap()), 1.0);
        assert_eq!(g.patch_faces(g.patch_id("wall").unwrap()).len(), 128);
        let coarse = TransportParams {
            cells: [8, 4],
            ..TransportParams::default()
        };
        assert!(transport_grid(&coarse).is_err());
    }

    /// Solving with the assigned control reproduces the target exactly.
    #[test]
    fn generated_target_is_reached_by_assigned_control() {
        let mut p = LightParams::concentrated_1d(5.0, 1e-6);
        p.cells = [32, 1];
        let case = light_case(&p).unwrap();
        let u = p.assigned.build(&case).unwrap();
        let (_, o) = objective(&case, &u).unwrap();
        assert_eq!(o.j_target, 0.0);
        let t = TransportParams {
            cells: [32, 16],
            t_final: 0.1,
            ..TransportParams::default()
        };
        let case = transport_case(&t, None).unwrap();
        let u = AssignedControl::Constant(1.0).build(&case).unwrap();
        assert_eq!(objective(&case, &u).unwrap().1.j_target, 0.0);
    }

    #[test]
    fn assigned_profiles() {
        assert_eq!(AssignedControl::Parabolic { amplitude: 4.0 }.value_at([0.3, 0.5]), 1.0);
        let e = AssignedControl::Exponential {
            amplitude: 5.0,
            rate: 4.0,
        };
        assert!((e.value_at([0.25, 0.0]) - 5.0 * (-1.0f64).exp()).abs() < 1e-15);
        let case = light_case(&LightParams::concentrated_1d(5.0, 1e-6)).unwrap();
        assert!(e.build(&case).is_err());
    }

    #[test]
    fn step_counts_and_kinds() {
        assert_eq!(CaseDefinition::steps_for(0.8, 0.01).unwrap(), 80);
        assert!(CaseDefinition::steps_for(1.0, 0.3).is_err());
        assert!(CaseDefinition::steps_for(1.0, 0.0).is_err());
        for k in [
            "benchmark",
            "light_distributed",
            "light_concentrated_1d",
            "light_concentrated_2d",
            "transport",
        ] {
            assert_eq!(CaseKind::parse(k).unwrap().as_str(), k);
        }
        assert!(CaseKind::parse("heat").is_none());
        let b = benchmark_case(&BenchmarkParams::new(1.0, 4)).unwrap();
        assert!(b.check_consistency().is_ok());
        assert!(b.with_terminal_target(ScalarField::zeros(b.grid.clone())).is_err());
        assert!(benchmark_case(&BenchmarkParams::new(-1.0, 4)).is_err());
    }
}
