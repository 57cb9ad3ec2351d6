use std::sync::Arc;

use crate::discretize::DEFAULT_TOL;
use crate::error::{OcpError, Result};
use crate::mesh::{Patch, PatchSegment, ScalarField, Side, StructuredGrid, Trajectory, VectorField};
use crate::optimize::{Control, ControlKind, ControlLayout, RecoveryReference, TimeProfile};

use super::velocity::{channel_velocity_trajectory, ChannelFlow};
use super::{
    generate_target, manufactured_fields, BenchmarkProblem, CaseDefinition, LightMode, LightProblem, Problem,
    TransportPatches, TransportProblem, Weights,
};

/// Control-energy weights swept by the light experiments.
pub const LIGHT_BETA1_SWEEP: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];
/// Reference intensities of the light experiments.
pub const LIGHT_INTENSITIES: [f64; 2] = [5.0, 15.0];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkParams {
    pub name: Option<String>,
    pub epsilon: f64,
    /// Cells per side of the unit square.
    pub cells: usize,
    pub t_final: f64,
    /// Defaults to `h^2`.
    pub dt: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub solver_tol: f64,
}

impl BenchmarkParams {
    pub fn new(epsilon: f64, cells: usize) -> Self {
        Self {
            name: None,
            epsilon,
            cells,
            t_final: 1.0,
            dt: None,
            beta1: 1.0,
            beta2: 1.0,
            solver_tol: DEFAULT_TOL,
        }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn time_step(&self) -> f64 {
        self.dt.unwrap_or_else(|| self.h() * self.h())
    }
}

/// Manufactured benchmark on the unit square.
pub fn benchmark_case(p: &BenchmarkParams) -> Result<CaseDefinition> {
    if !(p.epsilon.is_finite() && p.epsilon >= 0.0) {
        return Err(OcpError::Invalid(format!(
            "epsilon must be non-negative, got {}",
            p.epsilon
        )));
    }
    if !(p.beta1 > 0.0 && p.beta2 > 0.0) {
        return Err(OcpError::Invalid("benchmark weights must be positive".into()));
    }
    let grid = Arc::new(StructuredGrid::rectangle(1.0, 1.0, p.cells, p.cells)?);
    let dt = p.time_step();
    let n_steps = CaseDefinition::steps_for(p.t_final, dt)?;
    let m = manufactured_fields(p.epsilon, p.beta1, p.beta2, p.t_final);
    let sample = |f: &dyn Fn(f64, [f64; 2]) -> f64| -> Result<Trajectory> {
        let frames = (0..=n_steps)
            .map(|n| {
                let t = n as f64 * dt;
                ScalarField::from_fn(grid.clone(), |x| f(t, x))
            })
            .collect();
        Trajectory::new(dt, frames)
    };
    let source = sample(&|t, x| m.f(t, x))?;
    let target = sample(&|t, x| m.y_d(t, x))?;
    let initial = ScalarField::from_fn(grid.clone(), |x| m.y(0.0, x));
    Ok(CaseDefinition {
        name: p
            .name
            .clone()
            .unwrap_or_else(|| format!("benchmark_eps{}_n{}", p.epsilon, p.cells)),
        grid,
        t_final: p.t_final,
        dt,
        n_steps,
        weights: Weights {
            beta1: p.beta1,
            beta2: p.beta2,
            beta3: 0.0,
        },
        control: ControlLayout {
            kind: ControlKind::Distributed,
            profile: TimeProfile::PerLevel,
        },
        solver_tol: p.solver_tol,
        reference: None,
        problem: Problem::Benchmark(BenchmarkProblem {
            epsilon: p.epsilon,
            velocity: super::ManufacturedFields::VELOCITY,
            initial,
            boundary_value: 0.0,
            source,
            target,
        }),
    })
}

/// Control used to generate a synthetic target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AssignedControl {
    Constant(f64),
    /// `amplitude * exp(-rate * x)`
    Exponential {
        amplitude: f64,
        rate: f64,
    },
    /// `amplitude * y (1 - y)`
    Parabolic {
        amplitude: f64,
    },
}

impl AssignedControl {
    pub fn value_at(&self, x: [f64; 2]) -> f64 {
        match *self {
            AssignedControl::Constant(v) => v,
            AssignedControl::Exponential { amplitude, rate } => amplitude * (-rate * x[0]).exp(),
            AssignedControl::Parabolic { amplitude } => amplitude * x[1] * (1.0 - x[1]),
        }
    }

    /// Time-independent control on the case layout.
    pub fn build(&self, case: &CaseDefinition) -> Result<Control> {
        let grid = &case.grid;
        let frame: Vec<f64> = match case.control.kind {
            ControlKind::Distributed => (0..grid.n_cells())
                .map(|c| self.value_at(grid.cell_center(c)))
                .collect(),
            ControlKind::BoundaryTrace(p) => grid.patch_faces(p).iter().map(|f| self.value_at(f.center)).collect(),
            ControlKind::BoundaryScalar(_) => match self {
                AssignedControl::Constant(v) => vec![*v],
                _ => {
                    return Err(OcpError::Invalid(
                        "a scalar control needs a constant assigned value".into(),
                    ))
                }
            },
        };
        let frames = match case.control.profile {
            TimeProfile::Constant => vec![frame],
            TimeProfile::PerLevel => vec![frame; case.n_steps + 1],
        };
        Control::new(case.control, grid.clone(), case.dt, case.n_steps, frames)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightParams {
    pub name: Option<String>,
    pub mode: LightMode,
    /// `[n]` cells on the unit interval when `dim == 1`, `[nx, ny]` on the unit square otherwise.
    pub dim: usize,
    pub cells: [usize; 2],
    pub t_final: f64,
    pub dt: f64,
    pub drug_diffusion: f64,
    pub gamma: f64,
    pub light_diffusion: f64,
    pub absorption: f64,
    pub light_speed: f64,
    /// Bound drug is initially present where the cell center has `x <= bound_extent`.
    pub bound_extent: f64,
    pub bound_value: f64,
    pub beta1: f64,
    pub beta3: f64,
    pub profile: TimeProfile,
    pub assigned: AssignedControl,
    pub solver_tol: f64,
}

impl LightParams {
    fn base(mode: LightMode, dim: usize, cells: [usize; 2], gamma: f64, beta1: f64, assigned: AssignedControl) -> Self {
        Self {
            name: None,
            mode,
            dim,
            cells,
            t_final: 10.0,
            dt: 0.1,
            drug_diffusion: 4e-4,
            gamma,
            light_diffusion: 4e-3,
            absorption: 4e-3,
            light_speed: 1.0,
            bound_extent: 0.25,
            bound_value: 1.0,
            beta1,
            beta3: 1.0,
            profile: TimeProfile::Constant,
            assigned,
            solver_tol: DEFAULT_TOL,
        }
    }

    /// 1D distributed light, assigned intensity `I0 exp(-4x)`.
    pub fn distributed(intensity: f64, beta1: f64) -> Self {
        Self::base(
            LightMode::Distributed,
            1,
            [256, 1],
            4e-3,
            beta1,
            AssignedControl::Exponential {
                amplitude: intensity,
                rate: 4.0,
            },
        )
    }

    /// 1D concentrated light, assigned boundary intensity `I0`.
    pub fn concentrated_1d(intensity: f64, beta1: f64) -> Self {
        Self::base(
            LightMode::Concentrated,
            1,
            [256, 1],
            1.5e-2,
            beta1,
            AssignedControl::Constant(intensity),
        )
    }

    /// 2D concentrated light, assigned boundary profile `I0 y (1 - y)`.
    pub fn concentrated_2d(intensity: f64, beta1: f64) -> Self {
        Self::base(
            LightMode::Concentrated,
            2,
            [64, 64],
            1.5e-2,
            beta1,
            AssignedControl::Parabolic { amplitude: intensity },
        )
    }
}

/// Light case with its target generated from the assigned control.
pub fn light_case(p: &LightParams) -> Result<CaseDefinition> {
    let grid = Arc::new(match p.dim {
        1 => StructuredGrid::interval(1.0, p.cells[0])?,
        2 => StructuredGrid::rectangle(1.0, 1.0, p.cells[0], p.cells[1])?,
        d => return Err(OcpError::Grid(format!("dimension {d} not supported"))),
    });
    for (name, v) in [
        ("drug_diffusion", p.drug_diffusion),
        ("gamma", p.gamma),
        ("light_diffusion", p.light_diffusion),
        ("absorption", p.absorption),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(OcpError::Invalid(format!("{name} must be non-negative, got {v}")));
        }
    }
    if !(p.light_speed.is_finite() && p.light_speed > 0.0) {
        return Err(OcpError::Invalid(format!(
            "light_speed must be positive, got {}",
            p.light_speed
        )));
    }
    let n_steps = CaseDefinition::steps_for(p.t_final, p.dt)?;
    let left = grid.patch_id("left")?;
    let right = grid.patch_id("right")?;
    let kind = match (p.mode, p.dim) {
        (LightMode::Distributed, _) => ControlKind::Distributed,
        (LightMode::Concentrated, 1) => ControlKind::BoundaryScalar(left),
        (LightMode::Concentrated, _) => ControlKind::BoundaryTrace(left),
    };
    let bound_initial = ScalarField::from_fn(
        grid.clone(),
        |x| {
            if x[0] <= p.bound_extent {
                p.bound_value
            } else {
                0.0
            }
        },
    );
    let default_name = match (p.mode, p.dim) {
        (LightMode::Distributed, _) => "light_distributed",
        (LightMode::Concentrated, 1) => "light_concentrated_1d",
        (LightMode::Concentrated, _) => "light_concentrated_2d",
    };
    let mut case = CaseDefinition {
        name: p.name.clone().unwrap_or_else(|| default_name.to_string()),
        grid: grid.clone(),
        t_final: p.t_final,
        dt: p.dt,
        n_steps,
        weights: Weights {
            beta1: p.beta1,
            beta2: 0.0,
            beta3: p.beta3,
        },
        control: ControlLayout {
            kind,
            profile: p.profile,
        },
        solver_tol: p.solver_tol,
        reference: None,
        problem: Problem::Light(LightProblem {
            mode: p.mode,
            drug_diffusion: p.drug_diffusion,
            gamma: p.gamma,
            light_diffusion: p.light_diffusion,
            absorption: p.absorption,
            light_speed: p.light_speed,
            free_initial: ScalarField::zeros(grid.clone()),
            bound_initial: bound_initial.clone(),
            free_sink_value: 0.0,
            free_flux: 0.0,
            light_initial: 0.0,
            light_flux: 0.0,
            control_patch: left,
            sink_patch: right,
            target: None,
        }),
    };
    let assigned = p.assigned.build(&case)?;
    let target = generate_target(&case, &assigned)?;
    let values = assigned.at_level(0).to_vec();
    case.reference = Some(match kind {
        ControlKind::BoundaryScalar(_) => RecoveryReference::Scalar(values[0]),
        ControlKind::Distributed => RecoveryReference::Profile {
            values,
            mask: Some(bound_initial.values().iter().map(|b| *b > 0.0).collect()),
        },
        ControlKind::BoundaryTrace(_) => {
            let n = values.len();
            RecoveryReference::Profile {
                values,
                mask: Some((0..n).map(|k| k != 0 && k + 1 != n).collect()),
            }
        }
    });
    case.with_terminal_target(target).map(|mut c| {
        c.reference = case.reference.clone();
        c
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportParams {
    pub name: Option<String>,
    pub cells: [usize; 2],
    pub extent: [f64; 2],
    pub t_final: f64,
    pub dt: f64,
    pub diffusivity: f64,
    pub beta1: f64,
    pub beta3: f64,
    pub flow: ChannelFlow,
    /// `y` range of the drug-releasing part of the catheter on the left side.
    pub drug_band: (f64, f64),
    /// `y` range of the whole catheter, drug band included.
    pub catheter_band: (f64, f64),
    pub assigned: f64,
    pub solver_tol: f64,
}

impl Default for TransportParams {
    fn default() -> Self {
        let drug_band = (0.4375, 0.5625);
        Self {
            name: None,
            cells: [64, 32],
            extent: [2.0, 1.0],
            t_final: 0.8,
            dt: 0.01,
            diffusivity: 1e-3,
            beta1: 1e-6,
            beta3: 1.0,
            flow: ChannelFlow {
                band: Some(drug_band),
                band_ratio: 0.5,
                ..ChannelFlow::default()
            },
            drug_band,
            catheter_band: (0.375, 0.625),
            assigned: 1.0,
            solver_tol: DEFAULT_TOL,
        }
    }
}

/// Groups consecutive faces with the same label into segments.
fn segments(side: Side, labels: &[usize], label: usize) -> Vec<PatchSegment> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < labels.len() {
        if labels[k] == label {
            let start = k;
            while k < labels.len() && labels[k] == label {
                k += 1;
            }
            out.push(PatchSegment::new(side, start, k));
        } else {
            k += 1;
        }
    }
    out
}

/// Channel grid with patches `drug`, `catheter`, `inlet` on the left side,
/// `outlet` on the right and `wall` on top and bottom.
pub fn transport_grid(p: &TransportParams) -> Result<StructuredGrid> {
    let base = StructuredGrid::rectangle(p.extent[0], p.extent[1], p.cells[0], p.cells[1])?;
    let hy = base.h()[1];
    let inside = |y: f64, band: (f64, f64)| y >= band.0 && y <= band.1;
    // 0 inlet, 1 catheter, 2 drug
    let labels: Vec<usize> = (0..p.cells[1])
        .map(|j| {
            let y = (j as f64 + 0.5) * hy;
            if inside(y, p.drug_band) {
                2
            } else if inside(y, p.catheter_band) {
                1
            } else {
                0
            }
        })
        .collect();
    let cells = base.cells();
    let mut patches = Vec::new();
    for (name, label) in [("drug", 2), ("catheter", 1), ("inlet", 0)] {
        let segs = segments(Side::Left, &labels, label);
        if segs.is_empty() {
            return Err(OcpError::Grid(format!(
                "transport patch `{name}` has no faces on this grid"
            )));
        }
        patches.push(Patch::new(name, segs));
    }
    patches.push(Patch::whole_side("outlet", cells, Side::Right));
    patches.push(Patch::new(
        "wall",
        vec![
            PatchSegment::new(Side::Down, 0, cells[0]),
            PatchSegment::new(Side::Up, 0, cells[0]),
        ],
    ));
    base.with_patches(patches)
}

/// Transport case with its target generated from the constant drug value
/// `p.assigned`. Uses the analytic channel flow unless `velocity` is given.
pub fn transport_case(p: &TransportParams, velocity: Option<Trajectory<VectorField>>) -> Result<CaseDefinition> {
    if !(p.diffusivity.is_finite() && p.diffusivity > 0.0) {
        return Err(OcpError::Invalid(format!(
            "diffusivity must be positive, got {}",
            p.diffusivity
        )));
    }
    let grid = Arc::new(transport_grid(p)?);
    let n_steps = CaseDefinition::steps_for(p.t_final, p.dt)?;
    let velocity = match velocity {
        Some(v) => v,
        None => channel_velocity_trajectory(&grid, p.dt, n_steps, &p.flow)?,
    };
    let patches = TransportPatches {
        drug: grid.patch_id("drug")?,
        catheter: grid.patch_id("catheter")?,
        inlet: grid.patch_id("inlet")?,
        outlet: grid.patch_id("outlet")?,
        wall: grid.patch_id("wall")?,
    };
    let case = CaseDefinition {
        name: p.name.clone().unwrap_or_else(|| "transport".to_string()),
        grid: grid.clone(),
        t_final: p.t_final,
        dt: p.dt,
        n_steps,
        weights: Weights {
            beta1: p.beta1,
            beta2: 0.0,
            beta3: p.beta3,
        },
        control: ControlLayout {
            kind: ControlKind::BoundaryScalar(patches.drug),
            profile: TimeProfile::Constant,
        },
        solver_tol: p.solver_tol,
        reference: Some(RecoveryReference::Scalar(p.assigned)),
        problem: Problem::Transport(TransportProblem {
            diffusivity: p.diffusivity,
            velocity: Arc::new(velocity),
            initial: ScalarField::zeros(grid.clone()),
            catheter_value: 0.0,
            inlet_value: 0.0,
            wall_flux: 0.0,
            patches,
            target: None,
        }),
    };
    crate::forward::check_velocity(
        &case,
        match &case.problem {
            Problem::Transport(t) => &t.velocity,
            _ => unreachable!(),
        },
    )?;
    let assigned = AssignedControl::Constant(p.assigned).build(&case)?;
    let target = generate_target(&case, &assigned)?;
    let mut out = case.with_terminal_target(target)?;
    out.reference = case.reference;
    Ok(out)
}
