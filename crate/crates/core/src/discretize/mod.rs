//! Implicit Euler finite-volume assembly and the per-step linear solvers.
//!
//! Each cell row is the volume-integrated balance
//! `sigma |P| (phi - phi_old)/dt + sum_faces flux + r |P| phi = |P| source`
//! with central convective fluxes and two-point diffusive fluxes. Boundary
//! faces eliminate the ghost value through the patch condition.

mod assemble;
mod bc;
mod linsolve;

pub use assemble::{assemble_step, boundary_gradient, Coefficient, CsrMatrix, LinearSystem, OperatorSpec};
pub use bc::{Bc, BoundaryConditions, FaceData};
pub use linsolve::{solve_krylov, solve_linear, solve_linear_from, DEFAULT_TOL, MAX_ITER};

pub(crate) use assemble::assemble_raw;

use crate::error::Result;
use crate::mesh::StructuredGrid;

/// Assembles and solves one step on raw slices, warm-starting from `previous`.
pub(crate) fn step(
    grid: &StructuredGrid,
    spec: &OperatorSpec,
    bc: &BoundaryConditions,
    previous: &[f64],
    dt: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let sys = assemble_raw(grid, spec, bc, previous, dt)?;
    solve_linear_from(&sys, tol, Some(previous))
}
