//! Browser bindings for three small experiments: the manufactured benchmark,
//! a forward light-triggered release, and recovery of a light intensity from
//! a terminal drug profile. The plain functions are usable natively; the
//! `wasm_*` exports wrap them for JavaScript.

use ocp_core::cases::{benchmark_options, light_case, run_benchmark, BenchmarkParams, LightParams};
use ocp_core::forward::{solve_state, State};
use ocp_core::optimize::{control_recovery_error, steepest_descent, OptimizerOptions};
use wasm_bindgen::prelude::*;

/// Largest benchmark mesh offered by the page.
pub const MAX_BENCHMARK_CELLS: usize = 32;

#[wasm_bindgen(getter_with_clone)]
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub iterations: usize,
    /// Benchmark: state error. Recovery: control error.
    pub error: f64,
    /// Benchmark: adjoint error. Recovery: terminal mismatch.
    pub secondary_error: f64,
    /// Recovered scalar control, zero otherwise.
    pub control: f64,
    pub nx: usize,
    pub ny: usize,
    /// Cell-center abscissae of the first row.
    pub x: Vec<f64>,
    /// Final primary field, row-major.
    pub state: Vec<f64>,
    /// Field drawn for comparison: the target or the bound drug.
    pub reference: Vec<f64>,
}

fn abscissae(grid: &ocp_core::mesh::StructuredGrid) -> Vec<f64> {
    (0..grid.cells()[0]).map(|i| grid.cell_center(i)[0]).collect()
}

pub fn solve_benchmark(epsilon: f64, cells: usize) -> Result<Report, String> {
    if !(2..=MAX_BENCHMARK_CELLS).contains(&cells) {
        return Err(format!("cells must be between 2 and {MAX_BENCHMARK_CELLS}"));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err("epsilon must be positive".into());
    }
    let (result, errors) =
        run_benchmark(&BenchmarkParams::new(epsilon, cells), &benchmark_options(1.0)).map_err(|e| e.to_string())?;
    let y = result.final_state().last();
    let grid = y.grid();
    Ok(Report {
        iterations: result.iterations,
        error: errors.e_y,
        secondary_error: errors.e_lambda,
        control: 0.0,
        nx: cells,
        ny: cells,
        x: abscissae(grid),
        state: y.values().to_vec(),
        reference: Vec::new(),
    })
}

fn release_params(intensity: f64, beta1: f64, t_final: f64) -> Result<LightParams, String> {
    if !(intensity.is_finite() && intensity > 0.0) {
        return Err("intensity must be positive".into());
    }
    let mut p = LightParams::concentrated_1d(intensity, beta1);
    p.cells = [128, 1];
    if !(t_final > 0.0 && t_final <= 20.0) {
        return Err("final time must lie in (0, 20]".into());
    }
    p.t_final = (t_final / p.dt).round().max(1.0) * p.dt;
    Ok(p)
}

/// Free and bound drug at the final time under a constant boundary light.
pub fn simulate_release(intensity: f64, t_final: f64) -> Result<Report, String> {
    let p = release_params(intensity, 1e-6, t_final)?;
    let case = light_case(&p).map_err(|e| e.to_string())?;
    let u = p.assigned.build(&case).map_err(|e| e.to_string())?;
    let State::Light(s) = solve_state(&case, &u).map_err(|e| e.to_string())? else {
        return Err("unexpected state".into());
    };
    Ok(Report {
        iterations: 0,
        error: 0.0,
        secondary_error: 0.0,
        control: intensity,
        nx: p.cells[0],
        ny: 1,
        x: abscissae(&case.grid),
        state: s.free.last().values().to_vec(),
        reference: s.bound.last().values().to_vec(),
    })
}

/// Generates a terminal free-drug profile with `intensity`, then recovers the
/// intensity from that profile alone.
pub fn recover_intensity(intensity: f64, beta1: f64) -> Result<Report, String> {
    if !(beta1.is_finite() && beta1 > 0.0) {
        return Err("control weight must be positive".into());
    }
    let p = release_params(intensity, beta1, 10.0)?;
    let case = light_case(&p).map_err(|e| e.to_string())?;
    let r = steepest_descent(
        &case,
        &case.zero_control().map_err(|e| e.to_string())?,
        &OptimizerOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let reference = case.reference.as_ref().ok_or("case has no reference")?;
    let target = case.terminal_target().ok_or("case has no target")?;
    Ok(Report {
        iterations: r.iterations,
        error: control_recovery_error(&r.control, reference).map_err(|e| e.to_string())?,
        secondary_error: ocp_core::optimize::terminal_relative_error(&case, &r.state).map_err(|e| e.to_string())?,
        control: r.control.at_level(0)[0],
        nx: p.cells[0],
        ny: 1,
        x: abscissae(&case.grid),
        state: r.final_state().last().values().to_vec(),
        reference: target.values().to_vec(),
    })
}

#[wasm_bindgen]
pub fn wasm_solve_benchmark(epsilon: f64, cells: usize) -> Result<Report, JsError> {
    solve_benchmark(epsilon, cells).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn wasm_simulate_release(intensity: f64, t_final: f64) -> Result<Report, JsError> {
    simulate_release(intensity, t_final).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn wasm_recover_intensity(intensity: f64, beta1: f64) -> Result<Report, JsError> {
    recover_intensity(intensity, beta1).map_err(|e| JsError::new(&e))
}
