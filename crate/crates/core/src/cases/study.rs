use crate::adjoint::{solve_adjoint, AdjointState};
use crate::error::{OcpError, Result};
use crate::forward::State;
use crate::mesh::{relative_l2_error, ScalarField};
use crate::optimize::{steepest_descent, OptimizationResult, OptimizerOptions, StepPolicy, StopReason};

use super::{benchmark_case, manufactured_fields, BenchmarkParams, CaseDefinition, Problem};

/// Relative errors of the benchmark solution against the exact fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkErrors {
    /// State at the final time.
    pub e_y: f64,
    /// Adjoint at the initial time (it vanishes at the final time).
    pub e_lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub h: f64,
    pub iterations: usize,
    pub e_y: f64,
    pub rate_y: Option<f64>,
    pub e_lambda: f64,
    pub rate_lambda: Option<f64>,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub epsilon: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Meshes whose solve errored, with the message.
    pub failed: Vec<(usize, String)>,
}

/// `log(e_coarse / e_fine) / log(h_coarse / h_fine)`.
pub fn convergence_rate(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> Option<f64> {
    let r = (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln();
    r.is_finite().then_some(r)
}

pub fn benchmark_errors(case: &CaseDefinition, state: &State, adjoint: &AdjointState) -> Result<BenchmarkErrors> {
    let Problem::Benchmark(_) = &case.problem else {
        return Err(OcpError::Invalid(
            "errors against exact fields need the benchmark case".into(),
        ));
    };
    let (State::Benchmark(s), AdjointState::Benchmark { lambda }) = (state, adjoint) else {
        return Err(OcpError::Invalid("state or adjoint is not from the benchmark".into()));
    };
    let w = case.weights;
    let m = manufactured_fields(benchmark_epsilon(case), w.beta1, w.beta2, case.t_final);
    let grid = case.grid.clone();
    let y_exact = ScalarField::from_fn(grid.clone(), |x| m.y(case.t_final, x));
    let l_exact = ScalarField::from_fn(grid, |x| m.lambda(0.0, x));
    Ok(BenchmarkErrors {
        e_y: relative_l2_error(s.y.last(), &y_exact)?,
        e_lambda: relative_l2_error(lambda.first(), &l_exact)?,
    })
}

fn benchmark_epsilon(case: &CaseDefinition) -> f64 {
    match &case.problem {
        Problem::Benchmark(b) => b.epsilon,
        _ => f64::NAN,
    }
}

/// Benchmark options: fixed step `1 / beta1` from zero control.
pub fn benchmark_options(beta1: f64) -> OptimizerOptions {
    OptimizerOptions {
        tol: 1e-6,
        max_iter: 200,
        step: StepPolicy::Fixed(1.0 / beta1),
    }
}

/// Solves the benchmark on one mesh and measures its errors.
pub fn run_benchmark(
    params: &BenchmarkParams,
    opts: &OptimizerOptions,
) -> Result<(OptimizationResult, BenchmarkErrors)> {
    let case = benchmark_case(params)?;
    let result = steepest_descent(&case, &case.zero_control()?, opts)?;
    let adjoint = solve_adjoint(&case, &result.state, &result.control)?;
    let errors = benchmark_errors(&case, &result.state, &adjoint)?;
    Ok((result, errors))
}

/// Benchmark solves on a sequence of meshes with observed rates. The meshes
/// are independent and run on separate threads.
pub fn run_convergence_study(epsilon: f64, meshes: &[usize], opts: &OptimizerOptions) -> ConvergenceStudy {
    let outcomes: Vec<Result<(OptimizationResult, BenchmarkErrors)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = meshes
            .iter()
            .map(|&n| scope.spawn(move || run_benchmark(&BenchmarkParams::new(epsilon, n), opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(OcpError::Invalid("solver thread panicked".into())))
            })
            .collect()
    });
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut failed = Vec::new();
    for (&n, outcome) in meshes.iter().zip(outcomes) {
        match outcome {
            Ok((res, e)) => {
                let h = 1.0 / n as f64;
                let prev = rows.last();
                rows.push(ConvergenceRow {
                    cells: n,
                    h,
                    iterations: res.iterations,
                    e_y: e.e_y,
                    rate_y: prev.and_then(|p| convergence_rate(p.e_y, e.e_y, p.h, h)),
                    e_lambda: e.e_lambda,
                    rate_lambda: prev.and_then(|p| convergence_rate(p.e_lambda, e.e_lambda, p.h, h)),
                    stop_reason: res.stop_reason,
                });
            }
            Err(err) => failed.push((n, err.to_string())),
        }
    }
    ConvergenceStudy { epsilon, rows, failed }
}
