//! Objective, optimality-condition gradient, steepest descent and the
//! finite-difference gradient check.

pub(crate) mod control;

pub use control::{Control, ControlKind, ControlLayout, TimeProfile};

use crate::adjoint::{self, AdjointState};
use crate::cases::{CaseDefinition, Problem};
use crate::discretize::{boundary_gradient, Bc, BoundaryConditions};
use crate::error::{OcpError, Result};
use crate::forward::{self, State};
use crate::mesh::{l2_norm, space_time_integral, PatchId, ScalarField, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown {
    pub j: f64,
    pub j_u: f64,
    pub j_target: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

/// `J = J_u + J_target` for the given state and control.
pub fn evaluate_objective(case: &CaseDefinition, state: &State, u: &Control) -> Result<ObjectiveBreakdown> {
    let w = case.weights;
    let j_u = 0.5 * w.beta1 * u.energy();
    let j_target = match (&case.problem, state) {
        (Problem::Benchmark(p), State::Benchmark(s)) => {
            let target = &p.target;
            0.5 * w.beta2
                * space_time_integral(&s.y, |n, c, v| {
                    let d = v - target.frame(n).values()[c];
                    d * d
                })
        }
        (Problem::Benchmark(_), _) => return Err(OcpError::Invalid("state does not match the benchmark".into())),
        (_, State::Benchmark(_)) => return Err(OcpError::Invalid("benchmark state for an application case".into())),
        _ => {
            let target = case
                .terminal_target()
                .ok_or_else(|| OcpError::MissingTarget(case.name.clone()))?;
            0.5 * w.beta3 * squared_distance(state.primary().last(), target)?
        }
    };
    Ok(ObjectiveBreakdown {
        j: j_u + j_target,
        j_u,
        j_target,
        beta1: w.beta1,
        beta2: w.beta2,
        beta3: w.beta3,
    })
}

fn squared_distance(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if a.len() != b.len() {
        return Err(OcpError::Shape("fields live on different grids".into()));
    }
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s * a.grid().cell_volume())
}

/// Solves the state for `u` and evaluates the objective.
pub fn objective(case: &CaseDefinition, u: &Control) -> Result<(State, ObjectiveBreakdown)> {
    let state = forward::solve_state(case, u)?;
    let obj = evaluate_objective(case, &state, u)?;
    Ok((state, obj))
}

/// Optimality residual as a control: the Riesz representative of `dJ/du`
/// in the control's inner product.
pub fn gradient(case: &CaseDefinition, state: &State, adj: &AdjointState, u: &Control) -> Result<Control> {
    let beta1 = case.weights.beta1;
    let n_steps = case.n_steps;
    if u.n_steps() != n_steps {
        return Err(OcpError::Shape("control does not match the case time levels".into()));
    }
    let grid = &case.grid;

    // Per-level residual in the spatial layout of the control, before any
    // scalar/time reduction. Level `n` pairs with adjoint frame `n - 1`, the
    // multiplier of forward step `n`.
    let residual: Box<dyn Fn(usize) -> Result<Vec<f64>> + '_> = match (&case.problem, state, adj) {
        (Problem::Benchmark(_), State::Benchmark(_), AdjointState::Benchmark { lambda }) => {
            expect_kind(u, ControlKind::Distributed)?;
            Box::new(move |n| Ok(combine(beta1, u.at_level(n), lambda.frame(n - 1).values(), 1.0)))
        }
        (Problem::Light(p), State::Light(s), AdjointState::LightDistributed { free, bound }) => {
            expect_kind(u, ControlKind::Distributed)?;
            let gamma = p.gamma;
            Box::new(move |n| {
                let cb = s.bound.frame(n).values();
                let (lf, lb) = (free.frame(n - 1).values(), bound.frame(n - 1).values());
                Ok(u.at_level(n)
                    .iter()
                    .enumerate()
                    .map(|(c, uc)| beta1 * uc + gamma * cb[c] * (lf[c] - lb[c]))
                    .collect())
            })
        }
        (Problem::Light(p), State::Light(_), AdjointState::LightConcentrated { light, .. }) => {
            let patch = boundary_patch(u, p.control_patch)?;
            let bc = zero_dirichlet_on(grid, patch)?;
            let d = p.light_diffusion;
            Box::new(move |n| {
                let dn = boundary_gradient(light.frame(n - 1), patch, &bc)?;
                let faces = grid.patch_faces(patch).len();
                Ok((0..faces).map(|k| beta1 * face_value(u, n, k) - d * dn[k]).collect())
            })
        }
        (Problem::Transport(p), State::Transport(_), AdjointState::Transport { lambda }) => {
            let patch = boundary_patch(u, p.patches.drug)?;
            let bc = zero_dirichlet_on(grid, patch)?;
            let eps = p.diffusivity;
            let velocity = p.velocity.clone();
            Box::new(move |n| {
                let lam = lambda.frame(n - 1);
                let dn = boundary_gradient(lam, patch, &bc)?;
                let v = velocity.frame(n);
                Ok(grid
                    .patch_faces(patch)
                    .iter()
                    .enumerate()
                    .map(|(k, f)| {
                        beta1 * face_value(u, n, k) - eps * dn[k] - v.boundary_normal(f) * lam.values()[f.cell]
                    })
                    .collect())
            })
        }
        _ => return Err(OcpError::Invalid("state, adjoint and case do not match".into())),
    };

    // Reduce a per-face residual to the scalar control by integrating over the patch.
    let reduce = |r: Vec<f64>| -> Vec<f64> {
        match u.kind() {
            ControlKind::BoundaryScalar(p) => {
                vec![grid.patch_faces(p).iter().zip(&r).map(|(f, v)| f.area * v).sum()]
            }
            _ => r,
        }
    };

    let frames = match u.profile() {
        TimeProfile::PerLevel => {
            let mut frames = vec![vec![0.0; u.space_len()]];
            for n in 1..=n_steps {
                frames.push(reduce(residual(n)?));
            }
            frames
        }
        TimeProfile::Constant => {
            let mut acc = vec![0.0; u.space_len()];
            for n in 1..=n_steps {
                for (a, r) in acc.iter_mut().zip(reduce(residual(n)?)) {
                    *a += r;
                }
            }
            // Sum of dt r^n divided by the time measure N dt.
            acc.iter_mut().for_each(|a| *a /= n_steps as f64);
            vec![acc]
        }
    };
    u.with_frames(frames)
}

fn combine(beta1: f64, u: &[f64], lam: &[f64], s: f64) -> Vec<f64> {
    u.iter().zip(lam).map(|(a, l)| beta1 * a + s * l).collect()
}

fn face_value(u: &Control, n: usize, k: usize) -> f64 {
    match u.kind() {
        ControlKind::BoundaryScalar(_) => u.at_level(n)[0],
        _ => u.at_level(n)[k],
    }
}

fn expect_kind(u: &Control, kind: ControlKind) -> Result<()> {
    if u.kind() == kind {
        Ok(())
    } else {
        Err(OcpError::Shape(format!(
            "expected a {kind:?} control, got {:?}",
            u.kind()
        )))
    }
}

fn boundary_patch(u: &Control, expected: PatchId) -> Result<PatchId> {
    match u.kind() {
        ControlKind::BoundaryTrace(p) | ControlKind::BoundaryScalar(p) if p == expected => Ok(p),
        k => Err(OcpError::Shape(format!(
            "control {k:?} does not act on patch #{}",
            expected.0
        ))),
    }
}

fn zero_dirichlet_on(grid: &crate::mesh::StructuredGrid, patch: PatchId) -> Result<BoundaryConditions> {
    let per_patch = (0..grid.n_patches())
        .map(|p| {
            if p == patch.0 {
                Bc::dirichlet(0.0)
            } else {
                Bc::neumann(0.0)
            }
        })
        .collect();
    BoundaryConditions::from_vec(grid, per_patch)
}

/// State, adjoint, objective and gradient at one control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub state: State,
    pub adjoint: AdjointState,
    pub objective: ObjectiveBreakdown,
    pub gradient: Control,
}

pub fn evaluate(case: &CaseDefinition, u: &Control) -> Result<Evaluation> {
    let (state, objective) = objective(case, u)?;
    let adjoint = adjoint::solve_adjoint(case, &state, u)?;
    let gradient = gradient(case, &state, &adjoint, u)?;
    Ok(Evaluation {
        state,
        adjoint,
        objective,
        gradient,
    })
}

/// Central difference `(J(u + d e) - J(u - d e)) / 2d` for one flat entry.
pub fn fd_gradient_oracle(case: &CaseDefinition, u: &Control, entry: usize, delta: f64) -> Result<f64> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(OcpError::Invalid(format!("perturbation must be positive, got {delta}")));
    }
    let base = u.entry(entry);
    let (_, plus) = objective(case, &u.with_entry(entry, base + delta)?)?;
    let (_, minus) = objective(case, &u.with_entry(entry, base - delta)?)?;
    Ok((plus.j - minus.j) / (2.0 * delta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheckRow {
    pub entry: usize,
    pub frame: usize,
    pub index: usize,
    /// Derivative from the adjoint gradient, `weight * gradient entry`.
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_mismatch: f64,
}

/// Compares the adjoint gradient with central differences on `entries`.
pub fn check_gradient(
    case: &CaseDefinition,
    u: &Control,
    entries: &[usize],
    delta: f64,
) -> Result<Vec<GradientCheckRow>> {
    let eval = evaluate(case, u)?;
    entries
        .iter()
        .map(|&e| {
            let adj = u.entry_weight(e) * eval.gradient.entry(e);
            let fd = fd_gradient_oracle(case, u, e, delta)?;
            let (frame, index) = u.entry_position(e);
            Ok(GradientCheckRow {
                entry: e,
                frame,
                index,
                adjoint: adj,
                finite_difference: fd,
                relative_mismatch: (adj - fd).abs() / (fd.abs() + 1e-12),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    /// `u <- u - alpha g` with a constant `alpha`.
    Fixed(f64),
    /// Backtracking from `alpha0` on the first iteration and from the
    /// Barzilai-Borwein step afterwards, halving until sufficient decrease.
    Armijo { alpha0: f64 },
}

/// Armijo sufficient-decrease constant.
pub const ARMIJO_C: f64 = 1e-4;
/// Halvings before the line search gives up.
pub const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub step: StepPolicy,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100,
            step: StepPolicy::Armijo { alpha0: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ToleranceMet,
    MaxIterations,
    LineSearchFailure,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::ToleranceMet => "tolerance_met",
            StopReason::MaxIterations => "max_iterations",
            StopReason::LineSearchFailure => "line_search_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub j: f64,
    pub j_u: f64,
    pub j_target: f64,
    pub grad_norm: f64,
    /// Step taken after this iteration, zero when none was taken.
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub control: Control,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub history: Vec<IterationRecord>,
    pub state: State,
    pub objective: ObjectiveBreakdown,
    pub grad_norm: f64,
}

impl OptimizationResult {
    pub fn final_state(&self) -> &Trajectory {
        self.state.primary()
    }
}

/// Steepest descent from `u0`. Every iteration solves state and adjoint,
/// stops when the gradient norm drops below `tol`, and otherwise steps.
pub fn steepest_descent(case: &CaseDefinition, u0: &Control, opts: &OptimizerOptions) -> Result<OptimizationResult> {
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(OcpError::Invalid(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if opts.max_iter == 0 {
        return Err(OcpError::Invalid("max_iter must be at least 1".into()));
    }
    match opts.step {
        StepPolicy::Fixed(a) | StepPolicy::Armijo { alpha0: a } if !(a.is_finite() && a > 0.0) => {
            return Err(OcpError::Invalid(format!("step size must be positive, got {a}")))
        }
        _ => {}
    }

    let mut u = u0.clone();
    let (mut state, mut obj) = objective(case, &u)?;
    let mut history = Vec::new();
    let mut prev: Option<(Control, Control)> = None;
    let mut last_alpha = match opts.step {
        StepPolicy::Fixed(a) => a,
        StepPolicy::Armijo { alpha0 } => alpha0,
    };

    for iter in 1..=opts.max_iter {
        let adj = adjoint::solve_adjoint(case, &state, &u)?;
        let g = gradient(case, &state, &adj, &u)?;
        let gn = g.norm();
        history.push(IterationRecord {
            iter,
            j: obj.j,
            j_u: obj.j_u,
            j_target: obj.j_target,
            grad_norm: gn,
            step: 0.0,
        });
        let finish = |reason, u: Control, state, obj, history| OptimizationResult {
            control: u,
            iterations: iter,
            stop_reason: reason,
            history,
            state,
            objective: obj,
            grad_norm: gn,
        };
        if gn < opts.tol {
            return Ok(finish(StopReason::ToleranceMet, u, state, obj, history));
        }
        if iter == opts.max_iter {
            return Ok(finish(StopReason::MaxIterations, u, state, obj, history));
        }

        let (alpha, u_new, state_new, obj_new) = match opts.step {
            StepPolicy::Fixed(a) => {
                let un = u.axpy(-a, &g)?;
                let (s, o) = objective(case, &un)?;
                (a, un, s, o)
            }
            StepPolicy::Armijo { .. } => {
                let mut alpha = match &prev {
                    Some((u_prev, g_prev)) => {
                        let s = u.axpy(-1.0, u_prev)?;
                        let y = g.axpy(-1.0, g_prev)?;
                        let sy = s.dot(&y)?;
                        let ss = s.dot(&s)?;
                        if sy > 0.0 && (ss / sy).is_finite() {
                            ss / sy
                        } else {
                            last_alpha
                        }
                    }
                    None => last_alpha,
                };
                let g2 = gn * gn;
                let mut accepted = None;
                for _ in 0..=MAX_HALVINGS {
                    let un = u.axpy(-alpha, &g)?;
                    match objective(case, &un) {
                        Ok((s, o)) if o.j <= obj.j - ARMIJO_C * alpha * g2 => {
                            accepted = Some((alpha, un, s, o));
                            break;
                        }
                        // A trial that breaks the state (e.g. negative
                        // release factor) is treated like a failed decrease.
                        Ok(_) | Err(OcpError::Step(_)) => alpha *= 0.5,
                        Err(e) => return Err(e),
                    }
                }
                match accepted {
                    Some(a) => a,
                    None => return Ok(finish(StopReason::LineSearchFailure, u, state, obj, history)),
                }
            }
        };
        if let Some(rec) = history.last_mut() {
            rec.step = alpha;
        }
        last_alpha = alpha;
        prev = Some((u, g));
        u = u_new;
        state = state_new;
        obj = obj_new;
    }
    unreachable!("loop returns on the last iteration")
}

/// Reference for a recovered control.
#[derive(Debug, Clone, PartialEq)]
pub enum RecoveryReference {
    /// Assigned scalar value, compared as `|u - u_ref| / |u_ref|`.
    Scalar(f64),
    /// Assigned spatial profile, compared in the weighted L2 norm on the
    /// entries where `mask` is true (all entries when absent).
    Profile { values: Vec<f64>, mask: Option<Vec<bool>> },
}

/// Relative error of a time-constant control against its reference. Per-level
/// controls are compared through their time average over levels `1..=N`.
pub fn control_recovery_error(u: &Control, reference: &RecoveryReference) -> Result<f64> {
    let avg: Vec<f64> = match u.profile() {
        TimeProfile::Constant => u.at_level(0).to_vec(),
        TimeProfile::PerLevel => {
            let n = u.n_steps();
            let mut acc = vec![0.0; u.space_len()];
            for level in 1..=n {
                for (a, v) in acc.iter_mut().zip(u.at_level(level)) {
                    *a += v / n as f64;
                }
            }
            acc
        }
    };
    match reference {
        RecoveryReference::Scalar(r) => {
            if *r == 0.0 {
                return Err(OcpError::ZeroReference("scalar control reference".into()));
            }
            if avg.len() != 1 {
                return Err(OcpError::Shape("scalar reference for a non-scalar control".into()));
            }
            Ok((avg[0] - r).abs() / r.abs())
        }
        RecoveryReference::Profile { values, mask } => {
            if values.len() != avg.len() || mask.as_ref().is_some_and(|m| m.len() != avg.len()) {
                return Err(OcpError::Shape("reference profile does not match the control".into()));
            }
            let w = u.space_weights();
            let keep = |k: usize| mask.as_ref().map_or(true, |m| m[k]);
            let (mut num, mut den) = (0.0, 0.0);
            for k in (0..avg.len()).filter(|&k| keep(k)) {
                num += w[k] * (avg[k] - values[k]).powi(2);
                den += w[k] * values[k].powi(2);
            }
            if den == 0.0 {
                return Err(OcpError::ZeroReference("control reference profile".into()));
            }
            Ok((num / den).sqrt())
        }
    }
}

/// Relative L2 mismatch of the final primary field against the case target.
pub fn terminal_relative_error(case: &CaseDefinition, state: &State) -> Result<f64> {
    let target = case
        .terminal_target()
        .ok_or_else(|| OcpError::MissingTarget(case.name.clone()))?;
    let d = squared_distance(state.primary().last(), target)?.sqrt();
    let t = l2_norm(target);
    if t == 0.0 {
        return Err(OcpError::ZeroReference("terminal target".into()));
    }
    Ok(d / t)
}
