//! Acceptance gate. Each criterion runs at its stated tolerance and prints a
//! single `PASS` or `FAIL` line; run with `--nocapture` to see them.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use ocp_core::adjoint::{solve_adjoint, AdjointState};
use ocp_core::cases::{
    benchmark_case, benchmark_options, light_case, manufactured_fields, run_convergence_study, transport_case,
    BenchmarkParams, CaseDefinition, LightParams, Problem, TransportParams, LIGHT_BETA1_SWEEP,
};
use ocp_core::discretize::{assemble_step, solve_linear, Bc, BoundaryConditions, OperatorSpec};
use ocp_core::forward::{solve_state, solve_state_benchmark, solve_state_transport, State};
use ocp_core::mesh::{l2_norm, ScalarField, StructuredGrid, VectorField};
use ocp_core::optimize::{
    check_gradient, control_recovery_error, steepest_descent, terminal_relative_error, Control, ControlLayout,
    OptimizationResult, OptimizerOptions, TimeProfile,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn report(criterion: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion} ({name}): {} | {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn solve(case: &CaseDefinition, opts: &OptimizerOptions) -> (OptimizationResult, Duration) {
    let start = Instant::now();
    let r = steepest_descent(case, &case.zero_control().unwrap(), opts).unwrap();
    (r, start.elapsed())
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

#[test]
fn criterion_1_benchmark_convergence() {
    // (epsilon, E_y, E_lambda) at h = 1/32 as published.
    let published = [
        (1.0, 2.8101e-3, 2.0358e-3),
        (0.1, 4.7043e-3, 2.7235e-3),
        (0.01, 7.2226e-3, 2.5999e-3),
    ];
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (eps, py, pl) in published {
        let study = run_convergence_study(eps, &[4, 8, 16, 32], &benchmark_options(1.0));
        assert!(study.failed.is_empty(), "{:?}", study.failed);
        let rows = &study.rows;
        for r in &rows[2..] {
            for rate in [r.rate_y.unwrap(), r.rate_lambda.unwrap()] {
                pass &= (1.7..=2.8).contains(&rate);
            }
        }
        let last = rows.last().unwrap();
        let within = |e: f64, p: f64| e <= 2.0 * p && e >= 0.5 * p;
        pass &= within(last.e_y, py) && within(last.e_lambda, pl);
        detail.push(format!(
            "eps={eps}: N={:?} E_y={:.4e} E_l={:.4e} rates y {:.2}/{:.2} l {:.2}/{:.2}",
            rows.iter().map(|r| r.iterations).collect::<Vec<_>>(),
            last.e_y,
            last.e_lambda,
            rows[2].rate_y.unwrap(),
            rows[3].rate_y.unwrap(),
            rows[2].rate_lambda.unwrap(),
            rows[3].rate_lambda.unwrap()
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(600);
    detail.push(format!("{:.1}s", elapsed.as_secs_f64()));
    report(1, "benchmark convergence", pass, &detail.join("; "));
}

fn worst_mismatch(case: &CaseDefinition, u: &Control, picks: usize, seed: u64, delta: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = u.n_entries();
    let entries: Vec<usize> = if n <= picks {
        (0..n).collect()
    } else {
        rand::seq::index::sample(&mut rng, n, picks).into_vec()
    };
    check_gradient(case, u, &entries, delta)
        .unwrap()
        .iter()
        .map(|r| r.relative_mismatch)
        .fold(0.0, f64::max)
}

#[test]
fn criterion_2_gradient_consistency() {
    let bench = |n: usize| {
        let mut c = benchmark_case(&BenchmarkParams::new(1.0, n)).unwrap();
        c.solver_tol = 1e-14;
        c
    };
    let (c16, c32) = (bench(16), bench(32));
    assert_eq!((c16.dt, c32.dt), (1.0 / 256.0, 1.0 / 1024.0));
    // The benchmark objective is quadratic, so the perturbation size only
    // affects rounding.
    let m16 = worst_mismatch(&c16, &c16.zero_control().unwrap(), 10, 7, 0.1);
    let m32 = worst_mismatch(&c32, &c32.zero_control().unwrap(), 10, 7, 0.1);
    let mut pass = m16 <= 5e-2 && m32 < m16;
    let mut detail = format!("benchmark 1/16 {m16:.3e}, 1/32 {m32:.3e}");
    for (label, mut p) in [
        ("distributed light", LightParams::distributed(5.0, 1e-4)),
        ("concentrated light", LightParams::concentrated_1d(5.0, 1e-4)),
    ] {
        p.cells = [32, 1];
        p.solver_tol = 1e-14;
        let c = light_case(&p).unwrap();
        let u = Control::constant(c.control, c.grid.clone(), c.dt, c.n_steps, 3.0).unwrap();
        let m = worst_mismatch(&c, &u, 10, 7, 1e-4);
        pass &= m <= 1e-1;
        detail += &format!(", {label} {m:.3e}");
    }
    report(2, "gradient consistency", pass, &detail);
}

#[test]
fn criterion_3_concentrated_light_1d() {
    let mut pass = true;
    let mut detail = Vec::new();
    for intensity in [5.0, 15.0] {
        let mut errors = Vec::new();
        for beta1 in LIGHT_BETA1_SWEEP {
            let case = light_case(&LightParams::concentrated_1d(intensity, beta1)).unwrap();
            let (r, t) = solve(&case, &OptimizerOptions::default());
            pass &= t < Duration::from_secs(60);
            errors.push(control_recovery_error(&r.control, case.reference.as_ref().unwrap()).unwrap());
        }
        pass &= errors.windows(2).all(|w| w[1] < w[0]);
        let last = *errors.last().unwrap();
        pass &= last <= 0.05;
        detail.push(format!(
            "I0={intensity}: E_u over beta1 sweep {}",
            errors.iter().map(|e| pct(*e)).collect::<Vec<_>>().join(" > ")
        ));
    }
    report(3, "1D concentrated light recovery", pass, &detail.join("; "));
}

#[test]
fn criterion_4_distributed_light() {
    let opts = OptimizerOptions {
        tol: 1e-8,
        ..OptimizerOptions::default()
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for intensity in [5.0, 15.0] {
        let case = light_case(&LightParams::distributed(intensity, 1e-6)).unwrap();
        let (r, _) = solve(&case, &opts);
        let e_u = control_recovery_error(&r.control, case.reference.as_ref().unwrap()).unwrap();
        let e_t = terminal_relative_error(&case, &r.state).unwrap();
        pass &= e_u <= 0.10 && e_t <= 0.01;
        detail.push(format!("I0={intensity}: E_u {} terminal {}", pct(e_u), pct(e_t)));
    }
    report(4, "distributed light recovery", pass, &detail.join("; "));
}

#[test]
fn criterion_5_concentrated_light_2d() {
    let mut pass = true;
    let mut detail = Vec::new();
    for intensity in [5.0, 15.0] {
        let case = light_case(&LightParams::concentrated_2d(intensity, 1e-6)).unwrap();
        let (r, _) = solve(&case, &OptimizerOptions::default());
        let e_u = control_recovery_error(&r.control, case.reference.as_ref().unwrap()).unwrap();
        let e_t = terminal_relative_error(&case, &r.state).unwrap();
        pass &= e_t <= 0.02 && e_u <= 0.15;
        detail.push(format!("I0={intensity}: terminal {} trace E_u {}", pct(e_t), pct(e_u)));
    }
    report(5, "2D concentrated light recovery", pass, &detail.join("; "));
}

#[test]
fn criterion_6_transport() {
    let case = transport_case(&TransportParams::default(), None).unwrap();
    let (r, _) = solve(&case, &OptimizerOptions::default());
    let u = r.control.at_level(0)[0];
    let target = case.terminal_target().unwrap();
    let ratio = r.objective.j_target / l2_norm(target).powi(2);
    let pass = (u - 1.0).abs() <= 0.02 && ratio <= 1e-10 && r.iterations <= 25;
    report(
        6,
        "transport recovery",
        pass,
        &format!(
            "u={u:.6} J_target={:.3e} ratio={ratio:.3e} N={}",
            r.objective.j_target, r.iterations
        ),
    );
}

/// Analytic time derivative, x derivative and Laplacian of `e^{-t} g(t) S`
/// with `S = sin(2 pi x) sin(2 pi y)`.
fn partials(g: f64, dg: f64, x: [f64; 2]) -> [f64; 4] {
    let w = 2.0 * PI;
    let (sx, cx, sy) = ((w * x[0]).sin(), (w * x[0]).cos(), (w * x[1]).sin());
    [g * sx * sy, dg * sx * sy, g * w * cx * sy, -2.0 * w * w * g * sx * sy]
}

#[test]
fn criterion_7_invariants() {
    let mut checks: Vec<(&str, bool, String)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // Bound drug stays positive and never increases.
    let mut p = LightParams::distributed(5.0, 1e-4);
    p.cells = [32, 1];
    let light = light_case(&p).unwrap();
    let mut ok = true;
    for _ in 0..5 {
        let scale = rng.gen_range(0.0..40.0);
        let frame: Vec<f64> = (0..32).map(|_| scale * rng.gen::<f64>()).collect();
        let u = Control::new(light.control, light.grid.clone(), light.dt, light.n_steps, vec![frame]).unwrap();
        let State::Light(s) = solve_state(&light, &u).unwrap() else {
            unreachable!()
        };
        for w in s.bound.frames().windows(2) {
            ok &= w[1]
                .values()
                .iter()
                .zip(w[0].values())
                .all(|(b, a)| *b >= 0.0 && b <= a);
        }
    }
    checks.push(("bound drug positive and monotone", ok, String::new()));

    // A constant is preserved by a divergence-free flow with no-flux
    // boundaries, and pure diffusion conserves the total.
    let grid = Arc::new(StructuredGrid::rectangle(1.5, 1.0, 12, 8).unwrap());
    let bc = BoundaryConditions::uniform(&grid, Bc::neumann(0.0)).unwrap();
    let v = VectorField::uniform(grid.clone(), [0.3, -0.2]);
    let spec = OperatorSpec::diffusion(0.05).with_velocity(&v);
    let prev = ScalarField::constant(grid.clone(), 2.5);
    let next = solve_linear(&assemble_step(&spec, &bc, &prev, 0.01).unwrap(), 1e-14).unwrap();
    let dev = next.iter().map(|x| (x - 2.5).abs()).fold(0.0, f64::max);
    checks.push(("constant preservation", dev <= 1e-10, format!("{dev:.1e}")));
    let noise: Vec<f64> = (0..grid.n_cells()).map(|_| rng.gen()).collect();
    let prev = ScalarField::new(grid.clone(), noise).unwrap();
    let next = solve_linear(
        &assemble_step(&OperatorSpec::diffusion(0.05), &bc, &prev, 0.01).unwrap(),
        1e-14,
    )
    .unwrap();
    let drift = (next.iter().sum::<f64>() - prev.values().iter().sum::<f64>()).abs() * grid.cell_volume();
    checks.push(("diffusive conservation", drift <= 1e-10, format!("{drift:.1e}")));

    // Transport mass changes only through the boundary fluxes.
    let mut tp = TransportParams {
        cells: [32, 16],
        t_final: 0.2,
        ..TransportParams::default()
    };
    tp.solver_tol = 1e-13;
    let tcase = transport_case(&tp, None).unwrap();
    let Problem::Transport(tr) = &tcase.problem else {
        unreachable!()
    };
    let u = Control::constant(tcase.control, tcase.grid.clone(), tcase.dt, tcase.n_steps, 1.0).unwrap();
    let s = solve_state_transport(&tcase, &tr.velocity, &u).unwrap();
    let g = &tcase.grid;
    let mut worst: f64 = 0.0;
    for n in 1..=tcase.n_steps {
        let y = s.y.frame(n).values();
        let vel = tr.velocity.frame(n);
        let mut inflow = 0.0;
        let pt = &tr.patches;
        for (id, value) in [
            (pt.drug, Some(1.0)),
            (pt.catheter, Some(0.0)),
            (pt.inlet, Some(0.0)),
            (pt.outlet, None),
            (pt.wall, None),
        ] {
            for face in g.patch_faces(id) {
                let flux = vel.boundary_normal(face) * face.area;
                let yp = y[face.cell];
                inflow += match value {
                    Some(gv) => tr.diffusivity * face.area * (gv - yp) / (0.5 * g.h()[face.axis()]) - flux * gv,
                    None => -flux * yp,
                };
            }
        }
        let change: f64 = y
            .iter()
            .zip(s.y.frame(n - 1).values())
            .map(|(a, b)| (a - b) * g.cell_volume())
            .sum();
        worst = worst.max((change - tcase.dt * inflow).abs());
    }
    checks.push(("transport flux budget", worst <= 1e-10, format!("{worst:.1e}")));

    // The benchmark solver is affine in the control.
    let mut bc8 = benchmark_case(&BenchmarkParams::new(0.1, 8)).unwrap();
    bc8.solver_tol = 1e-14;
    let layout = ControlLayout {
        profile: TimeProfile::PerLevel,
        ..bc8.control
    };
    let n = bc8.grid.n_cells();
    let mut random = || {
        let frames = (0..=bc8.n_steps)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        Control::new(layout, bc8.grid.clone(), bc8.dt, bc8.n_steps, frames).unwrap()
    };
    let (u1, u2) = (random(), random());
    let y = |u: &Control| solve_state_benchmark(&bc8, u).unwrap().y;
    let zero = Control::zeros(layout, bc8.grid.clone(), bc8.dt, bc8.n_steps).unwrap();
    let (y0, y1, y2, y12) = (y(&zero), y(&u1), y(&u2), y(&u1.axpy(1.0, &u2).unwrap()));
    let mut sup: f64 = 0.0;
    for k in 0..=bc8.n_steps {
        for c in 0..n {
            let at = |t: &ocp_core::mesh::Trajectory, k: usize| t.frame(k).values()[c];
            sup = sup.max((at(&y12, k) - at(&y0, k) - (at(&y1, k) - at(&y0, k)) - (at(&y2, k) - at(&y0, k))).abs());
        }
    }
    checks.push(("benchmark superposition", sup <= 1e-10, format!("{sup:.1e}")));

    // Adjoint terminal data are assigned exactly.
    let u = Control::constant(light.control, light.grid.clone(), light.dt, light.n_steps, 3.0).unwrap();
    let st = solve_state(&light, &u).unwrap();
    let target = light.terminal_target().unwrap();
    let ok = match solve_adjoint(&light, &st, &u).unwrap() {
        AdjointState::LightDistributed { free, bound } => {
            free.last()
                .values()
                .iter()
                .zip(st.primary().last().values())
                .zip(target.values())
                .all(|((l, c), t)| *l == light.weights.beta3 * (c - t))
                && bound.last().values().iter().all(|b| *b == 0.0)
        }
        _ => false,
    };
    let bst = solve_state(&bc8, &zero).unwrap();
    let ok = ok
        && match solve_adjoint(&bc8, &bst, &zero).unwrap() {
            AdjointState::Benchmark { lambda } => lambda.last().values().iter().all(|l| *l == 0.0),
            _ => false,
        };
    checks.push(("adjoint terminal conditions", ok, String::new()));

    // Armijo steps never increase the objective.
    let mut ok = true;
    for case in [
        light_case(&LightParams {
            cells: [32, 1],
            ..LightParams::concentrated_1d(15.0, 1e-5)
        })
        .unwrap(),
        light,
    ] {
        let (r, _) = solve(&case, &OptimizerOptions::default());
        ok &= r.history.windows(2).all(|w| w[1].j <= w[0].j);
    }
    checks.push(("objective non-increasing under Armijo", ok, String::new()));

    // Manufactured source and tracking target satisfy the continuous system.
    let mut worst: f64 = 0.0;
    for &(eps, b1, b2, tf) in &[(1.0, 1.0, 1.0, 1.0), (0.1, 1.0, 1.0, 1.0), (0.01, 1.0, 1.0, 1.0)] {
        let m = manufactured_fields(eps, b1, b2, tf);
        for _ in 0..50 {
            let t = rng.gen_range(0.0..tf);
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let e = (-t).exp();
            let [yv, yt, yx, ylap] = partials(e, -e, x);
            let [lv, lt, lx, llap] = partials(e * (tf - t), -e * (tf - t) - e, x);
            let state = yt + yx - eps * ylap - m.f(t, x) - m.u(t, x);
            let adjoint = -lt - lx - eps * llap - b2 * (yv - m.y_d(t, x));
            worst = worst
                .max(state.abs())
                .max(adjoint.abs())
                .max((b1 * m.u(t, x) + lv).abs());
        }
    }
    checks.push(("manufactured residuals", worst <= 1e-10, format!("{worst:.1e}")));

    let pass = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(name, ok, d)| {
            format!(
                "{name} {}{}",
                if *ok { "ok" } else { "FAILED" },
                if d.is_empty() { String::new() } else { format!(" ({d})") }
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    report(7, "invariant suites", pass, &detail);
}
