use crate::error::{OcpError, Result};

use super::assemble::{CsrMatrix, LinearSystem};

/// Default relative tolerance of the per-step linear solves.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Iteration cap of the Krylov solver.
pub const MAX_ITER: usize = 2000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(m: &CsrMatrix, x: &[f64], b: &[f64], r: &mut [f64]) -> f64 {
    m.matvec(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm(r)
}

/// Solves `system` to `||r|| <= tol (1 + ||rhs||)`.
///
/// Tridiagonal systems go through direct elimination; anything else through
/// ILU(0)-preconditioned BiCGStab.
pub fn solve_linear(system: &LinearSystem, tol: f64) -> Result<Vec<f64>> {
    solve_linear_from(system, tol, None)
}

/// As [`solve_linear`], starting the iterative path from `guess`.
pub fn solve_linear_from(system: &LinearSystem, tol: f64, guess: Option<&[f64]>) -> Result<Vec<f64>> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(OcpError::Invalid(format!(
            "solver tolerance must be positive, got {tol}"
        )));
    }
    let m = &system.matrix;
    if system.rhs.len() != m.n {
        return Err(OcpError::Shape(
            "right-hand side length differs from matrix size".into(),
        ));
    }
    if m.is_tridiagonal() {
        thomas_refined(system, tol)
    } else {
        bicgstab(system, tol, guess, MAX_ITER)
    }
}

fn thomas_refined(system: &LinearSystem, tol: f64) -> Result<Vec<f64>> {
    let m = &system.matrix;
    let b = &system.rhs;
    let target = tol * (1.0 + norm(b));
    let mut x = thomas(m, b)?;
    let mut r = vec![0.0; m.n];
    let mut res = residual(m, &x, b, &mut r);
    for _ in 0..3 {
        if res <= target {
            return Ok(x);
        }
        let dx = thomas(m, &r)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        res = residual(m, &x, b, &mut r);
    }
    if res <= target {
        Ok(x)
    } else {
        Err(OcpError::NonConvergence {
            iterations: 4,
            residual: res,
            target,
        })
    }
}

fn thomas(m: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = m.n;
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut main = vec![0.0; n];
    for i in 0..n {
        for k in m.row_ptr[i]..m.row_ptr[i + 1] {
            let j = m.cols[k];
            if j + 1 == i {
                lower[i] = m.vals[k];
            } else if j == i {
                main[i] = m.vals[k];
            } else {
                upper[i] = m.vals[k];
            }
        }
    }
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for i in 0..n {
        let denom = main[i] - if i > 0 { lower[i] * cp[i - 1] } else { 0.0 };
        if !denom.is_finite() || denom == 0.0 {
            return Err(OcpError::Step(format!(
                "zero pivot in tridiagonal elimination at row {i}"
            )));
        }
        cp[i] = upper[i] / denom;
        dp[i] = (b[i] - if i > 0 { lower[i] * dp[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = dp;
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    Ok(x)
}

/// ILU(0) factors stored in the sparsity pattern of the matrix.
struct Ilu0 {
    m: CsrMatrix,
}

impl Ilu0 {
    fn new(a: &CsrMatrix) -> Result<Self> {
        let mut m = a.clone();
        let n = m.n;
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (m.row_ptr[i], m.row_ptr[i + 1]);
            for k in start..end {
                pos[m.cols[k]] = k;
            }
            for k in start..m.diag[i] {
                let j = m.cols[k];
                let pivot = m.vals[m.diag[j]];
                if pivot == 0.0 {
                    return Err(OcpError::Step(format!("zero pivot in ILU(0) at row {j}")));
                }
                let f = m.vals[k] / pivot;
                m.vals[k] = f;
                for kk in m.diag[j] + 1..m.row_ptr[j + 1] {
                    let p = pos[m.cols[kk]];
                    if p != usize::MAX {
                        m.vals[p] -= f * m.vals[kk];
                    }
                }
            }
            for k in start..end {
                pos[m.cols[k]] = usize::MAX;
            }
            if m.vals[m.diag[i]] == 0.0 {
                return Err(OcpError::Step(format!("zero pivot in ILU(0) at row {i}")));
            }
        }
        Ok(Self { m })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let m = &self.m;
        for i in 0..m.n {
            let mut s = r[i];
            for k in m.row_ptr[i]..m.diag[i] {
                s -= m.vals[k] * z[m.cols[k]];
            }
            z[i] = s;
        }
        for i in (0..m.n).rev() {
            let mut s = z[i];
            for k in m.diag[i] + 1..m.row_ptr[i + 1] {
                s -= m.vals[k] * z[m.cols[k]];
            }
            z[i] = s / m.vals[m.diag[i]];
        }
    }
}

fn bicgstab(system: &LinearSystem, tol: f64, guess: Option<&[f64]>, max_iter: usize) -> Result<Vec<f64>> {
    let a = &system.matrix;
    let b = &system.rhs;
    let n = a.n;
    let target = tol * (1.0 + norm(b));
    let mut x = match guess {
        Some(g) if g.len() == n => g.to_vec(),
        _ => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    let mut res = residual(a, &x, b, &mut r);
    if res <= target {
        return Ok(x);
    }
    let pre = Ilu0::new(a)?;

    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);

    let mut iter = 0;
    while iter < max_iter {
        iter += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            // Breakdown: restart from the true residual.
            res = residual(a, &x, b, &mut r);
            if res <= target {
                return Ok(x);
            }
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|e| *e = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pre.apply(&p, &mut p_hat);
        a.matvec(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            omega = 0.0;
            continue;
        }
        alpha = rho / rv;
        for i in 0..n {
            r[i] -= alpha * v[i];
            x[i] += alpha * p_hat[i];
        }
        if norm(&r) <= target {
            res = residual(a, &x, b, &mut r);
            if res <= target {
                return Ok(x);
            }
            omega = 0.0;
            continue;
        }
        pre.apply(&r, &mut s_hat);
        a.matvec(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += omega * s_hat[i];
            r[i] -= omega * t[i];
        }
        if norm(&r) <= target {
            res = residual(a, &x, b, &mut r);
            if res <= target {
                return Ok(x);
            }
            omega = 0.0;
        }
    }
    res = residual(a, &x, b, &mut r);
    if res <= target && x.iter().all(|v| v.is_finite()) {
        return Ok(x);
    }
    Err(OcpError::NonConvergence {
        iterations: iter,
        residual: res,
        target,
    })
}

/// Entry point for callers that need a fixed iteration cap, mainly tests.
pub fn solve_krylov(system: &LinearSystem, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    bicgstab(system, tol, None, max_iter)
}
