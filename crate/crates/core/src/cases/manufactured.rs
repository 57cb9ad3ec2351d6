use std::f64::consts::PI;

/// Closed-form optimal triple for the benchmark on the unit square with
/// `V = (1, 0)` and homogeneous Dirichlet data.
///
/// With `S = sin(2 pi x) sin(2 pi y)` and `C = cos(2 pi x) sin(2 pi y)`:
/// `y = e^{-t} S`, `lambda = e^{-t} (T - t) S`, `u = -lambda / beta1`,
/// and `f`, `y_d` chosen so that state, adjoint and optimality equations
/// hold exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedFields {
    pub epsilon: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub t_final: f64,
}

pub fn manufactured_fields(epsilon: f64, beta1: f64, beta2: f64, t_final: f64) -> ManufacturedFields {
    ManufacturedFields {
        epsilon,
        beta1,
        beta2,
        t_final,
    }
}

#[inline]
fn s(x: [f64; 2]) -> f64 {
    (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
}

#[inline]
fn c(x: [f64; 2]) -> f64 {
    (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin()
}

impl ManufacturedFields {
    pub const VELOCITY: [f64; 2] = [1.0, 0.0];

    pub fn y(&self, t: f64, x: [f64; 2]) -> f64 {
        (-t).exp() * s(x)
    }

    pub fn lambda(&self, t: f64, x: [f64; 2]) -> f64 {
        (-t).exp() * (self.t_final - t) * s(x)
    }

    pub fn u(&self, t: f64, x: [f64; 2]) -> f64 {
        -self.lambda(t, x) / self.beta1
    }

    /// State forcing.
    pub fn f(&self, t: f64, x: [f64; 2]) -> f64 {
        let e = (-t).exp();
        let k = 8.0 * PI * PI * self.epsilon;
        e * s(x) * (k - 1.0 + (self.t_final - t) / self.beta1) + 2.0 * PI * e * c(x)
    }

    /// Tracking target.
    pub fn y_d(&self, t: f64, x: [f64; 2]) -> f64 {
        let e = (-t).exp();
        let k = 8.0 * PI * PI * self.epsilon;
        let tau = self.t_final - t;
        e * s(x) / self.beta2 * ((t - 1.0 - self.t_final) - k * tau) + 2.0 * PI * e * tau * c(x) / self.beta2 + e * s(x)
    }
}
