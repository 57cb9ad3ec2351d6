use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{OcpError, Result};
use crate::mesh::{StructuredGrid, Trajectory, VectorField};

/// Pulsatile parabolic channel flow along `x`, with an optional band of
/// rows moving at a different speed (the catheter jet).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelFlow {
    pub mean_speed: f64,
    /// Relative amplitude of the pulsation.
    pub pulsation: f64,
    pub period: f64,
    /// `(y_min, y_max)` of the band; cells whose center lies inside use
    /// `band_ratio * peak speed`.
    pub band: Option<(f64, f64)>,
    pub band_ratio: f64,
}

impl Default for ChannelFlow {
    fn default() -> Self {
        Self {
            mean_speed: 0.5,
            pulsation: 0.5,
            period: 0.8,
            band: None,
            band_ratio: 1.0,
        }
    }
}

impl ChannelFlow {
    /// Centerline speed at time `t`.
    pub fn peak_speed(&self, t: f64) -> f64 {
        self.mean_speed * (1.0 + self.pulsation * (2.0 * PI * t / self.period).sin())
    }
}

/// `V = (V_max(t) 4 s (1 - s), 0)` with `s = y / L_y`. The field depends on
/// `y` only, so it is divergence free cell by cell.
pub fn analytic_channel_velocity(grid: &Arc<StructuredGrid>, t: f64, flow: &ChannelFlow) -> Result<VectorField> {
    if grid.dim() != 2 {
        return Err(OcpError::Grid("channel flow needs a 2D grid".into()));
    }
    let ly = grid.extent()[1];
    let peak = flow.peak_speed(t);
    let values = (0..grid.n_cells())
        .map(|c| {
            let y = grid.cell_center(c)[1];
            let in_band = flow.band.is_some_and(|(a, b)| y >= a && y <= b);
            let s = y / ly;
            let vx = if in_band {
                flow.band_ratio * peak
            } else {
                peak * 4.0 * s * (1.0 - s)
            };
            [vx, 0.0]
        })
        .collect();
    VectorField::new(grid.clone(), values)
}

/// Channel flow sampled at every time level.
pub fn channel_velocity_trajectory(
    grid: &Arc<StructuredGrid>,
    dt: f64,
    n_steps: usize,
    flow: &ChannelFlow,
) -> Result<Trajectory<VectorField>> {
    let frames = (0..=n_steps)
        .map(|n| analytic_channel_velocity(grid, n as f64 * dt, flow))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(dt, frames)
}
