use std::sync::Arc;

use crate::discretize::FaceData;
use crate::error::{OcpError, Result};
use crate::mesh::{PatchId, StructuredGrid};

/// Where the control acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    /// Volumetric source, one value per cell.
    Distributed,
    /// Dirichlet datum, one value per face of the patch.
    BoundaryTrace(PatchId),
    /// Dirichlet datum, one value shared by every face of the patch.
    BoundaryScalar(PatchId),
}

/// How the control varies in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeProfile {
    /// One frame per time level `0..=N`. Level 0 never enters the state
    /// (implicit Euler only samples `t^1..t^N`) and carries zero weight.
    PerLevel,
    /// A single frame used at every level.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlLayout {
    pub kind: ControlKind,
    pub profile: TimeProfile,
}

/// Control iterate together with the inner product it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    layout: ControlLayout,
    grid: Arc<StructuredGrid>,
    dt: f64,
    n_steps: usize,
    frames: Vec<Vec<f64>>,
}

impl Control {
    pub fn new(
        layout: ControlLayout,
        grid: Arc<StructuredGrid>,
        dt: f64,
        n_steps: usize,
        frames: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let c = Self {
            layout,
            grid,
            dt,
            n_steps,
            frames,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn zeros(layout: ControlLayout, grid: Arc<StructuredGrid>, dt: f64, n_steps: usize) -> Result<Self> {
        let space = space_len(&grid, layout.kind)?;
        let nf = frame_count(layout.profile, n_steps);
        Self::new(layout, grid, dt, n_steps, vec![vec![0.0; space]; nf])
    }

    /// Same value everywhere and at every level.
    pub fn constant(layout: ControlLayout, grid: Arc<StructuredGrid>, dt: f64, n_steps: usize, v: f64) -> Result<Self> {
        let mut c = Self::zeros(layout, grid, dt, n_steps)?;
        for f in c.frames.iter_mut() {
            f.iter_mut().for_each(|x| *x = v);
        }
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(OcpError::Invalid(format!(
                "control time step must be positive, got {}",
                self.dt
            )));
        }
        let space = space_len(&self.grid, self.layout.kind)?;
        let nf = frame_count(self.layout.profile, self.n_steps);
        if self.frames.len() != nf {
            return Err(OcpError::Shape(format!(
                "control has {} frames, expected {nf}",
                self.frames.len()
            )));
        }
        if let Some(bad) = self.frames.iter().position(|f| f.len() != space) {
            return Err(OcpError::Shape(format!(
                "control frame {bad} has {} values, expected {space}",
                self.frames[bad].len()
            )));
        }
        if self.frames.iter().flatten().any(|v| !v.is_finite()) {
            return Err(OcpError::NonFinite("control".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> ControlLayout {
        self.layout
    }

    pub fn kind(&self) -> ControlKind {
        self.layout.kind
    }

    pub fn profile(&self) -> TimeProfile {
        self.layout.profile
    }

    pub fn grid(&self) -> &Arc<StructuredGrid> {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn space_len(&self) -> usize {
        self.frames[0].len()
    }

    /// Values acting at time level `level`.
    pub fn at_level(&self, level: usize) -> &[f64] {
        match self.layout.profile {
            TimeProfile::PerLevel => &self.frames[level],
            TimeProfile::Constant => &self.frames[0],
        }
    }

    /// Dirichlet data at `level` for a boundary control.
    pub fn face_data(&self, level: usize) -> FaceData {
        let v = self.at_level(level);
        match self.layout.kind {
            ControlKind::BoundaryScalar(_) => FaceData::Uniform(v[0]),
            _ => FaceData::PerFace(v.to_vec()),
        }
    }

    /// Inner-product weight of each spatial entry: cell volume, face area,
    /// or one for a scalar.
    pub fn space_weights(&self) -> Vec<f64> {
        match self.layout.kind {
            ControlKind::Distributed => vec![self.grid.cell_volume(); self.space_len()],
            ControlKind::BoundaryTrace(p) => self.grid.patch_faces(p).iter().map(|f| f.area).collect(),
            ControlKind::BoundaryScalar(_) => vec![1.0],
        }
    }

    /// Measure used by the control energy: as [`Control::space_weights`]
    /// except that a scalar is weighted by the patch measure.
    pub fn energy_weights(&self) -> Vec<f64> {
        match self.layout.kind {
            ControlKind::BoundaryScalar(p) => vec![self.grid.patch_measure(p)],
            _ => self.space_weights(),
        }
    }

    /// Inner-product weight of each frame.
    pub fn time_weight(&self, frame: usize) -> f64 {
        match self.layout.profile {
            TimeProfile::PerLevel if frame == 0 => 0.0,
            TimeProfile::PerLevel => self.dt,
            TimeProfile::Constant => self.dt * self.n_steps as f64,
        }
    }

    fn check_compatible(&self, other: &Control) -> Result<()> {
        if self.layout != other.layout
            || self.frames.len() != other.frames.len()
            || self.space_len() != other.space_len()
        {
            return Err(OcpError::Shape("controls have different layouts".into()));
        }
        Ok(())
    }

    /// Weighted inner product.
    pub fn dot(&self, other: &Control) -> Result<f64> {
        self.check_compatible(other)?;
        let ws = self.space_weights();
        Ok(self
            .frames
            .iter()
            .zip(&other.frames)
            .enumerate()
            .map(|(f, (a, b))| self.time_weight(f) * a.iter().zip(b).zip(&ws).map(|((x, y), w)| x * y * w).sum::<f64>())
            .sum())
    }

    /// Discrete L2 norm over the control's space-time support.
    pub fn norm(&self) -> f64 {
        self.dot(self).map(f64::sqrt).unwrap_or(f64::NAN)
    }

    /// `sum_levels dt sum_entries mu u^2` over levels `1..=N`.
    pub fn energy(&self) -> f64 {
        let we = self.energy_weights();
        (1..=self.n_steps)
            .map(|n| self.dt * self.at_level(n).iter().zip(&we).map(|(u, w)| u * u * w).sum::<f64>())
            .sum()
    }

    /// `self + alpha * dir`
    pub fn axpy(&self, alpha: f64, dir: &Control) -> Result<Control> {
        self.check_compatible(dir)?;
        let mut out = self.clone();
        for (a, b) in out.frames.iter_mut().zip(&dir.frames) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
        out.validate()?;
        Ok(out)
    }

    /// Same layout, new frames.
    pub fn with_frames(&self, frames: Vec<Vec<f64>>) -> Result<Control> {
        Control::new(self.layout, self.grid.clone(), self.dt, self.n_steps, frames)
    }

    /// Number of scalar unknowns.
    pub fn n_entries(&self) -> usize {
        self.frames.len() * self.space_len()
    }

    /// Flat entry index to `(frame, spatial index)`.
    pub fn entry_position(&self, entry: usize) -> (usize, usize) {
        (entry / self.space_len(), entry % self.space_len())
    }

    pub fn entry(&self, entry: usize) -> f64 {
        let (f, k) = self.entry_position(entry);
        self.frames[f][k]
    }

    /// Inner-product weight of a flat entry; the derivative of the
    /// objective with respect to that entry is `weight * gradient entry`.
    pub fn entry_weight(&self, entry: usize) -> f64 {
        let (f, k) = self.entry_position(entry);
        self.time_weight(f) * self.space_weights()[k]
    }

    pub fn with_entry(&self, entry: usize, value: f64) -> Result<Control> {
        if entry >= self.n_entries() {
            return Err(OcpError::Invalid(format!("control entry {entry} out of range")));
        }
        let mut out = self.clone();
        let (f, k) = self.entry_position(entry);
        out.frames[f][k] = value;
        out.validate()?;
        Ok(out)
    }
}

pub(crate) fn frame_count(profile: TimeProfile, n_steps: usize) -> usize {
    match profile {
        TimeProfile::PerLevel => n_steps + 1,
        TimeProfile::Constant => 1,
    }
}

pub(crate) fn space_len(grid: &StructuredGrid, kind: ControlKind) -> Result<usize> {
    Ok(match kind {
        ControlKind::Distributed => grid.n_cells(),
        ControlKind::BoundaryTrace(p) => {
            grid.check_patch(p)?;
            grid.patch_faces(p).len()
        }
        ControlKind::BoundaryScalar(p) => {
            grid.check_patch(p)?;
            1
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(kind: ControlKind, profile: TimeProfile) -> ControlLayout {
        ControlLayout { kind, profile }
    }

    #[test]
    fn shapes_and_weights() {
        let g = Arc::new(StructuredGrid::rectangle(1.0, 2.0, 4, 8).unwrap());
        let left = g.patch_id("left").unwrap();
        let c = Control::zeros(
            layout(ControlKind::BoundaryTrace(left), TimeProfile::PerLevel),
            g.clone(),
            0.1,
            5,
        )
        .unwrap();
        assert_eq!(c.frames().len(), 6);
        assert_eq!(c.space_len(), 8);
        assert_eq!(c.time_weight(0), 0.0);
        assert_eq!(c.space_weights()[0], 0.25);

        let s = Control::constant(
            layout(ControlKind::BoundaryScalar(left), TimeProfile::Constant),
            g.clone(),
            0.1,
            5,
            2.0,
        )
        .unwrap();
        assert_eq!(s.n_entries(), 1);
        // Energy: sum_n dt |Gamma| u^2 = 0.5 * 2 * 4
        assert!((s.energy() - 4.0).abs() < 1e-12);
        assert!((s.norm() - (0.5f64 * 4.0).sqrt()).abs() < 1e-12);

        assert!(Control::new(c.layout(), g.clone(), 0.1, 5, vec![vec![0.0; 8]; 5]).is_err());
        assert!(Control::new(c.layout(), g, 0.1, 5, vec![vec![f64::NAN; 8]; 6]).is_err());
    }

    #[test]
    fn entry_round_trip() {
        let g = Arc::new(StructuredGrid::interval(1.0, 3).unwrap());
        let c = Control::zeros(layout(ControlKind::Distributed, TimeProfile::PerLevel), g, 0.5, 2).unwrap();
        let d = c.with_entry(7, 3.0).unwrap();
        assert_eq!(d.entry_position(7), (2, 1));
        assert_eq!(d.at_level(2)[1], 3.0);
        assert!((d.entry_weight(7) - 0.5 / 3.0).abs() < 1e-15);
        let e = d.axpy(-1.0, &d).unwrap();
        assert_eq!(e.norm(), 0.0);
    }
}
