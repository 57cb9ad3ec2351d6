//! Uniform cell-centered grids, fields living on them, and the quadratures
//! shared by the state, adjoint and objective code.
//!
//! Cells are ordered row-major with `x` fastest: cell `(i, j)` has index
//! `i + nx * j`. A 1D grid is stored as an `nx x 1` grid whose transverse
//! extent is one, so that cell volumes are lengths and the two end faces
//! have unit area.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{OcpError, Result};

/// One of the four sides of the rectangle. 1D grids only have `Left` and `Right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Down,
    Up,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Down, Side::Up];

    /// Axis the side is normal to.
    pub fn axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Down | Side::Up => 1,
        }
    }

    /// Sign of the outward normal along [`Side::axis`].
    pub fn outward_sign(self) -> f64 {
        match self {
            Side::Left | Side::Down => -1.0,
            Side::Right | Side::Up => 1.0,
        }
    }

    fn slot(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
            Side::Down => 2,
            Side::Up => 3,
        }
    }
}

/// Contiguous run of boundary faces `start..end` along one side, counted in
/// increasing coordinate order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSegment {
    pub side: Side,
    pub start: usize,
    pub end: usize,
}

impl PatchSegment {
    pub fn new(side: Side, start: usize, end: usize) -> Self {
        Self { side, start, end }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub name: String,
    pub segments: Vec<PatchSegment>,
}

impl Patch {
    pub fn new(name: impl Into<String>, segments: Vec<PatchSegment>) -> Self {
        Self {
            name: name.into(),
            segments,
        }
    }

    /// Patch covering an entire side.
    pub fn whole_side(name: impl Into<String>, grid_cells: [usize; 2], side: Side) -> Self {
        let n = if side.axis() == 0 { grid_cells[1] } else { grid_cells[0] };
        Self::new(name, vec![PatchSegment::new(side, 0, n)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchId(pub usize);

/// Geometry of a single boundary face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub side: Side,
    /// Position of the face along its side.
    pub index: usize,
    /// Cell owning the face.
    pub cell: usize,
    pub area: f64,
    pub center: [f64; 2],
}

impl BoundaryFace {
    pub fn axis(&self) -> usize {
        self.side.axis()
    }

    pub fn normal_sign(&self) -> f64 {
        self.side.outward_sign()
    }

    /// Outward unit normal.
    pub fn normal(&self) -> [f64; 2] {
        let mut n = [0.0; 2];
        n[self.axis()] = self.normal_sign();
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGrid {
    dim: usize,
    extent: [f64; 2],
    cells: [usize; 2],
    h: [f64; 2],
    patches: Vec<Patch>,
    patch_faces: Vec<Vec<BoundaryFace>>,
    side_owner: [Vec<Option<PatchId>>; 4],
}

impl StructuredGrid {
    /// Interval `[0, length]` with `n` cells and patches `left`, `right`.
    pub fn interval(length: f64, n: usize) -> Result<Self> {
        let cells = [n, 1];
        let patches = vec![
            Patch::whole_side("left", cells, Side::Left),
            Patch::whole_side("right", cells, Side::Right),
        ];
        Self::build(1, [length, 1.0], cells, patches)
    }

    /// Rectangle `[0, lx] x [0, ly]` with patches `left`, `right`, `down`, `up`.
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        let cells = [nx, ny];
        let patches = vec![
            Patch::whole_side("left", cells, Side::Left),
            Patch::whole_side("right", cells, Side::Right),
            Patch::whole_side("down", cells, Side::Down),
            Patch::whole_side("up", cells, Side::Up),
        ];
        Self::build(2, [lx, ly], cells, patches)
    }

    /// Same geometry with a different patch layout.
    pub fn with_patches(&self, patches: Vec<Patch>) -> Result<Self> {
        Self::build(self.dim, self.extent, self.cells, patches)
    }

    fn build(dim: usize, extent: [f64; 2], cells: [usize; 2], patches: Vec<Patch>) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(OcpError::Grid(format!("dimension {dim} not supported")));
        }
        for axis in 0..dim {
            if cells[axis] == 0 {
                return Err(OcpError::Grid(format!("axis {axis} has no cells")));
            }
            if !(extent[axis].is_finite() && extent[axis] > 0.0) {
                return Err(OcpError::Grid(format!(
                    "axis {axis} extent must be positive, got {}",
                    extent[axis]
                )));
            }
        }
        let h = [extent[0] / cells[0] as f64, extent[1] / cells[1] as f64];

        let side_len = |side: Side| if side.axis() == 0 { cells[1] } else { cells[0] };
        let active = |side: Side| dim == 2 || side.axis() == 0;

        let mut side_owner: [Vec<Option<PatchId>>; 4] = Default::default();
        for side in Side::ALL {
            if active(side) {
                side_owner[side.slot()] = vec![None; side_len(side)];
            }
        }

        let mut patch_faces = Vec::with_capacity(patches.len());
        for (p, patch) in patches.iter().enumerate() {
            if patches[..p].iter().any(|q| q.name == patch.name) {
                return Err(OcpError::Grid(format!("duplicate patch name `{}`", patch.name)));
            }
            let mut faces = Vec::new();
            for seg in &patch.segments {
                if !active(seg.side) {
                    return Err(OcpError::Grid(format!(
                        "patch `{}` uses side {:?} which a {dim}D grid does not have",
                        patch.name, seg.side
                    )));
                }
                if seg.start >= seg.end || seg.end > side_len(seg.side) {
                    return Err(OcpError::Grid(format!(
                        "patch `{}` segment {}..{} out of range on {:?}",
                        patch.name, seg.start, seg.end, seg.side
                    )));
                }
                for k in seg.start..seg.end {
                    let owner = &mut side_owner[seg.side.slot()][k];
                    if owner.is_some() {
                        return Err(OcpError::Grid(format!(
                            "face {k} on {:?} claimed by more than one patch",
                            seg.side
                        )));
                    }
                    *owner = Some(PatchId(p));
                    faces.push(boundary_face(seg.side, k, cells, h));
                }
            }
            patch_faces.push(faces);
        }

        for side in Side::ALL {
            if let Some(k) = side_owner[side.slot()].iter().position(Option::is_none) {
                return Err(OcpError::Grid(format!(
                    "face {k} on {side:?} does not belong to any patch"
                )));
            }
        }

        Ok(Self {
            dim,
            extent,
            cells,
            h,
            patches,
            patch_faces,
            side_owner,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn h(&self) -> [f64; 2] {
        self.h
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[0] * self.h[1]
    }

    /// Area of a face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        self.h[1 - axis]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.cells[0] * j
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.cells[0], idx / self.cells[0])
    }

    pub fn cell_center(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.ij(idx);
        [(i as f64 + 0.5) * self.h[0], (j as f64 + 0.5) * self.h[1]]
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn n_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn patch(&self, id: PatchId) -> &Patch {
        &self.patches[id.0]
    }

    pub fn patch_id(&self, name: &str) -> Result<PatchId> {
        self.patches
            .iter()
            .position(|p| p.name == name)
            .map(PatchId)
            .ok_or_else(|| OcpError::UnknownPatch(name.to_string()))
    }

    pub fn check_patch(&self, id: PatchId) -> Result<()> {
        if id.0 < self.patches.len() {
            Ok(())
        } else {
            Err(OcpError::UnknownPatch(format!("#{}", id.0)))
        }
    }

    /// Faces of a patch, in segment order.
    pub fn patch_faces(&self, id: PatchId) -> &[BoundaryFace] {
        &self.patch_faces[id.0]
    }

    /// Total area (length in 2D, count of end points in 1D) of a patch.
    pub fn patch_measure(&self, id: PatchId) -> f64 {
        self.patch_faces(id).iter().map(|f| f.area).sum()
    }

    /// Patch owning face `k` of `side`, if the side exists on this grid.
    pub fn face_owner(&self, side: Side, k: usize) -> Option<PatchId> {
        self.side_owner[side.slot()].get(k).copied().flatten()
    }
}

fn boundary_face(side: Side, k: usize, cells: [usize; 2], h: [f64; 2]) -> BoundaryFace {
    let (nx, ny) = (cells[0], cells[1]);
    let (cell, center) = match side {
        Side::Left => (k * nx, [0.0, (k as f64 + 0.5) * h[1]]),
        Side::Right => (nx - 1 + k * nx, [nx as f64 * h[0], (k as f64 + 0.5) * h[1]]),
        Side::Down => (k, [(k as f64 + 0.5) * h[0], 0.0]),
        Side::Up => (k + nx * (ny - 1), [(k as f64 + 0.5) * h[0], ny as f64 * h[1]]),
    };
    BoundaryFace {
        side,
        index: k,
        cell,
        area: h[1 - side.axis()],
        center,
    }
}

/// Cell centers in storage order. 1D grids report the transverse
/// coordinate as `0.5`.
pub fn cell_centers(grid: &StructuredGrid) -> Vec<[f64; 2]> {
    (0..grid.n_cells()).map(|c| grid.cell_center(c)).collect()
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(OcpError::NonFinite(format!("{what} (entry {k})"))),
        None => Ok(()),
    }
}

/// One real per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<StructuredGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<StructuredGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(OcpError::Shape(format!(
                "field has {} values for {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        check_finite(&values, "scalar field")?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<StructuredGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Arc<StructuredGrid>, value: f64) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            values: vec![value; n],
        }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Arc<StructuredGrid>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.n_cells()).map(|c| f(grid.cell_center(c))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<StructuredGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `dim` reals per cell; the second component is zero on 1D grids.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Arc<StructuredGrid>,
    values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn new(grid: Arc<StructuredGrid>, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(OcpError::Shape(format!(
                "vector field has {} values for {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(OcpError::NonFinite("vector field".into()));
        }
        if grid.dim() == 1 && values.iter().any(|v| v[1] != 0.0) {
            return Err(OcpError::Shape("1D vector field with transverse component".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn uniform(grid: Arc<StructuredGrid>, v: [f64; 2]) -> Self {
        let n = grid.n_cells();
        let v = if grid.dim() == 1 { [v[0], 0.0] } else { v };
        Self {
            grid,
            values: vec![v; n],
        }
    }

    pub fn grid(&self) -> &Arc<StructuredGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn negated(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| [-v[0], -v[1]]).collect(),
        }
    }

    /// Normal velocity at an interior face between `cell` and its `+axis`
    /// neighbour, by linear interpolation of the two cell values.
    #[inline]
    pub fn face_normal(&self, cell: usize, neighbour: usize, axis: usize) -> f64 {
        0.5 * (self.values[cell][axis] + self.values[neighbour][axis])
    }

    /// Outward normal velocity at a boundary face, taken from the owning cell.
    #[inline]
    pub fn boundary_normal(&self, face: &BoundaryFace) -> f64 {
        self.values[face.cell][face.axis()] * face.normal_sign()
    }
}

/// Frames at `t^0 .. t^{N}` with `t^n = n dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<F = ScalarField> {
    dt: f64,
    frames: Vec<F>,
}

impl<F> Trajectory<F> {
    pub fn new(dt: f64, frames: Vec<F>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(OcpError::Invalid(format!("time step must be positive, got {dt}")));
        }
        if frames.is_empty() {
            return Err(OcpError::Shape("trajectory needs at least the initial frame".into()));
        }
        Ok(Self { dt, frames })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.n_steps() as f64
    }

    pub fn time(&self, level: usize) -> f64 {
        self.dt * level as f64
    }

    pub fn frame(&self, level: usize) -> &F {
        &self.frames[level]
    }

    pub fn frames(&self) -> &[F] {
        &self.frames
    }

    pub fn first(&self) -> &F {
        &self.frames[0]
    }

    pub fn last(&self) -> &F {
        self.frames.last().expect("non-empty trajectory")
    }

    /// Frames in reverse order, with the same time step.
    pub fn reversed(mut self) -> Self {
        self.frames.reverse();
        self
    }
}

impl Trajectory<ScalarField> {
    pub fn grid(&self) -> &Arc<StructuredGrid> {
        self.frames[0].grid()
    }
}

/// Per-face values of one patch at every time level.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub patch: PatchId,
    pub frames: Vec<Vec<f64>>,
}

impl BoundaryTrace {
    pub fn new(grid: &StructuredGrid, patch: PatchId, n_steps: usize, frames: Vec<Vec<f64>>) -> Result<Self> {
        grid.check_patch(patch)?;
        let faces = grid.patch_faces(patch).len();
        if frames.len() != n_steps + 1 {
            return Err(OcpError::Shape(format!(
                "trace has {} frames, expected {}",
                frames.len(),
                n_steps + 1
            )));
        }
        if let Some(bad) = frames.iter().position(|f| f.len() != faces) {
            return Err(OcpError::Shape(format!(
                "trace frame {bad} has wrong face count (patch has {faces})"
            )));
        }
        Ok(Self { patch, frames })
    }
}

/// Discrete L2 norm `sqrt(sum v^2 |cell|)`.
pub fn l2_norm(field: &ScalarField) -> f64 {
    weighted_l2(field.values(), field.grid().cell_volume())
}

pub(crate) fn weighted_l2(values: &[f64], weight: f64) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() * weight).sqrt()
}

/// Right-endpoint rectangle rule in time (levels `1..=N`), cell-volume
/// weighted in space. The integrand receives `(level, cell, value)`.
pub fn space_time_integral(traj: &Trajectory, integrand: impl Fn(usize, usize, f64) -> f64) -> f64 {
    let vol = traj.grid().cell_volume();
    let dt = traj.dt();
    (1..=traj.n_steps())
        .map(|n| {
            let level: f64 = traj
                .frame(n)
                .values()
                .iter()
                .enumerate()
                .map(|(c, &v)| integrand(n, c, v))
                .sum();
            level * vol * dt
        })
        .sum()
}

/// `||numeric - exact|| / ||exact||` in the discrete L2 norm.
pub fn relative_l2_error(numeric: &ScalarField, exact: &ScalarField) -> Result<f64> {
    if numeric.len() != exact.len() {
        return Err(OcpError::Shape("fields live on different grids".into()));
    }
    let denom = l2_norm(exact);
    if denom == 0.0 {
        return Err(OcpError::ZeroReference("exact field".into()));
    }
    let diff: f64 = numeric
        .values()
        .iter()
        .zip(exact.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        * numeric.grid().cell_volume();
    Ok(diff.sqrt() / denom)
}
