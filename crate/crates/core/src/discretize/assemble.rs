use crate::error::{OcpError, Result};
use crate::mesh::{PatchId, ScalarField, StructuredGrid, VectorField};

use super::bc::{Bc, BoundaryConditions};

/// Per-cell coefficient of an operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient<'a> {
    Zero,
    Uniform(f64),
    PerCell(&'a [f64]),
}

impl Coefficient<'_> {
    #[inline]
    pub fn at(&self, c: usize) -> f64 {
        match self {
            Coefficient::Zero => 0.0,
            Coefficient::Uniform(v) => *v,
            Coefficient::PerCell(v) => v[c],
        }
    }

    fn check(&self, n: usize, what: &str) -> Result<()> {
        match self {
            Coefficient::Zero => Ok(()),
            Coefficient::Uniform(v) if v.is_finite() => Ok(()),
            Coefficient::Uniform(_) => Err(OcpError::NonFinite(what.into())),
            Coefficient::PerCell(v) if v.len() != n => {
                Err(OcpError::Shape(format!("{what}: {} values for {n} cells", v.len())))
            }
            Coefficient::PerCell(v) if v.iter().any(|x| !x.is_finite()) => Err(OcpError::NonFinite(what.into())),
            Coefficient::PerCell(_) => Ok(()),
        }
    }
}

/// `sigma d(phi)/dt + V.grad(phi) - kappa lap(phi) + r phi = source`
///
/// Convection is assembled in conservative form with linearly interpolated
/// face velocities, which equals the advective form for divergence-free `V`.
#[derive(Debug, Clone, Copy)]
pub struct OperatorSpec<'a> {
    pub velocity: Option<&'a VectorField>,
    pub diffusion: f64,
    pub reaction: Coefficient<'a>,
    pub time_scale: f64,
    pub source: Coefficient<'a>,
}

impl<'a> OperatorSpec<'a> {
    pub fn diffusion(kappa: f64) -> Self {
        Self {
            velocity: None,
            diffusion: kappa,
            reaction: Coefficient::Zero,
            time_scale: 1.0,
            source: Coefficient::Zero,
        }
    }

    pub fn with_velocity(mut self, v: &'a VectorField) -> Self {
        self.velocity = Some(v);
        self
    }

    pub fn with_reaction(mut self, r: Coefficient<'a>) -> Self {
        self.reaction = r;
        self
    }

    pub fn with_time_scale(mut self, sigma: f64) -> Self {
        self.time_scale = sigma;
        self
    }

    pub fn with_source(mut self, s: Coefficient<'a>) -> Self {
        self.source = s;
        self
    }
}

/// Compressed sparse row matrix with sorted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    /// Position of the diagonal entry of each row in `cols`/`vals`.
    pub diag: Vec<usize>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
            diag: (0..n).collect(),
        }
    }

    /// Builds from a dense row-major matrix, keeping nonzeros and the diagonal.
    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let mut m = Self {
            n,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            diag: Vec::with_capacity(n),
        };
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 || i == j {
                    if i == j {
                        m.diag.push(m.cols.len());
                    }
                    m.cols.push(j);
                    m.vals.push(v);
                }
            }
            m.row_ptr.push(m.cols.len());
        }
        m
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        (self.row_ptr[i]..self.row_ptr[i + 1])
            .find(|&k| self.cols[k] == j)
            .map_or(0.0, |k| self.vals[k])
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for (i, row) in a.iter_mut().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row[self.cols[k]] = self.vals[k];
            }
        }
        a
    }

    /// Whether every row couples only to its immediate index neighbours.
    pub fn is_tridiagonal(&self) -> bool {
        (0..self.n).all(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).all(|k| self.cols[k].abs_diff(i) <= 1))
    }
}

/// Matrix and right-hand side of one implicit step. Rows are scaled by
/// the cell volume.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// Assembles one implicit Euler step from `previous` over `dt`.
pub fn assemble_step(
    spec: &OperatorSpec,
    bc: &BoundaryConditions,
    previous: &ScalarField,
    dt: f64,
) -> Result<LinearSystem> {
    assemble_raw(previous.grid(), spec, bc, previous.values(), dt)
}

pub(crate) fn assemble_raw(
    grid: &StructuredGrid,
    spec: &OperatorSpec,
    bc: &BoundaryConditions,
    previous: &[f64],
    dt: f64,
) -> Result<LinearSystem> {
    let n = grid.n_cells();
    if !(dt.is_finite() && dt > 0.0) {
        return Err(OcpError::Invalid(format!("time step must be positive, got {dt}")));
    }
    if !(spec.diffusion.is_finite() && spec.diffusion >= 0.0) {
        return Err(OcpError::Invalid(format!(
            "diffusion coefficient must be non-negative, got {}",
            spec.diffusion
        )));
    }
    if !(spec.time_scale.is_finite() && spec.time_scale > 0.0) {
        return Err(OcpError::Invalid(format!(
            "time-derivative scale must be positive, got {}",
            spec.time_scale
        )));
    }
    if previous.len() != n {
        return Err(OcpError::Shape(format!(
            "previous field has {} values for {n} cells",
            previous.len()
        )));
    }
    if previous.iter().any(|v| !v.is_finite()) {
        return Err(OcpError::NonFinite("previous field".into()));
    }
    spec.reaction.check(n, "reaction coefficient")?;
    spec.source.check(n, "source")?;
    if let Some(v) = spec.velocity {
        if v.values().len() != n {
            return Err(OcpError::Shape("velocity field lives on another grid".into()));
        }
    }

    let [nx, ny] = grid.cells();
    let h = grid.h();
    let vol = grid.cell_volume();
    let kappa = spec.diffusion;
    let mass = spec.time_scale * vol / dt;

    // Interior face coefficients; neighbours in column order.
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(5 * n);
    let mut vals = Vec::with_capacity(5 * n);
    let mut diag = Vec::with_capacity(n);
    let mut rhs = vec![0.0; n];
    row_ptr.push(0);

    for c in 0..n {
        let (i, j) = grid.ij(c);
        let mut d = mass + spec.reaction.at(c) * vol;
        rhs[c] = mass * previous[c] + spec.source.at(c) * vol;

        // (neighbour, axis, outward sign)
        let mut nbrs: [(usize, usize, f64); 4] = [(0, 0, 0.0); 4];
        let mut count = 0;
        if j > 0 {
            nbrs[count] = (c - nx, 1, -1.0);
            count += 1;
        }
        if i > 0 {
            nbrs[count] = (c - 1, 0, -1.0);
            count += 1;
        }
        let split = count;
        if i + 1 < nx {
            nbrs[count] = (c + 1, 0, 1.0);
            count += 1;
        }
        if j + 1 < ny {
            nbrs[count] = (c + nx, 1, 1.0);
            count += 1;
        }

        let mut off = [0.0; 4];
        for (k, &(nb, axis, sign)) in nbrs[..count].iter().enumerate() {
            let area = grid.face_area(axis);
            let flow = spec.velocity.map_or(0.0, |v| sign * v.face_normal(c, nb, axis) * area);
            let diff = kappa * area / h[axis];
            d += 0.5 * flow + diff;
            off[k] = 0.5 * flow - diff;
        }

        for k in 0..split {
            cols.push(nbrs[k].0);
            vals.push(off[k]);
        }
        diag.push(cols.len());
        cols.push(c);
        vals.push(d);
        for k in split..count {
            cols.push(nbrs[k].0);
            vals.push(off[k]);
        }
        row_ptr.push(cols.len());
    }

    for p in 0..grid.n_patches() {
        let id = PatchId(p);
        let cond = bc.get(id);
        for (k, face) in grid.patch_faces(id).iter().enumerate() {
            let c = face.cell;
            let hn = h[face.axis()];
            let area = face.area;
            let flow = spec.velocity.map_or(0.0, |v| v.boundary_normal(face) * area);
            let dk = diag[c];
            match cond {
                Bc::Dirichlet(g) => {
                    let g = g.at(k);
                    let t = 2.0 * kappa * area / hn;
                    vals[dk] += t;
                    rhs[c] += (t - flow) * g;
                }
                Bc::Neumann(q) => {
                    let q = q.at(k);
                    vals[dk] += flow;
                    rhs[c] -= flow * q * hn / 2.0 - kappa * area * q;
                }
                Bc::Robin { a, b } => {
                    let a = a.at(k);
                    let d = robin_denominator(a, *b, hn)?;
                    vals[dk] += (flow + kappa * area * a / b) / d;
                }
            }
        }
    }

    Ok(LinearSystem {
        matrix: CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
            diag,
        },
        rhs,
    })
}

fn robin_denominator(a: f64, b: f64, hn: f64) -> Result<f64> {
    let d = 1.0 + hn * a / (2.0 * b);
    if d > 0.0 && d.is_finite() {
        Ok(d)
    } else {
        Err(OcpError::Boundary(format!(
            "Robin coefficients a={a}, b={b} give a non-positive face weight on h={hn}"
        )))
    }
}

/// Outward normal gradient on each face of `patch`, using the same ghost
/// elimination as the assembly.
pub fn boundary_gradient(field: &ScalarField, patch: PatchId, bc: &BoundaryConditions) -> Result<Vec<f64>> {
    let grid = field.grid();
    grid.check_patch(patch)?;
    let h = grid.h();
    let phi = field.values();
    grid.patch_faces(patch)
        .iter()
        .enumerate()
        .map(|(k, face)| {
            let hn = h[face.axis()];
            let p = phi[face.cell];
            Ok(match bc.get(patch) {
                Bc::Dirichlet(g) => (g.at(k) - p) / (0.5 * hn),
                Bc::Neumann(q) => q.at(k),
                Bc::Robin { a, b } => {
                    let a = a.at(k);
                    -(a / b) * p / robin_denominator(a, *b, hn)?
                }
            })
        })
        .collect()
}
