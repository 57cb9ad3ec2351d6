use crate::error::{OcpError, Result};
use crate::mesh::{PatchId, StructuredGrid};

/// Boundary datum on a patch: one value for every face, or one per face.
#[derive(Debug, Clone, PartialEq)]
pub enum FaceData {
    Uniform(f64),
    PerFace(Vec<f64>),
}

impl FaceData {
    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        match self {
            FaceData::Uniform(v) => *v,
            FaceData::PerFace(v) => v[k],
        }
    }

    fn check(&self, faces: usize, what: &str) -> Result<()> {
        match self {
            FaceData::Uniform(v) if !v.is_finite() => Err(OcpError::NonFinite(what.into())),
            FaceData::PerFace(v) if v.len() != faces => {
                Err(OcpError::Shape(format!("{what}: {} values for {faces} faces", v.len())))
            }
            FaceData::PerFace(v) if v.iter().any(|x| !x.is_finite()) => Err(OcpError::NonFinite(what.into())),
            _ => Ok(()),
        }
    }
}

impl From<f64> for FaceData {
    fn from(v: f64) -> Self {
        FaceData::Uniform(v)
    }
}

impl From<Vec<f64>> for FaceData {
    fn from(v: Vec<f64>) -> Self {
        FaceData::PerFace(v)
    }
}

/// Condition on one patch, with `n` the outward normal.
#[derive(Debug, Clone, PartialEq)]
pub enum Bc {
    /// `phi = g`
    Dirichlet(FaceData),
    /// `grad(phi) . n = q`
    Neumann(FaceData),
    /// `a phi + b grad(phi) . n = 0`, `b != 0`
    Robin { a: FaceData, b: f64 },
}

impl Bc {
    pub fn dirichlet(g: impl Into<FaceData>) -> Self {
        Bc::Dirichlet(g.into())
    }

    pub fn neumann(q: impl Into<FaceData>) -> Self {
        Bc::Neumann(q.into())
    }

    pub fn robin(a: impl Into<FaceData>, b: f64) -> Self {
        Bc::Robin { a: a.into(), b }
    }
}

/// One condition per patch, indexed by [`PatchId`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditions {
    per_patch: Vec<Bc>,
}

impl BoundaryConditions {
    /// Same condition everywhere.
    pub fn uniform(grid: &StructuredGrid, bc: Bc) -> Result<Self> {
        Self::from_vec(grid, vec![bc; grid.n_patches()])
    }

    /// Conditions given by patch name; every patch must appear exactly once.
    pub fn named(grid: &StructuredGrid, entries: Vec<(&str, Bc)>) -> Result<Self> {
        let mut slots: Vec<Option<Bc>> = vec![None; grid.n_patches()];
        for (name, bc) in entries {
            let id = grid.patch_id(name)?;
            if slots[id.0].replace(bc).is_some() {
                return Err(OcpError::Boundary(format!("patch `{name}` given twice")));
            }
        }
        let mut per_patch = Vec::with_capacity(slots.len());
        for (p, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(bc) => per_patch.push(bc),
                None => {
                    return Err(OcpError::Boundary(format!(
                        "patch `{}` has no condition",
                        grid.patch(PatchId(p)).name
                    )))
                }
            }
        }
        Self::from_vec(grid, per_patch)
    }

    pub fn from_vec(grid: &StructuredGrid, per_patch: Vec<Bc>) -> Result<Self> {
        if per_patch.len() != grid.n_patches() {
            return Err(OcpError::Boundary(format!(
                "{} conditions for {} patches",
                per_patch.len(),
                grid.n_patches()
            )));
        }
        for (p, bc) in per_patch.iter().enumerate() {
            let faces = grid.patch_faces(PatchId(p)).len();
            let name = &grid.patch(PatchId(p)).name;
            match bc {
                Bc::Dirichlet(g) => g.check(faces, &format!("Dirichlet data on `{name}`"))?,
                Bc::Neumann(q) => q.check(faces, &format!("Neumann data on `{name}`"))?,
                Bc::Robin { a, b } => {
                    a.check(faces, &format!("Robin data on `{name}`"))?;
                    if !(b.is_finite() && *b != 0.0) {
                        return Err(OcpError::Boundary(format!(
                            "Robin condition on `{name}` needs a finite nonzero gradient coefficient"
                        )));
                    }
                }
            }
        }
        Ok(Self { per_patch })
    }

    pub fn get(&self, id: PatchId) -> &Bc {
        &self.per_patch[id.0]
    }
}
