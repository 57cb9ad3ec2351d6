//! CSV and legacy VTK writers. Reals are written as `{:.16e}`, which reads
//! back bit-for-bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::cases::{CaseDefinition, ConvergenceStudy};
use crate::error::{OcpError, Result};
use crate::mesh::{ScalarField, StructuredGrid};
use crate::optimize::{Control, ControlKind, GradientCheckRow, IterationRecord, OptimizationResult};

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> OcpError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => OcpError::Io(io),
        other => OcpError::Parse(format!("{other:?}")),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn opt_real(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

/// `iter,J,J_u,J_target,grad_norm,step`, one row per evaluated iterate.
pub fn write_history(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["iter", "J", "J_u", "J_target", "grad_norm", "step"])
        .map_err(csv_err)?;
    for r in history {
        w.write_record([
            r.iter.to_string(),
            fmt_real(r.j),
            fmt_real(r.j_u),
            fmt_real(r.j_target),
            fmt_real(r.grad_norm),
            fmt_real(r.step),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `x,y,value` at cell centers.
pub fn write_field_csv(path: &Path, field: &ScalarField) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["x", "y", "value"]).map_err(csv_err)?;
    let grid = field.grid();
    for (c, v) in field.values().iter().enumerate() {
        let [x, y] = grid.cell_center(c);
        w.write_record([fmt_real(x), fmt_real(y), fmt_real(*v)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_field_csv`], checking that the rows sit
/// at the cell centers of `grid`.
pub fn read_field_csv(path: &Path, grid: &Arc<StructuredGrid>) -> Result<ScalarField> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "value"] {
        return Err(OcpError::Parse(format!(
            "{}: expected header x,y,value",
            path.display()
        )));
    }
    let tol = 1e-9 * grid.h()[0].min(grid.h()[1]);
    let mut values = Vec::with_capacity(grid.n_cells());
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| OcpError::Parse(format!("{}: row {}: bad number", path.display(), row + 2)))
        };
        let (x, y, v) = (num(0)?, num(1)?, num(2)?);
        if row >= grid.n_cells() {
            return Err(OcpError::Shape(format!("{}: more rows than cells", path.display())));
        }
        let [cx, cy] = grid.cell_center(row);
        if (x - cx).abs() > tol || (y - cy).abs() > tol {
            return Err(OcpError::Shape(format!(
                "{}: row {} is at ({x}, {y}), expected cell center ({cx}, {cy})",
                path.display(),
                row + 2
            )));
        }
        values.push(v);
    }
    ScalarField::new(grid.clone(), values)
}

/// `frame,index,x,y,value`. Coordinates are cell centers, face centers, or
/// the patch's first face for a scalar control.
pub fn write_control_csv(path: &Path, u: &Control) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["frame", "index", "x", "y", "value"]).map_err(csv_err)?;
    let grid = u.grid();
    let position = |k: usize| -> [f64; 2] {
        match u.kind() {
            ControlKind::Distributed => grid.cell_center(k),
            ControlKind::BoundaryTrace(p) => grid.patch_faces(p)[k].center,
            ControlKind::BoundaryScalar(p) => grid.patch_faces(p)[0].center,
        }
    };
    for (f, frame) in u.frames().iter().enumerate() {
        for (k, v) in frame.iter().enumerate() {
            let [x, y] = position(k);
            w.write_record([f.to_string(), k.to_string(), fmt_real(x), fmt_real(y), fmt_real(*v)])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Two-column `key,value` table.
pub fn write_summary(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["key", "value"]).map_err(csv_err)?;
    for (k, v) in entries {
        w.write_record([*k, v.as_str()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence_csv(path: &Path, studies: &[ConvergenceStudy]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "epsilon",
        "cells",
        "h",
        "iterations",
        "E_y",
        "rate_y",
        "E_lambda",
        "rate_lambda",
        "stop_reason",
    ])
    .map_err(csv_err)?;
    for s in studies {
        for r in &s.rows {
            w.write_record([
                fmt_real(s.epsilon),
                r.cells.to_string(),
                fmt_real(r.h),
                r.iterations.to_string(),
                fmt_real(r.e_y),
                opt_real(r.rate_y),
                fmt_real(r.e_lambda),
                opt_real(r.rate_lambda),
                r.stop_reason.as_str().to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_gradient_check_csv(path: &Path, rows: &[GradientCheckRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "entry",
        "frame",
        "index",
        "adjoint",
        "finite_difference",
        "relative_mismatch",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.entry.to_string(),
            r.frame.to_string(),
            r.index.to_string(),
            fmt_real(r.adjoint),
            fmt_real(r.finite_difference),
            fmt_real(r.relative_mismatch),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Legacy VTK structured points with the field as point data at the cell
/// centers.
pub fn write_vtk(path: &Path, field: &ScalarField, name: &str) -> Result<()> {
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(OcpError::Invalid(format!("VTK array name `{name}` must be one word")));
    }
    let grid = field.grid();
    let [nx, ny] = grid.cells();
    let [hx, hy] = grid.h();
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "{name}")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET STRUCTURED_POINTS")?;
    writeln!(f, "DIMENSIONS {nx} {ny} 1")?;
    writeln!(f, "ORIGIN {} {} 0", fmt_real(0.5 * hx), fmt_real(0.5 * hy))?;
    writeln!(f, "SPACING {} {} 1", fmt_real(hx), fmt_real(hy))?;
    writeln!(f, "POINT_DATA {}", nx * ny)?;
    writeln!(f, "SCALARS {name} double 1")?;
    writeln!(f, "LOOKUP_TABLE default")?;
    for v in field.values() {
        writeln!(f, "{}", fmt_real(*v))?;
    }
    f.flush()?;
    Ok(())
}

/// Writes history, final control and state, the summary and optionally a
/// VTK file of the final state into `dir`.
pub fn write_run_outputs(
    dir: &Path,
    case: &CaseDefinition,
    result: &OptimizationResult,
    extra: &[(&str, String)],
    vtk: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_history(&dir.join("history.csv"), &result.history)?;
    write_control_csv(&dir.join("control_final.csv"), &result.control)?;
    write_field_csv(&dir.join("state_final.csv"), result.final_state().last())?;
    let mut entries = vec![
        ("case", case.name.clone()),
        ("kind", case.kind().as_str().to_string()),
        ("iterations", result.iterations.to_string()),
        ("stop_reason", result.stop_reason.as_str().to_string()),
        ("J", fmt_real(result.objective.j)),
        ("J_u", fmt_real(result.objective.j_u)),
        ("J_target", fmt_real(result.objective.j_target)),
        ("grad_norm", fmt_real(result.grad_norm)),
    ];
    entries.extend(extra.iter().cloned());
    write_summary(&dir.join("summary.csv"), &entries)?;
    if vtk {
        write_vtk(&dir.join("state_final.vtk"), result.final_state().last(), "state")?;
    }
    Ok(())
}
