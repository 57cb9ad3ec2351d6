//! Plain-text velocity trajectories.
//!
//! The first line is `nx ny nt dt`. It is followed by `nt + 1` blocks of
//! `nx * ny` lines `vx vy`, one block per time level, cells in row-major
//! order (x fastest). Blank lines and lines starting with `#` are ignored.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{OcpError, Result};
use crate::mesh::{StructuredGrid, Trajectory, VectorField};

use super::output::fmt_real;

pub fn write_velocity_file(path: &Path, v: &Trajectory<VectorField>) -> Result<()> {
    let grid = v.first().grid();
    let [nx, ny] = grid.cells();
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{nx} {ny} {} {}", v.n_steps(), fmt_real(v.dt()))?;
    for frame in v.frames() {
        for [a, b] in frame.values() {
            writeln!(f, "{} {}", fmt_real(*a), fmt_real(*b))?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_velocity_file(path: &Path, grid: &Arc<StructuredGrid>) -> Result<Trajectory<VectorField>> {
    let text = std::fs::read_to_string(path)?;
    parse_velocity(&text, grid).map_err(|e| match e {
        OcpError::Parse(m) => OcpError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_velocity(text: &str, grid: &Arc<StructuredGrid>) -> Result<Trajectory<VectorField>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (ln, header) = lines
        .next()
        .ok_or_else(|| OcpError::Parse("empty velocity file".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    let bad_header = || OcpError::Parse(format!("line {ln}: expected `nx ny nt dt`"));
    if h.len() != 4 {
        return Err(bad_header());
    }
    let nx: usize = h[0].parse().map_err(|_| bad_header())?;
    let ny: usize = h[1].parse().map_err(|_| bad_header())?;
    let nt: usize = h[2].parse().map_err(|_| bad_header())?;
    let dt: f64 = h[3].parse().map_err(|_| bad_header())?;
    if [nx, ny] != grid.cells() {
        return Err(OcpError::Shape(format!(
            "velocity file is {nx}x{ny}, the grid is {}x{}",
            grid.cells()[0],
            grid.cells()[1]
        )));
    }
    let n = nx * ny;
    let mut frames = Vec::with_capacity(nt + 1);
    for _ in 0..=nt {
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| OcpError::Parse(format!("expected {} velocity rows", (nt + 1) * n)))?;
            let parts: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| OcpError::Parse(format!("line {ln}: bad number")))?;
            let [a, b] = parts[..] else {
                return Err(OcpError::Parse(format!("line {ln}: expected `vx vy`")));
            };
            values.push([a, b]);
        }
        frames.push(VectorField::new(grid.clone(), values)?);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(OcpError::Parse(format!("line {ln}: data after the last time level")));
    }
    Trajectory::new(dt, frames)
}
