//! Field output: legacy VTK per slab and the JSON run summary.
//!
//! Every space-time cell is written as its own quadratic tetrahedron (VTK
//! type 24) with the cell polynomials sampled at the four vertices and six
//! edge midpoints, so the discontinuous field is not averaged. Point
//! coordinates are `(x1, x2, t)`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::{cell_pressure, cell_velocity};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::system::{Discretization, SlabState};

/// VTK cell type of the quadratic tetrahedron.
pub const VTK_QUADRATIC_TETRA: u8 = 24;

/// Reference nodes in VTK order: vertices, then the midpoints of the edges
/// (0,1), (1,2), (0,2), (0,3), (1,3), (2,3).
pub const NODES: [[f64; 3]; 10] = [
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.5, 0.0, 0.0],
    [0.5, 0.5, 0.0],
    [0.0, 0.5, 0.0],
    [0.0, 0.0, 0.5],
    [0.5, 0.0, 0.5],
    [0.0, 0.5, 0.5],
];

pub fn slab_file_name(index: usize) -> String {
    format!("slab_{index:04}.vtk")
}

/// Legacy ASCII VTK of one solved slab with point data `velocity` and
/// `pressure`, written with 17 significant digits.
pub fn format_slab_vtk<T: Real>(disc: &Discretization<T>, state: &SlabState<T>) -> String {
    let n = disc.slab().n_cells();
    let np = NODES.len() * n;
    let mut points = String::new();
    let mut velocity = String::new();
    let mut pressure = String::new();
    for cell in 0..n {
        let map = &disc.cell_geometry(cell).map;
        for node in NODES {
            let xi = node.map(T::lit);
            let x = map.map(&xi);
            let u = cell_velocity(disc, state, cell, &xi);
            let p = cell_pressure(disc, state, cell, &xi);
            let _ = writeln!(points, "{:.16e} {:.16e} {:.16e}", x[1].f64(), x[2].f64(), x[0].f64());
            let _ = writeln!(velocity, "{:.16e} {:.16e} 0", u[0].f64(), u[1].f64());
            let _ = writeln!(pressure, "{:.16e}", p.f64());
        }
    }
    let (t0, t1) = disc.slab().time_interval();
    let mut s = format!(
        "# vtk DataFile Version 3.0\nslab t = [{:.16e}, {:.16e}]\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS {np} double\n",
        t0.f64(),
        t1.f64()
    );
    s.push_str(&points);
    let _ = writeln!(s, "CELLS {n} {}", 11 * n);
    for cell in 0..n {
        s.push_str("10");
        for i in 0..NODES.len() {
            let _ = write!(s, " {}", NODES.len() * cell + i);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    for _ in 0..n {
        let _ = writeln!(s, "{VTK_QUADRATIC_TETRA}");
    }
    let _ = writeln!(s, "POINT_DATA {np}\nVECTORS velocity double");
    s.push_str(&velocity);
    s.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    s.push_str(&pressure);
    s
}

/// Writes `slab_####.vtk` into `dir` and returns its path.
pub fn write_slab_vtk<T: Real>(
    dir: &Path,
    index: usize,
    disc: &Discretization<T>,
    state: &SlabState<T>,
) -> Result<PathBuf> {
    let path = dir.join(slab_file_name(index));
    fs::write(&path, format_slab_vtk(disc, state)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Pretty-printed JSON of any report.
pub fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(format!("JSON encoding failed: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
