//! Plain-text spatial meshes and legacy VTK output of slab meshes.
//!
//! Mesh format, whitespace separated, `#` starts a comment:
//!
//! ```text
//! <vertex count>
//! x y            one line per vertex
//! i j k          one line per triangle, 0-based, counter-clockwise
//! i j tag        one line per boundary edge, tag = dirichlet | neumann
//! ```
//!
//! Triangle and boundary lines may be interleaved; a line whose third
//! token is a word is a boundary edge.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{BoundaryEdge, BoundaryTag, SlabMesh, SpatialMesh};
use crate::error::{Error, Result};
use crate::scalar::Real;

fn parse_tag(s: &str) -> Option<BoundaryTag> {
    match s.to_ascii_lowercase().as_str() {
        "d" | "dirichlet" => Some(BoundaryTag::Dirichlet),
        "n" | "neumann" => Some(BoundaryTag::Neumann),
        _ => None,
    }
}

pub fn parse_mesh<T: Real>(text: &str, path: &Path) -> Result<SpatialMesh<T>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (line, first) = lines.next().ok_or_else(|| err(1, "empty mesh file".into()))?;
    let nv: usize = first
        .parse()
        .map_err(|_| err(line, format!("expected the vertex count, found {first:?}")))?;
    let mut vertices = Vec::with_capacity(nv);
    let mut triangles = Vec::new();
    let mut boundary = Vec::new();
    let index = |line: usize, s: &str| -> Result<usize> {
        let i: usize = s.parse().map_err(|_| err(line, format!("bad vertex index {s:?}")))?;
        if i >= nv {
            return Err(err(line, format!("vertex index {i} out of range (count {nv})")));
        }
        Ok(i)
    };
    for (line, l) in lines {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if vertices.len() < nv {
            let [x, y] = tok[..] else {
                return Err(err(line, format!("expected \"x y\", found {l:?}")));
            };
            let coord = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(line, format!("bad coordinate {s:?}")))
            };
            vertices.push([T::lit(coord(x)?), T::lit(coord(y)?)]);
            continue;
        }
        let [a, b, c] = tok[..] else {
            return Err(err(line, format!("expected \"i j k\" or \"i j tag\", found {l:?}")));
        };
        let (a, b) = (index(line, a)?, index(line, b)?);
        if c.chars().next().is_some_and(|ch| ch.is_ascii_alphabetic()) {
            let tag = parse_tag(c).ok_or_else(|| err(line, format!("unknown boundary tag {c:?}")))?;
            boundary.push(BoundaryEdge { vertices: [a, b], tag });
        } else {
            triangles.push([a, b, index(line, c)?]);
        }
    }
    if vertices.len() < nv {
        return Err(err(
            text.lines().count(),
            format!("expected {nv} vertices, found {}", vertices.len()),
        ));
    }
    SpatialMesh::new(vertices, triangles, boundary)
}

pub fn read_mesh<T: Real>(path: &Path) -> Result<SpatialMesh<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text, path)
}

pub fn format_mesh<T: Real>(mesh: &SpatialMesh<T>) -> String {
    let mut s = format!("{}\n", mesh.n_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:.17e} {:.17e}", v[0].f64(), v[1].f64());
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    for e in mesh.boundary_edges() {
        let tag = match e.tag {
            BoundaryTag::Dirichlet => "dirichlet",
            BoundaryTag::Neumann => "neumann",
        };
        let _ = writeln!(s, "{} {} {tag}", e.vertices[0], e.vertices[1]);
    }
    s
}

pub fn write_mesh<T: Real>(mesh: &SpatialMesh<T>, path: &Path) -> Result<()> {
    fs::write(path, format_mesh(mesh)).map_err(|e| Error::io(path, e))
}

/// Legacy VTK unstructured grid of a slab with `(x1, x2, t)` as point
/// coordinates and the spatial triangle of every tetrahedron as cell data.
pub fn format_slab_vtk<T: Real>(slab: &SlabMesh<T>) -> String {
    let mut s = String::from("# vtk DataFile Version 3.0\nspace-time slab\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", slab.vertices().len());
    for v in slab.vertices() {
        let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", v[1].f64(), v[2].f64(), v[0].f64());
    }
    let n = slab.n_cells();
    let _ = writeln!(s, "CELLS {n} {}", 5 * n);
    for c in slab.cells() {
        let _ = writeln!(s, "4 {} {} {} {}", c[0], c[1], c[2], c[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    for _ in 0..n {
        s.push_str("10\n");
    }
    let _ = writeln!(s, "CELL_DATA {n}\nSCALARS triangle int 1\nLOOKUP_TABLE default");
    for c in 0..n {
        let _ = writeln!(s, "{}", slab.cell_triangle(c));
    }
    s
}

pub fn write_slab_vtk<T: Real>(slab: &SlabMesh<T>, path: &Path) -> Result<()> {
    fs::write(path, format_slab_vtk(slab)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{extrude_slab, triangulate_unit_square};

    #[test]
    fn round_trip_preserves_the_mesh() {
        let m = triangulate_unit_square::<f64>(3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("square.mesh");
        write_mesh(&m, &path).unwrap();
        let back = read_mesh::<f64>(&path).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.boundary_edges(), m.boundary_edges());
    }

    #[test]
    fn accepts_comments_and_short_tags() {
        let text = "# unit square\n4\n0 0\n1 0\n1 1\n0 1 # last vertex\n0 1 2\n0 2 3\n\
                    0 1 D\n1 2 N\n2 3 d\n3 0 dirichlet\n";
        let m = parse_mesh::<f64>(text, Path::new("inline")).unwrap();
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.boundary_tag(2, 1), Some(BoundaryTag::Neumann));
        assert!((m.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reports_the_offending_line() {
        let bad = [
            ("3\n0 0\n1 0\n", 3, "expected 3 vertices"),
            ("3\n0 0\n1 0\n0 1\n0 1 7\n", 5, "out of range"),
            ("3\n0 0\n1 0\n0 x\n", 4, "bad coordinate"),
            ("3\n0 0\n1 0\n0 1\n0 1 2\n0 1 wall\n", 6, "unknown boundary tag"),
        ];
        for (text, want_line, want) in bad {
            match parse_mesh::<f64>(text, Path::new("m")) {
                Err(Error::Parse { line, message, .. }) => {
                    assert_eq!(line, want_line, "{message}");
                    assert!(message.contains(want), "{message}");
                }
                other => panic!("expected a parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn missing_boundary_tags_fail_validation() {
        let text = "3\n0 0\n1 0\n0 1\n0 1 2\n0 1 dirichlet\n";
        assert!(matches!(
            parse_mesh::<f64>(text, Path::new("m")),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn vtk_lists_every_tetrahedron() {
        let m = triangulate_unit_square::<f64>(2).unwrap();
        let slab = extrude_slab(&m, &m, 0.0, 0.1).unwrap();
        let s = format_slab_vtk(&slab);
        assert!(s.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(s.contains(&format!("POINTS {} double", 2 * m.n_vertices())));
        assert!(s.contains(&format!("CELLS {} {}", slab.n_cells(), 5 * slab.n_cells())));
        assert_eq!(s.lines().filter(|l| *l == "10").count(), slab.n_cells());
    }
}
