use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Boundary condition type carried by a spatial boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Edge of a spatial triangulation with its one or two adjacent triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Sorted vertex indices.
    pub vertices: [usize; 2],
    pub triangles: [usize; 2],
    pub n_triangles: usize,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.n_triangles == 1
    }
}

/// Conforming triangulation of a polygonal spatial domain at one instant.
#[derive(Debug, Clone)]
pub struct SpatialMesh<T> {
    vertices: Vec<[T; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    tags: HashMap<[usize; 2], BoundaryTag>,
}

fn edge_key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl<T: Real> SpatialMesh<T> {
    /// Builds and validates a mesh. Triangles with negative orientation are
    /// rejected rather than silently flipped.
    pub fn new(vertices: Vec<[T; 2]>, triangles: Vec<[usize; 3]>, boundary: Vec<BoundaryEdge>) -> Result<Self> {
        let tags = boundary
            .iter()
            .map(|e| (edge_key(e.vertices[0], e.vertices[1]), e.tag))
            .collect();
        let mesh = Self {
            vertices,
            triangles,
            boundary,
            tags,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn boundary_tag(&self, a: usize, b: usize) -> Option<BoundaryTag> {
        self.tags.get(&edge_key(a, b)).copied()
    }

    pub fn triangle_coords(&self, tri: usize) -> [[T; 2]; 3] {
        let [a, b, c] = self.triangles[tri];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area of a triangle (positive for counter-clockwise).
    pub fn signed_area(&self, tri: usize) -> T {
        signed_area(&self.triangle_coords(tri))
    }

    pub fn area(&self) -> T {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// All edges in order of first appearance.
    pub fn edges(&self) -> Vec<Edge> {
        let mut index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for l in 0..3 {
                let key = edge_key(tri[(l + 1) % 3], tri[(l + 2) % 3]);
                match index.get(&key) {
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.n_triangles < 2 {
                            edge.triangles[edge.n_triangles] = t;
                        }
                        edge.n_triangles += 1;
                    }
                    None => {
                        index.insert(key, edges.len());
                        edges.push(Edge {
                            vertices: key,
                            triangles: [t, usize::MAX],
                            n_triangles: 1,
                        });
                    }
                }
            }
        }
        edges
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        let mut used = vec![false; nv];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} references vertex {v} >= {nv}"
                    )));
                }
                used[v] = true;
            }
            if !(self.signed_area(t) > T::zero()) {
                return Err(Error::InvalidMesh(format!("triangle {t} has non-positive area")));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not used by any triangle")));
        }
        let edges = self.edges();
        let mut n_boundary = 0;
        for e in &edges {
            match e.n_triangles {
                1 => {
                    n_boundary += 1;
                    if self.boundary_tag(e.vertices[0], e.vertices[1]).is_none() {
                        return Err(Error::InvalidMesh(format!(
                            "boundary edge {:?} carries no boundary tag",
                            e.vertices
                        )));
                    }
                }
                2 => {
                    if self.boundary_tag(e.vertices[0], e.vertices[1]).is_some() {
                        return Err(Error::InvalidMesh(format!("interior edge {:?} is tagged", e.vertices)));
                    }
                }
                n => {
                    return Err(Error::InvalidMesh(format!(
                        "edge {:?} is shared by {n} triangles",
                        e.vertices
                    )))
                }
            }
        }
        if n_boundary != self.tags.len() {
            return Err(Error::InvalidMesh("boundary tags reference non-boundary edges".into()));
        }
        Ok(())
    }

    /// Same connectivity and tags with new vertex positions.
    pub(crate) fn with_vertices(&self, vertices: Vec<[T; 2]>) -> Self {
        Self {
            vertices,
            triangles: self.triangles.clone(),
            boundary: self.boundary.clone(),
            tags: self.tags.clone(),
        }
    }

    /// Replaces every boundary tag.
    pub fn retag(&self, mut tag: impl FnMut(&[[T; 2]; 2]) -> BoundaryTag) -> Self {
        let boundary: Vec<BoundaryEdge> = self
            .boundary
            .iter()
            .map(|e| BoundaryEdge {
                vertices: e.vertices,
                tag: tag(&[self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]]),
            })
            .collect();
        let tags = boundary
            .iter()
            .map(|e| (edge_key(e.vertices[0], e.vertices[1]), e.tag))
            .collect();
        Self {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            boundary,
            tags,
        }
    }
}

pub fn signed_area<T: Real>(p: &[[T; 2]; 3]) -> T {
    let ux = p[1][0] - p[0][0];
    let uy = p[1][1] - p[0][1];
    let vx = p[2][0] - p[0][0];
    let vy = p[2][1] - p[0][1];
    (ux * vy - uy * vx) / T::lit(2.0)
}

/// Uniform triangulation of the unit square with `2 nx^2` triangles.
///
/// Every cell square is cut along its `(i, j)-(i+1, j+1)` diagonal. Edges on
/// `x1 = 1` are tagged Neumann, all other boundary edges Dirichlet.
pub fn triangulate_unit_square<T: Real>(nx: usize) -> Result<SpatialMesh<T>> {
    if nx == 0 {
        return Err(Error::Config("nx must be at least 1".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let h = T::one() / T::of(nx);
    let mut vertices = Vec::with_capacity((nx + 1) * (nx + 1));
    for j in 0..=nx {
        for i in 0..=nx {
            let x = if i == nx { T::one() } else { T::of(i) * h };
            let y = if j == nx { T::one() } else { T::of(j) * h };
            vertices.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * nx);
    for j in 0..nx {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut boundary = Vec::with_capacity(4 * nx);
    for i in 0..nx {
        boundary.push(BoundaryEdge {
            vertices: [id(i, 0), id(i + 1, 0)],
            tag: BoundaryTag::Dirichlet,
        });
        boundary.push(BoundaryEdge {
            vertices: [id(i, nx), id(i + 1, nx)],
            tag: BoundaryTag::Dirichlet,
        });
        boundary.push(BoundaryEdge {
            vertices: [id(0, i), id(0, i + 1)],
            tag: BoundaryTag::Dirichlet,
        });
        boundary.push(BoundaryEdge {
            vertices: [id(nx, i), id(nx, i + 1)],
            tag: BoundaryTag::Neumann,
        });
    }
    SpatialMesh::new(vertices, triangles, boundary)
}

/// Motion of the mesh vertices, given in terms of their reference positions.
pub trait DomainMotion<T: Real>: Send + Sync {
    fn position(&self, reference: [T; 2], t: T) -> [T; 2];
    fn grid_velocity(&self, reference: [T; 2], t: T) -> [T; 2];
}

/// The identity motion.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticMotion;

impl<T: Real> DomainMotion<T> for StaticMotion {
    fn position(&self, reference: [T; 2], _t: T) -> [T; 2] {
        reference
    }
    fn grid_velocity(&self, _reference: [T; 2], _t: T) -> [T; 2] {
        [T::zero(); 2]
    }
}

/// Deformation of the unit square used by the convergence study:
/// `x_i = x_i^0 + A (1 - x_i^0) sin(2 pi (1/2 - x_i^* + t))` with
/// `x^* = (x_2^0, x_1^0)`.
#[derive(Debug, Clone, Copy)]
pub struct SinusoidalMotion {
    pub amplitude: f64,
}

impl Default for SinusoidalMotion {
    fn default() -> Self {
        Self { amplitude: 0.05 }
    }
}

impl<T: Real> DomainMotion<T> for SinusoidalMotion {
    fn position(&self, x0: [T; 2], t: T) -> [T; 2] {
        let a = T::lit(self.amplitude);
        let two_pi = T::TAU();
        let half = T::lit(0.5);
        let star = [x0[1], x0[0]];
        [
            x0[0] + a * (T::one() - x0[0]) * (two_pi * (half - star[0] + t)).sin(),
            x0[1] + a * (T::one() - x0[1]) * (two_pi * (half - star[1] + t)).sin(),
        ]
    }

    fn grid_velocity(&self, x0: [T; 2], t: T) -> [T; 2] {
        let a = T::lit(self.amplitude);
        let two_pi = T::TAU();
        let half = T::lit(0.5);
        let star = [x0[1], x0[0]];
        [
            a * (T::one() - x0[0]) * two_pi * (two_pi * (half - star[0] + t)).cos(),
            a * (T::one() - x0[1]) * two_pi * (two_pi * (half - star[1] + t)).cos(),
        ]
    }
}

/// Positions the reference mesh according to `motion` at time `t`.
pub fn move_mesh<T: Real>(reference: &SpatialMesh<T>, motion: &dyn DomainMotion<T>, t: T) -> Result<SpatialMesh<T>> {
    let vertices = reference.vertices.iter().map(|&x| motion.position(x, t)).collect();
    let moved = reference.with_vertices(vertices);
    for tri in 0..moved.n_triangles() {
        if !(moved.signed_area(tri) > T::zero()) {
            return Err(Error::InvalidMotion {
                time: t.f64(),
                triangle: tri,
            });
        }
    }
    Ok(moved)
}
