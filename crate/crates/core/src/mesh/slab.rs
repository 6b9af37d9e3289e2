use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::spatial::{BoundaryTag, SpatialMesh};
use crate::basis::det3;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative volume below which a space-time cell counts as degenerate.
pub const VOLUME_TOLERANCE: f64 = 1e-12;

/// Classification of a facet of the space-time slab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FacetKind {
    /// All vertices at `t^n`; outward normal `(-1, 0, 0)`.
    Bottom,
    /// All vertices at `t^{n+1}`; outward normal `(1, 0, 0)`.
    Top,
    /// Q-facet shared by two cells.
    Interior,
    /// Q-facet on the Dirichlet part of the boundary.
    Dirichlet,
    /// Q-facet on the Neumann part of the boundary.
    Neumann,
}

impl FacetKind {
    /// Facets with `|n_t| != 1`, the ones carrying facet unknowns.
    pub fn is_q(self) -> bool {
        !matches!(self, FacetKind::Bottom | FacetKind::Top)
    }

    pub fn is_boundary(self) -> bool {
        matches!(self, FacetKind::Dirichlet | FacetKind::Neumann)
    }
}

/// One cell's view of a facet.
#[derive(Debug, Clone, Copy)]
pub struct FacetSide<T> {
    pub cell: usize,
    /// Local face index in the cell (the face opposite local vertex `local_face`).
    pub local_face: usize,
    /// Outward unit space-time normal `(n_t, n_1, n_2)` seen from `cell`.
    pub normal: [T; 3],
}

#[derive(Debug, Clone)]
pub struct Facet<T> {
    /// Space-time vertex indices, sorted ascending. They define the facet's
    /// reference parametrisation shared by both adjacent cells.
    pub vertices: [usize; 3],
    pub kind: FacetKind,
    pub sides: Vec<FacetSide<T>>,
    pub area: T,
}

/// Normal, measure and motion data of one facet.
#[derive(Debug, Clone)]
pub struct FacetGeometry<T> {
    pub kind: FacetKind,
    pub normals: Vec<[T; 3]>,
    pub area: T,
    /// Grid velocity at the facet centroid.
    pub grid_velocity: [T; 2],
}

/// Tetrahedral mesh of one space-time slab `(t^n, t^{n+1}) x Omega(t)`.
///
/// Space-time vertex `i < n_spatial` is spatial vertex `i` at `t^n`; vertex
/// `n_spatial + i` is the same spatial vertex at `t^{n+1}`. Vertex
/// trajectories are linear in time inside the slab.
#[derive(Debug, Clone)]
pub struct SlabMesh<T> {
    t0: T,
    t1: T,
    n_spatial: usize,
    vertices: Vec<[T; 3]>,
    vertex_velocity: Vec<[T; 2]>,
    cells: Vec<[usize; 4]>,
    cell_triangle: Vec<usize>,
    cell_facets: Vec<[usize; 4]>,
    facets: Vec<Facet<T>>,
    bottom_of_triangle: Vec<usize>,
    top_of_triangle: Vec<usize>,
    q_facets: Vec<usize>,
    prism_volumes: Vec<T>,
}

/// Extrudes a moving triangulation into a slab of tetrahedra.
///
/// Each prism is cut into three tetrahedra. Every quadrilateral side face is
/// split along the diagonal leaving its smallest global vertex index, so
/// neighbouring prisms see matching triangles.
pub fn extrude_slab<T: Real>(bottom: &SpatialMesh<T>, top: &SpatialMesh<T>, t_n: T, t_np1: T) -> Result<SlabMesh<T>> {
    if !(t_np1 > t_n) {
        return Err(Error::Config("slab end time must exceed start time".into()));
    }
    if bottom.triangles() != top.triangles() || bottom.n_vertices() != top.n_vertices() {
        return Err(Error::InvalidMesh(
            "bottom and top meshes differ in connectivity".into(),
        ));
    }
    let nv = bottom.n_vertices();
    let dt = t_np1 - t_n;
    let mut vertices = Vec::with_capacity(2 * nv);
    vertices.extend(bottom.vertices().iter().map(|x| [t_n, x[0], x[1]]));
    vertices.extend(top.vertices().iter().map(|x| [t_np1, x[0], x[1]]));
    let vertex_velocity = bottom
        .vertices()
        .iter()
        .zip(top.vertices())
        .map(|(a, b)| [(b[0] - a[0]) / dt, (b[1] - a[1]) / dt])
        .collect();

    let mut cells = Vec::with_capacity(3 * bottom.n_triangles());
    let mut cell_triangle = Vec::with_capacity(3 * bottom.n_triangles());
    let mut prism_volumes = Vec::with_capacity(bottom.n_triangles());
    for (tri, &t) in bottom.triangles().iter().enumerate() {
        let mut s = t;
        s.sort_unstable();
        let (b0, b1, b2) = (s[0], s[1], s[2]);
        let (t0, t1, t2) = (s[0] + nv, s[1] + nv, s[2] + nv);
        let prism = prism_volume(&vertices, t, nv);
        prism_volumes.push(prism);
        for mut tet in [[b0, b1, b2, t2], [b0, b1, t1, t2], [b0, t0, t1, t2]] {
            let mut vol = tet_volume(&vertices, &tet);
            if vol < T::zero() {
                tet.swap(2, 3);
                vol = -vol;
            }
            if !(vol > T::lit(VOLUME_TOLERANCE) * prism.abs()) {
                return Err(Error::DegenerateCell {
                    cell: cells.len(),
                    volume: vol.f64(),
                });
            }
            cells.push(tet);
            cell_triangle.push(tri);
        }
    }

    let mut slab = SlabMesh {
        t0: t_n,
        t1: t_np1,
        n_spatial: nv,
        vertices,
        vertex_velocity,
        cells,
        cell_triangle,
        cell_facets: Vec::new(),
        facets: Vec::new(),
        bottom_of_triangle: Vec::new(),
        top_of_triangle: Vec::new(),
        q_facets: Vec::new(),
        prism_volumes,
    };
    slab.build_facets();
    classify_facets(&mut slab, bottom)?;
    Ok(slab)
}

/// Assigns facet kinds from the time levels of their vertices and the
/// boundary tags of the spatial edges they were extruded from.
pub fn classify_facets<T: Real>(slab: &mut SlabMesh<T>, tags: &SpatialMesh<T>) -> Result<()> {
    let nv = slab.n_spatial;
    let n_tri = slab.cell_triangle.iter().copied().max().map_or(0, |m| m + 1);
    slab.bottom_of_triangle = vec![usize::MAX; n_tri];
    slab.top_of_triangle = vec![usize::MAX; n_tri];
    slab.q_facets.clear();
    for (id, facet) in slab.facets.iter_mut().enumerate() {
        let n_bottom = facet.vertices.iter().filter(|&&v| v < nv).count();
        let n_sides = facet.sides.len();
        if n_sides == 0 || n_sides > 2 {
            return Err(Error::InconsistentTopology {
                facet: id,
                cells: n_sides,
            });
        }
        facet.kind = match n_bottom {
            3 | 0 => {
                if n_sides != 1 {
                    return Err(Error::InconsistentTopology {
                        facet: id,
                        cells: n_sides,
                    });
                }
                let tri = slab.cell_triangle[facet.sides[0].cell];
                let (kind, nt) = if n_bottom == 3 {
                    slab.bottom_of_triangle[tri] = id;
                    (FacetKind::Bottom, -T::one())
                } else {
                    slab.top_of_triangle[tri] = id;
                    (FacetKind::Top, T::one())
                };
                facet.sides[0].normal = [nt, T::zero(), T::zero()];
                kind
            }
            _ if n_sides == 2 => FacetKind::Interior,
            _ => {
                let mut spatial: Vec<usize> = facet.vertices.iter().map(|v| v % nv).collect();
                spatial.sort_unstable();
                spatial.dedup();
                let tag = if spatial.len() == 2 {
                    tags.boundary_tag(spatial[0], spatial[1])
                } else {
                    None
                };
                match tag {
                    Some(BoundaryTag::Dirichlet) => FacetKind::Dirichlet,
                    Some(BoundaryTag::Neumann) => FacetKind::Neumann,
                    None => {
                        return Err(Error::InconsistentTopology {
                            facet: id,
                            cells: n_sides,
                        })
                    }
                }
            }
        };
        if facet.kind.is_q() {
            slab.q_facets.push(id);
        }
    }
    if slab
        .bottom_of_triangle
        .iter()
        .chain(&slab.top_of_triangle)
        .any(|&f| f == usize::MAX)
    {
        return Err(Error::InvalidMesh("a prism lacks a bottom or top facet".into()));
    }
    Ok(())
}

fn tet_volume<T: Real>(verts: &[[T; 3]], tet: &[usize; 4]) -> T {
    let p0 = verts[tet[0]];
    let mut j = [[T::zero(); 3]; 3];
    for c in 0..3 {
        let p = verts[tet[c + 1]];
        for r in 0..3 {
            j[r][c] = p[r] - p0[r];
        }
    }
    det3(&j) / T::lit(6.0)
}

/// Volume of the triangulated prism over spatial triangle `tri` by the
/// divergence theorem, `sum_faces det(X0, X1, X2) / 6` with outward faces.
fn prism_volume<T: Real>(verts: &[[T; 3]], tri: [usize; 3], nv: usize) -> T {
    let mut s = tri;
    s.sort_unstable();
    let [b0, b1, b2] = s;
    let [t0, t1, t2] = [b0 + nv, b1 + nv, b2 + nv];
    let faces = [
        [b0, b1, b2],
        [t0, t1, t2],
        // side (0,1): diagonal b0-t1
        [b0, b1, t1],
        [b0, t1, t0],
        // side (1,2): diagonal b1-t2
        [b1, b2, t2],
        [b1, t2, t1],
        // side (0,2): diagonal b0-t2
        [b0, b2, t2],
        [b0, t2, t0],
    ];
    let mut centroid = [T::zero(); 3];
    for &v in &[b0, b1, b2, t0, t1, t2] {
        for d in 0..3 {
            centroid[d] += verts[v][d] / T::of(6);
        }
    }
    let mut vol = T::zero();
    for f in faces {
        let p = [verts[f[0]], verts[f[1]], verts[f[2]]];
        let rel = |q: [T; 3]| [q[0] - centroid[0], q[1] - centroid[1], q[2] - centroid[2]];
        let (a, b, c) = (rel(p[0]), rel(p[1]), rel(p[2]));
        let d = det3(&[[a[0], b[0], c[0]], [a[1], b[1], c[1]], [a[2], b[2], c[2]]]) / T::lit(6.0);
        // Orientation of each face is fixed by its position relative to the
        // centroid; the prism is star-shaped with respect to it.
        vol += d.abs();
    }
    vol
}

fn cross<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn sub<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl<T: Real> SlabMesh<T> {
    fn build_facets(&mut self) {
        let mut index: HashMap<[usize; 3], usize> = HashMap::new();
        let mut facets: Vec<Facet<T>> = Vec::new();
        let mut cell_facets = Vec::with_capacity(self.cells.len());
        for (c, cell) in self.cells.iter().enumerate() {
            let mut ids = [0usize; 4];
            for (l, id) in ids.iter_mut().enumerate() {
                let mut key = [cell[(l + 1) % 4], cell[(l + 2) % 4], cell[(l + 3) % 4]];
                key.sort_unstable();
                let p = key.map(|v| self.vertices[v]);
                let raw = cross(sub(p[1], p[0]), sub(p[2], p[0]));
                let len = dot3(raw, raw).sqrt();
                let mut normal = raw.map(|v| v / len);
                if dot3(normal, sub(p[0], self.vertices[cell[l]])) < T::zero() {
                    normal = normal.map(|v| -v);
                }
                let side = FacetSide {
                    cell: c,
                    local_face: l,
                    normal,
                };
                *id = *index.entry(key).or_insert_with(|| {
                    facets.push(Facet {
                        vertices: key,
                        kind: FacetKind::Interior,
                        sides: Vec::with_capacity(2),
                        area: len / T::lit(2.0),
                    });
                    facets.len() - 1
                });
                facets[*id].sides.push(side);
            }
            cell_facets.push(ids);
        }
        self.facets = facets;
        self.cell_facets = cell_facets;
    }

    pub fn time_interval(&self) -> (T, T) {
        (self.t0, self.t1)
    }

    pub fn dt(&self) -> T {
        self.t1 - self.t0
    }

    pub fn n_spatial_vertices(&self) -> usize {
        self.n_spatial
    }

    pub fn vertices(&self) -> &[[T; 3]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 4]] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_vertices(&self, cell: usize) -> [[T; 3]; 4] {
        self.cells[cell].map(|v| self.vertices[v])
    }

    /// Spatial triangle the cell was cut from.
    pub fn cell_triangle(&self, cell: usize) -> usize {
        self.cell_triangle[cell]
    }

    /// Facet ids of a cell, indexed by local face.
    pub fn cell_facets(&self, cell: usize) -> &[usize; 4] {
        &self.cell_facets[cell]
    }

    pub fn facets(&self) -> &[Facet<T>] {
        &self.facets
    }

    pub fn facet(&self, id: usize) -> &Facet<T> {
        &self.facets[id]
    }

    /// Ids of all Q-facets in ascending order.
    pub fn q_facets(&self) -> &[usize] {
        &self.q_facets
    }

    pub fn bottom_facet(&self, triangle: usize) -> usize {
        self.bottom_of_triangle[triangle]
    }

    pub fn top_facet(&self, triangle: usize) -> usize {
        self.top_of_triangle[triangle]
    }

    pub fn n_triangles(&self) -> usize {
        self.bottom_of_triangle.len()
    }

    pub fn has_neumann(&self) -> bool {
        self.facets.iter().any(|f| f.kind == FacetKind::Neumann)
    }

    pub fn cell_volume(&self, cell: usize) -> T {
        tet_volume(&self.vertices, &self.cells[cell])
    }

    /// Space-time diameter (largest vertex distance) of a cell.
    pub fn cell_diameter(&self, cell: usize) -> T {
        let v = self.cell_vertices(cell);
        let mut h = T::zero();
        for i in 0..4 {
            for j in i + 1..4 {
                let d = sub(v[i], v[j]);
                h = h.max(dot3(d, d).sqrt());
            }
        }
        h
    }

    /// Volumes of the triangulated prisms computed from their boundary.
    pub fn prism_volumes(&self) -> &[T] {
        &self.prism_volumes
    }

    /// Point of a facet at reference coordinates `s` of its sorted vertices.
    pub fn facet_point(&self, facet: usize, s: [T; 2]) -> [T; 3] {
        let [a, b, c] = self.facets[facet].vertices.map(|v| self.vertices[v]);
        let mut p = [T::zero(); 3];
        for d in 0..3 {
            p[d] = a[d] + s[0] * (b[d] - a[d]) + s[1] * (c[d] - a[d]);
        }
        p
    }

    pub fn facet_geometry(&self, facet: usize) -> FacetGeometry<T> {
        let f = &self.facets[facet];
        let third = T::one() / T::lit(3.0);
        FacetGeometry {
            kind: f.kind,
            normals: f.sides.iter().map(|s| s.normal).collect(),
            area: f.area,
            grid_velocity: self.grid_velocity(facet, [third, third]),
        }
    }

    /// Trajectory velocity of a space-time vertex.
    pub fn vertex_velocity(&self, vertex: usize) -> [T; 2] {
        self.vertex_velocity[vertex % self.n_spatial]
    }

    /// Grid velocity on a Q-facet at reference coordinates `s`.
    ///
    /// The velocity interpolated from the vertex trajectories is corrected
    /// along the spatial normal so that `n_t = -v_g . n` holds exactly on the
    /// flat facet. Facets containing a vertex trajectory (a vertical edge)
    /// need no correction: that trajectory's velocity already satisfies the
    /// identity. On bottom and top facets the interpolated velocity is
    /// returned as is.
    pub fn grid_velocity(&self, facet: usize, s: [T; 2]) -> [T; 2] {
        let f = &self.facets[facet];
        let w = [T::one() - s[0] - s[1], s[0], s[1]];
        let mut v = [T::zero(); 2];
        for (wi, &vid) in w.iter().zip(&f.vertices) {
            let vv = self.vertex_velocity(vid);
            v[0] += *wi * vv[0];
            v[1] += *wi * vv[1];
        }
        if !f.kind.is_q() {
            return v;
        }
        let n = f.sides[0].normal;
        let nn = n[1] * n[1] + n[2] * n[2];
        let defect = (n[0] + v[0] * n[1] + v[1] * n[2]) / nn;
        [v[0] - defect * n[1], v[1] - defect * n[2]]
    }

    /// Vertex-trajectory velocity of a vertical edge of the facet, if any.
    pub fn trajectory_velocity(&self, facet: usize) -> Option<[T; 2]> {
        let v = self.facets[facet].vertices;
        let nv = self.n_spatial;
        for i in 0..3 {
            for j in i + 1..3 {
                if v[i] % nv == v[j] % nv {
                    return Some(self.vertex_velocity(v[i]));
                }
            }
        }
        None
    }
}
