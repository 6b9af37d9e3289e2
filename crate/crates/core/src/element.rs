//! Reference tables and per-cell quadrature geometry shared by the weak
//! forms, the DOF projections and the error norms.

use crate::basis::{make_basis, AffineMap, BasisSet, MAX_DEGREE};
use crate::error::{Error, Result};
use crate::mesh::{FacetKind, SlabMesh};
use crate::quadrature::{make_quadrature, QuadratureRule};
use crate::scalar::Real;

/// Smallest supported velocity degree.
pub const MIN_VELOCITY_DEGREE: usize = 1;

/// Reference-simplex bases and quadrature for one velocity degree `k`.
///
/// Cell velocity is `P_k` in space-time, cell pressure `P_{k-1}`, facet
/// velocity and facet pressure `P_k` on the facet's reference triangle.
#[derive(Debug, Clone)]
pub struct ReferenceElement<T> {
    k: usize,
    velocity: BasisSet<T>,
    pressure: BasisSet<T>,
    facet: BasisSet<T>,
    cell_rule: QuadratureRule<T>,
    facet_rule: QuadratureRule<T>,
    phi: Vec<Vec<T>>,
    dphi: Vec<Vec<[T; 3]>>,
    psi: Vec<Vec<T>>,
    chi: Vec<Vec<T>>,
}

impl<T: Real> ReferenceElement<T> {
    /// Tables with quadrature exact to degree `3k + 1` on cells and facets.
    pub fn new(k: usize) -> Result<Self> {
        Self::with_exactness(k, 3 * k + 1)
    }

    pub fn with_exactness(k: usize, exactness: usize) -> Result<Self> {
        if !(MIN_VELOCITY_DEGREE..=MAX_DEGREE).contains(&k) {
            return Err(Error::UnsupportedDegree {
                degree: k,
                min: MIN_VELOCITY_DEGREE,
                max: MAX_DEGREE,
            });
        }
        let velocity = make_basis::<T>(k, 3)?;
        let pressure = make_basis::<T>(k - 1, 3)?;
        let facet = make_basis::<T>(k, 2)?;
        let cell_rule = make_quadrature::<T>(3, exactness)?;
        let facet_rule = make_quadrature::<T>(2, exactness)?;
        let nb = velocity.len();
        let mut phi = Vec::with_capacity(cell_rule.len());
        let mut dphi = Vec::with_capacity(cell_rule.len());
        for p in cell_rule.points() {
            let mut v = vec![T::zero(); nb];
            let mut g = vec![[T::zero(); 3]; nb];
            velocity.eval_grad_into(p, &mut v, &mut g);
            phi.push(v);
            dphi.push(g);
        }
        let psi = cell_rule.points().iter().map(|p| pressure.eval(p)).collect();
        let chi = facet_rule.points().iter().map(|p| facet.eval(p)).collect();
        Ok(Self {
            k,
            velocity,
            pressure,
            facet,
            cell_rule,
            facet_rule,
            phi,
            dphi,
            psi,
            chi,
        })
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn velocity_basis(&self) -> &BasisSet<T> {
        &self.velocity
    }

    pub fn pressure_basis(&self) -> &BasisSet<T> {
        &self.pressure
    }

    pub fn facet_basis(&self) -> &BasisSet<T> {
        &self.facet
    }

    pub fn cell_rule(&self) -> &QuadratureRule<T> {
        &self.cell_rule
    }

    pub fn facet_rule(&self) -> &QuadratureRule<T> {
        &self.facet_rule
    }

    /// Scalar velocity basis size `C(k+3, 3)`.
    pub fn n_velocity(&self) -> usize {
        self.velocity.len()
    }

    /// Cell pressure basis size `C(k+2, 3)`.
    pub fn n_pressure(&self) -> usize {
        self.pressure.len()
    }

    /// Facet basis size `C(k+2, 2)`.
    pub fn n_facet(&self) -> usize {
        self.facet.len()
    }

    /// Cell unknowns per cell: two velocity components and the pressure.
    pub fn n_cell_dofs(&self) -> usize {
        2 * self.n_velocity() + self.n_pressure()
    }

    /// Facet unknowns per Q-facet: two velocity components and the pressure.
    pub fn n_facet_dofs(&self) -> usize {
        3 * self.n_facet()
    }

    /// Velocity basis at cell quadrature points, `[q][a]`.
    pub fn phi(&self) -> &[Vec<T>] {
        &self.phi
    }

    /// Reference gradients of the velocity basis, `[q][a]`.
    pub fn dphi(&self) -> &[Vec<[T; 3]>] {
        &self.dphi
    }

    pub fn psi(&self) -> &[Vec<T>] {
        &self.psi
    }

    /// Facet basis at facet quadrature points, `[q][a]`.
    pub fn chi(&self) -> &[Vec<T>] {
        &self.chi
    }
}

/// Quadrature data of one face of a cell.
#[derive(Debug, Clone)]
pub struct FaceData<T> {
    pub local_face: usize,
    pub facet: usize,
    pub kind: FacetKind,
    /// Outward space-time unit normal seen from the cell.
    pub normal: [T; 3],
    /// Physical points, ordered like the reference facet rule.
    pub points: Vec<[T; 3]>,
    /// Quadrature weights times the facet Jacobian.
    pub jw: Vec<T>,
    /// Cell velocity basis at the points, `[q][a]`.
    pub phi: Vec<Vec<T>>,
    /// Physical space-time gradients of the cell velocity basis.
    pub dphi: Vec<Vec<[T; 3]>>,
    /// Grid velocity at the points (Q-facets only; zero otherwise).
    pub grid_velocity: Vec<[T; 2]>,
}

/// Quadrature geometry of one space-time cell.
#[derive(Debug, Clone)]
pub struct CellGeometry<T> {
    pub cell: usize,
    pub map: AffineMap<T>,
    pub diameter: T,
    /// Smallest altitude `3 |K| / max_F |F|`.
    pub min_altitude: T,
    pub points: Vec<[T; 3]>,
    pub jw: Vec<T>,
    /// Physical gradients of the velocity basis, `[q][a]`.
    pub dphi: Vec<Vec<[T; 3]>>,
    /// Q-faces in increasing local face order; this order fixes the local
    /// facet unknowns of the cell.
    pub q_faces: Vec<FaceData<T>>,
    pub bottom: Option<FaceData<T>>,
    pub top: Option<FaceData<T>>,
}

impl<T: Real> CellGeometry<T> {
    pub fn new(slab: &SlabMesh<T>, reference: &ReferenceElement<T>, cell: usize) -> Result<Self> {
        let map = AffineMap::from_vertices(&slab.cell_vertices(cell))?;
        let det = map.det().abs();
        let rule = reference.cell_rule();
        let points = rule.points().iter().map(|p| map.map(p)).collect();
        let jw = rule.weights().iter().map(|&w| w * det).collect();
        let dphi = reference
            .dphi()
            .iter()
            .map(|row| row.iter().map(|g| map.push_gradient(g)).collect())
            .collect();
        let mut q_faces = Vec::with_capacity(4);
        let mut bottom = None;
        let mut top = None;
        for (l, &fid) in slab.cell_facets(cell).iter().enumerate() {
            let face = face_data(slab, reference, &map, cell, l, fid);
            match face.kind {
                FacetKind::Bottom => bottom = Some(face),
                FacetKind::Top => top = Some(face),
                _ => q_faces.push(face),
            }
        }
        let max_face = slab
            .cell_facets(cell)
            .iter()
            .map(|&f| slab.facet(f).area)
            .fold(T::zero(), |m, a| m.max(a));
        Ok(Self {
            cell,
            map,
            diameter: slab.cell_diameter(cell),
            min_altitude: T::lit(3.0) * slab.cell_volume(cell) / max_face,
            points,
            jw,
            dphi,
            q_faces,
            bottom,
            top,
        })
    }
}

fn face_data<T: Real>(
    slab: &SlabMesh<T>,
    reference: &ReferenceElement<T>,
    map: &AffineMap<T>,
    cell: usize,
    local_face: usize,
    facet: usize,
) -> FaceData<T> {
    let f = slab.facet(facet);
    let side = f
        .sides
        .iter()
        .find(|s| s.cell == cell)
        .expect("facet adjacent to its cell");
    let rule = reference.facet_rule();
    let basis = reference.velocity_basis();
    let nb = basis.len();
    let two_area = f.area + f.area;
    let mut points = Vec::with_capacity(rule.len());
    let mut phi = Vec::with_capacity(rule.len());
    let mut dphi = Vec::with_capacity(rule.len());
    let mut grid_velocity = Vec::with_capacity(rule.len());
    for s in rule.points() {
        let x = slab.facet_point(facet, [s[0], s[1]]);
        let xi = map.inverse(&x);
        let mut v = vec![T::zero(); nb];
        let mut g = vec![[T::zero(); 3]; nb];
        basis.eval_grad_into(&xi, &mut v, &mut g);
        for gi in g.iter_mut() {
            *gi = map.push_gradient(gi);
        }
        points.push(x);
        phi.push(v);
        dphi.push(g);
        grid_velocity.push(if f.kind.is_q() {
            slab.grid_velocity(facet, [s[0], s[1]])
        } else {
            [T::zero(); 2]
        });
    }
    FaceData {
        local_face,
        facet,
        kind: f.kind,
        normal: side.normal,
        points,
        jw: rule.weights().iter().map(|&w| w * two_area).collect(),
        phi,
        dphi,
        grid_velocity,
    }
}
