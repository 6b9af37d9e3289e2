//! Numbering of cell and facet unknowns of one slab.
//!
//! Cell vector `W = [U, P]`, facet vector `W̄ = [Ū, P̄]`. Velocity unknowns
//! are component-major inside each cell or facet. Facet velocity on
//! Dirichlet facets is prescribed and excluded from `Ū`; facet pressure
//! lives on every Q-facet.

use crate::element::ReferenceElement;
use crate::mesh::{FacetKind, SlabMesh};
use crate::scalar::Real;

/// Where a local facet velocity unknown lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetDof {
    /// Index into the global facet vector `W̄`.
    Free(usize),
    /// Index into the prescribed Dirichlet values.
    Constrained(usize),
}

impl FacetDof {
    /// The same kind of unknown `i` slots further on.
    pub fn offset(self, i: usize) -> Self {
        match self {
            FacetDof::Free(o) => FacetDof::Free(o + i),
            FacetDof::Constrained(o) => FacetDof::Constrained(o + i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofLayout {
    k: usize,
    nb3: usize,
    np3: usize,
    nb2: usize,
    n_cells: usize,
    q_facets: Vec<usize>,
    q_index: Vec<Option<usize>>,
    ubar_slot: Vec<Option<usize>>,
    dirichlet_slot: Vec<Option<usize>>,
    n_free_ubar_facets: usize,
    n_dirichlet_facets: usize,
}

impl DofLayout {
    pub fn new<T: Real>(slab: &SlabMesh<T>, reference: &ReferenceElement<T>) -> Self {
        let q_facets = slab.q_facets().to_vec();
        let mut q_index = vec![None; slab.facets().len()];
        let mut ubar_slot = Vec::with_capacity(q_facets.len());
        let mut dirichlet_slot = Vec::with_capacity(q_facets.len());
        let (mut free, mut fixed) = (0, 0);
        for (q, &f) in q_facets.iter().enumerate() {
            q_index[f] = Some(q);
            if slab.facet(f).kind == FacetKind::Dirichlet {
                ubar_slot.push(None);
                dirichlet_slot.push(Some(fixed));
                fixed += 1;
            } else {
                ubar_slot.push(Some(free));
                dirichlet_slot.push(None);
                free += 1;
            }
        }
        Self {
            k: reference.degree(),
            nb3: reference.n_velocity(),
            np3: reference.n_pressure(),
            nb2: reference.n_facet(),
            n_cells: slab.n_cells(),
            q_facets,
            q_index,
            ubar_slot,
            dirichlet_slot,
            n_free_ubar_facets: free,
            n_dirichlet_facets: fixed,
        }
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_velocity_basis(&self) -> usize {
        self.nb3
    }

    pub fn n_pressure_basis(&self) -> usize {
        self.np3
    }

    pub fn n_facet_basis(&self) -> usize {
        self.nb2
    }

    /// Length of `U`.
    pub fn n_u(&self) -> usize {
        2 * self.nb3 * self.n_cells
    }

    /// Length of `P`.
    pub fn n_p(&self) -> usize {
        self.np3 * self.n_cells
    }

    /// Length of `W`.
    pub fn n_cell_dofs(&self) -> usize {
        self.n_u() + self.n_p()
    }

    /// Length of `Ū` (free facet velocity unknowns).
    pub fn n_ubar(&self) -> usize {
        2 * self.nb2 * self.n_free_ubar_facets
    }

    /// Length of `P̄`.
    pub fn n_pbar(&self) -> usize {
        self.nb2 * self.q_facets.len()
    }

    /// Length of `W̄`.
    pub fn n_facet_dofs(&self) -> usize {
        self.n_ubar() + self.n_pbar()
    }

    /// Number of prescribed Dirichlet facet values.
    pub fn n_constrained(&self) -> usize {
        2 * self.nb2 * self.n_dirichlet_facets
    }

    pub fn q_facets(&self) -> &[usize] {
        &self.q_facets
    }

    /// Position of a facet among the Q-facets.
    pub fn q_index(&self, facet: usize) -> Option<usize> {
        self.q_index[facet]
    }

    /// Offset of `u_c` of a cell inside `W`.
    pub fn cell_velocity(&self, cell: usize, component: usize) -> usize {
        (2 * cell + component) * self.nb3
    }

    /// Offset of the cell pressure inside `W`.
    pub fn cell_pressure(&self, cell: usize) -> usize {
        self.n_u() + cell * self.np3
    }

    /// Offset of `ū_c` of a Q-facet.
    pub fn facet_velocity(&self, q: usize, component: usize) -> FacetDof {
        match (self.ubar_slot[q], self.dirichlet_slot[q]) {
            (Some(s), _) => FacetDof::Free((2 * s + component) * self.nb2),
            (None, Some(s)) => FacetDof::Constrained((2 * s + component) * self.nb2),
            (None, None) => unreachable!("every Q-facet is free or constrained"),
        }
    }

    /// Offset of the facet pressure inside `W̄`.
    pub fn facet_pressure(&self, q: usize) -> usize {
        self.n_ubar() + q * self.nb2
    }

    pub fn is_constrained(&self, q: usize) -> bool {
        self.dirichlet_slot[q].is_some()
    }

    /// Global locations of the local facet unknowns of a cell, ordered
    /// `[ū_1, ū_2, p̄]` per Q-face in the given face order.
    pub fn local_facet_dofs(&self, faces: &[usize]) -> Vec<FacetDof> {
        let mut out = Vec::with_capacity(faces.len() * 3 * self.nb2);
        for &f in faces {
            let q = self.q_index[f].expect("Q-facet");
            for c in 0..2 {
                let base = self.facet_velocity(q, c);
                out.extend((0..self.nb2).map(|i| base.offset(i)));
            }
            let p = self.facet_pressure(q);
            out.extend((0..self.nb2).map(|i| FacetDof::Free(p + i)));
        }
        out
    }

    /// Global locations of the local cell unknowns `[u_1, u_2, p]`.
    pub fn local_cell_dofs(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        let u = self.cell_velocity(cell, 0)..self.cell_velocity(cell, 0) + 2 * self.nb3;
        let p = self.cell_pressure(cell)..self.cell_pressure(cell) + self.np3;
        u.chain(p)
    }
}

/// L2 projection of `data` onto `[P_k]^2` of every Dirichlet facet.
///
/// The facet basis is orthonormal on the reference triangle, so the facet
/// mass matrix is `2 |S| I` and the projection reduces to weighted moments.
pub fn interpolate_dirichlet<T: Real>(
    layout: &DofLayout,
    slab: &SlabMesh<T>,
    reference: &ReferenceElement<T>,
    data: &dyn Fn([T; 3]) -> [T; 2],
) -> Vec<T> {
    let mut values = vec![T::zero(); layout.n_constrained()];
    let nb2 = layout.n_facet_basis();
    let rule = reference.facet_rule();
    for (q, &f) in layout.q_facets().iter().enumerate() {
        if !layout.is_constrained(q) {
            continue;
        }
        let samples: Vec<([T; 2], T)> = rule
            .iter()
            .map(|(s, w)| (data(slab.facet_point(f, [s[0], s[1]])), w))
            .collect();
        for c in 0..2 {
            let FacetDof::Constrained(o) = layout.facet_velocity(q, c) else {
                unreachable!()
            };
            for i in 0..nb2 {
                values[o + i] = samples
                    .iter()
                    .enumerate()
                    .map(|(qp, (u, w))| *w * reference.chi()[qp][i] * u[c])
                    .sum();
            }
        }
    }
    values
}
