//! Helpers shared by the invariant and acceptance suites.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::Mat;
use rand::rngs::StdRng;
use rand::Rng;
use sthdg::dofs::FacetDof;
use sthdg::element::{CellGeometry, FaceData, ReferenceElement};
use sthdg::forms::{local_t, CellConvection, LocalIndex};
use sthdg::mesh::{
    extrude_slab, move_mesh, triangulate_unit_square, FacetKind, SinusoidalMotion, SlabMesh, SpatialMesh,
};
use sthdg::system::{Discretization, SlabSystem};

pub fn moving_slab(nx: usize, t0: f64, t1: f64, amplitude: f64) -> SlabMesh<f64> {
    moving_slab_of(&triangulate_unit_square::<f64>(nx).unwrap(), t0, t1, amplitude)
}

pub fn moving_slab_of(m: &SpatialMesh<f64>, t0: f64, t1: f64, amplitude: f64) -> SlabMesh<f64> {
    let motion = SinusoidalMotion { amplitude };
    let b = move_mesh(m, &motion, t0).unwrap();
    let t = move_mesh(m, &motion, t1).unwrap();
    extrude_slab(&b, &t, t0, t1).unwrap()
}

pub fn disc(slab: SlabMesh<f64>, k: usize) -> Discretization<f64> {
    Discretization::new(slab, Arc::new(ReferenceElement::new(k).unwrap())).unwrap()
}

pub fn uniform(rng: &mut StdRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

/// `max |a − b| / max |a|`.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Random polynomial `ψ(t, x1, x2)` of total degree `degree`.
pub struct StreamFunction {
    terms: Vec<([i32; 3], f64)>,
}

impl StreamFunction {
    pub fn random(rng: &mut StdRng, degree: usize) -> Self {
        let d = degree as i32;
        let mut terms = Vec::new();
        for a in 0..=d {
            for b in 0..=d - a {
                for c in 0..=d - a - b {
                    terms.push(([a, b, c], rng.random::<f64>() * 2.0 - 1.0));
                }
            }
        }
        Self { terms }
    }

    /// `(∂ψ/∂x2, −∂ψ/∂x1)`, smooth and divergence-free in space.
    pub fn velocity(&self, x: [f64; 3]) -> [f64; 2] {
        let mut u = [0.0; 2];
        for &([a, b, c], coef) in &self.terms {
            let t = x[0].powi(a);
            if c > 0 {
                u[0] += coef * t * x[1].powi(b) * c as f64 * x[2].powi(c - 1);
            }
            if b > 0 {
                u[1] -= coef * t * b as f64 * x[1].powi(b - 1) * x[2].powi(c);
            }
        }
        u
    }
}

/// Facet-basis coefficients of `f` on a face, the facet basis being
/// orthonormal on the reference triangle.
fn facet_projection(r: &ReferenceElement<f64>, face: &FaceData<f64>, f: &dyn Fn([f64; 3]) -> [f64; 2]) -> Vec<f64> {
    let nb2 = r.n_facet();
    let mut out = vec![0.0; 2 * nb2];
    for (q, &w) in r.facet_rule().weights().iter().enumerate() {
        let v = f(face.points[q]);
        for i in 0..nb2 {
            out[i] += w * r.chi()[q][i] * v[0];
            out[nb2 + i] += w * r.chi()[q][i] * v[1];
        }
    }
    out
}

/// Cell-basis coefficients `[f_1, f_2]` of `f`.
fn cell_projection(r: &ReferenceElement<f64>, g: &CellGeometry<f64>, f: &dyn Fn([f64; 3]) -> [f64; 2]) -> Vec<f64> {
    let nb = r.n_velocity();
    let det = g.map.det().abs();
    let mut out = vec![0.0; 2 * nb];
    for (q, &jw) in g.jw.iter().enumerate() {
        let v = f(g.points[q]);
        for a in 0..nb {
            out[a] += jw / det * r.phi()[q][a] * v[0];
            out[nb + a] += jw / det * r.phi()[q][a] * v[1];
        }
    }
    out
}

fn eval(coeffs: &[f64], basis: &[f64]) -> [f64; 2] {
    let n = basis.len();
    let dot = |c: &[f64]| c.iter().zip(basis).map(|(x, y)| x * y).sum::<f64>();
    [dot(&coeffs[..n]), dot(&coeffs[n..2 * n])]
}

/// Both sides of the energy identity of the convective form,
///
/// `t_h(u, w, u) = ½∫_top |u|² + ½∫_bottom |u|² + ½∫_Q |n_t + w·n| |u − ū|²
///                 + ½∫_Neumann |n_t + w̄·n| |ū|²`,
///
/// for random `u`, random single-valued `ū` vanishing on Dirichlet facets,
/// and an advecting field `w` that is a random constant (`stream_degree ==
/// None`) or the curl of a random stream function. `w` is represented
/// exactly in the cell and facet spaces.
pub fn energy_identity(d: &Discretization<f64>, rng: &mut StdRng, stream_degree: Option<usize>) -> (f64, f64) {
    let r = d.reference();
    let k = r.degree();
    let ix = LocalIndex::new(r);
    let (nb, nb2) = (ix.nb, ix.nb2);
    let w_field: Box<dyn Fn([f64; 3]) -> [f64; 2]> = match stream_degree {
        None => {
            let c = [rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0];
            Box::new(move |_| c)
        }
        Some(deg) => {
            assert!(deg <= k + 1, "the advecting field must be representable");
            let psi = StreamFunction::random(rng, deg);
            Box::new(move |x| psi.velocity(x))
        }
    };
    let mut ubar: HashMap<usize, Vec<f64>> = HashMap::new();
    for &f in d.slab().q_facets() {
        let v = if d.slab().facet(f).kind == FacetKind::Dirichlet {
            vec![0.0; 2 * nb2]
        } else {
            uniform(rng, 2 * nb2)
        };
        ubar.insert(f, v);
    }
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for cell in 0..d.slab().n_cells() {
        let g = d.cell_geometry(cell);
        let u = uniform(rng, 2 * nb);
        let conv = CellConvection {
            w: cell_projection(r, g, &w_field),
            wbar: g
                .q_faces
                .iter()
                .map(|face| facet_projection(r, face, &w_field))
                .collect(),
        };
        let blocks = local_t(r, g, Some(&conv));
        let mut x = vec![0.0; blocks.n_cell() + blocks.n_facet()];
        x[..2 * nb].copy_from_slice(&u);
        for (j, face) in g.q_faces.iter().enumerate() {
            let coeffs = &ubar[&face.facet];
            for c in 0..2 {
                for i in 0..nb2 {
                    x[blocks.n_cell() + ix.ubar(j, c, i)] = coeffs[c * nb2 + i];
                }
            }
        }
        lhs += blocks.pair(&x, &x);

        for face in g.top.iter().chain(&g.bottom) {
            for (q, &jw) in face.jw.iter().enumerate() {
                let v = eval(&u, &face.phi[q]);
                rhs += 0.5 * jw * (v[0] * v[0] + v[1] * v[1]);
            }
        }
        for face in &g.q_faces {
            let n = face.normal;
            let coeffs = &ubar[&face.facet];
            for (q, &jw) in face.jw.iter().enumerate() {
                let w = w_field(face.points[q]);
                let beta = n[0] + n[1] * w[0] + n[2] * w[1];
                let v = eval(&u, &face.phi[q]);
                let vb = eval(coeffs, &r.chi()[q]);
                rhs += 0.5 * jw * beta.abs() * ((v[0] - vb[0]).powi(2) + (v[1] - vb[1]).powi(2));
                if face.kind == FacetKind::Neumann {
                    rhs += 0.5 * jw * beta.abs() * (vb[0] * vb[0] + vb[1] * vb[1]);
                }
            }
        }
    }
    (lhs, rhs)
}

/// Uncondensed global system with Dirichlet values moved to the right and
/// pinned unknowns replaced by identity rows, solved densely.
pub fn dense_oracle(sys: &SlabSystem<f64>, d: &Discretization<f64>) -> (Vec<f64>, Vec<f64>) {
    let (nw, nf) = (sys.n_cell_dofs(), sys.n_facet_dofs());
    let n = nw + nf;
    let mut m = Mat::<f64>::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for cell in 0..sys.n_cells() {
        let b = sys.cell_blocks(cell);
        let rows = sys.cell_dofs(cell);
        let facets = d.facet_dofs(cell);
        for (i, &gi) in rows.iter().enumerate() {
            rhs[gi] += b.f[i];
            for (j, &gj) in rows.iter().enumerate() {
                m[(gi, gj)] += b.a[(i, j)];
            }
            for (j, fd) in facets.iter().enumerate() {
                match *fd {
                    FacetDof::Free(gj) => m[(gi, nw + gj)] += b.b[(i, j)],
                    FacetDof::Constrained(c) => rhs[gi] -= b.b[(i, j)] * sys.dirichlet()[c],
                }
            }
        }
        for (i, fi) in facets.iter().enumerate() {
            let FacetDof::Free(gi) = *fi else { continue };
            rhs[nw + gi] += b.g[i];
            for (j, &gj) in rows.iter().enumerate() {
                m[(nw + gi, gj)] += b.c[(i, j)];
            }
            for (j, fd) in facets.iter().enumerate() {
                match *fd {
                    FacetDof::Free(gj) => m[(nw + gi, nw + gj)] += b.d[(i, j)],
                    FacetDof::Constrained(c) => rhs[nw + gi] -= b.d[(i, j)] * sys.dirichlet()[c],
                }
            }
        }
    }
    for &p in sys.pinned() {
        for j in 0..n {
            m[(nw + p, j)] = 0.0;
            m[(j, nw + p)] = 0.0;
        }
        m[(nw + p, nw + p)] = 1.0;
        rhs[nw + p] = 0.0;
    }
    let x = m.full_piv_lu().solve(Mat::from_fn(n, 1, |i, _| rhs[i]));
    let x: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    (x[..nw].to_vec(), x[nw..].to_vec())
}
