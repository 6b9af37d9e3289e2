//! Cell-local blocks of the space-time HDG weak form.
//!
//! Local cell unknowns are ordered `[u_1, u_2, p]`. Local facet unknowns
//! are ordered `[ū_1, ū_2, p̄]` per Q-face, Q-faces in the order of
//! [`CellGeometry::q_faces`]. Rows are test functions, columns trial
//! functions. The normal `(n_t, n)` is the outward unit space-time normal
//! of the cell; `∂_n = n · ∇_x` uses its spatial part as is.

use serde::{Deserialize, Serialize};

use crate::element::{CellGeometry, FaceData, ReferenceElement};
use crate::linalg::DenseMatrix;
use crate::mesh::FacetKind;
use crate::scalar::Real;

/// Dense local blocks of one cell:
/// `[A B; C D] [W_K; W̄_K] = [F; G]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBlocks<T> {
    pub a: DenseMatrix<T>,
    pub b: DenseMatrix<T>,
    pub c: DenseMatrix<T>,
    pub d: DenseMatrix<T>,
    pub f: Vec<T>,
    pub g: Vec<T>,
}

impl<T: Real> LocalBlocks<T> {
    pub fn zeros(n_cell: usize, n_facet: usize) -> Self {
        Self {
            a: DenseMatrix::zeros(n_cell, n_cell),
            b: DenseMatrix::zeros(n_cell, n_facet),
            c: DenseMatrix::zeros(n_facet, n_cell),
            d: DenseMatrix::zeros(n_facet, n_facet),
            f: vec![T::zero(); n_cell],
            g: vec![T::zero(); n_facet],
        }
    }

    pub fn for_cell(reference: &ReferenceElement<T>, geom: &CellGeometry<T>) -> Self {
        Self::zeros(reference.n_cell_dofs(), geom.q_faces.len() * reference.n_facet_dofs())
    }

    pub fn n_cell(&self) -> usize {
        self.a.rows()
    }

    pub fn n_facet(&self) -> usize {
        self.d.rows()
    }

    /// The uncondensed local matrix `[A B; C D]`.
    pub fn full_matrix(&self) -> DenseMatrix<T> {
        let (nw, nf) = (self.n_cell(), self.n_facet());
        DenseMatrix::from_fn(nw + nf, nw + nf, |i, j| match (i < nw, j < nw) {
            (true, true) => self.a[(i, j)],
            (true, false) => self.b[(i, j - nw)],
            (false, true) => self.c[(i - nw, j)],
            (false, false) => self.d[(i - nw, j - nw)],
        })
    }

    /// Bilinear form value `y^T [A B; C D] x` for local vectors `x = [W; W̄]`.
    pub fn pair(&self, y: &[T], x: &[T]) -> T {
        let m = self.full_matrix();
        crate::linalg::dot(y, &m.matvec(x))
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (m, o) in [
            (&mut self.a, &other.a),
            (&mut self.b, &other.b),
            (&mut self.c, &other.c),
            (&mut self.d, &other.d),
        ] {
            for i in 0..m.rows() {
                for (x, &y) in m.row_mut(i).iter_mut().zip(o.row(i)) {
                    *x += y;
                }
            }
        }
        for (x, &y) in self.f.iter_mut().zip(&other.f) {
            *x += y;
        }
        for (x, &y) in self.g.iter_mut().zip(&other.g) {
            *x += y;
        }
    }
}

/// Local index arithmetic.
#[derive(Debug, Clone, Copy)]
pub struct LocalIndex {
    pub nb: usize,
    pub np: usize,
    pub nb2: usize,
}

impl LocalIndex {
    pub fn new<T: Real>(r: &ReferenceElement<T>) -> Self {
        Self {
            nb: r.n_velocity(),
            np: r.n_pressure(),
            nb2: r.n_facet(),
        }
    }

    #[inline]
    pub fn u(&self, c: usize, a: usize) -> usize {
        c * self.nb + a
    }

    #[inline]
    pub fn p(&self, b: usize) -> usize {
        2 * self.nb + b
    }

    #[inline]
    pub fn ubar(&self, face: usize, c: usize, i: usize) -> usize {
        face * 3 * self.nb2 + c * self.nb2 + i
    }

    #[inline]
    pub fn pbar(&self, face: usize, i: usize) -> usize {
        face * 3 * self.nb2 + 2 * self.nb2 + i
    }
}

/// Advecting field restricted to one cell: cell coefficients `[w_1, w_2]`
/// and, per Q-face, facet coefficients `[w̄_1, w̄_2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConvection<T> {
    pub w: Vec<T>,
    pub wbar: Vec<Vec<T>>,
}

#[inline]
fn spatial_dot<T: Real>(n: &[T; 3], v: [T; 2]) -> T {
    n[1] * v[0] + n[2] * v[1]
}

#[inline]
fn combine<T: Real>(coeffs: &[T], basis: &[T]) -> T {
    coeffs.iter().zip(basis).fold(T::zero(), |s, (&c, &b)| s + c * b)
}

fn field_at<T: Real>(coeffs: &[T], basis: &[T]) -> [T; 2] {
    let n = basis.len();
    [combine(&coeffs[..n], basis), combine(&coeffs[n..2 * n], basis)]
}

/// Upwind flux `(n_t + w·n)(u + λ(ū − u))`, `λ = 1` on inflow.
pub fn upwind_flux_h<T: Real>(u: [T; 2], ubar: [T; 2], w: [T; 2], normal: [T; 3]) -> [T; 2] {
    upwind(u, ubar, normal[0] + spatial_dot(&normal, w))
}

/// ALE flux `(u + λ(ū − u)) (w − v_g)·n`.
pub fn ale_flux_g<T: Real>(u: [T; 2], ubar: [T; 2], w: [T; 2], grid_velocity: [T; 2], normal: [T; 3]) -> [T; 2] {
    upwind(
        u,
        ubar,
        spatial_dot(&normal, [w[0] - grid_velocity[0], w[1] - grid_velocity[1]]),
    )
}

fn upwind<T: Real>(u: [T; 2], ubar: [T; 2], beta: T) -> [T; 2] {
    let lambda = if beta < T::zero() { T::one() } else { T::zero() };
    [
        beta * (u[0] + lambda * (ubar[0] - u[0])),
        beta * (u[1] + lambda * (ubar[1] - u[1])),
    ]
}

/// Cell length `h_K` in the penalty `σ = ν α / h_K`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyLength {
    /// Smallest altitude of the tetrahedron. Keeps the viscous form
    /// coercive with `α = 6k²` on cells that are thin in time.
    #[default]
    MinAltitude,
    /// Largest vertex distance.
    Diameter,
}

impl PenaltyLength {
    pub fn of<T: Real>(self, geom: &CellGeometry<T>) -> T {
        match self {
            PenaltyLength::MinAltitude => geom.min_altitude,
            PenaltyLength::Diameter => geom.diameter,
        }
    }
}

/// Viscous form: `ν ∫ ∇u : ∇v` plus the interior-penalty and consistency
/// terms on Q-faces with `σ = ν α / h_K`.
pub fn add_viscous<T: Real>(
    out: &mut LocalBlocks<T>,
    reference: &ReferenceElement<T>,
    geom: &CellGeometry<T>,
    nu: T,
    alpha: T,
    length: PenaltyLength,
) {
    let ix = LocalIndex::new(reference);
    let (nb, nb2) = (ix.nb, ix.nb2);
    for (q, &jw) in geom.jw.iter().enumerate() {
        let g = &geom.dphi[q];
        for b in 0..nb {
            for a in 0..nb {
                let v = nu * jw * (g[b][1] * g[a][1] + g[b][2] * g[a][2]);
                out.a[(ix.u(0, b), ix.u(0, a))] += v;
                out.a[(ix.u(1, b), ix.u(1, a))] += v;
            }
        }
    }
    let sigma = nu * alpha / length.of(geom);
    let chi = reference.chi();
    let mut dn = vec![T::zero(); nb];
    for (j, face) in geom.q_faces.iter().enumerate() {
        let n = face.normal;
        for (q, &jw) in face.jw.iter().enumerate() {
            let phi = &face.phi[q];
            for (d, g) in dn.iter_mut().zip(&face.dphi[q]) {
                *d = n[1] * g[1] + n[2] * g[2];
            }
            for b in 0..nb {
                for a in 0..nb {
                    let v = jw * (sigma * phi[b] * phi[a] - nu * (phi[a] * dn[b] + dn[a] * phi[b]));
                    out.a[(ix.u(0, b), ix.u(0, a))] += v;
                    out.a[(ix.u(1, b), ix.u(1, a))] += v;
                }
                for i in 0..nb2 {
                    let v = jw * (-sigma * phi[b] * chi[q][i] + nu * chi[q][i] * dn[b]);
                    for c in 0..2 {
                        out.b[(ix.u(c, b), ix.ubar(j, c, i))] += v;
                        out.c[(ix.ubar(j, c, i), ix.u(c, b))] += v;
                    }
                }
            }
            for i in 0..nb2 {
                for l in 0..nb2 {
                    let v = jw * sigma * chi[q][i] * chi[q][l];
                    for c in 0..2 {
                        out.d[(ix.ubar(j, c, i), ix.ubar(j, c, l))] += v;
                    }
                }
            }
        }
    }
}

/// Velocity-pressure coupling `+b(p*, v*) − b(q*, u*)` with
/// `b(p*, v*) = −∫ p ∇·v + ∫_Q (v − v̄)·n p̄`.
pub fn add_pressure<T: Real>(out: &mut LocalBlocks<T>, reference: &ReferenceElement<T>, geom: &CellGeometry<T>) {
    let ix = LocalIndex::new(reference);
    let (nb, np, nb2) = (ix.nb, ix.np, ix.nb2);
    let psi = reference.psi();
    for (q, &jw) in geom.jw.iter().enumerate() {
        let g = &geom.dphi[q];
        for b in 0..np {
            for a in 0..nb {
                for c in 0..2 {
                    let v = jw * psi[q][b] * g[a][c + 1];
                    out.a[(ix.u(c, a), ix.p(b))] -= v;
                    out.a[(ix.p(b), ix.u(c, a))] += v;
                }
            }
        }
    }
    let chi = reference.chi();
    for (j, face) in geom.q_faces.iter().enumerate() {
        let n = face.normal;
        for (q, &jw) in face.jw.iter().enumerate() {
            let phi = &face.phi[q];
            for i in 0..nb2 {
                for c in 0..2 {
                    let wn = jw * n[c + 1] * chi[q][i];
                    for a in 0..nb {
                        out.b[(ix.u(c, a), ix.pbar(j, i))] += wn * phi[a];
                        out.c[(ix.pbar(j, i), ix.u(c, a))] -= wn * phi[a];
                    }
                    for l in 0..nb2 {
                        out.d[(ix.ubar(j, c, l), ix.pbar(j, i))] -= wn * chi[q][l];
                        out.d[(ix.pbar(j, i), ix.ubar(j, c, l))] += wn * chi[q][l];
                    }
                }
            }
        }
    }
}

/// Time derivative and convection `t(u*, w*, v*)` for a fixed advecting
/// field; `conv = None` means `w = w̄ = 0`. With `ale` the Q-face normal
/// speed `n_t + w·n` is evaluated as `(w − v_g)·n`.
pub fn add_convection<T: Real>(
    out: &mut LocalBlocks<T>,
    reference: &ReferenceElement<T>,
    geom: &CellGeometry<T>,
    conv: Option<&CellConvection<T>>,
    ale: bool,
) {
    let ix = LocalIndex::new(reference);
    let (nb, nb2) = (ix.nb, ix.nb2);
    let zero = [T::zero(); 2];
    let phi_ref = reference.phi();
    for (q, &jw) in geom.jw.iter().enumerate() {
        let g = &geom.dphi[q];
        let w = conv.map_or(zero, |cv| field_at(&cv.w, &phi_ref[q]));
        for b in 0..nb {
            let transport = g[b][0] + w[0] * g[b][1] + w[1] * g[b][2];
            for a in 0..nb {
                let v = -jw * phi_ref[q][a] * transport;
                out.a[(ix.u(0, b), ix.u(0, a))] += v;
                out.a[(ix.u(1, b), ix.u(1, a))] += v;
            }
        }
    }
    if let Some(top) = &geom.top {
        for (q, &jw) in top.jw.iter().enumerate() {
            let phi = &top.phi[q];
            for b in 0..nb {
                for a in 0..nb {
                    let v = jw * phi[b] * phi[a];
                    out.a[(ix.u(0, b), ix.u(0, a))] += v;
                    out.a[(ix.u(1, b), ix.u(1, a))] += v;
                }
            }
        }
    }
    let chi = reference.chi();
    for (j, face) in geom.q_faces.iter().enumerate() {
        for (q, &jw) in face.jw.iter().enumerate() {
            let phi = &face.phi[q];
            let w = conv.map_or(zero, |cv| field_at(&cv.w, phi));
            let beta = normal_speed(face, q, w, ale);
            let (outflow, inflow) = if beta < T::zero() {
                (T::zero(), beta)
            } else {
                (beta, T::zero())
            };
            for b in 0..nb {
                for a in 0..nb {
                    let v = jw * outflow * phi[b] * phi[a];
                    out.a[(ix.u(0, b), ix.u(0, a))] += v;
                    out.a[(ix.u(1, b), ix.u(1, a))] += v;
                }
                for i in 0..nb2 {
                    let vb = jw * inflow * phi[b] * chi[q][i];
                    let vc = -jw * outflow * chi[q][i] * phi[b];
                    for c in 0..2 {
                        out.b[(ix.u(c, b), ix.ubar(j, c, i))] += vb;
                        out.c[(ix.ubar(j, c, i), ix.u(c, b))] += vc;
                    }
                }
            }
            let mut dd = -jw * inflow;
            if face.kind == FacetKind::Neumann {
                let wbar = conv.map_or(zero, |cv| field_at(&cv.wbar[j], &chi[q]));
                let beta_bar = normal_speed(face, q, wbar, ale);
                if beta_bar >= T::zero() {
                    dd += jw * beta_bar;
                }
            }
            if dd != T::zero() {
                for i in 0..nb2 {
                    for l in 0..nb2 {
                        let v = dd * chi[q][i] * chi[q][l];
                        out.d[(ix.ubar(j, 0, i), ix.ubar(j, 0, l))] += v;
                        out.d[(ix.ubar(j, 1, i), ix.ubar(j, 1, l))] += v;
                    }
                }
            }
        }
    }
}

/// `n_t + w·n`, or `(w − v_g)·n` on the ALE path.
#[inline]
pub fn normal_speed<T: Real>(face: &FaceData<T>, q: usize, w: [T; 2], ale: bool) -> T {
    let n = &face.normal;
    if ale {
        let vg = face.grid_velocity[q];
        spatial_dot(n, [w[0] - vg[0], w[1] - vg[1]])
    } else {
        n[0] + spatial_dot(n, w)
    }
}

/// Data entering the right-hand side of one cell.
pub struct LoadData<'a, T> {
    /// Body force `f(t, x1, x2)`.
    pub source: &'a dyn Fn([T; 3]) -> [T; 2],
    /// Neumann data `g(point, normal)`.
    pub neumann: &'a dyn Fn([T; 3], [T; 3]) -> [T; 2],
    /// Facet-basis coefficients `[u_1, u_2]` of the incoming trace on the
    /// cell's bottom face.
    pub trace: Option<&'a [T]>,
}

/// Loads `∫ f·v − ∫_N g·v̄ + ∫_{bottom} u⁻·v`.
pub fn add_rhs<T: Real>(
    out: &mut LocalBlocks<T>,
    reference: &ReferenceElement<T>,
    geom: &CellGeometry<T>,
    data: &LoadData<'_, T>,
) {
    let ix = LocalIndex::new(reference);
    let (nb, nb2) = (ix.nb, ix.nb2);
    let phi_ref = reference.phi();
    for (q, &jw) in geom.jw.iter().enumerate() {
        let f = (data.source)(geom.points[q]);
        if f == [T::zero(); 2] {
            continue;
        }
        for a in 0..nb {
            out.f[ix.u(0, a)] += jw * f[0] * phi_ref[q][a];
            out.f[ix.u(1, a)] += jw * f[1] * phi_ref[q][a];
        }
    }
    let chi = reference.chi();
    if let (Some(bottom), Some(trace)) = (&geom.bottom, data.trace) {
        for (q, &jw) in bottom.jw.iter().enumerate() {
            let u = field_at(trace, &chi[q]);
            for a in 0..nb {
                out.f[ix.u(0, a)] += jw * u[0] * bottom.phi[q][a];
                out.f[ix.u(1, a)] += jw * u[1] * bottom.phi[q][a];
            }
        }
    }
    for (j, face) in geom.q_faces.iter().enumerate() {
        if face.kind != FacetKind::Neumann {
            continue;
        }
        for (q, &jw) in face.jw.iter().enumerate() {
            let g = (data.neumann)(face.points[q], face.normal);
            for i in 0..nb2 {
                out.g[ix.ubar(j, 0, i)] -= jw * g[0] * chi[q][i];
                out.g[ix.ubar(j, 1, i)] -= jw * g[1] * chi[q][i];
            }
        }
    }
}

pub fn local_a<T: Real>(
    reference: &ReferenceElement<T>,
    geom: &CellGeometry<T>,
    nu: T,
    alpha: T,
    length: PenaltyLength,
) -> LocalBlocks<T> {
    let mut out = LocalBlocks::for_cell(reference, geom);
    add_viscous(&mut out, reference, geom, nu, alpha, length);
    out
}

pub fn local_b<T: Real>(reference: &ReferenceElement<T>, geom: &CellGeometry<T>) -> LocalBlocks<T> {
    let mut out = LocalBlocks::for_cell(reference, geom);
    add_pressure(&mut out, reference, geom);
    out
}

pub fn local_t<T: Real>(
    reference: &ReferenceElement<T>,
    geom: &CellGeometry<T>,
    conv: Option<&CellConvection<T>>,
) -> LocalBlocks<T> {
    let mut out = LocalBlocks::for_cell(reference, geom);
    add_convection(&mut out, reference, geom, conv, false);
    out
}

pub fn local_t_ale<T: Real>(
    reference: &ReferenceElement<T>,
    geom: &CellGeometry<T>,
    conv: Option<&CellConvection<T>>,
) -> LocalBlocks<T> {
    let mut out = LocalBlocks::for_cell(reference, geom);
    add_convection(&mut out, reference, geom, conv, true);
    out
}

pub fn local_rhs<T: Real>(
    reference: &ReferenceElement<T>,
    geom: &CellGeometry<T>,
    data: &LoadData<'_, T>,
) -> LocalBlocks<T> {
    let mut out = LocalBlocks::for_cell(reference, geom);
    add_rhs(&mut out, reference, geom, data);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::physical_gradients;
    use crate::mesh::{extrude_slab, move_mesh, triangulate_unit_square, SinusoidalMotion, SlabMesh};
    use crate::quadrature::make_quadrature;
    use faer::{Mat, Side};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn moving_slab(nx: usize, t0: f64, t1: f64) -> SlabMesh<f64> {
        let m = triangulate_unit_square::<f64>(nx).unwrap();
        let motion = SinusoidalMotion::default();
        let b = move_mesh(&m, &motion, t0).unwrap();
        let t = move_mesh(&m, &motion, t1).unwrap();
        extrude_slab(&b, &t, t0, t1).unwrap()
    }

    fn random_vec(rng: &mut StdRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    fn random_conv(rng: &mut StdRng, r: &ReferenceElement<f64>, g: &CellGeometry<f64>) -> CellConvection<f64> {
        CellConvection {
            w: random_vec(rng, 2 * r.n_velocity()),
            wbar: g.q_faces.iter().map(|_| random_vec(rng, 2 * r.n_facet())).collect(),
        }
    }

    #[test]
    fn flux_examples() {
        let n = [0.0, 1.0, 0.0];
        assert_eq!(upwind_flux_h([3.0, 4.0], [5.0, 6.0], [0.0, 0.0], n), [0.0, 0.0]);
        assert_eq!(upwind_flux_h([3.0, 4.0], [5.0, 6.0], [-1.0, 0.0], n), [-5.0, -6.0]);
        assert_eq!(upwind_flux_h([3.0, 4.0], [5.0, 6.0], [2.0, 0.0], n), [6.0, 8.0]);
        let vg = [0.3, -0.2];
        assert_eq!(ale_flux_g([3.0, 4.0], [5.0, 6.0], vg, vg, [0.1, 0.6, 0.8]), [0.0, 0.0]);
    }

    #[test]
    fn flux_is_continuous_when_traces_agree() {
        for beta_w in [-2.0, -1e-3, 0.0, 1e-3, 2.0] {
            let u = [0.7, -1.3];
            let f = upwind_flux_h(u, u, [beta_w, 0.0], [0.0, 1.0, 0.0]);
            assert_eq!(f, [beta_w * u[0], beta_w * u[1]]);
        }
    }

    fn min_relative_eigenvalue(m: &DenseMatrix<f64>) -> f64 {
        let n = m.rows();
        let fm = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
        let eig = fm.self_adjoint_eigenvalues(Side::Lower).unwrap();
        eig[0] / eig[n - 1]
    }

    #[test]
    fn viscous_block_is_symmetric_and_semidefinite() {
        for (nx, dt) in [(2, 0.05), (8, 0.05), (4, 0.25)] {
            let slab = moving_slab(nx, 0.1, 0.1 + dt);
            for k in 1..=4 {
                let r = ReferenceElement::<f64>::new(k).unwrap();
                let alpha = 6.0 * (k * k) as f64;
                for cell in (0..slab.n_cells()).step_by(7) {
                    let g = CellGeometry::new(&slab, &r, cell).unwrap();
                    let m = local_a(&r, &g, 1.0, alpha, PenaltyLength::MinAltitude).full_matrix();
                    let scale = m.max_abs();
                    for i in 0..m.rows() {
                        for j in 0..i {
                            assert!((m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale);
                        }
                    }
                    let e = min_relative_eigenvalue(&m);
                    assert!(e > -1e-13, "nx={nx} k={k} cell={cell}: {e}");
                }
            }
        }
    }

    #[test]
    fn diameter_penalty_is_not_coercive_on_thin_cells() {
        let slab = moving_slab(8, 0.1, 0.15);
        let r = ReferenceElement::<f64>::new(1).unwrap();
        let worst = (0..slab.n_cells())
            .map(|c| {
                let g = CellGeometry::new(&slab, &r, c).unwrap();
                min_relative_eigenvalue(&local_a(&r, &g, 1.0, 6.0, PenaltyLength::Diameter).full_matrix())
            })
            .fold(f64::MAX, f64::min);
        assert!(worst < -1e-2);
    }

    #[test]
    fn viscous_form_vanishes_on_constants() {
        let slab = moving_slab(2, 0.1, 0.15);
        let r = ReferenceElement::<f64>::new(2).unwrap();
        let ix = LocalIndex::new(&r);
        let g = CellGeometry::new(&slab, &r, 5).unwrap();
        let blocks = local_a(&r, &g, 0.3, 24.0, PenaltyLength::MinAltitude);
        // phi_0 and chi_0 are the constants sqrt(6) and sqrt(2).
        let (c1, c2) = (0.4, -1.1);
        let mut x = vec![0.0; blocks.n_cell() + blocks.n_facet()];
        x[ix.u(0, 0)] = c1 / 6f64.sqrt();
        x[ix.u(1, 0)] = c2 / 6f64.sqrt();
        for j in 0..g.q_faces.len() {
            x[blocks.n_cell() + ix.ubar(j, 0, 0)] = c1 / 2f64.sqrt();
            x[blocks.n_cell() + ix.ubar(j, 1, 0)] = c2 / 2f64.sqrt();
        }
        let y: Vec<f64> = (0..x.len()).map(|i| (i as f64).sin()).collect();
        assert!(blocks.pair(&y, &x).abs() < 1e-12);
        assert!(blocks.pair(&x, &x).abs() < 1e-12);
    }

    #[test]
    fn pressure_form_matches_direct_quadrature() {
        let slab = moving_slab(2, 0.2, 0.3);
        let mut rng = StdRng::seed_from_u64(11);
        for k in 1..=3 {
            let r = ReferenceElement::<f64>::new(k).unwrap();
            let ix = LocalIndex::new(&r);
            for cell in [1, 7] {
                let g = CellGeometry::new(&slab, &r, cell).unwrap();
                let blocks = local_b(&r, &g);
                let (nw, nf) = (blocks.n_cell(), blocks.n_facet());
                // v* random, p* = (1, 1): b(p*, v*) = -∫ div v + ∫_Q (v - v̄)·n.
                let mut y = vec![0.0; nw + nf];
                let v = random_vec(&mut rng, 2 * ix.nb);
                y[..2 * ix.nb].copy_from_slice(&v);
                let vbar: Vec<Vec<f64>> = g.q_faces.iter().map(|_| random_vec(&mut rng, 2 * ix.nb2)).collect();
                for (j, vb) in vbar.iter().enumerate() {
                    for c in 0..2 {
                        for i in 0..ix.nb2 {
                            y[nw + ix.ubar(j, c, i)] = vb[c * ix.nb2 + i];
                        }
                    }
                }
                let mut x = vec![0.0; nw + nf];
                let psi0 = r.pressure_basis().eval(&[0.25; 3])[0];
                x[ix.p(0)] = 1.0 / psi0;
                for j in 0..g.q_faces.len() {
                    x[nw + ix.pbar(j, 0)] = 1.0 / 2f64.sqrt();
                }
                let assembled = blocks.pair(&y, &x);

                // Oracle: independent rules of higher exactness.
                let cell_rule = make_quadrature::<f64>(3, 2 * k + 2).unwrap();
                let (_, grads) = physical_gradients(r.velocity_basis(), &g.map, cell_rule.points()).unwrap();
                let det = g.map.det().abs();
                let mut div = 0.0;
                for (q, (_, w)) in cell_rule.iter().enumerate() {
                    for a in 0..ix.nb {
                        div += w * det * (v[a] * grads[q][a][1] + v[ix.nb + a] * grads[q][a][2]);
                    }
                }
                let facet_rule = make_quadrature::<f64>(2, 2 * k + 2).unwrap();
                let mut flux = 0.0;
                for (j, face) in g.q_faces.iter().enumerate() {
                    let area = slab.facet(face.facet).area;
                    for (s, w) in facet_rule.iter() {
                        let xpt = slab.facet_point(face.facet, [s[0], s[1]]);
                        let phi = r.velocity_basis().eval(&g.map.inverse(&xpt));
                        let chi = r.facet_basis().eval(s);
                        for c in 0..2 {
                            let vc: f64 = (0..ix.nb).map(|a| v[c * ix.nb + a] * phi[a]).sum();
                            let vbc: f64 = (0..ix.nb2).map(|i| vbar[j][c * ix.nb2 + i] * chi[i]).sum();
                            flux += w * 2.0 * area * (vc - vbc) * face.normal[c + 1];
                        }
                    }
                }
                let expected = -div + flux;
                assert!((assembled - expected).abs() < 1e-11, "k={k}: {assembled} vs {expected}");
                // Antisymmetric pairing: -b(q*, u*) is the negated transpose.
                let m = blocks.full_matrix();
                for i in 0..nw + nf {
                    for jj in 0..nw + nf {
                        assert!((m[(i, jj)] + m[(jj, i)]).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn pressure_form_vanishes_for_matching_constant_velocity() {
        let slab = moving_slab(2, 0.2, 0.3);
        let r = ReferenceElement::<f64>::new(2).unwrap();
        let ix = LocalIndex::new(&r);
        let g = CellGeometry::new(&slab, &r, 3).unwrap();
        let blocks = local_b(&r, &g);
        let (nw, nf) = (blocks.n_cell(), blocks.n_facet());
        let mut y = vec![0.0; nw + nf];
        y[ix.u(0, 0)] = 0.3 / 6f64.sqrt();
        y[ix.u(1, 0)] = -0.8 / 6f64.sqrt();
        for j in 0..g.q_faces.len() {
            y[nw + ix.ubar(j, 0, 0)] = 0.3 / 2f64.sqrt();
            y[nw + ix.ubar(j, 1, 0)] = -0.8 / 2f64.sqrt();
        }
        let mut rng = StdRng::seed_from_u64(5);
        let mut x = vec![0.0; nw + nf];
        for b in 0..ix.np {
            x[ix.p(b)] = rng.random::<f64>();
        }
        for j in 0..g.q_faces.len() {
            for i in 0..ix.nb2 {
                x[nw + ix.pbar(j, i)] = rng.random::<f64>();
            }
        }
        assert!(blocks.pair(&y, &x).abs() < 1e-12);
    }

    #[test]
    fn time_derivative_telescopes_on_static_mesh() {
        // w = 0, t-independent u, single-valued traces: every Q-face term
        // cancels and t(u*, 0, v*) = ∫_bottom u v.
        let m = triangulate_unit_square::<f64>(2).unwrap();
        let slab = extrude_slab(&m, &m, 0.0, 0.2).unwrap();
        let r = ReferenceElement::<f64>::new(2).unwrap();
        let ix = LocalIndex::new(&r);
        let u_fn = |x: [f64; 3]| [x[1] * x[2] + 1.0, x[1] - x[2] * x[2]];
        let v_fn = |x: [f64; 3]| [x[0] * x[1] + x[0] * x[0], 2.0 - x[0] * x[2]];
        let fw = r.facet_rule().weights();
        let mut total = 0.0;
        let mut expected = 0.0;
        for cell in 0..slab.n_cells() {
            let g = CellGeometry::new(&slab, &r, cell).unwrap();
            let mass_inv = 1.0 / g.map.det().abs();
            let project = |f: &dyn Fn([f64; 3]) -> [f64; 2], out: &mut [f64]| {
                for (q, &jw) in g.jw.iter().enumerate() {
                    let val = f(g.points[q]);
                    for a in 0..ix.nb {
                        out[ix.u(0, a)] += jw * val[0] * r.phi()[q][a] * mass_inv;
                        out[ix.u(1, a)] += jw * val[1] * r.phi()[q][a] * mass_inv;
                    }
                }
            };
            let blocks = local_t(&r, &g, None);
            let (nw, nf) = (blocks.n_cell(), blocks.n_facet());
            let mut x = vec![0.0; nw + nf];
            let mut y = vec![0.0; nw + nf];
            project(&u_fn, &mut x);
            project(&v_fn, &mut y);
            for (j, face) in g.q_faces.iter().enumerate() {
                for (q, p) in face.points.iter().enumerate() {
                    let (u, v) = (u_fn(*p), v_fn(*p));
                    for c in 0..2 {
                        for i in 0..ix.nb2 {
                            x[nw + ix.ubar(j, c, i)] += fw[q] * r.chi()[q][i] * u[c];
                            y[nw + ix.ubar(j, c, i)] += fw[q] * r.chi()[q][i] * v[c];
                        }
                    }
                }
            }
            total += blocks.pair(&y, &x);
            if let Some(bottom) = &g.bottom {
                for (q, &jw) in bottom.jw.iter().enumerate() {
                    let (u, v) = (u_fn(bottom.points[q]), v_fn(bottom.points[q]));
                    expected += jw * (u[0] * v[0] + u[1] * v[1]);
                }
            }
        }
        assert!((total - expected).abs() < 1e-12, "{total} vs {expected}");
    }

    #[test]
    fn ale_form_matches_space_time_form() {
        let slab = moving_slab(3, 0.35, 0.4);
        let mut rng = StdRng::seed_from_u64(3);
        for k in [1, 2] {
            let r = ReferenceElement::<f64>::new(k).unwrap();
            for cell in 0..slab.n_cells() {
                let g = CellGeometry::new(&slab, &r, cell).unwrap();
                let conv = random_conv(&mut rng, &r, &g);
                let a = local_t(&r, &g, Some(&conv)).full_matrix();
                let b = local_t_ale(&r, &g, Some(&conv)).full_matrix();
                let scale = a.max_abs();
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    assert!((x - y).abs() <= 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn ale_form_on_static_mesh_agrees_with_space_time_form() {
        // Facets swept by a vertex trajectory do not move. Interior facets
        // slanted in time carry the grid velocity implied by their normal.
        let m = triangulate_unit_square::<f64>(2).unwrap();
        let slab = extrude_slab(&m, &m, 0.0, 0.1).unwrap();
        let r = ReferenceElement::<f64>::new(2).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        for cell in 0..slab.n_cells() {
            let g = CellGeometry::new(&slab, &r, cell).unwrap();
            for face in &g.q_faces {
                if slab.trajectory_velocity(face.facet).is_some() {
                    assert!(face
                        .grid_velocity
                        .iter()
                        .all(|v| v[0].abs() < 1e-14 && v[1].abs() < 1e-14));
                    assert!(face.normal[0].abs() < 1e-14);
                }
            }
            let conv = random_conv(&mut rng, &r, &g);
            let a = local_t(&r, &g, Some(&conv)).full_matrix();
            let b = local_t_ale(&r, &g, Some(&conv)).full_matrix();
            let scale = a.max_abs();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_loads() {
        let slab = moving_slab(2, 0.0, 0.1);
        let r = ReferenceElement::<f64>::new(2).unwrap();
        let zero_trace = vec![0.0; 2 * r.n_facet()];
        let data = LoadData {
            source: &|_| [0.0, 0.0],
            neumann: &|_, _| [0.0, 0.0],
            trace: Some(&zero_trace),
        };
        for cell in 0..slab.n_cells() {
            let g = CellGeometry::new(&slab, &r, cell).unwrap();
            let b = local_rhs(&r, &g, &data);
            assert!(b.f.iter().chain(&b.g).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn constant_source_loads_only_the_mean_mode() {
        let slab = moving_slab(2, 0.0, 0.1);
        let r = ReferenceElement::<f64>::new(3).unwrap();
        let ix = LocalIndex::new(&r);
        let data = LoadData {
            source: &|_| [2.0, -0.5],
            neumann: &|_, _| [0.0, 0.0],
            trace: None,
        };
        for cell in [0, 9] {
            let g = CellGeometry::new(&slab, &r, cell).unwrap();
            let b = local_rhs(&r, &g, &data);
            let vol = slab.cell_volume(cell);
            // ∫ phi_a = |K| sqrt(6) δ_{a0} for the orthonormal basis.
            for a in 0..ix.nb {
                let mean = if a == 0 { vol * 6f64.sqrt() } else { 0.0 };
                assert!((b.f[ix.u(0, a)] - 2.0 * mean).abs() < 1e-13);
                assert!((b.f[ix.u(1, a)] + 0.5 * mean).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn trace_load_matches_high_order_oracle() {
        let slab = moving_slab(2, 0.4, 0.45);
        let r = ReferenceElement::<f64>::new(2).unwrap();
        let ix = LocalIndex::new(&r);
        let mut rng = StdRng::seed_from_u64(9);
        let trace = random_vec(&mut rng, 2 * ix.nb2);
        let data = LoadData {
            source: &|_| [0.0, 0.0],
            neumann: &|_, _| [0.0, 0.0],
            trace: Some(&trace),
        };
        let oracle_rule = make_quadrature::<f64>(2, 4 * r.degree() + 2).unwrap();
        for cell in 0..slab.n_cells() {
            let g = CellGeometry::new(&slab, &r, cell).unwrap();
            let Some(bottom) = &g.bottom else { continue };
            let b = local_rhs(&r, &g, &data);
            let area = slab.facet(bottom.facet).area;
            for c in 0..2 {
                for a in 0..ix.nb {
                    let mut v = 0.0;
                    for (s, w) in oracle_rule.iter() {
                        let x = slab.facet_point(bottom.facet, [s[0], s[1]]);
                        let phi = r.velocity_basis().eval(&g.map.inverse(&x))[a];
                        let u = r.facet_basis().combine(&trace[c * ix.nb2..(c + 1) * ix.nb2], s);
                        v += w * 2.0 * area * u * phi;
                    }
                    assert!((b.f[ix.u(c, a)] - v).abs() < 1e-12);
                }
            }
        }
    }
}
