//! Initial projection, the per-slab Picard loop and the slab-to-slab march.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::{make_basis, BasisSet};
use crate::dofs::interpolate_dirichlet;
use crate::element::ReferenceElement;
use crate::error::{Error, Result};
use crate::linalg::{max_abs, sparse_solve};
use crate::mesh::{extrude_slab, move_mesh, DomainMotion, SpatialMesh};
use crate::quadrature::gauss_legendre_unit;
use crate::scalar::Real;
use crate::system::{
    assemble, Discretization, FacetSolver, FormOptions, PhaseTimings, Residuals, SlabLoads, SlabState, SolverStats,
};

/// Boundary, source and initial data of a flow problem.
pub trait FlowData<T: Real>: Sync {
    /// Body force at `(t, x1, x2)`.
    fn source(&self, x: [T; 3]) -> [T; 2];
    /// Prescribed velocity on Dirichlet facets.
    fn dirichlet(&self, x: [T; 3]) -> [T; 2];
    /// Neumann data `g` at a point with outward space-time normal `n`.
    fn neumann(&self, x: [T; 3], n: [T; 3]) -> [T; 2];
    /// Divergence-free initial velocity.
    fn initial_velocity(&self, x: [T; 2]) -> [T; 2];
}

/// Affine map of a triangle from its reference triangle, vertices taken in
/// increasing global index so that it agrees with the slab facets.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TriangleMap<T> {
    origin: [T; 2],
    jac: [[T; 2]; 2],
    inv: [[T; 2]; 2],
    /// `|det J| = 2 |T|`.
    pub jdet: T,
}

impl<T: Real> TriangleMap<T> {
    pub fn new(mesh: &SpatialMesh<T>, tri: usize) -> Self {
        let mut v = mesh.triangles()[tri];
        v.sort_unstable();
        let p = v.map(|i| mesh.vertices()[i]);
        let jac = [
            [p[1][0] - p[0][0], p[2][0] - p[0][0]],
            [p[1][1] - p[0][1], p[2][1] - p[0][1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        Self {
            origin: p[0],
            jac,
            inv,
            jdet: det.abs(),
        }
    }

    pub fn map(&self, s: [T; 2]) -> [T; 2] {
        [
            self.origin[0] + self.jac[0][0] * s[0] + self.jac[0][1] * s[1],
            self.origin[1] + self.jac[1][0] * s[0] + self.jac[1][1] * s[1],
        ]
    }

    pub fn inverse(&self, x: [T; 2]) -> [T; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }

    /// Physical gradient `J^{-T} g` of a reference gradient.
    pub fn push_gradient(&self, g: [T; 3]) -> [T; 2] {
        [
            self.inv[0][0] * g[0] + self.inv[1][0] * g[1],
            self.inv[0][1] * g[0] + self.inv[1][1] * g[1],
        ]
    }
}

/// Degree-`k` velocity on every triangle of one time level, in the
/// orthonormal facet basis of the triangle.
#[derive(Debug, Clone)]
pub struct TraceField<T> {
    degree: usize,
    time: T,
    mesh: SpatialMesh<T>,
    /// `[u_1, u_2]` coefficients per triangle.
    coeffs: Vec<T>,
}

impl<T: Real> TraceField<T> {
    pub fn new(degree: usize, time: T, mesh: SpatialMesh<T>, coeffs: Vec<T>) -> Result<Self> {
        let nb2 = crate::basis::poly_dim(degree, 2);
        if coeffs.len() != 2 * nb2 * mesh.n_triangles() {
            return Err(Error::Config(format!(
                "trace needs {} coefficients, got {}",
                2 * nb2 * mesh.n_triangles(),
                coeffs.len()
            )));
        }
        Ok(Self {
            degree,
            time,
            mesh,
            coeffs,
        })
    }

    pub fn zeros(degree: usize, time: T, mesh: SpatialMesh<T>) -> Self {
        let n = 2 * crate::basis::poly_dim(degree, 2) * mesh.n_triangles();
        Self {
            degree,
            time,
            mesh,
            coeffs: vec![T::zero(); n],
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn mesh(&self) -> &SpatialMesh<T> {
        &self.mesh
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    fn nb2(&self) -> usize {
        crate::basis::poly_dim(self.degree, 2)
    }

    pub fn triangle_coeffs(&self, tri: usize) -> &[T] {
        let m = 2 * self.nb2();
        &self.coeffs[tri * m..(tri + 1) * m]
    }

    /// Velocity at a physical point of a triangle.
    pub fn evaluate(&self, basis: &BasisSet<T>, tri: usize, x: [T; 2]) -> [T; 2] {
        let s = TriangleMap::new(&self.mesh, tri).inverse(x);
        let vals = basis.eval(&[s[0], s[1], T::zero()]);
        combine2(self.triangle_coeffs(tri), &vals)
    }

    /// `∫_Ω |u|²`.
    pub fn energy(&self) -> T {
        (0..self.mesh.n_triangles())
            .map(|tri| {
                let j = TriangleMap::new(&self.mesh, tri).jdet;
                j * self.triangle_coeffs(tri).iter().map(|c| *c * *c).sum::<T>()
            })
            .sum()
    }

    /// Largest `|∇·u|` over the facet quadrature points of every triangle.
    pub fn max_divergence(&self, reference: &ReferenceElement<T>) -> T {
        let basis = reference.facet_basis();
        let nb2 = self.nb2();
        let mut vals = vec![T::zero(); nb2];
        let mut grads = vec![[T::zero(); 3]; nb2];
        let mut worst = T::zero();
        for tri in 0..self.mesh.n_triangles() {
            let map = TriangleMap::new(&self.mesh, tri);
            let c = self.triangle_coeffs(tri);
            for s in reference.facet_rule().points() {
                basis.eval_grad_into(s, &mut vals, &mut grads);
                let mut div = T::zero();
                for i in 0..nb2 {
                    let g = map.push_gradient(grads[i]);
                    div += c[i] * g[0] + c[nb2 + i] * g[1];
                }
                worst = worst.max(div.abs());
            }
        }
        worst
    }

    /// `‖[[u·n]]‖_{L²}` over the interior edges.
    pub fn normal_jump_norm(&self, reference: &ReferenceElement<T>) -> T {
        let basis = reference.facet_basis();
        let (r, w) = gauss_legendre_unit::<T>(2 * self.degree + 2);
        let mut total = T::zero();
        for e in self.mesh.edges().iter().filter(|e| !e.is_boundary()) {
            let (p0, p1) = (self.mesh.vertices()[e.vertices[0]], self.mesh.vertices()[e.vertices[1]]);
            let (len, n) = edge_frame(p0, p1);
            for (&rq, &wq) in r.iter().zip(&w) {
                let x = [p0[0] + rq * (p1[0] - p0[0]), p0[1] + rq * (p1[1] - p0[1])];
                let a = self.evaluate(basis, e.triangles[0], x);
                let b = self.evaluate(basis, e.triangles[1], x);
                let jump = (a[0] - b[0]) * n[0] + (a[1] - b[1]) * n[1];
                total += wq * len * jump * jump;
            }
        }
        total.sqrt()
    }

    /// Trace of the cell velocity on the top facets of a solved slab.
    pub fn from_slab_top(disc: &Discretization<T>, state: &SlabState<T>, top: SpatialMesh<T>) -> Self {
        let slab = disc.slab();
        let reference = disc.reference();
        let layout = disc.layout();
        let nb = layout.n_velocity_basis();
        let nb2 = layout.n_facet_basis();
        let rule = reference.facet_rule();
        let chi = reference.chi();
        let mut coeffs = vec![T::zero(); 2 * nb2 * slab.n_triangles()];
        let mut vals = vec![T::zero(); nb];
        for tri in 0..slab.n_triangles() {
            let f = slab.top_facet(tri);
            let cell = slab.facet(f).sides[0].cell;
            let map = &disc.cell_geometry(cell).map;
            let out = &mut coeffs[tri * 2 * nb2..(tri + 1) * 2 * nb2];
            for (q, (s, w)) in rule.iter().enumerate() {
                let xi = map.inverse(&slab.facet_point(f, [s[0], s[1]]));
                reference.velocity_basis().eval_into(&xi, &mut vals);
                for c in 0..2 {
                    let off = layout.cell_velocity(cell, c);
                    let u: T = state.w[off..off + nb].iter().zip(&vals).map(|(a, b)| *a * *b).sum();
                    for i in 0..nb2 {
                        out[c * nb2 + i] += w * chi[q][i] * u;
                    }
                }
            }
        }
        Self {
            degree: layout.degree(),
            time: slab.time_interval().1,
            mesh: top,
            coeffs,
        }
    }
}

fn combine2<T: Real>(c: &[T], vals: &[T]) -> [T; 2] {
    let n = vals.len();
    [
        c[..n].iter().zip(vals).map(|(a, b)| *a * *b).sum(),
        c[n..2 * n].iter().zip(vals).map(|(a, b)| *a * *b).sum(),
    ]
}

/// Length and unit normal (tangent rotated clockwise) of an edge.
fn edge_frame<T: Real>(p0: [T; 2], p1: [T; 2]) -> (T, [T; 2]) {
    let d = [p1[0] - p0[0], p1[1] - p0[1]];
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    (len, [d[1] / len, -d[0] / len])
}

/// Legendre polynomials `P_0 .. P_n` at `x ∈ [-1, 1]`.
fn legendre<T: Real>(n: usize, x: T) -> Vec<T> {
    let mut p = vec![T::one(); n + 1];
    if n >= 1 {
        p[1] = x;
    }
    for m in 1..n {
        let mf = T::of(m);
        p[m + 1] = ((T::of(2 * m + 1)) * x * p[m] - mf * p[m - 1]) / (mf + T::one());
    }
    p
}

/// Largest `|∇·u0|` at the quadrature points, by fourth-order central
/// differences, and the velocity scale `max |u0|`.
fn divergence_of_data<T: Real>(
    u0: &dyn Fn([T; 2]) -> [T; 2],
    mesh: &SpatialMesh<T>,
    reference: &ReferenceElement<T>,
    h: T,
) -> (T, T) {
    let (mut div_max, mut scale) = (T::zero(), T::zero());
    let c8 = T::lit(8.0);
    let c12 = T::lit(12.0);
    for tri in 0..mesh.n_triangles() {
        let map = TriangleMap::new(mesh, tri);
        for s in reference.facet_rule().points() {
            let x = map.map([s[0], s[1]]);
            let u = u0(x);
            scale = scale.max(u[0].abs()).max(u[1].abs());
            let mut div = T::zero();
            for d in 0..2 {
                let at = |o: T| {
                    let mut y = x;
                    y[d] += o * h;
                    u0(y)[d]
                };
                let two = T::lit(2.0);
                div += (at(-two) - c8 * at(-T::one()) + c8 * at(T::one()) - at(two)) / (c12 * h);
            }
            div_max = div_max.max(div.abs());
        }
    }
    (div_max, scale)
}

/// Relative tolerance on `∇·u0` before the projection.
pub const INITIAL_DIVERGENCE_TOLERANCE: f64 = 1e-8;

/// Constrained L2 projection of `u0` onto broken `[P_k]²` with zero
/// divergence (tested against `P_{k-1}` per triangle) and zero normal
/// jump (tested against `P_k` per interior edge).
pub fn project_initial<T: Real>(
    u0: &dyn Fn([T; 2]) -> [T; 2],
    mesh: &SpatialMesh<T>,
    time: T,
    reference: &ReferenceElement<T>,
) -> Result<TraceField<T>> {
    let k = reference.degree();
    let (lo, hi) = mesh
        .vertices()
        .iter()
        .fold(([T::max_value(); 2], [T::min_value(); 2]), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        });
    let length = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let h = length * T::epsilon().powf(T::lit(0.2));
    let (div, scale) = divergence_of_data(u0, mesh, reference, h);
    let fd_floor = T::epsilon().powf(T::lit(0.8)) * T::lit(100.0);
    if div > (T::lit(INITIAL_DIVERGENCE_TOLERANCE).max(fd_floor)) * (scale / length).max(T::one()) {
        return Err(Error::NotDivergenceFree { max_div: div.f64() });
    }

    let basis = reference.facet_basis();
    let pbasis = make_basis::<T>(k - 1, 2)?;
    let (nb2, np2) = (basis.len(), pbasis.len());
    let ntri = mesh.n_triangles();
    let n_u = 2 * nb2 * ntri;
    let n_div = np2 * ntri;
    let edges: Vec<_> = mesh.edges().into_iter().filter(|e| !e.is_boundary()).collect();
    let n = n_u + n_div + (k + 1) * edges.len();
    let mut trip: Vec<(usize, usize, T)> = Vec::new();
    let mut rhs = vec![T::zero(); n];
    let rule = reference.facet_rule();
    let mut vals = vec![T::zero(); nb2];
    let mut grads = vec![[T::zero(); 3]; nb2];
    for tri in 0..ntri {
        let map = TriangleMap::new(mesh, tri);
        let u_off = tri * 2 * nb2;
        for r in 0..2 * nb2 {
            trip.push((u_off + r, u_off + r, map.jdet));
        }
        for (s, w) in rule.iter() {
            basis.eval_grad_into(s, &mut vals, &mut grads);
            let psi = pbasis.eval(s);
            let x = map.map([s[0], s[1]]);
            let u = u0(x);
            let jw = w * map.jdet;
            for i in 0..nb2 {
                rhs[u_off + i] += jw * vals[i] * u[0];
                rhs[u_off + nb2 + i] += jw * vals[i] * u[1];
                let g = map.push_gradient(grads[i]);
                for (b, &pb) in psi.iter().enumerate() {
                    let row = n_u + tri * np2 + b;
                    for c in 0..2 {
                        let v = jw * pb * g[c];
                        trip.push((row, u_off + c * nb2 + i, v));
                        trip.push((u_off + c * nb2 + i, row, v));
                    }
                }
            }
        }
    }
    let (r, w) = gauss_legendre_unit::<T>(2 * k + 1);
    for (ei, e) in edges.iter().enumerate() {
        let (p0, p1) = (mesh.vertices()[e.vertices[0]], mesh.vertices()[e.vertices[1]]);
        let (len, nrm) = edge_frame(p0, p1);
        for (&rq, &wq) in r.iter().zip(&w) {
            let x = [p0[0] + rq * (p1[0] - p0[0]), p0[1] + rq * (p1[1] - p0[1])];
            let leg = legendre(k, T::lit(2.0) * rq - T::one());
            for (side, sign) in [(e.triangles[0], T::one()), (e.triangles[1], -T::one())] {
                let s = TriangleMap::new(mesh, side).inverse(x);
                let chi = basis.eval(&[s[0], s[1], T::zero()]);
                let u_off = side * 2 * nb2;
                for (m, &lm) in leg.iter().enumerate() {
                    let row = n_u + n_div + ei * (k + 1) + m;
                    for (i, &ci) in chi.iter().enumerate() {
                        for c in 0..2 {
                            let v = sign * wq * len * lm * ci * nrm[c];
                            trip.push((row, u_off + c * nb2 + i, v));
                            trip.push((u_off + c * nb2 + i, row, v));
                        }
                    }
                }
            }
        }
    }
    let x =
        sparse_solve(n, &trip, &rhs, T::lit(1e-10).max(T::epsilon() * T::lit(1e3))).ok_or(Error::ProjectionSingular)?;
    TraceField::new(k, time, mesh.clone(), x[..n_u].to_vec())
}

/// Stopping tolerance and iteration cap of the Picard loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardStatus {
    pub iterations: usize,
    pub velocity_delta: f64,
    pub pressure_delta: f64,
    pub converged: bool,
}

impl PicardStatus {
    pub fn delta(&self) -> f64 {
        self.velocity_delta.max(self.pressure_delta)
    }
}

/// `‖x^k − x^{k−1}‖∞ / ‖x^k − x^0‖∞`. A numerator at roundoff level of
/// `‖x^k‖∞` counts as zero; a zero denominator gives 0 for a zero
/// numerator and infinity otherwise.
pub fn relative_delta<T: Real>(current: &[T], previous: &[T], start: &[T]) -> f64 {
    let diff = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs()));
    let num = diff(current, previous);
    let floor = T::lit(64.0) * T::epsilon() * max_abs(current);
    if num <= floor {
        return 0.0;
    }
    let den = diff(current, start);
    if den == T::zero() {
        f64::INFINITY
    } else {
        (num / den).f64()
    }
}

/// Converged state of one slab.
#[derive(Debug, Clone)]
pub struct PicardOutcome<T> {
    pub state: SlabState<T>,
    pub status: PicardStatus,
    /// Residuals of the last linear system at the returned state.
    pub residuals: Residuals,
    pub timings: PhaseTimings,
    /// Number of facet pressure unknowns pinned as gauge.
    pub gauge: usize,
    /// Linear solver work spent on this slab.
    pub solver: SolverStats,
}

/// Picard iteration on one slab, started from `x^0 = 0`. Iterate `k`
/// advects with iterate `k − 1`, so iterate 1 is the linear problem with
/// `w = 0` and the stopping denominators are `‖x^k‖∞`.
pub fn picard_slab<T: Real>(
    disc: &Discretization<T>,
    trace: &TraceField<T>,
    data: &dyn FlowData<T>,
    form: &FormOptions<T>,
    picard: &PicardOptions,
    solver: &mut FacetSolver<T>,
) -> Result<PicardOutcome<T>> {
    if !(picard.tol > 0.0) || picard.max_iters == 0 {
        return Err(Error::Config(
            "Picard tolerance must be positive and max_iters at least 1".into(),
        ));
    }
    let dirichlet = interpolate_dirichlet(disc.layout(), disc.slab(), disc.reference(), &|x| data.dirichlet(x));
    let source = |x: [T; 3]| data.source(x);
    let neumann = |x: [T; 3], n: [T; 3]| data.neumann(x, n);
    let loads = SlabLoads {
        source: &source,
        neumann: &neumann,
        trace: Some(trace.coeffs()),
        dirichlet: &dirichlet,
    };
    let start = SlabState::zeros(disc.layout());
    let mut previous = start.clone();
    let mut timings = PhaseTimings::default();
    let stats_before = solver.stats();
    let mut status = PicardStatus {
        iterations: 0,
        velocity_delta: f64::INFINITY,
        pressure_delta: f64::INFINITY,
        converged: false,
    };
    for it in 1..=picard.max_iters {
        let conv = (it > 1).then(|| disc.convection(&previous));
        let system = assemble(disc, form, conv.as_deref(), &loads)?;
        // The unadvected first iterate keeps its own factorization.
        let (state, t) = solver.solve_in_slot(&system, usize::from(it > 1))?;
        timings += t;
        let velocity_delta = relative_delta(state.u(), previous.u(), start.u());
        let pressure_delta = relative_delta(state.p(), previous.p(), start.p());
        status = PicardStatus {
            iterations: it,
            velocity_delta,
            pressure_delta,
            converged: velocity_delta.max(pressure_delta) < picard.tol,
        };
        if status.converged {
            let residuals = system.residuals(&state, disc);
            return Ok(PicardOutcome {
                state,
                status,
                residuals,
                timings,
                gauge: system.pinned().len(),
                solver: solver.stats() - stats_before,
            });
        }
        previous = state;
    }
    Err(Error::NoConvergence {
        iterations: status.iterations,
        last_delta: status.delta(),
    })
}

/// Mesh, time grid and discretization parameters of a march.
#[derive(Clone)]
pub struct MarchConfig<T> {
    pub degree: usize,
    /// Spatial mesh in its reference configuration.
    pub mesh: SpatialMesh<T>,
    pub motion: Arc<dyn DomainMotion<T>>,
    pub t0: T,
    pub dt: T,
    pub n_slabs: usize,
    pub form: FormOptions<T>,
    pub picard: PicardOptions,
}

/// Everything known about one solved slab, handed to the observer.
pub struct SlabOutcome<'a, T> {
    pub index: usize,
    pub disc: &'a Discretization<T>,
    pub picard: &'a PicardOutcome<T>,
    pub trace_in: &'a TraceField<T>,
    pub trace_out: &'a TraceField<T>,
}

/// Per-slab record kept after the slab's data is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabRecord {
    pub index: usize,
    pub t0: f64,
    pub t1: f64,
    pub status: PicardStatus,
    pub residuals: Residuals,
    /// `∫_{Ω(t1)} |u_h⁻|²`.
    pub energy: f64,
    pub gauge: usize,
    pub solver: SolverStats,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone)]
pub struct MarchSummary<T> {
    pub initial_trace: TraceField<T>,
    pub final_trace: TraceField<T>,
    /// `∫_{Ω(t0)} |u_h⁰|²`.
    pub initial_energy: f64,
    pub slabs: Vec<SlabRecord>,
    pub timings: PhaseTimings,
}

impl<T> MarchSummary<T> {
    /// Initial energy followed by the energy after every slab.
    pub fn energies(&self) -> Vec<f64> {
        std::iter::once(self.initial_energy)
            .chain(self.slabs.iter().map(|s| s.energy))
            .collect()
    }
}

/// Solves the slabs in order, handing each slab's top trace to the next.
pub fn march<T: Real>(
    config: &MarchConfig<T>,
    data: &dyn FlowData<T>,
    observer: &mut dyn FnMut(&SlabOutcome<'_, T>) -> Result<()>,
) -> Result<MarchSummary<T>> {
    if !(config.dt > T::zero()) || config.n_slabs == 0 {
        return Err(Error::Config("need a positive time step and at least one slab".into()));
    }
    let reference = Arc::new(ReferenceElement::<T>::new(config.degree)?);
    let motion = config.motion.as_ref();
    let time = |n: usize| config.t0 + T::of(n) * config.dt;
    let start = Instant::now();
    let mut bottom = move_mesh(&config.mesh, motion, time(0))?;
    let mut timings = PhaseTimings {
        mesh: start.elapsed().as_secs_f64(),
        ..Default::default()
    };
    let initial_trace = project_initial(&|x| data.initial_velocity(x), &bottom, time(0), &reference)?;
    let mut trace = initial_trace.clone();
    let mut solver = FacetSolver::new();
    let mut slabs = Vec::with_capacity(config.n_slabs);
    for n in 0..config.n_slabs {
        let wrap = |e: Error| Error::Slab {
            slab: n,
            source: Box::new(e),
        };
        let start = Instant::now();
        let top = move_mesh(&config.mesh, motion, time(n + 1)).map_err(wrap)?;
        let slab = extrude_slab(&bottom, &top, time(n), time(n + 1)).map_err(wrap)?;
        let disc = Discretization::new(slab, reference.clone()).map_err(wrap)?;
        let mesh_time = start.elapsed().as_secs_f64();
        let outcome = picard_slab(&disc, &trace, data, &config.form, &config.picard, &mut solver).map_err(wrap)?;
        let trace_out = TraceField::from_slab_top(&disc, &outcome.state, top.clone());
        observer(&SlabOutcome {
            index: n,
            disc: &disc,
            picard: &outcome,
            trace_in: &trace,
            trace_out: &trace_out,
        })
        .map_err(wrap)?;
        let mut t = outcome.timings;
        t.mesh += mesh_time;
        timings += t;
        slabs.push(SlabRecord {
            index: n,
            t0: time(n).f64(),
            t1: time(n + 1).f64(),
            status: outcome.status,
            residuals: outcome.residuals,
            energy: trace_out.energy().f64(),
            gauge: outcome.gauge,
            solver: outcome.solver,
            timings: t,
        });
        trace = trace_out;
        bottom = top;
    }
    Ok(MarchSummary {
        initial_energy: initial_trace.energy().f64(),
        initial_trace,
        final_trace: trace,
        slabs,
        timings,
    })
}
