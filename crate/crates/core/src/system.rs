//! Per-slab block system, static condensation and the facet solve.
//!
//! Each cell contributes `[A_K B_K; C_K D_K]`. `A_K` holds the full local
//! saddle point block (velocity and cell pressure) and is eliminated cell
//! by cell, leaving `S = D − C A⁻¹ B` on the free facet unknowns.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SparseColMatRef, SymbolicSparseColMat};
use faer::MatMut;
use serde::{Deserialize, Serialize};

use crate::dofs::{DofLayout, FacetDof};
use crate::element::{CellGeometry, ReferenceElement};
use crate::error::{Error, Result};
use crate::forms::{
    add_convection, add_pressure, add_rhs, add_viscous, CellConvection, LoadData, LocalBlocks, PenaltyLength,
};
use crate::linalg::DenseMatrix;
use crate::mesh::SlabMesh;
use crate::scalar::Real;

/// Static data of one slab: mesh, numbering and cell quadrature geometry.
#[derive(Debug, Clone)]
pub struct Discretization<T> {
    slab: SlabMesh<T>,
    reference: Arc<ReferenceElement<T>>,
    layout: DofLayout,
    cells: Vec<CellGeometry<T>>,
    facet_dofs: Vec<Vec<FacetDof>>,
}

impl<T: Real> Discretization<T> {
    pub fn new(slab: SlabMesh<T>, reference: Arc<ReferenceElement<T>>) -> Result<Self> {
        let layout = DofLayout::new(&slab, &reference);
        let cells = (0..slab.n_cells())
            .map(|c| CellGeometry::new(&slab, &reference, c))
            .collect::<Result<Vec<_>>>()?;
        let facet_dofs = cells
            .iter()
            .map(|g| {
                let faces: Vec<usize> = g.q_faces.iter().map(|f| f.facet).collect();
                layout.local_facet_dofs(&faces)
            })
            .collect();
        Ok(Self {
            slab,
            reference,
            layout,
            cells,
            facet_dofs,
        })
    }

    pub fn slab(&self) -> &SlabMesh<T> {
        &self.slab
    }

    pub fn reference(&self) -> &ReferenceElement<T> {
        &self.reference
    }

    pub fn reference_arc(&self) -> &Arc<ReferenceElement<T>> {
        &self.reference
    }

    pub fn layout(&self) -> &DofLayout {
        &self.layout
    }

    pub fn cell_geometry(&self, cell: usize) -> &CellGeometry<T> {
        &self.cells[cell]
    }

    pub fn cell_geometries(&self) -> &[CellGeometry<T>] {
        &self.cells
    }

    /// Global locations of the local facet unknowns of a cell.
    pub fn facet_dofs(&self, cell: usize) -> &[FacetDof] {
        &self.facet_dofs[cell]
    }

    /// Facet pressure unknowns fixed to zero when no Neumann facet exists.
    ///
    /// With velocity prescribed on the whole boundary every `c(t)` gives a
    /// kernel vector `(Π_{k-1} c, Π_k c)`, because the projections leave
    /// `b_h` unchanged and `∇_x c = 0`. On a slab these span `k + 2`
    /// dimensions, the moments of `c` against `P_{k+1}(t)`. The gauge pins
    /// `k + 2` facet pressure unknowns chosen by column pivoting on the
    /// facet part of that kernel, so its restriction to them is invertible.
    pub fn pressure_gauge(&self) -> Vec<usize> {
        let n_ker = self.layout.degree() + 2;
        let nb2 = self.layout.n_facet_basis();
        let (t0, dt) = (self.slab.time_interval().0, self.slab.dt());
        let rule = self.reference.facet_rule();
        let chi = self.reference.chi();
        let two = T::lit(2.0);
        // columns[dof][j]: moment of Legendre-like P_j(2τ − 1) against χ_i.
        let mut columns: Vec<Vec<T>> = Vec::with_capacity(self.layout.n_pbar());
        for &f in self.layout.q_facets() {
            let taus: Vec<T> = rule
                .points()
                .iter()
                .map(|s| two * (self.slab.facet_point(f, [s[0], s[1]])[0] - t0) / dt - T::one())
                .collect();
            for i in 0..nb2 {
                columns.push(
                    (0..n_ker)
                        .map(|j| {
                            rule.weights()
                                .iter()
                                .zip(&taus)
                                .enumerate()
                                .map(|(q, (&w, &tau))| w * chi[q][i] * tau.powi(j as i32))
                                .sum()
                        })
                        .collect(),
                );
            }
        }
        let norm2 = |c: &[T]| c.iter().map(|v| *v * *v).sum::<T>();
        let mut chosen = Vec::with_capacity(n_ker);
        for _ in 0..n_ker {
            let best = (0..columns.len())
                .filter(|i| !chosen.contains(i))
                .fold(None::<(usize, T)>, |acc, i| {
                    let v = norm2(&columns[i]);
                    match acc {
                        Some((_, bv)) if bv >= v => acc,
                        _ => Some((i, v)),
                    }
                })
                .expect("enough facet pressure unknowns")
                .0;
            chosen.push(best);
            let pivot = columns[best].clone();
            let pn = norm2(&pivot);
            for c in columns.iter_mut() {
                let proj = c.iter().zip(&pivot).map(|(a, b)| *a * *b).sum::<T>() / pn;
                for (x, p) in c.iter_mut().zip(&pivot) {
                    *x -= proj * *p;
                }
            }
        }
        chosen.sort_unstable();
        let base = self.layout.facet_pressure(0);
        chosen.into_iter().map(|i| base + i).collect()
    }

    /// The advecting field `(u_h, ū_h)` of a state restricted to each cell.
    pub fn convection(&self, state: &SlabState<T>) -> Vec<CellConvection<T>> {
        let nb = self.layout.n_velocity_basis();
        let nb2 = self.layout.n_facet_basis();
        (0..self.layout.n_cells())
            .map(|cell| {
                let u0 = self.layout.cell_velocity(cell, 0);
                let w = state.w[u0..u0 + 2 * nb].to_vec();
                let wbar = self.facet_dofs[cell]
                    .chunks(3 * nb2)
                    .map(|face| face[..2 * nb2].iter().map(|&d| state.facet_value(d)).collect())
                    .collect();
                CellConvection { w, wbar }
            })
            .collect()
    }
}

/// Which variant of the time derivative and convection form is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    /// Stokes only: `t_h` is left out.
    Omitted,
    /// Space-time normals on Q-faces.
    SpaceTime,
    /// Grid-velocity form on Q-faces.
    Ale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormOptions<T> {
    pub nu: T,
    /// Penalty `α`, typically `6 k²`.
    pub alpha: T,
    pub penalty_length: PenaltyLength,
    pub transport: Transport,
    /// Apply [`Discretization::pressure_gauge`] when the slab has no
    /// Neumann facet.
    pub pin_pressure: bool,
}

/// Data entering the right-hand side of one slab.
pub struct SlabLoads<'a, T> {
    pub source: &'a dyn Fn([T; 3]) -> [T; 2],
    pub neumann: &'a dyn Fn([T; 3], [T; 3]) -> [T; 2],
    /// Incoming trace, `2 C(k+2,2)` facet-basis coefficients per triangle.
    pub trace: Option<&'a [T]>,
    /// Prescribed facet velocity on Dirichlet facets.
    pub dirichlet: &'a [T],
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub mesh: f64,
    pub assembly: f64,
    pub condensation: f64,
    pub solve: f64,
    pub back_substitution: f64,
}

impl std::ops::AddAssign for PhaseTimings {
    fn add_assign(&mut self, o: Self) {
        self.mesh += o.mesh;
        self.assembly += o.assembly;
        self.condensation += o.condensation;
        self.solve += o.solve;
        self.back_substitution += o.back_substitution;
    }
}

#[derive(Debug, Clone)]
struct CondensedCell<T> {
    blocks: LocalBlocks<T>,
    /// Local positions and global indices of the free facet unknowns.
    free: Vec<(usize, usize)>,
    /// `A⁻¹ B` restricted to the free columns.
    ainv_b: DenseMatrix<T>,
    /// `A⁻¹ (F − B_c x_c)`.
    ainv_f: Vec<T>,
}

/// Assembled and condensed system of one slab.
#[derive(Debug, Clone)]
pub struct SlabSystem<T> {
    n_cell_dofs: usize,
    n_facet_dofs: usize,
    n_u: usize,
    n_ubar: usize,
    cells: Vec<CondensedCell<T>>,
    cell_offsets: Vec<Vec<usize>>,
    dirichlet: Vec<T>,
    pattern: Vec<Pair<usize, usize>>,
    values: Vec<T>,
    rhs: Vec<T>,
    pinned: Vec<usize>,
    timings: PhaseTimings,
}

/// Coefficients of one slab iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabState<T> {
    /// Cell vector `[U, P]`.
    pub w: Vec<T>,
    /// Facet vector `[Ū, P̄]`.
    pub wbar: Vec<T>,
    /// Prescribed facet velocity on Dirichlet facets.
    pub dirichlet: Vec<T>,
    n_u: usize,
    n_ubar: usize,
}

impl<T: Real> SlabState<T> {
    pub fn zeros(layout: &DofLayout) -> Self {
        Self {
            w: vec![T::zero(); layout.n_cell_dofs()],
            wbar: vec![T::zero(); layout.n_facet_dofs()],
            dirichlet: vec![T::zero(); layout.n_constrained()],
            n_u: layout.n_u(),
            n_ubar: layout.n_ubar(),
        }
    }

    pub fn u(&self) -> &[T] {
        &self.w[..self.n_u]
    }

    pub fn p(&self) -> &[T] {
        &self.w[self.n_u..]
    }

    pub fn ubar(&self) -> &[T] {
        &self.wbar[..self.n_ubar]
    }

    pub fn pbar(&self) -> &[T] {
        &self.wbar[self.n_ubar..]
    }

    pub fn facet_value(&self, dof: FacetDof) -> T {
        match dof {
            FacetDof::Free(i) => self.wbar[i],
            FacetDof::Constrained(i) => self.dirichlet[i],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.wbar).all(|v| v.is_finite())
    }
}

/// Relative residuals of the uncondensed equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Cell rows `A W + B W̄ − F`.
    pub cell: f64,
    /// Free facet rows `C W + D W̄ − G`.
    pub facet: f64,
}

/// Builds the local blocks, folds Dirichlet values into the loads and
/// condenses every cell.
pub fn assemble<T: Real>(
    disc: &Discretization<T>,
    options: &FormOptions<T>,
    conv: Option<&[CellConvection<T>]>,
    loads: &SlabLoads<'_, T>,
) -> Result<SlabSystem<T>> {
    let layout = disc.layout();
    let reference = disc.reference();
    if loads.dirichlet.len() != layout.n_constrained() {
        return Err(Error::Config(format!(
            "expected {} Dirichlet values, got {}",
            layout.n_constrained(),
            loads.dirichlet.len()
        )));
    }
    let trace_len = 2 * layout.n_facet_basis();
    if let Some(tr) = loads.trace {
        if tr.len() != trace_len * disc.slab().n_triangles() {
            return Err(Error::Config("trace length does not match the spatial mesh".into()));
        }
    }
    let pinned = if options.pin_pressure && !disc.slab().has_neumann() {
        disc.pressure_gauge()
    } else {
        Vec::new()
    };

    let mut timings = PhaseTimings::default();
    let mut cells = Vec::with_capacity(layout.n_cells());
    let mut pattern = Vec::new();
    let mut values = Vec::new();
    let mut rhs = vec![T::zero(); layout.n_facet_dofs()];
    for (cell, geom) in disc.cell_geometries().iter().enumerate() {
        let start = Instant::now();
        let mut blocks = LocalBlocks::for_cell(reference, geom);
        add_viscous(
            &mut blocks,
            reference,
            geom,
            options.nu,
            options.alpha,
            options.penalty_length,
        );
        add_pressure(&mut blocks, reference, geom);
        if options.transport != Transport::Omitted {
            let c = conv.map(|c| &c[cell]);
            add_convection(&mut blocks, reference, geom, c, options.transport == Transport::Ale);
        }
        let tri = disc.slab().cell_triangle(cell);
        let data = LoadData {
            source: loads.source,
            neumann: loads.neumann,
            trace: loads.trace.map(|t| &t[tri * trace_len..(tri + 1) * trace_len]),
        };
        add_rhs(&mut blocks, reference, geom, &data);
        let mid = Instant::now();
        timings.assembly += (mid - start).as_secs_f64();

        let condensed = condense_cell(cell, blocks, disc.facet_dofs(cell), loads.dirichlet)?;
        let (ca, ainv_f) = (&condensed.blocks.c, &condensed.ainv_f);
        let mut g = condensed.blocks.g.clone();
        subtract_constrained(&condensed.blocks.d, disc.facet_dofs(cell), loads.dirichlet, &mut g);
        for &(li, gi) in &condensed.free {
            let mut r = g[li];
            for (k, &v) in ainv_f.iter().enumerate() {
                r -= ca[(li, k)] * v;
            }
            let row_pinned = pinned.contains(&gi);
            if !row_pinned {
                rhs[gi] += r;
            }
            for (jj, &(lj, gj)) in condensed.free.iter().enumerate() {
                if row_pinned || pinned.contains(&gj) {
                    continue;
                }
                let mut s = condensed.blocks.d[(li, lj)];
                for k in 0..ca.cols() {
                    s -= ca[(li, k)] * condensed.ainv_b[(k, jj)];
                }
                pattern.push(Pair::new(gi, gj));
                values.push(s);
            }
        }
        timings.condensation += mid.elapsed().as_secs_f64();
        cells.push(condensed);
    }
    for &p in &pinned {
        pattern.push(Pair::new(p, p));
        values.push(T::one());
    }
    let cell_offsets = (0..layout.n_cells())
        .map(|c| layout.local_cell_dofs(c).collect())
        .collect();
    Ok(SlabSystem {
        n_cell_dofs: layout.n_cell_dofs(),
        n_facet_dofs: layout.n_facet_dofs(),
        n_u: layout.n_u(),
        n_ubar: layout.n_ubar(),
        cells,
        cell_offsets,
        dirichlet: loads.dirichlet.to_vec(),
        pattern,
        values,
        rhs,
        pinned,
        timings,
    })
}

fn subtract_constrained<T: Real>(m: &DenseMatrix<T>, dofs: &[FacetDof], dirichlet: &[T], out: &mut [T]) {
    for (j, d) in dofs.iter().enumerate() {
        if let FacetDof::Constrained(i) = *d {
            let x = dirichlet[i];
            if x != T::zero() {
                for (r, o) in out.iter_mut().enumerate() {
                    *o -= m[(r, j)] * x;
                }
            }
        }
    }
}

fn condense_cell<T: Real>(
    cell: usize,
    blocks: LocalBlocks<T>,
    dofs: &[FacetDof],
    dirichlet: &[T],
) -> Result<CondensedCell<T>> {
    let lu = blocks.a.lu().ok_or(Error::SingularLocalBlock { cell })?;
    let free: Vec<(usize, usize)> = dofs
        .iter()
        .enumerate()
        .filter_map(|(l, d)| match d {
            FacetDof::Free(g) => Some((l, *g)),
            FacetDof::Constrained(_) => None,
        })
        .collect();
    let bf = DenseMatrix::from_fn(blocks.n_cell(), free.len(), |i, j| blocks.b[(i, free[j].0)]);
    let ainv_b = lu.solve_matrix(&bf);
    let mut f = blocks.f.clone();
    subtract_constrained(&blocks.b, dofs, dirichlet, &mut f);
    let ainv_f = lu.solve(&f);
    Ok(CondensedCell {
        blocks,
        free,
        ainv_b,
        ainv_f,
    })
}

struct SymbolicCache {
    pattern: Vec<Pair<usize, usize>>,
    n: usize,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    lu: SymbolicLu<usize>,
}

/// Work done by a [`FacetSolver`] since construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub factorizations: usize,
    /// Solves answered by GMRES preconditioned with an older factorization.
    pub reused: usize,
    pub krylov_iterations: usize,
}

impl std::ops::Sub for SolverStats {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        Self {
            factorizations: self.factorizations - o.factorizations,
            reused: self.reused - o.reused,
            krylov_iterations: self.krylov_iterations - o.krylov_iterations,
        }
    }
}

/// Default GMRES budget before a stale factorization is replaced.
pub const DEFAULT_KRYLOV_BUDGET: usize = 20;

/// Default Krylov iteration count above which a factorization is replaced
/// before the next solve in its slot.
pub const DEFAULT_REFRESH_AFTER: usize = 6;

/// Normwise backward error accepted from a preconditioned GMRES solve, in
/// units of machine epsilon. A fresh factorization with one refinement step
/// lands at a few epsilon on the condensed systems.
pub const KRYLOV_BACKWARD_ERROR: f64 = 16.0;

/// Number of numeric factorizations a [`FacetSolver`] can hold.
pub const FACTOR_SLOTS: usize = 2;

/// Sparse solver for `S`. Keeps the symbolic factorization while the
/// sparsity pattern is unchanged, and numeric factorizations as GMRES
/// preconditioners for later systems with the same pattern. A system is
/// refactorized only when GMRES misses the backward error target within
/// the iteration budget.
///
/// Factorizations live in slots so that systems from different families,
/// such as the unadvected first Picard iterate and the advected ones, each
/// keep a close preconditioner.
pub struct FacetSolver<T: Real> {
    cache: Option<SymbolicCache>,
    factors: [Option<Factor<T>>; FACTOR_SLOTS],
    krylov_budget: usize,
    refresh_after: usize,
    stats: SolverStats,
}

impl<T: Real> Default for FacetSolver<T> {
    fn default() -> Self {
        Self::with_krylov(DEFAULT_KRYLOV_BUDGET, DEFAULT_REFRESH_AFTER)
    }
}

impl<T: Real> std::fmt::Debug for FacetSolver<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FacetSolver")
            .field("symbolic", &self.cache.is_some())
            .field("numeric", &self.factors.iter().filter(|f| f.is_some()).count())
            .field("krylov_budget", &self.krylov_budget)
            .field("stats", &self.stats)
            .finish()
    }
}

fn norm_inf<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y)
}

fn lu_solve<T: Real>(lu: &Lu<usize, T>, b: &[T]) -> Vec<T> {
    let mut x = b.to_vec();
    let n = x.len();
    lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
    x
}

/// `b − A x` for a column-compressed `A` without duplicates.
fn csc_residual<T: Real>(a: SparseColMatRef<'_, usize, T>, b: &[T], x: &[T]) -> Vec<T> {
    let mut r = b.to_vec();
    let (col_ptr, row_idx, val) = (a.symbolic().col_ptr(), a.symbolic().row_idx(), a.val());
    for (j, &xj) in x.iter().enumerate() {
        for k in col_ptr[j]..col_ptr[j + 1] {
            r[row_idx[k]] -= val[k] * xj;
        }
    }
    r
}

fn csc_norm_inf<T: Real>(a: SparseColMatRef<'_, usize, T>) -> T {
    let mut rows = vec![T::zero(); a.nrows()];
    for (&i, &v) in a.symbolic().row_idx().iter().zip(a.val()) {
        rows[i] += v.abs();
    }
    norm_inf(&rows)
}

struct Factor<T: Real> {
    lu: Lu<usize, T>,
    /// Set after a slow Krylov solve; the next solve in the slot refactors.
    stale: bool,
}

impl<T: Real> FacetSolver<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Factorizes every system; no Krylov reuse.
    pub fn direct() -> Self {
        Self::with_krylov(0, 0)
    }

    /// GMRES gives up after `budget` iterations; a solve that needed more
    /// than `refresh_after` marks its factorization for replacement.
    pub fn with_krylov(budget: usize, refresh_after: usize) -> Self {
        Self {
            cache: None,
            factors: [None, None],
            krylov_budget: budget,
            refresh_after,
            stats: SolverStats::default(),
        }
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    fn symbolic(&mut self, n: usize, pattern: &[Pair<usize, usize>]) -> Result<&SymbolicCache> {
        let reuse = matches!(&self.cache, Some(c) if c.n == n && c.pattern == pattern);
        if !reuse {
            self.factors = [None, None];
            let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, pattern)
                .map_err(|e| Error::SingularGlobal(format!("invalid sparsity pattern: {e:?}")))?;
            let lu = SymbolicLu::try_new(symbolic.as_ref())
                .map_err(|e| Error::SingularGlobal(format!("symbolic factorization failed: {e:?}")))?;
            self.cache = Some(SymbolicCache {
                pattern: pattern.to_vec(),
                n,
                symbolic,
                argsort,
                lu,
            });
        }
        Ok(self.cache.as_ref().expect("cache filled"))
    }

    /// Fresh numeric factorization with a null-space probe, then a direct
    /// solve with one step of iterative refinement.
    fn factorize_and_solve(&mut self, mat: SparseColMatRef<'_, usize, T>, b: &[T], slot: usize) -> Result<Vec<T>> {
        let cache = self.cache.as_ref().expect("symbolic factorization first");
        let n = b.len();
        self.factors[slot] = None;
        let lu = Lu::try_new_with_symbolic(cache.lu.clone(), mat)
            .map_err(|e| Error::SingularGlobal(format!("numeric factorization failed: {e:?}")))?;
        self.stats.factorizations += 1;

        // A consistent right-hand side built from a fixed vector must give
        // that vector back unless S has a null space.
        let probe: Vec<T> = (0..n)
            .map(|i| T::lit(0.5) + T::lit(((i * 7919) % 1009) as f64 / 1009.0))
            .collect();
        let zero = vec![T::zero(); n];
        let sp: Vec<T> = csc_residual(mat, &zero, &probe).into_iter().map(|v| -v).collect();
        let back = lu_solve(&lu, &sp);
        let err = back
            .iter()
            .zip(&probe)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        let limit = T::lit(1e-4).max(T::epsilon().sqrt());
        if !(err <= limit * T::lit(1.5)) {
            return Err(Error::SingularGlobal(format!(
                "facet system is numerically singular (probe error {:.3e}); an all-Dirichlet slab needs pressure pinning",
                err.f64()
            )));
        }

        let mut x = lu_solve(&lu, b);
        let r = csc_residual(mat, b, &x);
        for (x, d) in x.iter_mut().zip(lu_solve(&lu, &r)) {
            *x += d;
        }
        self.factors[slot] = Some(Factor { lu, stale: false });
        Ok(x)
    }

    /// Right-preconditioned GMRES with modified Gram-Schmidt, started from
    /// the preconditioned right-hand side. Returns `None` when the backward
    /// error target is not met within the budget.
    fn krylov(&self, mat: SparseColMatRef<'_, usize, T>, b: &[T], lu: &Lu<usize, T>) -> Option<(Vec<T>, usize)> {
        let tol = T::lit(KRYLOV_BACKWARD_ERROR) * T::epsilon();
        let s_norm = csc_norm_inf(mat);
        let b_norm = norm_inf(b);
        let bound = |x: &[T]| tol * (s_norm * norm_inf(x) + b_norm);

        let x0 = lu_solve(lu, b);
        let r0 = csc_residual(mat, b, &x0);
        let bound0 = bound(&x0);
        if norm_inf(&r0) <= bound0 {
            return Some((x0, 0));
        }
        let beta = dot(&r0, &r0).sqrt();
        if !(beta > T::zero()) || !beta.is_finite() {
            return None;
        }
        let m = self.krylov_budget;
        let zero = vec![T::zero(); b.len()];
        let mut v: Vec<Vec<T>> = vec![r0.iter().map(|&r| r / beta).collect()];
        let mut z: Vec<Vec<T>> = Vec::with_capacity(m);
        let mut h: Vec<Vec<T>> = Vec::with_capacity(m);
        let (mut cs, mut sn): (Vec<T>, Vec<T>) = (Vec::with_capacity(m), Vec::with_capacity(m));
        let mut g = vec![beta];
        for j in 0..m {
            let zj = lu_solve(lu, &v[j]);
            let mut w: Vec<T> = csc_residual(mat, &zero, &zj).into_iter().map(|v| -v).collect();
            z.push(zj);
            let mut hj = vec![T::zero(); j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                for (wk, &vk) in w.iter_mut().zip(vi) {
                    *wk -= hij * vk;
                }
                hj[i] = hij;
            }
            let norm_w = dot(&w, &w).sqrt();
            hj[j + 1] = norm_w;
            for i in 0..j {
                let (a, c) = (hj[i], hj[i + 1]);
                hj[i] = cs[i] * a + sn[i] * c;
                hj[i + 1] = -sn[i] * a + cs[i] * c;
            }
            let rho = hj[j].hypot(hj[j + 1]);
            if !(rho > T::zero()) {
                return None;
            }
            cs.push(hj[j] / rho);
            sn.push(hj[j + 1] / rho);
            hj[j] = rho;
            hj[j + 1] = T::zero();
            g.push(-sn[j] * g[j]);
            g[j] = cs[j] * g[j];
            h.push(hj);

            // The Givens estimate is a 2-norm and bounds the ∞-norm, so the
            // true residual is only checked once the estimate passes.
            let last = j + 1 == m || !(norm_w > T::zero());
            if g[j + 1].abs() > bound0 && !last {
                v.push(w.iter().map(|&wk| wk / norm_w).collect());
                continue;
            }
            let mut y = g[..=j].to_vec();
            for i in (0..=j).rev() {
                for l in i + 1..=j {
                    let t = h[l][i] * y[l];
                    y[i] -= t;
                }
                y[i] /= h[i][i];
            }
            let mut x = x0.clone();
            for (yl, zl) in y.iter().zip(&z) {
                for (xk, &zk) in x.iter_mut().zip(zl) {
                    *xk += *yl * zk;
                }
            }
            if norm_inf(&csc_residual(mat, b, &x)) <= bound(&x) {
                return Some((x, j + 1));
            }
            if last {
                return None;
            }
            v.push(w.iter().map(|&wk| wk / norm_w).collect());
        }
        None
    }

    /// Solves for `W̄`, reusing an older factorization when possible, and
    /// back-substitutes `W`.
    pub fn solve(&mut self, system: &SlabSystem<T>) -> Result<(SlabState<T>, PhaseTimings)> {
        self.solve_in_slot(system, 0)
    }

    /// [`Self::solve`] with the factorization taken from and stored in `slot`.
    pub fn solve_in_slot(&mut self, system: &SlabSystem<T>, slot: usize) -> Result<(SlabState<T>, PhaseTimings)> {
        if slot >= FACTOR_SLOTS {
            return Err(Error::Config(format!("factor slot {slot} out of range")));
        }
        let mut timings = system.timings;
        let start = Instant::now();
        let cache = self.symbolic(system.n_facet_dofs, &system.pattern)?;
        let mat = SparseColMat::<usize, T>::new_from_argsort(cache.symbolic.clone(), &cache.argsort, &system.values)
            .map_err(|e| Error::SingularGlobal(format!("{e:?}")))?;
        let reused = match &self.factors[slot] {
            Some(f) if !f.stale && self.krylov_budget > 0 => self.krylov(mat.as_ref(), &system.rhs, &f.lu),
            _ => None,
        };
        let wbar = match reused {
            Some((x, its)) => {
                self.stats.reused += 1;
                self.stats.krylov_iterations += its;
                if its > self.refresh_after {
                    if let Some(f) = &mut self.factors[slot] {
                        f.stale = true;
                    }
                }
                x
            }
            None => self.factorize_and_solve(mat.as_ref(), &system.rhs, slot)?,
        };
        timings.solve += start.elapsed().as_secs_f64();

        let start = Instant::now();
        let mut w = vec![T::zero(); system.n_cell_dofs];
        for (cell, c) in system.cells.iter().enumerate() {
            for (i, &gi) in system.cell_offsets[cell].iter().enumerate() {
                let mut v = c.ainv_f[i];
                for (jj, &(_, gj)) in c.free.iter().enumerate() {
                    v -= c.ainv_b[(i, jj)] * wbar[gj];
                }
                w[gi] = v;
            }
        }
        timings.back_substitution += start.elapsed().as_secs_f64();
        let state = SlabState {
            w,
            wbar,
            dirichlet: system.dirichlet.clone(),
            n_u: system.n_u,
            n_ubar: system.n_ubar,
        };
        if !state.is_finite() {
            return Err(Error::SingularGlobal("non-finite solution".into()));
        }
        Ok((state, timings))
    }
}

/// One-shot condensed solve with a fresh factorization.
pub fn condense_and_solve<T: Real>(system: &SlabSystem<T>) -> Result<SlabState<T>> {
    FacetSolver::direct().solve(system).map(|(s, _)| s)
}

impl<T: Real> SlabSystem<T> {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_facet_dofs(&self) -> usize {
        self.n_facet_dofs
    }

    pub fn n_cell_dofs(&self) -> usize {
        self.n_cell_dofs
    }

    /// Unmodified local blocks of a cell, before Dirichlet folding.
    pub fn cell_blocks(&self, cell: usize) -> &LocalBlocks<T> {
        &self.cells[cell].blocks
    }

    /// Global positions of the local cell unknowns.
    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        &self.cell_offsets[cell]
    }

    pub fn dirichlet(&self) -> &[T] {
        &self.dirichlet
    }

    /// Facet unknowns fixed to zero as pressure gauge.
    pub fn pinned(&self) -> &[usize] {
        &self.pinned
    }

    pub fn reduced_rhs(&self) -> &[T] {
        &self.rhs
    }

    /// Replaces the condensed right-hand side.
    pub fn with_reduced_rhs(mut self, rhs: Vec<T>) -> Self {
        assert_eq!(rhs.len(), self.n_facet_dofs);
        self.rhs = rhs;
        self
    }

    pub fn timings(&self) -> PhaseTimings {
        self.timings
    }

    /// Condensed matrix as `(row, col, value)` with duplicates summed.
    pub fn condensed_triplets(&self) -> Vec<(usize, usize, T)> {
        let mut t: Vec<(usize, usize, T)> = self
            .pattern
            .iter()
            .zip(&self.values)
            .map(|(p, &v)| (p.row, p.col, v))
            .collect();
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut out: Vec<(usize, usize, T)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        out
    }

    /// `S x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n_facet_dofs];
        for (p, &v) in self.pattern.iter().zip(&self.values) {
            y[p.row] += v * x[p.col];
        }
        y
    }

    /// `b − S x` for the condensed right-hand side `b`.
    pub fn residual(&self, x: &[T]) -> Vec<T> {
        let mut r = self.rhs.clone();
        for (p, &v) in self.pattern.iter().zip(&self.values) {
            r[p.row] -= v * x[p.col];
        }
        r
    }

    /// `‖S‖∞`, the largest absolute row sum.
    pub fn norm_inf(&self) -> T {
        let mut rows = vec![T::zero(); self.n_facet_dofs];
        for (p, &v) in self.pattern.iter().zip(&self.values) {
            rows[p.row] += v.abs();
        }
        norm_inf(&rows)
    }

    /// Relative residuals of the uncondensed equations at `state`. Each row
    /// residual is scaled by the largest row magnitude `Σ|terms|`.
    pub fn residuals(&self, state: &SlabState<T>, disc: &Discretization<T>) -> Residuals {
        let mut cell_res = T::zero();
        let mut cell_scale = T::zero();
        let mut facet_r = vec![T::zero(); self.n_facet_dofs];
        let mut facet_s = vec![T::zero(); self.n_facet_dofs];
        for (cell, c) in self.cells.iter().enumerate() {
            let b = &c.blocks;
            let wk: Vec<T> = self.cell_offsets[cell].iter().map(|&g| state.w[g]).collect();
            let xk: Vec<T> = disc.facet_dofs(cell).iter().map(|&d| state.facet_value(d)).collect();
            for i in 0..b.n_cell() {
                let (mut r, mut s) = (-b.f[i], b.f[i].abs());
                for (j, &x) in wk.iter().enumerate() {
                    r += b.a[(i, j)] * x;
                    s += (b.a[(i, j)] * x).abs();
                }
                for (j, &x) in xk.iter().enumerate() {
                    r += b.b[(i, j)] * x;
                    s += (b.b[(i, j)] * x).abs();
                }
                cell_res = cell_res.max(r.abs());
                cell_scale = cell_scale.max(s);
            }
            for &(li, gi) in &c.free {
                let (mut r, mut s) = (-b.g[li], b.g[li].abs());
                for (j, &x) in wk.iter().enumerate() {
                    r += b.c[(li, j)] * x;
                    s += (b.c[(li, j)] * x).abs();
                }
                for (j, &x) in xk.iter().enumerate() {
                    r += b.d[(li, j)] * x;
                    s += (b.d[(li, j)] * x).abs();
                }
                facet_r[gi] += r;
                facet_s[gi] += s;
            }
        }
        let facet_res = facet_r.iter().fold(T::zero(), |m, r| m.max(r.abs()));
        let facet_scale = facet_s.iter().fold(T::zero(), |m, &s| m.max(s));
        let rel = |r: T, s: T| if s > T::zero() { (r / s).f64() } else { r.f64() };
        Residuals {
            cell: rel(cell_res, cell_scale),
            facet: rel(facet_res, facet_scale),
        }
    }

    /// Writes `S` in Matrix Market coordinate format.
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let t = self.condensed_triplets();
        writeln!(out, "%%MatrixMarket matrix coordinate real general").map_err(io)?;
        writeln!(out, "{} {} {}", self.n_facet_dofs, self.n_facet_dofs, t.len()).map_err(io)?;
        for (r, c, v) in t {
            writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v.f64()).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}
