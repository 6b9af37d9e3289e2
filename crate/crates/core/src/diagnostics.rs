//! Error norms, conservation certificates, case runs and convergence tables.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::MAX_DEGREE;
use crate::element::MIN_VELOCITY_DEGREE;
use crate::error::{Error, Result};
use crate::forms::PenaltyLength;
use crate::marching::{march, FlowData, MarchConfig, PicardOptions, SlabOutcome};
use crate::mesh::{triangulate_unit_square, BoundaryTag, DomainMotion, SinusoidalMotion, SpatialMesh, StaticMotion};
use crate::problem::{EnergyDecay, ExactSolution, Manufactured, UniformFlow};
use crate::quadrature::{make_quadrature, QuadratureRule};
use crate::scalar::Real;
use crate::system::{Discretization, FormOptions, PhaseTimings, SlabState, SolverStats, Transport};

/// Cell velocity `u_h` at reference coordinates of a cell.
pub fn cell_velocity<T: Real>(disc: &Discretization<T>, state: &SlabState<T>, cell: usize, xi: &[T; 3]) -> [T; 2] {
    let layout = disc.layout();
    let nb = layout.n_velocity_basis();
    let basis = disc.reference().velocity_basis();
    let mut out = [T::zero(); 2];
    for (c, o) in out.iter_mut().enumerate() {
        let off = layout.cell_velocity(cell, c);
        *o = basis.combine(&state.w[off..off + nb], xi);
    }
    out
}

/// Cell pressure `p_h` at reference coordinates of a cell.
pub fn cell_pressure<T: Real>(disc: &Discretization<T>, state: &SlabState<T>, cell: usize, xi: &[T; 3]) -> T {
    let layout = disc.layout();
    let off = layout.cell_pressure(cell);
    disc.reference()
        .pressure_basis()
        .combine(&state.w[off..off + layout.n_pressure_basis()], xi)
}

/// Quadrature exactness used for error norms.
pub fn norm_exactness(k: usize) -> usize {
    2 * k + 3
}

/// Squared L2 errors of one slab against an exact solution.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SquaredErrors {
    pub velocity: f64,
    pub pressure: f64,
}

impl std::ops::AddAssign for SquaredErrors {
    fn add_assign(&mut self, o: Self) {
        self.velocity += o.velocity;
        self.pressure += o.pressure;
    }
}

/// `‖u − u_h‖²` and `‖p − p_h‖²` over the cells of a slab.
pub fn space_time_errors<T: Real>(
    disc: &Discretization<T>,
    state: &SlabState<T>,
    exact: &dyn ExactSolution<T>,
    rule: &QuadratureRule<T>,
) -> SquaredErrors {
    let mut e = SquaredErrors::default();
    for cell in 0..disc.slab().n_cells() {
        let map = &disc.cell_geometry(cell).map;
        let det = map.det().abs();
        for (xi, w) in rule.iter() {
            let x = map.map(xi);
            let u = exact.velocity(x);
            let uh = cell_velocity(disc, state, cell, xi);
            let p = exact.pressure(x);
            let ph = cell_pressure(disc, state, cell, xi);
            let jw = (w * det).f64();
            e.velocity += jw * ((u[0] - uh[0]).f64().powi(2) + (u[1] - uh[1]).f64().powi(2));
            e.pressure += jw * (p - ph).f64().powi(2);
        }
    }
    e
}

/// `‖u − u_h‖²` and `‖p − p_h‖²` on `Ω(t^{n+1})`, from the cell values on
/// the top facets.
pub fn top_errors<T: Real>(
    disc: &Discretization<T>,
    state: &SlabState<T>,
    exact: &dyn ExactSolution<T>,
    rule: &QuadratureRule<T>,
) -> SquaredErrors {
    let slab = disc.slab();
    let mut e = SquaredErrors::default();
    for tri in 0..slab.n_triangles() {
        let f = slab.top_facet(tri);
        let facet = slab.facet(f);
        let cell = facet.sides[0].cell;
        let map = &disc.cell_geometry(cell).map;
        let two_area = facet.area + facet.area;
        for (s, w) in rule.iter() {
            let x = slab.facet_point(f, [s[0], s[1]]);
            let xi = map.inverse(&x);
            let u = exact.velocity(x);
            let uh = cell_velocity(disc, state, cell, &xi);
            let p = exact.pressure(x);
            let ph = cell_pressure(disc, state, cell, &xi);
            let jw = (w * two_area).f64();
            e.velocity += jw * ((u[0] - uh[0]).f64().powi(2) + (u[1] - uh[1]).f64().powi(2));
            e.pressure += jw * (p - ph).f64().powi(2);
        }
    }
    e
}

/// Pointwise and integral size of `∇·u_h` and of the velocity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DivergenceStats {
    /// Largest `|∇·u_h|` at the cell quadrature points.
    pub max: f64,
    /// `‖∇·u_h‖²` over the slab.
    pub l2_squared: f64,
    /// Largest `|u_h|` component at the same points.
    pub velocity_scale: f64,
}

impl DivergenceStats {
    pub fn merge(&mut self, o: &Self) {
        self.max = self.max.max(o.max);
        self.l2_squared += o.l2_squared;
        self.velocity_scale = self.velocity_scale.max(o.velocity_scale);
    }
}

pub fn divergence_stats<T: Real>(disc: &Discretization<T>, state: &SlabState<T>) -> DivergenceStats {
    let layout = disc.layout();
    let nb = layout.n_velocity_basis();
    let phi = disc.reference().phi();
    let mut out = DivergenceStats::default();
    for (cell, geom) in disc.cell_geometries().iter().enumerate() {
        let u1 = &state.w[layout.cell_velocity(cell, 0)..][..nb];
        let u2 = &state.w[layout.cell_velocity(cell, 1)..][..nb];
        for (q, &jw) in geom.jw.iter().enumerate() {
            let (mut div, mut a, mut b) = (T::zero(), T::zero(), T::zero());
            for i in 0..nb {
                div += u1[i] * geom.dphi[q][i][1] + u2[i] * geom.dphi[q][i][2];
                a += u1[i] * phi[q][i];
                b += u2[i] * phi[q][i];
            }
            out.max = out.max.max(div.abs().f64());
            out.l2_squared += (jw * div * div).f64();
            out.velocity_scale = out.velocity_scale.max(a.abs().f64()).max(b.abs().f64());
        }
    }
    out
}

/// `Σ ‖[[u_h·n]]‖²` over interior Q-facets plus `Σ ‖(u_h − ū_h)·n‖²` over
/// boundary Q-facets, with `n` the spatial part of the space-time normal.
pub fn normal_jump_squared<T: Real>(disc: &Discretization<T>, state: &SlabState<T>) -> f64 {
    let layout = disc.layout();
    let slab = disc.slab();
    let nq = disc.reference().facet_rule().len();
    let nb = layout.n_velocity_basis();
    let nb2 = layout.n_facet_basis();
    let chi = disc.reference().chi();
    let mut jump = vec![T::zero(); layout.q_facets().len() * nq];
    let mut weights = vec![T::zero(); layout.q_facets().len() * nq];
    for (cell, geom) in disc.cell_geometries().iter().enumerate() {
        let u1 = &state.w[layout.cell_velocity(cell, 0)..][..nb];
        let u2 = &state.w[layout.cell_velocity(cell, 1)..][..nb];
        for face in &geom.q_faces {
            let qi = layout.q_index(face.facet).expect("Q-facet");
            let boundary = slab.facet(face.facet).kind.is_boundary();
            for q in 0..nq {
                let mut u = [T::zero(); 2];
                for i in 0..nb {
                    u[0] += u1[i] * face.phi[q][i];
                    u[1] += u2[i] * face.phi[q][i];
                }
                if boundary {
                    for (c, uc) in u.iter_mut().enumerate() {
                        let dof = layout.facet_velocity(qi, c);
                        for i in 0..nb2 {
                            *uc -= state.facet_value(dof.offset(i)) * chi[q][i];
                        }
                    }
                }
                jump[qi * nq + q] += u[0] * face.normal[1] + u[1] * face.normal[2];
                weights[qi * nq + q] = face.jw[q];
            }
        }
    }
    jump.iter().zip(&weights).map(|(j, w)| (*w * *j * *j).f64()).sum()
}

/// Benchmark problems the driver can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseName {
    /// Smooth exact solution on the deforming unit square.
    Manufactured,
    /// Constant velocity and pressure on the deforming unit square.
    UniformFlow,
    /// Unforced flow with homogeneous Dirichlet data on the deforming square.
    EnergyDecay,
    /// The manufactured solution on a user-supplied static mesh.
    ExternalMesh,
}

impl CaseName {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseName::Manufactured => "manufactured",
            CaseName::UniformFlow => "uniform-flow",
            CaseName::EnergyDecay => "energy-decay",
            CaseName::ExternalMesh => "external-mesh",
        }
    }
}

impl std::str::FromStr for CaseName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manufactured" => Ok(CaseName::Manufactured),
            "uniform-flow" => Ok(CaseName::UniformFlow),
            "energy-decay" => Ok(CaseName::EnergyDecay),
            "external-mesh" => Ok(CaseName::ExternalMesh),
            _ => Err(Error::Config(format!("unknown case {s:?}"))),
        }
    }
}

/// Parameters of one run or of a refinement ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    pub case: CaseName,
    pub degree: usize,
    /// Cells per side of the unit square on level 0.
    pub nx: usize,
    /// Slabs on level 0.
    pub slabs: usize,
    pub dt: f64,
    pub nu: f64,
    /// `α = alpha_factor · k²`.
    pub alpha_factor: f64,
    pub picard: PicardOptions,
    pub transport: Transport,
    pub penalty_length: PenaltyLength,
    /// Amplitude of the domain deformation.
    pub amplitude: f64,
    /// Spatial mesh of the external-mesh case.
    pub mesh_path: Option<PathBuf>,
}

impl CaseConfig {
    /// The coarsest convergence-study run for `case`.
    pub fn new(case: CaseName, degree: usize) -> Self {
        Self {
            case,
            degree,
            nx: 8,
            slabs: 20,
            dt: 0.05,
            nu: 1e-4,
            alpha_factor: 6.0,
            picard: PicardOptions::default(),
            transport: Transport::SpaceTime,
            penalty_length: PenaltyLength::default(),
            amplitude: SinusoidalMotion::default().amplitude,
            mesh_path: None,
        }
    }

    pub fn end_time(&self) -> f64 {
        self.dt * self.slabs as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.alpha_factor > 0.0) {
            return bad("alpha factor must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.slabs == 0 {
            return bad("need a positive time step and at least one slab");
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("viscosity must be positive");
        }
        if self.nx == 0 {
            return bad("nx must be at least 1");
        }
        if !(self.picard.tol > 0.0) || self.picard.max_iters == 0 {
            return bad("Picard tolerance must be positive and max_iters at least 1");
        }
        if !(0.0..0.25).contains(&self.amplitude) {
            return bad("deformation amplitude must lie in [0, 0.25)");
        }
        if self.case == CaseName::ExternalMesh && self.mesh_path.is_none() {
            return bad("the external-mesh case needs a mesh file");
        }
        if !(MIN_VELOCITY_DEGREE..=MAX_DEGREE).contains(&self.degree) {
            return Err(Error::UnsupportedDegree {
                degree: self.degree,
                min: MIN_VELOCITY_DEGREE,
                max: MAX_DEGREE,
            });
        }
        Ok(())
    }

    /// Level `l` of the ladder: `nx · 2^l` cells per side, `N · 2^l` slabs.
    pub fn level(&self, l: usize) -> Self {
        let mut c = self.clone();
        c.nx = self.nx << l;
        c.slabs = self.slabs << l;
        c.dt = self.dt / (1u64 << l) as f64;
        c
    }
}

/// Mesh, motion and data of a configured case.
pub struct CaseSetup<T: Real> {
    /// Spatial mesh in its reference configuration.
    pub mesh: SpatialMesh<T>,
    pub motion: Arc<dyn DomainMotion<T>>,
    pub data: Box<dyn FlowData<T>>,
    pub exact: Option<Box<dyn ExactSolution<T>>>,
}

pub fn setup_case<T: Real>(config: &CaseConfig) -> Result<CaseSetup<T>> {
    config.validate()?;
    let motion: Arc<dyn DomainMotion<T>> = Arc::new(SinusoidalMotion {
        amplitude: config.amplitude,
    });
    let square = || triangulate_unit_square::<T>(config.nx);
    let setup = match config.case {
        CaseName::Manufactured => {
            let m = Manufactured::new(config.nu);
            CaseSetup {
                mesh: square()?,
                motion,
                data: Box::new(m),
                exact: Some(Box::new(m)),
            }
        }
        CaseName::UniformFlow => {
            let u = UniformFlow::default();
            CaseSetup {
                mesh: square()?,
                motion,
                data: Box::new(u),
                exact: Some(Box::new(u)),
            }
        }
        CaseName::EnergyDecay => CaseSetup {
            mesh: square()?.retag(|_| BoundaryTag::Dirichlet),
            motion,
            data: Box::new(EnergyDecay::default()),
            exact: None,
        },
        CaseName::ExternalMesh => {
            let path = config.mesh_path.as_ref().expect("validated");
            let m = Manufactured::new(config.nu);
            CaseSetup {
                mesh: crate::mesh::io::read_mesh(path)?,
                motion: Arc::new(StaticMotion),
                data: Box::new(m),
                exact: Some(Box::new(m)),
            }
        }
    };
    Ok(setup)
}

/// L2 errors of a run against the exact solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    /// `‖u − u_h‖` on `Ω(T)`.
    pub velocity_final: f64,
    /// `‖p − p_h‖` on `Ω(T)`.
    pub pressure_final: f64,
    /// `‖u − u_h‖` on the space-time domain.
    pub velocity_space_time: f64,
    /// `‖p − p_h‖` on the space-time domain.
    pub pressure_space_time: f64,
}

/// Per-slab outcome kept in the report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabReport {
    pub index: usize,
    pub t1: f64,
    pub picard_iterations: usize,
    pub picard_delta: f64,
    /// `∫_{Ω(t1)} |u_h⁻|²`.
    pub energy: f64,
    pub divergence_max: f64,
    pub normal_jump: f64,
    pub facet_residual: f64,
    pub cell_residual: f64,
    /// Facet pressure unknowns pinned as gauge.
    pub gauge: usize,
    pub solver: SolverStats,
    pub timings: PhaseTimings,
}

/// Diagnostics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub case: CaseName,
    pub degree: usize,
    pub nx: usize,
    pub slabs: usize,
    pub dt: f64,
    pub nu: f64,
    pub end_time: f64,
    pub cells_per_slab: usize,
    pub errors: Option<ErrorNorms>,
    /// Largest pointwise `|∇·u_h|` over all slabs.
    pub divergence_max: f64,
    /// `‖∇·u_h‖` on the space-time domain.
    pub divergence_l2: f64,
    /// Largest velocity component seen at the divergence sample points.
    pub velocity_scale: f64,
    /// Normal-jump norm over all Q-facets of all slabs.
    pub normal_jump: f64,
    /// Largest interior normal jump of the slab-to-slab traces.
    pub trace_normal_jump: f64,
    pub max_facet_residual: f64,
    pub max_cell_residual: f64,
    /// `∫_{Ω(t0)} |u_h⁰|²`.
    pub initial_energy: f64,
    pub slab_reports: Vec<SlabReport>,
    pub timings: PhaseTimings,
    pub wall_seconds: f64,
}

impl RunReport {
    /// Initial energy followed by the energy after every slab.
    pub fn energies(&self) -> Vec<f64> {
        std::iter::once(self.initial_energy)
            .chain(self.slab_reports.iter().map(|s| s.energy))
            .collect()
    }

    /// Largest `E_{n+1} − E_n` over the slabs; nonpositive for a
    /// monotonically decaying energy.
    pub fn max_energy_increase(&self) -> f64 {
        self.energies()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn picard_iterations(&self) -> Vec<usize> {
        self.slab_reports.iter().map(|s| s.picard_iterations).collect()
    }
}

/// Runs one configuration, handing every solved slab to `observer` after
/// the built-in diagnostics have been taken.
pub fn run_case<T: Real>(
    config: &CaseConfig,
    observer: &mut dyn FnMut(&SlabOutcome<'_, T>) -> Result<()>,
) -> Result<RunReport> {
    let start = Instant::now();
    let setup = setup_case::<T>(config)?;
    let k = config.degree;
    let march_config = MarchConfig {
        degree: k,
        mesh: setup.mesh.clone(),
        motion: setup.motion.clone(),
        t0: T::zero(),
        dt: T::lit(config.dt),
        n_slabs: config.slabs,
        form: FormOptions {
            nu: T::lit(config.nu),
            alpha: T::lit(config.alpha_factor * (k * k) as f64),
            penalty_length: config.penalty_length,
            transport: config.transport,
            pin_pressure: true,
        },
        picard: config.picard,
    };
    let tet_rule = make_quadrature::<T>(3, norm_exactness(k))?;
    let tri_rule = make_quadrature::<T>(2, norm_exactness(k))?;
    let mut space_time = SquaredErrors::default();
    let mut last = SquaredErrors::default();
    let mut divergence = DivergenceStats::default();
    let mut jump_squared = 0.0;
    let mut trace_jump = 0.0f64;
    let mut slab_reports = Vec::with_capacity(config.slabs);
    let mut cells_per_slab = 0;
    let summary = march(&march_config, setup.data.as_ref(), &mut |out: &SlabOutcome<'_, T>| {
        let state = &out.picard.state;
        cells_per_slab = out.disc.slab().n_cells();
        if let Some(exact) = &setup.exact {
            space_time += space_time_errors(out.disc, state, exact.as_ref(), &tet_rule);
            last = top_errors(out.disc, state, exact.as_ref(), &tri_rule);
        }
        let div = divergence_stats(out.disc, state);
        divergence.merge(&div);
        let jump = normal_jump_squared(out.disc, state);
        jump_squared += jump;
        trace_jump = trace_jump.max(out.trace_out.normal_jump_norm(out.disc.reference()).f64());
        let status = out.picard.status;
        slab_reports.push(SlabReport {
            index: out.index,
            t1: out.disc.slab().time_interval().1.f64(),
            picard_iterations: status.iterations,
            picard_delta: status.delta(),
            energy: out.trace_out.energy().f64(),
            divergence_max: div.max,
            normal_jump: jump.sqrt(),
            facet_residual: out.picard.residuals.facet,
            cell_residual: out.picard.residuals.cell,
            gauge: out.picard.gauge,
            solver: out.picard.solver,
            timings: out.picard.timings,
        });
        observer(out)
    })?;
    let errors = setup.exact.as_ref().map(|_| ErrorNorms {
        velocity_final: last.velocity.sqrt(),
        pressure_final: last.pressure.sqrt(),
        velocity_space_time: space_time.velocity.sqrt(),
        pressure_space_time: space_time.pressure.sqrt(),
    });
    Ok(RunReport {
        case: config.case,
        degree: k,
        nx: config.nx,
        slabs: config.slabs,
        dt: config.dt,
        nu: config.nu,
        end_time: summary.slabs.last().map_or(0.0, |s| s.t1),
        cells_per_slab,
        errors,
        divergence_max: divergence.max,
        divergence_l2: divergence.l2_squared.sqrt(),
        velocity_scale: divergence.velocity_scale,
        normal_jump: jump_squared.sqrt(),
        trace_normal_jump: trace_jump,
        max_facet_residual: slab_reports.iter().map(|s| s.facet_residual).fold(0.0, f64::max),
        max_cell_residual: slab_reports.iter().map(|s| s.cell_residual).fold(0.0, f64::max),
        initial_energy: summary.initial_energy,
        slab_reports,
        timings: summary.timings,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// `log2(coarse / fine)`.
pub fn rate(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// One row of the convergence table. Rates compare with the previous level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub level: usize,
    pub nx: usize,
    pub slabs: usize,
    pub cells_per_slab: usize,
    pub velocity_final: f64,
    pub velocity_final_rate: Option<f64>,
    pub pressure_final: f64,
    pub pressure_final_rate: Option<f64>,
    pub velocity_space_time: f64,
    pub velocity_space_time_rate: Option<f64>,
    pub pressure_space_time: f64,
    pub pressure_space_time_rate: Option<f64>,
    pub divergence_l2: f64,
}

/// Column names of [`DiagnosticsReport::rates_csv`].
pub const RATES_CSV_HEADER: &str =
    "level,nx,slabs,cells_per_slab,u_omega_T,rate,p_omega_T,rate,u_E,rate,p_E,rate,div_l2";

/// Runs of a refinement ladder and the derived rate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub config: CaseConfig,
    pub runs: Vec<RunReport>,
    pub rates: Vec<RateRow>,
}

impl DiagnosticsReport {
    pub fn new(config: CaseConfig, runs: Vec<RunReport>) -> Self {
        let rates = rate_table(&runs);
        Self { config, runs, rates }
    }

    /// Rate table as CSV. Contains no timings, so equal runs give equal bytes.
    pub fn rates_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |r| format!("{r:.2}"));
        let mut s = String::from(RATES_CSV_HEADER);
        s.push('\n');
        for r in &self.rates {
            s.push_str(&format!(
                "{},{},{},{},{:.6e},{},{:.6e},{},{:.6e},{},{:.6e},{},{:.3e}\n",
                r.level,
                r.nx,
                r.slabs,
                r.cells_per_slab,
                r.velocity_final,
                cell(r.velocity_final_rate),
                r.pressure_final,
                cell(r.pressure_final_rate),
                r.velocity_space_time,
                cell(r.velocity_space_time_rate),
                r.pressure_space_time,
                cell(r.pressure_space_time_rate),
                r.divergence_l2,
            ));
        }
        s
    }
}

fn rate_table(runs: &[RunReport]) -> Vec<RateRow> {
    let mut rows: Vec<RateRow> = Vec::new();
    for (level, run) in runs.iter().enumerate() {
        let Some(e) = run.errors else { continue };
        let prev = rows.last().copied();
        let r = |f: fn(&RateRow) -> f64, v: f64| prev.map(|p| rate(f(&p), v));
        rows.push(RateRow {
            level,
            nx: run.nx,
            slabs: run.slabs,
            cells_per_slab: run.cells_per_slab,
            velocity_final: e.velocity_final,
            velocity_final_rate: r(|p| p.velocity_final, e.velocity_final),
            pressure_final: e.pressure_final,
            pressure_final_rate: r(|p| p.pressure_final, e.pressure_final),
            velocity_space_time: e.velocity_space_time,
            velocity_space_time_rate: r(|p| p.velocity_space_time, e.velocity_space_time),
            pressure_space_time: e.pressure_space_time,
            pressure_space_time_rate: r(|p| p.pressure_space_time, e.pressure_space_time),
            divergence_l2: run.divergence_l2,
        });
    }
    rows
}

/// Runs levels `0..levels` of the ladder defined by [`CaseConfig::level`].
/// `observer` receives the level index with every solved slab.
pub fn convergence_study<T: Real>(
    config: &CaseConfig,
    levels: usize,
    observer: &mut dyn FnMut(usize, &SlabOutcome<'_, T>) -> Result<()>,
) -> Result<DiagnosticsReport> {
    if levels == 0 {
        return Err(Error::Config("need at least one level".into()));
    }
    if levels > 1 && config.case == CaseName::ExternalMesh {
        return Err(Error::Config("the external-mesh case cannot be refined".into()));
    }
    let mut runs = Vec::with_capacity(levels);
    for l in 0..levels {
        runs.push(run_case::<T>(&config.level(l), &mut |out| observer(l, out))?);
    }
    Ok(DiagnosticsReport::new(config.clone(), runs))
}
