use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sthdg::diagnostics::{convergence_study, CaseConfig, CaseName, DiagnosticsReport};
use sthdg::export::{write_json, write_slab_vtk};
use sthdg::marching::PicardOptions;
use sthdg::system::Transport;

#[derive(Parser)]
#[command(
    name = "sthdg",
    version,
    about = "Space-time HDG solver for incompressible flow on moving 2D domains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a case, or a refinement ladder of it, and write the diagnostics.
    Solve(SolveArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// manufactured | uniform-flow | energy-decay | external-mesh
    #[arg(long, default_value = "manufactured")]
    case: CaseName,
    /// Polynomial degree of the velocity.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Cells per side of the unit square on level 0.
    #[arg(long, default_value_t = 8)]
    nx: usize,
    /// Slabs on level 0.
    #[arg(long, default_value_t = 20)]
    slabs: usize,
    /// Time step on level 0.
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long, default_value_t = 1e-4)]
    nu: f64,
    /// Picard stopping tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// Penalty factor; the penalty is this factor times k².
    #[arg(long, default_value_t = 6.0)]
    alpha_factor: f64,
    /// Number of refinement levels; each halves h and Δt.
    #[arg(long, default_value_t = 1)]
    levels: usize,
    /// Output directory for report.json, rates.csv and VTK files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Spatial mesh file of the external-mesh case.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Use the ALE form of the convective term.
    #[arg(long)]
    ale: bool,
    /// Write slab_####.vtk for every slab (needs --out).
    #[arg(long)]
    vtk: bool,
}

impl SolveArgs {
    fn config(&self) -> CaseConfig {
        let mut c = CaseConfig::new(self.case, self.k);
        c.nx = self.nx;
        c.slabs = self.slabs;
        c.dt = self.dt;
        c.nu = self.nu;
        c.alpha_factor = self.alpha_factor;
        c.picard = PicardOptions {
            tol: self.tol,
            max_iters: self.max_iters,
        };
        c.transport = if self.ale { Transport::Ale } else { Transport::SpaceTime };
        c.mesh_path = self.mesh.clone();
        c
    }
}

/// VTK files of level `l` go to `out` for a single level and to
/// `out/level_l` on a ladder.
fn vtk_dir(out: &Path, level: usize, levels: usize) -> PathBuf {
    if levels == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("level_{level}"))
    }
}

fn print_summary(report: &DiagnosticsReport) {
    for (l, run) in report.runs.iter().enumerate() {
        let picard = run.picard_iterations();
        println!(
            "level {l}: nx {} slabs {} cells/slab {} Picard {}..{} wall {:.1}s",
            run.nx,
            run.slabs,
            run.cells_per_slab,
            picard.iter().min().unwrap_or(&0),
            picard.iter().max().unwrap_or(&0),
            run.wall_seconds
        );
        if let Some(e) = run.errors {
            println!(
                "  |u-uh| Omega(T) {:.3e}  |p-ph| Omega(T) {:.3e}  |u-uh| E {:.3e}  |p-ph| E {:.3e}",
                e.velocity_final, e.pressure_final, e.velocity_space_time, e.pressure_space_time
            );
        }
        println!(
            "  max|div u| {:.2e}  |div u| {:.2e}  normal jump {:.2e}  facet residual {:.2e}  energy {:.6e} -> {:.6e}",
            run.divergence_max,
            run.divergence_l2,
            run.normal_jump,
            run.max_facet_residual,
            run.initial_energy,
            run.energies().last().copied().unwrap_or(0.0)
        );
    }
    if report.rates.len() > 1 {
        print!("{}", report.rates_csv());
    }
}

fn solve(args: &SolveArgs) -> Result<()> {
    if args.vtk && args.out.is_none() {
        anyhow::bail!("--vtk needs --out");
    }
    let config = args.config();
    config.validate().context("invalid configuration")?;
    if let Some(out) = &args.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        if args.vtk {
            for l in 0..args.levels {
                let dir = vtk_dir(out, l, args.levels);
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            }
        }
    }
    let report = convergence_study::<f64>(&config, args.levels, &mut |level, slab| {
        if let (true, Some(out)) = (args.vtk, &args.out) {
            write_slab_vtk(
                &vtk_dir(out, level, args.levels),
                slab.index,
                slab.disc,
                &slab.picard.state,
            )?;
        }
        Ok(())
    })
    .context("solve failed")?;
    print_summary(&report);
    if let Some(out) = &args.out {
        write_json(&report, &out.join("report.json"))?;
        let csv = out.join("rates.csv");
        fs::write(&csv, report.rates_csv()).with_context(|| format!("writing {}", csv.display()))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Solve(args) => solve(&args),
    }
}
