//! Command-line interface: unit-cell geometries, single-configuration
//! cell problems, saturation sweeps, the transient pore-scale channel
//! simulator, and the dimensionless-number calculator.
//!
//! Exit codes: 0 on success, 1 on configuration or input errors, 2 on
//! solver failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use porehom::effective::RelPermRecord;
use porehom::geometry::{build_unit_cell, GeometryKind};
use porehom::output::{
    relperm_csv, summary_csv, write_mask_vtk, write_porescale_state_vtk, write_summary_csv,
};
use porehom::pipeline::{nondim, sweep, ReferenceValues, SweepConfig};
use porehom::porescale::{PoreScaleConfig, PoreScaleSim};
use porehom::{Error, Result};

#[derive(Parser)]
#[command(
    name = "porehom",
    version,
    about = "Effective two-phase flow parameters from pore-scale cell problems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a unit-cell geometry; report porosity or export the mask.
    Geometry(GeometryArgs),
    /// Relax one phase distribution and solve its cell problems.
    Cell(CellArgs),
    /// Run a saturation sweep from a TOML config file.
    Sweep(SweepArgs),
    /// Run the transient pore-scale channel simulator.
    Porescale(PorescaleArgs),
    /// Compute dimensionless numbers from dimensional references.
    Nondim(NondimArgs),
}

#[derive(Args)]
struct GeomSpec {
    /// Geometry kind: obstacle, cross, channel, empty, or mask.
    #[arg(long)]
    kind: String,
    /// Side length of the obstacle (fraction of the cell edge).
    #[arg(long)]
    side: Option<f64>,
    /// Channel width of the cross (fraction of the cell edge).
    #[arg(long)]
    width: Option<f64>,
    /// Height of the channel (fraction of the cell edge).
    #[arg(long)]
    height: Option<f64>,
    /// Mask file for kind = mask.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Grid resolution (cells per edge).
    #[arg(long)]
    n: usize,
}

impl GeomSpec {
    fn kind(&self) -> Result<GeometryKind> {
        match self.kind.as_str() {
            "obstacle" => Ok(GeometryKind::Obstacle { side: self.side.unwrap_or(0.45) }),
            "cross" => Ok(GeometryKind::Cross { width: self.width.unwrap_or(0.3) }),
            "channel" => Ok(GeometryKind::Channel { height: self.height.unwrap_or(0.5) }),
            "empty" => Ok(GeometryKind::Empty),
            "mask" => self
                .mask
                .clone()
                .map(|path| GeometryKind::MaskFile { path })
                .ok_or_else(|| Error::Config("geometry kind mask needs --mask <path>".into())),
            other => Err(Error::Config(format!(
                "unknown geometry kind {other:?} (expected obstacle, cross, channel, empty, or mask)"
            ))),
        }
    }
}

#[derive(Args)]
struct GeometryArgs {
    #[command(flatten)]
    geom: GeomSpec,
    /// Print the snapped porosity and nothing else.
    #[arg(long)]
    print_porosity: bool,
    /// Write the solid mask as a plain-text mask file.
    #[arg(long)]
    mask_out: Option<PathBuf>,
    /// Write the solid mask as a legacy-VTK cell scalar.
    #[arg(long)]
    vtk: Option<PathBuf>,
}

#[derive(Args)]
struct CellArgs {
    #[command(flatten)]
    geom: GeomSpec,
    /// Droplet radius of the phase-1 disk.
    #[arg(long)]
    radius: f64,
    /// Droplet center x (defaults to the geometry's symmetry center).
    #[arg(long)]
    cx: Option<f64>,
    /// Droplet center y (defaults to the geometry's symmetry center).
    #[arg(long)]
    cy: Option<f64>,
    /// Diffuse interface width.
    #[arg(long, default_value_t = 0.08)]
    xi: f64,
    /// Viscosity ratio of phase 1 to phase 2.
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    /// Density ratio of phase 1 to phase 2.
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Preconditioning step budget for the initial droplet.
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Exclude recirculation zones from the mobility integrals.
    #[arg(long)]
    filter: bool,
    /// Write the single record as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the preconditioned phase field as VTK into this directory.
    #[arg(long)]
    vtk_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's CSV output path.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Override the config's VTK output directory.
    #[arg(long)]
    vtk_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PorescaleArgs {
    /// Simulator configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Write the run summary to this CSV file instead of stdout.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Write a VTK snapshot every k steps (0 disables snapshots).
    #[arg(long, default_value_t = 0)]
    vtk_every: usize,
    /// Directory for VTK snapshots.
    #[arg(long)]
    vtk_dir: Option<PathBuf>,
}

#[derive(Args)]
struct NondimArgs {
    /// Use the all-ones reference set (every number comes out 1.0).
    #[arg(long, conflicts_with_all = [
        "length", "pore_length", "velocity", "density", "viscosity",
        "pressure", "surface_tension", "gravity", "mobility", "xi", "slip",
    ])]
    all_ones: bool,
    /// Macroscopic length scale (m).
    #[arg(long, default_value_t = 1.0)]
    length: f64,
    /// Pore length scale (m).
    #[arg(long, default_value_t = 1.0)]
    pore_length: f64,
    /// Velocity scale (m/s).
    #[arg(long, default_value_t = 1.0)]
    velocity: f64,
    /// Density scale (kg/m³).
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Dynamic viscosity scale (Pa·s).
    #[arg(long, default_value_t = 1.0)]
    viscosity: f64,
    /// Pressure scale (Pa).
    #[arg(long, default_value_t = 1.0)]
    pressure: f64,
    /// Surface tension coefficient (N/m).
    #[arg(long, default_value_t = 1.0)]
    surface_tension: f64,
    /// Gravitational acceleration (m/s²).
    #[arg(long, default_value_t = 1.0)]
    gravity: f64,
    /// Interface mobility velocity scale (m/s).
    #[arg(long, default_value_t = 1.0)]
    mobility: f64,
    /// Dimensional diffuse-interface width (m).
    #[arg(long, default_value_t = 1.0)]
    xi: f64,
    /// Dimensional wall slip length (m).
    #[arg(long, default_value_t = 1.0)]
    slip: f64,
}

fn run_geometry(args: &GeometryArgs) -> Result<()> {
    let kind = args.geom.kind()?;
    let grid = build_unit_cell(&kind, args.geom.n)?;
    if args.print_porosity {
        println!("{}", grid.porosity());
    } else {
        println!(
            "geometry {kind}: n = {}, porosity = {}, fluid cells = {}",
            grid.n(),
            grid.porosity(),
            grid.n_fluid()
        );
    }
    if let Some(path) = &args.mask_out {
        grid.write_mask(path)?;
    }
    if let Some(path) = &args.vtk {
        write_mask_vtk(path, &grid)?;
    }
    Ok(())
}

fn print_record(rec: &RelPermRecord) {
    println!("geometry = {}", rec.geometry);
    println!("radius = {}, center = ({}, {})", rec.radius, rec.center[0], rec.center[1]);
    println!("s1 = {}", rec.s1);
    println!("area = {}", rec.area);
    println!("phi = {}", rec.porosity);
    println!(
        "Krel1 = [{}, {}; {}, {}]",
        rec.k_rel1.xx, rec.k_rel1.xy, rec.k_rel1.yx, rec.k_rel1.yy
    );
    println!(
        "Krel2 = [{}, {}; {}, {}]",
        rec.k_rel2.xx, rec.k_rel2.xy, rec.k_rel2.yx, rec.k_rel2.yy
    );
    println!("M1 = ({}, {})", rec.m1[0], rec.m1[1]);
    println!("M2 = ({}, {})", rec.m2[0], rec.m2[1]);
}

fn run_cell(args: &CellArgs) -> Result<()> {
    let kind = args.geom.kind()?;
    let center = match (args.cx, args.cy) {
        (Some(x), Some(y)) => Some([x, y]),
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "give both --cx and --cy, or neither for the default center".into(),
            ))
        }
    };
    let cfg = SweepConfig {
        geometry: kind,
        n: args.geom.n,
        center,
        radii: vec![args.radius],
        m: args.m,
        r: args.r,
        xi: args.xi,
        preprocessing_steps: args.steps,
        filter: args.filter,
        csv_out: args.csv.clone(),
        vtk_dir: args.vtk_dir.clone(),
    };
    let records = sweep(&cfg)?;
    let rec = records
        .first()
        .ok_or_else(|| Error::NonFinite("the configured radius produced no record".into()))?;
    print_record(rec);
    Ok(())
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg = SweepConfig::load(&args.config)?;
    if let Some(path) = &args.csv_out {
        cfg.csv_out = Some(path.clone());
    }
    if let Some(dir) = &args.vtk_dir {
        cfg.vtk_dir = Some(dir.clone());
    }
    let records = sweep(&cfg)?;
    match &cfg.csv_out {
        Some(path) => {
            eprintln!("wrote {} records to {}", records.len(), path.display());
        }
        None => print!("{}", relperm_csv(&records)?),
    }
    Ok(())
}

fn run_porescale(args: &PorescaleArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg: PoreScaleConfig = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    let vtk_dir = match (&args.vtk_dir, args.vtk_every) {
        (Some(dir), k) if k > 0 => {
            std::fs::create_dir_all(dir)?;
            Some(dir.clone())
        }
        (Some(_), 0) => {
            return Err(Error::Config("--vtk-dir needs --vtk-every > 0".into()));
        }
        _ => None,
    };
    let mut sim = PoreScaleSim::new(cfg)?;
    let grid = sim.grid();
    if let Some(dir) = &vtk_dir {
        write_porescale_state_vtk(&dir.join("state_000000.vtk"), grid, sim.state())?;
    }
    let mut observer_error = None;
    let summary = sim.run(|step, state| {
        if observer_error.is_some() {
            return;
        }
        if let Some(dir) = &vtk_dir {
            if step % args.vtk_every == 0 {
                let path = dir.join(format!("state_{step:06}.vtk"));
                if let Err(e) = write_porescale_state_vtk(&path, grid, state) {
                    observer_error = Some(e);
                }
            }
        }
    })?;
    if let Some(e) = observer_error {
        return Err(e);
    }

    match &args.summary {
        Some(path) => {
            write_summary_csv(path, &summary.rows)?;
            eprintln!("wrote {} summary rows to {}", summary.rows.len(), path.display());
        }
        None => print!("{}", summary_csv(&summary.rows)?),
    }
    Ok(())
}

fn run_nondim(args: &NondimArgs) -> Result<()> {
    let refs = if args.all_ones {
        ReferenceValues::default()
    } else {
        ReferenceValues {
            length: args.length,
            pore_length: args.pore_length,
            velocity: args.velocity,
            density: args.density,
            viscosity: args.viscosity,
            pressure: args.pressure,
            surface_tension: args.surface_tension,
            gravity: args.gravity,
            mobility: args.mobility,
            xi: args.xi,
            slip: args.slip,
        }
    };
    let d = nondim(&refs)?;
    println!("Re  = {:?}", d.re);
    println!("Ca  = {:?}", d.ca);
    println!("Eu  = {:?}", d.eu);
    println!("Fr  = {:?}", d.fr);
    println!("S   = {:?}", d.s);
    println!("eps = {:?}", d.eps);
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Geometry(args) => run_geometry(args),
        Cmd::Cell(args) => run_cell(args),
        Cmd::Sweep(args) => run_sweep(args),
        Cmd::Porescale(args) => run_porescale(args),
        Cmd::Nondim(args) => run_nondim(args),
    }
}

/// 1 for configuration/input problems, 2 for solver failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Geometry(_) | Error::MaskFile { .. } | Error::Io(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap renders help to stdout and errors to stderr itself.
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
