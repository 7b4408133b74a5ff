//! Configuration files, saturation sweeps, and dimensionless numbers.
//!
//! A sweep runs the full chain once per droplet radius: initialize the
//! phase distribution, precondition it with a few diffuse-interface
//! steps, solve the pressure-driven and surface-tension cell problems,
//! optionally filter recirculation zones, and assemble one
//! relative-permeability record. Radii are independent, so they run in
//! parallel; record assembly is order-stable and the resulting CSV is
//! bit-identical for identical configs.

use std::path::{Path, PathBuf};

use crate::effective::{
    absolute_permeability, relative_permeability, EffectiveParameters, RelPermRecord,
};
use crate::error::{Error, Result};
use crate::geometry::{build_unit_cell, GeometryKind, UnitCellGrid};
use crate::output::{write_phase_vtk, write_relperm_csv};
use crate::phasefield::{initial_droplet, relax, saturation, PhaseFieldParams};
use crate::stokescell::{solve_pressure_driven, solve_surface_tension, FluidParams};
use crate::streamflow::net_flow_mask;

/// Dimensional reference quantities. Feeding them to [`nondim`] yields
/// the dimensionless numbers the solvers consume.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ReferenceValues {
    /// Macroscopic length scale (m).
    pub length: f64,
    /// Pore length scale (m); the scale separation is pore_length/length.
    pub pore_length: f64,
    /// Velocity scale (m/s).
    pub velocity: f64,
    /// Density scale (kg/m³).
    pub density: f64,
    /// Dynamic viscosity scale (Pa·s).
    pub viscosity: f64,
    /// Pressure scale (Pa).
    pub pressure: f64,
    /// Surface tension coefficient (N/m).
    pub surface_tension: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
    /// Interface mobility velocity scale (m/s).
    pub mobility: f64,
    /// Dimensional diffuse-interface width (m).
    pub xi: f64,
    /// Dimensional wall slip length (m).
    pub slip: f64,
}

impl Default for ReferenceValues {
    /// All scales 1, so every dimensionless number is 1.
    fn default() -> Self {
        ReferenceValues {
            length: 1.0,
            pore_length: 1.0,
            velocity: 1.0,
            density: 1.0,
            viscosity: 1.0,
            pressure: 1.0,
            surface_tension: 1.0,
            gravity: 1.0,
            mobility: 1.0,
            xi: 1.0,
            slip: 1.0,
        }
    }
}

/// The dimensionless numbers of the two-phase pore-scale model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Dimensionless {
    /// Reynolds number ρ̂ v̂ L̂ / μ̂.
    pub re: f64,
    /// Capillary number v̂ μ̂ / γ.
    pub ca: f64,
    /// Euler number p̂ / (ρ̂ v̂²).
    pub eu: f64,
    /// Froude number v̂ / √(g L̂).
    pub fr: f64,
    /// Interface mobility number σ / v̂.
    pub s: f64,
    /// Scale separation ℓ̂ / L̂.
    pub eps: f64,
}

/// Computes the dimensionless numbers from dimensional references.
pub fn nondim(refs: &ReferenceValues) -> Result<Dimensionless> {
    let vals = [
        refs.length,
        refs.pore_length,
        refs.velocity,
        refs.density,
        refs.viscosity,
        refs.pressure,
        refs.surface_tension,
        refs.gravity,
        refs.mobility,
        refs.xi,
        refs.slip,
    ];
    if vals.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Config(format!(
            "reference values must all be positive and finite: {refs:?}"
        )));
    }
    if refs.pore_length > refs.length {
        return Err(Error::Config(format!(
            "pore length {} exceeds the macroscopic length {}",
            refs.pore_length, refs.length
        )));
    }
    Ok(Dimensionless {
        re: refs.density * refs.velocity * refs.length / refs.viscosity,
        ca: refs.velocity * refs.viscosity / refs.surface_tension,
        eu: refs.pressure / (refs.density * refs.velocity * refs.velocity),
        fr: refs.velocity / (refs.gravity * refs.length).sqrt(),
        s: refs.mobility / refs.velocity,
        eps: refs.pore_length / refs.length,
    })
}

/// A saturation sweep: one relative-permeability record per droplet
/// radius on a fixed geometry.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Unit-cell geometry.
    pub geometry: GeometryKind,
    /// Grid resolution (cells per edge).
    pub n: usize,
    /// Droplet center; defaults to the symmetry center of the geometry
    /// (cell corner for the obstacle, channel crossing for the cross).
    pub center: Option<[f64; 2]>,
    /// Droplet radii, strictly increasing.
    pub radii: Vec<f64>,
    /// Viscosity ratio of phase 1 to phase 2.
    pub m: f64,
    /// Density ratio of phase 1 to phase 2.
    pub r: f64,
    /// Diffuse interface width.
    pub xi: f64,
    /// Step budget for the contact-angle preconditioning of each
    /// initial droplet.
    pub preprocessing_steps: usize,
    /// Exclude recirculation zones from the mobility integrals.
    pub filter: bool,
    /// Write the records to this CSV file.
    pub csv_out: Option<PathBuf>,
    /// Write one phase-field VTK file per radius into this directory.
    pub vtk_dir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            geometry: GeometryKind::Obstacle { side: 0.45 },
            n: 80,
            center: None,
            radii: Vec::new(),
            m: 1.0,
            r: 1.0,
            xi: 0.08,
            preprocessing_steps: 50,
            filter: false,
            csv_out: None,
            vtk_dir: None,
        }
    }
}

/// Symmetry center of a geometry, used when a sweep does not pin the
/// droplet center: the pore body sits at the cell corner for the
/// obstacle and at the channel crossing for the cross.
pub fn default_center(kind: &GeometryKind) -> [f64; 2] {
    match kind {
        GeometryKind::Cross { .. } => [0.5, 0.5],
        _ => [0.0, 0.0],
    }
}

impl SweepConfig {
    /// Reads a TOML config file.
    pub fn load(path: &Path) -> Result<SweepConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SweepConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the invariants: strictly increasing positive radii, a
    /// center inside the unit cell, positive ratios and width.
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::Config("radius list is empty".into()));
        }
        if self.radii[0] <= 0.0 {
            return Err(Error::Config(format!("radius {} is not positive", self.radii[0])));
        }
        if self.radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "radii must be strictly increasing: {:?}",
                self.radii
            )));
        }
        let c = self.center.unwrap_or(default_center(&self.geometry));
        if !(0.0..=1.0).contains(&c[0]) || !(0.0..=1.0).contains(&c[1]) {
            return Err(Error::Config(format!("center {c:?} outside the unit cell")));
        }
        if !(self.m > 0.0) || !(self.r > 0.0) || !(self.xi > 0.0) {
            return Err(Error::Config(format!(
                "ratios and interface width must be positive: M = {}, R = {}, xi = {}",
                self.m, self.r, self.xi
            )));
        }
        Ok(())
    }
}

/// Runs the chain for one radius and returns its record, writing the
/// preconditioned phase field as VTK when a directory is configured.
fn sweep_radius(
    grid: &UnitCellGrid,
    cfg: &SweepConfig,
    center: [f64; 2],
    radius: f64,
    params: &FluidParams,
    kappa_abs: f64,
    vtk_dir: Option<&Path>,
) -> Result<RelPermRecord> {
    let u0 = initial_droplet(grid, center, radius, cfg.xi);
    let s0 = saturation(grid, &u0);
    let pp = PhaseFieldParams {
        max_steps: cfg.preprocessing_steps,
        ..PhaseFieldParams::preprocessing(cfg.xi)
    };
    let u = relax(grid, &u0, None, &pp, s0)?;
    if let Some(dir) = vtk_dir {
        write_phase_vtk(&dir.join(format!("phase_r{radius:.4}.vtk")), grid, &u)?;
    }
    let solutions = [
        solve_pressure_driven(grid, &u, params, 0)?,
        solve_pressure_driven(grid, &u, params, 1)?,
    ];
    let masks = if cfg.filter {
        Some([
            net_flow_mask(grid, &solutions[0].w, 0)?,
            net_flow_mask(grid, &solutions[1].w, 1)?,
        ])
    } else {
        None
    };
    let w0 = solve_surface_tension(grid, &u, params, std::f64::consts::FRAC_PI_2)?;
    let eff = EffectiveParameters::assemble(grid, &u, &solutions, &w0, masks.as_ref().map(|m| &m[..]))?;
    Ok(RelPermRecord {
        s1: eff.s1,
        k_rel1: relative_permeability(&eff.k1, kappa_abs, cfg.m),
        k_rel2: relative_permeability(&eff.k2, kappa_abs, 1.0),
        m1: eff.m1,
        m2: eff.m2,
        area: eff.area,
        porosity: eff.porosity,
        geometry: cfg.geometry.to_string(),
        m: cfg.m,
        r: cfg.r,
        radius,
        center,
    })
}

/// Worker budget: `POREHOM_WORKERS` when set to a positive integer,
/// otherwise one thread per core.
fn worker_budget() -> Option<usize> {
    std::env::var("POREHOM_WORKERS").ok()?.parse().ok().filter(|&n| n > 0)
}

/// Runs a saturation sweep and returns the records sorted by
/// saturation. A solver failure for one radius is reported on stderr
/// and skipped; the sweep continues. Output files configured in
/// `cfg.csv_out` / `cfg.vtk_dir` are written before returning.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<RelPermRecord>> {
    cfg.validate()?;
    let grid = build_unit_cell(&cfg.geometry, cfg.n)?;
    let params = FluidParams { m: cfg.m, r: cfg.r, ..FluidParams::unit() };
    // The absolute permeability depends only on (geometry, resolution):
    // computed once here, reused for every radius.
    let kappa_tensor = absolute_permeability(&grid, &FluidParams::unit())?;
    let kappa_abs = kappa_tensor.isotropic_scalar(0.01)?;
    let center = cfg.center.unwrap_or(default_center(&cfg.geometry));
    if let Some(dir) = &cfg.vtk_dir {
        std::fs::create_dir_all(dir)?;
    }

    let run_all = || -> Vec<(f64, Result<RelPermRecord>)> {
        use rayon::prelude::*;
        cfg.radii
            .par_iter()
            .map(|&r| {
                (r, sweep_radius(&grid, cfg, center, r, &params, kappa_abs, cfg.vtk_dir.as_deref()))
            })
            .collect()
    };
    let results = match worker_budget() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };

    let mut records = Vec::with_capacity(results.len());
    for (radius, res) in results {
        match res {
            Ok(rec) => records.push(rec),
            Err(e) => eprintln!("sweep: radius {radius} failed and is skipped: {e}"),
        }
    }
    records.sort_by(|a, b| a.s1.total_cmp(&b.s1));

    if let Some(path) = &cfg.csv_out {
        write_relperm_csv(path, &records)?;
    }
    Ok(records)
}
