//! Effective parameters assembled from cell solutions: phase mobility
//! tensors, surface-tension vectors, absolute and relative
//! permeability, and the macroscopic Darcy-type velocity map.

use crate::error::{Error, Result};
use crate::geometry::UnitCellGrid;
use crate::phasefield::{interfacial_area, saturation, PhaseField};
use crate::stokescell::{solve_pressure_driven, CellDriver, CellSolution, FluidParams};
use crate::streamflow::NetFlowMask;

/// Relative spread below which a 2×2 tensor collapses to a scalar.
pub const ISOTROPY_TOL: f64 = 0.01;

/// Dense 2×2 tensor with row index = velocity component and column
/// index = driver axis.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Tensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yx: f64,
    pub yy: f64,
}

impl Tensor2 {
    pub const ZERO: Tensor2 = Tensor2 {
        xx: 0.0,
        xy: 0.0,
        yx: 0.0,
        yy: 0.0,
    };

    pub const IDENTITY: Tensor2 = Tensor2 {
        xx: 1.0,
        xy: 0.0,
        yx: 0.0,
        yy: 1.0,
    };

    pub fn scale(self, s: f64) -> Tensor2 {
        Tensor2 {
            xx: s * self.xx,
            xy: s * self.xy,
            yx: s * self.yx,
            yy: s * self.yy,
        }
    }

    pub fn add(self, o: Tensor2) -> Tensor2 {
        Tensor2 {
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            yx: self.yx + o.yx,
            yy: self.yy + o.yy,
        }
    }

    pub fn sub(self, o: Tensor2) -> Tensor2 {
        self.add(o.scale(-1.0))
    }

    /// Max-norm over entries.
    pub fn max_abs(&self) -> f64 {
        self.xx
            .abs()
            .max(self.xy.abs())
            .max(self.yx.abs())
            .max(self.yy.abs())
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.xx * v[0] + self.xy * v[1],
            self.yx * v[0] + self.yy * v[1],
        ]
    }

    /// Collapses the tensor to a scalar when it is isotropic within
    /// `rel_tol`: equal diagonal entries and negligible off-diagonals,
    /// both relative to the diagonal magnitude.
    pub fn isotropic_scalar(&self, rel_tol: f64) -> Result<f64> {
        let scale = self.xx.abs().max(self.yy.abs());
        if scale == 0.0 {
            return Err(Error::Anisotropic(
                "tensor is identically zero, no scalar representation".into(),
            ));
        }
        let spread = (self.xx - self.yy).abs();
        let off = self.xy.abs().max(self.yx.abs());
        if spread > rel_tol * scale || off > rel_tol * scale {
            return Err(Error::Anisotropic(format!(
                "diagonal spread {spread:.3e}, max off-diagonal {off:.3e} exceed {rel_tol:.1e} of scale {scale:.3e}"
            )));
        }
        Ok(0.5 * (self.xx + self.yy))
    }
}

/// Everything the homogenized momentum balance needs from one frozen
/// phase configuration.
#[derive(Debug, Clone)]
pub struct EffectiveParameters {
    /// Mobility tensor of phase 1 (weight u).
    pub k1: Tensor2,
    /// Mobility tensor of phase 2 (weight 1-u).
    pub k2: Tensor2,
    /// Surface-tension velocity vector of phase 1.
    pub m1: [f64; 2],
    /// Surface-tension velocity vector of phase 2.
    pub m2: [f64; 2],
    /// Saturation of phase 1 over the pore space.
    pub s1: f64,
    /// Specific interfacial area.
    pub area: f64,
    /// Porosity of the unit cell.
    pub porosity: f64,
    /// Whether recirculation filtering was applied to the mobilities.
    pub filtered: bool,
}

impl EffectiveParameters {
    /// Assembles all effective parameters from the two pressure-driven
    /// solutions, the surface-tension solution, and optional per-axis
    /// net-flow masks (applied to the mobilities only).
    pub fn assemble(
        grid: &UnitCellGrid,
        u: &PhaseField,
        solutions: &[CellSolution],
        w0: &CellSolution,
        masks: Option<&[NetFlowMask]>,
    ) -> Result<Self> {
        let (k1, k2) = mobility_tensors(grid, u, solutions, masks)?;
        let (m1, m2) = surface_tension_vectors(grid, u, w0)?;
        Ok(EffectiveParameters {
            k1,
            k2,
            m1,
            m2,
            s1: saturation(grid, u),
            area: interfacial_area(grid, u),
            porosity: grid.porosity(),
            filtered: masks.is_some(),
        })
    }
}

/// One point of a relative-permeability curve plus the metadata needed
/// to reproduce it.
#[derive(Debug, Clone)]
pub struct RelPermRecord {
    pub s1: f64,
    pub k_rel1: Tensor2,
    pub k_rel2: Tensor2,
    pub m1: [f64; 2],
    pub m2: [f64; 2],
    pub area: f64,
    pub porosity: f64,
    /// Geometry identifier, e.g. "obstacle(0.45)".
    pub geometry: String,
    /// Viscosity ratio of phase 1 to phase 2.
    pub m: f64,
    /// Density ratio of phase 1 to phase 2.
    pub r: f64,
    /// Droplet descriptor of the initial condition.
    pub radius: f64,
    pub center: [f64; 2],
}

fn check_grid(grid: &UnitCellGrid, u: &PhaseField, w_n: usize) -> Result<()> {
    let n = grid.n();
    if u.values().len() != n * n {
        return Err(Error::Config(format!(
            "phase field has {} values, grid needs {}",
            u.values().len(),
            n * n
        )));
    }
    if w_n != n {
        return Err(Error::Config(format!(
            "cell solution resolution {w_n} does not match grid resolution {n}"
        )));
    }
    Ok(())
}

/// Phase-weighted integral of one cell velocity field over the pore
/// space: φ⁻¹ Σ u⁽ᵏ⁾ w h², filling one tensor column per driver axis.
/// Velocities are interpolated to cell centers. A mask restricts the
/// sum to marked cells; the normalization stays φ⁻¹.
fn weighted_column(
    grid: &UnitCellGrid,
    u: &PhaseField,
    w: &crate::stokescell::CellVelocity,
    mask: Option<&NetFlowMask>,
) -> ([f64; 2], [f64; 2]) {
    let n = grid.n() as isize;
    let mut c1 = [0.0_f64; 2];
    let mut c2 = [0.0_f64; 2];
    for j in 0..n {
        for i in 0..n {
            if grid.is_solid(i, j) {
                continue;
            }
            if let Some(m) = mask {
                if !m.is_marked(i, j) {
                    continue;
                }
            }
            let uu = u.value(grid, i, j);
            let [wx, wy] = w.at_cell(i, j);
            c1[0] += uu * wx;
            c1[1] += uu * wy;
            c2[0] += (1.0 - uu) * wx;
            c2[1] += (1.0 - uu) * wy;
        }
    }
    let scale = grid.h() * grid.h() / grid.porosity();
    (
        [c1[0] * scale, c1[1] * scale],
        [c2[0] * scale, c2[1] * scale],
    )
}

/// Mobility tensors of both phases: 𝒦⁽ᵏ⁾_ij = φ⁻¹ ∫ u⁽ᵏ⁾ (w_j)_i with
/// u⁽¹⁾ = u and u⁽²⁾ = 1-u. `solutions` must hold the pressure-driven
/// solutions for axes 0 and 1 in order; `masks`, when given, must hold
/// the matching per-axis net-flow masks and restricts each column's
/// integral to its own marked cells.
pub fn mobility_tensors(
    grid: &UnitCellGrid,
    u: &PhaseField,
    solutions: &[CellSolution],
    masks: Option<&[NetFlowMask]>,
) -> Result<(Tensor2, Tensor2)> {
    if solutions.len() != 2 {
        return Err(Error::Config(format!(
            "need one pressure-driven solution per axis, got {}",
            solutions.len()
        )));
    }
    for (axis, sol) in solutions.iter().enumerate() {
        if sol.driver != CellDriver::Axis(axis) {
            return Err(Error::Config(format!(
                "solution {axis} was driven by {:?}, expected Axis({axis})",
                sol.driver
            )));
        }
        check_grid(grid, u, sol.w.n())?;
    }
    if let Some(ms) = masks {
        if ms.len() != 2 {
            return Err(Error::Config(format!(
                "need one net-flow mask per axis, got {}",
                ms.len()
            )));
        }
        for (axis, m) in ms.iter().enumerate() {
            if m.axis() != axis {
                return Err(Error::Config(format!(
                    "mask {axis} was built for axis {}, expected {axis}",
                    m.axis()
                )));
            }
            if m.marked().len() != grid.n() * grid.n() {
                return Err(Error::Config(
                    "net-flow mask resolution does not match grid".into(),
                ));
            }
        }
    }

    let mut k1 = Tensor2::ZERO;
    let mut k2 = Tensor2::ZERO;
    for axis in 0..2 {
        let mask = masks.map(|ms| &ms[axis]);
        let (c1, c2) = weighted_column(grid, u, &solutions[axis].w, mask);
        if axis == 0 {
            k1.xx = c1[0];
            k1.yx = c1[1];
            k2.xx = c2[0];
            k2.yx = c2[1];
        } else {
            k1.xy = c1[0];
            k1.yy = c1[1];
            k2.xy = c2[0];
            k2.yy = c2[1];
        }
    }
    Ok((k1, k2))
}

/// Surface-tension velocity vectors of both phases:
/// ℳ⁽ᵏ⁾_i = φ⁻¹ ∫ u⁽ᵏ⁾ (w₀)_i. Never filtered by a net-flow mask.
pub fn surface_tension_vectors(
    grid: &UnitCellGrid,
    u: &PhaseField,
    w0: &CellSolution,
) -> Result<([f64; 2], [f64; 2])> {
    if w0.driver != CellDriver::SurfaceTension {
        return Err(Error::Config(format!(
            "solution was driven by {:?}, expected SurfaceTension",
            w0.driver
        )));
    }
    check_grid(grid, u, w0.w.n())?;
    Ok(weighted_column(grid, u, &w0.w, None))
}

/// Absolute permeability of the geometry: the mixture mobility of the
/// single-phase medium (u ≡ 0, unit property ratios), κ_ij = φ⁻¹ ∫ (w_j)_i.
/// Inherits Re, Ēu, and slip from `params`; M and R are forced to 1.
pub fn absolute_permeability(grid: &UnitCellGrid, params: &FluidParams) -> Result<Tensor2> {
    let single = FluidParams {
        m: 1.0,
        r: 1.0,
        ..params.clone()
    };
    let u0 = PhaseField::constant(grid, 0.0, 4.0 * grid.h());
    let sols = [
        solve_pressure_driven(grid, &u0, &single, 0)?,
        solve_pressure_driven(grid, &u0, &single, 1)?,
    ];
    let (_, k2) = mobility_tensors(grid, &u0, &sols, None)?;
    Ok(k2)
}

/// Relative permeability of one phase: K_rel = μ_k 𝒦⁽ᵏ⁾ / κ_abs with
/// the nondimensional viscosities μ₁ = M, μ₂ = 1. `kappa_abs` is the
/// scalar collapse of the absolute permeability; obtain it with
/// [`Tensor2::isotropic_scalar`], which refuses anisotropic media.
pub fn relative_permeability(k: &Tensor2, kappa_abs: f64, mu_k: f64) -> Tensor2 {
    k.scale(mu_k / kappa_abs)
}

/// Macroscopic phase velocity v̄⁽ᵏ⁾ = -𝒦⁽ᵏ⁾ ∇p - ℳ⁽ᵏ⁾.
pub fn darcy_velocity(k: &Tensor2, m: &[f64; 2], grad_p: [f64; 2]) -> [f64; 2] {
    let kv = k.mul_vec(grad_p);
    [-kv[0] - m[0], -kv[1] - m[1]]
}
