//! Staggered-grid Stokes solvers for the auxiliary cell problems.
//!
//! Velocities live on cell faces (MAC layout): x-components on vertical
//! faces, y-components on horizontal faces. Pressures live at cell
//! centers. A face carries an unknown only when both adjacent cells are
//! fluid; faces touching solid cells hold velocity 0, which encodes
//! no-penetration at the staircase wall. Wall shear uses a half-cell
//! ghost with Navier slip length λ (λ = 0 is no-slip).
//!
//! Three drivers share one discrete operator:
//! - a unit macroscopic pressure gradient along an axis, Ēu e_j,
//! - the surface-tension force of a frozen phase field,
//! - an arbitrary macroscopic gradient combined with surface tension.
//!
//! The solutions compose linearly: the velocity under macroscopic
//! gradient g is v = -Σ_j w_j g_j - w₀, where w_j answers the axis
//! drivers and w₀ the surface-tension driver.

use crate::error::{Error, Result};
use crate::geometry::UnitCellGrid;
use crate::phasefield::{contact_flux, PhaseField};
use crate::sparse::LinearSystem;

/// Face-normal velocity components on the staggered periodic grid.
///
/// Both component arrays are n×n, row-major `j*n + i`. The x-face
/// `(i, j)` sits at `(i·h, (j+1/2)h)` between cells `(i-1, j)` and
/// `(i, j)`; the y-face `(i, j)` sits at `((i+1/2)h, j·h)` between
/// cells `(i, j-1)` and `(i, j)`. Inactive faces are always 0.
#[derive(Debug, Clone)]
pub struct CellVelocity {
    n: usize,
    h: f64,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl CellVelocity {
    /// All-zero velocity on the grid's face layout.
    pub fn zeros(grid: &UnitCellGrid) -> Self {
        let n = grid.n();
        CellVelocity { n, h: grid.h(), ux: vec![0.0; n * n], uy: vec![0.0; n * n] }
    }

    /// Faces per axis (equals the grid resolution).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Periodic face index shared by both component arrays.
    #[inline]
    pub fn face(&self, i: isize, j: isize) -> usize {
        let n = self.n as isize;
        let iw = i.rem_euclid(n) as usize;
        let jw = j.rem_euclid(n) as usize;
        jw * self.n + iw
    }

    /// x-velocity at the (periodically wrapped) x-face `(i, j)`.
    #[inline]
    pub fn face_x(&self, i: isize, j: isize) -> f64 {
        self.ux[self.face(i, j)]
    }

    /// y-velocity at the (periodically wrapped) y-face `(i, j)`.
    #[inline]
    pub fn face_y(&self, i: isize, j: isize) -> f64 {
        self.uy[self.face(i, j)]
    }

    /// Discrete divergence at cell `(i, j)`: net outflow over h.
    #[inline]
    pub fn divergence(&self, i: isize, j: isize) -> f64 {
        (self.face_x(i + 1, j) - self.face_x(i, j) + self.face_y(i, j + 1) - self.face_y(i, j))
            / self.h
    }

    /// Largest |divergence| over fluid cells, counting only active faces
    /// (inactive faces transport nothing regardless of stored values).
    pub fn max_divergence(&self, grid: &UnitCellGrid) -> f64 {
        let act = |a: bool, v: f64| if a { v } else { 0.0 };
        let mut worst = 0.0f64;
        for j in 0..self.n as isize {
            for i in 0..self.n as isize {
                if grid.is_fluid(i, j) {
                    let div = (act(grid.x_face_active(i + 1, j), self.face_x(i + 1, j))
                        - act(grid.x_face_active(i, j), self.face_x(i, j))
                        + act(grid.y_face_active(i, j + 1), self.face_y(i, j + 1))
                        - act(grid.y_face_active(i, j), self.face_y(i, j)))
                        / self.h;
                    worst = worst.max(div.abs());
                }
            }
        }
        worst
    }

    /// Cell-centered velocity: mean of the two opposing face values.
    pub fn at_cell(&self, i: isize, j: isize) -> [f64; 2] {
        [
            0.5 * (self.face_x(i, j) + self.face_x(i + 1, j)),
            0.5 * (self.face_y(i, j) + self.face_y(i, j + 1)),
        ]
    }
}

/// Fluid pair description: ratios, dimensionless groups, wall slip.
///
/// Fluid 1 is the phase marked by u = 1; fluid 2 by u = 0. Viscosity and
/// density interpolate linearly between the phases, normalized to fluid 2:
/// μ(u) = 1 + u(M-1), ρ(u) = 1 + u(R-1).
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FluidParams {
    /// Viscosity ratio M = μ₁/μ₂ > 0.
    pub m: f64,
    /// Density ratio R = ρ₁/ρ₂ > 0.
    pub r: f64,
    /// Capillary number > 0.
    pub ca: f64,
    /// Reynolds number > 0.
    pub re: f64,
    /// Scaled Euler number Ēu = ε²Eu > 0.
    pub eu_bar: f64,
    /// Navier slip length λ ≥ 0 (0 gives no-slip walls).
    pub slip: f64,
}

impl FluidParams {
    /// All dimensionless numbers 1, no-slip walls: the reference setting
    /// for the cell problems.
    pub fn unit() -> Self {
        FluidParams { m: 1.0, r: 1.0, ca: 1.0, re: 1.0, eu_bar: 1.0, slip: 0.0 }
    }

    /// Phase-interpolated viscosity; u is clamped to [0, 1] so slight
    /// Allen-Cahn overshoots cannot produce negative material values.
    #[inline]
    pub fn viscosity(&self, u: f64) -> f64 {
        1.0 + u.clamp(0.0, 1.0) * (self.m - 1.0)
    }

    /// Phase-interpolated density, clamped like [`Self::viscosity`].
    #[inline]
    pub fn density(&self, u: f64) -> f64 {
        1.0 + u.clamp(0.0, 1.0) * (self.r - 1.0)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ok = [self.m, self.r, self.ca, self.re, self.eu_bar]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && self.slip.is_finite()
            && self.slip >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid fluid parameters: {self:?}")));
        }
        Ok(())
    }
}

impl Default for FluidParams {
    fn default() -> Self {
        Self::unit()
    }
}

/// Forcing that drove a cell solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellDriver {
    /// Unit macroscopic pressure gradient Ēu e_axis (axis 0 = x, 1 = y).
    Axis(usize),
    /// Surface-tension force of the frozen phase field.
    SurfaceTension,
    /// Macroscopic pressure gradient g combined with surface tension.
    PressureGradient([f64; 2]),
}

/// Residual norms of a converged solve, max-norm over equations.
#[derive(Debug, Clone, Copy)]
pub struct Residuals {
    /// Momentum equations, algebraic ‖Ax-b‖_∞ over momentum rows.
    pub momentum: f64,
    /// Mass equations, recomputed from the returned fields: max |∇·(ρw)|.
    pub mass: f64,
}

/// Velocity/pressure answer to one cell problem.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub w: CellVelocity,
    /// Cell-centered pressure, row-major n×n, 0 on solid cells and
    /// mean-free over the fluid.
    pub pi: Vec<f64>,
    pub driver: CellDriver,
    pub residuals: Residuals,
}

/// Solves the pressure-driven auxiliary problem along an axis:
/// -(1/Re)∇·(2μ(u)ε(w) - (2/3)μ(u)(∇·w)I) + Ēu∇Π = Ēu e_axis with
/// ∇·(ρ(u)w) = 0, Navier slip on walls, periodicity, and mean-free Π.
pub fn solve_pressure_driven(
    grid: &UnitCellGrid,
    u: &PhaseField,
    params: &FluidParams,
    axis: usize,
) -> Result<CellSolution> {
    assert!(axis < 2, "axis must be 0 (x) or 1 (y)");
    solve_cell(grid, u, params, std::f64::consts::FRAC_PI_2, CellDriver::Axis(axis))
}

/// Solves the surface-tension-driven auxiliary problem: the same
/// operator with right-hand side +(1/Ca)(3ξ/2)∇·(∇u ⊗ ∇u).
///
/// θ_eq fixes the one-sided wall values of ∇u through the contact-angle
/// flux condition (π/2 reduces them to zero-flux).
pub fn solve_surface_tension(
    grid: &UnitCellGrid,
    u: &PhaseField,
    params: &FluidParams,
    theta_eq: f64,
) -> Result<CellSolution> {
    solve_cell(grid, u, params, theta_eq, CellDriver::SurfaceTension)
}

/// Solves for the velocity under a full macroscopic pressure gradient g
/// plus capillarity: right-hand side -Ēu g - (1/Ca)(3ξ/2)∇·(∇u ⊗ ∇u).
/// Superposition against the auxiliary problems: v = -Σ_j w_j g_j - w₀.
pub fn solve_with_gradient(
    grid: &UnitCellGrid,
    u: &PhaseField,
    params: &FluidParams,
    theta_eq: f64,
    grad_p: [f64; 2],
) -> Result<CellSolution> {
    solve_cell(grid, u, params, theta_eq, CellDriver::PressureGradient(grad_p))
}

/// Unknown numbering for the saddle system.
struct Dofs {
    n: usize,
    /// Unknown index per x-face (j*n+i), usize::MAX when inactive.
    xdof: Vec<usize>,
    ydof: Vec<usize>,
    /// Unknown index per cell, usize::MAX when solid.
    pdof: Vec<usize>,
    xfaces: Vec<(isize, isize)>,
    yfaces: Vec<(isize, isize)>,
    cells: Vec<(isize, isize)>,
}

impl Dofs {
    fn new(grid: &UnitCellGrid) -> Self {
        let n = grid.n();
        let mut d = Dofs {
            n,
            xdof: vec![usize::MAX; n * n],
            ydof: vec![usize::MAX; n * n],
            pdof: vec![usize::MAX; n * n],
            xfaces: Vec::new(),
            yfaces: Vec::new(),
            cells: Vec::new(),
        };
        for j in 0..n as isize {
            for i in 0..n as isize {
                if grid.x_face_active(i, j) {
                    d.xdof[j as usize * n + i as usize] = d.xfaces.len();
                    d.xfaces.push((i, j));
                }
            }
        }
        let nx = d.xfaces.len();
        for j in 0..n as isize {
            for i in 0..n as isize {
                if grid.y_face_active(i, j) {
                    d.ydof[j as usize * n + i as usize] = nx + d.yfaces.len();
                    d.yfaces.push((i, j));
                }
            }
        }
        let nw = nx + d.yfaces.len();
        for j in 0..n as isize {
            for i in 0..n as isize {
                if grid.is_fluid(i, j) {
                    d.pdof[j as usize * n + i as usize] = nw + d.cells.len();
                    d.cells.push((i, j));
                }
            }
        }
        d
    }

    #[inline]
    fn wrap(&self, i: isize, j: isize) -> usize {
        let n = self.n as isize;
        j.rem_euclid(n) as usize * self.n + i.rem_euclid(n) as usize
    }

    #[inline]
    fn x(&self, i: isize, j: isize) -> Option<usize> {
        match self.xdof[self.wrap(i, j)] {
            usize::MAX => None,
            d => Some(d),
        }
    }

    #[inline]
    fn y(&self, i: isize, j: isize) -> Option<usize> {
        match self.ydof[self.wrap(i, j)] {
            usize::MAX => None,
            d => Some(d),
        }
    }

    #[inline]
    fn p(&self, i: isize, j: isize) -> usize {
        self.pdof[self.wrap(i, j)]
    }

    fn n_w(&self) -> usize {
        self.xfaces.len() + self.yfaces.len()
    }
}

/// Coefficients of a one-sided or centered transverse derivative at a
/// node: `value = above*w_above + below*w_below` where above/below are
/// the two parallel faces straddling the node (None when inactive).
struct NodeDerivative {
    above: Option<(usize, f64)>,
    below: Option<(usize, f64)>,
}

/// Transverse derivative of a face velocity across a node, with wall
/// handling: a flat wall on the inactive side uses the half-cell Navier
/// ghost 1/(λ + h/2); a staircase corner (only one solid cell on that
/// side) falls back to a plain difference against the zero face value.
fn node_derivative(
    above: Option<usize>,
    below: Option<usize>,
    flat_wall_below: bool,
    flat_wall_above: bool,
    h: f64,
    slip: f64,
) -> NodeDerivative {
    let ghost = 1.0 / (slip + 0.5 * h);
    match (above, below) {
        (Some(a), Some(b)) => NodeDerivative {
            above: Some((a, 1.0 / h)),
            below: Some((b, -1.0 / h)),
        },
        (Some(a), None) => NodeDerivative {
            above: Some((a, if flat_wall_below { ghost } else { 1.0 / h })),
            below: None,
        },
        (None, Some(b)) => NodeDerivative {
            above: None,
            below: Some((b, if flat_wall_above { -ghost } else { -1.0 / h })),
        },
        (None, None) => NodeDerivative { above: None, below: None },
    }
}

/// Cell-centered phase gradient with contact-angle one-sided values at
/// walls: at a wall face the normal derivative is the contact-angle flux
/// (zero at the neutral angle) instead of a finite difference.
fn phase_gradients(
    grid: &UnitCellGrid,
    u: &PhaseField,
    theta_eq: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n() as isize;
    let h = grid.h();
    let xi = u.xi();
    let mut gx = vec![0.0; (n * n) as usize];
    let mut gy = vec![0.0; (n * n) as usize];
    for j in 0..n {
        for i in 0..n {
            if grid.is_solid(i, j) {
                continue;
            }
            let uc = u.value(grid, i, j);
            let q = contact_flux(uc, theta_eq, xi);
            // Mean of the one-sided derivatives on the two x-faces; the
            // outward wall flux is q, so ∂x u = q at an east wall and
            // -q at a west wall.
            let east = if grid.is_fluid(i + 1, j) {
                (u.value(grid, i + 1, j) - uc) / h
            } else {
                q
            };
            let west = if grid.is_fluid(i - 1, j) {
                (uc - u.value(grid, i - 1, j)) / h
            } else {
                -q
            };
            let north = if grid.is_fluid(i, j + 1) {
                (u.value(grid, i, j + 1) - uc) / h
            } else {
                q
            };
            let south = if grid.is_fluid(i, j - 1) {
                (uc - u.value(grid, i, j - 1)) / h
            } else {
                -q
            };
            gx[grid.cell(i, j)] = 0.5 * (east + west);
            gy[grid.cell(i, j)] = 0.5 * (north + south);
        }
    }
    (gx, gy)
}

/// Mean of a cell quantity over the fluid cells adjacent to node (i, j),
/// or 0 when none are fluid.
fn node_mean(grid: &UnitCellGrid, field: &[f64], i: isize, j: isize) -> f64 {
    let mut acc = 0.0;
    let mut cnt = 0usize;
    for (ci, cj) in [(i - 1, j - 1), (i, j - 1), (i - 1, j), (i, j)] {
        if grid.is_fluid(ci, cj) {
            acc += field[grid.cell(ci, cj)];
            cnt += 1;
        }
    }
    if cnt == 0 {
        0.0
    } else {
        acc / cnt as f64
    }
}

fn solve_cell(
    grid: &UnitCellGrid,
    u: &PhaseField,
    params: &FluidParams,
    theta_eq: f64,
    driver: CellDriver,
) -> Result<CellSolution> {
    params.validate()?;
    let n = grid.n();
    if grid.n_fluid() == n * n {
        return Err(Error::SingularSystem(
            "no solid cells: the periodic momentum balance admits rigid translations \
             and cannot absorb a net forcing"
                .into(),
        ));
    }

    let dofs = Dofs::new(grid);
    let nw = dofs.n_w();
    let nc = dofs.cells.len();
    let total = nw + nc + 1;
    let mult = total - 1;
    let h = grid.h();
    let inv_re_h = 1.0 / (params.re * h);
    let eu_h = params.eu_bar / h;

    // Cell material fields.
    let mu: Vec<f64> = (0..n * n).map(|c| params.viscosity(u.values()[c])).collect();
    let rho: Vec<f64> = (0..n * n).map(|c| params.density(u.values()[c])).collect();

    // Surface-tension stress T = ∇u ⊗ ∇u where a driver needs it:
    // T_xx, T_yy at cells; T_xy at nodes (mean of adjacent fluid cells).
    let st_scale = match driver {
        CellDriver::Axis(_) => 0.0,
        CellDriver::SurfaceTension => 1.5 * u.xi() / params.ca,
        CellDriver::PressureGradient(_) => -1.5 * u.xi() / params.ca,
    };
    let (txx, tyy, txy_cell) = if st_scale != 0.0 {
        let (gx, gy) = phase_gradients(grid, u, theta_eq);
        let txx: Vec<f64> = gx.iter().map(|g| g * g).collect();
        let tyy: Vec<f64> = gy.iter().map(|g| g * g).collect();
        let txy: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
        (txx, tyy, txy)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    let (gx_macro, gy_macro) = match driver {
        CellDriver::Axis(0) => (params.eu_bar, 0.0),
        CellDriver::Axis(_) => (0.0, params.eu_bar),
        CellDriver::SurfaceTension => (0.0, 0.0),
        CellDriver::PressureGradient(g) => (-params.eu_bar * g[0], -params.eu_bar * g[1]),
    };

    let mut sys = LinearSystem::new(total);

    // Momentum rows, x-faces. The stress divergence at face (i, j) is
    // (τ_xx(i,j) - τ_xx(i-1,j))/h + (τ_xy(i,j+1) - τ_xy(i,j))/h with
    // τ_xx at cells and τ_xy at nodes.
    for (row, &(i, j)) in dofs.xfaces.iter().enumerate() {
        // τ_xx contributions from the two neighbor cells: sign +1 for
        // cell (i, j), -1 for (i-1, j), each scaled by -(1/Re)/h.
        for (ci, sign) in [(i, 1.0), (i - 1, -1.0)] {
            let m = mu[grid.cell(ci, j)];
            let s = -inv_re_h * sign;
            // (4μ/3)(wx(ci+1,j) - wx(ci,j))/h
            if let Some(d) = dofs.x(ci + 1, j) {
                sys.add(row, d, s * 4.0 * m / (3.0 * h));
            }
            if let Some(d) = dofs.x(ci, j) {
                sys.add(row, d, -s * 4.0 * m / (3.0 * h));
            }
            // -(2μ/3)(wy(ci,j+1) - wy(ci,j))/h
            if let Some(d) = dofs.y(ci, j + 1) {
                sys.add(row, d, -s * 2.0 * m / (3.0 * h));
            }
            if let Some(d) = dofs.y(ci, j) {
                sys.add(row, d, s * 2.0 * m / (3.0 * h));
            }
        }
        // τ_xy at nodes (i, j) and (i, j+1): sign -1 and +1.
        for (jn, sign) in [(j + 1, 1.0), (j, -1.0)] {
            let m = node_mean(grid, &mu, i, jn);
            let s = -inv_re_h * sign * m;
            // ∂y wx across the node: faces (i, jn) above, (i, jn-1) below.
            let dwx = node_derivative(
                dofs.x(i, jn),
                dofs.x(i, jn - 1),
                grid.is_solid(i - 1, jn - 1) && grid.is_solid(i, jn - 1),
                grid.is_solid(i - 1, jn) && grid.is_solid(i, jn),
                h,
                params.slip,
            );
            for part in [dwx.above, dwx.below].into_iter().flatten() {
                sys.add(row, part.0, s * part.1);
            }
            // ∂x wy across the node: faces (i, jn) east, (i-1, jn) west.
            let dwy = node_derivative(
                dofs.y(i, jn),
                dofs.y(i - 1, jn),
                grid.is_solid(i - 1, jn - 1) && grid.is_solid(i - 1, jn),
                grid.is_solid(i, jn - 1) && grid.is_solid(i, jn),
                h,
                params.slip,
            );
            for part in [dwy.above, dwy.below].into_iter().flatten() {
                sys.add(row, part.0, s * part.1);
            }
        }
        // Pressure gradient Ēu(Π(i,j) - Π(i-1,j))/h.
        sys.add(row, dofs.p(i, j), eu_h);
        sys.add(row, dofs.p(i - 1, j), -eu_h);

        // Right-hand side.
        let mut rhs = gx_macro;
        if st_scale != 0.0 {
            let dtxx = (txx[grid.cell(i, j)] - txx[grid.cell(i - 1, j)]) / h;
            let dtxy = (node_mean(grid, &txy_cell, i, j + 1) - node_mean(grid, &txy_cell, i, j))
                / h;
            rhs += st_scale * (dtxx + dtxy);
        }
        sys.add_rhs(row, rhs);
    }

    // Momentum rows, y-faces: the mirrored stencil.
    for (k, &(i, j)) in dofs.yfaces.iter().enumerate() {
        let row = dofs.xfaces.len() + k;
        for (cj, sign) in [(j, 1.0), (j - 1, -1.0)] {
            let m = mu[grid.cell(i, cj)];
            let s = -inv_re_h * sign;
            if let Some(d) = dofs.y(i, cj + 1) {
                sys.add(row, d, s * 4.0 * m / (3.0 * h));
            }
            if let Some(d) = dofs.y(i, cj) {
                sys.add(row, d, -s * 4.0 * m / (3.0 * h));
            }
            if let Some(d) = dofs.x(i + 1, cj) {
                sys.add(row, d, -s * 2.0 * m / (3.0 * h));
            }
            if let Some(d) = dofs.x(i, cj) {
                sys.add(row, d, s * 2.0 * m / (3.0 * h));
            }
        }
        for (inn, sign) in [(i + 1, 1.0), (i, -1.0)] {
            let m = node_mean(grid, &mu, inn, j);
            let s = -inv_re_h * sign * m;
            // ∂x wy across node (inn, j): faces (inn, j) east, (inn-1, j) west.
            let dwy = node_derivative(
                dofs.y(inn, j),
                dofs.y(inn - 1, j),
                grid.is_solid(inn - 1, j - 1) && grid.is_solid(inn - 1, j),
                grid.is_solid(inn, j - 1) && grid.is_solid(inn, j),
                h,
                params.slip,
            );
            for part in [dwy.above, dwy.below].into_iter().flatten() {
                sys.add(row, part.0, s * part.1);
            }
            // ∂y wx across node (inn, j): faces (inn, j) above, (inn, j-1) below.
            let dwx = node_derivative(
                dofs.x(inn, j),
                dofs.x(inn, j - 1),
                grid.is_solid(inn - 1, j - 1) && grid.is_solid(inn, j - 1),
                grid.is_solid(inn - 1, j) && grid.is_solid(inn, j),
                h,
                params.slip,
            );
            for part in [dwx.above, dwx.below].into_iter().flatten() {
                sys.add(row, part.0, s * part.1);
            }
        }
        sys.add(row, dofs.p(i, j), eu_h);
        sys.add(row, dofs.p(i, j - 1), -eu_h);

        let mut rhs = gy_macro;
        if st_scale != 0.0 {
            let dtyy = (tyy[grid.cell(i, j)] - tyy[grid.cell(i, j - 1)]) / h;
            let dtxy = (node_mean(grid, &txy_cell, i + 1, j) - node_mean(grid, &txy_cell, i, j))
                / h;
            rhs += st_scale * (dtyy + dtxy);
        }
        sys.add_rhs(row, rhs);
    }

    // Mass rows per fluid cell: ∇·(ρw) = 0 with arithmetic face density,
    // plus the gauge multiplier that absorbs the redundant constraint.
    for (k, &(i, j)) in dofs.cells.iter().enumerate() {
        let row = nw + k;
        let rc = rho[grid.cell(i, j)];
        if let Some(d) = dofs.x(i + 1, j) {
            sys.add(row, d, 0.5 * (rc + rho[grid.cell(i + 1, j)]) / h);
        }
        if let Some(d) = dofs.x(i, j) {
            sys.add(row, d, -0.5 * (rc + rho[grid.cell(i - 1, j)]) / h);
        }
        if let Some(d) = dofs.y(i, j + 1) {
            sys.add(row, d, 0.5 * (rc + rho[grid.cell(i, j + 1)]) / h);
        }
        if let Some(d) = dofs.y(i, j) {
            sys.add(row, d, -0.5 * (rc + rho[grid.cell(i, j - 1)]) / h);
        }
        sys.add(row, mult, 1.0);
        // Gauge row: ΣΠ = 0.
        sys.add(mult, nw + k, 1.0);
    }

    let x = sys.solve()?;

    let mut w = CellVelocity::zeros(grid);
    for (d, &(i, j)) in dofs.xfaces.iter().enumerate() {
        let f = w.face(i, j);
        w.ux[f] = x[d];
    }
    for (d, &(i, j)) in dofs.yfaces.iter().enumerate() {
        let f = w.face(i, j);
        w.uy[f] = x[dofs.xfaces.len() + d];
    }
    let mut pi = vec![0.0; n * n];
    let mean_pi = dofs.cells.iter().enumerate().map(|(k, _)| x[nw + k]).sum::<f64>() / nc as f64;
    for (k, &(i, j)) in dofs.cells.iter().enumerate() {
        pi[grid.cell(i, j)] = x[nw + k] - mean_pi;
    }

    // Momentum residual: algebraic defect over momentum rows.
    let ax = sys.matvec(&x);
    let momentum = (0..nw)
        .map(|r| (ax[r] - sys.rhs()[r]).abs())
        .fold(0.0f64, f64::max);
    // Mass residual: recomputed physically from the returned fields.
    let mut mass = 0.0f64;
    for &(i, j) in &dofs.cells {
        let rc = rho[grid.cell(i, j)];
        let div = (0.5 * (rc + rho[grid.cell(i + 1, j)]) * w.face_x(i + 1, j)
            - 0.5 * (rc + rho[grid.cell(i - 1, j)]) * w.face_x(i, j)
            + 0.5 * (rc + rho[grid.cell(i, j + 1)]) * w.face_y(i, j + 1)
            - 0.5 * (rc + rho[grid.cell(i, j - 1)]) * w.face_y(i, j))
            / h;
        mass = mass.max(div.abs());
    }

    if !momentum.is_finite() || !mass.is_finite() {
        return Err(Error::NonFinite("stokes cell solve produced a non-finite residual".into()));
    }
    Ok(CellSolution { w, pi, driver, residuals: Residuals { momentum, mass } })
}
