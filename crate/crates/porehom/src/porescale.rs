//! Transient coupled quasi-compressible Navier-Stokes + advective
//! Allen-Cahn simulator on a resolved rectangular channel.
//!
//! The domain is (0,lx)×(0,ly) with solid walls at y=0 and y=ly
//! (Navier slip, contact-angle flux), a pressure boundary at x=0 and
//! x=lx (prescribed normal momentum flux), phase Dirichlet at the
//! inlet, and free outflow at the outlet. Each step solves the fully
//! coupled backward-Euler system with Newton over (vx, vy, p, u); the
//! Jacobian is assembled by finite differences with a period-5 stencil
//! coloring (stencil reach is at most 2 cells).

use crate::error::{Error, Result};
use crate::phasefield::{contact_flux, double_well, equilibrium_profile_1d};
use crate::sparse::LinearSystem;
use crate::stokescell::FluidParams;

/// Phase overshoot beyond which a converged step is treated as failed.
const OVERSHOOT_BOUND: f64 = 0.25;
/// Advective CFL number above which a one-time advisory is printed.
const CFL_WARN: f64 = 50.0;
/// Newton step halvings before the iteration is declared stalled.
const MAX_BACKTRACK: usize = 12;
/// Time-step bisections per configured step before giving up.
const MAX_BISECT: usize = 10;

/// Initial phase configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoreScaleInitial {
    /// Spatially constant phase field.
    Uniform { value: f64 },
    /// Flat vertical interface at x0. `rising` means u goes 0 to 1
    /// with increasing x (phase 1 on the right).
    Interface { x0: f64, rising: bool },
    /// Channel-spanning meniscus: the circular arc that meets both
    /// walls at the configured contact angle, apex at x0 on the
    /// midline. Starts the run at the static interface shape.
    Meniscus { x0: f64, rising: bool },
    /// Disk of phase 1 centered at (cx, cy).
    Droplet { cx: f64, cy: f64, radius: f64 },
}

/// Full configuration of a pore-scale run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PoreScaleConfig {
    /// Domain extents; cells are square, so lx/ly must be commensurate
    /// with the resolution.
    pub lx: f64,
    pub ly: f64,
    /// Number of cells across the channel height.
    pub ny: usize,
    /// M, R, Ca, Re, Eu (eu_bar at resolved scale), slip length.
    pub fluid: FluidParams,
    /// Froude number; enters only when `gravity` is set.
    pub fr: f64,
    /// Scaled interface mobility.
    pub s: f64,
    /// Diffuse interface width.
    pub xi: f64,
    /// Equilibrium contact angle at the walls.
    pub theta_eq: f64,
    /// Prescribed inlet/outlet pressures.
    pub p_in: f64,
    pub p_out: f64,
    /// Phase value prescribed at the inlet.
    pub u_in: f64,
    /// Include the -(1/Fr²)ρ e_y body force.
    pub gravity: bool,
    /// Subtract the mean double-well slope (volume-preserving variant).
    pub conservative: bool,
    pub initial: PoreScaleInitial,
    pub dt: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for PoreScaleConfig {
    /// Channel analogue of the resolved two-phase experiment: a 2:1
    /// channel, neutral wetting, moderate capillarity, no gravity.
    fn default() -> Self {
        PoreScaleConfig {
            lx: 0.2,
            ly: 0.1,
            ny: 16,
            fluid: FluidParams::unit(),
            fr: 1.0,
            s: 1.0,
            xi: 0.025,
            theta_eq: std::f64::consts::FRAC_PI_2,
            p_in: 0.0,
            p_out: 0.0,
            u_in: 0.0,
            gravity: false,
            conservative: false,
            initial: PoreScaleInitial::Interface { x0: 0.1, rising: true },
            dt: 0.05,
            t_end: 1.0,
            newton_tol: 1e-8,
            newton_max_iter: 20,
        }
    }
}

impl PoreScaleConfig {
    /// Validates the configuration and returns the derived cell count
    /// along x.
    pub fn validate(&self) -> Result<usize> {
        if !(self.lx > 0.0 && self.ly > 0.0) {
            return Err(Error::Config("domain extents must be positive".into()));
        }
        if self.ny < 4 {
            return Err(Error::Config(format!(
                "resolution ny = {} is too coarse, need at least 4",
                self.ny
            )));
        }
        let nxf = self.lx / self.ly * self.ny as f64;
        let nx = nxf.round();
        if (nx - nxf).abs() > 1e-9 * nxf.max(1.0) || nx < 2.0 {
            return Err(Error::Config(format!(
                "lx/ly = {} does not give square cells at ny = {}",
                self.lx / self.ly,
                self.ny
            )));
        }
        let h = self.ly / self.ny as f64;
        if !(self.xi > 0.0) {
            return Err(Error::Config("interface width must be positive".into()));
        }
        if self.xi < 4.0 * h {
            eprintln!(
                "warning: interface width {} under-resolved (4h = {})",
                self.xi,
                4.0 * h
            );
        }
        if !(self.dt > 0.0 && self.t_end >= 0.0) {
            return Err(Error::Config("time step and horizon must be positive".into()));
        }
        if !(self.s > 0.0) {
            return Err(Error::Config("mobility S must be positive".into()));
        }
        if !(self.theta_eq > 0.0 && self.theta_eq < std::f64::consts::PI) {
            return Err(Error::Config("contact angle must lie in (0, pi)".into()));
        }
        if self.gravity && !(self.fr > 0.0) {
            return Err(Error::Config("Froude number must be positive".into()));
        }
        if !(self.u_in.is_finite() && self.p_in.is_finite() && self.p_out.is_finite()) {
            return Err(Error::Config("boundary values must be finite".into()));
        }
        if let PoreScaleInitial::Droplet { radius, .. } = self.initial {
            if !(radius > 0.0) {
                return Err(Error::Config("droplet radius must be positive".into()));
            }
        }
        if !(self.newton_tol > 0.0 && self.newton_max_iter >= 1) {
            return Err(Error::Config("invalid Newton controls".into()));
        }
        self.fluid.validate()?;
        Ok(nx as usize)
    }
}

/// Snapshot of the coupled fields. Velocities live on faces (vx on
/// vertical faces including the open boundaries, vy on horizontal
/// faces including the walls, which stay exactly zero); pressure and
/// phase at cell centers, row-major.
#[derive(Debug, Clone)]
pub struct PoreScaleState {
    pub t: f64,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub p: Vec<f64>,
    pub u: Vec<f64>,
}

/// Per-step diagnostics.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub t: f64,
    /// Advective CFL estimate max|v| dt / h (advisory, scheme is implicit).
    pub cfl: f64,
    /// Newton residual max-norms, one per iteration, ending below tol.
    pub newton_residuals: Vec<f64>,
}

/// One row of the run summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SummaryRow {
    pub t: f64,
    pub max_v: f64,
    pub angle_bottom: Option<f64>,
    pub angle_top: Option<f64>,
    pub total_u: f64,
    pub x_mid: Option<f64>,
    pub x_wall: Option<f64>,
}

/// Time series of summary rows produced by [`PoreScaleSim::run`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub rows: Vec<SummaryRow>,
}

impl RunSummary {
    /// Whether the interface deflection (midline position minus wall
    /// position) crossed from below -tol to above +tol over the run.
    pub fn curvature_inverted(&self, tol: f64) -> bool {
        let mut seen_negative = false;
        for row in &self.rows {
            let (Some(xm), Some(xw)) = (row.x_mid, row.x_wall) else {
                continue;
            };
            let d = xm - xw;
            if d <= -tol {
                seen_negative = true;
            }
            if seen_negative && d >= tol {
                return true;
            }
        }
        false
    }
}

/// Face velocities of a pore-scale state averaged to cell centers,
/// row-major over the nx×ny cells.
pub fn velocity_at_cells(nx: usize, ny: usize, state: &PoreScaleState) -> Vec<[f64; 2]> {
    assert_eq!(state.vx.len(), (nx + 1) * ny, "vx layout mismatch");
    assert_eq!(state.vy.len(), nx * (ny + 1), "vy layout mismatch");
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let vx = 0.5 * (state.vx[j * (nx + 1) + i] + state.vx[j * (nx + 1) + i + 1]);
            let vy = 0.5 * (state.vy[j * nx + i] + state.vy[(j + 1) * nx + i]);
            out.push([vx, vy]);
        }
    }
    out
}

/// Unknown layout: all vx faces, interior vy faces, pressures, phases.
#[derive(Debug, Clone, Copy)]
struct Layout {
    nx: usize,
    off_vy: usize,
    off_p: usize,
    off_u: usize,
    n: usize,
}

impl Layout {
    fn new(nx: usize, ny: usize) -> Self {
        let off_vy = (nx + 1) * ny;
        let off_p = off_vy + nx * (ny - 1);
        let off_u = off_p + nx * ny;
        Layout { nx, off_vy, off_p, off_u, n: off_u + nx * ny }
    }

    fn vx(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Interior y-faces only, j in 1..ny.
    fn vy(&self, i: usize, j: usize) -> usize {
        self.off_vy + (j - 1) * self.nx + i
    }

    fn p(&self, i: usize, j: usize) -> usize {
        self.off_p + j * self.nx + i
    }

    fn u(&self, i: usize, j: usize) -> usize {
        self.off_u + j * self.nx + i
    }

    fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
}

/// Scratch buffers reused across residual evaluations.
#[derive(Debug, Default)]
struct Workspace {
    mu: Vec<f64>,
    rho: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    xflux: Vec<f64>,
    yflux: Vec<f64>,
    sxy: Vec<f64>,
}

/// The coupled simulator.
pub struct PoreScaleSim {
    cfg: PoreScaleConfig,
    nx: usize,
    ny: usize,
    h: f64,
    lay: Layout,
    state: PoreScaleState,
    ws: Workspace,
    warned_cfl: bool,
    /// Largest substep Newton last converged at; starts at cfg.dt.
    dt_hint: f64,
}

impl PoreScaleSim {
    pub fn new(cfg: PoreScaleConfig) -> Result<Self> {
        let nx = cfg.validate()?;
        let ny = cfg.ny;
        let h = cfg.ly / ny as f64;
        let mut u = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let x = (i as f64 + 0.5) * h;
                let y = (j as f64 + 0.5) * h;
                u[j * nx + i] = match cfg.initial {
                    PoreScaleInitial::Uniform { value } => value,
                    PoreScaleInitial::Interface { x0, rising } => {
                        let z = if rising { x - x0 } else { x0 - x };
                        equilibrium_profile_1d(z, cfg.xi)
                    }
                    PoreScaleInitial::Meniscus { x0, rising } => {
                        let c = cfg.theta_eq.cos();
                        if c.abs() < 1e-9 {
                            // Neutral wetting: the static shape is flat.
                            let z = if rising { x - x0 } else { x0 - x };
                            equilibrium_profile_1d(z, cfg.xi)
                        } else {
                            // Static meniscus: circular arc of signed radius
                            // H/(2 cos theta), apex at x0 on the midline,
                            // apex pointing into the wetting phase.
                            let r = cfg.ly / (2.0 * c);
                            let dir = if rising { 1.0 } else { -1.0 };
                            let cx = x0 + dir * r;
                            let d = ((x - cx).powi(2) + (y - 0.5 * cfg.ly).powi(2))
                                .sqrt()
                                - r.abs();
                            equilibrium_profile_1d(-c.signum() * d, cfg.xi)
                        }
                    }
                    PoreScaleInitial::Droplet { cx, cy, radius } => {
                        let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                        equilibrium_profile_1d(radius - d, cfg.xi)
                    }
                };
            }
        }
        // Linear pressure ramp as the initial Newton guess.
        let mut p = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let x = (i as f64 + 0.5) * h;
                p[j * nx + i] = cfg.p_in + (cfg.p_out - cfg.p_in) * x / cfg.lx;
            }
        }
        let state = PoreScaleState {
            t: 0.0,
            vx: vec![0.0; (nx + 1) * ny],
            vy: vec![0.0; nx * (ny + 1)],
            p,
            u,
        };
        Ok(PoreScaleSim {
            dt_hint: cfg.dt,
            cfg,
            nx,
            ny,
            h,
            lay: Layout::new(nx, ny),
            state,
            ws: Workspace::default(),
            warned_cfl: false,
        })
    }

    pub fn state(&self) -> &PoreScaleState {
        &self.state
    }

    pub fn config(&self) -> &PoreScaleConfig {
        &self.cfg
    }

    /// (nx, ny, h) of the staggered grid.
    pub fn grid(&self) -> (usize, usize, f64) {
        (self.nx, self.ny, self.h)
    }

    /// Changes the driving pressures between steps (staged experiments).
    pub fn set_pressures(&mut self, p_in: f64, p_out: f64) {
        self.cfg.p_in = p_in;
        self.cfg.p_out = p_out;
    }

    /// Extends or shortens the run horizon for a follow-up [`Self::run`].
    pub fn set_horizon(&mut self, t_end: f64) {
        self.cfg.t_end = t_end;
    }

    /// Face velocities averaged to cell centers, row-major.
    pub fn velocity_at_cells(&self) -> Vec<[f64; 2]> {
        velocity_at_cells(self.nx, self.ny, &self.state)
    }

    pub fn max_velocity(&self) -> f64 {
        self.state
            .vx
            .iter()
            .chain(&self.state.vy)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Phase integral over the domain.
    pub fn total_u(&self) -> f64 {
        self.state.u.iter().sum::<f64>() * self.h * self.h
    }

    /// x-position of the u = 0.5 level crossing in one cell row.
    pub fn interface_x(&self, row: usize) -> Option<f64> {
        assert!(row < self.ny);
        let u = &self.state.u;
        for i in 0..self.nx - 1 {
            let a = u[self.lay.cell(i, row)] - 0.5;
            let b = u[self.lay.cell(i + 1, row)] - 0.5;
            if a == 0.0 {
                return Some((i as f64 + 0.5) * self.h);
            }
            if a * b < 0.0 {
                let frac = a / (a - b);
                return Some((i as f64 + 0.5 + frac) * self.h);
            }
        }
        None
    }

    /// Contact angles at the bottom and top walls. The interface slope
    /// at the wall is extrapolated from the level-set crossings in the
    /// three wall-adjacent rows (a two-row secant carries an O(h)
    /// curvature bias); the sign of the phase gradient orients the
    /// interface normal.
    pub fn contact_angles(&self) -> Option<(f64, f64)> {
        let sigma = self.crossing_sign(0)?;
        let s_b = self.wall_slope([0, 1, 2])?;
        let s_t = self.wall_slope([self.ny - 1, self.ny - 2, self.ny - 3])?;
        let angle = |s: f64| (-sigma * s / (1.0 + s * s).sqrt()).acos();
        Some((angle(s_b), angle(s_t)))
    }

    /// d(x_interface)/d(distance from wall), rows ordered wall-out.
    fn wall_slope(&self, rows: [usize; 3]) -> Option<f64> {
        let x0 = self.interface_x(rows[0])?;
        let x1 = self.interface_x(rows[1])?;
        let x2 = self.interface_x(rows[2])?;
        let s01 = (x1 - x0) / self.h;
        let s12 = (x2 - x1) / self.h;
        Some(1.5 * s01 - 0.5 * s12)
    }

    /// +1 when u rises through 0.5 with x, -1 when it falls.
    fn crossing_sign(&self, row: usize) -> Option<f64> {
        let u = &self.state.u;
        for i in 0..self.nx - 1 {
            let a = u[self.lay.cell(i, row)] - 0.5;
            let b = u[self.lay.cell(i + 1, row)] - 0.5;
            if a * b < 0.0 || a == 0.0 {
                return Some(if b > a { 1.0 } else { -1.0 });
            }
        }
        None
    }

    fn summary_row(&self) -> SummaryRow {
        let angles = self.contact_angles();
        SummaryRow {
            t: self.state.t,
            max_v: self.max_velocity(),
            angle_bottom: angles.map(|a| a.0),
            angle_top: angles.map(|a| a.1),
            total_u: self.total_u(),
            x_mid: self.interface_x(self.ny / 2),
            x_wall: self.interface_x(0),
        }
    }

    /// Advances the state by one configured time step.
    ///
    /// When the monolithic Newton solve stalls (the interface crossing a
    /// sizable fraction of a cell in one step makes the surface-tension
    /// term strongly nonlinear), the interval is bisected and retried;
    /// backward Euler converges for small enough substeps. The reported
    /// residual history is that of the last substep.
    pub fn step(&mut self) -> Result<StepReport> {
        let target = self.state.t + self.cfg.dt;
        let mut dt = self.dt_hint.min(self.cfg.dt);
        let mut residuals = Vec::new();
        let mut halvings = 0;
        while self.state.t < target - 1e-12 {
            let d = dt.min(target - self.state.t);
            match self.try_step(d) {
                Ok(rs) => residuals = rs,
                Err(Error::NewtonDiverged(msg)) => {
                    halvings += 1;
                    if halvings > MAX_BISECT {
                        return Err(Error::NewtonDiverged(format!(
                            "pore-scale step near t = {:.6} failed after {MAX_BISECT} \
                             bisections: {msg}",
                            self.state.t
                        )));
                    }
                    dt *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        // Recover toward the configured step gradually across steps; a
        // transient that forced bisection usually spans several steps.
        self.dt_hint = (dt * 2.0).min(self.cfg.dt);
        self.finish_step(residuals)
    }

    /// One backward-Euler solve over [t, t + dt] with damped Newton.
    /// The state is only mutated on convergence.
    fn try_step(&mut self, dt: f64) -> Result<Vec<f64>> {
        let old = self.state.clone();
        let mut x = self.pack();
        let mut f = vec![0.0; self.lay.n];
        let mut trial = vec![0.0; self.lay.n];
        let mut ft = vec![0.0; self.lay.n];
        let trace = std::env::var_os("POREHOM_NEWTON_TRACE").is_some();

        let mut mean_dp = self.mean_dp(&x);
        self.residual_dt(&x, &old, mean_dp, dt, &mut f);
        let mut rn = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !rn.is_finite() {
            return Err(Error::NonFinite("pore-scale Newton residual".into()));
        }
        let mut residuals = vec![rn];
        let mut slow = 0;

        for _ in 0..self.cfg.newton_max_iter {
            if rn <= self.cfg.newton_tol {
                self.unpack(&x);
                self.state.t = old.t + dt;
                return Ok(residuals);
            }
            let jac = self.fd_jacobian(&x, &old, mean_dp, dt, &f)?;
            let dx = jac.solve()?;
            // A full step can badly overshoot the quartic phase term, so
            // backtrack on the residual max-norm until it decreases.
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..MAX_BACKTRACK {
                for (tk, (xk, dk)) in trial.iter_mut().zip(x.iter().zip(&dx)) {
                    *tk = xk - alpha * dk;
                }
                let mdp = self.mean_dp(&trial);
                self.residual_dt(&trial, &old, mdp, dt, &mut ft);
                let rt = ft.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if rt.is_finite() && rt < rn {
                    x.copy_from_slice(&trial);
                    std::mem::swap(&mut f, &mut ft);
                    mean_dp = mdp;
                    slow = if rt > 0.97 * rn { slow + 1 } else { 0 };
                    rn = rt;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            residuals.push(rn);
            if trace {
                eprintln!(
                    "  newton t={:.4} dt={dt:.2e}: rn {rn:.6e} alpha {alpha:.2e}",
                    old.t
                );
            }
            // Four consecutive sub-3% reductions mean the step is too
            // large for the linearization; fail fast so it gets bisected.
            if !improved || slow >= 4 {
                break;
            }
        }
        if rn <= self.cfg.newton_tol {
            self.unpack(&x);
            self.state.t = old.t + dt;
            return Ok(residuals);
        }
        Err(Error::NewtonDiverged(format!(
            "dt = {dt:.3e} stalled, residual history {residuals:?}"
        )))
    }

    fn finish_step(&mut self, residuals: Vec<f64>) -> Result<StepReport> {
        let (lo, hi) = self
            .state
            .u
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo < -OVERSHOOT_BOUND || hi > 1.0 + OVERSHOOT_BOUND {
            return Err(Error::NewtonDiverged(format!(
                "phase field left physical bounds after a converged step: [{lo:.3}, {hi:.3}]"
            )));
        }
        let cfl = self.max_velocity() * self.cfg.dt / self.h;
        if cfl > CFL_WARN && !self.warned_cfl {
            self.warned_cfl = true;
            eprintln!(
                "advisory: advective CFL ~ {cfl:.1}; implicit stepping stays stable but \
                 interface transport accuracy degrades"
            );
        }
        Ok(StepReport { t: self.state.t, cfl, newton_residuals: residuals })
    }

    /// Steps until t_end, reporting one summary row per step (plus the
    /// initial state). The observer sees every accepted state.
    pub fn run(&mut self, mut observer: impl FnMut(usize, &PoreScaleState)) -> Result<RunSummary> {
        let mut rows = vec![self.summary_row()];
        let mut k = 0;
        while self.state.t < self.cfg.t_end - 1e-12 {
            self.step()?;
            k += 1;
            rows.push(self.summary_row());
            observer(k, &self.state);
        }
        Ok(RunSummary { rows })
    }

    /// Human-readable equation label for a packed dof index.
    #[cfg(test)]
    fn describe_dof(&self, k: usize) -> String {
        let lay = self.lay;
        let nx = self.nx;
        if k < lay.off_vy {
            format!("vx({},{})", k % (nx + 1), k / (nx + 1))
        } else if k < lay.off_p {
            let q = k - lay.off_vy;
            format!("vy({},{})", q % nx, 1 + q / nx)
        } else if k < lay.off_u {
            let q = k - lay.off_p;
            format!("p({},{})", q % nx, q / nx)
        } else {
            let q = k - lay.off_u;
            format!("u({},{})", q % nx, q / nx)
        }
    }

    fn pack(&self) -> Vec<f64> {
        let lay = self.lay;
        let mut x = vec![0.0; lay.n];
        x[..lay.off_vy].copy_from_slice(&self.state.vx);
        for j in 1..self.ny {
            for i in 0..self.nx {
                x[lay.vy(i, j)] = self.state.vy[j * self.nx + i];
            }
        }
        x[lay.off_p..lay.off_u].copy_from_slice(&self.state.p);
        x[lay.off_u..].copy_from_slice(&self.state.u);
        x
    }

    fn unpack(&mut self, x: &[f64]) {
        let lay = self.lay;
        self.state.vx.copy_from_slice(&x[..lay.off_vy]);
        for j in 1..self.ny {
            for i in 0..self.nx {
                self.state.vy[j * self.nx + i] = x[lay.vy(i, j)];
            }
        }
        self.state.p.copy_from_slice(&x[lay.off_p..lay.off_u]);
        self.state.u.copy_from_slice(&x[lay.off_u..]);
    }

    /// Mean double-well slope of the iterate, frozen per Newton
    /// iteration so the residual stays stencil-local (the outer loop
    /// refreshes it, so the converged residual is exact).
    fn mean_dp(&self, x: &[f64]) -> f64 {
        if !self.cfg.conservative {
            return 0.0;
        }
        let u = &x[self.lay.off_u..];
        u.iter().map(|&v| double_well(v).1).sum::<f64>() / u.len() as f64
    }

    /// Phase value with inlet Dirichlet ghost and outlet copy ghost.
    fn uval(&self, x: &[f64], i: isize, j: usize) -> f64 {
        if i < 0 {
            2.0 * self.cfg.u_in - x[self.lay.u(0, j)]
        } else if i >= self.nx as isize {
            x[self.lay.u(self.nx - 1, j)]
        } else {
            x[self.lay.u(i as usize, j)]
        }
    }

    fn vy_at(&self, x: &[f64], i: usize, j: usize) -> f64 {
        if j == 0 || j == self.ny {
            0.0
        } else {
            x[self.lay.vy(i, j)]
        }
    }

    /// Evaluates the full coupled residual at iterate `x` for step size `dt`.
    fn residual_dt(
        &mut self,
        x: &[f64],
        old: &PoreScaleState,
        mean_dp: f64,
        dt: f64,
        out: &mut [f64],
    ) {
        let lay = self.lay;
        let (nx, ny, h) = (self.nx, self.ny, self.h);
        let fl = self.cfg.fluid.clone();
        let (u_in, p_in, p_out) = (self.cfg.u_in, self.cfg.p_in, self.cfg.p_out);
        let (s, xi, theta) = (self.cfg.s, self.cfg.xi, self.cfg.theta_eq);
        let gravity = if self.cfg.gravity { 1.0 / (self.cfg.fr * self.cfg.fr) } else { 0.0 };
        let inv_re = 1.0 / fl.re;
        let eu = fl.eu_bar;
        let stc = 1.5 * xi / fl.ca;
        let slip_denom = fl.slip + 0.5 * h;
        let qwall = |u: f64| contact_flux(u, theta, xi);

        let mut ws = std::mem::take(&mut self.ws);
        ws.mu.resize(nx * ny, 0.0);
        ws.rho.resize(nx * ny, 0.0);
        ws.gx.resize(nx * ny, 0.0);
        ws.gy.resize(nx * ny, 0.0);
        ws.xflux.resize(nx * ny, 0.0);
        ws.yflux.resize(nx * ny, 0.0);
        ws.sxy.resize((nx + 1) * (ny + 1), 0.0);

        // Cell fields: viscosity, density, phase gradients (one-sided
        // at walls via the contact flux, ghosts at the open ends).
        for j in 0..ny {
            for i in 0..nx {
                let c = lay.cell(i, j);
                let uc = x[lay.u(i, j)];
                ws.mu[c] = fl.viscosity(uc);
                ws.rho[c] = fl.density(uc);
                let dw = (uc - self.uval(x, i as isize - 1, j)) / h;
                let de = (self.uval(x, i as isize + 1, j) - uc) / h;
                ws.gx[c] = 0.5 * (dw + de);
                let ds = if j > 0 { (uc - x[lay.u(i, j - 1)]) / h } else { -qwall(uc) };
                let dn = if j < ny - 1 { (x[lay.u(i, j + 1)] - uc) / h } else { qwall(uc) };
                ws.gy[c] = 0.5 * (ds + dn);
            }
        }
        // Combined normal momentum fluxes per cell:
        //   xflux = Eu p - (1/Re) τ_xx + stc T_xx,
        //   yflux = Eu p - (1/Re) τ_yy + stc T_yy.
        for j in 0..ny {
            for i in 0..nx {
                let c = lay.cell(i, j);
                let dxvx = (x[lay.vx(i + 1, j)] - x[lay.vx(i, j)]) / h;
                let dyvy = (self.vy_at(x, i, j + 1) - self.vy_at(x, i, j)) / h;
                let txx = ws.mu[c] * (4.0 / 3.0 * dxvx - 2.0 / 3.0 * dyvy);
                let tyy = ws.mu[c] * (4.0 / 3.0 * dyvy - 2.0 / 3.0 * dxvx);
                ws.xflux[c] = eu * x[lay.p(i, j)] - inv_re * txx + stc * ws.gx[c] * ws.gx[c];
                ws.yflux[c] = eu * x[lay.p(i, j)] - inv_re * tyy + stc * ws.gy[c] * ws.gy[c];
            }
        }

        // Node shear fluxes sxy = -(1/Re) τ_xy + stc T_xy with the
        // Navier-slip wall derivative and fully developed open sides.
        for j in 0..=ny {
            for i in 0..=nx {
                let dyvx = if j == 0 {
                    x[lay.vx(i, 0)] / slip_denom
                } else if j == ny {
                    -x[lay.vx(i, ny - 1)] / slip_denom
                } else {
                    (x[lay.vx(i, j)] - x[lay.vx(i, j - 1)]) / h
                };
                let dxvy = if i == 0 || i == nx || j == 0 || j == ny {
                    0.0
                } else {
                    (self.vy_at(x, i, j) - self.vy_at(x, i - 1, j)) / h
                };
                let mut mu_sum = 0.0;
                let mut txy_sum = 0.0;
                let mut count = 0.0;
                for cj in j.saturating_sub(1)..=j.min(ny - 1) {
                    for ci in i.saturating_sub(1)..=i.min(nx - 1) {
                        let c = lay.cell(ci, cj);
                        mu_sum += ws.mu[c];
                        txy_sum += ws.gx[c] * ws.gy[c];
                        count += 1.0;
                    }
                }
                ws.sxy[lay.node(i, j)] =
                    -inv_re * (mu_sum / count) * (dyvx + dxvy) + stc * txy_sum / count;
            }
        }

        // x-momentum rows, one per vx face. Boundary faces balance a
        // half control volume against the prescribed normal momentum
        // flux Eu p_in / Eu p_out.
        for j in 0..ny {
            for i in 0..=nx {
                let vxc = x[lay.vx(i, j)];
                let wx = if i == 0 || i == nx { 0.5 * h } else { h };
                let east = if i < nx { ws.xflux[lay.cell(i, j)] } else { eu * p_out };
                let west = if i > 0 { ws.xflux[lay.cell(i - 1, j)] } else { eu * p_in };

                let mut rho_sum = 0.0;
                let mut vy_sum = 0.0;
                let mut count = 0.0;
                for ci in i.saturating_sub(1)..=i.min(nx - 1) {
                    rho_sum += ws.rho[lay.cell(ci, j)];
                    vy_sum += self.vy_at(x, ci, j) + self.vy_at(x, ci, j + 1);
                    count += 1.0;
                }
                let rho_f = rho_sum / count;
                let vy_avg = vy_sum / (2.0 * count);

                let dxvx = if vxc >= 0.0 {
                    if i > 0 { (vxc - x[lay.vx(i - 1, j)]) / h } else { 0.0 }
                } else if i < nx {
                    (x[lay.vx(i + 1, j)] - vxc) / h
                } else {
                    0.0
                };
                let dyvx = if vy_avg >= 0.0 {
                    if j > 0 { (vxc - x[lay.vx(i, j - 1)]) / h } else { vxc / slip_denom }
                } else if j < ny - 1 {
                    (x[lay.vx(i, j + 1)] - vxc) / h
                } else {
                    -vxc / slip_denom
                };

                let vx_old = old.vx[j * (nx + 1) + i];
                out[lay.vx(i, j)] = rho_f * (vxc - vx_old) / dt
                    + rho_f * (vxc * dxvx + vy_avg * dyvx)
                    + (east - west) / wx
                    + (ws.sxy[lay.node(i, j + 1)] - ws.sxy[lay.node(i, j)]) / h;
            }
        }

        // y-momentum rows, one per interior vy face.
        for j in 1..ny {
            for i in 0..nx {
                let vyc = x[lay.vy(i, j)];
                let north = ws.yflux[lay.cell(i, j)];
                let south = ws.yflux[lay.cell(i, j - 1)];
                let rho_f = 0.5 * (ws.rho[lay.cell(i, j - 1)] + ws.rho[lay.cell(i, j)]);
                let vx_avg = 0.25
                    * (x[lay.vx(i, j - 1)]
                        + x[lay.vx(i + 1, j - 1)]
                        + x[lay.vx(i, j)]
                        + x[lay.vx(i + 1, j)]);
                let dyvy = if vyc >= 0.0 {
                    (vyc - self.vy_at(x, i, j - 1)) / h
                } else {
                    (self.vy_at(x, i, j + 1) - vyc) / h
                };
                let dxvy = if vx_avg >= 0.0 {
                    if i > 0 { (vyc - x[lay.vy(i - 1, j)]) / h } else { 0.0 }
                } else if i < nx - 1 {
                    (x[lay.vy(i + 1, j)] - vyc) / h
                } else {
                    0.0
                };

                let vy_old = old.vy[j * nx + i];
                out[lay.vy(i, j)] = rho_f * (vyc - vy_old) / dt
                    + rho_f * (vx_avg * dxvy + vyc * dyvy)
                    + (north - south) / h
                    + (ws.sxy[lay.node(i + 1, j)] - ws.sxy[lay.node(i, j)]) / h
                    + rho_f * gravity;
            }
        }

        // Mass rows: quasi-compressible continuity with arithmetic
        // face densities; the inlet face density uses the Dirichlet
        // ghost, the outlet copies the interior.
        for j in 0..ny {
            for i in 0..nx {
                let rho_face_x = |ii: isize| -> f64 {
                    let a = fl.density(self.uval(x, ii - 1, j));
                    let b = fl.density(self.uval(x, ii, j));
                    0.5 * (a + b)
                };
                let fx_e = rho_face_x(i as isize + 1) * x[lay.vx(i + 1, j)];
                let fx_w = rho_face_x(i as isize) * x[lay.vx(i, j)];
                let fy_n = if j < ny - 1 {
                    0.5 * (ws.rho[lay.cell(i, j)] + ws.rho[lay.cell(i, j + 1)])
                        * self.vy_at(x, i, j + 1)
                } else {
                    0.0
                };
                let fy_s = if j > 0 {
                    0.5 * (ws.rho[lay.cell(i, j - 1)] + ws.rho[lay.cell(i, j)])
                        * self.vy_at(x, i, j)
                } else {
                    0.0
                };
                let rho_old = fl.density(old.u[j * nx + i]);
                out[lay.p(i, j)] = (ws.rho[lay.cell(i, j)] - rho_old) / dt
                    + (fx_e - fx_w + fy_n - fy_s) / h;
            }
        }

        // Phase rows: advective Allen-Cahn with upwind fluxes,
        // Dirichlet inlet, free outflow, contact-angle wall fluxes.
        for j in 0..ny {
            for i in 0..nx {
                let uc = x[lay.u(i, j)];

                let flux_x = |ii: usize| -> f64 {
                    let v = x[lay.vx(ii, j)];
                    let up = if v >= 0.0 {
                        if ii > 0 { x[lay.u(ii - 1, j)] } else { u_in }
                    } else if ii < nx {
                        x[lay.u(ii, j)]
                    } else {
                        x[lay.u(nx - 1, j)]
                    };
                    v * up
                };
                let flux_y = |jj: usize| -> f64 {
                    let v = self.vy_at(x, i, jj);
                    if v == 0.0 {
                        return 0.0;
                    }
                    let up = if v >= 0.0 { x[lay.u(i, jj - 1)] } else { x[lay.u(i, jj)] };
                    v * up
                };
                let div_adv = (flux_x(i + 1) - flux_x(i) + flux_y(j + 1) - flux_y(j)) / h;

                let de = if i < nx - 1 { (x[lay.u(i + 1, j)] - uc) / h } else { 0.0 };
                let dw = if i > 0 {
                    (uc - x[lay.u(i - 1, j)]) / h
                } else {
                    2.0 * (uc - u_in) / h
                };
                let dn = if j < ny - 1 { (x[lay.u(i, j + 1)] - uc) / h } else { qwall(uc) };
                let ds = if j > 0 { (uc - x[lay.u(i, j - 1)]) / h } else { -qwall(uc) };

                let u_old = old.u[j * nx + i];
                out[lay.u(i, j)] = (uc - u_old) / dt + div_adv
                    - s * xi * (de - dw + dn - ds) / h
                    + s / xi * (double_well(uc).1 - mean_dp);
            }
        }

        self.ws = ws;
    }

    /// Finite-difference Jacobian with period-5 coloring per unknown
    /// class. Stencil reach is at most 2 cells, so columns 5 apart
    /// never share a residual row. The base residual doubles as the
    /// Newton right-hand side.
    fn fd_jacobian(
        &mut self,
        x: &[f64],
        old: &PoreScaleState,
        mean_dp: f64,
        dt: f64,
        f_base: &[f64],
    ) -> Result<LinearSystem> {
        let lay = self.lay;
        let (nx, ny) = (self.nx, self.ny);
        let mut sys = LinearSystem::new(lay.n);
        for (r, &v) in f_base.iter().enumerate() {
            sys.add_rhs(r, v);
        }
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; lay.n];
        let mut cols: Vec<(usize, f64)> = Vec::new();
        let mut rows: Vec<usize> = Vec::new();

        for class in 0..4 {
            for a in 0..5 {
                for b in 0..5 {
                    cols.clear();
                    match class {
                        0 => {
                            for j in (b..ny).step_by(5) {
                                for i in (a..=nx).step_by(5) {
                                    cols.push((lay.vx(i, j), 0.0));
                                }
                            }
                        }
                        1 => {
                            for j in (1 + b..ny).step_by(5) {
                                for i in (a..nx).step_by(5) {
                                    cols.push((lay.vy(i, j), 0.0));
                                }
                            }
                        }
                        2 => {
                            for j in (b..ny).step_by(5) {
                                for i in (a..nx).step_by(5) {
                                    cols.push((lay.p(i, j), 0.0));
                                }
                            }
                        }
                        _ => {
                            for j in (b..ny).step_by(5) {
                                for i in (a..nx).step_by(5) {
                                    cols.push((lay.u(i, j), 0.0));
                                }
                            }
                        }
                    }
                    if cols.is_empty() {
                        continue;
                    }
                    for ce in cols.iter_mut() {
                        let e = f64::EPSILON.sqrt() * (1.0 + x[ce.0].abs());
                        ce.1 = e;
                        xp[ce.0] = x[ce.0] + e;
                    }
                    self.residual_dt(&xp, old, mean_dp, dt, &mut fp);
                    for &(c, e) in &cols {
                        xp[c] = x[c];
                        self.affected_rows(c, &mut rows);
                        for &r in &rows {
                            let d = (fp[r] - f_base[r]) / e;
                            if d != 0.0 {
                                sys.add(r, c, d);
                            }
                        }
                    }
                }
            }
        }
        Ok(sys)
    }

    /// Residual rows that can depend on one unknown column.
    fn affected_rows(&self, col: usize, rows: &mut Vec<usize>) {
        let lay = self.lay;
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        rows.clear();
        let push_vx = |rows: &mut Vec<usize>, i0: isize, i1: isize, j0: isize, j1: isize| {
            for j in j0.max(0)..=j1.min(ny - 1) {
                for i in i0.max(0)..=i1.min(nx) {
                    rows.push(lay.vx(i as usize, j as usize));
                }
            }
        };
        let push_vy = |rows: &mut Vec<usize>, i0: isize, i1: isize, j0: isize, j1: isize| {
            for j in j0.max(1)..=j1.min(ny - 1) {
                for i in i0.max(0)..=i1.min(nx - 1) {
                    rows.push(lay.vy(i as usize, j as usize));
                }
            }
        };
        let push_cells =
            |rows: &mut Vec<usize>, base: usize, i0: isize, i1: isize, j0: isize, j1: isize| {
                for j in j0.max(0)..=j1.min(ny - 1) {
                    for i in i0.max(0)..=i1.min(nx - 1) {
                        rows.push(base + (j as usize) * lay.nx + i as usize);
                    }
                }
            };

        if col < lay.off_vy {
            let fi = (col % (lay.nx + 1)) as isize;
            let j = (col / (lay.nx + 1)) as isize;
            push_vx(rows, fi - 1, fi + 1, j - 1, j + 1);
            push_vy(rows, fi - 1, fi, j, j + 1);
            push_cells(rows, lay.off_p, fi - 1, fi, j, j);
            push_cells(rows, lay.off_u, fi - 1, fi, j, j);
        } else if col < lay.off_p {
            let k = col - lay.off_vy;
            let ci = (k % lay.nx) as isize;
            let fj = (k / lay.nx + 1) as isize;
            push_vy(rows, ci - 1, ci + 1, fj - 1, fj + 1);
            push_vx(rows, ci, ci + 1, fj - 1, fj);
            push_cells(rows, lay.off_p, ci, ci, fj - 1, fj);
            push_cells(rows, lay.off_u, ci, ci, fj - 1, fj);
        } else if col < lay.off_u {
            let k = col - lay.off_p;
            let ci = (k % lay.nx) as isize;
            let cj = (k / lay.nx) as isize;
            push_vx(rows, ci, ci + 1, cj, cj);
            push_vy(rows, ci, ci, cj, cj + 1);
        } else {
            let k = col - lay.off_u;
            let ci = (k % lay.nx) as isize;
            let cj = (k / lay.nx) as isize;
            push_cells(rows, lay.off_u, ci - 1, ci + 1, cj - 1, cj + 1);
            push_cells(rows, lay.off_p, ci - 1, ci + 1, cj - 1, cj + 1);
            push_vx(rows, ci - 1, ci + 2, cj - 2, cj + 2);
            push_vy(rows, ci - 2, ci + 2, cj - 1, cj + 2);
        }
    }
}
