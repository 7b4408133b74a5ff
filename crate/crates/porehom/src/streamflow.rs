//! Streamline tracing on staggered velocity fields and the
//! net-through-flow mask that excludes recirculation zones from
//! mobility integrals.

use crate::error::{Error, Result};
use crate::geometry::UnitCellGrid;
use crate::stokescell::CellVelocity;

/// Interpolated speeds below this count as stagnation.
pub const STAGNATION_SPEED: f64 = 1e-12;
/// Default streamline step as a fraction of the cell width.
pub const STEP_FACTOR: f64 = 0.5;
/// Trace budget in periodic domain lengths.
pub const MAX_DOMAIN_LENGTHS: f64 = 50.0;

/// Why a streamline trace stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Net displacement along the queried axis reached one full period.
    Wrapped,
    /// Interpolated speed fell below [`STAGNATION_SPEED`].
    Stagnation,
    /// Arc-length budget exhausted without wrapping.
    MaxLength,
    /// The trajectory stepped into a solid cell (staircase corners).
    EnteredSolid,
}

/// A traced streamline: sample points wrapped into the unit cell plus
/// the net unwrapped displacement accumulated since the seed.
#[derive(Debug, Clone)]
pub struct Streamline {
    pub points: Vec<[f64; 2]>,
    pub termination: Termination,
    pub displacement: [f64; 2],
}

impl Streamline {
    /// Signed number of completed periodic traversals along an axis.
    pub fn wraps(&self, axis: usize) -> isize {
        self.displacement[axis].trunc() as isize
    }
}

/// Bilinear interpolation of the staggered field at an arbitrary point,
/// periodic in both axes. Inactive faces hold zeros, which keeps the
/// wall-normal component zero on solid boundaries.
pub fn interpolate(v: &CellVelocity, p: [f64; 2]) -> [f64; 2] {
    let h = v.h();
    // x-component samples live at (i·h, (j+1/2)·h).
    let (i0, fx) = split(p[0] / h);
    let (j0, fy) = split(p[1] / h - 0.5);
    let ux = (1.0 - fx) * (1.0 - fy) * v.face_x(i0, j0)
        + fx * (1.0 - fy) * v.face_x(i0 + 1, j0)
        + (1.0 - fx) * fy * v.face_x(i0, j0 + 1)
        + fx * fy * v.face_x(i0 + 1, j0 + 1);
    // y-component samples live at ((i+1/2)·h, j·h).
    let (a0, gx) = split(p[0] / h - 0.5);
    let (b0, gy) = split(p[1] / h);
    let uy = (1.0 - gx) * (1.0 - gy) * v.face_y(a0, b0)
        + gx * (1.0 - gy) * v.face_y(a0 + 1, b0)
        + (1.0 - gx) * gy * v.face_y(a0, b0 + 1)
        + gx * gy * v.face_y(a0 + 1, b0 + 1);
    [ux, uy]
}

fn split(s: f64) -> (isize, f64) {
    let f = s.floor();
    (f as isize, s - f)
}

fn wrap_point(p: [f64; 2]) -> [f64; 2] {
    [p[0].rem_euclid(1.0), p[1].rem_euclid(1.0)]
}

fn containing_cell(grid: &UnitCellGrid, p: [f64; 2]) -> (isize, isize) {
    let n = grid.n() as f64;
    (
        (p[0].rem_euclid(1.0) * n).floor() as isize,
        (p[1].rem_euclid(1.0) * n).floor() as isize,
    )
}

/// Traces one streamline with arc-length-normalized RK2 (midpoint)
/// steps of size `step`, up to `max_len` of arc. The trace stops when
/// the net displacement along `axis` reaches one period (a full
/// traversal), on stagnation, on entering solid, or when the budget
/// runs out.
pub fn trace_streamline(
    grid: &UnitCellGrid,
    v: &CellVelocity,
    seed: [f64; 2],
    axis: usize,
    step: f64,
    max_len: f64,
) -> Result<Streamline> {
    assert!(axis < 2, "axis must be 0 (x) or 1 (y)");
    assert!(step > 0.0 && step < 1.0 && max_len > 0.0);
    let (si, sj) = containing_cell(grid, seed);
    if grid.is_solid(si, sj) {
        return Err(Error::Config(format!(
            "streamline seed ({:.6}, {:.6}) lies in a solid cell",
            seed[0], seed[1]
        )));
    }

    let mut p = wrap_point(seed);
    let mut disp = [0.0_f64; 2];
    let mut points = vec![p];
    let finish = |points: Vec<[f64; 2]>, termination, disp: [f64; 2]| Streamline {
        points,
        termination,
        displacement: disp,
    };

    let budget = (max_len / step).ceil() as usize;
    for _ in 0..budget {
        let v1 = interpolate(v, p);
        let s1 = v1[0].hypot(v1[1]);
        if !s1.is_finite() {
            return Err(Error::NonFinite("streamline velocity".into()));
        }
        if s1 < STAGNATION_SPEED {
            return Ok(finish(points, Termination::Stagnation, disp));
        }
        let mid = [
            p[0] + 0.5 * step * v1[0] / s1,
            p[1] + 0.5 * step * v1[1] / s1,
        ];
        let v2 = interpolate(v, mid);
        let s2 = v2[0].hypot(v2[1]);
        if !s2.is_finite() {
            return Err(Error::NonFinite("streamline velocity".into()));
        }
        if s2 < STAGNATION_SPEED {
            return Ok(finish(points, Termination::Stagnation, disp));
        }
        let raw = [p[0] + step * v2[0] / s2, p[1] + step * v2[1] / s2];
        disp[0] += raw[0] - p[0];
        disp[1] += raw[1] - p[1];
        p = wrap_point(raw);
        let (ci, cj) = containing_cell(grid, p);
        if grid.is_solid(ci, cj) {
            return Ok(finish(points, Termination::EnteredSolid, disp));
        }
        points.push(p);
        if disp[axis].abs() >= 1.0 {
            return Ok(finish(points, Termination::Wrapped, disp));
        }
    }
    Ok(finish(points, Termination::MaxLength, disp))
}

/// Cells carrying net through-flow for one driver axis.
///
/// A cell is marked when some streamline seeded on the inlet boundary
/// (traced both downstream and upstream) completes a full periodic
/// traversal along the axis and passes through the cell. Only fluid
/// cells are ever marked.
#[derive(Debug, Clone)]
pub struct NetFlowMask {
    axis: usize,
    n: usize,
    marked: Vec<bool>,
}

impl NetFlowMask {
    /// Driver axis the mask was built for.
    pub fn axis(&self) -> usize {
        self.axis
    }

    /// Row-major n×n cell flags; solid cells are always false.
    pub fn marked(&self) -> &[bool] {
        &self.marked
    }

    /// Periodic lookup of one cell flag.
    pub fn is_marked(&self, i: isize, j: isize) -> bool {
        let n = self.n as isize;
        let ii = i.rem_euclid(n) as usize;
        let jj = j.rem_euclid(n) as usize;
        self.marked[jj * self.n + ii]
    }

    /// Number of marked cells.
    pub fn count(&self) -> usize {
        self.marked.iter().filter(|&&m| m).count()
    }
}

/// Builds the net-through-flow mask with the default step (h/2) and
/// arc budget (50 domain lengths).
pub fn net_flow_mask(grid: &UnitCellGrid, v: &CellVelocity, axis: usize) -> Result<NetFlowMask> {
    net_flow_mask_with_step(grid, v, axis, STEP_FACTOR * grid.h())
}

/// Mask construction with an explicit streamline step, for step
/// sensitivity studies.
pub fn net_flow_mask_with_step(
    grid: &UnitCellGrid,
    v: &CellVelocity,
    axis: usize,
    step: f64,
) -> Result<NetFlowMask> {
    assert!(axis < 2, "axis must be 0 (x) or 1 (y)");
    let n = grid.n();
    let h = grid.h();

    // Upstream coverage: the same seeds traced on the reversed field.
    let mut reversed = CellVelocity::zeros(grid);
    for (a, b) in reversed.ux.iter_mut().zip(&v.ux) {
        *a = -b;
    }
    for (a, b) in reversed.uy.iter_mut().zip(&v.uy) {
        *a = -b;
    }

    let mut marked = vec![false; n * n];
    for k in 0..n as isize {
        let seed = if axis == 0 {
            if !grid.x_face_active(0, k) {
                continue;
            }
            [0.0, (k as f64 + 0.5) * h]
        } else {
            if !grid.y_face_active(k, 0) {
                continue;
            }
            [(k as f64 + 0.5) * h, 0.0]
        };
        for field in [v, &reversed] {
            let line = trace_streamline(grid, field, seed, axis, step, MAX_DOMAIN_LENGTHS)?;
            if line.termination == Termination::Wrapped {
                for q in &line.points {
                    let (ci, cj) = containing_cell(grid, *q);
                    marked[grid.cell(ci, cj)] = true;
                }
            }
        }
    }
    Ok(NetFlowMask { axis, n, marked })
}
