//! Periodic unit-cell geometries on a regular grid.
//!
//! The unit cell Y = [0,1]² is divided into n×n square cells of spacing
//! h = 1/n. Each cell is either pore space (fluid) or solid matrix. All
//! boundaries of Y are periodic; the internal fluid/solid interface Γ is
//! the set of faces separating a fluid cell from a solid cell.
//!
//! Built-in geometries snap their defining lengths to the nearest grid
//! face so that cell counts, and hence porosities, are exact at
//! compatible resolutions: `Obstacle { side: 0.45 }` has porosity
//! exactly 0.7975 whenever 0.45·n is an even integer, and
//! `Cross { width: 0.3 }` has porosity exactly 0.51 whenever 0.3·n is an
//! even integer.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Built-in unit-cell geometries plus mask-file input.
///
/// Lengths are fractions of the cell edge, so they must lie in (0,1).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryKind {
    /// Square solid obstacle of the given side length, centered in the cell.
    Obstacle { side: f64 },
    /// Two perpendicular fluid channels of the given width crossing at the
    /// cell center; the four corner blocks are solid.
    Cross { width: f64 },
    /// Horizontal fluid channel of the given height, centered in the cell;
    /// the rows above and below are solid walls.
    Channel { height: f64 },
    /// No solid at all.
    Empty,
    /// Solid mask read from a plain-text file (see [`read_mask`]).
    MaskFile { path: PathBuf },
}

impl GeometryKind {
    /// Porosity of the continuous (un-snapped) geometry, if defined in
    /// closed form. Mask files have no analytic value.
    pub fn analytic_porosity(&self) -> Option<f64> {
        match self {
            GeometryKind::Obstacle { side } => Some(1.0 - side * side),
            GeometryKind::Cross { width } => Some(2.0 * width - width * width),
            GeometryKind::Channel { height } => Some(*height),
            GeometryKind::Empty => Some(1.0),
            GeometryKind::MaskFile { .. } => None,
        }
    }

    /// Short name used in output records.
    pub fn name(&self) -> &'static str {
        match self {
            GeometryKind::Obstacle { .. } => "obstacle",
            GeometryKind::Cross { .. } => "cross",
            GeometryKind::Channel { .. } => "channel",
            GeometryKind::Empty => "empty",
            GeometryKind::MaskFile { .. } => "mask",
        }
    }
}

impl std::fmt::Display for GeometryKind {
    /// Identifier with the shape parameter, e.g. `obstacle(0.45)`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeometryKind::Obstacle { side } => write!(f, "obstacle({side})"),
            GeometryKind::Cross { width } => write!(f, "cross({width})"),
            GeometryKind::Channel { height } => write!(f, "channel({height})"),
            GeometryKind::Empty => write!(f, "empty"),
            GeometryKind::MaskFile { path } => write!(f, "mask({})", path.display()),
        }
    }
}

/// Discretized periodic unit cell.
///
/// Cells are indexed by `(i, j)` with `i` along x and `j` along y, both
/// in `0..n`, stored row-major in `solid` as `j*n + i`. The cell center
/// of `(i, j)` is `((i+1/2)h, (j+1/2)h)`.
#[derive(Debug, Clone)]
pub struct UnitCellGrid {
    n: usize,
    h: f64,
    solid: Vec<bool>,
    n_fluid: usize,
}

/// Builds the discretized unit cell for a geometry at resolution n ≥ 8.
///
/// Geometry lengths are snapped to whole cell counts with the same parity
/// as n so the shape stays exactly centered; when the nearest count has
/// the wrong parity, the neighbor with the smaller porosity error is
/// taken, so the snapped length differs from the requested one by less
/// than 2h (at most h/2 at parity-compatible resolutions). Fails on
/// invalid parameters, resolutions too coarse to resolve the shape,
/// unreadable or malformed mask files, and masks with isolated fluid
/// cells.
pub fn build_unit_cell(kind: &GeometryKind, n: usize) -> Result<UnitCellGrid> {
    if n < 8 {
        return Err(Error::Geometry(format!("resolution n = {n} is below the minimum of 8")));
    }
    let solid = match kind {
        GeometryKind::Obstacle { side } => {
            let span = snap_span(*side, n, |w| 1.0 - w * w, "obstacle side")?;
            let lo = (n - span) / 2;
            let hi = lo + span;
            build_mask(n, |i, j| (lo..hi).contains(&i) && (lo..hi).contains(&j))
        }
        GeometryKind::Cross { width } => {
            let span = snap_span(*width, n, |w| 2.0 * w - w * w, "cross width")?;
            let lo = (n - span) / 2;
            let hi = lo + span;
            if n - span < 2 {
                return Err(Error::Geometry(format!(
                    "cross width {width} leaves no solid at n = {n}"
                )));
            }
            build_mask(n, |i, j| !(lo..hi).contains(&i) && !(lo..hi).contains(&j))
        }
        GeometryKind::Channel { height } => {
            let span = snap_span(*height, n, |w| w, "channel height")?;
            let lo = (n - span) / 2;
            let hi = lo + span;
            if n - span < 1 {
                return Err(Error::Geometry(format!(
                    "channel height {height} leaves no walls at n = {n}"
                )));
            }
            build_mask(n, |_, j| !(lo..hi).contains(&j))
        }
        GeometryKind::Empty => vec![false; n * n],
        GeometryKind::MaskFile { path } => {
            let (nx, ny, mask) = read_mask(path)?;
            if nx != n || ny != n {
                return Err(Error::MaskFile {
                    path: path.clone(),
                    reason: format!("dimensions {nx}x{ny} do not match requested n = {n}"),
                });
            }
            mask
        }
    };
    let grid = UnitCellGrid::from_mask(n, solid)?;
    if grid.n_fluid == 0 {
        return Err(Error::Geometry("geometry has no fluid cells".into()));
    }
    Ok(grid)
}

/// Snaps a length fraction to a whole number of cells with the same
/// parity as n, keeping the shape exactly centered.
///
/// `porosity_of` maps a snapped length to the porosity of the resulting
/// mask; among the parity-valid neighbor counts it picks the one closest
/// to the analytic porosity.
fn snap_span(
    len: f64,
    n: usize,
    porosity_of: impl Fn(f64) -> f64,
    what: &str,
) -> Result<usize> {
    if !(len > 0.0 && len < 1.0) || !len.is_finite() {
        return Err(Error::Geometry(format!("{what} must lie in (0,1), got {len}")));
    }
    let target = len * n as f64;
    if target.round() < 2.0 {
        return Err(Error::Geometry(format!(
            "{what} = {len} spans fewer than 2 cells at n = {n}; refine the grid"
        )));
    }
    let nearest = target.round() as isize;
    let analytic = porosity_of(len);
    // Centering requires n - span even; span = nearest wins when its
    // parity fits, otherwise the porosity error decides between nearest±1.
    let mut best: Option<(usize, f64)> = None;
    for s in [nearest, nearest - 1, nearest + 1] {
        if s < 2 || s > n as isize || (n - s as usize) % 2 != 0 {
            continue;
        }
        let p_err = (porosity_of(s as f64 / n as f64) - analytic).abs();
        if best.map_or(true, |(_, b)| p_err < b) {
            best = Some((s as usize, p_err));
        }
    }
    best.map(|(s, _)| s).ok_or_else(|| {
        Error::Geometry(format!("{what} = {len} cannot be centered at n = {n}"))
    })
}

fn build_mask(n: usize, is_solid: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut mask = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            mask[j * n + i] = is_solid(i, j);
        }
    }
    mask
}

impl UnitCellGrid {
    /// Wraps an explicit solid mask into a grid, validating connectivity.
    pub fn from_mask(n: usize, solid: Vec<bool>) -> Result<Self> {
        assert_eq!(solid.len(), n * n, "mask length must be n*n");
        let n_fluid = solid.iter().filter(|s| !**s).count();
        let grid = UnitCellGrid { n, h: 1.0 / n as f64, solid, n_fluid };
        for j in 0..n {
            for i in 0..n {
                if !grid.is_solid(i as isize, j as isize) && grid.fluid_neighbors(i, j) == 0 {
                    return Err(Error::Geometry(format!("isolated fluid cell at ({i}, {j})")));
                }
            }
        }
        Ok(grid)
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing h = 1/n.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of fluid cells.
    pub fn n_fluid(&self) -> usize {
        self.n_fluid
    }

    /// Pore volume fraction φ = |𝒫| = (fluid cells)·h².
    pub fn porosity(&self) -> f64 {
        self.n_fluid as f64 / (self.n * self.n) as f64
    }

    /// Periodic cell index for possibly out-of-range coordinates.
    #[inline]
    pub fn cell(&self, i: isize, j: isize) -> usize {
        let n = self.n as isize;
        let iw = i.rem_euclid(n) as usize;
        let jw = j.rem_euclid(n) as usize;
        jw * self.n + iw
    }

    /// Whether the (periodically wrapped) cell is solid.
    #[inline]
    pub fn is_solid(&self, i: isize, j: isize) -> bool {
        self.solid[self.cell(i, j)]
    }

    /// Whether the (periodically wrapped) cell is fluid.
    #[inline]
    pub fn is_fluid(&self, i: isize, j: isize) -> bool {
        !self.is_solid(i, j)
    }

    /// Raw solid mask, row-major with `j*n + i` indexing.
    pub fn solid_mask(&self) -> &[bool] {
        &self.solid
    }

    /// Number of fluid 4-neighbors (periodic) of a fluid cell.
    fn fluid_neighbors(&self, i: usize, j: usize) -> usize {
        let (i, j) = (i as isize, j as isize);
        [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
            .iter()
            .filter(|(a, b)| self.is_fluid(*a, *b))
            .count()
    }

    /// The x-face `(i, j)` sits at `(i·h, (j+1/2)h)` between cells
    /// `(i-1, j)` and `(i, j)`; it carries an unknown normal velocity
    /// only when both neighbors are fluid.
    #[inline]
    pub fn x_face_active(&self, i: isize, j: isize) -> bool {
        self.is_fluid(i - 1, j) && self.is_fluid(i, j)
    }

    /// The y-face `(i, j)` sits at `((i+1/2)h, j·h)` between cells
    /// `(i, j-1)` and `(i, j)`.
    #[inline]
    pub fn y_face_active(&self, i: isize, j: isize) -> bool {
        self.is_fluid(i, j - 1) && self.is_fluid(i, j)
    }

    /// Center coordinates of cell `(i, j)`.
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h]
    }

    /// Writes the solid mask in the plain-text interchange format.
    pub fn write_mask(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{} {}", self.n, self.n)?;
        for j in 0..self.n {
            let row: Vec<&str> = (0..self.n)
                .map(|i| if self.solid[j * self.n + i] { "1" } else { "0" })
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Reads a plain-text solid mask: first line `n_x n_y`, then n_y rows of
/// n_x whitespace-separated 0/1 entries, row j = 0 (bottom) first.
/// 1 marks solid, 0 marks fluid.
pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::MaskFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let bad = |reason: String| Error::MaskFile { path: path.to_path_buf(), reason };
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .map_err(|e| bad(e.to_string()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad header token {t:?}"))))
        .collect::<Result<_>>()?;
    let [nx, ny] = dims[..] else {
        return Err(bad(format!("header must be \"n_x n_y\", got {header:?}")));
    };
    if nx == 0 || ny == 0 {
        return Err(bad("zero-sized mask".into()));
    }
    let mut mask = vec![false; nx * ny];
    let mut rows = 0usize;
    for line in lines {
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        if rows >= ny {
            return Err(bad(format!("more than {ny} data rows")));
        }
        let mut cols = 0usize;
        for tok in line.split_whitespace() {
            if cols >= nx {
                return Err(bad(format!("row {rows} has more than {nx} entries")));
            }
            mask[rows * nx + cols] = match tok {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("entry {other:?} is not 0 or 1"))),
            };
            cols += 1;
        }
        if cols != nx {
            return Err(bad(format!("row {rows} has {cols} entries, expected {nx}")));
        }
        rows += 1;
    }
    if rows != ny {
        return Err(bad(format!("found {rows} data rows, expected {ny}")));
    }
    Ok((nx, ny, mask))
}

/// Shortest periodic distance between two points of the unit cell.
pub fn periodic_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let mut d2 = 0.0;
    for k in 0..2 {
        let mut d = (a[k] - b[k]).abs() % 1.0;
        if d > 0.5 {
            d = 1.0 - d;
        }
        d2 += d * d;
    }
    d2.sqrt()
}
