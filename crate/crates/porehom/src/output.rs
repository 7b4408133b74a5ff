//! CSV records and legacy-VTK field writers.
//!
//! All writers are deterministic: fixed column orders, shortest
//! round-trip float formatting, no timestamps. Identical inputs produce
//! bit-identical files, so output files can be diffed across runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::effective::RelPermRecord;
use crate::error::{Error, Result};
use crate::geometry::UnitCellGrid;
use crate::phasefield::PhaseField;
use crate::porescale::{PoreScaleSim, PoreScaleState, SummaryRow};
use crate::stokescell::CellSolution;

/// Column order of the relative-permeability CSV.
pub const RELPERM_HEADER: [&str; 14] = [
    "s1", "Krel1_xx", "Krel1_yy", "Krel2_xx", "Krel2_yy", "M1_x", "M1_y", "M2_x", "M2_y", "area",
    "phi", "geometry", "M", "R",
];

/// Shortest round-trip decimal for a float; the same value always
/// formats to the same string.
fn num(v: f64) -> String {
    format!("{v}")
}

fn csv_into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Renders relative-permeability records as CSV (header included, one
/// row per record, record order preserved).
pub fn relperm_csv(records: &[RelPermRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RELPERM_HEADER)?;
    for r in records {
        w.write_record([
            num(r.s1),
            num(r.k_rel1.xx),
            num(r.k_rel1.yy),
            num(r.k_rel2.xx),
            num(r.k_rel2.yy),
            num(r.m1[0]),
            num(r.m1[1]),
            num(r.m2[0]),
            num(r.m2[1]),
            num(r.area),
            num(r.porosity),
            r.geometry.clone(),
            num(r.m),
            num(r.r),
        ])?;
    }
    csv_into_string(w)
}

/// Writes [`relperm_csv`] to a file.
pub fn write_relperm_csv(path: &Path, records: &[RelPermRecord]) -> Result<()> {
    fs::write(path, relperm_csv(records)?)?;
    Ok(())
}

/// Renders a phase field as `x,y,u` rows over all cell centers,
/// row-major from the bottom-left.
pub fn phase_csv(grid: &UnitCellGrid, u: &PhaseField) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "u"])?;
    let n = grid.n();
    for j in 0..n {
        for i in 0..n {
            let [x, y] = grid.center(i, j);
            w.write_record([num(x), num(y), num(u.values()[j * n + i])])?;
        }
    }
    csv_into_string(w)
}

/// Writes [`phase_csv`] to a file.
pub fn write_phase_csv(path: &Path, grid: &UnitCellGrid, u: &PhaseField) -> Result<()> {
    fs::write(path, phase_csv(grid, u)?)?;
    Ok(())
}

/// Renders a cell solution as `x,y,wx,wy,pi` rows over all cell
/// centers; velocities are face values averaged to the center.
pub fn solution_csv(grid: &UnitCellGrid, sol: &CellSolution) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "wx", "wy", "pi"])?;
    let n = grid.n();
    for j in 0..n {
        for i in 0..n {
            let [x, y] = grid.center(i, j);
            let [wx, wy] = sol.w.at_cell(i as isize, j as isize);
            w.write_record([num(x), num(y), num(wx), num(wy), num(sol.pi[j * n + i])])?;
        }
    }
    csv_into_string(w)
}

/// Writes [`solution_csv`] to a file.
pub fn write_solution_csv(path: &Path, grid: &UnitCellGrid, sol: &CellSolution) -> Result<()> {
    fs::write(path, solution_csv(grid, sol)?)?;
    Ok(())
}

/// Renders pore-scale run summary rows as CSV with columns
/// `t,max_v,angle_bottom,angle_top,total_u,x_mid,x_wall`; angles are in
/// radians and optional columns are empty where no interface crossing
/// exists.
pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "max_v", "angle_bottom", "angle_top", "total_u", "x_mid", "x_wall"])?;
    for r in rows {
        w.write_record([
            num(r.t),
            num(r.max_v),
            opt(r.angle_bottom),
            opt(r.angle_top),
            num(r.total_u),
            opt(r.x_mid),
            opt(r.x_wall),
        ])?;
    }
    csv_into_string(w)
}

/// Writes [`summary_csv`] to a file.
pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    fs::write(path, summary_csv(rows)?)?;
    Ok(())
}

/// Renders cell-centered fields on a regular nx×ny grid of square
/// cells as a legacy-VTK structured-points dataset (ASCII). Scalars
/// and vectors are attached as CELL_DATA in the given order; every
/// field must hold nx·ny row-major values.
pub fn vtk_cells(
    title: &str,
    dims: (usize, usize),
    spacing: f64,
    scalars: &[(&str, &[f64])],
    vectors: &[(&str, &[[f64; 2]])],
) -> Result<String> {
    let (nx, ny) = dims;
    let cells = nx * ny;
    for (name, values) in scalars {
        if values.len() != cells {
            return Err(Error::Config(format!(
                "scalar field {name} has {} values, grid has {cells} cells",
                values.len()
            )));
        }
    }
    for (name, values) in vectors {
        if values.len() != cells {
            return Err(Error::Config(format!(
                "vector field {name} has {} values, grid has {cells} cells",
                values.len()
            )));
        }
    }
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(title);
    out.push('\n');
    out.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", nx + 1, ny + 1);
    out.push_str("ORIGIN 0 0 0\n");
    let _ = writeln!(out, "SPACING {} {} {}", num(spacing), num(spacing), num(spacing));
    let _ = writeln!(out, "CELL_DATA {cells}");
    for (name, values) in scalars {
        let _ = writeln!(out, "SCALARS {name} double 1");
        out.push_str("LOOKUP_TABLE default\n");
        for v in *values {
            let _ = writeln!(out, "{}", num(*v));
        }
    }
    for (name, values) in vectors {
        let _ = writeln!(out, "VECTORS {name} double");
        for [x, y] in *values {
            let _ = writeln!(out, "{} {} 0", num(*x), num(*y));
        }
    }
    Ok(out)
}

/// Writes a phase field (and the solid mask alongside it, for overlay)
/// to a legacy-VTK file.
pub fn write_phase_vtk(path: &Path, grid: &UnitCellGrid, u: &PhaseField) -> Result<()> {
    let solid: Vec<f64> = grid.solid_mask().iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    let n = grid.n();
    let s = vtk_cells(
        "phase field",
        (n, n),
        grid.h(),
        &[("u", u.values()), ("solid", &solid)],
        &[],
    )?;
    fs::write(path, s)?;
    Ok(())
}

/// Writes the solid mask alone to a legacy-VTK file.
pub fn write_mask_vtk(path: &Path, grid: &UnitCellGrid) -> Result<()> {
    let solid: Vec<f64> = grid.solid_mask().iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    let n = grid.n();
    let s = vtk_cells("solid mask", (n, n), grid.h(), &[("solid", &solid)], &[])?;
    fs::write(path, s)?;
    Ok(())
}

/// Writes a cell solution (pressure and center-averaged velocity) to a
/// legacy-VTK file.
pub fn write_solution_vtk(path: &Path, grid: &UnitCellGrid, sol: &CellSolution) -> Result<()> {
    let n = grid.n();
    let mut w = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            w.push(sol.w.at_cell(i as isize, j as isize));
        }
    }
    let s = vtk_cells(
        "cell solution",
        (n, n),
        grid.h(),
        &[("pi", &sol.pi)],
        &[("w", &w)],
    )?;
    fs::write(path, s)?;
    Ok(())
}

/// Writes one pore-scale snapshot (phase, pressure, center-averaged
/// velocity) to a legacy-VTK file. The grid triple comes from
/// [`PoreScaleSim::grid`], so snapshots can be written from a run
/// observer that only sees the state.
pub fn write_porescale_state_vtk(
    path: &Path,
    grid: (usize, usize, f64),
    state: &PoreScaleState,
) -> Result<()> {
    let (nx, ny, h) = grid;
    let v = crate::porescale::velocity_at_cells(nx, ny, state);
    let s = vtk_cells(
        "pore-scale state",
        (nx, ny),
        h,
        &[("u", &state.u), ("p", &state.p)],
        &[("v", &v)],
    )?;
    fs::write(path, s)?;
    Ok(())
}

/// Writes the simulator's current snapshot to a legacy-VTK file.
pub fn write_porescale_vtk(path: &Path, sim: &PoreScaleSim) -> Result<()> {
    write_porescale_state_vtk(path, sim.grid(), sim.state())
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(std::io::Error::other(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::Tensor2;
    use crate::geometry::{build_unit_cell, GeometryKind};

    fn record() -> RelPermRecord {
        RelPermRecord {
            s1: 0.25,
            k_rel1: Tensor2 { xx: 0.5, xy: 0.0, yx: 0.0, yy: 0.5 },
            k_rel2: Tensor2 { xx: 0.5, xy: 0.0, yx: 0.0, yy: 0.5 },
            m1: [0.0, 0.0],
            m2: [0.0, 0.0],
            area: 1.5,
            porosity: 0.7975,
            geometry: "obstacle(0.45)".into(),
            m: 1.0,
            r: 1.0,
            radius: 0.2,
            center: [0.0, 0.0],
        }
    }

    #[test]
    fn relperm_csv_has_the_exact_header_and_one_row_per_record() {
        let text = relperm_csv(&[record(), record()]).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "s1,Krel1_xx,Krel1_yy,Krel2_xx,Krel2_yy,M1_x,M1_y,M2_x,M2_y,area,phi,geometry,M,R"
        );
        assert_eq!(lines.count(), 2);
        assert!(text.contains("0.25,0.5,0.5,0.5,0.5,0,0,0,0,1.5,0.7975,obstacle(0.45),1,1"));
    }

    #[test]
    fn phase_csv_lists_every_cell_center() {
        let grid = build_unit_cell(&GeometryKind::Empty, 8).unwrap();
        let u = PhaseField::constant(&grid, 0.5, 0.1);
        let text = phase_csv(&grid, &u).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,y,u");
        assert_eq!(lines.clone().count(), 64);
        assert_eq!(lines.next().unwrap(), "0.0625,0.0625,0.5");
    }

    #[test]
    fn vtk_matches_a_hand_written_file() {
        let text = vtk_cells(
            "t",
            (2, 1),
            0.5,
            &[("a", &[1.0, 2.5])],
            &[("b", &[[0.0, 1.0], [2.0, 0.0]])],
        )
        .unwrap();
        let expected = "\
# vtk DataFile Version 3.0
t
ASCII
DATASET STRUCTURED_POINTS
DIMENSIONS 3 2 1
ORIGIN 0 0 0
SPACING 0.5 0.5 0.5
CELL_DATA 2
SCALARS a double 1
LOOKUP_TABLE default
1
2.5
VECTORS b double
0 1 0
2 0 0
";
        assert_eq!(text, expected);
    }

    #[test]
    fn vtk_rejects_mismatched_field_lengths() {
        let r = vtk_cells("t", (2, 2), 0.5, &[("a", &[1.0])], &[]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn summary_csv_leaves_missing_angles_empty() {
        let rows = vec![SummaryRow {
            t: 0.5,
            max_v: 0.25,
            angle_bottom: None,
            angle_top: None,
            total_u: 1.0,
            x_mid: None,
            x_wall: None,
        }];
        let text = summary_csv(&rows).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "0.5,0.25,,,1,,"
        );
    }

    #[test]
    fn writers_are_deterministic() {
        let a = relperm_csv(&[record()]).unwrap();
        let b = relperm_csv(&[record()]).unwrap();
        assert_eq!(a, b);
    }
}
