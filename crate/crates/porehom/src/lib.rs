//! Pore-scale two-phase flow and its upscaled Darcy description.
//!
//! `porehom` computes effective parameters of two-phase flow through
//! periodic porous microstructures using a diffuse-interface (phase-field)
//! description of the fluid-fluid interface:
//!
//! * [`geometry`] — periodic unit cells on regular grids (built-in shapes
//!   or mask files).
//! * [`phasefield`] — Allen-Cahn phase-field relaxation with volume
//!   conservation, saturation targeting, and equilibrium contact angles.
//! * [`stokescell`] — staggered-grid Stokes cell problems: pressure-driven
//!   and surface-tension-driven periodic flow at a frozen phase field.
//! * [`effective`] — effective mobility tensors 𝒦⁽ᵏ⁾, surface-tension
//!   vectors ℳ⁽ᵏ⁾, absolute permeability, and relative permeabilities.
//! * [`streamflow`] — streamline tracing and filtering of recirculation
//!   zones that do not contribute to net through-flow.
//! * [`porescale`] — a transient coupled simulator (quasi-compressible
//!   Navier-Stokes + phase field) for resolved single-pore channels.
//! * [`pipeline`] — configuration files, saturation sweeps producing
//!   relative-permeability curves, and dimensionless-number helpers.
//! * [`output`] — CSV records and legacy-VTK field writers.
//!
//! The guide in `book/` walks through the model and the workflow; its
//! code snippets compile and run as doc-tests of this crate.

pub mod effective;
pub mod error;
pub mod geometry;
pub mod output;
pub mod phasefield;
pub mod pipeline;
pub mod porescale;
pub mod sparse;
pub mod stokescell;
pub mod streamflow;

mod book;

pub use error::{Error, Result};
