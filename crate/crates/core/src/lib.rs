//! Sharp immersed-boundary finite-volume flow solvers.
//!
//! Wall conditions on an immersed body are enforced through source terms in the
//! first layer of solid-side ("ghost") cells. The source intensity is adapted every
//! time step by an observer that compares the ghost-cell value with a target built
//! from the flow at the mirror point across the wall.

pub mod boundary;
pub mod case;
pub mod compressible;
pub mod error;
pub mod fvm;
pub mod geometry;
pub mod grid;
pub mod incompressible;
pub mod observer;
pub mod post;

pub use case::{parse_config, run_case, CaseConfig, RunOptions, RunStatus, Summary};
pub use error::Error;
pub use grid::{build_grid, AxisSpec, CellKind, FieldSet, Point, RectilinearGrid, Zone};
