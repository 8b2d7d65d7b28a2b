//! Immersed bodies, cell classification and the ghost/wall/mirror linkage.

pub(crate) mod body;
mod classify;
mod links;
mod naca;

pub use body::{BodySpec, ImplicitBody, Polygon};
pub use classify::{classify, BOUNDARY_CLEARANCE, SOLID_TIE_TOLERANCE};
pub use links::{
    build_ghost_links, interpolate_stencil, mirror_residual, sample_at_mirror, sample_link, write_links_csv,
    GhostLink, CONCAVE_MIRROR_FACTOR,
};
pub use naca::NacaAirfoil;

use crate::error::GeometryError;
use crate::grid::{CellKind, RectilinearGrid};

/// Classification plus ghost links for one body on one grid.
#[derive(Clone, Debug)]
pub struct ImmersedBoundary {
    pub body: ImplicitBody,
    pub kinds: Vec<CellKind>,
    pub links: Vec<GhostLink>,
}

impl ImmersedBoundary {
    pub fn new(grid: &RectilinearGrid, body: ImplicitBody) -> Result<Self, GeometryError> {
        let kinds = classify(grid, &body)?;
        let links = build_ghost_links(grid, &body, &kinds)?;
        Ok(ImmersedBoundary { body, kinds, links })
    }

    pub fn empty(grid: &RectilinearGrid) -> Self {
        ImmersedBoundary { body: ImplicitBody::Empty, kinds: vec![CellKind::Fluid; grid.n_cells()], links: Vec::new() }
    }

    pub fn n_ghosts(&self) -> usize {
        self.links.len()
    }
}
