use rayon::prelude::*;

use super::body::ImplicitBody;
use crate::error::GeometryError;
use crate::grid::{CellKind, RectilinearGrid};

/// Cells whose centers are closer than this fraction of the reference length
/// to the surface count as solid.
pub const SOLID_TIE_TOLERANCE: f64 = 1e-9;

/// Solid cells may not come closer than this many cells to a non-periodic
/// domain boundary.
pub const BOUNDARY_CLEARANCE: usize = 2;

/// Label every cell FLUID, SOLID or GHOST.
pub fn classify(grid: &RectilinearGrid, body: &ImplicitBody) -> Result<Vec<CellKind>, GeometryError> {
    if let Some(d) = body.dim() {
        if d != grid.dim() {
            return Err(GeometryError::DimensionMismatch { body: d, grid: grid.dim() });
        }
    }
    if body.is_empty() {
        return Ok(vec![CellKind::Fluid; grid.n_cells()]);
    }
    let tie = SOLID_TIE_TOLERANCE * body.reference_length();
    let bbox = body.bounding_box();
    let dim = grid.dim();
    let solid: Vec<bool> = (0..grid.n_cells())
        .into_par_iter()
        .map(|c| {
            let x = grid.center(c);
            if let Some((lo, hi)) = &bbox {
                // outside the padded box the sign is known without a projection
                if (0..dim).any(|d| x[d] < lo[d] - tie || x[d] > hi[d] + tie) {
                    return false;
                }
            }
            body.signed_distance(&x) < tie
        })
        .collect();

    if body.is_bounded() {
        for (c, _) in solid.iter().enumerate().filter(|(_, s)| **s) {
            let idx = grid.multi(c);
            for d in 0..dim {
                let n = grid.dims()[d];
                if !grid.is_periodic(d) && (idx[d] < BOUNDARY_CLEARANCE || idx[d] + BOUNDARY_CLEARANCE >= n) {
                    return Err(GeometryError::BodyTouchesBoundary { cell: c, clearance: BOUNDARY_CLEARANCE });
                }
            }
        }
    }

    let nb = grid.neighbor_table();
    Ok((0..grid.n_cells())
        .map(|c| {
            if !solid[c] {
                CellKind::Fluid
            } else if nb[c][..2 * dim].iter().any(|&n| n != crate::grid::NO_NEIGHBOR && !solid[n]) {
                CellKind::Ghost
            } else {
                CellKind::Solid
            }
        })
        .collect())
}
