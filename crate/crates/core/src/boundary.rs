//! Domain-side boundary conditions shared by both flow solvers.

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::fvm::{AxisEnd, FaceBc};
use crate::grid::RectilinearGrid;

/// Condition on one side of the box domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SideBc {
    /// Fixed velocity (and, for compressible flow, fixed density and temperature).
    Inlet { velocity: [f64; 3] },
    /// Fixed pressure, zero-gradient velocity.
    Outlet { pressure: f64 },
    /// Zero normal velocity, zero-gradient tangential velocity.
    Slip,
    NoSlip,
    /// Zero gradient for every variable.
    ZeroGradient,
    Periodic,
}

/// Conditions on the six sides, indexed `2·axis + side` (side 1 = high).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBc {
    pub sides: Vec<SideBc>,
}

impl DomainBc {
    pub fn periodic(dim: usize) -> Self {
        DomainBc { sides: vec![SideBc::Periodic; 2 * dim] }
    }

    pub fn side(&self, k: usize) -> SideBc {
        self.sides.get(k).copied().unwrap_or(SideBc::ZeroGradient)
    }

    /// Periodic sides must match the grid; sides come in pairs.
    pub fn validate(&self, grid: &RectilinearGrid) -> Result<(), SolverError> {
        if self.sides.len() != 2 * grid.dim() {
            return Err(SolverError::Invalid(format!(
                "expected {} boundary sides, got {}",
                2 * grid.dim(),
                self.sides.len()
            )));
        }
        for d in 0..grid.dim() {
            let per = [self.sides[2 * d], self.sides[2 * d + 1]].map(|s| s == SideBc::Periodic);
            if per[0] != per[1] || per[0] != grid.is_periodic(d) {
                return Err(SolverError::Invalid(format!(
                    "axis {d}: periodic boundary sides must be paired and match the grid"
                )));
            }
        }
        Ok(())
    }

    /// Condition on velocity component `comp` at every side.
    pub fn velocity(&self, comp: usize) -> [FaceBc; 6] {
        let mut out = [FaceBc::ZeroGradient; 6];
        for (k, s) in self.sides.iter().enumerate() {
            out[k] = match *s {
                SideBc::Inlet { velocity } => FaceBc::Dirichlet(velocity[comp]),
                SideBc::NoSlip => FaceBc::Dirichlet(0.0),
                SideBc::Slip if comp == k / 2 => FaceBc::Dirichlet(0.0),
                _ => FaceBc::ZeroGradient,
            };
        }
        out
    }

    pub fn pressure(&self) -> [FaceBc; 6] {
        let mut out = [FaceBc::ZeroGradient; 6];
        for (k, s) in self.sides.iter().enumerate() {
            if let SideBc::Outlet { pressure } = *s {
                out[k] = FaceBc::Dirichlet(pressure);
            }
        }
        out
    }

    /// Condition on a scalar that is fixed at inlets (density, temperature).
    pub fn inflow_scalar(&self, value: f64) -> [FaceBc; 6] {
        let mut out = [FaceBc::ZeroGradient; 6];
        for (k, s) in self.sides.iter().enumerate() {
            if matches!(s, SideBc::Inlet { .. }) {
                out[k] = FaceBc::Dirichlet(value);
            }
        }
        out
    }

    /// Per-axis ends of the pressure operator.
    pub fn pressure_ends(&self, dim: usize) -> Vec<[AxisEnd; 2]> {
        (0..dim)
            .map(|d| {
                [0, 1].map(|s| match self.side(2 * d + s) {
                    SideBc::Periodic => AxisEnd::Periodic,
                    SideBc::Outlet { .. } => AxisEnd::Dirichlet,
                    _ => AxisEnd::Neumann,
                })
            })
            .collect()
    }

    /// Pressure is determined only up to a constant.
    pub fn pressure_is_singular(&self) -> bool {
        !self.sides.iter().any(|s| matches!(s, SideBc::Outlet { .. }))
    }
}
