//! Finite-volume operators, linear solvers and the compressible face flux.

pub mod assemble;
pub mod kt;
pub mod linsolve;
pub mod precond;
pub mod system;

pub use assemble::{
    assemble_convection_diffusion, assemble_time_derivative, bdf_coefficients, divergence, face_value, gradient,
    ConvectionScheme, FaceBc, FaceFlux,
};
pub use kt::{euler_flux, kt_flux, van_leer, Conserved, GasModel, Primitive};
pub use linsolve::{solve_general, solve_spd, ResidualNorm, SolveReport, Tolerance};
pub use precond::{AxisEnd, FastDiagonalization, Identity, Jacobi, Preconditioner};
pub use system::SparseSystem;
