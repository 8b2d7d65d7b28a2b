use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::system::SparseSystem;
use crate::error::SolverError;
use crate::grid::{RectilinearGrid, NO_NEIGHBOR};

/// Outward volumetric flux through each of the (up to) six faces of a cell,
/// indexed `2·axis + side`. Both cells sharing a face hold opposite values.
pub type FaceFlux = Vec<[f64; 6]>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvectionScheme {
    /// Linear interpolation, fully implicit.
    Central,
    /// Implicit upwind with an explicit limited-linear correction.
    LimitedLinear,
    Upwind,
}

/// Scalar condition on a domain side. Periodic sides carry no condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaceBc {
    Dirichlet(f64),
    ZeroGradient,
}

/// Linear interpolation weight of cell `c` on the face shared with `n`
/// along `axis`.
#[inline]
fn own_weight(grid: &RectilinearGrid, c: usize, n: usize, axis: usize) -> f64 {
    let (wc, wn) = (grid.width(c, axis), grid.width(n, axis));
    wn / (wc + wn)
}

/// Limited-linear face value minus upwind face value for the face between
/// cells `lo` and `hi` along `axis` carrying flux `f_hi` in the +axis direction.
fn limited_correction(grid: &RectilinearGrid, phi: &[f64], lo: usize, hi: usize, axis: usize, f_hi: f64) -> f64 {
    let nb = grid.neighbor_table();
    let (u, d) = if f_hi >= 0.0 { (lo, hi) } else { (hi, lo) };
    let delta = phi[d] - phi[u];
    if delta == 0.0 {
        return 0.0;
    }
    let (um, up) = (nb[u][2 * axis], nb[u][2 * axis + 1]);
    if um == NO_NEIGHBOR || up == NO_NEIGHBOR {
        return 0.0;
    }
    let span = 0.5 * grid.width(um, axis) + grid.width(u, axis) + 0.5 * grid.width(up, axis);
    let grad = (phi[up] - phi[um]) / span;
    let gap = 0.5 * (grid.width(u, axis) + grid.width(d, axis));
    let signed_gap = if f_hi >= 0.0 { gap } else { -gap };
    let r = 2.0 * grad * signed_gap / delta - 1.0;
    let psi = (2.0 * r).min(1.0).max(0.0);
    // central value relative to upwind: (1 - w_u)·(φ_D - φ_U)
    psi * (1.0 - own_weight(grid, u, d, axis)) * delta
}

/// Add convection (non-conservative form Σ F(φ_f - φ_P)) and diffusion
/// `-∇·(Γ∇φ)` to `sys`. Matrix rows sum to zero away from Dirichlet faces.
#[allow(clippy::too_many_arguments)]
pub fn assemble_convection_diffusion(
    grid: &RectilinearGrid,
    sys: &mut SparseSystem,
    flux: &[[f64; 6]],
    gamma: f64,
    scheme: ConvectionScheme,
    bc: &[FaceBc; 6],
    phi: &[f64],
) -> Result<(), SolverError> {
    if !(gamma >= 0.0) {
        return Err(SolverError::Invalid(format!("negative diffusivity {gamma}")));
    }
    let dim = grid.dim();
    let nb = grid.neighbor_table();
    sys.diag
        .par_iter_mut()
        .zip(sys.off.par_iter_mut())
        .zip(sys.rhs.par_iter_mut())
        .enumerate()
        .for_each(|(c, ((diag, off), rhs))| {
            for axis in 0..dim {
                let area = grid.face_area(c, axis);
                for side in 0..2 {
                    let k = 2 * axis + side;
                    let f = flux[c][k];
                    let n = nb[c][k];
                    if n == NO_NEIGHBOR {
                        if let FaceBc::Dirichlet(v) = bc[k] {
                            let dcoef = gamma * area / (0.5 * grid.width(c, axis));
                            *diag += dcoef;
                            *rhs += dcoef * v;
                            if scheme == ConvectionScheme::Central || f < 0.0 {
                                *diag -= f;
                                *rhs -= f * v;
                            }
                        }
                        continue;
                    }
                    let dcoef = gamma * area / (0.5 * (grid.width(c, axis) + grid.width(n, axis)));
                    *diag += dcoef;
                    off[k] -= dcoef;
                    match scheme {
                        ConvectionScheme::Central => {
                            let w = 1.0 - own_weight(grid, c, n, axis);
                            off[k] += f * w;
                            *diag -= f * w;
                        }
                        ConvectionScheme::Upwind | ConvectionScheme::LimitedLinear => {
                            if f < 0.0 {
                                off[k] += f;
                                *diag -= f;
                            }
                            if scheme == ConvectionScheme::LimitedLinear {
                                let (lo, hi, f_hi) = if side == 1 { (c, n, f) } else { (n, c, -f) };
                                *rhs -= f * limited_correction(grid, phi, lo, hi, axis, f_hi);
                            }
                        }
                    }
                }
            }
        });
    Ok(())
}

/// Backward-difference coefficients `(a0, a1, a2)` for
/// `dφ/dt ≈ (a0 φ^{n+1} + a1 φ^n + a2 φ^{n-1}) / dt` with `ω = dt / dt_prev`.
pub fn bdf_coefficients(order: usize, dt: f64, dt_prev: f64) -> (f64, f64, f64) {
    if order < 2 {
        return (1.0, -1.0, 0.0);
    }
    let w = dt / dt_prev;
    ((1.0 + 2.0 * w) / (1.0 + w), -(1.0 + w), w * w / (1.0 + w))
}

/// Add `coeff·V·dφ/dt` (implicit in φ^{n+1}). Order 2 falls back to order 1
/// when no φ^{n-1} is available; the order used is returned.
#[allow(clippy::too_many_arguments)]
pub fn assemble_time_derivative(
    grid: &RectilinearGrid,
    sys: &mut SparseSystem,
    phi_n: &[f64],
    phi_nm1: Option<&[f64]>,
    dt: f64,
    dt_prev: Option<f64>,
    order: usize,
    coeff: Option<&[f64]>,
) -> Result<usize, SolverError> {
    if !(dt > 0.0) {
        return Err(SolverError::Invalid(format!("time step {dt} must be positive")));
    }
    let used = match (order, phi_nm1, dt_prev) {
        (2, Some(_), Some(p)) if p > 0.0 => 2,
        _ => 1,
    };
    let (a0, a1, a2) = bdf_coefficients(used, dt, dt_prev.unwrap_or(dt));
    let old = phi_nm1.unwrap_or(phi_n);
    sys.diag.par_iter_mut().zip(sys.rhs.par_iter_mut()).enumerate().for_each(|(c, (d, r))| {
        let s = coeff.map_or(1.0, |k| k[c]) * grid.volume(c) / dt;
        *d += s * a0;
        *r -= s * (a1 * phi_n[c] + a2 * old[c]);
    });
    Ok(used)
}

/// Face value of φ on face `k` of cell `c` (linear interpolation, or the
/// boundary condition).
#[inline]
pub fn face_value(grid: &RectilinearGrid, phi: &[f64], bc: &[FaceBc; 6], c: usize, k: usize) -> f64 {
    let n = grid.neighbor_table()[c][k];
    if n == NO_NEIGHBOR {
        return match bc[k] {
            FaceBc::Dirichlet(v) => v,
            FaceBc::ZeroGradient => phi[c],
        };
    }
    let w = own_weight(grid, c, n, k / 2);
    w * phi[c] + (1.0 - w) * phi[n]
}

/// Gauss cell gradient component `∂φ/∂x_axis`.
pub fn gradient(grid: &RectilinearGrid, phi: &[f64], bc: &[FaceBc; 6], axis: usize) -> Vec<f64> {
    (0..grid.n_cells())
        .into_par_iter()
        .map(|c| {
            let lo = face_value(grid, phi, bc, c, 2 * axis);
            let hi = face_value(grid, phi, bc, c, 2 * axis + 1);
            (hi - lo) / grid.width(c, axis)
        })
        .collect()
}

/// Net outward flux of each cell.
pub fn divergence(flux: &[[f64; 6]], dim: usize) -> Vec<f64> {
    flux.par_iter().map(|f| f[..2 * dim].iter().sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_1d(n: usize) -> RectilinearGrid {
        RectilinearGrid::uniform(&[0.0, 0.0], &[n as f64, 3.0], &[n, 3], &[false, true]).unwrap()
    }

    const ZG: [FaceBc; 6] = [FaceBc::ZeroGradient; 6];

    #[test]
    fn zero_inputs_give_zero_contribution() {
        let g = grid_1d(6);
        let mut s = SparseSystem::new(&g);
        let flux = vec![[0.0; 6]; g.n_cells()];
        let phi = vec![1.0; g.n_cells()];
        assemble_convection_diffusion(&g, &mut s, &flux, 0.0, ConvectionScheme::LimitedLinear, &ZG, &phi).unwrap();
        assert!(s.diag.iter().all(|v| *v == 0.0) && s.rhs.iter().all(|v| *v == 0.0));
        assert!(s.off.iter().all(|o| o.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn canonical_laplacian_stencil() {
        // 1D unit spacing; y faces are periodic with area 1, so only x couples
        let g = RectilinearGrid::uniform(&[0.0, 0.0], &[6.0, 3.0], &[6, 3], &[false, true]).unwrap();
        let mut s = SparseSystem::new(&g);
        let flux = vec![[0.0; 6]; g.n_cells()];
        let phi = vec![0.0; g.n_cells()];
        assemble_convection_diffusion(&g, &mut s, &flux, 1.0, ConvectionScheme::Central, &ZG, &phi).unwrap();
        let c = g.linear(&[2, 1]);
        // x part: (-1, 2, -1); y part adds (-1, 2, -1) along the periodic direction
        assert_eq!(s.off[c][0], -1.0);
        assert_eq!(s.off[c][1], -1.0);
        assert_eq!(s.diag[c], 4.0);
        assert_eq!(s.asymmetry(), 0.0);
    }

    #[test]
    fn bdf2_is_exact_for_linear_in_time() {
        let g = grid_1d(4);
        for (dt, dtp) in [(0.1, 0.1), (0.1, 0.07), (0.05, 0.2)] {
            let t = 1.3;
            let mut s = SparseSystem::new(&g);
            let phi_n = vec![2.0 * t + 1.0; g.n_cells()];
            let phi_m = vec![2.0 * (t - dtp) + 1.0; g.n_cells()];
            let used = assemble_time_derivative(&g, &mut s, &phi_n, Some(&phi_m), dt, Some(dtp), 2, None).unwrap();
            assert_eq!(used, 2);
            // residual of dφ/dt = 2 at φ^{n+1}
            let next = 2.0 * (t + dt) + 1.0;
            for c in 0..g.n_cells() {
                let v = g.volume(c);
                let lhs = s.diag[c] * next - s.rhs[c];
                assert!((lhs / v - 2.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn euler_coefficients_and_fallback() {
        let g = RectilinearGrid::uniform(&[0.0, 0.0], &[3.0, 3.0], &[3, 3], &[false, false]).unwrap();
        let mut s = SparseSystem::new(&g);
        let phi = vec![5.0; g.n_cells()];
        let used = assemble_time_derivative(&g, &mut s, &phi, None, 0.5, None, 2, None).unwrap();
        assert_eq!(used, 1);
        assert_eq!(s.diag[0], 2.0);
        assert_eq!(s.rhs[0], 10.0);
        assert!(assemble_time_derivative(&g, &mut s, &phi, None, 0.0, None, 1, None).is_err());
    }

    proptest! {
        #[test]
        fn constant_field_has_zero_interior_residual(seed in 0u64..1000, scheme in 0usize..3) {
            let g = RectilinearGrid::from_faces(
                vec![vec![0.0, 0.3, 0.5, 0.9, 1.0, 1.4, 1.6], vec![0.0, 0.2, 0.5, 0.7, 1.1], vec![0.0, 0.5, 0.8, 1.0]],
                &[false, true, false],
            ).unwrap();
            let scheme = [ConvectionScheme::Central, ConvectionScheme::Upwind, ConvectionScheme::LimitedLinear][scheme];
            // random antisymmetric face fluxes (not divergence-free)
            let mut flux = vec![[0.0; 6]; g.n_cells()];
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let mut rnd = || { state = state.wrapping_mul(6364136223846793005).wrapping_add(1); ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5 };
            for c in 0..g.n_cells() {
                for d in 0..3 {
                    if let Some(n) = g.neighbor(c, d, true) {
                        let f = rnd();
                        flux[c][2 * d + 1] = f;
                        flux[n][2 * d] = -f;
                    }
                }
            }
            let phi = vec![3.0; g.n_cells()];
            let mut s = SparseSystem::new(&g);
            assemble_convection_diffusion(&g, &mut s, &flux, 0.3, scheme, &ZG, &phi).unwrap();
            let mut r = vec![0.0; g.n_cells()];
            s.residual(&phi, &mut r);
            for v in r {
                prop_assert!(v.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gauss_gradient_exact_for_linear() {
        let g = RectilinearGrid::from_faces(vec![vec![0.0, 0.3, 0.5, 0.9, 1.0], vec![0.0, 0.2, 0.5, 0.7]], &[false, false])
            .unwrap();
        let phi: Vec<f64> = (0..g.n_cells()).map(|c| 2.0 * g.center(c)[0] - g.center(c)[1]).collect();
        let gx = gradient(&g, &phi, &ZG, 0);
        // interior cells only: zero-gradient boundaries break exactness at the edge
        for c in 0..g.n_cells() {
            let i = g.multi(c);
            if i[0] > 0 && i[0] < 3 {
                assert!((gx[c] - 2.0).abs() < 1e-12, "{}", gx[c]);
            }
        }
    }
}
