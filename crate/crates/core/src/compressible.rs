//! Density-based semi-explicit solver for viscous compressible flow with
//! immersed-boundary forcing of density, momentum and temperature.
//!
//! One step runs, in order: observer update from the state at n, explicit
//! central-upwind mass and inviscid momentum update, implicit viscous velocity
//! solve, explicit energy update (convective flux plus viscous work at the new
//! velocity), implicit thermal solve on the sensible energy, and the
//! perfect-gas synchronization of `p`, `T` and `ρe_t`.
//!
//! SOLID cells that are not ghosts are frozen at the quiescent free-stream
//! state. Faces between an active cell and a frozen cell act as slip walls for
//! the convective flux and carry no diffusive flux.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{DomainBc, SideBc};
use crate::error::SolverError;
use crate::fvm::{kt_flux, solve_spd, van_leer, FaceBc, GasModel, Jacobi, Primitive, ResidualNorm, SparseSystem, Tolerance};
use crate::geometry::ImmersedBoundary;
use crate::grid::{CellKind, FieldSet, RectilinearGrid, NO_NEIGHBOR};
use crate::incompressible::DtPolicy;
use crate::observer::{apply_forcings, ForcedEquations, ObserverConfig, ObserverState, ThermalWall};

/// Default acoustic Courant number.
pub const DEFAULT_ACOUSTIC_CFL: f64 = 0.4;
/// A fixed time step whose acoustic Courant number exceeds this aborts.
pub const ACOUSTIC_CFL_LIMIT: f64 = 1.0;

/// Dynamic viscosity law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum Viscosity {
    Constant { mu: f64 },
    /// μ = μ_ref (T/T_ref)^{3/2} (T_ref + S)/(T + S).
    Sutherland { mu_ref: f64, t_ref: f64, s: f64 },
}

impl Viscosity {
    #[inline]
    pub fn mu(&self, t: f64) -> f64 {
        match *self {
            Viscosity::Constant { mu } => mu,
            Viscosity::Sutherland { mu_ref, t_ref, s } => mu_ref * (t / t_ref).powf(1.5) * (t_ref + s) / (t + s),
        }
    }

    pub fn is_inviscid(&self) -> bool {
        matches!(*self, Viscosity::Constant { mu } if mu == 0.0)
    }
}

/// Inflow state; also the quiescent state of frozen SOLID cells (with zero
/// velocity).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeStream {
    pub rho: f64,
    pub velocity: [f64; 3],
    pub t: f64,
}

impl FreeStream {
    pub fn pressure(&self, gas: &GasModel) -> f64 {
        self.rho * gas.r * self.t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressibleConfig {
    pub gas: GasModel,
    pub viscosity: Viscosity,
    pub prandtl: f64,
    pub free_stream: FreeStream,
    pub thermal: ThermalWall,
    pub dt: DtPolicy,
    /// Viscous and thermal residual bound per cell, relative to U and c_v·T_∞.
    pub transport_tol: f64,
    pub max_linear_iters: usize,
    pub u_ref: f64,
    pub l_ref: f64,
}

impl CompressibleConfig {
    /// Scaling with ρ_∞ = U_∞ = T_∞ = L = 1: R = 1/(γ Ma²), μ = 1/Re.
    pub fn nondimensional(re: f64, ma: f64, gamma: f64) -> Self {
        CompressibleConfig {
            gas: GasModel { gamma, r: 1.0 / (gamma * ma * ma) },
            viscosity: Viscosity::Constant { mu: 1.0 / re },
            prandtl: 0.72,
            free_stream: FreeStream { rho: 1.0, velocity: [1.0, 0.0, 0.0], t: 1.0 },
            thermal: ThermalWall::Adiabatic,
            dt: DtPolicy::Cfl { max_cfl: DEFAULT_ACOUSTIC_CFL, dt_max: f64::INFINITY },
            transport_tol: 1e-7,
            max_linear_iters: 2000,
            u_ref: 1.0,
            l_ref: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let mut bad = Vec::new();
        if !(self.gas.gamma > 1.0) {
            bad.push(format!("gamma = {} must exceed 1", self.gas.gamma));
        }
        if !(self.gas.r > 0.0) {
            bad.push(format!("gas constant R = {} must be positive", self.gas.r));
        }
        let mu_ok = match self.viscosity {
            Viscosity::Constant { mu } => mu >= 0.0,
            Viscosity::Sutherland { mu_ref, t_ref, s } => mu_ref >= 0.0 && t_ref > 0.0 && s >= 0.0,
        };
        if !mu_ok {
            bad.push("viscosity parameters must be nonnegative (T_ref positive)".into());
        }
        if !(self.prandtl > 0.0) {
            bad.push(format!("Prandtl number {} must be positive", self.prandtl));
        }
        let fs = &self.free_stream;
        if !(fs.rho > 0.0 && fs.t > 0.0) {
            bad.push("free-stream density and temperature must be positive".into());
        }
        if let ThermalWall::Isothermal { t_wall } = self.thermal {
            if !(t_wall > 0.0) {
                bad.push(format!("isothermal wall temperature {t_wall} must be positive"));
            }
        }
        match self.dt {
            DtPolicy::Fixed { dt } if !(dt > 0.0) => bad.push(format!("dt = {dt} must be positive")),
            DtPolicy::Cfl { max_cfl, dt_max } if !(max_cfl > 0.0 && max_cfl <= ACOUSTIC_CFL_LIMIT && dt_max > 0.0) => {
                bad.push(format!("acoustic CFL {max_cfl} must lie in (0, {ACOUSTIC_CFL_LIMIT}]"))
            }
            _ => {}
        }
        if !(self.transport_tol > 0.0) || self.max_linear_iters == 0 {
            bad.push("linear tolerances must be positive".into());
        }
        if !(self.u_ref > 0.0 && self.l_ref > 0.0) {
            bad.push("u_ref and l_ref must be positive".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(SolverError::Invalid(bad.join("; ")))
        }
    }

    /// Thermal diffusivity of the sensible energy, λ/c_v = γμ/Pr.
    #[inline]
    fn energy_diffusivity(&self, mu: f64) -> f64 {
        self.gas.gamma * mu / self.prandtl
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressibleState {
    /// Primitive fields (ρ, u, p, T, e_s) and forcings.
    pub fields: FieldSet,
    /// Total energy per unit volume ρe_t.
    pub rho_e: Vec<f64>,
    pub step: u64,
    pub time: f64,
    pub observer: ObserverState,
    /// Accumulated Σ f_ρ V dt.
    pub mass_source: f64,
    /// Accumulated mass entering through the domain sides.
    pub mass_inflow: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    pub courant: f64,
    pub viscous_iters: Vec<usize>,
    pub thermal_iters: usize,
    /// Σ f_ρ V over active cells.
    pub mass_source_rate: f64,
    /// Net mass flow into the domain.
    pub inflow_rate: f64,
    pub observer_max_e: Vec<f64>,
    pub observer_median_e: Vec<f64>,
}

pub struct CompressibleSolver<'g> {
    grid: &'g RectilinearGrid,
    ib: ImmersedBoundary,
    bc: DomainBc,
    config: CompressibleConfig,
    observer: ObserverConfig,
    frozen: Vec<bool>,
}

type FaceFlux5 = Vec<[[f64; 5]; 6]>;

impl<'g> CompressibleSolver<'g> {
    pub fn new(
        grid: &'g RectilinearGrid,
        ib: ImmersedBoundary,
        bc: DomainBc,
        config: CompressibleConfig,
        observer: ObserverConfig,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        bc.validate(grid)?;
        for p in [&observer.momentum, &observer.energy, &observer.mass] {
            p.validate()?;
        }
        if ib.kinds.len() != grid.n_cells() {
            return Err(SolverError::Invalid("cell classification does not match the grid".into()));
        }
        let frozen = ib.kinds.iter().map(|k| *k == CellKind::Solid).collect();
        Ok(CompressibleSolver { grid, ib, bc, config, observer, frozen })
    }

    pub fn grid(&self) -> &RectilinearGrid {
        self.grid
    }
    pub fn config(&self) -> &CompressibleConfig {
        &self.config
    }
    pub fn immersed_boundary(&self) -> &ImmersedBoundary {
        &self.ib
    }
    pub fn is_frozen(&self, cell: usize) -> bool {
        self.frozen[cell]
    }

    /// Uniform free stream in every active cell.
    pub fn free_stream_state(&self) -> CompressibleState {
        let fs = self.config.free_stream;
        let mut f = FieldSet::zeros(self.grid);
        f.rho.iter_mut().for_each(|v| *v = fs.rho);
        f.t.iter_mut().for_each(|v| *v = fs.t);
        for d in 0..self.grid.dim() {
            f.u[d].iter_mut().for_each(|v| *v = fs.velocity[d]);
        }
        self.state_from_fields(f)
    }

    /// State from ρ, u and T; p, e_s and ρe_t are derived and frozen cells
    /// reset.
    pub fn state_from_fields(&self, mut fields: FieldSet) -> CompressibleState {
        let fs = self.config.free_stream;
        for c in 0..self.grid.n_cells() {
            if self.frozen[c] {
                fields.rho[c] = fs.rho;
                fields.t[c] = fs.t;
                for d in 0..self.grid.dim() {
                    fields.u[d][c] = 0.0;
                }
            }
        }
        let mut rho_e = vec![0.0; self.grid.n_cells()];
        self.synchronize(&mut fields, &mut rho_e);
        CompressibleState {
            fields,
            rho_e,
            step: 0,
            time: 0.0,
            observer: ObserverState::new(self.ib.n_ghosts(), self.grid.dim(), ForcedEquations::Compressible),
            mass_source: 0.0,
            mass_inflow: 0.0,
        }
    }

    /// p = ρRT, e_s = c_v T, ρe_t = ρ(e_s + ½|u|²).
    fn synchronize(&self, f: &mut FieldSet, rho_e: &mut [f64]) {
        let gas = self.config.gas;
        let cv = gas.cv();
        let dim = self.grid.dim();
        for c in 0..f.n_cells() {
            f.e_s[c] = cv * f.t[c];
            f.p[c] = f.rho[c] * gas.r * f.t[c];
            let ke: f64 = (0..dim).map(|d| f.u[d][c] * f.u[d][c]).sum::<f64>() * 0.5;
            rho_e[c] = f.rho[c] * (f.e_s[c] + ke);
        }
    }

    /// max over active cells of dt Σ_d (|u_d| + c)/h_d.
    pub fn acoustic_courant(&self, fields: &FieldSet, dt: f64) -> f64 {
        dt * self.acoustic_rate(fields)
    }

    fn acoustic_rate(&self, fields: &FieldSet) -> f64 {
        let g = self.grid;
        let gas = self.config.gas;
        (0..g.n_cells())
            .into_par_iter()
            .filter(|&c| !self.frozen[c])
            .map(|c| {
                let a = (gas.gamma * gas.r * fields.t[c]).sqrt();
                (0..g.dim()).map(|d| (fields.u[d][c].abs() + a) / g.width(c, d)).sum::<f64>()
            })
            .reduce(|| 0.0, f64::max)
    }

    pub fn time_step(&self, fields: &FieldSet) -> f64 {
        match self.config.dt {
            DtPolicy::Fixed { dt } => dt,
            DtPolicy::Cfl { max_cfl, dt_max } => (max_cfl / self.acoustic_rate(fields)).min(dt_max),
        }
    }

    /// Σ V·(ρ, ρu, ρv, ρw, ρe_t) over active cells.
    pub fn totals(&self, st: &CompressibleState) -> [f64; 5] {
        let g = self.grid;
        let mut out = [0.0; 5];
        for c in (0..g.n_cells()).filter(|&c| !self.frozen[c]) {
            let v = g.volume(c);
            out[0] += st.fields.rho[c] * v;
            for d in 0..g.dim() {
                out[1 + d] += st.fields.rho[c] * st.fields.u[d][c] * v;
            }
            out[4] += st.rho_e[c] * v;
        }
        out
    }

    fn primitive(&self, f: &FieldSet, c: usize) -> Primitive {
        Primitive { rho: f.rho[c], u: f.velocity(c), p: f.rho[c] * self.config.gas.r * f.t[c] }
    }

    /// Gauss gradient with frozen neighbors treated as zero-gradient.
    fn cell_gradient(&self, phi: &[f64], bc: &[FaceBc; 6], axis: usize) -> Vec<f64> {
        let g = self.grid;
        let nb = g.neighbor_table();
        (0..g.n_cells())
            .into_par_iter()
            .map(|c| {
                if self.frozen[c] {
                    return 0.0;
                }
                let mut fv = [0.0; 2];
                for (s, out) in fv.iter_mut().enumerate() {
                    let k = 2 * axis + s;
                    let n = nb[c][k];
                    *out = if n == NO_NEIGHBOR {
                        match bc[k] {
                            FaceBc::Dirichlet(v) => v,
                            FaceBc::ZeroGradient => phi[c],
                        }
                    } else if self.frozen[n] {
                        phi[c]
                    } else {
                        let (lo, i) = if s == 1 { (c, g.multi(c)[axis]) } else { (n, g.multi(n)[axis]) };
                        let w = g.face_weight(axis, i);
                        let hi = if s == 1 { n } else { c };
                        w * phi[lo] + (1.0 - w) * phi[hi]
                    };
                }
                (fv[1] - fv[0]) / g.width(c, axis)
            })
            .collect()
    }

    fn scalar_bc(&self, value: f64) -> [FaceBc; 6] {
        self.bc.inflow_scalar(value)
    }

    /// Limited left/right values at the face between `lo` and `hi` on `axis`.
    fn reconstruct(&self, phi: &[f64], grad: &[f64], lo: usize, hi: usize, axis: usize) -> (f64, f64) {
        let delta = phi[hi] - phi[lo];
        if delta == 0.0 {
            return (phi[lo], phi[hi]);
        }
        let i = self.grid.multi(lo)[axis];
        let lam = self.grid.face_weight(axis, i);
        let d = self.grid.center_gap(axis, i);
        let rl = 2.0 * d * grad[lo] / delta - 1.0;
        let rr = 2.0 * d * grad[hi] / delta - 1.0;
        (phi[lo] + van_leer(rl) * (1.0 - lam) * delta, phi[hi] - van_leer(rr) * lam * delta)
    }

    /// Exterior state for a domain-side face `k` of cell `c`.
    fn boundary_state(&self, q: &Primitive, k: usize) -> Primitive {
        let axis = k / 2;
        let fs = self.config.free_stream;
        let gas = self.config.gas;
        match self.bc.side(k) {
            SideBc::Inlet { velocity } => Primitive { rho: fs.rho, u: velocity, p: fs.pressure(&gas) },
            SideBc::Outlet { pressure } => Primitive { p: pressure, ..*q },
            SideBc::Slip => mirror(q, axis),
            SideBc::NoSlip => Primitive { u: [-q.u[0], -q.u[1], -q.u[2]], ..*q },
            SideBc::ZeroGradient | SideBc::Periodic => *q,
        }
    }

    /// Outward convective flux times area for every face of every cell.
    fn convective_fluxes(&self, f: &FieldSet) -> Result<FaceFlux5, SolverError> {
        let g = self.grid;
        let dim = g.dim();
        let gas = self.config.gas;
        let fs = self.config.free_stream;
        let nb = g.neighbor_table();

        let rho_bc = self.scalar_bc(fs.rho);
        let t_bc = self.scalar_bc(fs.t);
        let grad = |phi: &[f64], bc: &[FaceBc; 6]| -> Vec<Vec<f64>> {
            (0..dim).map(|a| self.cell_gradient(phi, bc, a)).collect()
        };
        let g_rho = grad(&f.rho, &rho_bc);
        let g_t = grad(&f.t, &t_bc);
        let g_u: Vec<Vec<Vec<f64>>> = (0..dim).map(|d| grad(&f.u[d], &self.bc.velocity(d))).collect();

        let face_states = |lo: usize, hi: usize, a: usize| -> (Primitive, Primitive) {
            let (rl, rr) = self.reconstruct(&f.rho, &g_rho[a], lo, hi, a);
            let (tl, tr) = self.reconstruct(&f.t, &g_t[a], lo, hi, a);
            let mut ul = [0.0; 3];
            let mut ur = [0.0; 3];
            for d in 0..dim {
                let (l, r) = self.reconstruct(&f.u[d], &g_u[d][a], lo, hi, a);
                ul[d] = l;
                ur[d] = r;
            }
            (
                Primitive { rho: rl, u: ul, p: rl * gas.r * tl },
                Primitive { rho: rr, u: ur, p: rr * gas.r * tr },
            )
        };

        (0..g.n_cells())
            .into_par_iter()
            .map(|c| -> Result<[[f64; 5]; 6], SolverError> {
                let mut out = [[0.0; 5]; 6];
                if self.frozen[c] {
                    return Ok(out);
                }
                for a in 0..dim {
                    let area = g.face_area(c, a);
                    for s in 0..2 {
                        let k = 2 * a + s;
                        let n = nb[c][k];
                        let mut normal = [0.0; 3];
                        normal[a] = 1.0;
                        let q = self.primitive(f, c);
                        let (flux, sign) = if n == NO_NEIGHBOR {
                            normal[a] = if s == 1 { 1.0 } else { -1.0 };
                            (kt_flux(&q, &self.boundary_state(&q, k), &normal, &gas)?, 1.0)
                        } else if self.frozen[n] {
                            normal[a] = if s == 1 { 1.0 } else { -1.0 };
                            (kt_flux(&q, &mirror(&q, a), &normal, &gas)?, 1.0)
                        } else {
                            // evaluated low→high so both owners see identical bits
                            let (lo, hi) = if s == 1 { (c, n) } else { (n, c) };
                            let (l, r) = face_states(lo, hi, a);
                            (kt_flux(&l, &r, &normal, &gas)?, if s == 1 { 1.0 } else { -1.0 })
                        };
                        for m in 0..5 {
                            out[k][m] = sign * flux[m] * area;
                        }
                    }
                }
                Ok(out)
            })
            .collect()
    }

    /// Gradient tensor `[i][j] = ∂u_i/∂x_j`.
    fn velocity_gradient(&self, u: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
        let dim = self.grid.dim();
        (0..dim)
            .map(|i| {
                let bc = self.bc.velocity(i);
                (0..dim).map(|j| self.cell_gradient(&u[i], &bc, j)).collect()
            })
            .collect()
    }

    fn face_mu(&self, mu: &[f64], c: usize, n: usize) -> f64 {
        0.5 * (mu[c] + mu[n])
    }

    /// Implicit diffusion with time coefficient `rho·V/dt`; frozen rows are
    /// identities holding `phi_star`.
    #[allow(clippy::too_many_arguments)]
    fn diffusion_system(
        &self,
        rho: &[f64],
        gamma: &[f64],
        bc: &[FaceBc; 6],
        phi_star: &[f64],
        source: &[f64],
        dt: f64,
    ) -> SparseSystem {
        let g = self.grid;
        let dim = g.dim();
        let nb = g.neighbor_table();
        let mut sys = SparseSystem::new(g);
        sys.diag
            .par_iter_mut()
            .zip(sys.off.par_iter_mut())
            .zip(sys.rhs.par_iter_mut())
            .enumerate()
            .for_each(|(c, ((diag, off), rhs))| {
                if self.frozen[c] {
                    *diag = 1.0;
                    *rhs = phi_star[c];
                    return;
                }
                let v = g.volume(c);
                *diag = rho[c] * v / dt;
                *rhs = rho[c] * v / dt * phi_star[c] + source[c];
                for a in 0..dim {
                    let area = g.face_area(c, a);
                    for s in 0..2 {
                        let k = 2 * a + s;
                        let n = nb[c][k];
                        if n == NO_NEIGHBOR {
                            if let FaceBc::Dirichlet(val) = bc[k] {
                                let coef = gamma[c] * area / (0.5 * g.width(c, a));
                                *diag += coef;
                                *rhs += coef * val;
                            }
                        } else if !self.frozen[n] {
                            let i = if s == 1 { g.multi(c)[a] } else { g.multi(n)[a] };
                            let coef = self.face_mu(gamma, c, n) * area / g.center_gap(a, i);
                            *diag += coef;
                            off[k] = -coef;
                        }
                    }
                }
            });
        sys
    }

    /// Explicit part of the viscous stress divergence,
    /// ∇·(μ[(∇u)ᵀ − ⅔(∇·u)I]), integrated over each cell.
    fn explicit_stress(&self, mu: &[f64], grad: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
        let g = self.grid;
        let dim = g.dim();
        let nb = g.neighbor_table();
        let div = |c: usize| (0..dim).map(|i| grad[i][i][c]).sum::<f64>();
        let per_cell: Vec<[f64; 3]> = (0..g.n_cells())
            .into_par_iter()
            .map(|c| {
                let mut acc = [0.0; 3];
                if self.frozen[c] {
                    return acc;
                }
                for a in 0..dim {
                    let area = g.face_area(c, a);
                    for s in 0..2 {
                        let k = 2 * a + s;
                        let n = nb[c][k];
                        let sign = if s == 1 { 1.0 } else { -1.0 };
                        let (w, other, m) = if n == NO_NEIGHBOR {
                            (1.0, c, mu[c])
                        } else if self.frozen[n] {
                            continue;
                        } else {
                            let i = if s == 1 { g.multi(c)[a] } else { g.multi(n)[a] };
                            let lw = g.face_weight(a, i);
                            (if s == 1 { lw } else { 1.0 - lw }, n, self.face_mu(mu, c, n))
                        };
                        let dv = w * div(c) + (1.0 - w) * div(other);
                        for d in 0..dim {
                            let gad = w * grad[a][d][c] + (1.0 - w) * grad[a][d][other];
                            let iso = if a == d { 2.0 / 3.0 * dv } else { 0.0 };
                            acc[d] += sign * m * (gad - iso) * area;
                        }
                    }
                }
                acc
            })
            .collect();
        (0..dim).map(|d| per_cell.iter().map(|v| v[d]).collect()).collect()
    }

    /// Rate of work of the viscous stress, Σ_f (τ·n)·u_f A, per cell.
    fn viscous_work(&self, mu: &[f64], u: &[Vec<f64>], grad: &[Vec<Vec<f64>>]) -> Vec<f64> {
        let g = self.grid;
        let dim = g.dim();
        let nb = g.neighbor_table();
        let vbc: Vec<[FaceBc; 6]> = (0..dim).map(|d| self.bc.velocity(d)).collect();
        let div = |c: usize| (0..dim).map(|i| grad[i][i][c]).sum::<f64>();
        (0..g.n_cells())
            .into_par_iter()
            .map(|c| {
                if self.frozen[c] {
                    return 0.0;
                }
                let mut acc = 0.0;
                for a in 0..dim {
                    let area = g.face_area(c, a);
                    for s in 0..2 {
                        let k = 2 * a + s;
                        let n = nb[c][k];
                        let sign = if s == 1 { 1.0 } else { -1.0 };
                        let mut uf = [0.0; 3];
                        let mut dn = [0.0; 3];
                        let (w, other, m) = if n == NO_NEIGHBOR {
                            for d in 0..dim {
                                match vbc[d][k] {
                                    FaceBc::Dirichlet(v) => {
                                        uf[d] = v;
                                        dn[d] = sign * (v - u[d][c]) / (0.5 * g.width(c, a));
                                    }
                                    FaceBc::ZeroGradient => uf[d] = u[d][c],
                                }
                            }
                            (1.0, c, mu[c])
                        } else if self.frozen[n] {
                            continue;
                        } else {
                            let i = if s == 1 { g.multi(c)[a] } else { g.multi(n)[a] };
                            let lw = g.face_weight(a, i);
                            let w = if s == 1 { lw } else { 1.0 - lw };
                            for d in 0..dim {
                                uf[d] = w * u[d][c] + (1.0 - w) * u[d][n];
                                dn[d] = sign * (u[d][n] - u[d][c]) / g.center_gap(a, i);
                            }
                            (w, n, self.face_mu(mu, c, n))
                        };
                        let dv = w * div(c) + (1.0 - w) * div(other);
                        for d in 0..dim {
                            // τ_{da} = μ(∂u_d/∂x_a + ∂u_a/∂x_d − ⅔ δ_ad ∇·u)
                            let transpose = w * grad[a][d][c] + (1.0 - w) * grad[a][d][other];
                            let iso = if a == d { 2.0 / 3.0 * dv } else { 0.0 };
                            acc += sign * m * (dn[d] + transpose - iso) * uf[d] * area;
                        }
                    }
                }
                acc
            })
            .collect()
    }

    /// Implicit viscous velocity update; returns u^{n+1} and iteration counts.
    fn viscous_velocity(
        &self,
        rho: &[f64],
        u_star: &[Vec<f64>],
        f_u: &[Vec<f64>],
        mu: &[f64],
        dt: f64,
    ) -> Result<(Vec<Vec<f64>>, Vec<usize>), SolverError> {
        let g = self.grid;
        let dim = g.dim();
        if self.config.viscosity.is_inviscid() {
            let u = (0..dim)
                .map(|d| (0..g.n_cells()).map(|c| if self.frozen[c] { 0.0 } else { u_star[d][c] + dt * f_u[d][c] }).collect())
                .collect();
            return Ok((u, vec![0; dim]));
        }
        let grad = self.velocity_gradient(u_star);
        let explicit = self.explicit_stress(mu, &grad);
        let tol = Tolerance {
            abs_tol: self.config.transport_tol * self.config.u_ref,
            rel_tol: 0.0,
            max_iter: self.config.max_linear_iters,
        };
        let mut out = Vec::with_capacity(dim);
        let mut iters = Vec::with_capacity(dim);
        for d in 0..dim {
            let source: Vec<f64> =
                (0..g.n_cells()).map(|c| explicit[d][c] + rho[c] * f_u[d][c] * g.volume(c)).collect();
            let sys = self.diffusion_system(rho, mu, &self.bc.velocity(d), &u_star[d], &source, dt);
            let (x, it) = self.solve_conservative(&sys, &u_star[d], &tol, rho, dt)?;
            iters.push(it);
            out.push(x);
        }
        Ok((out, iters))
    }

    /// Implicit thermal update of e_s with the temperature forcing.
    fn thermal(
        &self,
        rho: &[f64],
        e_star: &[f64],
        f_t: &[f64],
        mu: &[f64],
        dt: f64,
    ) -> Result<(Vec<f64>, usize), SolverError> {
        let g = self.grid;
        let cv = self.config.gas.cv();
        if self.config.viscosity.is_inviscid() {
            return Ok(((0..g.n_cells()).map(|c| e_star[c] + dt * cv * f_t[c]).collect(), 0));
        }
        let kappa: Vec<f64> = mu.iter().map(|m| self.config.energy_diffusivity(*m)).collect();
        let source: Vec<f64> = (0..g.n_cells()).map(|c| rho[c] * cv * f_t[c] * g.volume(c)).collect();
        let bc = self.scalar_bc(cv * self.config.free_stream.t);
        let sys = self.diffusion_system(rho, &kappa, &bc, e_star, &source, dt);
        let tol = Tolerance {
            abs_tol: self.config.transport_tol * cv * self.config.free_stream.t,
            rel_tol: 0.0,
            max_iter: self.config.max_linear_iters,
        };
        self.solve_conservative(&sys, e_star, &tol, rho, dt)
    }

    /// Solve a diffusion system, then apply the fluxes of the iterate in
    /// conservative form, x + r/(ρV/dt), so totals hold to round-off
    /// whatever the solver tolerance.
    fn solve_conservative(
        &self,
        sys: &SparseSystem,
        guess: &[f64],
        tol: &Tolerance,
        rho: &[f64],
        dt: f64,
    ) -> Result<(Vec<f64>, usize), SolverError> {
        let g = self.grid;
        let mut x = guess.to_vec();
        let norm = ResidualNorm::WeightedMax(sys.diag.iter().map(|v| 1.0 / v).collect());
        let rep = solve_spd(sys, &mut x, tol, &norm, &Jacobi::new(sys), false)?;
        let mut r = vec![0.0; x.len()];
        sys.residual(&x, &mut r);
        for c in (0..x.len()).filter(|&c| !self.frozen[c]) {
            x[c] += r[c] * dt / (rho[c] * g.volume(c));
        }
        Ok((x, rep.iterations))
    }

    fn check_positive(&self, q: &[f64], what: &'static str, step: u64) -> Result<(), SolverError> {
        match (0..q.len()).find(|&c| !self.frozen[c] && !(q[c] > 0.0)) {
            Some(cell) => Err(SolverError::Positivity { quantity: what, cell, value: q[cell], step }),
            None => Ok(()),
        }
    }

    /// Advance one time step.
    pub fn advance(&self, st: &mut CompressibleState) -> Result<StepReport, SolverError> {
        self.advance_capped(st, f64::INFINITY)
    }

    /// Advance one step no longer than `dt_cap` (to land on output times).
    pub fn advance_capped(&self, st: &mut CompressibleState, dt_cap: f64) -> Result<StepReport, SolverError> {
        let g = self.grid;
        let dim = g.dim();
        let n = g.n_cells();
        let cfg = &self.config;
        let gas = cfg.gas;
        let cv = gas.cv();
        let step = st.step + 1;
        let mut report = StepReport::default();

        let dt = self.time_step(&st.fields).min(dt_cap);
        let courant = self.acoustic_courant(&st.fields, dt);
        let limit = match cfg.dt {
            DtPolicy::Cfl { max_cfl, .. } => max_cfl,
            DtPolicy::Fixed { .. } => ACOUSTIC_CFL_LIMIT,
        };
        if !(courant <= limit * (1.0 + 1e-9)) {
            return Err(SolverError::Cfl { dt, courant, limit });
        }
        report.dt = dt;
        report.courant = courant;

        if !self.ib.links.is_empty() {
            apply_forcings(
                &self.ib.links,
                &mut st.fields,
                &mut st.observer,
                &self.observer,
                cfg.thermal,
                ForcedEquations::Compressible,
            )?;
            report.observer_max_e = st.observer.max_discrepancy().iter().map(|e| e.1).collect();
            report.observer_median_e = st.observer.median_discrepancy().iter().map(|e| e.1).collect();
        }
        let f = &st.fields;

        // 1-2: explicit mass and inviscid momentum
        let flux = self.convective_fluxes(f)?;
        let net: Vec<[f64; 5]> = flux
            .par_iter()
            .map(|fc| {
                let mut s = [0.0; 5];
                for face in &fc[..2 * dim] {
                    for m in 0..5 {
                        s[m] += face[m];
                    }
                }
                s
            })
            .collect();
        let mut rho_new = f.rho.clone();
        let mut mom_star: Vec<Vec<f64>> = (0..dim).map(|d| (0..n).map(|c| f.rho[c] * f.u[d][c]).collect()).collect();
        let mut rho_e = st.rho_e.clone();
        for c in (0..n).filter(|&c| !self.frozen[c]) {
            let k = dt / g.volume(c);
            rho_new[c] = f.rho[c] - k * net[c][0] + dt * f.f_rho[c];
            for d in 0..dim {
                mom_star[d][c] -= k * net[c][1 + d];
            }
            rho_e[c] -= k * net[c][4];
        }
        self.check_positive(&rho_new, "density", step)?;
        report.mass_source_rate =
            (0..n).filter(|&c| !self.frozen[c]).map(|c| f.f_rho[c] * g.volume(c)).sum::<f64>();
        let nb = g.neighbor_table();
        report.inflow_rate = -(0..n)
            .map(|c| (0..2 * dim).filter(|&k| nb[c][k] == NO_NEIGHBOR).map(|k| flux[c][k][0]).sum::<f64>())
            .sum::<f64>();

        // 3: implicit viscous velocity
        let mu: Vec<f64> = f.t.iter().map(|t| cfg.viscosity.mu(*t)).collect();
        let u_star: Vec<Vec<f64>> =
            (0..dim).map(|d| (0..n).map(|c| if self.frozen[c] { 0.0 } else { mom_star[d][c] / rho_new[c] }).collect()).collect();
        let (u_new, viters) = self.viscous_velocity(&rho_new, &u_star, &f.f_u, &mu, dt)?;
        report.viscous_iters = viters;

        // 4: energy with viscous work at the new velocity
        if !cfg.viscosity.is_inviscid() {
            let grad = self.velocity_gradient(&u_new);
            let work = self.viscous_work(&mu, &u_new, &grad);
            for c in (0..n).filter(|&c| !self.frozen[c]) {
                rho_e[c] += dt / g.volume(c) * work[c];
            }
        }
        let e_star: Vec<f64> = (0..n)
            .map(|c| {
                if self.frozen[c] {
                    return cv * cfg.free_stream.t;
                }
                let ke: f64 = (0..dim).map(|d| u_new[d][c] * u_new[d][c]).sum::<f64>() * 0.5;
                rho_e[c] / rho_new[c] - ke
            })
            .collect();

        // 5: implicit thermal step, then perfect-gas synchronization
        let (e_new, titers) = self.thermal(&rho_new, &e_star, &f.f_t, &mu, dt)?;
        report.thermal_iters = titers;
        self.check_positive(&e_new, "temperature", step)?;

        let f = &mut st.fields;
        f.rho = rho_new;
        f.u = u_new;
        f.t = e_new.iter().map(|e| e / cv).collect();
        self.synchronize(f, &mut st.rho_e);
        st.mass_source += dt * report.mass_source_rate;
        st.mass_inflow += dt * report.inflow_rate;
        st.step = step;
        st.time += dt;
        Ok(report)
    }
}

/// Reflection of the normal velocity component across a face on `axis`.
#[inline]
fn mirror(q: &Primitive, axis: usize) -> Primitive {
    let mut m = *q;
    m.u[axis] = -m.u[axis];
    m
}
