//! PISO solver for incompressible flow on a collocated grid.
//!
//! Each step: observer update from the state at `n`, implicit momentum
//! predictor with the old pressure gradient, then pressure-correction sweeps
//! with momentum-interpolated face fluxes. Time derivative is BDF1 or
//! variable-step BDF2; the convecting flux is extrapolated to `n+1` for BDF2.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{DomainBc, SideBc};
use crate::error::SolverError;
use crate::fvm::{
    assemble_convection_diffusion, assemble_time_derivative, bdf_coefficients, gradient, solve_general, solve_spd, ConvectionScheme,
    FaceFlux, FastDiagonalization, Jacobi, Preconditioner, ResidualNorm, SparseSystem, Tolerance,
};
use crate::geometry::ImmersedBoundary;
use crate::grid::{CellKind, FieldSet, RectilinearGrid, NO_NEIGHBOR};
use crate::observer::{apply_forcings, ForcedEquations, ObserverConfig, ObserverState, ThermalWall};

/// Largest admissible convective Courant number.
pub const MAX_CFL: f64 = 0.9;
/// Velocity magnitude, in units of `u_ref`, treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtPolicy {
    Fixed { dt: f64 },
    /// dt = max_cfl / max_c Σ_d |u_d|/h_d, capped at `dt_max`.
    Cfl { max_cfl: f64, dt_max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PisoConfig {
    pub nu: f64,
    pub rho: f64,
    /// Upper bound on pressure-correction sweeps; at least 2 are always run.
    pub n_correctors: usize,
    pub dt: DtPolicy,
    pub scheme: ConvectionScheme,
    /// 1 (backward Euler) or 2 (BDF2).
    pub time_order: usize,
    /// Further sweeps are skipped once max|Δp| ≤ correction_tol·ρU².
    pub correction_tol: f64,
    /// Per-cell continuity bound for the pressure solve, in units of U/L.
    pub pressure_tol: f64,
    /// Momentum residual bound per cell, in units of U.
    pub momentum_tol: f64,
    pub u_ref: f64,
    pub l_ref: f64,
    /// Uniform body acceleration.
    pub body_force: [f64; 3],
    pub max_linear_iters: usize,
}

impl Default for PisoConfig {
    fn default() -> Self {
        PisoConfig {
            nu: 1e-3,
            rho: 1.0,
            n_correctors: 2,
            dt: DtPolicy::Cfl { max_cfl: 0.5, dt_max: f64::INFINITY },
            scheme: ConvectionScheme::LimitedLinear,
            time_order: 2,
            correction_tol: 1e-6,
            pressure_tol: 1e-9,
            momentum_tol: 1e-7,
            u_ref: 1.0,
            l_ref: 1.0,
            body_force: [0.0; 3],
            max_linear_iters: 2000,
        }
    }
}

impl PisoConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let mut bad = Vec::new();
        if !(self.nu >= 0.0) {
            bad.push(format!("nu = {} must be nonnegative", self.nu));
        }
        if !(self.rho > 0.0) {
            bad.push(format!("rho = {} must be positive", self.rho));
        }
        if self.n_correctors < 2 {
            bad.push(format!("n_correctors = {} must be at least 2", self.n_correctors));
        }
        match self.dt {
            DtPolicy::Fixed { dt } if !(dt > 0.0) => bad.push(format!("fixed dt = {dt} must be positive")),
            DtPolicy::Cfl { max_cfl, dt_max } if !(max_cfl > 0.0 && max_cfl <= MAX_CFL) || !(dt_max > 0.0) => {
                bad.push(format!("max_cfl = {max_cfl} must lie in (0, {MAX_CFL}] and dt_max > 0"))
            }
            _ => {}
        }
        if !(1..=2).contains(&self.time_order) {
            bad.push(format!("time_order = {} must be 1 or 2", self.time_order));
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
}

/// Solution state carried between steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncompressibleState {
    pub fields: FieldSet,
    /// Velocity at the previous time level (BDF2 history).
    pub u_old: Vec<Vec<f64>>,
    pub flux: FaceFlux,
    pub flux_old: FaceFlux,
    pub dt_prev: Option<f64>,
    pub step: u64,
    pub time: f64,
    pub observer: ObserverState,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    pub time_order: usize,
    pub momentum_iters: Vec<usize>,
    pub pressure_iters: Vec<usize>,
    pub correctors: usize,
    /// max over FLUID cells of |Σ F|/V.
    pub max_divergence: f64,
    pub max_u: f64,
    pub observer_max_e: Vec<f64>,
    pub observer_median_e: Vec<f64>,
}

struct ScaledPreconditioner<'a> {
    inner: &'a FastDiagonalization,
    inv_scale: f64,
}

impl Preconditioner for ScaledPreconditioner<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.inner.apply(r, z);
        z.par_iter_mut().for_each(|v| *v *= self.inv_scale);
    }
}

pub struct PisoSolver<'g> {
    pub grid: &'g RectilinearGrid,
    pub ib: ImmersedBoundary,
    pub bc: DomainBc,
    pub config: PisoConfig,
    pub observer: ObserverConfig,
    laplace: FastDiagonalization,
    inv_volume: Vec<f64>,
}

impl<'g> PisoSolver<'g> {
    pub fn new(
        grid: &'g RectilinearGrid,
        ib: ImmersedBoundary,
        bc: DomainBc,
        config: PisoConfig,
        observer: ObserverConfig,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        bc.validate(grid)?;
        let laplace = FastDiagonalization::new(grid, &bc.pressure_ends(grid.dim()), 1.0);
        let inv_volume = grid.volumes().iter().map(|v| 1.0 / v).collect();
        Ok(PisoSolver { grid, ib, bc, config, observer, laplace, inv_volume })
    }

    /// Uniform pressure and the given velocity; fluxes interpolated from it.
    pub fn initial_state(&self, velocity: [f64; 3], pressure: f64) -> IncompressibleState {
        let mut fields = FieldSet::zeros(self.grid);
        for d in 0..self.grid.dim() {
            fields.u[d].iter_mut().for_each(|v| *v = velocity[d]);
        }
        fields.p.iter_mut().for_each(|v| *v = pressure);
        fields.rho.iter_mut().for_each(|v| *v = self.config.rho);
        self.state_from_fields(fields)
    }

    pub fn state_from_fields(&self, fields: FieldSet) -> IncompressibleState {
        let flux = self.interpolated_flux(&fields.u);
        IncompressibleState {
            u_old: fields.u.clone(),
            flux_old: flux.clone(),
            flux,
            fields,
            dt_prev: None,
            step: 0,
            time: 0.0,
            observer: ObserverState::new(self.ib.n_ghosts(), self.grid.dim(), ForcedEquations::Incompressible),
        }
    }

    /// Face fluxes from linear interpolation of a cell velocity field.
    pub fn interpolated_flux(&self, u: &[Vec<f64>]) -> FaceFlux {
        let zero = vec![1.0; self.grid.n_cells()];
        let p = vec![0.0; self.grid.n_cells()];
        self.face_fluxes(u, &zero, &p, false)
    }

    /// Time step from the policy and the current velocity.
    pub fn time_step(&self, fields: &FieldSet) -> f64 {
        match self.config.dt {
            DtPolicy::Fixed { dt } => dt,
            DtPolicy::Cfl { max_cfl, dt_max } => {
                let g = self.grid;
                let rate = (0..g.n_cells())
                    .into_par_iter()
                    .map(|c| (0..g.dim()).map(|d| fields.u[d][c].abs() / g.width(c, d)).sum::<f64>())
                    .reduce(|| 0.0, f64::max);
                // at rest, fall back to the reference speed
                let rate = rate.max(self.config.u_ref * 1e-3 / g.widths(0).iter().fold(f64::INFINITY, |a, b| a.min(*b)));
                (max_cfl / rate).min(dt_max)
            }
        }
    }

    /// Convective Courant number of `dt` on the current velocity field.
    pub fn courant(&self, fields: &FieldSet, dt: f64) -> f64 {
        let g = self.grid;
        (0..g.n_cells())
            .into_par_iter()
            .map(|c| dt * (0..g.dim()).map(|d| fields.u[d][c].abs() / g.width(c, d)).sum::<f64>())
            .reduce(|| 0.0, f64::max)
    }

    /// Momentum matrices (without pressure gradient) for all components.
    fn momentum_systems(
        &self,
        st: &IncompressibleState,
        conv: &FaceFlux,
        dt: f64,
        order: usize,
    ) -> Result<(Vec<SparseSystem>, usize), SolverError> {
        let g = self.grid;
        let mut used = 1;
        let mut out = Vec::with_capacity(g.dim());
        for d in 0..g.dim() {
            let mut sys = SparseSystem::new(g);
            used = assemble_time_derivative(
                g,
                &mut sys,
                &st.fields.u[d],
                if order == 2 { Some(&st.u_old[d]) } else { None },
                dt,
                st.dt_prev,
                order,
                None,
            )?;
            let vbc = self.bc.velocity(d);
            assemble_convection_diffusion(g, &mut sys, conv, self.config.nu, self.config.scheme, &vbc, &st.fields.u[d])?;
            let force = self.config.body_force[d];
            let f_u = &st.fields.f_u[d];
            sys.rhs.par_iter_mut().enumerate().for_each(|(c, r)| *r += (force + f_u[c]) * g.volume(c));
            out.push(sys);
        }
        Ok((out, used))
    }

    /// Outward face fluxes from cell vectors `h` (HbyA) with pressure coupling
    /// `rau` (V/a_P per component, indexed `[axis][cell]` through `rau_of`).
    fn face_fluxes(&self, h: &[Vec<f64>], rau: &[f64], p: &[f64], couple: bool) -> FaceFlux {
        let rau_axis = |_: usize| rau;
        self.face_fluxes_axes(h, &rau_axis, p, couple)
    }

    fn face_fluxes_axes<'a>(
        &self,
        h: &[Vec<f64>],
        rau: &(dyn Fn(usize) -> &'a [f64] + Sync),
        p: &[f64],
        couple: bool,
    ) -> FaceFlux {
        let g = self.grid;
        let dim = g.dim();
        let nb = g.neighbor_table();
        let rho = self.config.rho;
        let pbc = self.bc.pressure();
        let hi_flux = |lo: usize, hi: usize, a: usize| -> f64 {
            let (wl, wh) = (g.width(lo, a), g.width(hi, a));
            let lam = wh / (wl + wh);
            let area = g.face_area(lo, a);
            let hf = lam * h[a][lo] + (1.0 - lam) * h[a][hi];
            let mut f = hf * area;
            if couple {
                let r = rau(a);
                let rf = lam * r[lo] + (1.0 - lam) * r[hi];
                f -= rf * area / (rho * 0.5 * (wl + wh)) * (p[hi] - p[lo]);
            }
            f
        };
        (0..g.n_cells())
            .into_par_iter()
            .map(|c| {
                let mut out = [0.0; 6];
                for a in 0..dim {
                    for s in 0..2 {
                        let k = 2 * a + s;
                        let n = nb[c][k];
                        out[k] = if n != NO_NEIGHBOR {
                            if s == 1 {
                                hi_flux(c, n, a)
                            } else {
                                -hi_flux(n, c, a)
                            }
                        } else {
                            let sign = if s == 1 { 1.0 } else { -1.0 };
                            let area = g.face_area(c, a);
                            match self.bc.side(k) {
                                SideBc::Inlet { velocity } => sign * velocity[a] * area,
                                SideBc::Slip | SideBc::NoSlip | SideBc::Periodic => 0.0,
                                SideBc::ZeroGradient => sign * h[a][c] * area,
                                SideBc::Outlet { .. } => {
                                    let mut f = sign * h[a][c] * area;
                                    if couple {
                                        if let crate::fvm::FaceBc::Dirichlet(pb) = pbc[k] {
                                            let db = rau(a)[c] * area / (rho * 0.5 * g.width(c, a));
                                            f -= db * (pb - p[c]);
                                        }
                                    }
                                    f
                                }
                            }
                        };
                    }
                }
                out
            })
            .collect()
    }

    /// Time-consistency term added to the interpolated HbyA flux on interior
    /// faces: rAU_f/dt · Σ_k (-a_k)(F^k - interp(u^k)·S) over the history
    /// levels, scaled per face by 1 - min(|D|/|F^n|, 1). Without it the face
    /// flux forgets F^n and the splitting error scales like h²/dt.
    fn ddt_flux_correction(&self, st: &IncompressibleState, rau: &[Vec<f64>], dt: f64, order: usize) -> FaceFlux {
        let g = self.grid;
        let dim = g.dim();
        let nb = g.neighbor_table();
        let (_, a1, a2) = bdf_coefficients(order, dt, st.dt_prev.unwrap_or(dt));
        let interp_n = self.interpolated_flux(&st.fields.u);
        let interp_nm1 = if order == 2 { Some(self.interpolated_flux(&st.u_old)) } else { None };
        (0..g.n_cells())
            .into_par_iter()
            .map(|c| {
                let mut out = [0.0; 6];
                for a in 0..dim {
                    for s in 0..2 {
                        let k = 2 * a + s;
                        let nbr = nb[c][k];
                        if nbr == NO_NEIGHBOR {
                            continue;
                        }
                        let (lo, hi) = if s == 1 { (c, nbr) } else { (nbr, c) };
                        let (wl, wh) = (g.width(lo, a), g.width(hi, a));
                        let lam = wh / (wl + wh);
                        let rf = lam * rau[a][lo] + (1.0 - lam) * rau[a][hi];
                        let d0 = st.flux[c][k] - interp_n[c][k];
                        let coupling = 1.0 - (d0.abs() / (st.flux[c][k].abs() + f64::MIN_POSITIVE)).min(1.0);
                        let mut hist = -a1 * d0;
                        if let Some(im) = &interp_nm1 {
                            hist -= a2 * (st.flux_old[c][k] - im[c][k]);
                        }
                        out[k] = coupling * rf * hist / dt;
                    }
                }
                out
            })
            .collect()
    }

    /// Pressure system Σ D_f (p_P - p_N) = -Σ F^H.
    fn pressure_system(&self, flux_h: &FaceFlux, rau: &[Vec<f64>]) -> SparseSystem {
        let g = self.grid;
        let dim = g.dim();
        let nb = g.neighbor_table();
        let rho = self.config.rho;
        let pbc = self.bc.pressure();
        let mut sys = SparseSystem::new(g);
        sys.diag
            .par_iter_mut()
            .zip(sys.off.par_iter_mut())
            .zip(sys.rhs.par_iter_mut())
            .enumerate()
            .for_each(|(c, ((diag, off), rhs))| {
                for a in 0..dim {
                    let area = g.face_area(c, a);
                    for s in 0..2 {
                        let k = 2 * a + s;
                        *rhs -= flux_h[c][k];
                        let n = nb[c][k];
                        if n != NO_NEIGHBOR {
                            let (lo, hi) = if s == 1 { (c, n) } else { (n, c) };
                            let (wl, wh) = (g.width(lo, a), g.width(hi, a));
                            let lam = wh / (wl + wh);
                            let rf = lam * rau[a][lo] + (1.0 - lam) * rau[a][hi];
                            let dcoef = rf * area / (rho * 0.5 * (wl + wh));
                            *diag += dcoef;
                            off[k] = -dcoef;
                        } else if let crate::fvm::FaceBc::Dirichlet(pb) = pbc[k] {
                            let db = rau[a][c] * area / (rho * 0.5 * g.width(c, a));
                            *diag += db;
                            *rhs += db * pb;
                        }
                    }
                }
            });
        sys
    }

    /// Advance one time step.
    pub fn advance(&self, st: &mut IncompressibleState) -> Result<StepReport, SolverError> {
        let g = self.grid;
        let dim = g.dim();
        let n = g.n_cells();
        let cfg = &self.config;
        let mut report = StepReport::default();

        let dt = self.time_step(&st.fields);
        report.dt = dt;
        if let DtPolicy::Cfl { max_cfl, .. } = cfg.dt {
            let co = self.courant(&st.fields, dt);
            if co > max_cfl * (1.0 + 1e-9) {
                return Err(SolverError::Cfl { dt, courant: co, limit: max_cfl });
            }
        }

        // forcing frozen for the whole step, from the state at n
        if !self.ib.links.is_empty() {
            apply_forcings(
                &self.ib.links,
                &mut st.fields,
                &mut st.observer,
                &self.observer,
                ThermalWall::Adiabatic,
                ForcedEquations::Incompressible,
            )?;
            report.observer_max_e = st.observer.max_discrepancy().iter().map(|e| e.1).collect();
            report.observer_median_e = st.observer.median_discrepancy().iter().map(|e| e.1).collect();
        }

        let order = if cfg.time_order == 2 && st.dt_prev.is_some() { 2 } else { 1 };
        let conv: FaceFlux = if order == 2 {
            let w = dt / st.dt_prev.unwrap();
            st.flux
                .par_iter()
                .zip(st.flux_old.par_iter())
                .map(|(f, fo)| {
                    let mut o = [0.0; 6];
                    for k in 0..6 {
                        o[k] = (1.0 + w) * f[k] - w * fo[k];
                    }
                    o
                })
                .collect()
        } else {
            st.flux.clone()
        };

        let (systems, used) = self.momentum_systems(st, &conv, dt, order)?;
        report.time_order = used;

        // predictor with the old pressure gradient
        let pbc = self.bc.pressure();
        let mut u_star: Vec<Vec<f64>> = st.fields.u.clone();
        for d in 0..dim {
            let grad = gradient(g, &st.fields.p, &pbc, d);
            let mut sys = systems[d].clone();
            sys.rhs.par_iter_mut().enumerate().for_each(|(c, r)| *r -= g.volume(c) * grad[c] / cfg.rho);
            let tol = Tolerance { abs_tol: cfg.momentum_tol * cfg.u_ref, rel_tol: 0.0, max_iter: cfg.max_linear_iters };
            let norm = ResidualNorm::WeightedMax(sys.diag.iter().map(|v| 1.0 / v).collect());
            let rep = solve_general(&sys, &mut u_star[d], &tol, &norm, &Jacobi::new(&sys))?;
            report.momentum_iters.push(rep.iterations);
        }

        let rau: Vec<Vec<f64>> =
            systems.iter().map(|s| (0..n).map(|c| g.volume(c) / s.diag[c]).collect::<Vec<f64>>()).collect();
        let mean_rau = rau[0].iter().sum::<f64>() / n as f64 / cfg.rho;
        let pre = ScaledPreconditioner { inner: &self.laplace, inv_scale: 1.0 / mean_rau };
        let singular = self.bc.pressure_is_singular();
        let ptol = Tolerance { abs_tol: cfg.pressure_tol * cfg.u_ref / cfg.l_ref, rel_tol: 0.0, max_iter: cfg.max_linear_iters };
        let pnorm = ResidualNorm::WeightedMax(self.inv_volume.clone());

        let ddt_corr = self.ddt_flux_correction(st, &rau, dt, used);
        let add_corr = |f: &mut FaceFlux| {
            f.par_iter_mut().zip(ddt_corr.par_iter()).for_each(|(a, b)| {
                for k in 0..6 {
                    a[k] += b[k];
                }
            })
        };
        let mut u = u_star;
        let mut p = st.fields.p.clone();
        let mut flux = st.flux.clone();
        let p_scale = cfg.rho * cfg.u_ref * cfg.u_ref;
        for corr in 0..cfg.n_correctors {
            let hbya: Vec<Vec<f64>> = (0..dim)
                .map(|d| {
                    let s = &systems[d];
                    let ud = &u[d];
                    (0..n)
                        .into_par_iter()
                        .map(|c| {
                            let mut acc = s.rhs[c];
                            for k in 0..2 * dim {
                                let nbk = s.neighbors()[c][k];
                                if nbk != NO_NEIGHBOR {
                                    acc -= s.off[c][k] * ud[nbk];
                                }
                            }
                            acc / s.diag[c]
                        })
                        .collect()
                })
                .collect();
            let rau_of = |a: usize| rau[a].as_slice();
            let zero_p = vec![0.0; n];
            let mut flux_h = self.face_fluxes_axes(&hbya, &rau_of, &zero_p, false);
            add_corr(&mut flux_h);
            let psys = self.pressure_system(&flux_h, &rau);
            let p_before = p.clone();
            let rep = solve_spd(&psys, &mut p, &ptol, &pnorm, &pre, singular)?;
            report.pressure_iters.push(rep.iterations);
            flux = self.face_fluxes_axes(&hbya, &rau_of, &p, true);
            add_corr(&mut flux);
            for d in 0..dim {
                let grad = gradient(g, &p, &pbc, d);
                u[d] = (0..n).into_par_iter().map(|c| hbya[d][c] - rau[d][c] * grad[c] / cfg.rho).collect();
            }
            report.correctors = corr + 1;
            let dp = p.iter().zip(&p_before).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
            if corr + 1 >= 2 && dp <= cfg.correction_tol * p_scale {
                break;
            }
        }

        let div: Vec<f64> = crate::fvm::divergence(&flux, dim);
        report.max_divergence = (0..n)
            .filter(|&c| self.ib.kinds[c] == CellKind::Fluid)
            .map(|c| div[c].abs() * self.inv_volume[c])
            .fold(0.0, f64::max);
        report.max_u = (0..n)
            .map(|c| (0..dim).map(|d| u[d][c] * u[d][c]).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if !(report.max_u <= DIVERGENCE_LIMIT * cfg.u_ref) {
            return Err(SolverError::Diverged { step: st.step + 1, max_u: report.max_u, limit: DIVERGENCE_LIMIT * cfg.u_ref });
        }

        st.u_old = std::mem::replace(&mut st.fields.u, u);
        st.fields.p = p;
        st.flux_old = std::mem::replace(&mut st.flux, flux);
        st.dt_prev = Some(dt);
        st.step += 1;
        st.time += dt;
        Ok(report)
    }

    /// Kinetic energy ½ Σ |u|² V over all cells.
    pub fn kinetic_energy(&self, fields: &FieldSet) -> f64 {
        let g = self.grid;
        0.5 * (0..g.n_cells())
            .map(|c| (0..g.dim()).map(|d| fields.u[d][c] * fields.u[d][c]).sum::<f64>() * g.volume(c))
            .sum::<f64>()
    }
}
