//! Adaptive ghost-cell forcing.
//!
//! Every ghost cell carries one source term per controlled variable. Each time
//! step the ghost value is compared with a target derived from the mirror-point
//! state, and the source is corrected by a saturating relative increment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::geometry::{sample_link, GhostLink};
use crate::grid::FieldSet;

/// Forcing below this fraction of `f0` is treated as the absorbing zero state.
pub const RESEED_FORCING: f64 = 1e-14;
/// Normalized discrepancy above which a zero forcing is re-seeded.
pub const RESEED_ERROR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverParams {
    /// Initial forcing magnitude, in units of the host-equation source.
    pub f0: f64,
    /// Gain stiffness.
    pub a: f64,
    /// Floor on |target| in the discrepancy normalization.
    pub eps_target: f64,
}

impl ObserverParams {
    pub fn new(f0: f64, a: f64, eps_target: f64) -> Result<Self, SolverError> {
        let p = ObserverParams { f0, a, eps_target };
        p.validate()?;
        Ok(p)
    }

    /// Defaults for a variable with reference scale `scale` and time unit `t_a`.
    pub fn for_scale(scale: f64, t_a: f64) -> Self {
        ObserverParams { f0: scale / t_a, a: 1.0, eps_target: 1e-8 * scale }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.a > 0.0) || !self.f0.is_finite() || !(self.eps_target > 0.0) {
            return Err(SolverError::Invalid(format!(
                "observer parameters need a > 0, finite f0 and eps_target > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// E = (target - ghost) / max(|target|, eps).
    #[inline]
    pub fn discrepancy(&self, alpha_g: f64, target: f64) -> f64 {
        (target - alpha_g) / target.abs().max(self.eps_target)
    }
}

/// Thermal condition on the immersed wall.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThermalWall {
    Adiabatic,
    Isothermal { t_wall: f64 },
}

/// Ghost velocity that makes the wall value vanish.
#[inline]
pub fn target_velocity(u_m: &[f64; 3]) -> [f64; 3] {
    [-u_m[0], -u_m[1], -u_m[2]]
}

/// Ghost temperature for the wall mode; the flag reports an isothermal target
/// that had to be clamped to `eps`.
#[inline]
pub fn target_temperature(mode: ThermalWall, t_m: f64, eps: f64) -> (f64, bool) {
    match mode {
        ThermalWall::Adiabatic => (t_m, false),
        ThermalWall::Isothermal { t_wall } => {
            let t = 2.0 * t_wall - t_m;
            if t <= 0.0 {
                (eps, true)
            } else {
                (t, false)
            }
        }
    }
}

/// Ghost density giving the mirror pressure at the target temperature.
#[inline]
pub fn target_density(rho_m: f64, t_m: f64, t_target: f64) -> Result<f64, SolverError> {
    if !(t_target > 0.0) {
        return Err(SolverError::Invalid(format!("target temperature {t_target} must be positive")));
    }
    Ok(rho_m * t_m / t_target)
}

/// Initial forcing estimate f0·E/(a+|E|).
#[inline]
pub fn forcing_init(p: &ObserverParams, alpha_g: f64, target: f64) -> f64 {
    let e = p.discrepancy(alpha_g, target);
    p.f0 * e / (p.a + e.abs())
}

/// Corrected forcing f + |f|·E/(a+|E|), re-seeded from the zero state.
#[inline]
pub fn forcing_update(p: &ObserverParams, f_prev: f64, alpha_g: f64, target: f64) -> f64 {
    let e = p.discrepancy(alpha_g, target);
    if f_prev.abs() < RESEED_FORCING * p.f0.abs() && e.abs() > RESEED_ERROR {
        return p.f0 * e / (p.a + e.abs());
    }
    f_prev + f_prev.abs() * e / (p.a + e.abs())
}

/// Controlled variable of one forcing channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Velocity(usize),
    Temperature,
    Density,
}

/// Forcing history for every (ghost, channel) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverState {
    pub channels: Vec<Channel>,
    pub n_ghosts: usize,
    /// Row-major `[channel][ghost]`.
    pub f: Vec<f64>,
    pub f_prev: Vec<f64>,
    pub e: Vec<f64>,
    pub seeded: bool,
    /// Isothermal targets clamped to the positive floor, summed over steps.
    pub clamp_count: u64,
}

/// Per-variable observer parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    pub momentum: ObserverParams,
    pub energy: ObserverParams,
    pub mass: ObserverParams,
}

impl ObserverConfig {
    pub fn params(&self, ch: Channel) -> &ObserverParams {
        match ch {
            Channel::Velocity(_) => &self.momentum,
            Channel::Temperature => &self.energy,
            Channel::Density => &self.mass,
        }
    }
}

/// Which channels the host solver reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForcedEquations {
    /// Momentum only.
    Incompressible,
    /// Momentum, energy and mass.
    Compressible,
}

impl ObserverState {
    pub fn new(n_ghosts: usize, dim: usize, eqs: ForcedEquations) -> Self {
        let mut channels: Vec<Channel> = (0..dim).map(Channel::Velocity).collect();
        if eqs == ForcedEquations::Compressible {
            channels.push(Channel::Temperature);
            channels.push(Channel::Density);
        }
        let len = n_ghosts * channels.len();
        ObserverState {
            channels,
            n_ghosts,
            f: vec![0.0; len],
            f_prev: vec![0.0; len],
            e: vec![0.0; len],
            seeded: false,
            clamp_count: 0,
        }
    }

    pub fn channel_slice(&self, k: usize) -> &[f64] {
        &self.f[k * self.n_ghosts..(k + 1) * self.n_ghosts]
    }

    /// Largest |E| for each channel at the last update.
    pub fn max_discrepancy(&self) -> Vec<(Channel, f64)> {
        self.channels
            .iter()
            .enumerate()
            .map(|(k, ch)| {
                let m = self.e[k * self.n_ghosts..(k + 1) * self.n_ghosts].iter().fold(0.0, |m: f64, e| m.max(e.abs()));
                (*ch, m)
            })
            .collect()
    }

    /// Median |E| for each channel at the last update; insensitive to the
    /// few ghosts whose target is near zero.
    pub fn median_discrepancy(&self) -> Vec<(Channel, f64)> {
        let n = self.n_ghosts;
        self.channels
            .iter()
            .enumerate()
            .map(|(k, ch)| {
                let mut v: Vec<f64> = self.e[k * n..(k + 1) * n].iter().map(|e| e.abs()).collect();
                v.sort_by(f64::total_cmp);
                (*ch, if v.is_empty() { 0.0 } else { v[v.len() / 2] })
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.f.iter().all(|v| v.is_finite())
    }

    /// Advance one channel given ghost values and targets, both per ghost.
    fn advance_channel(&mut self, k: usize, params: &ObserverParams, ghost: &[f64], target: &[f64]) {
        let n = self.n_ghosts;
        let seeded = self.seeded;
        let range = k * n..(k + 1) * n;
        let (f, f_prev, e) = (&mut self.f[range.clone()], &mut self.f_prev[range.clone()], &mut self.e[range]);
        f.par_iter_mut().zip(f_prev.par_iter_mut()).zip(e.par_iter_mut()).enumerate().for_each(
            |(i, ((f, fp), e))| {
                *fp = *f;
                *e = params.discrepancy(ghost[i], target[i]);
                *f = if seeded {
                    forcing_update(params, *fp, ghost[i], target[i])
                } else {
                    forcing_init(params, ghost[i], target[i])
                };
            },
        );
    }
}

/// Sample mirror values, update the observer and write forcing fields
/// (ghost cells only, zero elsewhere).
pub fn apply_forcings(
    links: &[GhostLink],
    fields: &mut FieldSet,
    state: &mut ObserverState,
    config: &ObserverConfig,
    thermal: ThermalWall,
    eqs: ForcedEquations,
) -> Result<(), SolverError> {
    let n = links.len();
    if state.n_ghosts != n {
        return Err(SolverError::Invalid(format!("observer holds {} ghosts, links have {n}", state.n_ghosts)));
    }
    let dim = fields.dim();
    let channels = state.channels.clone();

    let mut t_target = vec![0.0; n];
    let mut t_mirror = vec![0.0; n];
    if eqs == ForcedEquations::Compressible {
        let eps = config.energy.eps_target;
        let mut clamps = 0u64;
        for (i, l) in links.iter().enumerate() {
            t_mirror[i] = sample_link(l, &fields.t);
            let (t, clamped) = target_temperature(thermal, t_mirror[i], eps);
            t_target[i] = t;
            clamps += u64::from(clamped);
        }
        if clamps > 0 {
            log::warn!("{clamps} isothermal ghost target(s) were nonpositive and clamped");
        }
        state.clamp_count += clamps;
    }

    for (k, ch) in channels.iter().enumerate() {
        let (ghost, target): (Vec<f64>, Vec<f64>) = match *ch {
            Channel::Velocity(d) => {
                links.iter().map(|l| (fields.u[d][l.ghost], -sample_link(l, &fields.u[d]))).unzip()
            }
            Channel::Temperature => (links.iter().map(|l| fields.t[l.ghost]).collect(), t_target.clone()),
            Channel::Density => {
                let mut g = Vec::with_capacity(n);
                let mut t = Vec::with_capacity(n);
                for (i, l) in links.iter().enumerate() {
                    g.push(fields.rho[l.ghost]);
                    t.push(target_density(sample_link(l, &fields.rho), t_mirror[i], t_target[i])?);
                }
                (g, t)
            }
        };
        state.advance_channel(k, config.params(*ch), &ghost, &target);
    }
    state.seeded = true;
    if !state.all_finite() {
        return Err(SolverError::Invalid("observer produced a non-finite forcing".into()));
    }

    fields.clear_forcing();
    for (k, ch) in channels.iter().enumerate() {
        let f = state.channel_slice(k);
        let dst = match *ch {
            Channel::Velocity(d) if d < dim => &mut fields.f_u[d],
            Channel::Velocity(_) => continue,
            Channel::Temperature => &mut fields.f_t,
            Channel::Density => &mut fields.f_rho,
        };
        for (l, v) in links.iter().zip(f) {
            dst[l.ghost] = *v;
        }
    }
    Ok(())
}
