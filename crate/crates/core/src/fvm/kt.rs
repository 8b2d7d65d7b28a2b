//! Kurganov–Tadmor central-upwind flux for the Euler equations.

use serde::{Deserialize, Serialize};

use crate::error::FluxError;
use crate::grid::Point;

/// Calorically perfect gas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasModel {
    pub gamma: f64,
    /// Specific gas constant.
    pub r: f64,
}

impl GasModel {
    pub fn cv(&self) -> f64 {
        self.r / (self.gamma - 1.0)
    }
    pub fn cp(&self) -> f64 {
        self.gamma * self.cv()
    }
    pub fn sound_speed(&self, rho: f64, p: f64) -> f64 {
        (self.gamma * p / rho).sqrt()
    }
}

/// Primitive state (density, velocity, pressure).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub rho: f64,
    pub u: Point,
    pub p: f64,
}

/// Conserved state `[ρ, ρu, ρv, ρw, ρE]`.
pub type Conserved = [f64; 5];

impl Primitive {
    pub fn total_energy_density(&self, gas: &GasModel) -> f64 {
        let ke = 0.5 * self.rho * (self.u[0] * self.u[0] + self.u[1] * self.u[1] + self.u[2] * self.u[2]);
        self.p / (gas.gamma - 1.0) + ke
    }

    pub fn conserved(&self, gas: &GasModel) -> Conserved {
        let r = self.rho;
        [r, r * self.u[0], r * self.u[1], r * self.u[2], self.total_energy_density(gas)]
    }

    pub fn from_conserved(q: &Conserved, gas: &GasModel) -> Self {
        let u = [q[1] / q[0], q[2] / q[0], q[3] / q[0]];
        let ke = 0.5 * (q[1] * u[0] + q[2] * u[1] + q[3] * u[2]);
        Primitive { rho: q[0], u, p: (gas.gamma - 1.0) * (q[4] - ke) }
    }

    fn check(&self) -> Result<(), FluxError> {
        if self.rho > 0.0 && self.p > 0.0 && self.rho.is_finite() && self.p.is_finite() {
            Ok(())
        } else {
            Err(FluxError::NonPhysical { rho: self.rho, p: self.p })
        }
    }
}

/// Exact Euler flux of `q` through a face with unit normal `n`.
pub fn euler_flux(q: &Primitive, n: &Point, gas: &GasModel) -> Conserved {
    let un = q.u[0] * n[0] + q.u[1] * n[1] + q.u[2] * n[2];
    let m = q.rho * un;
    [
        m,
        m * q.u[0] + q.p * n[0],
        m * q.u[1] + q.p * n[1],
        m * q.u[2] + q.p * n[2],
        (q.total_energy_density(gas) + q.p) * un,
    ]
}

/// One-sided local speeds `(a⁺, a⁻)` bounding the waves at a face.
pub fn local_speeds(l: &Primitive, r: &Primitive, n: &Point, gas: &GasModel) -> (f64, f64) {
    let unl = l.u[0] * n[0] + l.u[1] * n[1] + l.u[2] * n[2];
    let unr = r.u[0] * n[0] + r.u[1] * n[1] + r.u[2] * n[2];
    let (cl, cr) = (gas.sound_speed(l.rho, l.p), gas.sound_speed(r.rho, r.p));
    ((unl + cl).max(unr + cr).max(0.0), (unl - cl).min(unr - cr).min(0.0))
}

/// Central-upwind flux per unit face area.
pub fn kt_flux(l: &Primitive, r: &Primitive, n: &Point, gas: &GasModel) -> Result<Conserved, FluxError> {
    l.check()?;
    r.check()?;
    let (ap, am) = local_speeds(l, r, n, gas);
    let fl = euler_flux(l, n, gas);
    let fr = euler_flux(r, n, gas);
    let (ql, qr) = (l.conserved(gas), r.conserved(gas));
    let inv = 1.0 / (ap - am);
    let mut out = [0.0; 5];
    for k in 0..5 {
        out[k] = (ap * fl[k] - am * fr[k]) * inv + ap * am * inv * (qr[k] - ql[k]);
    }
    Ok(out)
}

/// van Leer limiter ψ(r) = (r + |r|)/(1 + |r|).
#[inline]
pub fn van_leer(r: f64) -> f64 {
    (r + r.abs()) / (1.0 + r.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const AIR: GasModel = GasModel { gamma: 1.4, r: 287.0 };

    fn prim(rho: f64, u: Point, p: f64) -> Primitive {
        Primitive { rho, u, p }
    }

    #[test]
    fn consistent_for_identical_states() {
        let q = prim(1.2, [30.0, -4.0, 2.0], 1e5);
        let n = [0.6, 0.8, 0.0];
        let f = kt_flux(&q, &q, &n, &AIR).unwrap();
        let e = euler_flux(&q, &n, &AIR);
        for k in 0..5 {
            assert!((f[k] - e[k]).abs() <= 1e-12 * e[k].abs().max(1.0));
        }
    }

    #[test]
    fn supersonic_states_are_pure_upwind() {
        let n = [1.0, 0.0, 0.0];
        let l = prim(1.0, [-900.0, 0.0, 0.0], 1e5);
        let r = prim(0.5, [-800.0, 5.0, 0.0], 5e4);
        let f = kt_flux(&l, &r, &n, &AIR).unwrap();
        let e = euler_flux(&r, &n, &AIR);
        for k in 0..5 {
            assert!((f[k] - e[k]).abs() <= 1e-12 * e[k].abs().max(1.0));
        }
        let l = prim(1.0, [900.0, 0.0, 0.0], 1e5);
        let r = prim(0.5, [800.0, 5.0, 0.0], 5e4);
        let f = kt_flux(&l, &r, &n, &AIR).unwrap();
        let e = euler_flux(&l, &n, &AIR);
        for k in 0..5 {
            assert!((f[k] - e[k]).abs() <= 1e-12 * e[k].abs().max(1.0));
        }
    }

    #[test]
    fn rejects_nonphysical_states() {
        let good = prim(1.0, [0.0; 3], 1.0);
        assert!(kt_flux(&prim(-1.0, [0.0; 3], 1.0), &good, &[1.0, 0.0, 0.0], &AIR).is_err());
        assert!(kt_flux(&good, &prim(1.0, [0.0; 3], 0.0), &[1.0, 0.0, 0.0], &AIR).is_err());
    }

    #[test]
    fn conserved_round_trip() {
        let q = prim(0.7, [1.0, 2.0, -3.0], 4.0);
        let back = Primitive::from_conserved(&q.conserved(&AIR), &AIR);
        assert!((back.p - 4.0).abs() < 1e-12 && (back.u[2] + 3.0).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn antisymmetric_under_swap_and_flip(
            rl in 0.1f64..5.0, rr in 0.1f64..5.0, pl in 0.1f64..5.0, pr in 0.1f64..5.0,
            ul in -3.0f64..3.0, vl in -3.0f64..3.0, ur in -3.0f64..3.0, vr in -3.0f64..3.0,
            theta in 0.0f64..6.283, wl in -1.0f64..1.0, wr in -1.0f64..1.0, phi in -1.5f64..1.5,
        ) {
            let gas = GasModel { gamma: 1.4, r: 1.0 };
            let n = [theta.cos() * phi.cos(), theta.sin() * phi.cos(), phi.sin()];
            let l = prim(rl, [ul, vl, wl], pl);
            let r = prim(rr, [ur, vr, wr], pr);
            let f = kt_flux(&l, &r, &n, &gas).unwrap();
            let g = kt_flux(&r, &l, &[-n[0], -n[1], -n[2]], &gas).unwrap();
            for k in 0..5 {
                prop_assert!((f[k] + g[k]).abs() <= 1e-12 * (1.0 + f[k].abs()));
            }
        }
    }

    #[test]
    fn van_leer_limits() {
        assert_eq!(van_leer(-1.0), 0.0);
        assert_eq!(van_leer(1.0), 1.0);
        assert!(van_leer(1e9) < 2.0);
    }
}
