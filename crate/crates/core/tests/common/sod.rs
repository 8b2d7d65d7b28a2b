use sharpib::boundary::{DomainBc, SideBc};
use sharpib::compressible::{CompressibleConfig, CompressibleSolver, Viscosity};
use sharpib::fvm::GasModel;
use sharpib::geometry::ImmersedBoundary;
use sharpib::observer::{ObserverConfig, ObserverParams};
use sharpib::{FieldSet, RectilinearGrid};

use super::riemann::{mean_density, SOD};

pub const GAMMA: f64 = 1.4;

/// Inviscid Sod tube on `cells` cells (three periodic rows), run to t = 0.2;
/// returns the density L1 error against the cell-averaged exact solution and
/// the final time.
pub fn sod_l1(cells: usize) -> (f64, f64) {
    let g = RectilinearGrid::uniform(&[0.0, 0.0], &[1.0, 3.0 / cells as f64], &[cells, 3], &[false, true]).unwrap();
    let mut cfg = CompressibleConfig::nondimensional(1.0, 1.0, GAMMA);
    cfg.gas = GasModel { gamma: GAMMA, r: 1.0 };
    cfg.viscosity = Viscosity::Constant { mu: 0.0 };
    let bc = DomainBc { sides: vec![SideBc::ZeroGradient, SideBc::ZeroGradient, SideBc::Periodic, SideBc::Periodic] };
    let p = ObserverParams::for_scale(1.0, 1.0);
    let obs = ObserverConfig { momentum: p, energy: p, mass: p };
    let s = CompressibleSolver::new(&g, ImmersedBoundary::empty(&g), bc, cfg, obs).unwrap();
    let (l, r) = SOD;
    let mut f = FieldSet::zeros(&g);
    for c in 0..g.n_cells() {
        let q = if g.center(c)[0] < 0.5 { l } else { r };
        f.rho[c] = q.rho;
        f.t[c] = q.p / q.rho;
    }
    let mut st = s.state_from_fields(f);
    let t_end = 0.2;
    while st.time < t_end - 1e-14 {
        let cap = t_end - st.time;
        s.advance_capped(&mut st, cap).unwrap();
    }
    let h = 1.0 / cells as f64;
    let mut l1 = 0.0;
    for i in 0..cells {
        let c = g.linear(&[i, 1]);
        let exact = mean_density(&l, &r, GAMMA, 0.5, st.time, i as f64 * h, (i + 1) as f64 * h);
        l1 += (st.fields.rho[c] - exact).abs() * h;
    }
    (l1, st.time)
}

