use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sharpib::boundary::{DomainBc, SideBc};
use sharpib::compressible::{CompressibleConfig, CompressibleSolver};
use sharpib::fvm::{kt_flux, ConvectionScheme, GasModel, Primitive};
use sharpib::geometry::{BodySpec, ImmersedBoundary};
use sharpib::incompressible::{DtPolicy, PisoConfig, PisoSolver};
use sharpib::observer::{ObserverConfig, ObserverParams};
use sharpib::{build_grid, AxisSpec, FieldSet, RectilinearGrid, Zone};

fn observer() -> ObserverConfig {
    let p = ObserverParams::for_scale(1.0, 1.0);
    ObserverConfig { momentum: p, energy: p, mass: p }
}

fn naca_grid() -> RectilinearGrid {
    let axis = |lo: f64, a: f64, b: f64, hi: f64| AxisSpec {
        zones: vec![Zone::graded(lo, a, 0.2, 0.01), Zone::uniform(a, b, 0.01), Zone::graded(b, hi, 0.01, 0.2)],
    };
    build_grid(&[axis(-3.0, -0.1, 1.3, 7.0), axis(-4.0, -0.4, 0.25, 4.0)], &[false, false]).unwrap()
}

fn geometry(c: &mut Criterion) {
    let grid = naca_grid();
    let body = BodySpec::Naca4 { code: "0012".into(), chord: 1.0, aoa_deg: 11.0, leading_edge: [0.0, 0.0] };
    c.bench_function("ghost links, NACA 0012 at c/100", |b| {
        b.iter(|| ImmersedBoundary::new(black_box(&grid), body.build().unwrap()).unwrap())
    });
}

fn piso_step(c: &mut Criterion) {
    let n = 128;
    let grid = RectilinearGrid::uniform(&[0.0, 0.0], &[2.0 * PI, 2.0 * PI], &[n, n], &[true, true]).unwrap();
    let cfg = PisoConfig { nu: 0.05, scheme: ConvectionScheme::Central, dt: DtPolicy::Fixed { dt: 0.01 }, ..Default::default() };
    let solver = PisoSolver::new(&grid, ImmersedBoundary::empty(&grid), DomainBc::periodic(2), cfg, observer()).unwrap();
    let mut f = FieldSet::zeros(&grid);
    for cell in 0..grid.n_cells() {
        let x = grid.center(cell);
        f.u[0][cell] = x[0].sin() * x[1].cos();
        f.u[1][cell] = -x[0].cos() * x[1].sin();
    }
    let state = solver.state_from_fields(f);
    c.bench_function("PISO step, Taylor-Green 128^2", |b| {
        b.iter_batched(|| state.clone(), |mut st| solver.advance(&mut st).unwrap(), criterion::BatchSize::LargeInput)
    });
}

fn compressible_step(c: &mut Criterion) {
    let grid = RectilinearGrid::uniform(&[-3.0, -2.5], &[5.0, 2.5], &[160, 100], &[false, false]).unwrap();
    let body = BodySpec::Circle { center: [0.0, 0.0], radius: 0.5 }.build().unwrap();
    let ib = ImmersedBoundary::new(&grid, body).unwrap();
    let bc = DomainBc {
        sides: vec![SideBc::Inlet { velocity: [1.0, 0.0, 0.0] }, SideBc::ZeroGradient, SideBc::ZeroGradient, SideBc::ZeroGradient],
    };
    let solver = CompressibleSolver::new(&grid, ib, bc, CompressibleConfig::nondimensional(300.0, 1.2, 1.4), observer()).unwrap();
    let mut state = solver.free_stream_state();
    for _ in 0..5 {
        solver.advance(&mut state).unwrap();
    }
    c.bench_function("compressible step, cylinder 160x100", |b| {
        b.iter_batched(|| state.clone(), |mut st| solver.advance(&mut st).unwrap(), criterion::BatchSize::LargeInput)
    });
}

fn flux(c: &mut Criterion) {
    let gas = GasModel { gamma: 1.4, r: 1.0 };
    let l = Primitive { rho: 1.0, u: [0.3, 0.1, 0.0], p: 1.0 };
    let r = Primitive { rho: 0.125, u: [0.0, 0.0, 0.0], p: 0.1 };
    c.bench_function("KT face flux", |b| b.iter(|| kt_flux(black_box(&l), black_box(&r), &[1.0, 0.0, 0.0], &gas).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = geometry, piso_step, compressible_step, flux
}
criterion_main!(benches);
