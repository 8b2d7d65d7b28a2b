use std::io::Write;

use rayon::prelude::*;

use super::body::{add, norm3, scale, sub, ImplicitBody};
use crate::error::GeometryError;
use crate::grid::{CellKind, Point, RectilinearGrid};

/// Mirror distance used, in units of |GW|, when the reflected point falls
/// back inside the body.
pub const CONCAVE_MIRROR_FACTOR: f64 = 1.5;

/// Ghost cell G, its surface projection W and mirror point M = 2W - G.
#[derive(Clone, Debug, PartialEq)]
pub struct GhostLink {
    pub ghost: usize,
    pub g: Point,
    pub w: Point,
    pub m: Point,
    /// Unit normal at W pointing into the fluid.
    pub normal: Point,
    /// Fluid cells and interpolation weights at M.
    pub stencil: Vec<(usize, f64)>,
    /// M was moved along the normal: the reflection landed in the body, or G
    /// lies on the surface.
    pub clamped: bool,
}

impl GhostLink {
    pub fn distance(&self) -> f64 {
        norm3(&sub(&self.w, &self.g))
    }
}

/// Build one link per GHOST cell, ordered by cell index.
pub fn build_ghost_links(
    grid: &RectilinearGrid,
    body: &ImplicitBody,
    kinds: &[CellKind],
) -> Result<Vec<GhostLink>, GeometryError> {
    let ghosts: Vec<usize> = (0..grid.n_cells()).filter(|&c| kinds[c] == CellKind::Ghost).collect();
    let links: Vec<Result<GhostLink, GeometryError>> =
        ghosts.par_iter().map(|&c| build_link(grid, body, kinds, c)).collect();
    let links = links.into_iter().collect::<Result<Vec<_>, _>>()?;
    let clamped = links.iter().filter(|l| l.clamped).count();
    if clamped > 0 {
        log::warn!("{clamped} mirror point(s) were moved along the wall normal (concave surface or ghost on the surface)");
    }
    Ok(links)
}

fn build_link(
    grid: &RectilinearGrid,
    body: &ImplicitBody,
    kinds: &[CellKind],
    ghost: usize,
) -> Result<GhostLink, GeometryError> {
    let g = grid.center(ghost);
    let w = body.project(&g);
    let gw = sub(&w, &g);
    let dist = norm3(&gw);
    let normal = if dist > 1e-12 * body.reference_length() { scale(&gw, 1.0 / dist) } else { body.outward_normal(&g) };
    let mut m = add(&w, &gw);
    let mut clamped = false;
    if dist <= super::SOLID_TIE_TOLERANCE * body.reference_length() {
        // G sits on the surface; a reflection would return G itself
        m = add(&w, &scale(&normal, grid.max_width(ghost)));
        clamped = true;
    } else if body.signed_distance(&m) < 0.0 {
        m = add(&w, &scale(&normal, CONCAVE_MIRROR_FACTOR * dist));
        clamped = true;
    }
    let m = wrap_periodic(grid, &m).ok_or(GeometryError::MirrorOutsideDomain { ghost, point: m })?;
    let stencil = interpolate_stencil(grid, kinds, &m)?;
    Ok(GhostLink { ghost, g, w, m, normal, stencil, clamped })
}

/// Map `x` into the domain along periodic axes; `None` if it lies outside
/// along a non-periodic axis.
fn wrap_periodic(grid: &RectilinearGrid, x: &Point) -> Option<Point> {
    let (lo, hi) = (grid.lower(), grid.upper());
    let mut y = *x;
    for d in 0..grid.dim() {
        if grid.is_periodic(d) {
            let len = hi[d] - lo[d];
            y[d] = lo[d] + (y[d] - lo[d]).rem_euclid(len);
        } else if y[d] < lo[d] || y[d] > hi[d] {
            return None;
        }
    }
    Some(y)
}

/// One-dimensional linear weights of the cell-center pair bracketing `x`.
fn bracket(grid: &RectilinearGrid, axis: usize, x: f64) -> [(usize, f64); 2] {
    let c = grid.centers(axis);
    let n = c.len();
    if x < c[0] || x >= c[n - 1] {
        if !grid.is_periodic(axis) {
            let i = if x < c[0] { 0 } else { n - 1 };
            return [(i, 1.0), (i, 0.0)];
        }
        let gap = grid.center_gap(axis, n - 1);
        let from = if x < c[0] { c[0] - gap } else { c[n - 1] };
        let t = (x - from) / gap;
        return [(n - 1, 1.0 - t), (0, t)];
    }
    let i = c.partition_point(|&v| v <= x) - 1;
    let t = (x - c[i]) / (c[i + 1] - c[i]);
    [(i, 1.0 - t), (i + 1, t)]
}

/// Bilinear (2D) or trilinear (3D) weights over the cell-center box around
/// `m`, restricted to FLUID cells and renormalized.
pub fn interpolate_stencil(
    grid: &RectilinearGrid,
    kinds: &[CellKind],
    m: &Point,
) -> Result<Vec<(usize, f64)>, GeometryError> {
    if !grid.contains(m) {
        return Err(GeometryError::PointOutsideDomain(*m));
    }
    let dim = grid.dim();
    let axes: Vec<[(usize, f64); 2]> = (0..dim).map(|d| bracket(grid, d, m[d])).collect();
    let mut candidates = Vec::with_capacity(1 << dim);
    let mut stencil: Vec<(usize, f64)> = Vec::with_capacity(1 << dim);
    for corner in 0..(1usize << dim) {
        let mut idx = [0usize; 3];
        let mut w = 1.0;
        for d in 0..dim {
            let (i, wd) = axes[d][(corner >> d) & 1];
            idx[d] = i;
            w *= wd;
        }
        if w == 0.0 {
            continue;
        }
        let cell = grid.linear(&idx[..dim]);
        candidates.push(cell);
        if kinds[cell] == CellKind::Fluid {
            match stencil.iter_mut().find(|(c, _)| *c == cell) {
                Some(e) => e.1 += w,
                None => stencil.push((cell, w)),
            }
        }
    }
    let total: f64 = stencil.iter().map(|e| e.1).sum();
    if stencil.is_empty() || total <= 0.0 {
        return Err(GeometryError::NoFluidStencil { point: *m, candidates });
    }
    for e in &mut stencil {
        e.1 /= total;
    }
    Ok(stencil)
}

/// Field values interpolated at every mirror point.
pub fn sample_at_mirror(links: &[GhostLink], field: &[f64]) -> Vec<f64> {
    links.iter().map(|l| sample_link(l, field)).collect()
}

#[inline]
pub fn sample_link(link: &GhostLink, field: &[f64]) -> f64 {
    link.stencil.iter().map(|&(c, w)| w * field[c]).sum()
}

/// Mirror condition residual |GW - WM| / |GW|.
pub fn mirror_residual(link: &GhostLink) -> f64 {
    let gw = sub(&link.w, &link.g);
    let wm = sub(&link.m, &link.w);
    let d = sub(&gw, &wm);
    norm3(&d) / norm3(&gw).max(f64::MIN_POSITIVE)
}

/// Debug dump of the linkage as CSV.
pub fn write_links_csv(mut out: impl Write, links: &[GhostLink]) -> std::io::Result<()> {
    writeln!(out, "ghost,gx,gy,gz,wx,wy,wz,mx,my,mz,nx,ny,nz,clamped,stencil")?;
    for l in links {
        let stencil: Vec<String> = l.stencil.iter().map(|(c, w)| format!("{c}:{w:.17e}")).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            l.ghost,
            l.g[0],
            l.g[1],
            l.g[2],
            l.w[0],
            l.w[1],
            l.w[2],
            l.m[0],
            l.m[1],
            l.m[2],
            l.normal[0],
            l.normal[1],
            l.normal[2],
            u8::from(l.clamped),
            stencil.join(";")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::body::dot;
    use crate::geometry::{classify, BodySpec};
    use proptest::prelude::*;

    fn unit_check(n: &Point) -> f64 {
        (dot(n, n).sqrt() - 1.0).abs()
    }

    fn uniform2(n: usize, half: f64) -> RectilinearGrid {
        RectilinearGrid::uniform(&[-half, -half], &[half, half], &[n, n], &[false, false]).unwrap()
    }

    fn check_link_invariants(links: &[GhostLink], kinds: &[CellKind]) {
        for l in links {
            assert!(mirror_residual(l) <= 1e-12 || l.clamped, "mirror residual {}", mirror_residual(l));
            assert!(unit_check(&l.normal) <= 1e-12);
            let s: f64 = l.stencil.iter().map(|e| e.1).sum();
            assert!((s - 1.0).abs() <= 1e-12);
            assert!(l.stencil.iter().all(|&(c, _)| kinds[c] == CellKind::Fluid));
        }
    }

    #[test]
    fn circle_link_example() {
        // centers on multiples of 0.15: one at (0.9, 0), none on the circle along the axis
        let g = RectilinearGrid::uniform(&[-2.175, -2.175], &[2.175, 2.175], &[29, 29], &[false, false]).unwrap();
        let body = BodySpec::Circle { center: [0.0, 0.0], radius: 1.0 }.build().unwrap();
        let kinds = classify(&g, &body).unwrap();
        let links = build_ghost_links(&g, &body, &kinds).unwrap();
        let l = links
            .iter()
            .find(|l| (l.g[0] - 0.9).abs() < 1e-12 && l.g[1].abs() < 1e-12)
            .expect("ghost at (0.9, 0)");
        assert!((l.w[0] - 1.0).abs() < 1e-12 && l.w[1].abs() < 1e-15);
        assert!((l.m[0] - 1.1).abs() < 1e-12 && l.m[1].abs() < 1e-15);
        assert!((l.normal[0] - 1.0).abs() < 1e-15 && l.normal[1].abs() < 1e-15);
        check_link_invariants(&links, &kinds);
        assert_eq!(links.len(), kinds.iter().filter(|k| **k == CellKind::Ghost).count());
    }

    #[test]
    fn sphere_mirror_distance() {
        let g = RectilinearGrid::uniform(&[-1.125; 3], &[1.125; 3], &[15, 15, 15], &[false; 3]).unwrap();
        let body = BodySpec::Sphere { center: [0.0; 3], radius: 0.5 }.build().unwrap();
        let kinds = classify(&g, &body).unwrap();
        let links = build_ghost_links(&g, &body, &kinds).unwrap();
        for axis in 0..3 {
            let mut p = [0.0; 3];
            p[axis] = 0.45;
            let l = links.iter().find(|l| norm3(&sub(&l.g, &p)) < 1e-12).expect("ghost on axis");
            assert!((l.distance() - 0.05).abs() < 1e-12);
            assert!((norm3(&sub(&l.m, &l.w)) - 0.05).abs() < 1e-12);
        }
        check_link_invariants(&links, &kinds);
    }

    #[test]
    fn naca_links_satisfy_mirror_condition() {
        let g = build_naca_grid();
        let body = BodySpec::Naca4 { code: "0012".into(), chord: 1.0, aoa_deg: 11.0, leading_edge: [0.0, 0.0] }
            .build()
            .unwrap();
        let kinds = classify(&g, &body).unwrap();
        let links = build_ghost_links(&g, &body, &kinds).unwrap();
        assert!(links.len() > 100);
        check_link_invariants(&links, &kinds);
        for l in &links {
            assert!(body.signed_distance(&l.w).abs() <= 1e-9);
            assert!(body.signed_distance(&l.m) >= 0.0);
        }
    }

    fn build_naca_grid() -> RectilinearGrid {
        use crate::grid::{build_grid, AxisSpec, Zone};
        let x = AxisSpec {
            zones: vec![
                Zone::graded(-1.5, -0.05, 0.1, 0.01),
                Zone::uniform(-0.05, 1.05, 0.01),
                Zone::graded(1.05, 2.5, 0.01, 0.1),
            ],
        };
        let y = AxisSpec {
            zones: vec![
                Zone::graded(-1.5, -0.3, 0.1, 0.01),
                Zone::uniform(-0.3, 0.1, 0.01),
                Zone::graded(0.1, 1.5, 0.01, 0.1),
            ],
        };
        build_grid(&[x, y], &[false, false]).unwrap()
    }

    #[test]
    fn stencil_at_fluid_center_is_single_cell() {
        let g = uniform2(8, 1.0);
        let kinds = vec![CellKind::Fluid; g.n_cells()];
        let c = g.linear(&[3, 5]);
        let s = interpolate_stencil(&g, &kinds, &g.center(c)).unwrap();
        assert_eq!(s, vec![(c, 1.0)]);
    }

    #[test]
    fn stencil_at_box_centroid_is_quarter_weights() {
        let g = uniform2(8, 1.0);
        let kinds = vec![CellKind::Fluid; g.n_cells()];
        let s = interpolate_stencil(&g, &kinds, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|e| (e.1 - 0.25).abs() < 1e-15));
    }

    #[test]
    fn stencil_with_solid_corner_matches_hand_renormalization() {
        let g = uniform2(8, 1.0);
        let mut kinds = vec![CellKind::Fluid; g.n_cells()];
        // box around (0.1, 0.05): centers at -0.125, 0.125 on both axes
        let solid = g.linear(&[3, 3]);
        kinds[solid] = CellKind::Ghost;
        let m = [0.1, 0.05, 0.0];
        let s = interpolate_stencil(&g, &kinds, &m).unwrap();
        // bilinear: tx = 0.225/0.25 = 0.9, ty = 0.175/0.25 = 0.7
        let raw = [((4, 3), 0.9 * 0.3), ((3, 4), 0.1 * 0.7), ((4, 4), 0.9 * 0.7)];
        let total: f64 = raw.iter().map(|r| r.1).sum();
        assert_eq!(s.len(), 3);
        for ((i, j), w) in raw {
            let c = g.linear(&[i, j]);
            let got = s.iter().find(|e| e.0 == c).unwrap().1;
            assert!((got - w / total).abs() < 1e-14, "{got} vs {}", w / total);
        }
    }

    #[test]
    fn all_solid_box_is_an_error() {
        let g = uniform2(8, 1.0);
        let kinds = vec![CellKind::Solid; g.n_cells()];
        assert!(matches!(
            interpolate_stencil(&g, &kinds, &[0.0, 0.0, 0.0]),
            Err(GeometryError::NoFluidStencil { .. })
        ));
    }

    #[test]
    fn sample_constant_and_random_fields() {
        let g = RectilinearGrid::uniform(&[-2.05, -2.05], &[2.05, 2.05], &[41, 41], &[false, false]).unwrap();
        let body = BodySpec::Circle { center: [0.0, 0.0], radius: 1.0 }.build().unwrap();
        let kinds = classify(&g, &body).unwrap();
        let links = build_ghost_links(&g, &body, &kinds).unwrap();
        let vals = sample_at_mirror(&links, &vec![3.5; g.n_cells()]);
        assert!(vals.iter().all(|v| (v - 3.5).abs() < 1e-13));

        // deterministic pseudo-random field, checked against an explicit sum
        let field: Vec<f64> = (0..g.n_cells()).map(|i| ((i as f64 * 12.9898).sin() * 43758.5453).fract()).collect();
        let vals = sample_at_mirror(&links, &field);
        for (l, v) in links.iter().zip(&vals) {
            let mut acc = 0.0;
            for k in 0..l.stencil.len() {
                acc += l.stencil[k].1 * field[l.stencil[k].0];
            }
            assert!((acc - v).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_link() {
        let g = uniform2(40, 2.0);
        let body = BodySpec::Circle { center: [0.0, 0.0], radius: 1.0 }.build().unwrap();
        let kinds = classify(&g, &body).unwrap();
        let links = build_ghost_links(&g, &body, &kinds).unwrap();
        let mut buf = Vec::new();
        write_links_csv(&mut buf, &links).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), links.len() + 1);
    }

    #[test]
    fn periodic_stencil_wraps() {
        let g = RectilinearGrid::uniform(&[0.0, 0.0], &[1.0, 1.0], &[4, 4], &[true, false]).unwrap();
        let kinds = vec![CellKind::Fluid; g.n_cells()];
        let s = interpolate_stencil(&g, &kinds, &[0.0, 0.375, 0.0]).unwrap();
        let cells: Vec<usize> = s.iter().map(|e| e.0).collect();
        assert!(cells.contains(&g.linear(&[3, 1])) && cells.contains(&g.linear(&[0, 1])));
        assert!(s.iter().all(|e| (e.1 - 0.5).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn affine_fields_are_reproduced(
            mx in -0.85f64..0.85, my in -0.85f64..0.85, mz in -0.85f64..0.85,
            a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, k in -3.0f64..3.0,
        ) {
            let g2 = RectilinearGrid::from_faces(
                vec![vec![-1.0, -0.7, -0.3, 0.0, 0.2, 0.5, 1.0], vec![-1.0, -0.5, -0.1, 0.3, 0.6, 1.0]],
                &[false, false],
            ).unwrap();
            let g3 = RectilinearGrid::uniform(&[-1.0; 3], &[1.0; 3], &[5, 6, 7], &[false; 3]).unwrap();
            for g in [g2, g3] {
                let kinds = vec![CellKind::Fluid; g.n_cells()];
                let f = |x: &Point| a * x[0] + b * x[1] + if g.dim() == 3 { c * x[2] } else { 0.0 } + k;
                let field: Vec<f64> = (0..g.n_cells()).map(|i| f(&g.center(i))).collect();
                let m = [mx, my, if g.dim() == 3 { mz } else { 0.0 }];
                let s = interpolate_stencil(&g, &kinds, &m).unwrap();
                let inside = (0..g.dim()).all(|d| {
                    let c = g.centers(d);
                    m[d] >= c[0] && m[d] <= c[c.len() - 1]
                });
                if inside {
                    let v: f64 = s.iter().map(|&(i, w)| w * field[i]).sum();
                    prop_assert!((v - f(&m)).abs() < 1e-12);
                }
            }
        }
    }
}
