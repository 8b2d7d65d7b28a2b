//! Surface integrals and signal analysis on solver snapshots: force
//! coefficients with a pressure/viscous split, polar wall profiles, the mean
//! Nusselt number and the Strouhal number of the lift signal.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, GeometryError};
use crate::geometry::body::{add, dot, norm3, scale, sub};
use crate::geometry::{interpolate_stencil, ImplicitBody};
use crate::grid::{CellKind, Point, RectilinearGrid};

/// Probe offsets along the outward normal, in units of the local cell size.
pub const PROBE_OFFSETS: [f64; 2] = [1.5, 3.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Panel {
    /// Surface point.
    pub point: Point,
    /// Unit outward normal.
    pub normal: Point,
    /// Area (3D) or length per unit span (2D).
    pub area: f64,
    /// Polar angle from the upstream stagnation direction.
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfacePanelization {
    pub panels: Vec<Panel>,
}

impl SurfacePanelization {
    /// Panels for `body` with `resolution` panels along its perimeter (2D) or
    /// polar rings (sphere); `flow` is the free-stream direction.
    pub fn new(body: &ImplicitBody, resolution: usize, flow: Point) -> Result<Self, Error> {
        let n = resolution.max(4);
        let d = unit(flow);
        let theta_about = |c: &Point, x: &Point| {
            let r = unit(sub(x, c));
            dot(&r, &scale(&d, -1.0)).clamp(-1.0, 1.0).acos()
        };
        let panels = match body {
            ImplicitBody::Circle { center, radius } => (0..n)
                .map(|i| {
                    let phi = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                    let normal = [phi.cos(), phi.sin(), 0.0];
                    let point = add(center, &scale(&normal, *radius));
                    Panel { point, normal, area: 2.0 * PI * radius / n as f64, theta: theta_about(center, &point) }
                })
                .collect(),
            ImplicitBody::Sphere { center, radius } => {
                // rings of equal polar width about the flow axis; exact band areas
                let (e1, e2) = perpendicular_pair(&d);
                let mut out = Vec::new();
                for i in 0..n {
                    let (t0, t1) = (PI * i as f64 / n as f64, PI * (i + 1) as f64 / n as f64);
                    let tm = 0.5 * (t0 + t1);
                    let band = 2.0 * PI * radius * radius * (t0.cos() - t1.cos());
                    let m = ((2.0 * n as f64 * tm.sin()).round() as usize).max(4);
                    for j in 0..m {
                        let ph = 2.0 * PI * (j as f64 + 0.5) / m as f64;
                        let normal = add(
                            &scale(&d, -tm.cos()),
                            &add(&scale(&e1, tm.sin() * ph.cos()), &scale(&e2, tm.sin() * ph.sin())),
                        );
                        out.push(Panel {
                            point: add(center, &scale(&normal, *radius)),
                            normal,
                            area: band / m as f64,
                            theta: tm,
                        });
                    }
                }
                out
            }
            ImplicitBody::Naca4(foil) => {
                // equal arc-length panels from a dense parameter sampling
                let dense = 16 * n;
                let s_of = |k: usize| -1.0 + 2.0 * k as f64 / dense as f64;
                let pts: Vec<Point> = (0..=dense).map(|k| foil.surface_at(s_of(k)).0).collect();
                let mut arc = vec![0.0; dense + 1];
                for k in 1..=dense {
                    arc[k] = arc[k - 1] + norm3(&sub(&pts[k], &pts[k - 1]));
                }
                let total = arc[dense];
                let le = foil.leading_edge();
                let centre = [le[0] + 0.5 * foil.chord(), le[1], 0.0];
                (0..n)
                    .map(|i| {
                        let target = total * (i as f64 + 0.5) / n as f64;
                        let k = arc.partition_point(|&a| a < target).clamp(1, dense);
                        let t = (target - arc[k - 1]) / (arc[k] - arc[k - 1]);
                        let s = s_of(k - 1) + t * (s_of(k) - s_of(k - 1));
                        let (point, normal) = foil.surface_at(s);
                        Panel { point, normal, area: total / n as f64, theta: theta_about(&centre, &point) }
                    })
                    .collect()
            }
            ImplicitBody::Polygon2D(poly) => {
                let v = poly.vertices();
                let perimeter: f64 = (0..v.len()).map(|i| edge_len(v[i], v[(i + 1) % v.len()])).sum();
                let mut centre = [0.0; 3];
                for p in v {
                    centre[0] += p[0] / v.len() as f64;
                    centre[1] += p[1] / v.len() as f64;
                }
                let mut out = Vec::new();
                for i in 0..v.len() {
                    let (a, b) = (v[i], v[(i + 1) % v.len()]);
                    let len = edge_len(a, b);
                    let m = ((n as f64 * len / perimeter).round() as usize).max(1);
                    for j in 0..m {
                        let t = (j as f64 + 0.5) / m as f64;
                        let point = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), 0.0];
                        out.push(Panel {
                            point,
                            normal: body.outward_normal(&point),
                            area: len / m as f64,
                            theta: theta_about(&centre, &point),
                        });
                    }
                }
                out
            }
            ImplicitBody::Empty | ImplicitBody::Channel { .. } => {
                return Err(Error::Post("body has no closed surface to integrate over".into()))
            }
        };
        Ok(SurfacePanelization { panels })
    }

    pub fn total_area(&self) -> f64 {
        self.panels.iter().map(|p| p.area).sum()
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }
}

fn edge_len(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

fn unit(v: Point) -> Point {
    let n = norm3(&v);
    scale(&v, 1.0 / n)
}

/// Two unit vectors completing `d` to an orthonormal frame.
fn perpendicular_pair(d: &Point) -> (Point, Point) {
    let seed = if d[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = unit(sub(&seed, &scale(d, dot(&seed, d))));
    let e2 = [d[1] * e1[2] - d[2] * e1[1], d[2] * e1[0] - d[0] * e1[2], d[0] * e1[1] - d[1] * e1[0]];
    (e1, e2)
}

/// Fields probed near the wall.
#[derive(Clone, Copy, Debug)]
pub struct ProbeFields<'a> {
    pub p: &'a [f64],
    pub u: &'a [Vec<f64>],
    pub t: Option<&'a [f64]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PanelSample {
    /// Pressure at the first probe.
    pub p: f64,
    /// Temperature at the first probe (0 without a temperature field).
    pub t: f64,
    /// Wall-normal derivative of the velocity vector.
    pub dudn: Point,
    /// Wall-normal derivative of the temperature.
    pub dtdn: f64,
}

/// Probe every panel at 1.5 h and 3 h along its normal, h being the largest
/// width of the cell holding the surface point. Velocity (zero at the wall)
/// and, when `t_wall` is given, temperature gradients come from the quadratic
/// through the wall value and both probes; otherwise the temperature gradient
/// is the two-probe difference.
pub fn surface_sample(
    grid: &RectilinearGrid,
    kinds: &[CellKind],
    panels: &SurfacePanelization,
    fields: ProbeFields,
    t_wall: Option<f64>,
) -> Result<Vec<PanelSample>, GeometryError> {
    let dim = grid.dim();
    panels
        .panels
        .par_iter()
        .map(|panel| {
            let cell = grid.locate(&panel.point).ok_or(GeometryError::PointOutsideDomain(panel.point))?;
            let h = grid.max_width(grid.linear(&cell[..dim]));
            let (d1, d2) = (PROBE_OFFSETS[0] * h, PROBE_OFFSETS[1] * h);
            let s1 = interpolate_stencil(grid, kinds, &add(&panel.point, &scale(&panel.normal, d1)))?;
            let s2 = interpolate_stencil(grid, kinds, &add(&panel.point, &scale(&panel.normal, d2)))?;
            let at = |s: &[(usize, f64)], f: &[f64]| s.iter().map(|&(c, w)| w * f[c]).sum::<f64>();
            let wall_gradient = |w: f64, a: f64, b: f64| {
                (d2 * d2 * (a - w) - d1 * d1 * (b - w)) / (d1 * d2 * (d2 - d1))
            };
            let mut out = PanelSample { p: at(&s1, fields.p), ..Default::default() };
            for d in 0..dim {
                out.dudn[d] = wall_gradient(0.0, at(&s1, &fields.u[d]), at(&s2, &fields.u[d]));
            }
            if let Some(t) = fields.t {
                let (t1, t2) = (at(&s1, t), at(&s2, t));
                out.t = t1;
                out.dtdn = match t_wall {
                    Some(tw) => wall_gradient(tw, t1, t2),
                    None => (t2 - t1) / (d2 - d1),
                };
            }
            Ok(out)
        })
        .collect()
}

/// Free-stream reference quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub rho: f64,
    pub speed: f64,
    pub p: f64,
    pub mu: f64,
    /// Chord or diameter.
    pub length: f64,
    /// Reference area (length per unit span in 2D, frontal area in 3D).
    pub area: f64,
    pub drag_dir: Point,
    pub lift_dir: Point,
}

impl Reference {
    /// Flow along `drag_dir` in the xy-plane with lift 90° counter-clockwise.
    pub fn planar(rho: f64, speed: f64, p: f64, mu: f64, length: f64, area: f64, flow_angle: f64) -> Self {
        let (s, c) = flow_angle.sin_cos();
        Reference { rho, speed, p, mu, length, area, drag_dir: [c, s, 0.0], lift_dir: [-s, c, 0.0] }
    }

    pub fn dynamic_pressure(&self) -> f64 {
        0.5 * self.rho * self.speed * self.speed
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub cd: f64,
    pub cd_p: f64,
    pub cd_v: f64,
    pub cl: f64,
    pub cl_p: f64,
    pub cl_v: f64,
}

/// Pressure force −∮(p − p_∞)n dA and wall shear ∮ μ ∂u_t/∂n dA, normalized by
/// ½ρU²A.
pub fn force_coefficients(
    panels: &SurfacePanelization,
    samples: &[PanelSample],
    reference: &Reference,
) -> Result<Coefficients, Error> {
    let q = reference.dynamic_pressure() * reference.area;
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::Post(format!("reference dynamic force {q} must be positive")));
    }
    if samples.len() != panels.len() {
        return Err(Error::Post("sample count differs from panel count".into()));
    }
    let mut fp = [0.0; 3];
    let mut fv = [0.0; 3];
    for (panel, s) in panels.panels.iter().zip(samples) {
        let n = &panel.normal;
        fp = add(&fp, &scale(n, -(s.p - reference.p) * panel.area));
        let tangential = sub(&s.dudn, &scale(n, dot(&s.dudn, n)));
        fv = add(&fv, &scale(&tangential, reference.mu * panel.area));
    }
    let (cd_p, cd_v) = (dot(&fp, &reference.drag_dir) / q, dot(&fv, &reference.drag_dir) / q);
    let (cl_p, cl_v) = (dot(&fp, &reference.lift_dir) / q, dot(&fv, &reference.lift_dir) / q);
    Ok(Coefficients { cd: cd_p + cd_v, cd_p, cd_v, cl: cl_p + cl_v, cl_p, cl_v })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub cp: f64,
    /// Skin friction along the meridian, positive away from stagnation.
    pub cf: f64,
    pub area: f64,
}

/// Area-weighted C_p(θ) and C_f(θ) over `n_bins` polar bins on [0, π]; the
/// bin count is halved until no bin is empty.
pub fn wall_profiles(
    panels: &SurfacePanelization,
    samples: &[PanelSample],
    reference: &Reference,
    n_bins: usize,
) -> Result<Vec<ProfileBin>, Error> {
    let q = reference.dynamic_pressure();
    if !(q > 0.0) {
        return Err(Error::Post("reference dynamic pressure must be positive".into()));
    }
    let mut bins = n_bins.max(1);
    loop {
        let mut acc = vec![(0.0, 0.0, 0.0); bins];
        for (panel, s) in panels.panels.iter().zip(samples) {
            let b = ((panel.theta / PI * bins as f64) as usize).min(bins - 1);
            let n = &panel.normal;
            let along = sub(&reference.drag_dir, &scale(n, dot(&reference.drag_dir, n)));
            let tau = if norm3(&along) > 1e-12 {
                let tangential = sub(&s.dudn, &scale(n, dot(&s.dudn, n)));
                reference.mu * dot(&tangential, &unit(along))
            } else {
                0.0
            };
            acc[b].0 += (s.p - reference.p) * panel.area;
            acc[b].1 += tau * panel.area;
            acc[b].2 += panel.area;
        }
        if acc.iter().all(|a| a.2 > 0.0) || bins == 1 {
            return Ok(acc
                .iter()
                .enumerate()
                .map(|(i, a)| ProfileBin {
                    theta_lo: PI * i as f64 / bins as f64,
                    theta_hi: PI * (i + 1) as f64 / bins as f64,
                    cp: a.0 / a.2 / q,
                    cf: a.1 / a.2 / q,
                    area: a.2,
                })
                .collect());
        }
        log::warn!("empty polar bins with {bins} bins; widening to {}", bins / 2);
        bins /= 2;
    }
}

/// Surface-averaged Nu = q̄_w L / (λ (T_w − T_∞)) with q_w = −λ ∂T/∂n.
pub fn nusselt(
    panels: &SurfacePanelization,
    samples: &[PanelSample],
    conductivity: f64,
    length: f64,
    t_wall: f64,
    t_inf: f64,
) -> Result<f64, Error> {
    let dt = t_wall - t_inf;
    if !(dt.abs() > 1e-12 * t_inf.abs().max(1.0)) {
        return Err(Error::Post("Nusselt number undefined for a wall at free-stream temperature".into()));
    }
    let area = panels.total_area();
    let flux: f64 = panels.panels.iter().zip(samples).map(|(p, s)| -conductivity * s.dtdn * p.area).sum();
    Ok(flux / area * length / (conductivity * dt))
}

/// Time history of the force coefficients.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSeries {
    pub time: Vec<f64>,
    pub values: Vec<Coefficients>,
}

impl CoefficientSeries {
    pub fn push(&mut self, t: f64, c: Coefficients) {
        self.time.push(t);
        self.values.push(c);
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn lift(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.cl).collect()
    }

    /// Trapezoidal time average over `[t0, t1]`.
    pub fn window_mean(&self, t0: f64, t1: f64) -> Option<Coefficients> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.time[i] >= t0 && self.time[i] <= t1).collect();
        if idx.len() < 2 {
            return idx.first().map(|&i| self.values[i]);
        }
        let mut acc = [0.0; 6];
        let mut span = 0.0;
        for w in idx.windows(2) {
            let dt = self.time[w[1]] - self.time[w[0]];
            let (a, b) = (as_array(&self.values[w[0]]), as_array(&self.values[w[1]]));
            for k in 0..6 {
                acc[k] += 0.5 * dt * (a[k] + b[k]);
            }
            span += dt;
        }
        let m = acc.map(|v| v / span);
        Some(Coefficients { cd: m[0], cd_p: m[1], cd_v: m[2], cl: m[3], cl_p: m[4], cl_v: m[5] })
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "time,cl,cd,cd_p,cd_v,cl_p,cl_v")?;
        for (t, c) in self.time.iter().zip(&self.values) {
            writeln!(out, "{t:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}", c.cl, c.cd, c.cd_p, c.cd_v, c.cl_p, c.cl_v)?;
        }
        Ok(())
    }
}

fn as_array(c: &Coefficients) -> [f64; 6] {
    [c.cd, c.cd_p, c.cd_v, c.cl, c.cl_p, c.cl_v]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrouhalEstimate {
    /// Mean zero-crossing frequency.
    pub frequency: f64,
    /// f·L/U.
    pub st: f64,
    /// f·L·sin(α)/U.
    pub st_projected: f64,
    /// Window length in periods.
    pub periods: f64,
    /// Peak of the Hann-windowed spectrum, when the window spans ≥ 10 periods.
    pub spectral_frequency: Option<f64>,
}

/// Dominant frequency of `signal` over `[t0, t1]` from the mean spacing of
/// its zero crossings after removing the mean.
pub fn strouhal(
    time: &[f64],
    signal: &[f64],
    t0: f64,
    t1: f64,
    length: f64,
    speed: f64,
    aoa_rad: f64,
) -> Result<StrouhalEstimate, Error> {
    let idx: Vec<usize> = (0..time.len()).filter(|&i| time[i] >= t0 && time[i] <= t1).collect();
    if idx.len() < 8 {
        return Err(Error::Post(format!("only {} samples in the Strouhal window", idx.len())));
    }
    let mean = idx.iter().map(|&i| signal[i]).sum::<f64>() / idx.len() as f64;
    let mut crossings = Vec::new();
    for w in idx.windows(2) {
        let (a, b) = (signal[w[0]] - mean, signal[w[1]] - mean);
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            let (ta, tb) = (time[w[0]], time[w[1]]);
            crossings.push(ta + (tb - ta) * a / (a - b));
        }
    }
    if crossings.len() < 4 {
        return Err(Error::Post(format!("{} zero crossings; no oscillation to measure", crossings.len())));
    }
    let half_period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let frequency = 0.5 / half_period;
    let window = time[*idx.last().unwrap()] - time[idx[0]];
    let periods = window * frequency;
    let spectral_frequency =
        if periods >= 10.0 { Some(spectral_peak(time, signal, &idx, mean, frequency)) } else { None };
    Ok(StrouhalEstimate {
        frequency,
        st: frequency * length / speed,
        st_projected: frequency * length * aoa_rad.sin() / speed,
        periods,
        spectral_frequency,
    })
}

/// Peak of the Hann-windowed DFT of the uniformly resampled signal, refined
/// by a parabola through the three largest bins.
fn spectral_peak(time: &[f64], signal: &[f64], idx: &[usize], mean: f64, guess: f64) -> f64 {
    let (ta, tb) = (time[idx[0]], time[*idx.last().unwrap()]);
    let n = idx.len().next_power_of_two().min(1 << 14);
    let dt = (tb - ta) / (n - 1) as f64;
    let mut j = 0;
    let x: Vec<f64> = (0..n)
        .map(|k| {
            let t = ta + k as f64 * dt;
            while j + 2 < idx.len() && time[idx[j + 1]] < t {
                j += 1;
            }
            let (i0, i1) = (idx[j], idx[(j + 1).min(idx.len() - 1)]);
            let s = if time[i1] > time[i0] { ((t - time[i0]) / (time[i1] - time[i0])).clamp(0.0, 1.0) } else { 0.0 };
            let hann = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos();
            hann * (signal[i0] + s * (signal[i1] - signal[i0]) - mean)
        })
        .collect();
    let span = n as f64 * dt;
    let power = |k: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (m, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * k * m as f64 / n as f64;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        re * re + im * im
    };
    // scan bins up to 4x the zero-crossing estimate
    let kmax = ((4.0 * guess * span).ceil() as usize).clamp(3, n / 2);
    let spectrum: Vec<f64> = (1..=kmax).map(|k| power(k as f64)).collect();
    let best = spectrum.iter().enumerate().fold(0, |b, (i, v)| if *v > spectrum[b] { i } else { b });
    let k = (best + 1) as f64;
    let shift = if best > 0 && best + 1 < spectrum.len() {
        let (a, b, c) = (spectrum[best - 1].ln(), spectrum[best].ln(), spectrum[best + 1].ln());
        let den = a - 2.0 * b + c;
        if den.abs() > 0.0 { 0.5 * (a - c) / den } else { 0.0 }
    } else {
        0.0
    };
    (k + shift) / span
}
