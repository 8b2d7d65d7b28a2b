//! Analytic NACA 4-digit section with a closed trailing edge.
//!
//! The surface is parameterized by `s ∈ [-1, 1]`: `s = -1` is the trailing
//! edge on the lower side, `s = 0` the leading edge and `s = 1` the trailing
//! edge on the upper side. Chordwise position is `x = sin²(πs/2)`, which
//! clusters parameter points at both edges and makes the curve smooth through
//! the leading edge.

use crate::error::GeometryError;
use crate::grid::Point;

const SAMPLES: usize = 4097;
const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct NacaAirfoil {
    code: String,
    camber: f64,
    camber_pos: f64,
    thickness: f64,
    chord: f64,
    aoa: f64,
    leading_edge: [f64; 2],
    /// Surface samples in body coordinates (unit chord), uniform in `s`.
    samples: Vec<[f64; 2]>,
}

impl NacaAirfoil {
    pub fn new(code: &str, chord: f64, aoa_deg: f64, leading_edge: [f64; 2]) -> Result<Self, GeometryError> {
        let digits: Vec<u32> = code.chars().filter_map(|c| c.to_digit(10)).collect();
        if digits.len() != 4 || code.len() != 4 {
            return Err(GeometryError::InvalidBody(format!("NACA code must be 4 digits, got {code:?}")));
        }
        let camber = digits[0] as f64 / 100.0;
        let camber_pos = digits[1] as f64 / 10.0;
        let thickness = (digits[2] * 10 + digits[3]) as f64 / 100.0;
        if thickness <= 0.0 || !(chord > 0.0) || (camber > 0.0 && camber_pos == 0.0) {
            return Err(GeometryError::InvalidBody(format!("degenerate NACA section {code}")));
        }
        let mut a = NacaAirfoil {
            code: code.to_string(),
            camber,
            camber_pos,
            thickness,
            chord,
            aoa: aoa_deg.to_radians(),
            leading_edge,
            samples: Vec::new(),
        };
        a.samples = (0..SAMPLES).map(|k| a.curve(Self::sample_param(k))).collect();
        Ok(a)
    }

    fn sample_param(k: usize) -> f64 {
        -1.0 + 2.0 * k as f64 / (SAMPLES - 1) as f64
    }

    pub fn code(&self) -> &str {
        &self.code
    }
    pub fn chord(&self) -> f64 {
        self.chord
    }
    pub fn aoa_rad(&self) -> f64 {
        self.aoa
    }
    pub fn leading_edge(&self) -> [f64; 2] {
        self.leading_edge
    }

    #[cfg(test)]
    fn half_thickness(&self, x: f64) -> f64 {
        self.half_thickness_rt(x, x.sqrt())
    }

    /// Half thickness given both `x` and `sqrt(x)`, so callers holding the
    /// root exactly avoid cancellation near the leading edge.
    fn half_thickness_rt(&self, x: f64, rt: f64) -> f64 {
        5.0 * self.thickness
            * (0.2969 * rt - 0.1260 * x - 0.3516 * x * x + 0.2843 * x.powi(3) - 0.1036 * x.powi(4))
    }

    fn camber_line(&self, x: f64) -> (f64, f64) {
        let (m, p) = (self.camber, self.camber_pos);
        if m == 0.0 {
            (0.0, 0.0)
        } else if x < p {
            (m / (p * p) * (2.0 * p * x - x * x), 2.0 * m / (p * p) * (p - x))
        } else {
            let q = (1.0 - p) * (1.0 - p);
            (m / q * ((1.0 - 2.0 * p) + 2.0 * p * x - x * x), 2.0 * m / q * (p - x))
        }
    }

    /// Surface point in body coordinates (unit chord, leading edge at origin).
    pub fn curve(&self, s: f64) -> [f64; 2] {
        let s = s.clamp(-1.0, 1.0);
        let rt = (0.5 * std::f64::consts::PI * s).sin().abs();
        let x = rt * rt;
        let yt = self.half_thickness_rt(x, rt).max(0.0);
        let (yc, dyc) = self.camber_line(x);
        let theta = dyc.atan();
        let side = if s >= 0.0 { 1.0 } else { -1.0 };
        [x - side * yt * theta.sin(), yc + side * yt * theta.cos()]
    }

    fn curve_d1(&self, s: f64) -> [f64; 2] {
        let h = 1e-6;
        let (a, b) = (self.curve((s - h).max(-1.0)), self.curve((s + h).min(1.0)));
        let span = (s + h).min(1.0) - (s - h).max(-1.0);
        [(b[0] - a[0]) / span, (b[1] - a[1]) / span]
    }

    fn curve_d2(&self, s: f64) -> [f64; 2] {
        let h = 1e-4;
        let s = s.clamp(-1.0 + h, 1.0 - h);
        let (a, c, b) = (self.curve(s - h), self.curve(s), self.curve(s + h));
        [(a[0] - 2.0 * c[0] + b[0]) / (h * h), (a[1] - 2.0 * c[1] + b[1]) / (h * h)]
    }

    fn to_body(&self, x: &Point) -> [f64; 2] {
        let (sa, ca) = self.aoa.sin_cos();
        let dx = (x[0] - self.leading_edge[0]) / self.chord;
        let dy = (x[1] - self.leading_edge[1]) / self.chord;
        [ca * dx - sa * dy, sa * dx + ca * dy]
    }

    fn to_world(&self, b: [f64; 2]) -> Point {
        let (sa, ca) = self.aoa.sin_cos();
        [
            self.leading_edge[0] + self.chord * (ca * b[0] + sa * b[1]),
            self.leading_edge[1] + self.chord * (-sa * b[0] + ca * b[1]),
            0.0,
        ]
    }

    fn rotate_to_world(&self, v: [f64; 2]) -> Point {
        let (sa, ca) = self.aoa.sin_cos();
        [ca * v[0] + sa * v[1], -sa * v[0] + ca * v[1], 0.0]
    }

    /// Damped Newton on the squared distance, started from `s0`.
    fn refine(&self, q: [f64; 2], s0: f64) -> (f64, f64) {
        let ds_max = 4.0 / (SAMPLES - 1) as f64;
        let mut s = s0;
        for _ in 0..NEWTON_MAX_ITERS {
            let p = self.curve(s);
            let d1 = self.curve_d1(s);
            let d2 = self.curve_d2(s);
            let r = [p[0] - q[0], p[1] - q[1]];
            let g = r[0] * d1[0] + r[1] * d1[1];
            let h = d1[0] * d1[0] + d1[1] * d1[1] + r[0] * d2[0] + r[1] * d2[1];
            let step = if h > 0.0 { -g / h } else { -g.signum() * ds_max };
            let next = (s + step.clamp(-ds_max, ds_max)).clamp(-1.0, 1.0);
            let moved = (next - s).abs() * (d1[0].hypot(d1[1]));
            s = next;
            if moved < NEWTON_TOL {
                break;
            }
        }
        let p = self.curve(s);
        (s, (p[0] - q[0]).hypot(p[1] - q[1]))
    }

    /// Nearest surface parameter and distance (body coordinates).
    fn nearest(&self, q: [f64; 2]) -> (f64, f64) {
        // Best sample on each side; thin trailing edges put both sides close.
        let mut best = [(f64::INFINITY, 0usize); 2];
        let mid = SAMPLES / 2;
        for (k, p) in self.samples.iter().enumerate() {
            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            let side = usize::from(k >= mid);
            if d < best[side].0 {
                best[side] = (d, k);
            }
        }
        let mut out = (0.0, f64::INFINITY);
        for &(_, k) in &best {
            let r = self.refine(q, Self::sample_param(k));
            if r.1 < out.1 {
                out = r;
            }
        }
        out
    }

    pub fn signed_distance(&self, x: &Point) -> f64 {
        let q = self.to_body(x);
        let (s, d) = self.nearest(q);
        if s.abs() >= 1.0 {
            return d * self.chord;
        }
        let p = self.curve(s);
        let n = self.body_normal(s);
        let side = (q[0] - p[0]) * n[0] + (q[1] - p[1]) * n[1];
        if side < 0.0 {
            -d * self.chord
        } else {
            d * self.chord
        }
    }

    pub fn project(&self, x: &Point) -> Point {
        let (s, _) = self.nearest(self.to_body(x));
        self.to_world(self.curve(s))
    }

    /// Outward normal in body coordinates; the loop runs clockwise so the
    /// left-hand normal of the tangent points out.
    fn body_normal(&self, s: f64) -> [f64; 2] {
        let t = self.curve_d1(s.clamp(-1.0 + 1e-9, 1.0 - 1e-9));
        let l = t[0].hypot(t[1]);
        [-t[1] / l, t[0] / l]
    }

    pub fn outward_normal(&self, x: &Point) -> Point {
        let q = self.to_body(x);
        let (s, _) = self.nearest(q);
        if s.abs() >= 1.0 {
            // trailing-edge vertex: bisector direction
            let (a, b) = (self.body_normal(-1.0), self.body_normal(1.0));
            let m = [a[0] + b[0], a[1] + b[1]];
            let l = m[0].hypot(m[1]);
            return self.rotate_to_world([m[0] / l, m[1] / l]);
        }
        self.rotate_to_world(self.body_normal(s))
    }

    /// Surface point and outward normal at parameter `s`, in world coordinates.
    pub fn surface_at(&self, s: f64) -> (Point, Point) {
        (self.to_world(self.curve(s)), self.rotate_to_world(self.body_normal(s)))
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY, f64::INFINITY, 0.0];
        let mut hi = [f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0];
        for p in &self.samples {
            let w = self.to_world(*p);
            for d in 0..2 {
                lo[d] = lo[d].min(w[d]);
                hi[d] = hi[d].max(w[d]);
            }
        }
        (lo, hi)
    }
}
