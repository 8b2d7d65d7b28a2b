use serde::{Deserialize, Serialize};

use super::naca::NacaAirfoil;
use crate::error::GeometryError;
use crate::grid::Point;

/// Serializable body description, as written in a case file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodySpec {
    None,
    Circle { center: [f64; 2], radius: f64 },
    Sphere { center: [f64; 3], radius: f64 },
    Naca4 { code: String, chord: f64, aoa_deg: f64, leading_edge: [f64; 2] },
    Polygon { vertices: Vec<[f64; 2]> },
    /// Two parallel walls normal to `axis`; the fluid lies between `lo` and `hi`.
    Channel { axis: usize, lo: f64, hi: f64, dim: usize },
}

impl BodySpec {
    pub fn build(&self) -> Result<ImplicitBody, GeometryError> {
        let invalid = |m: &str| Err(GeometryError::InvalidBody(m.to_string()));
        Ok(match self {
            BodySpec::None => ImplicitBody::Empty,
            BodySpec::Circle { center, radius } => {
                if !(*radius > 0.0) {
                    return invalid("circle radius must be positive");
                }
                ImplicitBody::Circle { center: [center[0], center[1], 0.0], radius: *radius }
            }
            BodySpec::Sphere { center, radius } => {
                if !(*radius > 0.0) {
                    return invalid("sphere radius must be positive");
                }
                ImplicitBody::Sphere { center: *center, radius: *radius }
            }
            BodySpec::Naca4 { code, chord, aoa_deg, leading_edge } => {
                ImplicitBody::Naca4(Box::new(NacaAirfoil::new(code, *chord, *aoa_deg, *leading_edge)?))
            }
            BodySpec::Polygon { vertices } => ImplicitBody::Polygon2D(Polygon::new(vertices.clone())?),
            BodySpec::Channel { axis, lo, hi, dim } => {
                if !(hi > lo) || *axis >= *dim || !(2..=3).contains(dim) {
                    return invalid("channel needs lo < hi and axis < dim in {2, 3}");
                }
                ImplicitBody::Channel { axis: *axis, lo: *lo, hi: *hi, dim: *dim }
            }
        })
    }
}

/// Immersed body with signed-distance (negative inside the solid) and
/// surface-projection evaluations.
#[derive(Clone, Debug)]
pub enum ImplicitBody {
    Empty,
    Circle { center: Point, radius: f64 },
    Sphere { center: Point, radius: f64 },
    Naca4(Box<NacaAirfoil>),
    Polygon2D(Polygon),
    Channel { axis: usize, lo: f64, hi: f64, dim: usize },
}

impl ImplicitBody {
    /// Dimensionality the body lives in; `None` for the empty body.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ImplicitBody::Empty => None,
            ImplicitBody::Circle { .. } | ImplicitBody::Naca4(_) | ImplicitBody::Polygon2D(_) => Some(2),
            ImplicitBody::Sphere { .. } => Some(3),
            ImplicitBody::Channel { dim, .. } => Some(*dim),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, ImplicitBody::Empty)
    }

    /// Closed bodies must sit inside the domain; a channel spans it.
    pub fn is_bounded(&self) -> bool {
        !matches!(self, ImplicitBody::Empty | ImplicitBody::Channel { .. })
    }

    /// Reference length: diameter, chord, polygon extent, or channel height.
    pub fn reference_length(&self) -> f64 {
        match self {
            ImplicitBody::Empty => 1.0,
            ImplicitBody::Circle { radius, .. } | ImplicitBody::Sphere { radius, .. } => 2.0 * radius,
            ImplicitBody::Naca4(a) => a.chord(),
            ImplicitBody::Polygon2D(p) => p.extent(),
            ImplicitBody::Channel { lo, hi, .. } => hi - lo,
        }
    }

    pub fn signed_distance(&self, x: &Point) -> f64 {
        match self {
            ImplicitBody::Empty => f64::INFINITY,
            ImplicitBody::Circle { center, radius } => norm2(&sub(x, center)) - radius,
            ImplicitBody::Sphere { center, radius } => norm3(&sub(x, center)) - radius,
            ImplicitBody::Naca4(a) => a.signed_distance(x),
            ImplicitBody::Polygon2D(p) => p.signed_distance(x),
            ImplicitBody::Channel { axis, lo, hi, .. } => (x[*axis] - lo).min(hi - x[*axis]),
        }
    }

    /// Nearest surface point. The empty body returns `x` unchanged.
    pub fn project(&self, x: &Point) -> Point {
        match self {
            ImplicitBody::Empty => *x,
            ImplicitBody::Circle { center, radius } | ImplicitBody::Sphere { center, radius } => {
                let dim = if matches!(self, ImplicitBody::Circle { .. }) { 2 } else { 3 };
                let r = sub(x, center);
                let len = if dim == 2 { norm2(&r) } else { norm3(&r) };
                let dir = if len > 0.0 { scale(&r, 1.0 / len) } else { [1.0, 0.0, 0.0] };
                add(center, &scale(&dir, *radius))
            }
            ImplicitBody::Naca4(a) => a.project(x),
            ImplicitBody::Polygon2D(p) => p.project(x).0,
            ImplicitBody::Channel { axis, lo, hi, .. } => {
                let mut w = *x;
                w[*axis] = if x[*axis] - lo <= hi - x[*axis] { *lo } else { *hi };
                w
            }
        }
    }

    /// Unit normal pointing from the body into the fluid at the surface point
    /// nearest to `x`.
    pub fn outward_normal(&self, x: &Point) -> Point {
        match self {
            ImplicitBody::Empty => [1.0, 0.0, 0.0],
            ImplicitBody::Circle { center, .. } | ImplicitBody::Sphere { center, .. } => {
                let w = self.project(x);
                let r = sub(&w, center);
                let dim = if matches!(self, ImplicitBody::Circle { .. }) { 2 } else { 3 };
                let len = if dim == 2 { norm2(&r) } else { norm3(&r) };
                scale(&r, 1.0 / len)
            }
            ImplicitBody::Naca4(a) => a.outward_normal(x),
            ImplicitBody::Polygon2D(p) => p.outward_normal(x),
            ImplicitBody::Channel { axis, lo, hi, .. } => {
                let mut n = [0.0; 3];
                n[*axis] = if x[*axis] - lo <= hi - x[*axis] { 1.0 } else { -1.0 };
                n
            }
        }
    }

    /// Axis-aligned bounding box, if the body is bounded.
    pub fn bounding_box(&self) -> Option<(Point, Point)> {
        match self {
            ImplicitBody::Circle { center, radius } => Some((
                [center[0] - radius, center[1] - radius, 0.0],
                [center[0] + radius, center[1] + radius, 0.0],
            )),
            ImplicitBody::Sphere { center, radius } => {
                Some(([center[0] - radius, center[1] - radius, center[2] - radius], add(center, &[*radius; 3])))
            }
            ImplicitBody::Naca4(a) => Some(a.bounding_box()),
            ImplicitBody::Polygon2D(p) => Some(p.bounding_box()),
            _ => None,
        }
    }
}

/// Closed simple polygon.
#[derive(Clone, Debug)]
pub struct Polygon {
    vertices: Vec<[f64; 2]>,
    /// +1 for counter-clockwise vertex order, -1 for clockwise.
    orientation: f64,
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidBody("polygon needs at least 3 vertices".into()));
        }
        let n = vertices.len();
        let area: f64 = (0..n)
            .map(|i| {
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum();
        if area.abs() < 1e-300 {
            return Err(GeometryError::InvalidBody("degenerate polygon".into()));
        }
        Ok(Polygon { vertices, orientation: area.signum() })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn extent(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi[0] - lo[0]).max(hi[1] - lo[1])
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY, f64::INFINITY, 0.0];
        let mut hi = [f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0];
        for v in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        (lo, hi)
    }

    fn contains(&self, x: &Point) -> bool {
        let mut inside = false;
        for (a, b) in self.segments() {
            if (a[1] > x[1]) != (b[1] > x[1]) {
                let xc = a[0] + (x[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if x[0] < xc {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Closest boundary point and the index of its segment.
    fn project(&self, x: &Point) -> (Point, usize) {
        let mut best = (f64::INFINITY, [0.0; 3], 0);
        for (k, (a, b)) in self.segments().enumerate() {
            let ab = [b[0] - a[0], b[1] - a[1]];
            let t = (((x[0] - a[0]) * ab[0] + (x[1] - a[1]) * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
            let p = [a[0] + t * ab[0], a[1] + t * ab[1], 0.0];
            let d = (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2);
            if d < best.0 {
                best = (d, p, k);
            }
        }
        (best.1, best.2)
    }

    fn signed_distance(&self, x: &Point) -> f64 {
        let (p, _) = self.project(x);
        let d = ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt();
        if self.contains(x) {
            -d
        } else {
            d
        }
    }

    fn outward_normal(&self, x: &Point) -> Point {
        let (p, k) = self.project(x);
        let r = [x[0] - p[0], x[1] - p[1]];
        let len = (r[0] * r[0] + r[1] * r[1]).sqrt();
        if len > 1e-12 * self.extent() {
            let s = if self.contains(x) { -1.0 } else { 1.0 };
            return [s * r[0] / len, s * r[1] / len, 0.0];
        }
        let (a, b) = self.segments().nth(k).unwrap();
        let t = [b[0] - a[0], b[1] - a[1]];
        let l = (t[0] * t[0] + t[1] * t[1]).sqrt();
        // right-hand normal is outward for counter-clockwise loops
        [self.orientation * t[1] / l, -self.orientation * t[0] / l, 0.0]
    }
}

#[inline]
pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
#[inline]
pub(crate) fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
#[inline]
pub(crate) fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}
#[inline]
pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
#[inline]
pub(crate) fn norm3(a: &Point) -> f64 {
    dot(a, a).sqrt()
}
#[inline]
fn norm2(a: &Point) -> f64 {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bodies() -> Vec<ImplicitBody> {
        vec![
            BodySpec::Circle { center: [0.1, -0.2], radius: 1.0 }.build().unwrap(),
            BodySpec::Sphere { center: [0.0, 0.3, 0.0], radius: 0.5 }.build().unwrap(),
            BodySpec::Naca4 { code: "0012".into(), chord: 1.0, aoa_deg: 11.0, leading_edge: [0.0, 0.0] }
                .build()
                .unwrap(),
            BodySpec::Naca4 { code: "2412".into(), chord: 1.0, aoa_deg: -4.0, leading_edge: [0.0, 0.0] }
                .build()
                .unwrap(),
            BodySpec::Polygon { vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.4, 0.2], [0.0, 0.6]] }
                .build()
                .unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn signed_distance_is_lipschitz(
            ax in -1.5f64..1.5, ay in -1.5f64..1.5, az in -1.0f64..1.0,
            bx in -1.5f64..1.5, by in -1.5f64..1.5, bz in -1.0f64..1.0,
        ) {
            for body in bodies() {
                let three = body.dim() == Some(3);
                let a = [ax, ay, if three { az } else { 0.0 }];
                let b = [bx, by, if three { bz } else { 0.0 }];
                let lhs = (body.signed_distance(&a) - body.signed_distance(&b)).abs();
                prop_assert!(lhs <= norm3(&sub(&a, &b)) + 1e-9, "{:?}: {} > {}", body, lhs, norm3(&sub(&a, &b)));
            }
        }

        #[test]
        fn projection_lies_on_surface(x in -1.5f64..1.5, y in -1.5f64..1.5, z in -1.0f64..1.0) {
            for body in bodies() {
                let p = [x, y, if body.dim() == Some(3) { z } else { 0.0 }];
                let w = body.project(&p);
                let l = body.reference_length();
                prop_assert!(body.signed_distance(&w).abs() <= 1e-9 * l);
                // projection distance equals |sd|
                prop_assert!((norm3(&sub(&p, &w)) - body.signed_distance(&p).abs()).abs() <= 1e-9 * l);
            }
        }
    }

    #[test]
    fn circle_normal_and_projection() {
        let c = BodySpec::Circle { center: [0.0, 0.0], radius: 1.0 }.build().unwrap();
        assert_eq!(c.project(&[0.9, 0.0, 0.0]), [1.0, 0.0, 0.0]);
        assert_eq!(c.outward_normal(&[0.9, 0.0, 0.0]), [1.0, 0.0, 0.0]);
        assert!((c.signed_distance(&[0.9, 0.0, 0.0]) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn channel_distance() {
        let c = BodySpec::Channel { axis: 1, lo: 0.0, hi: 1.0, dim: 2 }.build().unwrap();
        assert_eq!(c.signed_distance(&[3.0, 0.25, 0.0]), 0.25);
        assert_eq!(c.signed_distance(&[3.0, -0.25, 0.0]), -0.25);
        assert_eq!(c.outward_normal(&[0.0, 1.1, 0.0]), [0.0, -1.0, 0.0]);
        assert!(!c.is_bounded());
    }

    #[test]
    fn polygon_sign_and_normals() {
        let sq = BodySpec::Polygon { vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]] }.build().unwrap();
        assert!((sq.signed_distance(&[0.5, 0.4, 0.0]) + 0.4).abs() < 1e-15);
        assert!((sq.signed_distance(&[0.5, 1.3, 0.0]) - 0.3).abs() < 1e-15);
        let n = sq.outward_normal(&[0.5, 1.0, 0.0]);
        assert!((n[1] - 1.0).abs() < 1e-15);
        let cw = BodySpec::Polygon { vertices: vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]] }.build().unwrap();
        let n = cw.outward_normal(&[0.5, 1.0, 0.0]);
        assert!((n[1] - 1.0).abs() < 1e-15);
    }
}
