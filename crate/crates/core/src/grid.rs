//! Rectilinear (tensor-product) grids, cell-centred field storage and index
//! arithmetic.
//!
//! Cells are numbered lexicographically with the first axis fastest:
//! `linear = i + nx * (j + ny * k)`. Points are stored as `[f64; 3]`; components
//! beyond the grid dimensionality are zero and never read.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::GridError;

pub type Point = [f64; 3];

/// Largest spacing ratio allowed between adjacent cells of one axis.
pub const MAX_SPACING_RATIO: f64 = 1.3;

/// Sentinel stored in the neighbour table for faces on a non-periodic boundary.
pub const NO_NEIGHBOR: usize = usize::MAX;

/// One contiguous piece of an axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub start: f64,
    pub end: f64,
    /// Uniform spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Geometric grading from `h_start` at `start` to `h_end` at `end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_end: Option<f64>,
}

impl Zone {
    pub fn uniform(start: f64, end: f64, h: f64) -> Self {
        Zone { start, end, h: Some(h), h_start: None, h_end: None }
    }

    pub fn graded(start: f64, end: f64, h_start: f64, h_end: f64) -> Self {
        Zone { start, end, h: None, h_start: Some(h_start), h_end: Some(h_end) }
    }

    fn spacings(&self, axis: usize) -> Result<Vec<f64>, GridError> {
        let bad = |reason: &str| GridError::BadZone {
            axis,
            start: self.start,
            end: self.end,
            reason: reason.to_string(),
        };
        let length = self.end - self.start;
        if !(length > 0.0) || !length.is_finite() {
            return Err(bad("end must exceed start"));
        }
        let (h0, h1) = match (self.h, self.h_start, self.h_end) {
            (Some(h), None, None) => (h, h),
            (None, Some(a), Some(b)) => (a, b),
            _ => return Err(bad("give either `h` or both `h_start` and `h_end`")),
        };
        if !(h0 > 0.0 && h1 > 0.0) || !h0.is_finite() || !h1.is_finite() {
            return Err(bad("spacings must be positive"));
        }
        if h0 > length * (1.0 + 1e-12) || h1 > length * (1.0 + 1e-12) {
            return Err(bad("spacing exceeds zone length"));
        }
        if ((h1 - h0) / h0).abs() < 1e-12 {
            let n = ((length / h0).round() as usize).max(1);
            return Ok(vec![length / n as f64; n]);
        }
        // h0 * r^(n-1) = h1 and h0 (r^n - 1)/(r - 1) = length
        let r = (length - h0) / (length - h1);
        if !(r > 0.0) {
            return Err(bad("graded spacings incompatible with zone length"));
        }
        let n = (1.0 + (h1 / h0).ln() / r.ln()).round().max(2.0) as usize;
        let q = (h1 / h0).powf(1.0 / (n - 1) as f64);
        let raw: Vec<f64> = (0..n).map(|i| h0 * q.powi(i as i32)).collect();
        let scale = length / raw.iter().sum::<f64>();
        Ok(raw.into_iter().map(|h| h * scale).collect())
    }
}

/// Zone description for one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub zones: Vec<Zone>,
}

impl AxisSpec {
    pub fn uniform(start: f64, end: f64, h: f64) -> Self {
        AxisSpec { zones: vec![Zone::uniform(start, end, h)] }
    }

    /// Face coordinates of the axis.
    pub fn faces(&self, axis: usize) -> Result<Vec<f64>, GridError> {
        let first = self.zones.first().ok_or(GridError::BadZone {
            axis,
            start: f64::NAN,
            end: f64::NAN,
            reason: "axis has no zones".into(),
        })?;
        let total = self.zones.last().map(|z| z.end).unwrap_or(first.end) - first.start;
        let mut faces = vec![first.start];
        for (k, zone) in self.zones.iter().enumerate() {
            if k > 0 {
                let prev = self.zones[k - 1].end;
                if (prev - zone.start).abs() > 1e-12 * total.abs().max(1.0) {
                    return Err(GridError::NonContiguous { axis, prev_end: prev, next_start: zone.start });
                }
            }
            let spacings = zone.spacings(axis)?;
            let n = spacings.len();
            if zone.h.is_some() {
                let h = (zone.end - zone.start) / n as f64;
                faces.extend((1..n).map(|i| zone.start + i as f64 * h));
            } else {
                let mut x = zone.start;
                for h in &spacings[..n - 1] {
                    x += h;
                    faces.push(x);
                }
            }
            faces.push(zone.end);
        }
        for (cell, w) in faces.windows(3).enumerate() {
            let (a, b) = (w[1] - w[0], w[2] - w[1]);
            let ratio = (a / b).max(b / a);
            if ratio > MAX_SPACING_RATIO * (1.0 + 1e-9) {
                return Err(GridError::RatioViolation { axis, cell, ratio, limit: MAX_SPACING_RATIO });
            }
        }
        Ok(faces)
    }
}

/// Builds a grid from per-axis zone descriptions.
pub fn build_grid(axes: &[AxisSpec], periodic: &[bool]) -> Result<RectilinearGrid, GridError> {
    let faces = axes.iter().enumerate().map(|(d, a)| a.faces(d)).collect::<Result<Vec<_>, _>>()?;
    RectilinearGrid::from_faces(faces, periodic)
}

/// Tensor-product Cartesian grid with per-axis face coordinates.
#[derive(Clone, Debug)]
pub struct RectilinearGrid {
    faces: Vec<Vec<f64>>,
    centers: Vec<Vec<f64>>,
    widths: Vec<Vec<f64>>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    periodic: Vec<bool>,
    n_cells: usize,
    neighbors: Arc<Vec<[usize; 6]>>,
}

impl RectilinearGrid {
    pub fn from_faces(faces: Vec<Vec<f64>>, periodic: &[bool]) -> Result<Self, GridError> {
        let dim = faces.len();
        if !(2..=3).contains(&dim) {
            return Err(GridError::Dimensionality(dim));
        }
        for (axis, f) in faces.iter().enumerate() {
            if f.len() < 4 {
                return Err(GridError::TooFewCells { axis, count: f.len().saturating_sub(1) });
            }
            if let Some(i) = f.windows(2).position(|w| !(w[1] > w[0])) {
                return Err(GridError::BadZone {
                    axis,
                    start: f[i],
                    end: f[i + 1],
                    reason: "face coordinates must increase strictly".into(),
                });
            }
        }
        let dims: Vec<usize> = faces.iter().map(|f| f.len() - 1).collect();
        let mut strides = vec![1; dim];
        for d in 1..dim {
            strides[d] = strides[d - 1] * dims[d - 1];
        }
        let n_cells = dims.iter().product();
        let centers = faces.iter().map(|f| f.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()).collect();
        let widths = faces.iter().map(|f| f.windows(2).map(|w| w[1] - w[0]).collect()).collect();
        let periodic: Vec<bool> = (0..dim).map(|d| periodic.get(d).copied().unwrap_or(false)).collect();

        let mut neighbors = vec![[NO_NEIGHBOR; 6]; n_cells];
        for (c, nb) in neighbors.iter_mut().enumerate() {
            let mut rem = c;
            for d in 0..dim {
                let i = rem % dims[d];
                rem /= dims[d];
                let base = c - i * strides[d];
                if i > 0 {
                    nb[2 * d] = c - strides[d];
                } else if periodic[d] {
                    nb[2 * d] = base + (dims[d] - 1) * strides[d];
                }
                if i + 1 < dims[d] {
                    nb[2 * d + 1] = c + strides[d];
                } else if periodic[d] {
                    nb[2 * d + 1] = base;
                }
            }
        }
        Ok(RectilinearGrid {
            faces,
            centers,
            widths,
            dims,
            strides,
            periodic,
            n_cells,
            neighbors: Arc::new(neighbors),
        })
    }

    /// Uniform grid over a box with the given cell counts.
    pub fn uniform(lo: &[f64], hi: &[f64], n: &[usize], periodic: &[bool]) -> Result<Self, GridError> {
        let faces = (0..n.len())
            .map(|d| (0..=n[d]).map(|i| lo[d] + (hi[d] - lo[d]) * i as f64 / n[d] as f64).collect())
            .collect();
        Self::from_faces(faces, periodic)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
    pub fn faces(&self, axis: usize) -> &[f64] {
        &self.faces[axis]
    }
    pub fn centers(&self, axis: usize) -> &[f64] {
        &self.centers[axis]
    }
    pub fn widths(&self, axis: usize) -> &[f64] {
        &self.widths[axis]
    }
    pub fn is_periodic(&self, axis: usize) -> bool {
        self.periodic[axis]
    }
    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    /// Neighbour table: entry `2*d + s` is the neighbour across the low (`s = 0`)
    /// or high (`s = 1`) face on axis `d`, or [`NO_NEIGHBOR`].
    pub fn neighbor_table(&self) -> &Arc<Vec<[usize; 6]>> {
        &self.neighbors
    }

    #[inline]
    pub fn neighbor(&self, cell: usize, axis: usize, high: bool) -> Option<usize> {
        let n = self.neighbors[cell][2 * axis + high as usize];
        (n != NO_NEIGHBOR).then_some(n)
    }

    pub fn lower(&self) -> Point {
        let mut p = [0.0; 3];
        for d in 0..self.dim() {
            p[d] = self.faces[d][0];
        }
        p
    }
    pub fn upper(&self) -> Point {
        let mut p = [0.0; 3];
        for d in 0..self.dim() {
            p[d] = *self.faces[d].last().unwrap();
        }
        p
    }

    pub fn domain_volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.upper()[d] - self.lower()[d]).product()
    }

    #[inline]
    pub fn linear(&self, idx: &[usize]) -> usize {
        let mut c = 0;
        for d in 0..self.dim() {
            c += idx[d] * self.strides[d];
        }
        c
    }

    pub fn try_linear(&self, idx: &[usize]) -> Result<usize, GridError> {
        if idx.len() != self.dim() || idx.iter().zip(&self.dims).any(|(i, n)| i >= n) {
            return Err(GridError::IndexOutOfRange { index: idx.to_vec(), dims: self.dims.clone() });
        }
        Ok(self.linear(idx))
    }

    #[inline]
    pub fn multi(&self, cell: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        let mut rem = cell;
        for d in 0..self.dim() {
            idx[d] = rem % self.dims[d];
            rem /= self.dims[d];
        }
        idx
    }

    /// Centre of a cell given by its multi-index.
    pub fn cell_center(&self, idx: &[usize]) -> Result<Point, GridError> {
        self.try_linear(idx)?;
        let mut p = [0.0; 3];
        for d in 0..self.dim() {
            p[d] = self.centers[d][idx[d]];
        }
        Ok(p)
    }

    #[inline]
    pub fn center(&self, cell: usize) -> Point {
        let idx = self.multi(cell);
        let mut p = [0.0; 3];
        for d in 0..self.dim() {
            p[d] = self.centers[d][idx[d]];
        }
        p
    }

    #[inline]
    pub fn width(&self, cell: usize, axis: usize) -> f64 {
        self.widths[axis][self.multi(cell)[axis]]
    }

    pub fn volume(&self, cell: usize) -> f64 {
        let idx = self.multi(cell);
        (0..self.dim()).map(|d| self.widths[d][idx[d]]).product()
    }

    pub fn volumes(&self) -> Vec<f64> {
        (0..self.n_cells).map(|c| self.volume(c)).collect()
    }

    /// Area of the faces of `cell` normal to `axis`.
    pub fn face_area(&self, cell: usize, axis: usize) -> f64 {
        let idx = self.multi(cell);
        (0..self.dim()).filter(|&d| d != axis).map(|d| self.widths[d][idx[d]]).product()
    }

    /// Largest cell width of `cell`.
    pub fn max_width(&self, cell: usize) -> f64 {
        let idx = self.multi(cell);
        (0..self.dim()).map(|d| self.widths[d][idx[d]]).fold(0.0, f64::max)
    }

    /// Distance between the centres of cells `i` and `i+1` along `axis`, wrapping
    /// across a periodic boundary when `i` is the last cell.
    pub fn center_gap(&self, axis: usize, i: usize) -> f64 {
        let w = &self.widths[axis];
        let j = (i + 1) % w.len();
        0.5 * (w[i] + w[j])
    }

    /// Linear-interpolation weight of the low-side cell at the face between
    /// cells `i` and `i+1` along `axis` (periodic wrap for the last cell).
    pub fn face_weight(&self, axis: usize, i: usize) -> f64 {
        let w = &self.widths[axis];
        let j = (i + 1) % w.len();
        w[j] / (w[i] + w[j])
    }

    /// Cell containing `x`, if inside the domain.
    pub fn locate(&self, x: &Point) -> Option<[usize; 3]> {
        let mut idx = [0; 3];
        for d in 0..self.dim() {
            let f = &self.faces[d];
            if x[d] < f[0] || x[d] > f[f.len() - 1] {
                return None;
            }
            let i = f.partition_point(|&v| v <= x[d]);
            idx[d] = i.saturating_sub(1).min(self.dims[d] - 1);
        }
        Some(idx)
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.locate(x).is_some()
    }

    /// Stable identifier of the grid geometry (face coordinates and periodicity).
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (d, f) in self.faces.iter().enumerate() {
            out.push(self.periodic[d] as u8);
            for v in f {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

/// Classification of a cell with respect to the immersed body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellKind {
    Fluid = 0,
    Solid = 1,
    Ghost = 2,
}

impl CellKind {
    pub fn is_fluid(self) -> bool {
        self == CellKind::Fluid
    }
    /// Solid side of the surface, ghost layer included.
    pub fn is_solid_side(self) -> bool {
        self != CellKind::Fluid
    }
}

/// Cell-centred flow fields plus the immersed-boundary forcing fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSet {
    pub rho: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub t: Vec<f64>,
    pub e_s: Vec<f64>,
    pub f_rho: Vec<f64>,
    pub f_u: Vec<Vec<f64>>,
    pub f_t: Vec<f64>,
}

impl FieldSet {
    pub fn zeros(grid: &RectilinearGrid) -> Self {
        let n = grid.n_cells();
        let dim = grid.dim();
        FieldSet {
            rho: vec![0.0; n],
            u: vec![vec![0.0; n]; dim],
            p: vec![0.0; n],
            t: vec![0.0; n],
            e_s: vec![0.0; n],
            f_rho: vec![0.0; n],
            f_u: vec![vec![0.0; n]; dim],
            f_t: vec![0.0; n],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.p.len()
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn velocity(&self, cell: usize) -> Point {
        let mut v = [0.0; 3];
        for (d, comp) in self.u.iter().enumerate() {
            v[d] = comp[cell];
        }
        v
    }

    pub fn is_consistent(&self, grid: &RectilinearGrid) -> bool {
        let n = grid.n_cells();
        let scalars = [&self.rho, &self.p, &self.t, &self.e_s, &self.f_rho, &self.f_t];
        scalars.iter().all(|f| f.len() == n)
            && self.u.len() == grid.dim()
            && self.f_u.len() == grid.dim()
            && self.u.iter().chain(&self.f_u).all(|f| f.len() == n)
    }

    /// True when every forcing field is exactly zero outside ghost cells.
    pub fn forcing_confined(&self, kinds: &[CellKind]) -> bool {
        kinds.iter().enumerate().filter(|(_, k)| **k != CellKind::Ghost).all(|(c, _)| {
            self.f_rho[c] == 0.0 && self.f_t[c] == 0.0 && self.f_u.iter().all(|f| f[c] == 0.0)
        })
    }

    pub fn clear_forcing(&mut self) {
        self.f_rho.fill(0.0);
        self.f_t.fill(0.0);
        for f in &mut self.f_u {
            f.fill(0.0);
        }
    }
}
