use std::sync::Arc;

use rayon::prelude::*;

use crate::grid::{RectilinearGrid, NO_NEIGHBOR};

/// Reduction chunk length. Partial sums are formed per chunk and combined in
/// chunk order, so results do not depend on the worker count.
pub const REDUCE_CHUNK: usize = 4096;

/// Seven-point (five in 2D) cell-centred linear system `A x = b`.
///
/// Row `c` reads `diag[c]·x[c] + Σ_k off[c][k]·x[nb[c][k]] = rhs[c]`, with
/// `k = 2·axis + side` and `side = 1` for the high neighbour.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub diag: Vec<f64>,
    pub off: Vec<[f64; 6]>,
    pub rhs: Vec<f64>,
    neighbors: Arc<Vec<[usize; 6]>>,
    dim: usize,
}

impl SparseSystem {
    pub fn new(grid: &RectilinearGrid) -> Self {
        let n = grid.n_cells();
        SparseSystem {
            diag: vec![0.0; n],
            off: vec![[0.0; 6]; n],
            rhs: vec![0.0; n],
            neighbors: Arc::clone(grid.neighbor_table()),
            dim: grid.dim(),
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn neighbors(&self) -> &[[usize; 6]] {
        &self.neighbors
    }

    pub fn clear(&mut self) {
        self.diag.iter_mut().for_each(|v| *v = 0.0);
        self.off.iter_mut().for_each(|v| *v = [0.0; 6]);
        self.rhs.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Row `c` of `A x`.
    #[inline]
    pub fn row_apply(&self, c: usize, x: &[f64]) -> f64 {
        let nb = &self.neighbors[c];
        let o = &self.off[c];
        let mut s = self.diag[c] * x[c];
        for k in 0..2 * self.dim {
            if nb[k] != NO_NEIGHBOR {
                s += o[k] * x[nb[k]];
            }
        }
        s
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(c, yc)| *yc = self.row_apply(c, x));
    }

    /// r = b - A x.
    pub fn residual(&self, x: &[f64], r: &mut [f64]) {
        r.par_iter_mut().enumerate().for_each(|(c, rc)| *rc = self.rhs[c] - self.row_apply(c, x));
    }

    /// max over rows of |A_ij - A_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for c in 0..self.n() {
            for k in 0..2 * self.dim {
                let n = self.neighbors[c][k];
                if n == NO_NEIGHBOR {
                    continue;
                }
                // the neighbour sees `c` across the opposite side of the same face
                let back = k ^ 1;
                let other = if self.neighbors[n][back] == c {
                    self.off[n][back]
                } else {
                    // two-cell periodic wrap cannot occur (at least 3 cells per axis)
                    f64::NAN
                };
                worst = worst.max((self.off[c][k] - other).abs());
            }
        }
        worst
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(REDUCE_CHUNK)
        .zip(b.par_chunks(REDUCE_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub fn sum(a: &[f64]) -> f64 {
    let partial: Vec<f64> = a.par_chunks(REDUCE_CHUNK).map(|x| x.iter().sum::<f64>()).collect();
    partial.iter().sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// max_i |a_i| · w_i, or max |a_i| without weights.
pub fn weighted_max(a: &[f64], w: Option<&[f64]>) -> f64 {
    let m = |x: (usize, &f64)| -> f64 { x.1.abs() * w.map_or(1.0, |w| w[x.0]) };
    a.par_iter().enumerate().map(m).reduce(|| 0.0, f64::max)
}

/// y += alpha x.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y += alpha * x);
}
