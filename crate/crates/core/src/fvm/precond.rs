use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::system::SparseSystem;
use crate::grid::RectilinearGrid;

pub trait Preconditioner: Sync {
    /// z ≈ A⁻¹ r.
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(sys: &SparseSystem) -> Self {
        Jacobi { inv_diag: sys.diag.iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect() }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.par_iter_mut().zip(r.par_iter().zip(self.inv_diag.par_iter())).for_each(|(z, (r, d))| *z = r * d);
    }
}

/// Boundary treatment of one end of an axis for the separable Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisEnd {
    /// Zero normal gradient.
    Neumann,
    /// Fixed value on the boundary face.
    Dirichlet,
    Periodic,
}

struct AxisBasis {
    n: usize,
    stride: usize,
    /// S, row-major n×n, with Sᵀ M S = I and K S = M S Λ.
    s: Vec<f64>,
    lambda: Vec<f64>,
}

/// Exact inverse of the finite-volume Laplacian `coeff·∇²` on a rectilinear
/// grid with per-axis boundary types, by separable eigendecomposition.
///
/// Used as a preconditioner when the true operator has slowly varying
/// coefficients. The constant mode of an all-Neumann/periodic operator is
/// mapped to zero.
pub struct FastDiagonalization {
    axes: Vec<AxisBasis>,
    inv_eig: Vec<f64>,
    strides: Vec<usize>,
    dims: Vec<usize>,
}

impl FastDiagonalization {
    pub fn new(grid: &RectilinearGrid, ends: &[[AxisEnd; 2]], coeff: f64) -> Self {
        let dim = grid.dim();
        let mut axes = Vec::with_capacity(dim);
        for d in 0..dim {
            let n = grid.dims()[d];
            let h = grid.widths(d);
            let mut k = DMatrix::<f64>::zeros(n, n);
            let faces = if grid.is_periodic(d) { n } else { n - 1 };
            for i in 0..faces {
                let j = (i + 1) % n;
                let w = 1.0 / grid.center_gap(d, i);
                k[(i, i)] += w;
                k[(j, j)] += w;
                k[(i, j)] -= w;
                k[(j, i)] -= w;
            }
            if !grid.is_periodic(d) {
                if ends[d][0] == AxisEnd::Dirichlet {
                    k[(0, 0)] += 2.0 / h[0];
                }
                if ends[d][1] == AxisEnd::Dirichlet {
                    k[(n - 1, n - 1)] += 2.0 / h[n - 1];
                }
            }
            let m_isqrt: Vec<f64> = h.iter().map(|v| 1.0 / v.sqrt()).collect();
            let b = DMatrix::from_fn(n, n, |i, j| m_isqrt[i] * k[(i, j)] * m_isqrt[j]);
            let eig = SymmetricEigen::new(b);
            let mut s = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    s[i * n + j] = m_isqrt[i] * eig.eigenvectors[(i, j)];
                }
            }
            axes.push(AxisBasis { n, stride: grid.strides()[d], s, lambda: eig.eigenvalues.iter().copied().collect() });
        }

        let n_cells = grid.n_cells();
        let scale: f64 = axes.iter().map(|a| a.lambda.iter().fold(0.0, |m: f64, v| m.max(v.abs()))).sum();
        let inv_eig = (0..n_cells)
            .map(|c| {
                let idx = grid.multi(c);
                let lam: f64 = (0..dim).map(|d| axes[d].lambda[idx[d]]).sum();
                if lam.abs() <= 1e-12 * scale {
                    0.0
                } else {
                    1.0 / (coeff * lam)
                }
            })
            .collect();
        FastDiagonalization { axes, inv_eig, strides: grid.strides().to_vec(), dims: grid.dims().to_vec() }
    }

    /// out = (S or Sᵀ) applied along `axis`.
    fn transform(&self, axis: usize, transpose: bool, input: &[f64], out: &mut [f64]) {
        let a = &self.axes[axis];
        let (n, stride) = (a.n, a.stride);
        let dims = &self.dims;
        let strides = &self.strides;
        out.par_iter_mut().enumerate().for_each(|(c, o)| {
            let i = (c / strides[axis]) % dims[axis];
            let base = c - i * stride;
            let mut acc = 0.0;
            if transpose {
                for j in 0..n {
                    acc += a.s[j * n + i] * input[base + j * stride];
                }
            } else {
                for j in 0..n {
                    acc += a.s[i * n + j] * input[base + j * stride];
                }
            }
            *o = acc;
        });
    }
}

impl Preconditioner for FastDiagonalization {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let mut buf = r.to_vec();
        let mut tmp = vec![0.0; r.len()];
        for d in 0..self.axes.len() {
            self.transform(d, true, &buf, &mut tmp);
            std::mem::swap(&mut buf, &mut tmp);
        }
        buf.par_iter_mut().zip(self.inv_eig.par_iter()).for_each(|(v, w)| *v *= w);
        for d in 0..self.axes.len() {
            self.transform(d, false, &buf, &mut tmp);
            std::mem::swap(&mut buf, &mut tmp);
        }
        z.copy_from_slice(&buf);
    }
}
