//! Krylov solvers for [`SparseSystem`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::precond::Preconditioner;
use super::system::{axpy, dot, norm2, sum, weighted_max, SparseSystem};
use crate::error::LinearSolverError;

/// Residual measure used for the convergence test.
#[derive(Clone, Debug, PartialEq)]
pub enum ResidualNorm {
    /// Root mean square of the residual.
    Rms,
    /// max |r_i|·w_i, e.g. w = 1/V to bound a per-cell density.
    WeightedMax(Vec<f64>),
}

impl ResidualNorm {
    fn eval(&self, r: &[f64]) -> f64 {
        match self {
            ResidualNorm::Rms => norm2(r) / (r.len().max(1) as f64).sqrt(),
            ResidualNorm::WeightedMax(w) => weighted_max(r, Some(w)),
        }
    }
}

/// Converged when `residual ≤ abs_tol + rel_tol · initial residual`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Tolerance {
    pub fn pressure() -> Self {
        Tolerance { abs_tol: 1e-8, rel_tol: 0.0, max_iter: 2000 }
    }
    pub fn transport() -> Self {
        Tolerance { abs_tol: 1e-7, rel_tol: 0.0, max_iter: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub solver: &'static str,
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Euclidean norm of the reported residual after each iteration.
    pub history: Vec<f64>,
}

/// Preconditioned conjugate gradients with minimal-residual smoothing.
///
/// The returned iterate is the smoothed one, whose 2-norm residual never
/// increases. With `singular = true` the system is treated as having the
/// constant vector as null space: the right-hand side is projected to zero
/// mean and the solution is returned with zero mean.
pub fn solve_spd(
    sys: &SparseSystem,
    x: &mut [f64],
    tol: &Tolerance,
    norm: &ResidualNorm,
    pre: &dyn Preconditioner,
    singular: bool,
) -> Result<SolveReport, LinearSolverError> {
    let n = sys.n();
    let mut b = sys.rhs.clone();
    if singular {
        let mean = sum(&b) / n as f64;
        b.par_iter_mut().for_each(|v| *v -= mean);
    }
    let mut r = vec![0.0; n];
    r.par_iter_mut().enumerate().for_each(|(c, rc)| *rc = b[c] - sys.row_apply(c, x));
    let r0 = norm.eval(&r);
    let target = tol.abs_tol + tol.rel_tol * r0;
    let mut report = SolveReport {
        solver: "pcg",
        iterations: 0,
        initial_residual: r0,
        final_residual: r0,
        history: vec![norm2(&r)],
    };
    if r0 <= target {
        if singular {
            remove_mean(x);
        }
        return Ok(report);
    }

    let mut xs = x.to_vec();
    let mut rs = r.clone();
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut dr = vec![0.0; n];

    for it in 1..=tol.max_iter {
        sys.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(LinearSolverError::Breakdown { solver: "pcg", iteration: it, reason: "p·Ap ≤ 0" });
        }
        let alpha = rz / pq;
        axpy(alpha, &p, x);
        axpy(-alpha, &q, &mut r);

        // minimal-residual smoothing of (x, r)
        dr.par_iter_mut().zip(r.par_iter().zip(rs.par_iter())).for_each(|(d, (r, s))| *d = r - s);
        let dd = dot(&dr, &dr);
        if dd > 0.0 {
            let eta = -dot(&rs, &dr) / dd;
            xs.par_iter_mut().zip(x.par_iter()).for_each(|(s, x)| *s += eta * (x - *s));
            axpy(eta, &dr, &mut rs);
        }
        let res = norm.eval(&rs);
        report.iterations = it;
        report.final_residual = res;
        report.history.push(norm2(&rs));
        if res <= target {
            x.copy_from_slice(&xs);
            if singular {
                remove_mean(x);
            }
            return Ok(report);
        }

        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(p, z)| *p = z + beta * *p);
    }
    x.copy_from_slice(&xs);
    Err(LinearSolverError::NotConverged {
        solver: "pcg",
        iterations: tol.max_iter,
        residual: report.final_residual,
        target,
    })
}

fn remove_mean(x: &mut [f64]) {
    let mean = sum(x) / x.len() as f64;
    x.par_iter_mut().for_each(|v| *v -= mean);
}

/// Right-preconditioned BiCGStab for nonsymmetric systems.
pub fn solve_general(
    sys: &SparseSystem,
    x: &mut [f64],
    tol: &Tolerance,
    norm: &ResidualNorm,
    pre: &dyn Preconditioner,
) -> Result<SolveReport, LinearSolverError> {
    let n = sys.n();
    let mut r = vec![0.0; n];
    sys.residual(x, &mut r);
    let r0n = norm.eval(&r);
    let target = tol.abs_tol + tol.rel_tol * r0n;
    let mut report = SolveReport {
        solver: "bicgstab",
        iterations: 0,
        initial_residual: r0n,
        final_residual: r0n,
        history: vec![norm2(&r)],
    };
    if r0n <= target {
        return Ok(report);
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zs = vec![0.0; n];
    let mut t = vec![0.0; n];
    let breakdown = |it, reason| LinearSolverError::Breakdown { solver: "bicgstab", iteration: it, reason };

    for it in 1..=tol.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(breakdown(it, "r̂·r = 0"));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut()
            .zip(r.par_iter().zip(v.par_iter()))
            .for_each(|(p, (r, v))| *p = r + beta * (*p - omega * v));
        pre.apply(&p, &mut y);
        sys.matvec(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return Err(breakdown(it, "r̂·v = 0"));
        }
        alpha = rho / rv;
        s.par_iter_mut().zip(r.par_iter().zip(v.par_iter())).for_each(|(s, (r, v))| *s = r - alpha * v);
        axpy(alpha, &y, x);
        let sn = norm.eval(&s);
        if sn <= target {
            report.iterations = it;
            report.final_residual = sn;
            report.history.push(norm2(&s));
            return Ok(report);
        }
        pre.apply(&s, &mut zs);
        sys.matvec(&zs, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(breakdown(it, "t·t = 0"));
        }
        omega = dot(&t, &s) / tt;
        axpy(omega, &zs, x);
        r.par_iter_mut().zip(s.par_iter().zip(t.par_iter())).for_each(|(r, (s, t))| *r = s - omega * t);
        let res = norm.eval(&r);
        report.iterations = it;
        report.final_residual = res;
        report.history.push(norm2(&r));
        if !res.is_finite() {
            return Err(breakdown(it, "non-finite residual"));
        }
        if res <= target {
            return Ok(report);
        }
        if omega == 0.0 {
            return Err(breakdown(it, "ω = 0"));
        }
    }
    Err(LinearSolverError::NotConverged {
        solver: "bicgstab",
        iterations: tol.max_iter,
        residual: report.final_residual,
        target,
    })
}
