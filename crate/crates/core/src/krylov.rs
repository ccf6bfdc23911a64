//! Full GMRES with optional left preconditioning.
//!
//! The stopping test always uses the residual of the original system,
//! `‖b − A x_k‖₂ / ‖b‖₂`, so the iteration count does not depend on how
//! the preconditioner scales the residual.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assembly::LinearOperator;
use crate::error::{FdeError, Result};
use crate::multigrid::MgHierarchy;

/// A linear map `y = M v` on vectors of a fixed length.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

impl LinearMap for LinearOperator {
    fn dim(&self) -> usize {
        LinearOperator::dim(self)
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.matvec(v)
    }
}

impl LinearMap for MgHierarchy {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.vcycle(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmresOptions {
    pub tol: f64,
    pub maxit: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            maxit: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖b − A x_k‖₂ / ‖b‖₂` for `k = 0..=iterations`.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub solution: Vec<f64>,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap()
    }

    pub fn write_history_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,relative_residual")?;
        for (k, r) in self.residual_history.iter().enumerate() {
            writeln!(out, "{k},{r:.16e}")?;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn true_residual(op: &dyn LinearMap, b: &[f64], x: &[f64], bnorm: f64) -> Result<f64> {
    let ax = op.apply(x)?;
    Ok(norm(&b.iter().zip(&ax).map(|(bi, a)| bi - a).collect::<Vec<_>>()) / bnorm)
}

/// Solves `A x = b` from `x_0 = 0`. With `precond = Some(M)` the Krylov
/// space is built for `M A` and `M b`.
pub fn gmres(
    op: &dyn LinearMap,
    b: &[f64],
    precond: Option<&dyn LinearMap>,
    opts: &GmresOptions,
) -> Result<SolveReport> {
    let n = op.dim();
    if b.len() != n {
        return Err(FdeError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if let Some(m) = precond {
        if m.dim() != n {
            return Err(FdeError::DimensionMismatch {
                expected: n,
                got: m.dim(),
            });
        }
    }
    let prec = |v: Vec<f64>| -> Result<Vec<f64>> {
        match precond {
            Some(m) => m.apply(&v),
            None => Ok(v),
        }
    };

    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(SolveReport {
            iterations: 0,
            residual_history: vec![0.0],
            converged: true,
            solution: x,
        });
    }
    let mut history = vec![1.0];

    let r0 = prec(b.to_vec())?;
    let beta = norm(&r0);
    if beta == 0.0 {
        return Err(FdeError::Breakdown(0));
    }
    let m = opts.maxit.min(n);
    let mut basis: Vec<Vec<f64>> = vec![r0.iter().map(|v| v / beta).collect()];
    // Hessenberg columns after rotation, stored as the upper triangle R
    let mut r_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut cs: Vec<f64> = Vec::with_capacity(m);
    let mut sn: Vec<f64> = Vec::with_capacity(m);
    let mut g = vec![beta];

    for j in 0..m {
        let mut w = prec(op.apply(&basis[j])?)?;
        let wnorm0 = norm(&w);
        let mut h = vec![0.0; j + 2];
        for (i, v) in basis.iter().enumerate() {
            let c = dot(&w, v);
            h[i] = c;
            w.iter_mut().zip(v).for_each(|(wk, vk)| *wk -= c * vk);
        }
        // a second pass when cancellation was severe
        if norm(&w) < 0.7 * wnorm0 {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                h[i] += c;
                w.iter_mut().zip(v).for_each(|(wk, vk)| *wk -= c * vk);
            }
        }
        let hnext = norm(&w);
        h[j + 1] = hnext;

        for i in 0..j {
            let (a, bb) = (h[i], h[i + 1]);
            h[i] = cs[i] * a + sn[i] * bb;
            h[i + 1] = -sn[i] * a + cs[i] * bb;
        }
        let denom = h[j].hypot(h[j + 1]);
        if denom == 0.0 {
            return Err(FdeError::Breakdown(j + 1));
        }
        let (c, s) = (h[j] / denom, h[j + 1] / denom);
        cs.push(c);
        sn.push(s);
        h[j] = denom;
        h.truncate(j + 1);
        r_cols.push(h);
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);

        // back substitution for y, then x = V y
        let k = j + 1;
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                acc -= r_cols[l][i] * yl;
            }
            y[i] = acc / r_cols[i][i];
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        for (v, yi) in basis.iter().zip(&y) {
            x.iter_mut().zip(v).for_each(|(xk, vk)| *xk += yi * vk);
        }
        let res = true_residual(op, b, &x, bnorm)?;
        history.push(res);
        if res < opts.tol {
            return Ok(SolveReport {
                iterations: k,
                residual_history: history,
                converged: true,
                solution: x,
            });
        }
        let happy = hnext <= 1e-14 * wnorm0.max(f64::MIN_POSITIVE);
        if happy {
            // the Krylov space is invariant: no further progress possible
            return Ok(SolveReport {
                iterations: k,
                residual_history: history,
                converged: res < opts.tol,
                solution: x,
            });
        }
        basis.push(w.iter().map(|v| v / hnext).collect());
    }
    Ok(SolveReport {
        iterations: m,
        residual_history: history,
        converged: false,
        solution: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn identity_converges_at_once() {
        let op = LinearOperator::Dense(DMatrix::identity(5, 5));
        let b = [1.0, -2.0, 3.0, 0.5, 4.0];
        let rep = gmres(&op, &b, None, &GmresOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        for (x, y) in rep.solution.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_rhs() {
        let op = LinearOperator::Dense(DMatrix::identity(3, 3));
        let rep = gmres(&op, &[0.0; 3], None, &GmresOptions::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.solution, vec![0.0; 3]);
    }

    #[test]
    fn nonsymmetric_small_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, -2.0, 5.0, 1.0, 0.5, 0.0, 3.0]);
        let op = LinearOperator::Dense(a.clone());
        let b = [1.0, 2.0, 3.0];
        let rep = gmres(&op, &b, None, &GmresOptions { tol: 1e-12, maxit: 10 }).unwrap();
        assert!(rep.converged && rep.iterations <= 3);
        let want = crate::dense::lu_solve(&a, &b).unwrap();
        for (x, y) in rep.solution.iter().zip(&want) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
