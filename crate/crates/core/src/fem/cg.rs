//! Linear solver contract and the Jacobi-preconditioned conjugate gradient method.

use rayon::prelude::*;

use super::{CsrMatrix, FemError};

/// A symmetric positive definite operator.
pub trait LinearOperator: Sync {
    fn n(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

/// Matrix restricted to free nodes; fixed rows and columns act as the identity.
pub struct MaskedOperator<'a> {
    pub matrix: &'a CsrMatrix,
    pub fixed: &'a [bool],
}

impl LinearOperator for MaskedOperator<'_> {
    fn n(&self) -> usize {
        self.matrix.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let m = self.matrix;
        y.par_iter_mut().enumerate().with_min_len(1024).for_each(|(i, yi)| {
            if self.fixed[i] {
                *yi = x[i];
                return;
            }
            let mut acc = 0.0;
            for (j, v) in m.row(i) {
                if !self.fixed[j] {
                    acc += v * x[j];
                }
            }
            *yi = acc;
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        let d = self.matrix.diagonal();
        d.into_iter().zip(self.fixed).map(|(v, &f)| if f { 1.0 } else { v }).collect()
    }
}

impl LinearOperator for CsrMatrix {
    fn n(&self) -> usize {
        CsrMatrix::n(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        CsrMatrix::diagonal(self)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub relative_residual: f64,
}

/// Pluggable linear solver, e.g. for a future multilevel method.
pub trait LinearSolver: Sync {
    /// Solve `op x = b` starting from `x` until `‖b − Ax‖ ≤ rtol ‖b‖`.
    fn solve(&self, op: &dyn LinearOperator, b: &[f64], x: &mut [f64], rtol: f64) -> Result<SolveStats, FemError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JacobiCg {
    /// Iteration cap; `None` scales with the system size.
    pub max_iterations: Option<usize>,
}

/// Dot product with a fixed reduction order, so results do not depend on
/// the thread count.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

impl LinearSolver for JacobiCg {
    fn solve(&self, op: &dyn LinearOperator, b: &[f64], x: &mut [f64], rtol: f64) -> Result<SolveStats, FemError> {
        let n = op.n();
        let max_it = self.max_iterations.unwrap_or_else(|| (4 * n).clamp(1000, 100_000));
        let bnorm = dot(b, b).sqrt();
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
        }
        let inv_diag: Vec<f64> = op
            .diagonal()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        let mut r = vec![0.0; n];
        op.apply(x, &mut r);
        r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut q = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let target = rtol * bnorm;
        let mut rnorm = dot(&r, &r).sqrt();
        for it in 0..max_it {
            if rnorm <= target {
                return Ok(SolveStats { iterations: it, relative_residual: rnorm / bnorm });
            }
            op.apply(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(FemError::CgBreakdown { iteration: it, curvature: pq });
            }
            let alpha = rz / pq;
            x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.par_iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
            z.par_iter_mut().zip(&r).zip(&inv_diag).for_each(|((zi, ri), d)| *zi = ri * d);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
            rnorm = dot(&r, &r).sqrt();
        }
        if rnorm <= target {
            return Ok(SolveStats { iterations: max_it, relative_residual: rnorm / bnorm });
        }
        Err(FemError::CgNotConverged { iterations: max_it, relative_residual: rnorm / bnorm })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Pattern;
    use std::sync::Arc;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut e: Vec<(u32, u32)> = (0..n as u32 - 1).map(|i| (i, i + 1)).collect();
        let p = Arc::new(Pattern::from_edges(n, &mut e));
        let mut a = CsrMatrix::zeros(p.clone());
        for i in 0..n {
            a.values_mut()[p.position(i, i).unwrap()] = 2.0;
            if i + 1 < n {
                a.values_mut()[p.position(i, i + 1).unwrap()] = -1.0;
                a.values_mut()[p.position(i + 1, i).unwrap()] = -1.0;
            }
        }
        a
    }

    #[test]
    fn solves_tridiagonal() {
        let a = laplace_1d(50);
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 50];
        a.matvec(&xs, &mut b);
        let mut x = vec![0.0; 50];
        let st = JacobiCg::default().solve(&a, &b, &mut x, 1e-12).unwrap();
        assert!(st.iterations <= 60);
        for (u, v) in x.iter().zip(&xs) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn masked_operator_keeps_fixed_nodes() {
        let a = laplace_1d(10);
        let mut fixed = vec![false; 10];
        fixed[0] = true;
        fixed[9] = true;
        let op = MaskedOperator { matrix: &a, fixed: &fixed };
        let b: Vec<f64> = (0..10).map(|i| if fixed[i] { 0.0 } else { 1.0 }).collect();
        let mut x = vec![0.0; 10];
        JacobiCg::default().solve(&op, &b, &mut x, 1e-12).unwrap();
        assert_eq!(x[0], 0.0);
        assert_eq!(x[9], 0.0);
        // Discrete -u'' = 1 with zero ends: u_i = i(9-i)/2.
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - (i * (9 - i)) as f64 / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = laplace_1d(5);
        let mut x = vec![1.0; 5];
        JacobiCg::default().solve(&a, &[0.0; 5], &mut x, 1e-10).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
