//! Damped inexact Newton iteration for `F(u) = A u + B(u) − L = 0`.

use serde::{Deserialize, Serialize};

use super::{
    assemble_bilinear, dot, nonlinear_jacobian, nonlinear_vector, CsrMatrix, FemError, FemSpace, JacobiCg,
    LinearSolver, MaskedOperator,
};
use crate::mesh::Region;
use crate::molio::ChargeSystem;
use crate::splitting::{Scheme, SplitFields};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    /// Relative reduction `‖F‖ ≤ tol ‖F₀‖`.
    pub tol: f64,
    pub max_iterations: usize,
    pub armijo: f64,
    /// Smallest admissible damping factor.
    pub min_step: f64,
    /// Clamp solvent iterates into the a-priori barriers when they are finite.
    pub clamp: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iterations: 50, armijo: 1e-4, min_step: 1.0 / (1u64 << 20) as f64, clamp: false }
    }
}

/// Discrete problem data: the operator, nonlinearity and Dirichlet constraints.
pub struct NonlinearProblem<'a> {
    pub space: &'a FemSpace<'a>,
    pub cs: &'a ChargeSystem,
    pub stiffness: CsrMatrix,
    /// Per-element quadrature offsets inside sinh (two-term scheme).
    pub shift: Option<Vec<[f64; 4]>>,
    pub load: Vec<f64>,
    pub fixed: Vec<bool>,
    /// Full-length vector; entries at fixed nodes are the Dirichlet values.
    pub fixed_values: Vec<f64>,
    /// Bounds applied to solvent vertices when clamping is enabled.
    pub bounds: Option<(f64, f64)>,
}

/// A converged discrete solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FemSolution {
    pub mesh_id: u64,
    pub values: Vec<f64>,
    pub dirichlet: Vec<bool>,
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub linear_iterations: usize,
    /// Number of vertex values moved by barrier clamping.
    pub clamped: usize,
}

impl NonlinearProblem<'_> {
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>, FemError> {
        let mut f = vec![0.0; u.len()];
        self.stiffness.matvec(u, &mut f);
        let b = nonlinear_vector(self.space, self.cs, u, self.shift.as_deref())?;
        for i in 0..f.len() {
            f[i] = if self.fixed[i] { 0.0 } else { f[i] + b[i] - self.load[i] };
        }
        Ok(f)
    }

    fn clamp(&self, u: &mut [f64], solvent: &[bool]) -> usize {
        let Some((lo, hi)) = self.bounds else { return 0 };
        let mut n = 0;
        for i in 0..u.len() {
            if !self.fixed[i] && solvent[i] && (u[i] < lo || u[i] > hi) {
                u[i] = u[i].clamp(lo, hi);
                n += 1;
            }
        }
        n
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Damped Newton: CG on `J δ = −F` to an absolute accuracy of `1e-2·tol·‖F₀‖`,
/// Armijo backtracking on `‖F‖`.
pub fn solve_nonlinear(
    problem: &NonlinearProblem<'_>,
    initial: Option<&[f64]>,
    opts: &NewtonOptions,
    solver: &dyn LinearSolver,
) -> Result<FemSolution, FemError> {
    let n = problem.space.n();
    let mut u = match initial {
        Some(v) => {
            if v.len() != n {
                return Err(FemError::Size { expected: n, got: v.len() });
            }
            v.to_vec()
        }
        None => vec![0.0; n],
    };
    for i in 0..n {
        if problem.fixed[i] {
            u[i] = problem.fixed_values[i];
        }
    }
    let solvent: Vec<bool> = problem.space.mesh().vertex_flags().iter().map(|f| f.solvent).collect();
    let mut clamped = if opts.clamp { problem.clamp(&mut u, &solvent) } else { 0 };
    let mut f = problem.residual(&u)?;
    let mut fnorm = norm(&f);
    let f0 = fnorm;
    let mut history = vec![fnorm];
    let mut linear_iterations = 0;
    let mut it = 0;
    let nonlinear = problem.cs.kappa2 > 0.0 && problem.space.mesh().tets().iter().any(|t| t.region == Region::Solvent);
    while !(fnorm <= opts.tol * f0 || fnorm <= 1e-14) {
        if it >= opts.max_iterations {
            return Err(FemError::NewtonNotConverged { iterations: it, history });
        }
        let mut jac = problem.stiffness.clone();
        if nonlinear {
            jac.add_scaled(&nonlinear_jacobian(problem.space, problem.cs, &u, problem.shift.as_deref())?, 1.0);
        }
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let rtol = (1e-2 * opts.tol * f0 / fnorm).clamp(1e-10, 0.5);
        let mut delta = vec![0.0; n];
        let op = MaskedOperator { matrix: &jac, fixed: &problem.fixed };
        linear_iterations += solver.solve(&op, &rhs, &mut delta, rtol)?.iterations;

        let mut s = 1.0;
        loop {
            let mut trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + s * d).collect();
            let moved = if opts.clamp { problem.clamp(&mut trial, &solvent) } else { 0 };
            match problem.residual(&trial) {
                Ok(ft) => {
                    let tn = norm(&ft);
                    if tn <= (1.0 - opts.armijo * s) * fnorm {
                        u = trial;
                        f = ft;
                        fnorm = tn;
                        clamped += moved;
                        break;
                    }
                }
                Err(FemError::Overflow { .. }) => {}
                Err(e) => return Err(e),
            }
            s *= 0.5;
            if s < opts.min_step {
                return Err(FemError::Stagnation { iteration: it, residual: fnorm });
            }
        }
        it += 1;
        history.push(fnorm);
    }
    Ok(FemSolution {
        mesh_id: problem.space.mesh().id(),
        values: u,
        dirichlet: problem.fixed.clone(),
        residual_norm: fnorm,
        initial_residual_norm: f0,
        iterations: it,
        residual_history: history,
        linear_iterations,
        clamped,
    })
}

/// Solve for the regular component of the chosen splitting on `space`.
pub fn newton_solve(
    space: &FemSpace<'_>,
    cs: &ChargeSystem,
    split: &SplitFields,
    initial: Option<&[f64]>,
    opts: &NewtonOptions,
) -> Result<FemSolution, FemError> {
    let problem = build_problem(space, cs, split, opts)?;
    solve_nonlinear(&problem, initial, opts, &JacobiCg::default())
}

pub(crate) fn build_problem<'a>(
    space: &'a FemSpace<'a>,
    cs: &'a ChargeSystem,
    split: &SplitFields,
    opts: &NewtonOptions,
) -> Result<NonlinearProblem<'a>, FemError> {
    let mesh = space.mesh();
    if split.mesh_id != mesh.id() {
        return Err(FemError::Stale { mesh: mesh.id(), solution: split.mesh_id });
    }
    let load = split.load(space, cs)?;
    let fixed: Vec<bool> = mesh.vertex_flags().iter().map(|f| f.boundary).collect();
    let fixed_values: Vec<f64> = mesh
        .vertices()
        .iter()
        .zip(&fixed)
        .map(|(p, &b)| if b { split.dirichlet_value(cs, p) } else { 0.0 })
        .collect();
    let shift = match split.scheme {
        Scheme::TwoTerm if cs.kappa2 > 0.0 => Some(crate::splitting::singular_at_quadrature(space, cs)?),
        _ => None,
    };
    let bounds = if opts.clamp { split.barriers.clamp_bounds() } else { None };
    Ok(NonlinearProblem {
        space,
        cs,
        stiffness: assemble_bilinear(space, cs),
        shift,
        load,
        fixed,
        fixed_values,
        bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_source, FemSpace};
    use crate::geometry::Point;
    use crate::mesh::build_box_mesh;
    use std::f64::consts::PI;

    fn manufactured(cells: usize) -> (f64, usize) {
        let m = build_box_mesh([1.0; 3], [cells; 3]).unwrap();
        let s = FemSpace::new(&m).unwrap();
        let cs = ChargeSystem::neutral(1.0, 1.0, 1.0).unwrap();
        let exact = |p: &Point| (PI * p.x).sin() * (PI * p.y).sin() * (PI * p.z).sin();
        let f = |p: &Point| 3.0 * PI * PI * exact(p) + exact(p).sinh();
        let fixed: Vec<bool> = m.vertex_flags().iter().map(|f| f.boundary).collect();
        let problem = NonlinearProblem {
            space: &s,
            cs: &cs,
            stiffness: assemble_bilinear(&s, &cs),
            shift: None,
            load: assemble_source(&s, &f),
            fixed,
            fixed_values: vec![0.0; m.num_vertices()],
            bounds: None,
        };
        let sol = solve_nonlinear(&problem, None, &NewtonOptions::default(), &JacobiCg::default()).unwrap();
        let err = m.vertices().iter().zip(&sol.values).map(|(p, u)| (u - exact(p)).abs()).fold(0.0, f64::max);
        (err, sol.iterations)
    }

    #[test]
    fn manufactured_max_error_converges() {
        let (e1, _) = manufactured(4);
        let (e2, it) = manufactured(8);
        assert!(it <= 8, "{it} Newton iterations");
        assert!(e1 / e2 > 3.0, "{e1} {e2}");
    }

    #[test]
    fn linear_problem_takes_one_step() {
        let m = build_box_mesh([1.0; 3], [4; 3]).unwrap();
        let s = FemSpace::new(&m).unwrap();
        let cs = ChargeSystem::neutral(1.0, 1.0, 0.0).unwrap();
        let fixed: Vec<bool> = m.vertex_flags().iter().map(|f| f.boundary).collect();
        let problem = NonlinearProblem {
            space: &s,
            cs: &cs,
            stiffness: assemble_bilinear(&s, &cs),
            shift: None,
            load: assemble_source(&s, &|_| 1.0),
            fixed,
            fixed_values: vec![0.0; m.num_vertices()],
            bounds: None,
        };
        let sol = solve_nonlinear(&problem, None, &NewtonOptions::default(), &JacobiCg::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.residual_history.windows(2).all(|w| w[1] < w[0]));
    }
}
