use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use super::AfemError;
use crate::fem::{self, FemSpace, JacobiCg, NewtonOptions, NonlinearProblem};
use crate::geometry::{self, Point, Vector, QUAD4_BARY, QUAD4_WEIGHT};
use crate::mesh::build_box_mesh;
use crate::molio::ChargeSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub h: f64,
    pub tets: usize,
    pub l2_error: f64,
    pub energy_error: f64,
    pub newton_iterations: usize,
}

pub fn sine_exact(p: &Point) -> f64 {
    (PI * p.x).sin() * (PI * p.y).sin() * (PI * p.z).sin()
}

fn sine_gradient(p: &Point) -> Vector {
    let (sx, sy, sz) = ((PI * p.x).sin(), (PI * p.y).sin(), (PI * p.z).sin());
    let (cx, cy, cz) = ((PI * p.x).cos(), (PI * p.y).cos(), (PI * p.z).cos());
    Vector::new(cx * sy * sz, sx * cy * sz, sx * sy * cz) * PI
}

/// Solve `−Δu + sinh u = f` on the unit cube with `u* = sin πx sin πy sin πz`
/// on Kuhn meshes with `cells` cubes per axis; errors are integrated with the
/// 4-point rule on red-refined children.
pub fn sine_solve(cells: usize, newton: &NewtonOptions) -> Result<ConvergenceRow, AfemError> {
    let mesh = build_box_mesh([1.0; 3], [cells; 3])?;
    let space = FemSpace::new(&mesh)?;
    let cs = ChargeSystem::neutral(1.0, 1.0, 1.0).map_err(|e| AfemError::InvalidParameter(e.to_string()))?;
    let f = |p: &Point| 3.0 * PI * PI * sine_exact(p) + sine_exact(p).sinh();
    let fixed: Vec<bool> = mesh.vertex_flags().iter().map(|f| f.boundary).collect();
    let problem = NonlinearProblem {
        space: &space,
        cs: &cs,
        stiffness: fem::assemble_bilinear(&space, &cs),
        shift: None,
        load: fem::assemble_source(&space, &f),
        fixed,
        fixed_values: vec![0.0; mesh.num_vertices()],
        bounds: None,
    };
    let sol = fem::solve_nonlinear(&problem, None, newton, &JacobiCg::default())?;
    let u = &sol.values;
    let (l2, en): (f64, f64) = (0..mesh.num_tets())
        .into_par_iter()
        .map(|t| {
            let vs = mesh.tets()[t].vertices;
            let p = mesh.tet_points(t);
            let gh = space.gradient(t, u);
            let w = QUAD4_WEIGHT * space.volume(t) / 8.0;
            let mut acc = (0.0, 0.0);
            for child in geometry::red_children(&p) {
                for b in &QUAD4_BARY {
                    let x = geometry::barycentric_point(&child, b);
                    let lam = geometry::barycentric_coords(&p, &x).expect("non-degenerate element");
                    let uh: f64 = lam.iter().zip(&vs).map(|(l, &v)| l * u[v as usize]).sum();
                    acc.0 += w * (uh - sine_exact(&x)).powi(2);
                    acc.1 += w * (gh - sine_gradient(&x)).norm_squared();
                }
            }
            acc
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(ConvergenceRow {
        cells,
        h: 1.0 / cells as f64,
        tets: mesh.num_tets(),
        l2_error: l2.sqrt(),
        energy_error: en.sqrt(),
        newton_iterations: sol.iterations,
    })
}

/// Convergence table over `levels + 1` meshes with `base_cells · 2^l` cells.
pub fn sine_convergence(base_cells: usize, levels: usize) -> Result<Vec<ConvergenceRow>, AfemError> {
    (0..=levels).map(|l| sine_solve(base_cells << l, &NewtonOptions::default())).collect()
}
