//! P1 Galerkin discretization: sparse assembly, conjugate gradients and the
//! damped Newton solver.
//!
//! Element loops compute local contributions in parallel and accumulate them
//! sequentially in element order, so assembled values are independent of the
//! thread count.

mod cg;
mod newton;
mod sparse;

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{self, Point, Vector, QUAD4_BARY, QUAD4_WEIGHT};
use crate::mesh::{FaceTag, Region, TetMesh};
use crate::molio::ChargeSystem;

pub use cg::{JacobiCg, LinearOperator, LinearSolver, MaskedOperator, SolveStats};
pub(crate) use cg::dot;
pub(crate) use newton::build_problem;
pub use newton::{newton_solve, solve_nonlinear, FemSolution, NewtonOptions, NonlinearProblem};
pub use sparse::{CsrMatrix, Pattern, SparseOperator};

/// Overflow guard on `|u|` at quadrature points before evaluating sinh/cosh.
pub const OVERFLOW_GUARD: f64 = 700.0;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("degenerate element {0} in assembly")]
    Degenerate(usize),
    #[error("|u| = {value:.3e} exceeds the overflow guard in element {tet}; increase damping")]
    Overflow { tet: usize, value: f64 },
    #[error("quadrature point of element {0} coincides with a point charge")]
    Singularity(usize),
    #[error("conjugate gradients broke down at iteration {iteration} (pᵀAp = {curvature:e})")]
    CgBreakdown { iteration: usize, curvature: f64 },
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {relative_residual:e})")]
    CgNotConverged { iterations: usize, relative_residual: f64 },
    #[error("Newton did not converge in {iterations} iterations; residual history {history:?}")]
    NewtonNotConverged { iterations: usize, history: Vec<f64> },
    #[error("Newton line search stagnated at iteration {iteration} (‖F‖ = {residual:e})")]
    Stagnation { iteration: usize, residual: f64 },
    #[error("field has {got} values but the mesh has {expected} vertices")]
    Size { expected: usize, got: usize },
    #[error("solution belongs to mesh {solution}, not mesh {mesh}")]
    Stale { mesh: u64, solution: u64 },
}

/// Mesh-dependent data shared by all assembly routines: element gradients,
/// volumes, the sparsity pattern and local-to-global storage slots.
pub struct FemSpace<'m> {
    mesh: &'m TetMesh,
    pattern: Arc<Pattern>,
    slots: Vec<[u32; 16]>,
    grads: Vec<[Vector; 4]>,
    volumes: Vec<f64>,
}

impl<'m> FemSpace<'m> {
    pub fn new(mesh: &'m TetMesh) -> Result<Self, FemError> {
        let nt = mesh.num_tets();
        let mut grads = Vec::with_capacity(nt);
        let mut volumes = Vec::with_capacity(nt);
        for t in 0..nt {
            let p = mesh.tet_points(t);
            grads.push(geometry::hat_gradients(&p).ok_or(FemError::Degenerate(t))?);
            let v = geometry::signed_volume(&p).abs();
            if !(v > 0.0) {
                return Err(FemError::Degenerate(t));
            }
            volumes.push(v);
        }
        let mut edges = Vec::with_capacity(nt * 6);
        for tet in mesh.tets() {
            edges.extend(tet.edges());
        }
        let pattern = Arc::new(Pattern::from_edges(mesh.num_vertices(), &mut edges));
        let slots = mesh
            .tets()
            .iter()
            .map(|tet| {
                let mut s = [0u32; 16];
                for i in 0..4 {
                    for j in 0..4 {
                        let pos = pattern.position(tet.vertices[i] as usize, tet.vertices[j] as usize);
                        s[4 * i + j] = pos.expect("element entry in pattern") as u32;
                    }
                }
                s
            })
            .collect();
        Ok(Self { mesh, pattern, slots, grads, volumes })
    }

    pub fn mesh(&self) -> &'m TetMesh {
        self.mesh
    }

    pub fn n(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn hat_gradients(&self, t: usize) -> &[Vector; 4] {
        &self.grads[t]
    }

    pub fn volume(&self, t: usize) -> f64 {
        self.volumes[t]
    }

    /// Constant gradient of the P1 field `u` on tet `t`.
    pub fn gradient(&self, t: usize, u: &[f64]) -> Vector {
        let v = self.mesh.tets()[t].vertices;
        (0..4).map(|i| self.grads[t][i] * u[v[i] as usize]).sum()
    }

    /// Nodal values of `u` on tet `t` interpolated at the quadrature points.
    pub fn at_quadrature(&self, t: usize, u: &[f64]) -> [f64; 4] {
        let v = self.mesh.tets()[t].vertices.map(|i| u[i as usize]);
        QUAD4_BARY.map(|b| b[0] * v[0] + b[1] * v[1] + b[2] * v[2] + b[3] * v[3])
    }

    pub fn quadrature_points(&self, t: usize) -> [Point; 4] {
        let p = self.mesh.tet_points(t);
        QUAD4_BARY.map(|b| geometry::barycentric_point(&p, &b))
    }

    /// Accumulate per-element 4×4 blocks (`None` skips the element).
    pub fn assemble_matrix<F>(&self, local: F) -> CsrMatrix
    where
        F: Fn(usize) -> Option<[[f64; 4]; 4]> + Sync,
    {
        let blocks: Vec<Option<[[f64; 4]; 4]>> = (0..self.mesh.num_tets()).into_par_iter().map(&local).collect();
        let mut a = CsrMatrix::zeros(self.pattern.clone());
        let vals = a.values_mut();
        for (t, b) in blocks.iter().enumerate() {
            if let Some(b) = b {
                for i in 0..4 {
                    for j in 0..4 {
                        vals[self.slots[t][4 * i + j] as usize] += b[i][j];
                    }
                }
            }
        }
        a
    }

    /// Accumulate per-element 4-vectors (`None` skips the element).
    pub fn assemble_vector<F>(&self, local: F) -> Vec<f64>
    where
        F: Fn(usize) -> Option<[f64; 4]> + Sync,
    {
        let blocks: Vec<Option<[f64; 4]>> = (0..self.mesh.num_tets()).into_par_iter().map(&local).collect();
        let mut out = vec![0.0; self.n()];
        for (t, b) in blocks.iter().enumerate() {
            if let Some(b) = b {
                for (i, &v) in self.mesh.tets()[t].vertices.iter().enumerate() {
                    out[v as usize] += b[i];
                }
            }
        }
        out
    }

    /// Stiffness matrix `∫ c(region) ∇φ_i·∇φ_j`.
    pub fn stiffness(&self, coef: impl Fn(Region) -> f64 + Sync) -> CsrMatrix {
        self.assemble_matrix(|t| {
            let c = coef(self.mesh.tets()[t].region);
            if c == 0.0 {
                return None;
            }
            let g = &self.grads[t];
            let w = c * self.volumes[t];
            let mut b = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    b[i][j] = w * g[i].dot(&g[j]);
                }
            }
            Some(b)
        })
    }

    fn check_len(&self, u: &[f64]) -> Result<(), FemError> {
        if u.len() != self.n() {
            return Err(FemError::Size { expected: self.n(), got: u.len() });
        }
        Ok(())
    }
}

/// Piecewise dielectric coefficient.
pub fn permittivity(cs: &ChargeSystem, region: Region) -> f64 {
    match region {
        Region::Molecular => cs.eps_m,
        Region::Solvent => cs.eps_s,
    }
}

/// Ionic coefficient `κ²`, zero inside the molecule.
pub fn ionic_strength(cs: &ChargeSystem, region: Region) -> f64 {
    match region {
        Region::Molecular => 0.0,
        Region::Solvent => cs.kappa2,
    }
}

/// `a(u, v) = (ε∇u, ∇v)`.
pub fn assemble_bilinear(space: &FemSpace<'_>, cs: &ChargeSystem) -> SparseOperator {
    space.stiffness(|r| permittivity(cs, r))
}

fn guarded(t: usize, x: f64) -> Result<f64, FemError> {
    if x.abs() > OVERFLOW_GUARD || !x.is_finite() {
        Err(FemError::Overflow { tet: t, value: x })
    } else {
        Ok(x)
    }
}

/// `(κ² sinh(u + shift), φ_i)` by 4-point quadrature. `shift` holds optional
/// per-element quadrature-point offsets (the singular potential of the
/// two-term scheme).
pub fn nonlinear_vector(
    space: &FemSpace<'_>,
    cs: &ChargeSystem,
    u: &[f64],
    shift: Option<&[[f64; 4]]>,
) -> Result<Vec<f64>, FemError> {
    space.check_len(u)?;
    let tets = space.mesh.tets();
    let blocks: Vec<Result<Option<[f64; 4]>, FemError>> = (0..tets.len())
        .into_par_iter()
        .map(|t| {
            let k2 = ionic_strength(cs, tets[t].region);
            if k2 == 0.0 {
                return Ok(None);
            }
            let uq = space.at_quadrature(t, u);
            let w = k2 * space.volumes[t] * QUAD4_WEIGHT;
            let mut b = [0.0; 4];
            for (q, bary) in QUAD4_BARY.iter().enumerate() {
                let x = guarded(t, uq[q] + shift.map_or(0.0, |s| s[t][q]))?;
                let s = w * x.sinh();
                for i in 0..4 {
                    b[i] += s * bary[i];
                }
            }
            Ok(Some(b))
        })
        .collect();
    let mut out = vec![0.0; space.n()];
    for (t, b) in blocks.into_iter().enumerate() {
        if let Some(b) = b? {
            for (i, &v) in tets[t].vertices.iter().enumerate() {
                out[v as usize] += b[i];
            }
        }
    }
    Ok(out)
}

/// `(κ² cosh(u + shift) φ_j, φ_i)` by 4-point quadrature.
pub fn nonlinear_jacobian(
    space: &FemSpace<'_>,
    cs: &ChargeSystem,
    u: &[f64],
    shift: Option<&[[f64; 4]]>,
) -> Result<CsrMatrix, FemError> {
    space.check_len(u)?;
    let tets = space.mesh.tets();
    let mut overflow = std::sync::Mutex::new(None);
    let m = space.assemble_matrix(|t| {
        let k2 = ionic_strength(cs, tets[t].region);
        if k2 == 0.0 {
            return None;
        }
        let uq = space.at_quadrature(t, u);
        let w = k2 * space.volumes[t] * QUAD4_WEIGHT;
        let mut b = [[0.0; 4]; 4];
        for (q, bary) in QUAD4_BARY.iter().enumerate() {
            let x = uq[q] + shift.map_or(0.0, |s| s[t][q]);
            if let Err(e) = guarded(t, x) {
                overflow.lock().unwrap().get_or_insert(e);
                return None;
            }
            let c = w * x.cosh();
            for i in 0..4 {
                for j in 0..4 {
                    b[i][j] += c * bary[i] * bary[j];
                }
            }
        }
        Some(b)
    });
    match overflow.get_mut().unwrap().take() {
        Some(e) => Err(e),
        None => Ok(m),
    }
}

/// Both the nonlinear load vector and its Jacobian.
pub fn assemble_nonlinear(
    space: &FemSpace<'_>,
    cs: &ChargeSystem,
    u: &[f64],
    shift: Option<&[[f64; 4]]>,
) -> Result<(Vec<f64>, CsrMatrix), FemError> {
    Ok((nonlinear_vector(space, cs, u, shift)?, nonlinear_jacobian(space, cs, u, shift)?))
}

/// `⟨g_Γ, φ_i⟩_Γ` for per-face constants `g_gamma` (indexed by face; only
/// interface faces are read). Each face vertex receives `g·area/3`.
pub fn assemble_interface_load(mesh: &TetMesh, g_gamma: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_vertices()];
    for (f, face) in mesh.faces().iter().enumerate() {
        if face.tag != FaceTag::Interface || g_gamma[f] == 0.0 {
            continue;
        }
        let share = g_gamma[f] * mesh.face_area(f) / 3.0;
        for &v in &face.vertices {
            out[v as usize] += share;
        }
    }
    out
}

/// Two-term volume load `−∫_Ω (ε − ε_m) ∇u^s·∇φ_i` (nonzero on solvent elements only).
pub fn assemble_volume_load_twoterm(space: &FemSpace<'_>, cs: &ChargeSystem) -> Result<Vec<f64>, FemError> {
    let tets = space.mesh.tets();
    let jump = cs.eps_s - cs.eps_m;
    let blocks: Vec<Result<Option<[f64; 4]>, FemError>> = (0..tets.len())
        .into_par_iter()
        .map(|t| {
            if jump == 0.0 || cs.charges.is_empty() || tets[t].region == Region::Molecular {
                return Ok(None);
            }
            let mut grad = Vector::zeros();
            for x in space.quadrature_points(t) {
                grad += crate::splitting::singular_potential(cs, &x).map_err(|_| FemError::Singularity(t))?.1;
            }
            grad *= QUAD4_WEIGHT;
            let w = -jump * space.volumes[t];
            let g = &space.grads[t];
            Ok(Some([0, 1, 2, 3].map(|i| w * grad.dot(&g[i]))))
        })
        .collect();
    let mut out = vec![0.0; space.n()];
    for (t, b) in blocks.into_iter().enumerate() {
        if let Some(b) = b? {
            for (i, &v) in tets[t].vertices.iter().enumerate() {
                out[v as usize] += b[i];
            }
        }
    }
    Ok(out)
}

/// Volume source `∫ f φ_i` by 4-point quadrature.
pub fn assemble_source(space: &FemSpace<'_>, f: &(dyn Fn(&Point) -> f64 + Sync)) -> Vec<f64> {
    space.assemble_vector(|t| {
        let w = space.volumes[t] * QUAD4_WEIGHT;
        let mut b = [0.0; 4];
        for (x, bary) in space.quadrature_points(t).iter().zip(QUAD4_BARY.iter()) {
            let fx = f(x) * w;
            for i in 0..4 {
                b[i] += fx * bary[i];
            }
        }
        Some(b)
    })
}

/// `sqrt(vᵀ A v)` with the assembled bilinear operator.
pub fn energy_norm(space: &FemSpace<'_>, cs: &ChargeSystem, v: &[f64]) -> f64 {
    energy_norm_with(&assemble_bilinear(space, cs), v)
}

pub fn energy_norm_with(a: &CsrMatrix, v: &[f64]) -> f64 {
    a.quadratic_form(v).max(0.0).sqrt()
}

/// Off-diagonal sign audit of a stiffness matrix (non-positive couplings give
/// the discrete maximum principle).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct A2Audit {
    pub off_diagonal_entries: usize,
    pub positive_entries: usize,
    /// Largest `a_ij / sqrt(a_ii a_jj)` over positive off-diagonal entries.
    pub worst_ratio: f64,
}

impl A2Audit {
    pub fn passes(&self) -> bool {
        self.positive_entries == 0
    }
}

pub fn a2_audit(a: &CsrMatrix) -> A2Audit {
    let d = a.diagonal();
    let mut out = A2Audit::default();
    for i in 0..a.n() {
        for (j, v) in a.row(i) {
            if i == j {
                continue;
            }
            out.off_diagonal_entries += 1;
            let scale = (d[i] * d[j]).abs().sqrt();
            if v > 1e-12 * scale {
                out.positive_entries += 1;
                out.worst_ratio = out.worst_ratio.max(v / scale);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_box_mesh, Region, Tet};
    use crate::molio::PointCharge;
    use approx::assert_relative_eq;

    fn reference_tet() -> TetMesh {
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        TetMesh::from_parts(v, vec![Tet { vertices: [0, 1, 2, 3], region: Region::Solvent, generation: 0 }], None, None)
            .unwrap()
    }

    fn uniform(eps: f64, kappa2: f64) -> ChargeSystem {
        ChargeSystem::neutral(eps, eps, kappa2).unwrap()
    }

    #[test]
    fn element_rows_sum_to_zero() {
        let m = reference_tet();
        let s = FemSpace::new(&m).unwrap();
        let a = assemble_bilinear(&s, &uniform(1.0, 0.0));
        for i in 0..4 {
            let sum: f64 = a.row(i).map(|(_, v)| v).sum();
            assert!(sum.abs() < 1e-14);
        }
        assert_relative_eq!(a.get(0, 0), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn stiffness_scales_linearly() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let s = FemSpace::new(&m).unwrap();
        let a1 = assemble_bilinear(&s, &uniform(1.0, 0.0));
        let a3 = assemble_bilinear(&s, &uniform(3.0, 0.0));
        for (x, y) in a1.values().iter().zip(a3.values()) {
            assert_relative_eq!(3.0 * x, *y, epsilon = 1e-14);
        }
        assert!(a1.asymmetry() < 1e-14);
    }

    #[test]
    fn energy_of_linear_interpolant() {
        let m = build_box_mesh([1.0; 3], [3, 3, 3]).unwrap();
        let s = FemSpace::new(&m).unwrap();
        let v: Vec<f64> = m.vertices().iter().map(|p| p.x).collect();
        let eps = 2.5;
        let e = energy_norm(&s, &uniform(eps, 0.0), &v);
        assert_relative_eq!(e * e, eps, epsilon = 1e-12);
        let c = vec![4.0; m.num_vertices()];
        assert!(energy_norm(&s, &uniform(eps, 0.0), &c) < 1e-6);
    }

    #[test]
    fn nonlinear_terms() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let s = FemSpace::new(&m).unwrap();
        let cs = uniform(1.0, 2.0);
        let zero = vec![0.0; m.num_vertices()];
        let (b, j) = assemble_nonlinear(&s, &cs, &zero, None).unwrap();
        assert!(b.iter().all(|&x| x == 0.0));
        // Jacobian at zero: κ² times the mass matrix; total mass = κ² |Ω|.
        let total: f64 = j.values().iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-12);
        let c = 0.7;
        let u = vec![c; m.num_vertices()];
        let b = nonlinear_vector(&s, &cs, &u, None).unwrap();
        let lumped = s.assemble_vector(|t| Some([s.volume(t) / 4.0; 4]));
        for (x, y) in b.iter().zip(&lumped) {
            assert_relative_eq!(*x, 2.0 * c.sinh() * y, epsilon = 1e-12);
        }
        let big = vec![800.0; m.num_vertices()];
        assert!(matches!(nonlinear_vector(&s, &cs, &big, None), Err(FemError::Overflow { .. })));
        let (b, j) = assemble_nonlinear(&s, &uniform(1.0, 0.0), &u, None).unwrap();
        assert!(b.iter().all(|&x| x == 0.0) && j.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn twoterm_load_vanishes_for_uniform_dielectric() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let s = FemSpace::new(&m).unwrap();
        let cs = ChargeSystem::new(vec![PointCharge::new(Point::new(2.0, 2.0, 2.0), 1.0)], 4.0, 4.0, 0.0).unwrap();
        assert!(assemble_volume_load_twoterm(&s, &cs).unwrap().iter().all(|&x| x == 0.0));
        let neutral = ChargeSystem::neutral(2.0, 80.0, 0.0).unwrap();
        assert!(assemble_volume_load_twoterm(&s, &neutral).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn source_integrates_constants() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let s = FemSpace::new(&m).unwrap();
        let l = assemble_source(&s, &|_| 3.0);
        assert_relative_eq!(l.iter().sum::<f64>(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn kuhn_box_satisfies_a2() {
        let m = build_box_mesh([1.0; 3], [3, 3, 3]).unwrap();
        let s = FemSpace::new(&m).unwrap();
        assert!(a2_audit(&assemble_bilinear(&s, &uniform(1.0, 0.0))).passes());
    }
}
