use serde::Serialize;

use super::AfemError;
use crate::fem::FemSolution;
use crate::geometry::barycentric_point;
use crate::mesh::{Location, TetMesh};
use crate::molio::ChargeSystem;
use crate::splitting::{Scheme, SplitFields};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolvationResult {
    /// `½ Σ_i z_i (u^h + u)(x_i)`, times `scale`.
    pub energy: f64,
    /// Reaction potential `(u^h + u)(x_i)` at every charge.
    pub reaction_potentials: Vec<f64>,
    pub scale: f64,
}

/// Electrostatic solvation energy from a three-term solution. The reaction
/// field is interpolated at each charge position; `scale` converts from
/// reduced units.
pub fn solvation_energy(
    mesh: &TetMesh,
    cs: &ChargeSystem,
    split: &SplitFields,
    solution: &FemSolution,
    scale: f64,
) -> Result<SolvationResult, AfemError> {
    if split.scheme != Scheme::ThreeTerm {
        return Err(AfemError::WrongScheme(Scheme::ThreeTerm));
    }
    if solution.mesh_id != mesh.id() || split.mesh_id != mesh.id() {
        return Err(AfemError::Fem(crate::fem::FemError::Stale { mesh: mesh.id(), solution: solution.mesh_id }));
    }
    let mut reaction_potentials = Vec::with_capacity(cs.charges.len());
    let mut energy = 0.0;
    for (i, c) in cs.charges.iter().enumerate() {
        let Location::Inside { tet, bary } = mesh.locate_point(&c.point()) else {
            return Err(AfemError::ChargeOutside(i));
        };
        let vs = mesh.tets()[tet].vertices;
        let mut phi = 0.0;
        for (b, &v) in bary.iter().zip(&vs) {
            phi += b * (split.u_h[v as usize] + solution.values[v as usize]);
        }
        debug_assert!((barycentric_point(&mesh.tet_points(tet), &bary) - c.point()).norm() < 1e-8);
        reaction_potentials.push(phi);
        energy += 0.5 * c.z * phi;
    }
    Ok(SolvationResult { energy: energy * scale, reaction_potentials, scale })
}
