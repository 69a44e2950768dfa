use rayon::prelude::*;

use super::{AfemError, AfemOptions, AfemRun};
use crate::fem::{self, FemSpace};
use crate::geometry::{self, Point, Vector, QUAD4_BARY, QUAD4_WEIGHT};
use crate::mesh::{self, MarkedSet, TetMesh};
use crate::molio::{BornIon, ChargeSystem};
use crate::splitting::{Scheme, SplitFields};

/// Energy-norm error `|||u − u_h|||` of a discrete regular component.
pub trait ErrorOracle: Sync {
    fn energy_error(&self, mesh: &TetMesh, cs: &ChargeSystem, split: &SplitFields, u: &[f64])
        -> Result<f64, AfemError>;
}

/// Exact solution of the Born ion; the error integral uses the 4-point rule
/// on the 8 red-refined children of every element.
#[derive(Debug, Clone, Copy)]
pub struct BornOracle {
    pub ion: BornIon,
}

impl BornOracle {
    fn exact_gradient(&self, p: &Point, scheme: Scheme) -> Vector {
        let r = p.coords.norm();
        if r == 0.0 {
            return Vector::zeros();
        }
        p.coords * (self.ion.exact_regular_slope(r, scheme) / r)
    }
}

impl ErrorOracle for BornOracle {
    fn energy_error(
        &self,
        mesh: &TetMesh,
        cs: &ChargeSystem,
        split: &SplitFields,
        u: &[f64],
    ) -> Result<f64, AfemError> {
        if u.len() != mesh.num_vertices() {
            return Err(AfemError::Oracle(format!("{} values for {} vertices", u.len(), mesh.num_vertices())));
        }
        let space = FemSpace::new(mesh)?;
        let per_tet: Vec<f64> = (0..mesh.num_tets())
            .into_par_iter()
            .map(|t| {
                let eps = fem::permittivity(cs, mesh.tets()[t].region);
                let gh = space.gradient(t, u);
                let w = QUAD4_WEIGHT * space.volume(t) / 8.0;
                let mut s = 0.0;
                for child in geometry::red_children(&mesh.tet_points(t)) {
                    for b in &QUAD4_BARY {
                        let x = geometry::barycentric_point(&child, b);
                        s += w * (self.exact_gradient(&x, split.scheme) - gh).norm_squared();
                    }
                }
                eps * s
            })
            .collect();
        Ok(per_tet.iter().sum::<f64>().sqrt())
    }
}

/// Error against a reference solution on a uniformly refined descendant mesh.
#[derive(Debug, Clone)]
pub struct ReferenceOracle {
    pub mesh: TetMesh,
    pub values: Vec<f64>,
}

impl ReferenceOracle {
    /// Solve on `refine(finest, all, ell)`.
    pub fn compute(finest: &TetMesh, cs: &ChargeSystem, opts: &AfemOptions, ell: u32) -> Result<Self, AfemError> {
        let fine = mesh::refine(finest, &MarkedSet::all(finest), ell)?;
        let level = super::solve_on(fine, cs, opts, None)?;
        Ok(Self { mesh: level.mesh, values: level.solution.values })
    }

    /// Overwrite the `error` column of a finished run.
    pub fn fill(&self, run: &mut AfemRun, cs: &ChargeSystem) -> Result<(), AfemError> {
        for (rec, level) in run.trace.records.iter_mut().zip(&run.levels) {
            rec.error = Some(self.energy_error(&level.mesh, cs, &level.split, &level.solution.values)?);
        }
        Ok(())
    }
}

impl ErrorOracle for ReferenceOracle {
    fn energy_error(
        &self,
        mesh: &TetMesh,
        cs: &ChargeSystem,
        _split: &SplitFields,
        u: &[f64],
    ) -> Result<f64, AfemError> {
        if mesh.lineage() != self.mesh.lineage() || u.len() > self.mesh.num_vertices() {
            return Err(AfemError::Oracle("reference mesh is not a refinement of this mesh".into()));
        }
        let space = FemSpace::new(&self.mesh)?;
        let diff: Vec<f64> = self.mesh.prolongate(u).iter().zip(&self.values).map(|(a, b)| a - b).collect();
        Ok(fem::energy_norm(&space, cs, &diff))
    }
}
