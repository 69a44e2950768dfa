use serde::Serialize;

use super::{AfemError, AfemOptions};
use crate::mesh::TetMesh;
use crate::molio::BornIon;
use crate::splitting::Scheme;

/// Relative max-norm errors `max|e| / max|u|` over a vertex set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionErrors {
    pub vertices: usize,
    pub regular: f64,
    pub full: f64,
    /// `full / regular`.
    pub amplification: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeReport {
    pub scheme: Scheme,
    /// Solvent vertices (interface included).
    pub solvent: RegionErrors,
    /// Molecular vertices not on the interface, charge vertices excluded.
    pub molecular: RegionErrors,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeComparison {
    pub ion: BornIon,
    pub tets: usize,
    pub vertices: usize,
    pub reports: Vec<SchemeReport>,
}

impl SchemeComparison {
    pub fn report(&self, scheme: Scheme) -> Option<&SchemeReport> {
        self.reports.iter().find(|r| r.scheme == scheme)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scheme,region,vertices,regular_rel_error,full_rel_error,amplification\n");
        for r in &self.reports {
            for (name, e) in [("solvent", &r.solvent), ("molecular", &r.molecular)] {
                s.push_str(&format!(
                    "{},{},{},{:.6e},{:.6e},{:.6e}\n",
                    r.scheme, name, e.vertices, e.regular, e.full, e.amplification
                ));
            }
        }
        s
    }
}

#[derive(Default)]
struct Acc {
    n: usize,
    err_reg: f64,
    max_reg: f64,
    err_full: f64,
    max_full: f64,
}

impl Acc {
    fn push(&mut self, reg_h: f64, reg: f64, full_h: f64, full: f64) {
        self.n += 1;
        self.err_reg = self.err_reg.max((reg_h - reg).abs());
        self.max_reg = self.max_reg.max(reg.abs());
        self.err_full = self.err_full.max((full_h - full).abs());
        self.max_full = self.max_full.max(full.abs());
    }

    fn finish(&self) -> RegionErrors {
        let rel = |e: f64, m: f64| if m > 0.0 { e / m } else { e };
        let regular = rel(self.err_reg, self.max_reg);
        let full = rel(self.err_full, self.max_full);
        RegionErrors {
            vertices: self.n,
            regular,
            full,
            amplification: if regular > 0.0 { full / regular } else { f64::NAN },
        }
    }
}

/// Solve the Born ion on `mesh` with both splittings and compare the nodal
/// errors of the regular component and of the reconstructed full potential.
pub fn scheme_comparison(mesh: &TetMesh, ion: &BornIon, opts: &AfemOptions) -> Result<SchemeComparison, AfemError> {
    let cs = ion.charge_system();
    let mut reports = Vec::new();
    for scheme in [Scheme::TwoTerm, Scheme::ThreeTerm] {
        let o = AfemOptions { scheme, ..*opts };
        let level = super::solve_on(mesh.clone(), &cs, &o, None)?;
        let u = &level.solution.values;
        let full_h = level.split.reconstruct_full(&level.mesh, &cs, u);
        let mut solvent = Acc::default();
        let mut molecular = Acc::default();
        for (v, f) in level.mesh.vertex_flags().iter().enumerate() {
            let r = level.mesh.vertex(v as u32).coords.norm();
            if r < 1e-12 {
                continue;
            }
            let reg = ion.exact_regular(r, scheme).map_err(|e| AfemError::Oracle(e.to_string()))?;
            let full = ion.exact_full(r).map_err(|e| AfemError::Oracle(e.to_string()))?;
            if f.solvent {
                solvent.push(u[v], reg, full_h[v], full);
            } else if f.molecular {
                molecular.push(u[v], reg, full_h[v], full);
            }
        }
        reports.push(SchemeReport {
            scheme,
            solvent: solvent.finish(),
            molecular: molecular.finish(),
            newton_iterations: level.solution.iterations,
        });
    }
    Ok(SchemeComparison { ion: *ion, tets: mesh.num_tets(), vertices: mesh.num_vertices(), reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_ball_mesh;

    #[test]
    fn two_term_amplifies_by_eps_ratio_minus_one() {
        let ion = BornIon::reference();
        let mesh = build_ball_mesh(5.0, 1.0, 2).unwrap();
        let c = scheme_comparison(&mesh, &ion, &AfemOptions::default()).unwrap();
        let two = c.report(Scheme::TwoTerm).unwrap();
        let three = c.report(Scheme::ThreeTerm).unwrap();
        assert!((two.solvent.amplification - 39.0).abs() < 0.5, "{two:?}");
        assert!((three.solvent.amplification - 1.0).abs() < 1e-9, "{three:?}");
    }
}
