//! Residual a-posteriori indicators, oscillation, data indicator and Dörfler marking.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{self, FemSolution, FemSpace};
use crate::geometry::{Point, QUAD4_WEIGHT};
use crate::mesh::{FaceTag, MarkedSet, TetMesh};
use crate::molio::ChargeSystem;
use crate::splitting::{Scheme, SplitFields};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("solution belongs to mesh {solution}, but the mesh is {mesh}")]
    Stale { mesh: u64, solution: u64 },
    #[error("theta must lie in (0, 1], got {0}")]
    Theta(f64),
    #[error("estimator is zero but the error is {0:e}: reliability violated")]
    Reliability(f64),
    #[error(transparent)]
    Fem(#[from] fem::FemError),
}

/// Interface treatment of the face residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorVariant {
    /// Jump term on every face plus a separate `h_F ‖g_Γ‖²` term on interface faces.
    #[default]
    Paper,
    /// `h_F ‖n·[ε∇u_h] − g_Γ‖²` on interface faces.
    Combined,
}

impl fmt::Display for EstimatorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorVariant::Paper => "paper",
            EstimatorVariant::Combined => "combined",
        })
    }
}

impl FromStr for EstimatorVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(EstimatorVariant::Paper),
            "combined" => Ok(EstimatorVariant::Combined),
            other => Err(format!("unknown estimator '{other}' (expected paper or combined)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSet {
    pub mesh_id: u64,
    pub variant: EstimatorVariant,
    pub eta2: Vec<f64>,
    pub osc2: Vec<f64>,
    pub eta_d2: Vec<f64>,
    pub total_eta2: f64,
    pub total_osc2: f64,
    /// `η²(D, T) = max_τ η²(D, τ)`.
    pub max_eta_d2: f64,
}

impl IndicatorSet {
    pub fn eta(&self) -> f64 {
        self.total_eta2.sqrt()
    }

    pub fn osc(&self) -> f64 {
        self.total_osc2.sqrt()
    }
}

/// Flux data entering the interface residual, such that the exact solution
/// satisfies `n·[ε∇u] = g` (jump = solvent side minus molecular side).
fn interface_data(split: &SplitFields, cs: &ChargeSystem) -> Vec<f64> {
    match split.scheme {
        Scheme::ThreeTerm => split.g_gamma.clone(),
        // The stored two-term value is ε_m ∂_n u^s; the jump it induces is −(ε_s − ε_m) ∂_n u^s.
        Scheme::TwoTerm => {
            let f = -(cs.eps_s - cs.eps_m) / cs.eps_m;
            split.g_gamma.iter().map(|g| f * g).collect()
        }
    }
}

/// Indicators for a solution produced on `space`'s mesh.
pub fn estimate(
    space: &FemSpace<'_>,
    cs: &ChargeSystem,
    split: &SplitFields,
    u: &FemSolution,
    variant: EstimatorVariant,
) -> Result<IndicatorSet, EstimateError> {
    let id = space.mesh().id();
    if u.mesh_id != id {
        return Err(EstimateError::Stale { mesh: id, solution: u.mesh_id });
    }
    if split.mesh_id != id {
        return Err(EstimateError::Stale { mesh: id, solution: split.mesh_id });
    }
    estimate_values(space, cs, split, &u.values, variant)
}

/// Indicators of an arbitrary nodal field (used e.g. for monotonicity audits
/// of a transferred function).
pub fn estimate_values(
    space: &FemSpace<'_>,
    cs: &ChargeSystem,
    split: &SplitFields,
    u: &[f64],
    variant: EstimatorVariant,
) -> Result<IndicatorSet, EstimateError> {
    let mesh = space.mesh();
    if u.len() != mesh.num_vertices() {
        return Err(fem::FemError::Size { expected: mesh.num_vertices(), got: u.len() }.into());
    }
    let nt = mesh.num_tets();
    let shift = match split.scheme {
        Scheme::TwoTerm if cs.kappa2 > 0.0 => Some(crate::splitting::singular_at_quadrature(space, cs)?),
        _ => None,
    };
    let grads: Vec<_> = (0..nt).map(|t| space.gradient(t, u)).collect();
    let diam: Vec<f64> = (0..nt).map(|t| mesh.diameter(t)).collect();
    let mut eta2 = vec![0.0; nt];
    let mut osc2 = vec![0.0; nt];
    for t in 0..nt {
        let region = mesh.tets()[t].region;
        let k2 = fem::ionic_strength(cs, region);
        if k2 > 0.0 {
            let uq = space.at_quadrature(t, u);
            let mut int = 0.0;
            for q in 0..4 {
                let x = uq[q] + shift.as_ref().map_or(0.0, |s| s[t][q]);
                int += (k2 * x.sinh()).powi(2);
            }
            eta2[t] += diam[t].powi(2) * int * QUAD4_WEIGHT * space.volume(t);
        }
        osc2[t] += diam[t].powi(4) * grads[t].norm_squared() * space.volume(t);
    }
    let g = interface_data(split, cs);
    for (f, face) in mesh.faces().iter().enumerate() {
        let Some(nb) = face.neighbor else { continue };
        let o = face.owner as usize;
        let nb = nb as usize;
        let n = mesh.face_normal(f);
        let eps_o = fem::permittivity(cs, mesh.tets()[o].region);
        let eps_n = fem::permittivity(cs, mesh.tets()[nb].region);
        let jump = (grads[nb] * eps_n - grads[o] * eps_o).dot(&n);
        let h_f = mesh.face_diameter(f);
        let area = mesh.face_area(f);
        let (face_term, data_term) = match (face.tag, variant) {
            (FaceTag::Interface, EstimatorVariant::Paper) => (0.5 * h_f * jump * jump * area, h_f * g[f] * g[f] * area),
            (FaceTag::Interface, EstimatorVariant::Combined) => (0.5 * h_f * (jump - g[f]).powi(2) * area, 0.0),
            _ => (0.5 * h_f * jump * jump * area, 0.0),
        };
        for t in [o, nb] {
            eta2[t] += face_term + data_term;
        }
    }
    let eta_d2 = data_indicator(mesh, cs, split, u);
    let total_eta2 = eta2.iter().sum();
    let total_osc2 = osc2.iter().sum();
    let max_eta_d2 = eta_d2.iter().copied().fold(0.0, f64::max);
    Ok(IndicatorSet { mesh_id: mesh.id(), variant, eta2, osc2, eta_d2, total_eta2, total_osc2, max_eta_d2 })
}

/// `η²(D,τ) = ‖ε‖²_{∞,ω_τ} + h_τ² (κ² cosh(max(|u₋|,|u₊|)))²`. Without finite
/// barriers the nodal maximum of `|u|` on τ stands in for the bound.
fn data_indicator(mesh: &TetMesh, cs: &ChargeSystem, split: &SplitFields, u: &[f64]) -> Vec<f64> {
    let flags = mesh.vertex_flags();
    let b = &split.barriers;
    (0..mesh.num_tets())
        .map(|t| {
            let tet = &mesh.tets()[t];
            let mut eps: f64 = 0.0;
            for &v in &tet.vertices {
                let f = flags[v as usize];
                if f.molecular {
                    eps = eps.max(cs.eps_m);
                }
                if f.solvent {
                    eps = eps.max(cs.eps_s);
                }
            }
            let k2 = fem::ionic_strength(cs, tet.region);
            let nonlinear = if k2 > 0.0 {
                let chi = if b.degenerate {
                    tet.vertices.iter().map(|&v| u[v as usize].abs()).fold(0.0, f64::max)
                } else {
                    b.u_minus.abs().max(b.u_plus.abs())
                };
                mesh.diameter(t).powi(2) * (k2 * chi.cosh()).powi(2)
            } else {
                0.0
            };
            eps * eps + nonlinear
        })
        .collect()
}

/// Interface oscillation `Σ_{F⊂∂τ∩Γ} h_F ‖g − ḡ_F‖²_F` for a general
/// `g(face, x)`, with `ḡ_F` the face mean (3-point edge-midpoint rule).
pub fn interface_oscillation(mesh: &TetMesh, g: &dyn Fn(usize, &Point) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_tets()];
    for (f, face) in mesh.faces().iter().enumerate() {
        if face.tag != FaceTag::Interface {
            continue;
        }
        let [a, b, c] = mesh.face_points(f);
        let mids = [
            Point::from((a.coords + b.coords) * 0.5),
            Point::from((b.coords + c.coords) * 0.5),
            Point::from((a.coords + c.coords) * 0.5),
        ];
        let vals = mids.map(|x| g(f, &x));
        let mean = vals.iter().sum::<f64>() / 3.0;
        let area = mesh.face_area(f);
        let norm2 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0 * area;
        let term = mesh.face_diameter(f) * norm2;
        out[face.owner as usize] += term;
        if let Some(n) = face.neighbor {
            out[n as usize] += term;
        }
    }
    out
}

/// Result of Dörfler marking.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkOutcome {
    pub marked: MarkedSet,
    /// Total indicator was zero: nothing to refine.
    pub converged: bool,
    /// Fraction of the total η² carried by the marked set.
    pub coverage: f64,
}

/// Greedy Dörfler selection: indices sorted by `η²` descending (lower index
/// first on ties), shortest prefix with `Σ ≥ θ² Σ_T`.
pub fn dorfler_indices(eta2: &[f64], theta: f64) -> Result<Vec<u32>, EstimateError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(EstimateError::Theta(theta));
    }
    let mut order: Vec<u32> = (0..eta2.len() as u32).collect();
    order.sort_by(|&a, &b| eta2[b as usize].total_cmp(&eta2[a as usize]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| eta2[i as usize]).sum();
    if !(total > 0.0) {
        return Ok(Vec::new());
    }
    if theta >= 1.0 {
        return Ok(order.into_iter().filter(|&i| eta2[i as usize] > 0.0).collect());
    }
    let target = theta * theta * total;
    let mut sum = 0.0;
    let mut k = 0;
    while k < order.len() && sum < target {
        sum += eta2[order[k] as usize];
        k += 1;
    }
    order.truncate(k);
    Ok(order)
}

pub fn mark(ind: &IndicatorSet, theta: f64) -> Result<MarkOutcome, EstimateError> {
    let idx = dorfler_indices(&ind.eta2, theta)?;
    let converged = !(ind.total_eta2 > 0.0);
    let covered: f64 = idx.iter().map(|&i| ind.eta2[i as usize]).sum();
    let coverage = if converged { 0.0 } else { covered / ind.total_eta2 };
    Ok(MarkOutcome { marked: MarkedSet::from_indices(idx), converged, coverage })
}

/// Empirical `|||u − u_h|||² / η²`.
pub fn upper_bound_ratio(ind: &IndicatorSet, true_error_energy2: f64) -> Result<f64, EstimateError> {
    if ind.total_eta2 == 0.0 {
        return if true_error_energy2 > 0.0 { Err(EstimateError::Reliability(true_error_energy2)) } else { Ok(0.0) };
    }
    Ok(true_error_energy2 / ind.total_eta2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vector;
    use crate::mesh::{build_box_mesh, build_box_mesh_with, refine, Region, Tet};
    use crate::splitting::Barriers;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn neutral_split(mesh: &TetMesh) -> SplitFields {
        SplitFields {
            scheme: Scheme::ThreeTerm,
            mesh_id: mesh.id(),
            u_h: vec![0.0; mesh.num_vertices()],
            g_gamma: vec![0.0; mesh.faces().len()],
            barriers: Barriers::unbounded(),
        }
    }

    #[test]
    fn zero_field_has_zero_indicators() {
        let m = build_box_mesh_with([-1.0; 3], [2.0; 3], [2, 2, 2], |c| {
            if c.coords.amax() < 0.5 { Region::Molecular } else { Region::Solvent }
        })
        .unwrap();
        let s = FemSpace::new(&m).unwrap();
        let cs = ChargeSystem::neutral(2.0, 80.0, 3.0).unwrap();
        let ind = estimate_values(&s, &cs, &neutral_split(&m), &vec![0.0; m.num_vertices()], EstimatorVariant::Paper).unwrap();
        assert!(ind.eta2.iter().all(|&e| e == 0.0));
        assert_eq!(ind.total_eta2, 0.0);
    }

    #[test]
    fn linear_field_has_no_jumps() {
        let m = build_box_mesh([1.0; 3], [3, 3, 3]).unwrap();
        let s = FemSpace::new(&m).unwrap();
        let cs = ChargeSystem::neutral(1.0, 1.0, 0.0).unwrap();
        let u: Vec<f64> = m.vertices().iter().map(|p| 0.3 * p.x - p.y + 2.0 * p.z).collect();
        let ind = estimate_values(&s, &cs, &neutral_split(&m), &u, EstimatorVariant::Paper).unwrap();
        assert!(ind.total_eta2 < 1e-24, "{}", ind.total_eta2);
    }

    #[test]
    fn single_face_jump() {
        // Two tets sharing the face x = 0; u = max(x, 0) has gradient jump (1,0,0).
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
            Point::new(-1.0, 0.2, 0.2),
            Point::new(1.0, 0.2, 0.2),
        ];
        let tets = vec![
            Tet { vertices: [3, 0, 1, 2], region: Region::Solvent, generation: 0 },
            Tet { vertices: [4, 0, 1, 2], region: Region::Solvent, generation: 0 },
        ];
        let m = TetMesh::from_parts(v, tets, None, None).unwrap();
        let s = FemSpace::new(&m).unwrap();
        let cs = ChargeSystem::neutral(1.0, 1.0, 0.0).unwrap();
        let u = vec![0.0, 0.0, 0.0, 0.0, 1.0];
        let ind = estimate_values(&s, &cs, &neutral_split(&m), &u, EstimatorVariant::Paper).unwrap();
        let jump = (s.gradient(1, &u) - s.gradient(0, &u)).dot(&Vector::x());
        let f = m.faces().iter().position(|f| f.neighbor.is_some()).unwrap();
        let expected = 0.5 * m.face_diameter(f) * jump * jump * m.face_area(f);
        assert_relative_eq!(ind.eta2[0], expected, epsilon = 1e-14);
        assert_relative_eq!(ind.eta2[1], expected, epsilon = 1e-14);
    }

    #[test]
    fn non_constant_interface_data_oscillates() {
        let m = build_box_mesh_with([-1.0; 3], [2.0; 3], [2, 2, 2], |c| {
            if c.x < 0.0 { Region::Molecular } else { Region::Solvent }
        })
        .unwrap();
        let constant = interface_oscillation(&m, &|f, _| f as f64);
        assert!(constant.iter().all(|&v| v.abs() < 1e-30));
        let varying = interface_oscillation(&m, &|_, x| x.y);
        assert!(varying.iter().any(|&v| v > 0.0));
        let total: f64 = varying.iter().sum();
        // Refining halves h_F and quarters the variance: ≈ 1/8 per uniform level.
        let r = refine(&m, &MarkedSet::all(&m), 3).unwrap();
        let rt: f64 = interface_oscillation(&r, &|_, x| x.y).iter().sum();
        assert!(rt < 0.2 * total, "{rt} vs {total}");
    }

    #[test]
    fn dorfler_examples() {
        assert_eq!(dorfler_indices(&[16.0, 9.0, 4.0, 1.0], 0.5).unwrap(), vec![0]);
        assert_eq!(dorfler_indices(&[1.0, 0.0, 3.0, 2.0], 1.0).unwrap(), vec![2, 3, 0]);
        let eq = vec![1.0; 10];
        assert_eq!(dorfler_indices(&eq, 0.5).unwrap(), vec![0, 1, 2]);
        assert!(dorfler_indices(&[0.0, 0.0], 0.5).unwrap().is_empty());
        assert!(dorfler_indices(&eq, 1.5).is_err());
        assert!(dorfler_indices(&eq, 0.0).is_err());
    }

    #[test]
    fn dorfler_random_minimality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..10);
            let eta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
            let theta = rng.random_range(0.05..1.0);
            let idx = dorfler_indices(&eta, theta).unwrap();
            let total: f64 = eta.iter().sum();
            let sum: f64 = idx.iter().map(|&i| eta[i as usize]).sum();
            assert!(sum >= theta * theta * total * (1.0 - 1e-12));
            if let Some((&last, rest)) = idx.split_last() {
                let without: f64 = rest.iter().map(|&i| eta[i as usize]).sum();
                assert!(without < theta * theta * total || eta[last as usize] == 0.0);
            }
        }
    }

    #[test]
    fn upper_bound_ratio_cases() {
        let ind = IndicatorSet {
            mesh_id: 0,
            variant: EstimatorVariant::Paper,
            eta2: vec![0.0],
            osc2: vec![0.0],
            eta_d2: vec![0.0],
            total_eta2: 0.0,
            total_osc2: 0.0,
            max_eta_d2: 0.0,
        };
        assert_eq!(upper_bound_ratio(&ind, 0.0).unwrap(), 0.0);
        assert!(upper_bound_ratio(&ind, 1.0).is_err());
        let ind = IndicatorSet { total_eta2: 2.0, ..ind };
        assert_eq!(upper_bound_ratio(&ind, 1.0).unwrap(), 0.5);
    }
}
