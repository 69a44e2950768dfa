//! The SOLVE → ESTIMATE → MARK → REFINE loop and its post-processing.

mod compare;
mod contraction;
mod manufactured;
mod oracle;
mod solvation;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::{self, EstimateError, EstimatorVariant, IndicatorSet};
use crate::fem::{self, FemError, FemSolution, FemSpace, NewtonOptions};
use crate::mesh::{self, MeshError, RefineOptions, TetMesh};
use crate::molio::ChargeSystem;
use crate::splitting::{self, Scheme, SplitFields, SplittingError};

pub use compare::{scheme_comparison, RegionErrors, SchemeComparison, SchemeReport};
pub use manufactured::{sine_convergence, sine_exact, sine_solve, ConvergenceRow};
pub use contraction::{contraction_check, ContractionReport, QUASI_ORTHOGONALITY_LAMBDA};
pub use oracle::{BornOracle, ErrorOracle, ReferenceOracle};
pub use solvation::{solvation_energy, SolvationResult};

#[derive(Debug, Error)]
pub enum AfemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Splitting(#[from] SplittingError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("AFEM iteration {iteration}: {source}")]
    At {
        iteration: usize,
        #[source]
        source: Box<AfemError>,
    },
    #[error("charge {0} lies outside the mesh")]
    ChargeOutside(usize),
    #[error("operation requires the {0} scheme")]
    WrongScheme(Scheme),
    #[error("error oracle: {0}")]
    Oracle(String),
    #[error("invalid AFEM parameter: {0}")]
    InvalidParameter(String),
}

impl AfemError {
    /// Innermost error, skipping iteration annotations.
    pub fn root(&self) -> &AfemError {
        match self {
            AfemError::At { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AfemOptions {
    pub scheme: Scheme,
    pub theta: f64,
    pub ell: u32,
    /// Number of refinements (the trace has at most `max_iterations + 1` records).
    pub max_iterations: usize,
    pub eta_target: Option<f64>,
    /// Stop before refining a mesh with at least this many tets.
    pub max_tets: Option<usize>,
    pub estimator: EstimatorVariant,
    pub newton: NewtonOptions,
    pub snap: bool,
    pub warm_start: bool,
    /// Compute barriers from the linear part when `κ > 0`.
    pub barriers: bool,
}

impl Default for AfemOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::ThreeTerm,
            theta: 0.5,
            ell: 1,
            max_iterations: 5,
            eta_target: None,
            max_tets: None,
            estimator: EstimatorVariant::Paper,
            newton: NewtonOptions::default(),
            snap: true,
            warm_start: true,
            barriers: true,
        }
    }
}

/// `λ = 1 − 2^{−ℓ/3}`, the estimator-reduction factor for `ℓ` bisections in 3D.
pub fn reduction_factor(ell: u32) -> f64 {
    1.0 - 2f64.powf(-(ell as f64) / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub tets: usize,
    pub vertices: usize,
    pub eta: f64,
    pub osc: f64,
    pub eta_d2: f64,
    /// `e_k = |||u − u_k|||` when an oracle is available.
    pub error: Option<f64>,
    /// `E_k = |||u_k − u_{k+1}|||` evaluated on mesh `k+1`.
    pub increment: Option<f64>,
    pub newton_iterations: usize,
    pub marked: usize,
    pub wall_time_s: f64,
    /// Max `‖u_h‖_∞` over vertices.
    pub max_abs_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfemTrace {
    pub scheme: Scheme,
    pub theta: f64,
    pub ell: u32,
    pub lambda: f64,
    pub estimator: EstimatorVariant,
    pub records: Vec<IterationRecord>,
}

impl AfemTrace {
    /// CSV of the numerical columns (wall time is left out so reruns compare
    /// bit for bit).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "iteration,tets,vertices,eta,osc,eta_d2,error,increment,newton_iterations,marked,max_abs_u\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.12e}"));
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{:.12e},{:.12e},{:.12e},{},{},{},{},{:.12e}\n",
                r.iteration,
                r.tets,
                r.vertices,
                r.eta,
                r.osc,
                r.eta_d2,
                opt(r.error),
                opt(r.increment),
                r.newton_iterations,
                r.marked,
                r.max_abs_u
            ));
        }
        s
    }
}

/// One AFEM level: mesh, split data, solution and indicators.
#[derive(Debug, Clone)]
pub struct AfemLevel {
    pub mesh: TetMesh,
    pub split: SplitFields,
    pub solution: FemSolution,
    pub indicators: IndicatorSet,
}

#[derive(Debug, Clone)]
pub struct AfemRun {
    pub trace: AfemTrace,
    pub levels: Vec<AfemLevel>,
}

impl AfemRun {
    pub fn last(&self) -> &AfemLevel {
        self.levels.last().expect("at least one level")
    }
}

/// Split fields (with barriers when `κ > 0`) on one mesh.
pub fn prepare_split(
    space: &FemSpace<'_>,
    cs: &ChargeSystem,
    scheme: Scheme,
    barriers: bool,
) -> Result<SplitFields, AfemError> {
    let split = SplitFields::compute(space, cs, scheme)?;
    if barriers && cs.kappa2 > 0.0 {
        let u_l = splitting::linear_part(space, cs, &split)?;
        let b = splitting::compute_barriers(space.mesh(), cs, &u_l)?;
        return Ok(split.with_barriers(b));
    }
    Ok(split)
}

/// Solve on a single mesh.
pub fn solve_on(
    mesh: TetMesh,
    cs: &ChargeSystem,
    opts: &AfemOptions,
    initial: Option<&[f64]>,
) -> Result<AfemLevel, AfemError> {
    let space = FemSpace::new(&mesh)?;
    let split = prepare_split(&space, cs, opts.scheme, opts.barriers)?;
    let solution = fem::newton_solve(&space, cs, &split, initial, &opts.newton)?;
    let indicators = estimate::estimate(&space, cs, &split, &solution, opts.estimator)?;
    drop(space);
    Ok(AfemLevel { mesh, split, solution, indicators })
}

/// Run the adaptive loop from `mesh0`.
pub fn run_afem(
    mesh0: TetMesh,
    cs: &ChargeSystem,
    opts: &AfemOptions,
    oracle: Option<&dyn ErrorOracle>,
) -> Result<AfemRun, AfemError> {
    if !(opts.theta > 0.0 && opts.theta <= 1.0) {
        return Err(AfemError::InvalidParameter(format!("theta must lie in (0, 1], got {}", opts.theta)));
    }
    if opts.ell == 0 {
        return Err(AfemError::InvalidParameter("ell must be at least 1".into()));
    }
    let at = |iteration: usize| move |e: AfemError| AfemError::At { iteration, source: Box::new(e) };
    let mut levels: Vec<AfemLevel> = Vec::new();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut mesh = mesh0;
    for k in 0.. {
        let start = Instant::now();
        let initial = match levels.last() {
            Some(prev) if opts.warm_start => Some(mesh.prolongate(&prev.solution.values)),
            _ => None,
        };
        let level = solve_on(mesh, cs, opts, initial.as_deref()).map_err(at(k))?;
        if let Some(prev) = levels.last() {
            let space = FemSpace::new(&level.mesh)?;
            let diff: Vec<f64> = level
                .mesh
                .prolongate(&prev.solution.values)
                .iter()
                .zip(&level.solution.values)
                .map(|(a, b)| a - b)
                .collect();
            records[k - 1].increment = Some(fem::energy_norm(&space, cs, &diff));
        }
        let error = match oracle {
            Some(o) => Some(o.energy_error(&level.mesh, cs, &level.split, &level.solution.values).map_err(at(k))?),
            None => None,
        };
        let stop = k >= opts.max_iterations
            || opts.eta_target.is_some_and(|t| level.indicators.eta() <= t)
            || opts.max_tets.is_some_and(|m| level.mesh.num_tets() >= m);
        let marking = if stop { None } else { Some(estimate::mark(&level.indicators, opts.theta).map_err(|e| at(k)(e.into()))?) };
        let refined = match &marking {
            Some(m) if !m.converged => Some(
                mesh::refine_with(&level.mesh, &m.marked, opts.ell, &RefineOptions { snap: opts.snap, ..Default::default() })
                    .map_err(|e| at(k)(e.into()))?
                    .0,
            ),
            _ => None,
        };
        records.push(IterationRecord {
            iteration: k,
            tets: level.mesh.num_tets(),
            vertices: level.mesh.num_vertices(),
            eta: level.indicators.eta(),
            osc: level.indicators.osc(),
            eta_d2: level.indicators.max_eta_d2,
            error,
            increment: None,
            newton_iterations: level.solution.iterations,
            marked: marking.as_ref().map_or(0, |m| m.marked.len()),
            wall_time_s: start.elapsed().as_secs_f64(),
            max_abs_u: level.solution.values.iter().fold(0.0, |m, v| m.max(v.abs())),
        });
        levels.push(level);
        match refined {
            Some(next) => mesh = next,
            None => break,
        }
    }
    Ok(AfemRun {
        trace: AfemTrace {
            scheme: opts.scheme,
            theta: opts.theta,
            ell: opts.ell,
            lambda: reduction_factor(opts.ell),
            estimator: opts.estimator,
            records,
        },
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_ball_mesh;
    use crate::molio::BornIon;

    #[test]
    fn lambda_for_single_bisection() {
        assert!((reduction_factor(1) - 0.206_299_474_015_900_3).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_gives_one_record() {
        let ion = BornIon::reference();
        let mesh = build_ball_mesh(5.0, 1.0, 1).unwrap();
        let opts = AfemOptions { max_iterations: 0, ..Default::default() };
        let run = run_afem(mesh, &ion.charge_system(), &opts, None).unwrap();
        assert_eq!(run.trace.records.len(), 1);
        assert_eq!(run.trace.records[0].marked, 0);
    }

    #[test]
    fn theta_one_marks_everything() {
        let ion = BornIon::reference();
        let mesh = build_ball_mesh(5.0, 1.0, 1).unwrap();
        let opts = AfemOptions { max_iterations: 1, theta: 1.0, ..Default::default() };
        let run = run_afem(mesh, &ion.charge_system(), &opts, None).unwrap();
        let l0 = &run.levels[0];
        let positive = l0.indicators.eta2.iter().filter(|&&e| e > 0.0).count();
        assert_eq!(run.trace.records[0].marked, positive);
        assert!(run.trace.records[0].increment.is_some());
    }

    #[test]
    fn invalid_theta() {
        let mesh = build_ball_mesh(5.0, 1.0, 1).unwrap();
        let opts = AfemOptions { theta: 1.5, ..Default::default() };
        assert!(matches!(
            run_afem(mesh, &BornIon::reference().charge_system(), &opts, None),
            Err(AfemError::InvalidParameter(_))
        ));
    }
}
