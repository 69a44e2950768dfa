//! Run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afem::AfemOptions;
use crate::estimate::EstimatorVariant;
use crate::fem::NewtonOptions;
use crate::molio::{self, BornIon};
use crate::splitting::Scheme;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config references missing file {0}")]
    MissingFile(PathBuf),
}

/// The problem to solve; exactly one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Problem {
    /// Single ion at the origin; the dielectric constants come from `physics`.
    Born { radius: f64, charge: f64, domain_radius: f64 },
    /// Charges and radii from a PQR file.
    Pqr { path: PathBuf },
    /// `sin(πx)sin(πy)sin(πz)` on the unit cube with `ε = 1`, `κ² = 1`.
    Manufactured { id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub eps_m: f64,
    pub eps_s: f64,
    pub kappa2: f64,
    /// Multiplies raw PQR charges into reduced units.
    pub charge_scale: f64,
    /// Multiplies reduced solvation energies into the reporting unit.
    pub energy_scale: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            eps_m: 2.0,
            eps_s: 80.0,
            kappa2: 0.0,
            charge_scale: molio::reduced_charge_scale(molio::ROOM_TEMPERATURE),
            energy_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshConfig {
    /// Graded ball mesh for the Born problem.
    Ball { subdivision: usize },
    /// Kuhn box around the molecule; tets whose centroid has Gaussian
    /// density above `isovalue` are molecular.
    Box { cells: usize, padding: f64, blobbyness: f64, isovalue: f64 },
    /// `.node`/`.ele`-style file with region codes.
    Import { path: PathBuf },
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig::Ball { subdivision: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AfemConfig {
    pub theta: f64,
    pub ell: u32,
    pub max_iterations: usize,
    pub eta_target: Option<f64>,
    pub max_tets: Option<usize>,
    pub estimator: EstimatorVariant,
    pub clamp: bool,
    pub snap: bool,
    pub newton_tol: f64,
    pub newton_max_iterations: usize,
}

impl Default for AfemConfig {
    fn default() -> Self {
        let o = AfemOptions::default();
        Self {
            theta: o.theta,
            ell: o.ell,
            max_iterations: o.max_iterations,
            eta_target: None,
            max_tets: None,
            estimator: o.estimator,
            clamp: o.newton.clamp,
            snap: o.snap,
            newton_tol: o.newton.tol,
            newton_max_iterations: o.newton.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a VTK snapshot of the final mesh and solution.
    pub vtk: bool,
    /// Write every level's mesh and solution, not just the last.
    pub snapshots: bool,
    pub newton_log: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("pbe-output"), vtk: true, snapshots: false, newton_log: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub problem: Problem,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub afem: AfemConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_scheme() -> Scheme {
    Scheme::ThreeTerm
}

impl Default for RunConfig {
    /// The reference Born ion.
    fn default() -> Self {
        let ion = BornIon::reference();
        Self {
            scheme: Scheme::ThreeTerm,
            problem: Problem::Born { radius: ion.radius, charge: ion.charge, domain_radius: ion.domain_radius },
            physics: Physics::default(),
            mesh: MeshConfig::default(),
            afem: AfemConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(crate::io_err(path))?;
        let cfg = Self::parse(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let a = &self.afem;
        if !(a.theta > 0.0 && a.theta <= 1.0) {
            return bad(format!("afem.theta must lie in (0, 1], got {}", a.theta));
        }
        if a.ell == 0 {
            return bad("afem.ell must be at least 1".into());
        }
        if !(a.newton_tol > 0.0 && a.newton_tol < 1.0) {
            return bad(format!("afem.newton_tol must lie in (0, 1), got {}", a.newton_tol));
        }
        let p = &self.physics;
        if !(p.eps_m > 0.0 && p.eps_s > 0.0) {
            return bad("physics: dielectric constants must be positive".into());
        }
        if !(p.kappa2 >= 0.0 && p.kappa2.is_finite()) {
            return bad(format!("physics.kappa2 must be non-negative, got {}", p.kappa2));
        }
        if !(p.charge_scale > 0.0 && p.energy_scale > 0.0) {
            return bad("physics: scales must be positive".into());
        }
        match &self.problem {
            Problem::Born { radius, domain_radius, .. } => {
                if !(*radius > 0.0 && radius < domain_radius) {
                    return bad(format!("problem: need 0 < radius < domain_radius, got {radius}, {domain_radius}"));
                }
                if !matches!(self.mesh, MeshConfig::Ball { .. } | MeshConfig::Import { .. }) {
                    return bad("the born problem needs a ball or imported mesh".into());
                }
            }
            Problem::Pqr { path } => {
                if !path.exists() {
                    return Err(ConfigError::MissingFile(path.clone()));
                }
                if matches!(self.mesh, MeshConfig::Ball { .. }) {
                    return bad("pqr problems need a box or imported mesh".into());
                }
            }
            Problem::Manufactured { id } => {
                if id != "sine" {
                    return bad(format!("unknown manufactured solution {id:?} (known: \"sine\")"));
                }
            }
        }
        match &self.mesh {
            MeshConfig::Ball { subdivision } if *subdivision == 0 => bad("mesh.subdivision must be at least 1".into()),
            MeshConfig::Box { cells, padding, blobbyness, .. } if *cells == 0 || !(*padding >= 0.0) || !(*blobbyness < 0.0) => {
                bad("mesh: need cells > 0, padding ≥ 0 and negative blobbyness".into())
            }
            MeshConfig::Import { path } if !path.exists() => Err(ConfigError::MissingFile(path.clone())),
            _ => Ok(()),
        }
    }

    pub fn born_ion(&self) -> Option<BornIon> {
        match self.problem {
            Problem::Born { radius, charge, domain_radius } => Some(BornIon {
                radius,
                charge,
                eps_m: self.physics.eps_m,
                eps_s: self.physics.eps_s,
                domain_radius,
            }),
            _ => None,
        }
    }

    pub fn afem_options(&self) -> AfemOptions {
        let a = &self.afem;
        AfemOptions {
            scheme: self.scheme,
            theta: a.theta,
            ell: a.ell,
            max_iterations: a.max_iterations,
            eta_target: a.eta_target,
            max_tets: a.max_tets,
            estimator: a.estimator,
            newton: NewtonOptions { tol: a.newton_tol, max_iterations: a.newton_max_iterations, clamp: a.clamp, ..Default::default() },
            snap: a.snap,
            ..Default::default()
        }
    }
}
