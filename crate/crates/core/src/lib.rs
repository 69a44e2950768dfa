//! Adaptive finite elements for the regularized nonlinear Poisson-Boltzmann
//! equation on tetrahedral meshes.
//!
//! The crate is organised bottom-up:
//!
//! - [`molio`]: PQR ingestion, charge systems and the Born-ion analytic solution.
//! - [`mesh`]: conforming tetrahedral meshes, newest-vertex bisection with
//!   interface snapping, quality metrics, VTK / node-element I/O.
//! - [`surfgen`]: Gaussian molecular density, marching cubes and
//!   structure-tensor driven surface improvement / coarsening.
//! - [`splitting`]: singular and harmonic potential components, interface flux
//!   data and a-priori barriers.
//! - [`fem`]: P1 assembly, conjugate gradients and the damped Newton solver.
//! - [`estimate`]: residual indicators and Dörfler marking.
//! - [`afem`]: the SOLVE → ESTIMATE → MARK → REFINE loop, contraction monitor,
//!   solvation energy and scheme comparison.
//! - [`config`] and [`cli`]: run configuration and the `pbe-afem` command line.

pub mod afem;
pub mod cli;
pub mod config;
pub mod estimate;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod molio;
pub mod splitting;
pub mod surfgen;

use thiserror::Error;

pub use geometry::{Point, Vector};

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Molio(#[from] molio::MolioError),
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Surface(#[from] surfgen::SurfaceError),
    #[error(transparent)]
    Splitting(#[from] splitting::SplittingError),
    #[error(transparent)]
    Fem(#[from] fem::FemError),
    #[error(transparent)]
    Estimate(#[from] estimate::EstimateError),
    #[error(transparent)]
    Afem(#[from] afem::AfemError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl AsRef<std::path::Path>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.as_ref().display().to_string();
    move |source| Error::Io { path, source }
}
