//! Potential splittings: the closed-form singular part `u^s`, the discrete
//! harmonic extension `u^h`, interface flux data `g_Γ`, outer Dirichlet data
//! and the a-priori barriers of the nonlinear component.
//!
//! Three-term: `ũ = u^s + u^h + u` in the molecule, `ũ = u` in the solvent,
//! with `[ε ∂_n u] = g_Γ := ε_m ∂_n(u^s + u^h)` across the interface.
//! Two-term: `ũ = u^s + u` everywhere; the dielectric jump enters as the
//! volume load `∇·((ε − ε_m)∇u^s)`.
//!
//! Weak-form sign: with `n` pointing from the molecule into the solvent,
//! integrating by parts gives `a(u, v) + (b(u), v) = −⟨g_Γ, v⟩_Γ`. The Born
//! ion (`g_Γ = −q/a²`, positive regular component) fixes this sign.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{self, FemError, FemSpace, JacobiCg, LinearSolver, MaskedOperator};
use crate::geometry::{Point, Vector};
use crate::mesh::{FaceTag, Region, TetMesh};
use crate::molio::ChargeSystem;

/// Points closer than this to a charge are treated as singular.
pub const SINGULAR_RADIUS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SplittingError {
    #[error("point {point:?} lies within {SINGULAR_RADIUS:e} of charge {charge}")]
    Singularity { charge: usize, point: [f64; 3] },
    #[error("molecular vertex {0} is not connected to the interface; the harmonic extension is singular")]
    Disconnected(usize),
    #[error("mesh has no molecular region with an interface")]
    NoInterface,
    #[error("interface face {0} has no molecular neighbour")]
    Tagging(usize),
    #[error("mesh has no solvent vertices")]
    EmptySolvent,
    #[error(transparent)]
    Fem(#[from] FemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    TwoTerm,
    ThreeTerm,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::TwoTerm => "two-term",
            Scheme::ThreeTerm => "three-term",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "two-term" | "twoterm" | "2" => Ok(Scheme::TwoTerm),
            "three-term" | "threeterm" | "3" => Ok(Scheme::ThreeTerm),
            other => Err(format!("unknown scheme '{other}' (expected two-term or three-term)")),
        }
    }
}

/// `u^s(x) = Σ z_i / (ε_m |x − x_i|)` and its gradient.
pub fn singular_potential(cs: &ChargeSystem, x: &Point) -> Result<(f64, Vector), SplittingError> {
    let mut value = 0.0;
    let mut grad = Vector::zeros();
    for (i, c) in cs.charges.iter().enumerate() {
        let d = x - c.point();
        let r = d.norm();
        if r < SINGULAR_RADIUS {
            return Err(SplittingError::Singularity { charge: i, point: [x.x, x.y, x.z] });
        }
        let w = c.z / cs.eps_m;
        value += w / r;
        grad -= d * (w / (r * r * r));
    }
    Ok((value, grad))
}

/// Screened-Coulomb Dirichlet data `g(x) = Σ (z_i/ε_s) e^{−κ|x−x_i|}/|x−x_i|`.
pub fn outer_boundary_data(cs: &ChargeSystem, x: &Point) -> f64 {
    let kappa = cs.kappa();
    cs.charges
        .iter()
        .map(|c| {
            let r = (x - c.point()).norm();
            c.z / cs.eps_s * (-kappa * r).exp() / r
        })
        .sum()
}

/// Discrete harmonic extension of `−u^s` from the interface into the molecule.
/// Returns a full-length nodal vector (zero on purely solvent vertices).
pub fn harmonic_extension(space: &FemSpace<'_>, cs: &ChargeSystem) -> Result<Vec<f64>, SplittingError> {
    let mesh = space.mesh();
    let flags = mesh.vertex_flags();
    let n = mesh.num_vertices();
    if !flags.iter().any(|f| f.molecular && f.interface) {
        return Err(SplittingError::NoInterface);
    }
    // Every molecular vertex must connect to the Dirichlet set through molecular tets.
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    for tet in mesh.tets().iter().filter(|t| t.region == Region::Molecular) {
        let r0 = find(&mut parent, tet.vertices[0]);
        for &v in &tet.vertices[1..] {
            let r = find(&mut parent, v);
            parent[r as usize] = r0;
        }
    }
    let dirichlet: Vec<bool> = flags.iter().map(|f| f.molecular && (f.interface || f.boundary)).collect();
    let mut anchored = vec![false; n];
    for v in 0..n {
        if dirichlet[v] {
            let r = find(&mut parent, v as u32);
            anchored[r as usize] = true;
        }
    }
    for v in 0..n {
        if flags[v].molecular && !anchored[find(&mut parent, v as u32) as usize] {
            return Err(SplittingError::Disconnected(v));
        }
    }

    let mut x0 = vec![0.0; n];
    for v in 0..n {
        if dirichlet[v] {
            x0[v] = -singular_potential(cs, &mesh.vertex(v as u32))?.0;
        }
    }
    let a = space.stiffness(|r| if r == Region::Molecular { 1.0 } else { 0.0 });
    let fixed: Vec<bool> = (0..n).map(|v| !flags[v].molecular || dirichlet[v]).collect();
    let mut rhs = vec![0.0; n];
    a.matvec(&x0, &mut rhs);
    for v in 0..n {
        rhs[v] = if fixed[v] { 0.0 } else { -rhs[v] };
    }
    let mut delta = vec![0.0; n];
    JacobiCg::default().solve(&MaskedOperator { matrix: &a, fixed: &fixed }, &rhs, &mut delta, 1e-10)?;
    Ok(x0.iter().zip(&delta).map(|(a, b)| a + b).collect())
}

/// Per-face `g_Γ = ε_m (∇u^s(x_F) + ∇u^h|_τm)·n_F`, `n_F` pointing into the
/// solvent; zero on non-interface faces. Without `u_h` only the `u^s` flux
/// is returned (two-term diagnostics).
pub fn interface_flux(space: &FemSpace<'_>, cs: &ChargeSystem, u_h: Option<&[f64]>) -> Result<Vec<f64>, SplittingError> {
    let mesh = space.mesh();
    let mut g = vec![0.0; mesh.faces().len()];
    for (f, face) in mesh.faces().iter().enumerate() {
        if face.tag != FaceTag::Interface {
            continue;
        }
        let owner = face.owner as usize;
        if mesh.tets()[owner].region != Region::Molecular {
            return Err(SplittingError::Tagging(f));
        }
        let centroid = crate::geometry::centroid(&mesh.face_points(f));
        let mut grad = singular_potential(cs, &centroid)?.1;
        if let Some(uh) = u_h {
            grad += space.gradient(owner, uh);
        }
        g[f] = cs.eps_m * grad.dot(&mesh.face_normal(f));
    }
    Ok(g)
}

/// `u^s` at the quadrature points of solvent elements (zero elsewhere).
pub fn singular_at_quadrature(space: &FemSpace<'_>, cs: &ChargeSystem) -> Result<Vec<[f64; 4]>, FemError> {
    let mesh = space.mesh();
    (0..mesh.num_tets())
        .map(|t| {
            if mesh.tets()[t].region == Region::Molecular {
                return Ok([0.0; 4]);
            }
            let q = space.quadrature_points(t);
            let mut out = [0.0; 4];
            for k in 0..4 {
                out[k] = singular_potential(cs, &q[k]).map_err(|_| FemError::Singularity(t))?.0;
            }
            Ok(out)
        })
        .collect()
}

/// A-priori bounds: `[u_minus, u_plus]` for the nonlinear component and
/// `[alpha, beta]` for the full regular component on the solvent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Barriers {
    pub u_minus: f64,
    pub u_plus: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `κ = 0`: no sinh term, bounds are `∓∞` and clamping is disabled.
    pub degenerate: bool,
}

impl Barriers {
    pub fn unbounded() -> Self {
        Self {
            u_minus: f64::NEG_INFINITY,
            u_plus: f64::INFINITY,
            alpha: f64::NEG_INFINITY,
            beta: f64::INFINITY,
            degenerate: true,
        }
    }

    pub fn clamp_bounds(&self) -> Option<(f64, f64)> {
        (!self.degenerate && self.alpha.is_finite() && self.beta.is_finite()).then_some((self.alpha, self.beta))
    }

    /// Largest violation of `u_minus ≤ u_n ≤ u_plus` over the given values.
    pub fn violation(&self, u_n: impl IntoIterator<Item = f64>) -> f64 {
        u_n.into_iter()
            .map(|v| (self.u_minus - v).max(v - self.u_plus).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// `α' = −sup_Ωs u_l`, `β' = −inf_Ωs u_l`, `α^n = min(α', 0)`, `β^n = max(β', 0)`,
/// `α = α^n + inf u_l`, `β = β^n + sup u_l` (extrema over solvent vertices).
pub fn compute_barriers(mesh: &TetMesh, cs: &ChargeSystem, u_l: &[f64]) -> Result<Barriers, SplittingError> {
    let solvent: Vec<f64> = mesh
        .vertex_flags()
        .iter()
        .zip(u_l)
        .filter(|(f, _)| f.solvent)
        .map(|(_, &u)| u)
        .collect();
    if solvent.is_empty() {
        return Err(SplittingError::EmptySolvent);
    }
    if cs.kappa2 == 0.0 {
        return Ok(Barriers::unbounded());
    }
    let sup = solvent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inf = solvent.iter().copied().fold(f64::INFINITY, f64::min);
    let u_minus = (-sup).min(0.0);
    let u_plus = (-inf).max(0.0);
    Ok(Barriers { u_minus, u_plus, alpha: u_minus + inf, beta: u_plus + sup, degenerate: false })
}

/// All splitting data for one mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitFields {
    pub scheme: Scheme,
    pub mesh_id: u64,
    /// Nodal harmonic extension (zero outside the molecule; all zero for two-term).
    pub u_h: Vec<f64>,
    /// Per-face interface flux (zero on non-interface faces).
    pub g_gamma: Vec<f64>,
    pub barriers: Barriers,
}

impl SplitFields {
    pub fn compute(space: &FemSpace<'_>, cs: &ChargeSystem, scheme: Scheme) -> Result<Self, SplittingError> {
        let mesh = space.mesh();
        let (u_h, g_gamma) = match scheme {
            Scheme::ThreeTerm => {
                let u_h = harmonic_extension(space, cs)?;
                let g = interface_flux(space, cs, Some(&u_h))?;
                (u_h, g)
            }
            Scheme::TwoTerm => (vec![0.0; mesh.num_vertices()], interface_flux(space, cs, None)?),
        };
        Ok(Self { scheme, mesh_id: mesh.id(), u_h, g_gamma, barriers: Barriers::unbounded() })
    }

    pub fn with_barriers(mut self, barriers: Barriers) -> Self {
        self.barriers = barriers;
        self
    }

    pub fn u_s(&self, cs: &ChargeSystem, x: &Point) -> Result<(f64, Vector), SplittingError> {
        singular_potential(cs, x)
    }

    pub fn g_outer(&self, cs: &ChargeSystem, x: &Point) -> f64 {
        outer_boundary_data(cs, x)
    }

    /// Dirichlet value of the regular component at a boundary point.
    pub fn dirichlet_value(&self, cs: &ChargeSystem, x: &Point) -> f64 {
        let g = outer_boundary_data(cs, x);
        match self.scheme {
            Scheme::ThreeTerm => g,
            Scheme::TwoTerm => g - singular_potential(cs, x).map_or(0.0, |s| s.0),
        }
    }

    /// Right-hand side `L` of the discrete problem.
    pub fn load(&self, space: &FemSpace<'_>, cs: &ChargeSystem) -> Result<Vec<f64>, FemError> {
        match self.scheme {
            Scheme::ThreeTerm => {
                let mut l = fem::assemble_interface_load(space.mesh(), &self.g_gamma);
                l.iter_mut().for_each(|v| *v = -*v);
                Ok(l)
            }
            Scheme::TwoTerm => fem::assemble_volume_load_twoterm(space, cs),
        }
    }

    /// Nodal full potential `ũ` from the regular component `u` (NaN at
    /// vertices that coincide with a charge).
    pub fn reconstruct_full(&self, mesh: &TetMesh, cs: &ChargeSystem, u: &[f64]) -> Vec<f64> {
        let flags = mesh.vertex_flags();
        (0..mesh.num_vertices())
            .map(|v| {
                let add_singular = match self.scheme {
                    Scheme::TwoTerm => true,
                    Scheme::ThreeTerm => flags[v].molecular && !flags[v].solvent,
                };
                if !add_singular {
                    return u[v];
                }
                match singular_potential(cs, &mesh.vertex(v as u32)) {
                    Ok((us, _)) => u[v] + us + self.u_h[v],
                    Err(_) => f64::NAN,
                }
            })
            .collect()
    }

    /// CSV dump of the interface flux: `face,x,y,z,area,g_gamma`.
    pub fn write_g_gamma_csv(&self, mesh: &TetMesh, out: &mut impl Write) -> io::Result<()> {
        writeln!(out, "face,x,y,z,area,g_gamma")?;
        for (f, face) in mesh.faces().iter().enumerate() {
            if face.tag != FaceTag::Interface {
                continue;
            }
            let c = crate::geometry::centroid(&mesh.face_points(f));
            writeln!(out, "{f},{},{},{},{},{}", c.x, c.y, c.z, mesh.face_area(f), self.g_gamma[f])?;
        }
        Ok(())
    }
}

/// Linear part `u_l` of the regular component: the same interface problem
/// and Dirichlet data `g`, without the sinh term (so `u − u_l` vanishes on ∂Ω).
pub fn linear_part(space: &FemSpace<'_>, cs: &ChargeSystem, split: &SplitFields) -> Result<Vec<f64>, FemError> {
    let linear = ChargeSystem { kappa2: 0.0, ..cs.clone() };
    let opts = fem::NewtonOptions { tol: 1e-10, ..Default::default() };
    let mut problem = fem::build_problem(space, cs, split, &opts)?;
    problem.cs = &linear;
    problem.shift = None;
    problem.bounds = None;
    Ok(fem::solve_nonlinear(&problem, None, &opts, &fem::JacobiCg::default())?.values)
}
