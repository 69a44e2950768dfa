//! Structured mesh generators.
//!
//! Both generators split lattice cubes into the six Kuhn (Freudenthal)
//! tetrahedra `v, v+e_a, v+e_a+e_b, v+(1,1,1)` over all axis permutations,
//! with the same orientation in every cube. Listing the vertices along that
//! path makes the initial bisection tags compatible, so newest-vertex
//! bisection closes conformingly without extra bookkeeping.

use super::{MeshError, Region, SurfaceProjection, Tet, TetMesh};
use crate::geometry::Point;

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// The six Kuhn tets of the unit cube at lattice corner `c`, as lattice
/// coordinates in path order.
fn kuhn_tets(c: [i64; 3]) -> [[[i64; 3]; 4]; 6] {
    let mut out = [[[0; 3]; 4]; 6];
    for (n, perm) in PERMUTATIONS.iter().enumerate() {
        let mut p = c;
        out[n][0] = p;
        for (step, &axis) in perm.iter().enumerate() {
            p[axis] += 1;
            out[n][step + 1] = p;
        }
    }
    out
}

/// Axis-aligned box `[0, extent]` split into `cells` hexahedra, 6 tets each,
/// all tagged Solvent.
pub fn build_box_mesh(extent: [f64; 3], cells: [usize; 3]) -> Result<TetMesh, MeshError> {
    build_box_mesh_with([0.0; 3], extent, cells, |_| Region::Solvent)
}

/// Box mesh with an arbitrary origin; `region` is evaluated at each tet centroid.
pub fn build_box_mesh_with(
    origin: [f64; 3],
    extent: [f64; 3],
    cells: [usize; 3],
    region: impl Fn(&Point) -> Region,
) -> Result<TetMesh, MeshError> {
    if cells.contains(&0) {
        return Err(MeshError::Construction("box mesh needs at least one cell per axis".into()));
    }
    if extent.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(MeshError::Construction("box extents must be positive".into()));
    }
    let [nx, ny, nz] = cells;
    let index = |p: [i64; 3]| -> u32 { ((p[0] as usize * (ny + 1) + p[1] as usize) * (nz + 1) + p[2] as usize) as u32 };
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                vertices.push(Point::new(
                    origin[0] + extent[0] * i as f64 / nx as f64,
                    origin[1] + extent[1] * j as f64 / ny as f64,
                    origin[2] + extent[2] * k as f64 / nz as f64,
                ));
            }
        }
    }
    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for i in 0..nx as i64 {
        for j in 0..ny as i64 {
            for k in 0..nz as i64 {
                for path in kuhn_tets([i, j, k]) {
                    let v = path.map(index);
                    let c = crate::geometry::centroid(&v.map(|x| vertices[x as usize]));
                    tets.push(Tet { vertices: v, region: region(&c), generation: 0 });
                }
            }
        }
    }
    TetMesh::from_parts(vertices, tets, None, None)
}

/// Layer counts and radii of a ball mesh.
///
/// The lattice `[-N, N]^3` (`N = interface_layers + solvent_layers`) is mapped
/// shell by shell (max-norm shells) onto concentric spheres: shells inside
/// the interface blend from cubes to spheres with linear radii, outer shells
/// are spheres with geometrically graded radii reaching `outer_radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallMeshSpec {
    pub outer_radius: f64,
    pub interface_radius: f64,
    pub interface_layers: usize,
    pub solvent_layers: usize,
}

impl BallMeshSpec {
    /// Base layering (1 interface layer, 2 solvent layers) scaled by `2^(k-1)`.
    pub fn from_subdivision(outer_radius: f64, interface_radius: f64, subdivision: usize) -> Self {
        let s = 1usize << subdivision.saturating_sub(1).min(20);
        Self { outer_radius, interface_radius, interface_layers: s, solvent_layers: 2 * s }
    }

    pub fn build(&self) -> Result<TetMesh, MeshError> {
        let (a, r) = (self.interface_radius, self.outer_radius);
        if !(a > 0.0 && r > a && r.is_finite()) {
            return Err(MeshError::Construction(format!(
                "ball mesh needs 0 < interface radius ({a}) < outer radius ({r})"
            )));
        }
        if self.interface_layers == 0 || self.solvent_layers == 0 {
            return Err(MeshError::Construction("ball mesh needs at least one layer per region".into()));
        }
        let ni = self.interface_layers as i64;
        let n = ni + self.solvent_layers as i64;
        // Geometric solvent layers keep radial and tangential spacing
        // proportional to r.
        let grade = (r / a).ln() / (n - ni) as f64;
        let side = (2 * n + 1) as usize;
        let index = |p: [i64; 3]| -> u32 {
            (((p[0] + n) as usize * side + (p[1] + n) as usize) * side + (p[2] + n) as usize) as u32
        };
        let mut vertices = Vec::with_capacity(side * side * side);
        for i in -n..=n {
            for j in -n..=n {
                for k in -n..=n {
                    vertices.push(self.map_lattice([i, j, k], ni, n, grade));
                }
            }
        }
        let mut tets = Vec::with_capacity(6 * (2 * n as usize).pow(3));
        for i in -n..n {
            for j in -n..n {
                for k in -n..n {
                    // Max-norm layer of this cell.
                    let layer = [i, j, k].iter().map(|&c| if c < 0 { -c - 1 } else { c }).max().unwrap();
                    let region = if layer < ni { Region::Molecular } else { Region::Solvent };
                    for path in kuhn_tets([i, j, k]) {
                        tets.push(Tet { vertices: path.map(index), region, generation: 0 });
                    }
                }
            }
        }
        TetMesh::from_parts(
            vertices,
            tets,
            Some(SurfaceProjection::sphere(a)),
            Some(SurfaceProjection::sphere(r)),
        )
    }

    fn map_lattice(&self, p: [i64; 3], ni: i64, n: i64, grade: f64) -> Point {
        let m = p.iter().map(|c| c.abs()).max().unwrap();
        if m == 0 {
            return Point::origin();
        }
        let q = nalgebra::Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64);
        let on_sphere = q / q.norm();
        let (a, r) = (self.interface_radius, self.outer_radius);
        let dir = if m < ni {
            let t = m as f64 / ni as f64;
            let blended = q / m as f64 * (1.0 - t) + on_sphere * t;
            blended * (a * t)
        } else if m == ni {
            on_sphere * a
        } else if m == n {
            on_sphere * r
        } else {
            on_sphere * (a * (grade * (m - ni) as f64).exp())
        };
        Point::from(dir)
    }
}

/// Ball of radius `outer_radius` with a spherical molecular region of radius
/// `interface_radius`; `initial_subdivision = k` gives `1296 * 8^(k-1)` tets.
pub fn build_ball_mesh(outer_radius: f64, interface_radius: f64, initial_subdivision: usize) -> Result<TetMesh, MeshError> {
    if initial_subdivision == 0 {
        return Err(MeshError::Construction("initial subdivision must be at least 1".into()));
    }
    BallMeshSpec::from_subdivision(outer_radius, interface_radius, initial_subdivision).build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{FaceTag, MarkedSet};
    use approx::assert_relative_eq;

    #[test]
    fn unit_cube() {
        let m = build_box_mesh([1.0; 3], [1, 1, 1]).unwrap();
        assert_eq!(m.num_tets(), 6);
        assert_eq!(m.num_vertices(), 8);
        assert_relative_eq!(m.total_volume(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn box_counts_and_volume() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        assert_eq!(m.num_tets(), 48);
        let m = build_box_mesh([2.0, 1.0, 0.5], [3, 2, 5]).unwrap();
        assert_relative_eq!(m.total_volume(), 1.0, epsilon = 1e-12);
        m.audit().unwrap();
    }

    #[test]
    fn box_rejects_zero_cells() {
        assert!(build_box_mesh([1.0; 3], [1, 0, 1]).is_err());
    }

    #[test]
    fn ball_interface_is_exact() {
        let m = build_ball_mesh(5.0, 1.0, 1).unwrap();
        assert_eq!(m.num_tets(), 1296);
        m.audit().unwrap();
        let mut n_iface = 0;
        for f in m.faces().iter().filter(|f| f.tag == FaceTag::Interface) {
            n_iface += 1;
            for &v in &f.vertices {
                assert!((m.vertex(v).coords.norm() - 1.0).abs() < 1e-12);
            }
        }
        assert!(n_iface > 0);
        for f in m.faces().iter().filter(|f| f.tag == FaceTag::DomainBoundary) {
            for &v in &f.vertices {
                assert!((m.vertex(v).coords.norm() - 5.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ball_subdivision_halves_h() {
        let h = |k| {
            let m = build_ball_mesh(5.0, 1.0, k).unwrap();
            (0..m.num_tets()).map(|t| m.diameter(t)).fold(0.0, f64::max)
        };
        let ratio = h(2) / h(3);
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn ball_rejects_bad_radii() {
        assert!(build_ball_mesh(5.0, 0.0, 1).is_err());
        assert!(build_ball_mesh(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn kuhn_split_refines_conformingly() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let r = crate::mesh::refine(&m, &MarkedSet::all(&m), 3).unwrap();
        r.audit().unwrap();
        assert_eq!(r.num_tets(), 48 * 8);
    }
}
