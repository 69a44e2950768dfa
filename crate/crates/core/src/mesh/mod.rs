//! Conforming tetrahedral meshes with region, interface and boundary tags.
//!
//! Every tetrahedron stores its vertices in *bisection order*: the refinement
//! edge of a tet with generation `g` is `(v[0], v[k])` with `k = 3 - g % 3`.
//! Geometric orientation is therefore not encoded in the vertex order; use
//! [`TetMesh::signed_volume`] when an orientation is needed.

mod build;
mod io;
mod locate;
mod quality;
mod refine;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Point};

pub use build::{build_ball_mesh, build_box_mesh, build_box_mesh_with, BallMeshSpec};
pub use io::{read_node_ele, write_node_ele, write_vtk, VtkField};
pub use locate::Location;
pub use quality::QualityReport;
pub use refine::{refine, refine_with, RefineOptions, RefineReport, SnapRecord};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh construction failed: {0}")]
    Construction(String),
    #[error("degenerate tetrahedron {tet} (volume {volume:e})")]
    Degenerate { tet: usize, volume: f64 },
    #[error("face {face:?} is shared by more than two tetrahedra")]
    NonManifold { face: [u32; 3] },
    #[error("conformity violated: {0}")]
    Nonconforming(String),
    #[error("marked tet index {index} out of range (mesh has {len} tets)")]
    InvalidMark { index: usize, len: usize },
    #[error("refinement closure exceeded depth {0}; the initial mesh is not compatibly tagged")]
    ClosureDepth(usize),
    #[error("malformed mesh file, line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Molecular,
    Solvent,
}

impl Region {
    pub fn code(self) -> u8 {
        match self {
            Region::Molecular => 1,
            Region::Solvent => 2,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(Region::Molecular),
            2 => Some(Region::Solvent),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceTag {
    Interior,
    Interface,
    DomainBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tet {
    /// Vertex indices in bisection order.
    pub vertices: [u32; 4],
    pub region: Region,
    pub generation: u32,
}

impl Tet {
    /// Local position `k` of the second refinement-edge vertex.
    fn refinement_slot(&self) -> usize {
        3 - (self.generation % 3) as usize
    }

    pub fn refinement_edge(&self) -> (u32, u32) {
        edge_key(self.vertices[0], self.vertices[self.refinement_slot()])
    }

    pub fn edges(&self) -> [(u32, u32); 6] {
        let v = self.vertices;
        [
            edge_key(v[0], v[1]),
            edge_key(v[0], v[2]),
            edge_key(v[0], v[3]),
            edge_key(v[1], v[2]),
            edge_key(v[1], v[3]),
            edge_key(v[2], v[3]),
        ]
    }
}

pub(crate) fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A triangular face. For interface faces `owner` is the molecular tet and
/// `neighbor` the solvent tet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub vertices: [u32; 3],
    pub owner: u32,
    pub neighbor: Option<u32>,
    pub tag: FaceTag,
}

/// Projection of points onto a curved surface (the dielectric interface or
/// the outer boundary).
#[derive(Clone)]
pub enum SurfaceProjection {
    Sphere { center: Point, radius: f64 },
    Custom(Arc<dyn Fn(&Point) -> Point + Send + Sync>),
}

impl SurfaceProjection {
    pub fn sphere(radius: f64) -> Self {
        SurfaceProjection::Sphere { center: Point::origin(), radius }
    }

    pub fn project(&self, p: &Point) -> Point {
        match self {
            SurfaceProjection::Sphere { center, radius } => {
                let d = p - center;
                let n = d.norm();
                if n == 0.0 {
                    *p
                } else {
                    center + d * (*radius / n)
                }
            }
            SurfaceProjection::Custom(f) => f(p),
        }
    }

    pub fn distance(&self, p: &Point) -> f64 {
        match self {
            SurfaceProjection::Sphere { center, radius } => ((p - center).norm() - radius).abs(),
            SurfaceProjection::Custom(f) => (f(p) - p).norm(),
        }
    }

    /// Radius of curvature used by the chord-sagitta audit, when known.
    pub fn curvature_radius(&self) -> Option<f64> {
        match self {
            SurfaceProjection::Sphere { radius, .. } => Some(*radius),
            SurfaceProjection::Custom(_) => None,
        }
    }
}

impl fmt::Debug for SurfaceProjection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceProjection::Sphere { center, radius } => f
                .debug_struct("Sphere")
                .field("center", center)
                .field("radius", radius)
                .finish(),
            SurfaceProjection::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed)
}

/// Per-vertex classification derived from the tets and faces.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VertexFlags {
    pub molecular: bool,
    pub solvent: bool,
    pub interface: bool,
    pub boundary: bool,
}

/// Immutable conforming tetrahedral mesh.
#[derive(Debug, Clone)]
pub struct TetMesh {
    id: u64,
    lineage: u64,
    level: u32,
    vertices: Vec<Point>,
    parents: Vec<Option<[u32; 2]>>,
    tets: Vec<Tet>,
    faces: Vec<Face>,
    tet_faces: Vec<[u32; 4]>,
    vertex_flags: Vec<VertexFlags>,
    interface_projection: Option<SurfaceProjection>,
    boundary_projection: Option<SurfaceProjection>,
    shape_bound: f64,
}

impl TetMesh {
    /// Assemble a mesh from raw parts; tets must already be in bisection order.
    pub fn from_parts(
        vertices: Vec<Point>,
        tets: Vec<Tet>,
        interface_projection: Option<SurfaceProjection>,
        boundary_projection: Option<SurfaceProjection>,
    ) -> Result<Self, MeshError> {
        let parents = vec![None; vertices.len()];
        let mut mesh = Self::assemble(vertices, parents, tets, interface_projection, boundary_projection, next_id(), 0)?;
        mesh.shape_bound = mesh.min_dihedral();
        Ok(mesh)
    }

    pub(crate) fn assemble(
        vertices: Vec<Point>,
        parents: Vec<Option<[u32; 2]>>,
        tets: Vec<Tet>,
        interface_projection: Option<SurfaceProjection>,
        boundary_projection: Option<SurfaceProjection>,
        lineage: u64,
        level: u32,
    ) -> Result<Self, MeshError> {
        if tets.is_empty() {
            return Err(MeshError::Construction("mesh has no tetrahedra".into()));
        }
        let nv = vertices.len();
        for (t, tet) in tets.iter().enumerate() {
            if tet.vertices.iter().any(|&v| v as usize >= nv) {
                return Err(MeshError::Construction(format!("tet {t} references a missing vertex")));
            }
            let p = tet.vertices.map(|v| vertices[v as usize]);
            let vol = geometry::signed_volume(&p);
            let scale = geometry::diameter(&p).powi(3);
            if !(vol.abs() > 1e-13 * scale) {
                return Err(MeshError::Degenerate { tet: t, volume: vol });
            }
        }
        let (faces, tet_faces) = derive_faces(&tets)?;
        let mut vertex_flags = vec![VertexFlags::default(); nv];
        for tet in &tets {
            for &v in &tet.vertices {
                match tet.region {
                    Region::Molecular => vertex_flags[v as usize].molecular = true,
                    Region::Solvent => vertex_flags[v as usize].solvent = true,
                }
            }
        }
        for f in &faces {
            for &v in &f.vertices {
                match f.tag {
                    FaceTag::Interface => vertex_flags[v as usize].interface = true,
                    FaceTag::DomainBoundary => vertex_flags[v as usize].boundary = true,
                    FaceTag::Interior => {}
                }
            }
        }
        let id = next_id();
        let lineage = if lineage == 0 { id } else { lineage };
        Ok(Self {
            id,
            lineage,
            level,
            vertices,
            parents,
            tets,
            faces,
            tet_faces,
            vertex_flags,
            interface_projection,
            boundary_projection,
            shape_bound: 0.0,
        })
    }

    /// Unique id of this mesh instance; solutions record it to detect staleness.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Shared by a mesh and all of its refinements.
    pub fn lineage(&self) -> u64 {
        self.lineage
    }

    /// Number of refine calls applied since the initial mesh.
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: u32) -> Point {
        self.vertices[v as usize]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Bisection parents of each vertex; `None` for initial vertices.
    pub fn parents(&self) -> &[Option<[u32; 2]>] {
        &self.parents
    }

    pub fn tets(&self) -> &[Tet] {
        &self.tets
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Face indices of tet `t`; entry `i` is the face opposite local vertex `i`.
    pub fn tet_faces(&self, t: usize) -> [u32; 4] {
        self.tet_faces[t]
    }

    pub fn vertex_flags(&self) -> &[VertexFlags] {
        &self.vertex_flags
    }

    pub fn interface_projection(&self) -> Option<&SurfaceProjection> {
        self.interface_projection.as_ref()
    }

    pub fn boundary_projection(&self) -> Option<&SurfaceProjection> {
        self.boundary_projection.as_ref()
    }

    /// Minimum dihedral angle (radians) of the initial mesh of this lineage.
    pub fn shape_bound(&self) -> f64 {
        self.shape_bound
    }

    /// The same mesh with a different interface projection.
    pub fn with_interface_projection(mut self, proj: Option<SurfaceProjection>) -> Self {
        self.interface_projection = proj;
        self
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        self.tets[t].vertices.map(|v| self.vertices[v as usize])
    }

    pub fn signed_volume(&self, t: usize) -> f64 {
        geometry::signed_volume(&self.tet_points(t))
    }

    pub fn volume(&self, t: usize) -> f64 {
        self.signed_volume(t).abs()
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.num_tets()).map(|t| self.volume(t)).sum()
    }

    pub fn diameter(&self, t: usize) -> f64 {
        geometry::diameter(&self.tet_points(t))
    }

    pub fn centroid(&self, t: usize) -> Point {
        geometry::centroid(&self.tet_points(t))
    }

    pub fn face_points(&self, f: usize) -> [Point; 3] {
        self.faces[f].vertices.map(|v| self.vertices[v as usize])
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_points(f);
        geometry::triangle_area(&a, &b, &c)
    }

    pub fn face_diameter(&self, f: usize) -> f64 {
        geometry::diameter(&self.face_points(f))
    }

    /// Unit normal of face `f` pointing out of its owner tet.
    pub fn face_normal(&self, f: usize) -> crate::Vector {
        let face = &self.faces[f];
        let [a, b, c] = self.face_points(f);
        let mut n = geometry::triangle_normal(&a, &b, &c).normalize();
        let owner_c = self.centroid(face.owner as usize);
        if n.dot(&(a - owner_c)) < 0.0 {
            n = -n;
        }
        n
    }

    /// Tets sharing a face with `t`.
    pub fn neighbors(&self, t: usize) -> [Option<u32>; 4] {
        self.tet_faces[t].map(|f| {
            let face = &self.faces[f as usize];
            if face.owner as usize == t {
                face.neighbor
            } else {
                Some(face.owner)
            }
        })
    }

    pub fn count_region(&self, region: Region) -> usize {
        self.tets.iter().filter(|t| t.region == region).count()
    }

    fn min_dihedral(&self) -> f64 {
        (0..self.num_tets())
            .map(|t| {
                geometry::dihedral_angles(&self.tet_points(t))
                    .into_iter()
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Structural audit: manifold faces, no hanging vertices, closed boundary,
    /// consistent interface tagging and non-overlapping neighbours.
    pub fn audit(&self) -> Result<(), MeshError> {
        use std::collections::HashMap;
        // Bisection parents must no longer form an edge anywhere.
        let mut edges = std::collections::HashSet::new();
        for tet in &self.tets {
            edges.extend(tet.edges());
        }
        for (v, p) in self.parents.iter().enumerate() {
            if let Some([a, b]) = p {
                if edges.contains(&edge_key(*a, *b)) {
                    return Err(MeshError::Nonconforming(format!(
                        "vertex {v} hangs on the unrefined edge ({a}, {b})"
                    )));
                }
            }
        }
        // Boundary faces form a closed surface.
        let mut boundary_edges: HashMap<(u32, u32), u32> = HashMap::new();
        for f in self.faces.iter().filter(|f| f.tag == FaceTag::DomainBoundary) {
            let [a, b, c] = f.vertices;
            for e in [edge_key(a, b), edge_key(b, c), edge_key(a, c)] {
                *boundary_edges.entry(e).or_default() += 1;
            }
        }
        if let Some((e, n)) = boundary_edges.iter().find(|(_, &n)| n != 2) {
            return Err(MeshError::Nonconforming(format!("boundary edge {e:?} used by {n} boundary faces")));
        }
        for (i, f) in self.faces.iter().enumerate() {
            match (f.tag, f.neighbor) {
                (FaceTag::DomainBoundary, None) => {}
                (FaceTag::Interface, Some(n)) => {
                    if self.tets[f.owner as usize].region != Region::Molecular
                        || self.tets[n as usize].region != Region::Solvent
                    {
                        return Err(MeshError::Nonconforming(format!("interface face {i} is mis-tagged")));
                    }
                }
                (FaceTag::Interior, Some(n)) => {
                    if self.tets[f.owner as usize].region != self.tets[n as usize].region {
                        return Err(MeshError::Nonconforming(format!("interior face {i} separates regions")));
                    }
                }
                _ => return Err(MeshError::Nonconforming(format!("face {i} has inconsistent adjacency"))),
            }
            if let Some(n) = f.neighbor {
                let [a, b, c] = self.face_points(i);
                let normal = geometry::triangle_normal(&a, &b, &c);
                let side = |t: u32| {
                    let tet = &self.tets[t as usize];
                    let opp = tet.vertices.iter().find(|v| !f.vertices.contains(v)).copied().unwrap();
                    normal.dot(&(self.vertex(opp) - a))
                };
                if side(f.owner) * side(n) >= 0.0 {
                    return Err(MeshError::Nonconforming(format!("tets sharing face {i} overlap (inverted element)")));
                }
            }
        }
        for t in 0..self.num_tets() {
            let p = self.tet_points(t);
            let vol = geometry::signed_volume(&p);
            if !(vol.abs() > 1e-13 * geometry::diameter(&p).powi(3)) {
                return Err(MeshError::Degenerate { tet: t, volume: vol });
            }
        }
        Ok(())
    }

    /// Quality metrics over all elements.
    pub fn quality_report(&self) -> QualityReport {
        quality::report(self)
    }

    /// Locate `p`; see [`Location`].
    pub fn locate_point(&self, p: &Point) -> Location {
        locate::locate(self, p)
    }

    /// Transfer a nodal P1 field from an ancestor mesh of the same lineage by
    /// midpoint interpolation along the bisection history.
    pub fn prolongate(&self, coarse_values: &[f64]) -> Vec<f64> {
        let n_old = coarse_values.len();
        assert!(n_old <= self.num_vertices(), "coarse field is larger than the target mesh");
        let mut out = Vec::with_capacity(self.num_vertices());
        out.extend_from_slice(coarse_values);
        for v in n_old..self.num_vertices() {
            let [a, b] = self.parents[v].expect("vertex created by refinement has parents");
            out.push(0.5 * (out[a as usize] + out[b as usize]));
        }
        out
    }
}

fn derive_faces(tets: &[Tet]) -> Result<(Vec<Face>, Vec<[u32; 4]>), MeshError> {
    let mut keys: Vec<([u32; 3], u32, u8)> = Vec::with_capacity(tets.len() * 4);
    for (t, tet) in tets.iter().enumerate() {
        for local in 0..4 {
            let mut f = [0u32; 3];
            let mut n = 0;
            for (j, &v) in tet.vertices.iter().enumerate() {
                if j != local {
                    f[n] = v;
                    n += 1;
                }
            }
            f.sort_unstable();
            keys.push((f, t as u32, local as u8));
        }
    }
    keys.sort_unstable();
    let mut faces = Vec::with_capacity(tets.len() * 2 + 16);
    let mut tet_faces = vec![[u32::MAX; 4]; tets.len()];
    let mut i = 0;
    while i < keys.len() {
        let (fv, t0, l0) = keys[i];
        let mut j = i + 1;
        while j < keys.len() && keys[j].0 == fv {
            j += 1;
        }
        let idx = faces.len() as u32;
        match j - i {
            1 => {
                faces.push(Face { vertices: fv, owner: t0, neighbor: None, tag: FaceTag::DomainBoundary });
                tet_faces[t0 as usize][l0 as usize] = idx;
            }
            2 => {
                let (_, t1, l1) = keys[i + 1];
                let r0 = tets[t0 as usize].region;
                let r1 = tets[t1 as usize].region;
                let face = if r0 == r1 {
                    Face { vertices: fv, owner: t0, neighbor: Some(t1), tag: FaceTag::Interior }
                } else if r0 == Region::Molecular {
                    Face { vertices: fv, owner: t0, neighbor: Some(t1), tag: FaceTag::Interface }
                } else {
                    Face { vertices: fv, owner: t1, neighbor: Some(t0), tag: FaceTag::Interface }
                };
                faces.push(face);
                tet_faces[t0 as usize][l0 as usize] = idx;
                tet_faces[t1 as usize][l1 as usize] = idx;
            }
            _ => return Err(MeshError::NonManifold { face: fv }),
        }
        i = j;
    }
    Ok((faces, tet_faces))
}

/// Sorted, de-duplicated set of tets selected for refinement.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MarkedSet {
    tets: Vec<u32>,
}

impl MarkedSet {
    pub fn new(mut tets: Vec<u32>, mesh: &TetMesh) -> Result<Self, MeshError> {
        tets.sort_unstable();
        tets.dedup();
        if let Some(&bad) = tets.iter().find(|&&t| t as usize >= mesh.num_tets()) {
            return Err(MeshError::InvalidMark { index: bad as usize, len: mesh.num_tets() });
        }
        Ok(Self { tets })
    }

    /// Unvalidated set; `refine` rejects out-of-range indices.
    pub fn from_indices(mut tets: Vec<u32>) -> Self {
        tets.sort_unstable();
        tets.dedup();
        Self { tets }
    }

    pub fn all(mesh: &TetMesh) -> Self {
        Self { tets: (0..mesh.num_tets() as u32).collect() }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn indices(&self) -> &[u32] {
        &self.tets
    }

    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refinement_edge_cycles_through_slots() {
        let mut t = Tet { vertices: [10, 11, 12, 13], region: Region::Solvent, generation: 0 };
        assert_eq!(t.refinement_edge(), (10, 13));
        t.generation = 1;
        assert_eq!(t.refinement_edge(), (10, 12));
        t.generation = 2;
        assert_eq!(t.refinement_edge(), (10, 11));
        t.generation = 3;
        assert_eq!(t.refinement_edge(), (10, 13));
    }

    #[test]
    fn box_faces_are_tagged() {
        let m = build_box_mesh([1.0, 1.0, 1.0], [1, 1, 1]).unwrap();
        let boundary = m.faces().iter().filter(|f| f.tag == FaceTag::DomainBoundary).count();
        // 6 square sides, 2 triangles each.
        assert_eq!(boundary, 12);
        assert!(m.faces().iter().all(|f| f.tag != FaceTag::Interface));
        m.audit().unwrap();
    }

    #[test]
    fn marked_set_validation() {
        let m = build_box_mesh([1.0, 1.0, 1.0], [1, 1, 1]).unwrap();
        assert!(MarkedSet::new(vec![7], &m).is_err());
        let s = MarkedSet::new(vec![3, 1, 3], &m).unwrap();
        assert_eq!(s.indices(), &[1, 3]);
    }

    #[test]
    fn sphere_projection() {
        let p = SurfaceProjection::sphere(2.0);
        let q = p.project(&Point::new(0.0, 3.0, 4.0));
        assert!((q.coords.norm() - 2.0).abs() < 1e-15);
        assert!((p.distance(&Point::new(0.0, 3.0, 4.0)) - 3.0).abs() < 1e-15);
    }
}
