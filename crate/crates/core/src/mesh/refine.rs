//! Newest-vertex bisection (Maubach ordering) with recursive conformity closure
//! and interface / boundary midpoint snapping.

use std::collections::HashMap;

use super::{MarkedSet, MeshError, SurfaceProjection, Tet, TetMesh};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    /// Move new midpoints of interface / boundary edges onto the curved surface.
    pub snap: bool,
    /// Recursion limit of the conformity closure.
    pub max_depth: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { snap: true, max_depth: 200 }
    }
}

/// One midpoint created on a curved interface or boundary edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapRecord {
    pub vertex: u32,
    pub edge_length: f64,
    /// Distance from the straight-edge midpoint to the surface.
    pub pre_snap_distance: f64,
    pub interface: bool,
    /// Radius of curvature of the surface, when known.
    pub curvature_radius: Option<f64>,
    pub snapped: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RefineReport {
    pub bisections: usize,
    pub new_vertices: usize,
    pub max_closure_depth: usize,
    pub snaps: Vec<SnapRecord>,
}

#[derive(Clone, Copy)]
struct WorkTet {
    t: Tet,
    target: u32,
    alive: bool,
}

struct Bisector<'a> {
    verts: Vec<Point>,
    parents: Vec<Option<[u32; 2]>>,
    tets: Vec<WorkTet>,
    edge_tets: HashMap<(u32, u32), Vec<u32>>,
    opts: &'a RefineOptions,
    interface: Option<&'a SurfaceProjection>,
    boundary: Option<&'a SurfaceProjection>,
    report: RefineReport,
}

impl Bisector<'_> {
    fn add_tet(&mut self, w: WorkTet) -> u32 {
        let id = self.tets.len() as u32;
        for e in w.t.edges() {
            self.edge_tets.entry(e).or_default().push(id);
        }
        self.tets.push(w);
        id
    }

    fn bisect_edge(&mut self, e: (u32, u32), depth: usize) -> Result<(), MeshError> {
        if depth > self.opts.max_depth {
            return Err(MeshError::ClosureDepth(self.opts.max_depth));
        }
        self.report.max_closure_depth = self.report.max_closure_depth.max(depth);
        loop {
            let Some(list) = self.edge_tets.get(&e) else {
                // Bisected further down the recursion.
                return Ok(());
            };
            let blocker = list.iter().copied().find(|&t| self.tets[t as usize].t.refinement_edge() != e);
            match blocker {
                Some(t) => {
                    let e2 = self.tets[t as usize].t.refinement_edge();
                    self.bisect_edge(e2, depth + 1)?;
                }
                None => break,
            }
        }
        let mut fan = self.edge_tets.remove(&e).expect("edge present");
        fan.sort_unstable();

        let (a, b) = e;
        let first = self.tets[fan[0] as usize].t.region;
        let on_interface = fan.iter().any(|&t| self.tets[t as usize].t.region != first);
        // An edge lies on the boundary iff its fan of tets is open: some
        // opposite vertex appears in only one tet of the fan.
        let mut counts: Vec<(u32, u8)> = Vec::with_capacity(2 * fan.len());
        for &t in &fan {
            for &v in &self.tets[t as usize].t.vertices {
                if v != a && v != b {
                    match counts.iter_mut().find(|(w, _)| *w == v) {
                        Some((_, c)) => *c += 1,
                        None => counts.push((v, 1)),
                    }
                }
            }
        }
        let on_boundary = counts.iter().any(|&(_, c)| c == 1);

        let pa = self.verts[a as usize];
        let pb = self.verts[b as usize];
        let mid = Point::from((pa.coords + pb.coords) * 0.5);
        let z = self.verts.len() as u32;
        let surface = if on_interface {
            self.interface
        } else if on_boundary {
            self.boundary
        } else {
            None
        };
        let pos = match surface {
            Some(proj) => {
                let snapped = if self.opts.snap { proj.project(&mid) } else { mid };
                self.report.snaps.push(SnapRecord {
                    vertex: z,
                    edge_length: (pb - pa).norm(),
                    pre_snap_distance: proj.distance(&mid),
                    interface: on_interface,
                    curvature_radius: proj.curvature_radius(),
                    snapped: self.opts.snap,
                });
                snapped
            }
            None => mid,
        };
        self.verts.push(pos);
        self.parents.push(Some([a, b]));
        self.report.new_vertices += 1;

        for t in fan {
            self.split(t, z);
        }
        Ok(())
    }

    fn split(&mut self, t: u32, z: u32) {
        let w = self.tets[t as usize];
        self.tets[t as usize].alive = false;
        let (ea, eb) = w.t.refinement_edge();
        for e in w.t.edges() {
            if e == (ea, eb) {
                continue;
            }
            if let Some(list) = self.edge_tets.get_mut(&e) {
                list.retain(|&x| x != t);
            }
        }
        let k = w.t.refinement_slot();
        let v = w.t.vertices;
        let mut c1 = v;
        c1[k] = z;
        let mut c2 = [0u32; 4];
        c2[..k].copy_from_slice(&v[1..=k]);
        c2[k] = z;
        c2[k + 1..].copy_from_slice(&v[k + 1..]);
        let generation = w.t.generation + 1;
        for vertices in [c1, c2] {
            self.add_tet(WorkTet { t: Tet { vertices, region: w.t.region, generation }, target: w.target, alive: true });
        }
        self.report.bisections += 1;
    }
}

/// Refine with default options (snapping on).
pub fn refine(mesh: &TetMesh, marked: &MarkedSet, ell: u32) -> Result<TetMesh, MeshError> {
    refine_with(mesh, marked, ell, &RefineOptions::default()).map(|(m, _)| m)
}

/// Bisect every marked tet at least `ell` times, closing to conformity.
/// The input mesh is not modified; new vertices are appended after the old
/// ones so nodal fields transfer with [`TetMesh::prolongate`].
pub fn refine_with(
    mesh: &TetMesh,
    marked: &MarkedSet,
    ell: u32,
    opts: &RefineOptions,
) -> Result<(TetMesh, RefineReport), MeshError> {
    if ell == 0 {
        return Err(MeshError::Construction("refine needs ell >= 1".into()));
    }
    if let Some(&bad) = marked.indices().iter().find(|&&t| t as usize >= mesh.num_tets()) {
        return Err(MeshError::InvalidMark { index: bad as usize, len: mesh.num_tets() });
    }
    if marked.is_empty() {
        return Ok((mesh.clone(), RefineReport::default()));
    }
    let mut b = Bisector {
        verts: mesh.vertices.clone(),
        parents: mesh.parents.clone(),
        tets: Vec::with_capacity(mesh.num_tets() * 3),
        edge_tets: HashMap::with_capacity(mesh.num_tets() * 2),
        opts,
        interface: mesh.interface_projection.as_ref(),
        boundary: mesh.boundary_projection.as_ref(),
        report: RefineReport::default(),
    };
    for t in mesh.tets() {
        b.add_tet(WorkTet { t: *t, target: 0, alive: true });
    }
    for &t in marked.indices() {
        let w = &mut b.tets[t as usize];
        w.target = w.t.generation + ell;
    }
    let mut i = 0;
    while i < b.tets.len() {
        let w = b.tets[i];
        if w.alive && w.t.generation < w.target {
            b.bisect_edge(w.t.refinement_edge(), 0)?;
        }
        i += 1;
    }
    let tets: Vec<Tet> = b.tets.iter().filter(|w| w.alive).map(|w| w.t).collect();
    let report = b.report;
    let mut out = TetMesh::assemble(
        b.verts,
        b.parents,
        tets,
        mesh.interface_projection.clone(),
        mesh.boundary_projection.clone(),
        mesh.lineage,
        mesh.level + 1,
    )?;
    out.shape_bound = mesh.shape_bound;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_ball_mesh, build_box_mesh, FaceTag};
    use approx::assert_relative_eq;

    #[test]
    fn empty_mark_is_identity() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let r = refine(&m, &MarkedSet::empty(), 1).unwrap();
        assert_eq!(r.tets(), m.tets());
        assert_eq!(r.vertices(), m.vertices());
    }

    #[test]
    fn uniform_refinement_bumps_generations() {
        let m = build_box_mesh([1.0; 3], [1, 1, 1]).unwrap();
        let r = refine(&m, &MarkedSet::all(&m), 1).unwrap();
        assert!(r.num_vertices() > m.num_vertices());
        assert!(r.tets().iter().all(|t| t.generation >= 1));
        r.audit().unwrap();
        assert_relative_eq!(r.total_volume(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_marked_tet_closure_is_conforming() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let mut cur = m;
        for step in 0..12 {
            let t = (step * 7) % cur.num_tets();
            cur = refine(&cur, &MarkedSet::new(vec![t as u32], &cur).unwrap(), 1).unwrap();
            cur.audit().unwrap();
            assert_relative_eq!(cur.total_volume(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn uniform_rounds_keep_angles() {
        let mut m = build_box_mesh([1.0; 3], [1, 1, 1]).unwrap();
        let q0 = m.quality_report().min_dihedral_deg;
        for _ in 0..6 {
            m = refine(&m, &MarkedSet::all(&m), 1).unwrap();
        }
        let q = m.quality_report().min_dihedral_deg;
        assert!(q >= q0 * 0.5, "{q} vs {q0}");
    }

    #[test]
    fn snapping_keeps_interface_on_sphere() {
        let m = build_ball_mesh(5.0, 1.0, 1).unwrap();
        let (r, rep) = refine_with(&m, &MarkedSet::all(&m), 3, &RefineOptions::default()).unwrap();
        r.audit().unwrap();
        for f in r.faces().iter().filter(|f| f.tag == FaceTag::Interface) {
            for &v in &f.vertices {
                assert!((r.vertex(v).coords.norm() - 1.0).abs() < 1e-12);
            }
        }
        for s in rep.snaps.iter() {
            let radius = s.curvature_radius.unwrap();
            // Sagitta of a chord of length L: R − sqrt(R² − L²/4) ≈ L²/(8R).
            let half = 0.5 * s.edge_length;
            let sagitta = radius - (radius * radius - half * half).sqrt();
            assert!(s.pre_snap_distance <= sagitta * (1.0 + 1e-9) + 1e-12);
            assert!(s.pre_snap_distance <= 1.1 * s.edge_length * s.edge_length / (8.0 * radius));
        }
        assert!(r.total_volume() > m.total_volume());
    }

    #[test]
    fn prolongation_reproduces_linear_fields() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let r = refine(&m, &MarkedSet::new(vec![0, 5, 17], &m).unwrap(), 2).unwrap();
        let f = |p: &Point| 2.0 * p.x - p.y + 0.5 * p.z;
        let coarse: Vec<f64> = m.vertices().iter().map(f).collect();
        let fine = r.prolongate(&coarse);
        for (v, p) in r.vertices().iter().enumerate() {
            assert_relative_eq!(fine[v], f(p), epsilon = 1e-12);
        }
    }
}
