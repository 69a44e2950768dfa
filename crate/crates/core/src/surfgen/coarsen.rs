use std::collections::HashSet;

use serde::Serialize;

use super::tensor::tensor_with;
use super::{SurfaceError, SurfaceMesh};
use crate::geometry::{self, Point, Vector};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CoarsenReport {
    pub candidates: usize,
    pub deleted: usize,
    /// Candidates next to a vertex already deleted in this sweep.
    pub deferred: usize,
    /// Deletions refused because the re-triangulation would break manifoldness
    /// or fold the surface.
    pub refused: usize,
    /// Vertices whose largest tensor eigenvalue was below `1e-14`
    /// (criterion evaluated with `λ2/λ1 = 0`).
    pub degenerate_tensors: usize,
}

/// Ear clipping of the link polygon in the plane orthogonal to `normal`;
/// ears with the largest minimum angle go first. `None` if the projected
/// polygon cannot be triangulated.
fn ear_clip(ring: &[u32], pts: &[Point], normal: &Vector) -> Option<Vec<[u32; 3]>> {
    let e1 = {
        let a = if normal.x.abs() < 0.9 { Vector::x() } else { Vector::y() };
        normal.cross(&a).normalize()
    };
    let e2 = normal.cross(&e1);
    let p2: Vec<(f64, f64)> = pts.iter().map(|p| (p.coords.dot(&e1), p.coords.dot(&e2))).collect();
    let cross = |a: usize, b: usize, c: usize| {
        let (ax, ay) = p2[a];
        let (bx, by) = p2[b];
        let (cx, cy) = p2[c];
        (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    };
    let mut idx: Vec<usize> = (0..ring.len()).collect();
    let mut out = Vec::with_capacity(ring.len() - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            let (a, b, c) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
            if cross(a, b, c) <= 1e-14 {
                continue;
            }
            let contains = idx.iter().any(|&q| {
                q != a && q != b && q != c && cross(a, b, q) >= 0.0 && cross(b, c, q) >= 0.0 && cross(c, a, q) >= 0.0
            });
            if contains {
                continue;
            }
            let q = geometry::triangle_angles(&pts[a], &pts[b], &pts[c]).iter().copied().fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, bq)| q > bq) {
                best = Some((i, q));
            }
        }
        let (i, _) = best?;
        let m = idx.len();
        out.push([ring[idx[(i + m - 1) % m]], ring[idx[i]], ring[idx[(i + 1) % m]]]);
        idx.remove(i);
    }
    if cross(idx[0], idx[1], idx[2]) <= 1e-14 {
        return None;
    }
    out.push([ring[idx[0]], ring[idx[1]], ring[idx[2]]]);
    Some(out)
}

/// One sweep of feature-aware vertex deletion: `x` is removed iff
/// `L(x)^α (λ2/λ1)^β < T0`, where `L` is the longest incident edge. Deleted
/// vertices form an independent set (visited in index order); the hole is
/// re-triangulated by ear clipping. Boundary and non-manifold vertices stay.
pub fn coarsen(
    mesh: &SurfaceMesh,
    t0: f64,
    alpha: f64,
    beta: f64,
) -> Result<(SurfaceMesh, CoarsenReport), SurfaceError> {
    if !(t0 >= 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(SurfaceError::InvalidParameter(format!("T0 = {t0}, alpha = {alpha}, beta = {beta}")));
    }
    mesh.check_manifold()?;
    let mut report = CoarsenReport::default();
    let nb = mesh.neighbors();
    let vt = mesh.vertex_triangles();
    let n = mesh.num_vertices();
    let mut score = vec![f64::INFINITY; n];
    for v in 0..n {
        if nb[v].is_empty() {
            continue;
        }
        let t = tensor_with(mesh, &nb[v], v)?;
        if t.eigenvalues[0] < 1e-14 {
            report.degenerate_tensors += 1;
        }
        let l = nb[v].iter().map(|&u| (mesh.vertices[u as usize] - mesh.vertices[v]).norm()).fold(0.0, f64::max);
        score[v] = l.powf(alpha) * t.planarity_ratio().powf(beta);
    }
    let mut edges: HashSet<(u32, u32)> = mesh.edge_triangles().into_keys().collect();
    let mut alive = vec![true; mesh.num_triangles()];
    let mut new_tris: Vec<[u32; 3]> = Vec::new();
    let mut blocked = vec![false; n];
    let mut live_vertices = n;
    for v in 0..n {
        if !(score[v] < t0) {
            continue;
        }
        report.candidates += 1;
        if blocked[v] || live_vertices <= 4 {
            report.deferred += 1;
            continue;
        }
        let Some(ring) = mesh.ring(v as u32, &vt[v]) else {
            report.refused += 1;
            continue;
        };
        let pts: Vec<Point> = ring.iter().map(|&u| mesh.vertices[u as usize]).collect();
        let Some(tris) = ear_clip(&ring, &pts, &mesh.normals[v]) else {
            report.refused += 1;
            continue;
        };
        let ring_edges: HashSet<(u32, u32)> =
            (0..ring.len()).map(|i| key(ring[i], ring[(i + 1) % ring.len()])).collect();
        let mut diagonals: Vec<(u32, u32)> = Vec::new();
        let mut ok = true;
        for t in &tris {
            for e in 0..3 {
                let k = key(t[e], t[(e + 1) % 3]);
                if !ring_edges.contains(&k) && !diagonals.contains(&k) {
                    if edges.contains(&k) {
                        ok = false;
                    }
                    diagonals.push(k);
                }
            }
            let c = (mesh.vertices[t[1] as usize] - mesh.vertices[t[0] as usize])
                .cross(&(mesh.vertices[t[2] as usize] - mesh.vertices[t[0] as usize]));
            if c.dot(&mesh.normals[v]) <= 0.0 {
                ok = false;
            }
        }
        if ring.len() == 3 && edges_form_existing_triangle(mesh, &vt, &ring, &alive) {
            ok = false;
        }
        if !ok {
            report.refused += 1;
            continue;
        }
        for &t in &vt[v] {
            alive[t as usize] = false;
        }
        for &u in &nb[v] {
            edges.remove(&key(v as u32, u));
            blocked[u as usize] = true;
        }
        edges.extend(diagonals);
        new_tris.extend(tris);
        report.deleted += 1;
        live_vertices -= 1;
    }
    if report.deleted == 0 {
        return Ok((mesh.clone(), report));
    }
    let mut triangles: Vec<[u32; 3]> =
        mesh.triangles.iter().zip(&alive).filter(|(_, &a)| a).map(|(t, _)| *t).collect();
    triangles.extend(new_tris);
    let mut out = SurfaceMesh { vertices: mesh.vertices.clone(), triangles, ..mesh.clone() };
    out.compact();
    Ok((out, report))
}

fn key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

fn edges_form_existing_triangle(mesh: &SurfaceMesh, vt: &[Vec<u32>], ring: &[u32], alive: &[bool]) -> bool {
    let mut want = ring.to_vec();
    want.sort_unstable();
    vt[ring[0] as usize].iter().any(|&t| {
        let mut tri = mesh.triangles[t as usize];
        tri.sort_unstable();
        alive[t as usize] && tri[..] == want[..]
    })
}

/// Repeat [`coarsen`] until a sweep deletes nothing or `max_sweeps` is reached.
pub fn coarsen_until(
    mesh: &SurfaceMesh,
    t0: f64,
    alpha: f64,
    beta: f64,
    max_sweeps: usize,
) -> Result<(SurfaceMesh, Vec<CoarsenReport>), SurfaceError> {
    let mut cur = mesh.clone();
    let mut reports = Vec::new();
    for _ in 0..max_sweeps {
        let (next, r) = coarsen(&cur, t0, alpha, beta)?;
        reports.push(r);
        cur = next;
        if r.deleted == 0 {
            break;
        }
    }
    Ok((cur, reports))
}

#[cfg(test)]
mod tests {
    use super::super::testmeshes::{grid, icosphere};
    use super::*;

    #[test]
    fn zero_threshold_is_identity() {
        let s = icosphere(2);
        let (out, r) = coarsen(&s, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(out, s);
        assert_eq!(r.deleted, 0);
    }

    #[test]
    fn flat_plane_loses_interior_vertices() {
        let g = grid(10, |_, _| 0.0);
        let (out, r) = coarsen(&g, 1.0, 1.0, 1.0).unwrap();
        assert!(r.deleted > 10);
        assert_eq!(out.num_vertices(), g.num_vertices() - r.deleted);
        assert_eq!(r.degenerate_tensors, 0);
        out.check_manifold().unwrap();
        assert!((out.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_vertices_survive() {
        let g = grid(12, |x, _| 0.5 - (x - 0.5).abs());
        let (out, r) = coarsen(&g, 0.01, 1.0, 1.0).unwrap();
        assert!(r.deleted > 0);
        let on_ridge = |m: &SurfaceMesh| m.vertices.iter().filter(|p| (p.x - 0.5).abs() < 1e-12).count();
        assert_eq!(on_ridge(&out), on_ridge(&g));
        out.check_manifold().unwrap();
    }

    #[test]
    fn sphere_stays_closed() {
        let s = icosphere(3);
        let (out, reports) = coarsen_until(&s, 0.01, 1.0, 1.0, 10).unwrap();
        assert!(out.num_vertices() < s.num_vertices());
        assert!(out.is_watertight());
        assert!(reports.iter().all(|r| r.deleted == 0 || r.deleted <= r.candidates));
    }

    #[test]
    fn non_manifold_input_rejected() {
        let v = vec![Point::origin(), Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0)];
        let m = SurfaceMesh::new(v, vec![[0, 1, 2], [0, 1, 2]]);
        assert!(coarsen(&m, 1.0, 1.0, 1.0).is_err());
    }
}
