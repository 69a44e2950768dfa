use serde::Serialize;

use super::tensor::tensor_with;
use super::SurfaceMesh;
use crate::geometry::{Point, Vector};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ImproveStats {
    pub moved: usize,
    /// Moves undone because an incident triangle would flip or collapse.
    pub rejected: usize,
    /// Boundary or non-manifold vertices left in place.
    pub skipped: usize,
}

/// Angle-based target: the mean, over the vertices `v_i` of the link polygon,
/// of the orthogonal projection of `x` onto the line through `v_i` along the
/// bisector of the polygon angle `∠ v_{i−1} v_i v_{i+1}`.
fn bisector_target(x: &Point, ring: &[Point], normal: &Vector) -> Point {
    let m = ring.len();
    let mut acc = Vector::zeros();
    for i in 0..m {
        let v = ring[i];
        let u1 = (ring[(i + m - 1) % m] - v).normalize();
        let u2 = (ring[(i + 1) % m] - v).normalize();
        let mut b = u1 + u2;
        if b.norm() < 1e-12 {
            // Straight angle: the bisector is perpendicular to the edge within
            // the tangent plane.
            b = normal.cross(&u1);
        }
        let b = b.normalize();
        acc += v.coords + b * (x - v).dot(&b);
    }
    Point::from(acc / m as f64)
}

fn flips(old: &[Point; 3], new: &[Point; 3]) -> bool {
    let n0 = (old[1] - old[0]).cross(&(old[2] - old[0]));
    let n1 = (new[1] - new[0]).cross(&(new[2] - new[0]));
    n1.dot(&n0) <= 1e-3 * n0.norm_squared()
}

/// One Jacobi sweep of structure-tensor weighted angle smoothing:
/// `x̂ = x + Σ_k (x̄ − x)·e_k e_k / (1 + λ_k)`.
pub fn improve_pass(mesh: &SurfaceMesh) -> SurfaceMesh {
    improve_pass_with_stats(mesh).0
}

pub fn improve_pass_with_stats(mesh: &SurfaceMesh) -> (SurfaceMesh, ImproveStats) {
    let nb = mesh.neighbors();
    let vt = mesh.vertex_triangles();
    let mut stats = ImproveStats::default();
    let mut target: Vec<Point> = mesh.vertices.clone();
    for v in 0..mesh.num_vertices() {
        let Some(ring) = mesh.ring(v as u32, &vt[v]) else {
            stats.skipped += 1;
            continue;
        };
        let x = mesh.vertices[v];
        let pts: Vec<Point> = ring.iter().map(|&u| mesh.vertices[u as usize]).collect();
        let xbar = bisector_target(&x, &pts, &mesh.normals[v]);
        let Ok(t) = tensor_with(mesh, &nb[v], v) else {
            stats.skipped += 1;
            continue;
        };
        let d = xbar - x;
        let mut step = Vector::zeros();
        for k in 0..3 {
            let e = t.eigenvectors[k];
            step += e * (d.dot(&e) / (1.0 + t.eigenvalues[k]));
        }
        let cand = x + step;
        let bad = vt[v].iter().any(|&ti| {
            let tri = mesh.triangles[ti as usize];
            let old = tri.map(|u| mesh.vertices[u as usize]);
            let new = tri.map(|u| if u as usize == v { cand } else { mesh.vertices[u as usize] });
            flips(&old, &new)
        });
        if bad {
            stats.rejected += 1;
        } else if step.norm_squared() > 0.0 {
            target[v] = cand;
            stats.moved += 1;
        }
    }
    // Simultaneous moves may still fold a triangle; undo its vertices until
    // none does.
    loop {
        let mut undone = 0;
        for tri in &mesh.triangles {
            let old = tri.map(|u| mesh.vertices[u as usize]);
            let new = tri.map(|u| target[u as usize]);
            if new != old && flips(&old, &new) {
                for &u in tri {
                    if target[u as usize] != mesh.vertices[u as usize] {
                        target[u as usize] = mesh.vertices[u as usize];
                        undone += 1;
                    }
                }
            }
        }
        if undone == 0 {
            break;
        }
        stats.moved -= undone.min(stats.moved);
        stats.rejected += undone;
    }
    let mut out = SurfaceMesh { vertices: target, ..mesh.clone() };
    out.recompute_normals();
    (out, stats)
}

/// Normal-based fairing: `passes` rounds of 1-ring averaging of vertex
/// normals, then one move of each interior vertex along its smoothed normal
/// halfway towards the mean of its neighbours' tangent planes.
pub fn smooth_normals(mesh: &SurfaceMesh, passes: usize) -> SurfaceMesh {
    let nb = mesh.neighbors();
    let boundary = mesh.boundary_vertices();
    let mut n = mesh.normals.clone();
    for _ in 0..passes {
        n = (0..n.len())
            .map(|v| {
                let s = nb[v].iter().fold(n[v], |acc, &u| acc + n[u as usize]);
                if s.norm() > 0.0 {
                    s.normalize()
                } else {
                    n[v]
                }
            })
            .collect();
    }
    let verts: Vec<Point> = (0..mesh.num_vertices())
        .map(|v| {
            let x = mesh.vertices[v];
            if boundary[v] || nb[v].is_empty() {
                return x;
            }
            let off: f64 = nb[v].iter().map(|&u| (x - mesh.vertices[u as usize]).dot(&n[u as usize])).sum::<f64>()
                / nb[v].len() as f64;
            x - n[v] * (0.5 * off)
        })
        .collect();
    let mut out = SurfaceMesh { vertices: verts, ..mesh.clone() };
    out.recompute_normals();
    out
}
