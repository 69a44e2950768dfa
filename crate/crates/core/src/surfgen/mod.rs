//! Molecular surface meshes: Gaussian density, marching cubes, and
//! structure-tensor driven quality improvement and coarsening.

mod coarsen;
mod density;
mod improve;
mod io;
mod marching;
mod tables;
mod tensor;

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{self, Point, Vector};

pub use coarsen::{coarsen, coarsen_until, CoarsenReport};
pub use density::{density_at, gaussian_density, GridSpec};
pub use improve::{improve_pass, improve_pass_with_stats, smooth_normals, ImproveStats};
pub use io::{parse_off, read_off, write_off};
pub use marching::marching_cubes;
pub use tensor::{structure_tensor, StructureTensor};

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("invalid surface parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("surface topology: {0}")]
    Topology(String),
    #[error("OFF line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Nodal samples on a regular grid; node `(i, j, k)` is at
/// `origin + (i, j, k) ∘ spacing`, stored with `i` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub origin: Point,
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(origin: Point, spacing: [f64; 3], dims: [usize; 3], values: Vec<f64>) -> Result<Self, SurfaceError> {
        if dims.iter().any(|&d| d < 2) {
            return Err(SurfaceError::Grid(format!("need at least 2 nodes per axis, got {dims:?}")));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(SurfaceError::Grid(format!("spacing must be positive, got {spacing:?}")));
        }
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(SurfaceError::Grid(format!("{} values for dims {dims:?}", values.len())));
        }
        Ok(Self { origin, spacing, dims, values })
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Point {
        self.origin + Vector::new(i as f64 * self.spacing[0], j as f64 * self.spacing[1], k as f64 * self.spacing[2])
    }

    /// Trilinear interpolant, clamped to the grid box.
    pub fn trilinear(&self, p: &Point) -> f64 {
        let mut cell = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let s = ((p[a] - self.origin[a]) / self.spacing[a]).clamp(0.0, (self.dims[a] - 1) as f64);
            let c = (s.floor() as usize).min(self.dims[a] - 2);
            cell[a] = c;
            t[a] = s - c as f64;
        }
        let mut v = 0.0;
        for corner in 0..8 {
            let (di, dj, dk) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = [di, dj, dk].iter().enumerate().map(|(a, &d)| if d == 1 { t[a] } else { 1.0 - t[a] }).product::<f64>();
            v += w * self.value(cell[0] + di, cell[1] + dj, cell[2] + dk);
        }
        v
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Triangulated surface with area-weighted vertex normals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Vec<Vector>,
    /// The extracted level set reached the grid boundary; the surface may be open.
    pub touches_boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceQuality {
    pub vertices: usize,
    pub triangles: usize,
    pub min_angle_deg: f64,
    pub max_angle_deg: f64,
    pub area: f64,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Point>, triangles: Vec<[u32; 3]>) -> Self {
        let mut m = Self { vertices, triangles, normals: Vec::new(), touches_boundary: false };
        m.recompute_normals();
        m
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v as usize])
    }

    /// Unnormalised `(b − a) × (c − a)`.
    pub fn triangle_cross(&self, t: usize) -> Vector {
        let [a, b, c] = self.triangle_points(t);
        (b - a).cross(&(c - a))
    }

    pub fn recompute_normals(&mut self) {
        let mut n = vec![Vector::zeros(); self.vertices.len()];
        for t in 0..self.triangles.len() {
            // |cross| = 2·area, so this is the area-weighted sum.
            let c = self.triangle_cross(t);
            for &v in &self.triangles[t] {
                n[v as usize] += c;
            }
        }
        for v in &mut n {
            let len = v.norm();
            if len > 0.0 {
                *v /= len;
            }
        }
        self.normals = n;
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| 0.5 * self.triangle_cross(t).norm()).sum()
    }

    /// Enclosed volume (positive for outward winding of a closed surface).
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    /// Undirected edge → incident triangles.
    pub fn edge_triangles(&self) -> HashMap<(u32, u32), Vec<u32>> {
        let mut map: HashMap<(u32, u32), Vec<u32>> = HashMap::with_capacity(self.triangles.len() * 2);
        for (t, tri) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                map.entry((a.min(b), a.max(b))).or_default().push(t as u32);
            }
        }
        map
    }

    /// Each edge in at most two triangles, traversed in opposite directions
    /// when shared.
    pub fn check_manifold(&self) -> Result<(), SurfaceError> {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(self.triangles.len() * 3);
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(SurfaceError::Topology(format!("triangle {t} repeats a vertex")));
            }
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                if directed.insert((a, b), t as u32).is_some() {
                    return Err(SurfaceError::Topology(format!(
                        "directed edge ({a}, {b}) used twice: non-manifold or inconsistent winding"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Closed: every edge in exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.check_manifold().is_ok() && self.edge_triangles().values().all(|t| t.len() == 2)
    }

    /// Vertices on edges with a single incident triangle.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut b = vec![false; self.vertices.len()];
        for ((u, v), ts) in self.edge_triangles() {
            if ts.len() != 2 {
                b[u as usize] = true;
                b[v as usize] = true;
            }
        }
        b
    }

    /// Sorted 1-ring neighbours of every vertex.
    pub fn neighbors(&self) -> Vec<Vec<u32>> {
        let mut nb: Vec<Vec<u32>> = vec![Vec::new(); self.vertices.len()];
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                nb[a as usize].push(b);
                nb[b as usize].push(a);
            }
        }
        for n in &mut nb {
            n.sort_unstable();
            n.dedup();
        }
        nb
    }

    /// Incident triangles of every vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<u32>> {
        let mut vt: Vec<Vec<u32>> = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                vt[v as usize].push(t as u32);
            }
        }
        vt
    }

    /// Ordered link polygon of `v` following the winding, or `None` when the
    /// link is not a single closed cycle (boundary or non-manifold vertex).
    pub fn ring(&self, v: u32, incident: &[u32]) -> Option<Vec<u32>> {
        let mut next: HashMap<u32, u32> = HashMap::with_capacity(incident.len());
        for &t in incident {
            let tri = self.triangles[t as usize];
            let i = tri.iter().position(|&x| x == v)?;
            if next.insert(tri[(i + 1) % 3], tri[(i + 2) % 3]).is_some() {
                return None;
            }
        }
        let &start = next.keys().min()?;
        let mut ring = vec![start];
        let mut cur = start;
        loop {
            cur = *next.get(&cur)?;
            if cur == start {
                break;
            }
            if ring.len() > next.len() {
                return None;
            }
            ring.push(cur);
        }
        (ring.len() == next.len() && ring.len() >= 3).then_some(ring)
    }

    pub fn quality(&self) -> SurfaceQuality {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(t);
            for ang in geometry::triangle_angles(&a, &b, &c) {
                lo = lo.min(ang);
                hi = hi.max(ang);
            }
        }
        SurfaceQuality {
            vertices: self.vertices.len(),
            triangles: self.triangles.len(),
            min_angle_deg: lo.to_degrees(),
            max_angle_deg: hi.to_degrees(),
            area: self.area(),
        }
    }

    /// Drop unreferenced vertices, renumbering in order.
    pub(crate) fn compact(&mut self) {
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for &v in tri {
                used[v as usize] = true;
            }
        }
        let mut map = vec![u32::MAX; self.vertices.len()];
        let mut verts = Vec::new();
        for (v, &u) in used.iter().enumerate() {
            if u {
                map[v] = verts.len() as u32;
                verts.push(self.vertices[v]);
            }
        }
        for tri in &mut self.triangles {
            *tri = tri.map(|v| map[v as usize]);
        }
        self.vertices = verts;
        self.recompute_normals();
    }
}

#[cfg(test)]
pub(crate) mod testmeshes {
    use super::*;

    /// Icosphere of radius 1 after `levels` 4:1 subdivisions.
    pub fn icosphere(levels: usize) -> SurfaceMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v: Vec<Point> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Point::from(Vector::new(x, y, z).normalize()))
        .collect();
        let mut f: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..levels {
            let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
            let mut nf = Vec::with_capacity(f.len() * 4);
            let mut m = |a: u32, b: u32, v: &mut Vec<Point>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    v.push(Point::from((v[a as usize].coords + v[b as usize].coords).normalize()));
                    (v.len() - 1) as u32
                })
            };
            for [a, b, c] in f {
                let ab = m(a, b, &mut v);
                let bc = m(b, c, &mut v);
                let ca = m(c, a, &mut v);
                nf.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            f = nf;
        }
        SurfaceMesh::new(v, f)
    }

    /// Regular `n × n` grid on `[0,1]²` (z = `height(x, y)`), counter-clockwise
    /// seen from +z.
    pub fn grid(n: usize, height: impl Fn(f64, f64) -> f64) -> SurfaceMesh {
        let mut v = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
                v.push(Point::new(x, y, height(x, y)));
            }
        }
        let id = |i: usize, j: usize| (i + (n + 1) * j) as u32;
        let mut f = Vec::new();
        for j in 0..n {
            for i in 0..n {
                f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        SurfaceMesh::new(v, f)
    }
}

#[cfg(test)]
mod tests {
    use super::testmeshes::*;
    use super::*;

    #[test]
    fn icosphere_is_closed_and_outward() {
        let s = icosphere(2);
        assert!(s.is_watertight());
        assert!(s.signed_volume() > 0.0);
        assert!(s.normals.iter().zip(&s.vertices).all(|(n, p)| n.dot(&p.coords) > 0.99));
    }

    #[test]
    fn rings_follow_winding() {
        let s = icosphere(1);
        let vt = s.vertex_triangles();
        for v in 0..s.num_vertices() as u32 {
            let r = s.ring(v, &vt[v as usize]).unwrap();
            assert_eq!(r.len(), vt[v as usize].len());
        }
        let g = grid(3, |_, _| 0.0);
        let vt = g.vertex_triangles();
        assert!(g.ring(0, &vt[0]).is_none());
        assert!(g.ring(5, &vt[5]).is_some());
    }

    #[test]
    fn trilinear_reproduces_linear_field() {
        let dims = [3, 4, 5];
        let mut vals = Vec::new();
        for k in 0..5 {
            for j in 0..4 {
                for i in 0..3 {
                    vals.push(i as f64 + 2.0 * j as f64 - k as f64);
                }
            }
        }
        let g = ScalarGrid::new(Point::origin(), [1.0; 3], dims, vals).unwrap();
        let p = Point::new(1.3, 2.7, 0.4);
        assert!((g.trilinear(&p) - (1.3 + 5.4 - 0.4)).abs() < 1e-12);
        assert!(ScalarGrid::new(Point::origin(), [1.0; 3], [1, 2, 2], vec![0.0; 4]).is_err());
    }
}
