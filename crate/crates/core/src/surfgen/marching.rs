use std::collections::HashMap;

use super::tables::TRI_TABLE;
use super::{ScalarGrid, SurfaceError, SurfaceMesh};
use crate::geometry::Point;

/// Cube corner offsets (i, j, k) in the classic corner numbering.
const CORNERS: [[usize; 3]; 8] =
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];
const EDGES: [[usize; 2]; 12] =
    [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]];

/// Clamp of the edge parameter that keeps welded vertices off grid nodes.
const T_EPS: f64 = 1e-6;

/// Marching cubes on `grid` for the level `isovalue`, with the region
/// `F > isovalue` taken as the inside. Vertices are welded per grid edge and
/// triangles are wound with outward normals (pointing towards decreasing `F`).
pub fn marching_cubes(grid: &ScalarGrid, isovalue: f64) -> Result<SurfaceMesh, SurfaceError> {
    if !isovalue.is_finite() {
        return Err(SurfaceError::InvalidParameter(format!("isovalue {isovalue}")));
    }
    let [nx, ny, nz] = grid.dims;
    let mut vertices: Vec<Point> = Vec::new();
    let mut weld: HashMap<(usize, usize), u32> = HashMap::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let node = |c: usize| {
                    let o = CORNERS[c];
                    (i + o[0], j + o[1], k + o[2])
                };
                let mut vals = [0.0; 8];
                let mut case = 0usize;
                for c in 0..8 {
                    let (a, b, d) = node(c);
                    vals[c] = grid.value(a, b, d);
                    if vals[c] < isovalue {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let mut edge_vertex = |e: usize| -> u32 {
                    let [c0, c1] = EDGES[e];
                    let (n0, n1) = (node(c0), node(c1));
                    let (i0, i1) = (grid.index(n0.0, n0.1, n0.2), grid.index(n1.0, n1.1, n1.2));
                    let key = (i0.min(i1), i0.max(i1));
                    *weld.entry(key).or_insert_with(|| {
                        let (f0, f1) = (vals[c0], vals[c1]);
                        let t = ((isovalue - f0) / (f1 - f0)).clamp(T_EPS, 1.0 - T_EPS);
                        let (p0, p1) = (grid.node(n0.0, n0.1, n0.2), grid.node(n1.0, n1.1, n1.2));
                        vertices.push(p0 + (p1 - p0) * t);
                        (vertices.len() - 1) as u32
                    })
                };
                let row = &TRI_TABLE[case];
                for tri in row.chunks(3).take_while(|c| c[0] >= 0) {
                    let v = [edge_vertex(tri[0] as usize), edge_vertex(tri[1] as usize), edge_vertex(tri[2] as usize)];
                    triangles.push(v);
                }
            }
        }
    }
    let touches_boundary = boundary_inside(grid, isovalue);
    let mut mesh = SurfaceMesh::new(vertices, triangles);
    mesh.touches_boundary = touches_boundary;
    orient_outward(&mut mesh, grid);
    Ok(mesh)
}

fn boundary_inside(grid: &ScalarGrid, iso: f64) -> bool {
    let [nx, ny, nz] = grid.dims;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let on = i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
                if on && grid.value(i, j, k) >= iso {
                    return true;
                }
            }
        }
    }
    false
}

/// The table has one winding convention throughout; pick the global sign by a
/// vote against the field gradient.
fn orient_outward(mesh: &mut SurfaceMesh, grid: &ScalarGrid) {
    let mut vote = 0.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle_points(t);
        let m = Point::from((a.coords + b.coords + c.coords) / 3.0);
        let n = mesh.triangle_cross(t);
        let h = grid.spacing.iter().copied().fold(f64::INFINITY, f64::min) * 0.5;
        let probe = grid.trilinear(&(m + n.normalize() * h)) - grid.trilinear(&(m - n.normalize() * h));
        if probe.is_finite() {
            vote += probe.signum();
        }
    }
    if vote > 0.0 {
        for tri in &mut mesh.triangles {
            tri.swap(1, 2);
        }
        mesh.recompute_normals();
    }
}

#[cfg(test)]
mod tests {
    use super::super::{gaussian_density, GridSpec};
    use super::*;
    use std::f64::consts::PI;

    fn sphere(spacing: f64) -> (SurfaceMesh, ScalarGrid) {
        let atoms = [(Point::new(0.03, -0.02, 0.01), 1.0)];
        let spec = GridSpec::around(&atoms, spacing, 0.5).unwrap();
        let g = gaussian_density(&atoms, -0.5, &spec).unwrap();
        (marching_cubes(&g, 1.0).unwrap(), g)
    }

    #[test]
    fn sphere_surface() {
        let h = 0.125;
        let (m, g) = sphere(h);
        assert!(!m.touches_boundary);
        assert!(m.is_watertight());
        assert!(m.signed_volume() > 0.0);
        let c = Point::new(0.03, -0.02, 0.01);
        for p in &m.vertices {
            assert!(((p - c).norm() - 1.0).abs() < 1.5 * h);
            assert!((g.trilinear(p) - 1.0).abs() < 0.05);
        }
        assert!((m.area() - 4.0 * PI).abs() < 0.05 * 4.0 * PI, "{}", m.area());
    }

    #[test]
    fn constant_grid_is_empty() {
        let g = ScalarGrid::new(Point::origin(), [1.0; 3], [3, 3, 3], vec![2.0; 27]).unwrap();
        assert!(marching_cubes(&g, 1.0).unwrap().is_empty());
    }

    #[test]
    fn clipped_surface_is_flagged() {
        let atoms = [(Point::origin(), 1.0)];
        let mut spec = GridSpec::around(&atoms, 0.1, 0.0).unwrap();
        spec.dims = [spec.dims[0] / 2 + 1, spec.dims[1], spec.dims[2]];
        let g = gaussian_density(&atoms, -0.5, &spec).unwrap();
        let m = marching_cubes(&g, 1.0).unwrap();
        assert!(m.touches_boundary);
        assert!(!m.is_watertight());
    }

    #[test]
    fn two_atoms_watertight() {
        let atoms = [(Point::new(0.0, 0.0, 0.0), 1.0), (Point::new(1.3, 0.4, 0.2), 0.9)];
        let spec = GridSpec::around(&atoms, 0.17, 0.6).unwrap();
        let g = gaussian_density(&atoms, -0.5, &spec).unwrap();
        let m = marching_cubes(&g, 1.0).unwrap();
        assert!(m.is_watertight());
    }
}
