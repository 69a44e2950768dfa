use super::TetMesh;
use crate::geometry::{self, Point};

const TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    Inside { tet: usize, bary: [f64; 4] },
    Outside,
}

impl Location {
    pub fn is_inside(&self) -> bool {
        matches!(self, Location::Inside { .. })
    }
}

fn bary(mesh: &TetMesh, t: usize, p: &Point) -> Option<[f64; 4]> {
    geometry::barycentric_coords(&mesh.tet_points(t), p)
}

/// Visibility walk from tet 0, falling back to a full scan. When `p` lies on
/// shared faces/vertices, the lowest-index containing tet is returned.
pub(super) fn locate(mesh: &TetMesh, p: &Point) -> Location {
    let mut t = 0usize;
    let max_steps = 4 * mesh.num_tets().min(100_000) + 16;
    for _ in 0..max_steps {
        let Some(b) = bary(mesh, t, p) else { break };
        let (worst, &min) = b.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        if min > TOL {
            return Location::Inside { tet: t, bary: b };
        }
        if min >= -TOL {
            // On a shared face, edge or vertex: resolve the tie.
            return lowest_containing(mesh, p).unwrap_or(Location::Inside { tet: t, bary: b });
        }
        match mesh.neighbors(t)[worst] {
            Some(n) => t = n as usize,
            None => break,
        }
    }
    lowest_containing(mesh, p).unwrap_or(Location::Outside)
}

fn lowest_containing(mesh: &TetMesh, p: &Point) -> Option<Location> {
    (0..mesh.num_tets()).find_map(|t| {
        let b = bary(mesh, t, p)?;
        (b.iter().all(|&x| x >= -TOL)).then_some(Location::Inside { tet: t, bary: b })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_box_mesh;
    use approx::assert_relative_eq;

    #[test]
    fn centroid_of_tet_zero() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        match m.locate_point(&m.centroid(0)) {
            Location::Inside { tet, bary } => {
                assert_eq!(tet, 0);
                for b in bary {
                    assert_relative_eq!(b, 0.25, epsilon = 1e-12);
                }
            }
            Location::Outside => panic!("centroid not found"),
        }
    }

    #[test]
    fn shared_vertex_picks_lowest_index() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let p = Point::new(0.5, 0.5, 0.5);
        let Location::Inside { tet, bary } = m.locate_point(&p) else { panic!() };
        let first = (0..m.num_tets()).find(|&t| m.tets()[t].vertices.iter().any(|&v| m.vertex(v) == p)).unwrap();
        assert_eq!(tet, first);
        assert!(bary.iter().any(|&b| (b - 1.0).abs() < 1e-12));
    }

    #[test]
    fn outside_hull() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        assert_eq!(m.locate_point(&Point::new(1.5, 0.5, 0.5)), Location::Outside);
    }

    #[test]
    fn walk_finds_arbitrary_points() {
        let m = build_box_mesh([1.0; 3], [4, 4, 4]).unwrap();
        for i in 0..20 {
            let x = (i as f64 * 0.137).fract();
            let p = Point::new(x, (x * 3.7).fract(), (x * 5.3).fract());
            let Location::Inside { tet, bary } = m.locate_point(&p) else { panic!() };
            let back = geometry::barycentric_point(&m.tet_points(tet), &bary);
            assert_relative_eq!(back, p, epsilon = 1e-12);
            assert_relative_eq!(bary.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }
}
