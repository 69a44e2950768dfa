//! Small geometric kernels shared by the mesh, FEM and surface modules.

use nalgebra::{Matrix3, Point3, Vector3};

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;

/// Barycentric coordinates of the symmetric 4-point, degree-2 rule on a tetrahedron.
pub const QUAD4_BARY: [[f64; 4]; 4] = {
    const A: f64 = 0.585_410_196_624_968_5;
    const B: f64 = 0.138_196_601_125_010_5;
    [[A, B, B, B], [B, A, B, B], [B, B, A, B], [B, B, B, A]]
};
/// Weights of [`QUAD4_BARY`] relative to the element volume.
pub const QUAD4_WEIGHT: f64 = 0.25;

/// The eight children of the red (octasection) refinement of a tetrahedron,
/// each of one eighth of its volume.
pub fn red_children(p: &[Point; 4]) -> [[Point; 4]; 8] {
    let m = |i: usize, j: usize| Point::from((p[i].coords + p[j].coords) * 0.5);
    let (m01, m02, m03, m12, m13, m23) = (m(0, 1), m(0, 2), m(0, 3), m(1, 2), m(1, 3), m(2, 3));
    [
        [p[0], m01, m02, m03],
        [m01, p[1], m12, m13],
        [m02, m12, p[2], m23],
        [m03, m13, m23, p[3]],
        [m01, m02, m03, m13],
        [m01, m02, m12, m13],
        [m02, m03, m13, m23],
        [m02, m12, m13, m23],
    ]
}

pub fn signed_volume(p: &[Point; 4]) -> f64 {
    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
}

/// Gradients of the four barycentric (hat) functions of a tetrahedron.
///
/// Returns `None` for a degenerate element.
pub fn hat_gradients(p: &[Point; 4]) -> Option<[Vector; 4]> {
    let jac = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    let inv = jac.try_inverse()?;
    let g1 = inv.row(0).transpose();
    let g2 = inv.row(1).transpose();
    let g3 = inv.row(2).transpose();
    Some([-(g1 + g2 + g3), g1, g2, g3])
}

pub fn barycentric_point(p: &[Point; 4], bary: &[f64; 4]) -> Point {
    Point::from(
        p[0].coords * bary[0] + p[1].coords * bary[1] + p[2].coords * bary[2] + p[3].coords * bary[3],
    )
}

/// Barycentric coordinates of `x` with respect to the tetrahedron `p`.
pub fn barycentric_coords(p: &[Point; 4], x: &Point) -> Option<[f64; 4]> {
    let jac = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    let l = jac.try_inverse()? * (x - p[0]);
    Some([1.0 - l.x - l.y - l.z, l.x, l.y, l.z])
}

pub fn centroid(pts: &[Point]) -> Point {
    let mut c = Vector::zeros();
    for p in pts {
        c += p.coords;
    }
    Point::from(c / pts.len() as f64)
}

pub fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Non-normalised normal `(b - a) × (c - a)`.
pub fn triangle_normal(a: &Point, b: &Point, c: &Point) -> Vector {
    (b - a).cross(&(c - a))
}

/// Longest edge of a point set (element diameter for simplices).
pub fn diameter(pts: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d = d.max((pts[i] - pts[j]).norm());
        }
    }
    d
}

/// Interior angle at `b` of the corner `a-b-c`, in radians.
pub fn corner_angle(a: &Point, b: &Point, c: &Point) -> f64 {
    let u = a - b;
    let v = c - b;
    let cos = (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0);
    cos.acos()
}

/// The three interior angles of a triangle, in radians.
pub fn triangle_angles(a: &Point, b: &Point, c: &Point) -> [f64; 3] {
    [corner_angle(c, a, b), corner_angle(a, b, c), corner_angle(b, c, a)]
}

/// The six dihedral angles of a tetrahedron, in radians.
pub fn dihedral_angles(p: &[Point; 4]) -> [f64; 6] {
    // Dihedral along edge (i, j) is the angle between the faces opposite k and l.
    const EDGES: [(usize, usize, usize, usize); 6] =
        [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2), (1, 2, 0, 3), (1, 3, 0, 2), (2, 3, 0, 1)];
    let mut out = [0.0; 6];
    for (n, &(i, j, k, l)) in EDGES.iter().enumerate() {
        let e = (p[j] - p[i]).normalize();
        let mut u = p[k] - p[i];
        let mut v = p[l] - p[i];
        u -= e * u.dot(&e);
        v -= e * v.dot(&e);
        let cos = (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0);
        out[n] = cos.acos();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_tet() -> [Point; 4] {
        [
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ]
    }

    #[test]
    fn hat_gradients_reproduce_linear_functions() {
        let p = [
            Point::new(0.1, 0.2, -0.3),
            Point::new(1.3, 0.1, 0.2),
            Point::new(0.2, 0.9, 0.1),
            Point::new(0.3, 0.4, 1.4),
        ];
        let g = hat_gradients(&p).unwrap();
        let sum: Vector = g.iter().sum();
        assert!(sum.norm() < 1e-12);
        // Interpolant of f(x) = x has gradient (1, 0, 0).
        let grad_x: Vector = (0..4).map(|i| g[i] * p[i].x).sum();
        assert_relative_eq!(grad_x, Vector::x(), epsilon = 1e-12);
    }

    #[test]
    fn quadrature_integrates_quadratics_exactly() {
        // ∫_ref x^2 = 1/60 over the reference tet of volume 1/6.
        let p = reference_tet();
        let vol = signed_volume(&p);
        let q: f64 = QUAD4_BARY
            .iter()
            .map(|b| barycentric_point(&p, b).x.powi(2) * QUAD4_WEIGHT * vol)
            .sum();
        assert_relative_eq!(q, 1.0 / 60.0, epsilon = 1e-14);
    }

    #[test]
    fn reference_dihedrals() {
        let d = dihedral_angles(&reference_tet());
        let mut deg: Vec<f64> = d.iter().map(|a| a.to_degrees()).collect();
        deg.sort_by(f64::total_cmp);
        assert_relative_eq!(deg[0], 54.735_610_317_245_35, epsilon = 1e-9);
        assert_relative_eq!(deg[5], 90.0, epsilon = 1e-9);
    }

    #[test]
    fn barycentric_roundtrip() {
        let p = reference_tet();
        let x = Point::new(0.2, 0.3, 0.1);
        let b = barycentric_coords(&p, &x).unwrap();
        assert_relative_eq!(barycentric_point(&p, &b), x, epsilon = 1e-14);
    }
}
