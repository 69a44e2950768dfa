use serde::Serialize;

use super::{FaceTag, Region, TetMesh};
use crate::geometry;

/// Angle extrema (degrees), element sizes and counts.
#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    pub min_dihedral_deg: f64,
    pub max_dihedral_deg: f64,
    pub min_face_angle_deg: f64,
    pub max_face_angle_deg: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub vertices: usize,
    pub tets: usize,
    pub molecular_tets: usize,
    pub solvent_tets: usize,
    pub interface_faces: usize,
    pub boundary_faces: usize,
}

pub(super) fn report(mesh: &TetMesh) -> QualityReport {
    let mut r = QualityReport {
        min_dihedral_deg: f64::INFINITY,
        max_dihedral_deg: 0.0,
        min_face_angle_deg: f64::INFINITY,
        max_face_angle_deg: 0.0,
        h_max: 0.0,
        h_min: f64::INFINITY,
        vertices: mesh.num_vertices(),
        tets: mesh.num_tets(),
        molecular_tets: mesh.count_region(Region::Molecular),
        solvent_tets: mesh.count_region(Region::Solvent),
        interface_faces: 0,
        boundary_faces: 0,
    };
    for t in 0..mesh.num_tets() {
        let p = mesh.tet_points(t);
        for a in geometry::dihedral_angles(&p) {
            r.min_dihedral_deg = r.min_dihedral_deg.min(a.to_degrees());
            r.max_dihedral_deg = r.max_dihedral_deg.max(a.to_degrees());
        }
        let h = geometry::diameter(&p);
        r.h_max = r.h_max.max(h);
        r.h_min = r.h_min.min(h);
    }
    for (f, face) in mesh.faces().iter().enumerate() {
        let [a, b, c] = mesh.face_points(f);
        for ang in geometry::triangle_angles(&a, &b, &c) {
            r.min_face_angle_deg = r.min_face_angle_deg.min(ang.to_degrees());
            r.max_face_angle_deg = r.max_face_angle_deg.max(ang.to_degrees());
        }
        match face.tag {
            FaceTag::Interface => r.interface_faces += 1,
            FaceTag::DomainBoundary => r.boundary_faces += 1,
            FaceTag::Interior => {}
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use crate::mesh::{build_box_mesh, refine, MarkedSet};
    use approx::assert_relative_eq;

    #[test]
    fn kuhn_cube_angles() {
        let q = build_box_mesh([1.0; 3], [1, 1, 1]).unwrap().quality_report();
        // The Kuhn tet has faces with angles atan(1/√2), 45°, 90° etc.
        let face_min = (1.0f64 / 2f64.sqrt()).atan().to_degrees();
        assert_relative_eq!(q.min_face_angle_deg, face_min, epsilon = 1e-9);
        assert_relative_eq!(q.max_face_angle_deg, 90.0, epsilon = 1e-9);
        assert_relative_eq!(q.min_dihedral_deg, 45.0, epsilon = 1e-9);
        assert_relative_eq!(q.max_dihedral_deg, 90.0, epsilon = 1e-9);
        assert_eq!(q.molecular_tets, 0);
        assert_eq!(q.solvent_tets, 6);
    }

    #[test]
    fn uniform_refine_halves_h() {
        let m = build_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let r = refine(&m, &MarkedSet::all(&m), 3).unwrap();
        let ratio = m.quality_report().h_max / r.quality_report().h_max;
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }
}
