use nalgebra::{Matrix3, SymmetricEigen};

use super::{SurfaceError, SurfaceMesh};
use crate::geometry::Vector;

/// `T = Σ n nᵀ` over neighbour normals, with eigenpairs sorted `λ1 ≥ λ2 ≥ λ3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureTensor {
    pub matrix: Matrix3<f64>,
    pub eigenvalues: [f64; 3],
    pub eigenvectors: [Vector; 3],
}

impl StructureTensor {
    pub fn from_normals<'a>(normals: impl IntoIterator<Item = &'a Vector>) -> Self {
        let mut m = Matrix3::zeros();
        for n in normals {
            m += n * n.transpose();
        }
        let eig = SymmetricEigen::new(m);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        // Rounding can leave tiny negative eigenvalues of a PSD matrix.
        let eigenvalues = order.map(|i| eig.eigenvalues[i].max(0.0));
        let eigenvectors = order.map(|i| eig.eigenvectors.column(i).into_owned());
        Self { matrix: m, eigenvalues, eigenvectors }
    }

    /// `λ2 / λ1`, taken as 0 when `λ1 < 1e-14`.
    pub fn planarity_ratio(&self) -> f64 {
        if self.eigenvalues[0] < 1e-14 {
            0.0
        } else {
            self.eigenvalues[1] / self.eigenvalues[0]
        }
    }
}

/// Structure tensor at `vertex` from the normals of its 1-ring neighbours.
pub fn structure_tensor(mesh: &SurfaceMesh, vertex: usize) -> Result<StructureTensor, SurfaceError> {
    let nb = mesh.neighbors();
    tensor_with(mesh, &nb[vertex], vertex)
}

pub(super) fn tensor_with(mesh: &SurfaceMesh, nb: &[u32], vertex: usize) -> Result<StructureTensor, SurfaceError> {
    if nb.is_empty() {
        return Err(SurfaceError::Topology(format!("vertex {vertex} has no neighbours")));
    }
    Ok(StructureTensor::from_normals(nb.iter().map(|&v| &mesh.normals[v as usize])))
}

#[cfg(test)]
mod tests {
    use super::super::testmeshes::{grid, icosphere};
    use super::*;
    use crate::geometry::Point;

    #[test]
    fn planar_rank_one() {
        let n = vec![Vector::z(); 6];
        let t = StructureTensor::from_normals(&n);
        assert!((t.eigenvalues[0] - 6.0).abs() < 1e-12);
        assert!(t.eigenvalues[1].abs() < 1e-12 && t.eigenvalues[2].abs() < 1e-12);
        assert!((t.eigenvectors[0].z.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_identity_and_psd() {
        let s = icosphere(2);
        let nb = s.neighbors();
        for v in 0..s.num_vertices() {
            let t = structure_tensor(&s, v).unwrap();
            let tr: f64 = nb[v].iter().map(|&u| s.normals[u as usize].norm_squared()).sum();
            let sum: f64 = t.eigenvalues.iter().sum();
            assert!((sum - tr).abs() <= 1e-10 * tr);
            assert!(t.eigenvalues[0] >= t.eigenvalues[1] && t.eigenvalues[1] >= t.eigenvalues[2] && t.eigenvalues[2] >= 0.0);
        }
    }

    #[test]
    fn spread_normals_are_isotropic() {
        let s = icosphere(3);
        let t = StructureTensor::from_normals(&s.normals);
        assert!(t.eigenvalues[0] / t.eigenvalues[2] < 3.0);
    }

    #[test]
    fn ridge_has_small_third_eigenvalue() {
        // Roof z = 0.5 − |x − 0.5|: normals from two planes.
        let normals: Vec<Vector> = (0..10)
            .map(|i| if i % 2 == 0 { Vector::new(1.0, 0.0, 1.0) } else { Vector::new(-1.0, 0.0, 1.0) }.normalize())
            .collect();
        let t = StructureTensor::from_normals(&normals);
        assert!(t.eigenvalues[2] / t.eigenvalues[1] < 0.1);
        let g = grid(8, |x, _| 0.5 - (x - 0.5).abs());
        let ridge = g.vertices.iter().position(|p| (p.x - 0.5).abs() < 1e-12 && (p.y - 0.5).abs() < 1e-12).unwrap();
        let t = structure_tensor(&g, ridge).unwrap();
        assert!(t.planarity_ratio() > 0.1);
        assert!(t.eigenvalues[2] / t.eigenvalues[1] < 0.1);
    }

    #[test]
    fn isolated_vertex_is_an_error() {
        let mut s = grid(2, |_, _| 0.0);
        s.vertices.push(Point::new(5.0, 5.0, 5.0));
        s.recompute_normals();
        assert!(structure_tensor(&s, s.num_vertices() - 1).is_err());
    }
}
