use rayon::prelude::*;

use super::{ScalarGrid, SurfaceError};
use crate::geometry::{Point, Vector};

/// Grid layout for density sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point,
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
}

impl GridSpec {
    /// Cubic cells of size `spacing` covering the atoms' bounding box plus
    /// `padding` on every side.
    pub fn around(atoms: &[(Point, f64)], spacing: f64, padding: f64) -> Result<Self, SurfaceError> {
        if atoms.is_empty() {
            return Err(SurfaceError::InvalidParameter("no atoms".into()));
        }
        if !(spacing > 0.0) || !(padding >= 0.0) {
            return Err(SurfaceError::InvalidParameter(format!("spacing {spacing}, padding {padding}")));
        }
        let mut lo = Vector::repeat(f64::INFINITY);
        let mut hi = Vector::repeat(f64::NEG_INFINITY);
        for (c, r) in atoms {
            lo = lo.inf(&(c.coords - Vector::repeat(*r)));
            hi = hi.sup(&(c.coords + Vector::repeat(*r)));
        }
        lo -= Vector::repeat(padding);
        hi += Vector::repeat(padding);
        let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / spacing).ceil() as usize + 1).max(2));
        Ok(Self { origin: Point::from(lo), spacing: [spacing; 3], dims })
    }
}

fn check(atoms: &[(Point, f64)], blobbyness: f64) -> Result<(), SurfaceError> {
    if !(blobbyness < 0.0) {
        return Err(SurfaceError::InvalidParameter(format!("blobbyness must be negative, got {blobbyness}")));
    }
    if let Some((_, r)) = atoms.iter().find(|(_, r)| !(*r > 0.0)) {
        return Err(SurfaceError::InvalidParameter(format!("atom radius must be positive, got {r}")));
    }
    Ok(())
}

/// `F(x) = Σ_i exp(B₀ (‖x − c_i‖² / r_i² − 1))`.
pub fn density_at(atoms: &[(Point, f64)], blobbyness: f64, x: &Point) -> f64 {
    atoms.iter().map(|(c, r)| (blobbyness * ((x - c).norm_squared() / (r * r) - 1.0)).exp()).sum()
}

/// Gaussian density sampled at the grid nodes.
pub fn gaussian_density(atoms: &[(Point, f64)], blobbyness: f64, spec: &GridSpec) -> Result<ScalarGrid, SurfaceError> {
    check(atoms, blobbyness)?;
    let [nx, ny, nz] = spec.dims;
    let probe = ScalarGrid { origin: spec.origin, spacing: spec.spacing, dims: spec.dims, values: Vec::new() };
    let values: Vec<f64> = (0..nx * ny * nz)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx % nx, (idx / nx) % ny, idx / (nx * ny));
            density_at(atoms, blobbyness, &probe.node(i, j, k))
        })
        .collect();
    ScalarGrid::new(spec.origin, spec.spacing, spec.dims, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};

    #[test]
    fn single_atom_values() {
        let a = [(Point::new(1.0, 2.0, 3.0), 1.5)];
        assert!((density_at(&a, -0.5, &a[0].0) - 0.5f64.exp()).abs() < 1e-15);
        let on = a[0].0 + Vector::new(0.0, 1.5, 0.0);
        assert_eq!(density_at(&a, -2.3, &on), 1.0);
        let two = [a[0], a[0]];
        let x = Point::new(0.3, 0.1, -0.2);
        assert_eq!(density_at(&two, -0.5, &x), 2.0 * density_at(&a, -0.5, &x));
    }

    #[test]
    fn rigid_motion_invariance() {
        let atoms = [(Point::new(0.0, 0.0, 0.0), 1.0), (Point::new(1.2, 0.3, -0.4), 1.4), (Point::new(-0.5, 1.0, 0.9), 0.8)];
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector::new(1.0, -2.0, 0.5)), 0.83);
        let shift = Vector::new(3.0, -1.0, 7.5);
        let moved: Vec<(Point, f64)> = atoms.iter().map(|(c, r)| (rot * c + shift, *r)).collect();
        for x in [Point::new(0.2, 0.4, 0.1), Point::new(-1.0, 2.0, 1.5), Point::new(2.0, 0.0, 0.0)] {
            let a = density_at(&atoms, -0.5, &x);
            let b = density_at(&moved, -0.5, &(rot * x + shift));
            assert!((a - b).abs() < 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn grid_and_errors() {
        let atoms = [(Point::origin(), 1.0)];
        let spec = GridSpec::around(&atoms, 0.25, 1.0).unwrap();
        assert_eq!(spec.dims, [17; 3]);
        let g = gaussian_density(&atoms, -0.5, &spec).unwrap();
        assert!((g.value(8, 8, 8) - 0.5f64.exp()).abs() < 1e-12);
        assert!(gaussian_density(&atoms, 0.0, &spec).is_err());
        assert!(gaussian_density(&[(Point::origin(), 0.0)], -0.5, &spec).is_err());
    }
}
