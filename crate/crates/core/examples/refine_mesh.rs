//! Local newest-vertex bisection near a point, with snapping statistics and
//! a VTK dump of the result.

use pbe_afem::mesh::{build_ball_mesh, refine_with, write_vtk, MarkedSet, RefineOptions};
use pbe_afem::Point;

fn main() -> pbe_afem::Result<()> {
    let mut mesh = build_ball_mesh(5.0, 1.0, 1)?;
    let target = Point::new(1.0, 0.0, 0.0);
    for step in 0..6 {
        let near: Vec<u32> =
            (0..mesh.num_tets()).filter(|&t| (mesh.centroid(t) - target).norm() < 0.6).map(|t| t as u32).collect();
        let (next, report) = refine_with(&mesh, &MarkedSet::new(near, &mesh)?, 1, &RefineOptions::default())?;
        next.audit()?;
        let q = next.quality_report();
        println!(
            "step {step}: {:>6} tets, {} snapped midpoints, closure depth {}, min dihedral {:.1}°",
            next.num_tets(),
            report.snaps.iter().filter(|s| s.snapped).count(),
            report.max_closure_depth,
            q.min_dihedral_deg
        );
        mesh = next;
    }
    let region: Vec<f64> = mesh.tets().iter().map(|t| t.region.code() as f64).collect();
    let mut out = Vec::new();
    write_vtk(&mesh, &mut out, &[], &[pbe_afem::mesh::VtkField { name: "region", values: &region }])
        .expect("in-memory write");
    let path = std::env::temp_dir().join("refined.vtk");
    std::fs::write(&path, out).map_err(|e| pbe_afem::Error::Io { path: path.display().to_string(), source: e })?;
    println!("wrote {}", path.display());
    Ok(())
}
