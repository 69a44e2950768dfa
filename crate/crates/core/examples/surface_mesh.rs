//! Molecular surface pipeline: Gaussian density → marching cubes →
//! improvement → feature-aware coarsening → OFF.
//!
//!     cargo run --release --example surface_mesh -- molecule.pqr out.off

use pbe_afem::molio;
use pbe_afem::surfgen::{self, GridSpec};
use pbe_afem::Point;

fn main() -> pbe_afem::Result<()> {
    let mut args = std::env::args().skip(1);
    let atoms = match args.next() {
        Some(p) => molio::read_pqr(p)?.spheres(),
        // A bent triatomic.
        None => vec![
            (Point::new(0.0, 0.0, 0.0), 1.52),
            (Point::new(0.96, 0.0, 0.0), 1.2),
            (Point::new(-0.24, 0.93, 0.0), 1.2),
        ],
    };
    let spec = GridSpec::around(&atoms, 0.1, 1.5)?;
    let grid = surfgen::gaussian_density(&atoms, -0.5, &spec)?;
    let mut s = surfgen::marching_cubes(&grid, 1.0)?;
    let show = |name: &str, s: &surfgen::SurfaceMesh| {
        let q = s.quality();
        println!("{name:>8}: {:>6} vertices, angles [{:.2}°, {:.2}°], area {:.3}", q.vertices, q.min_angle_deg, q.max_angle_deg, q.area);
    };
    show("mc", &s);
    for _ in 0..2 {
        s = surfgen::improve_pass(&s);
    }
    show("improved", &s);
    let (c, reports) = surfgen::coarsen_until(&s, 1e-3, 1.0, 1.0, 6)?;
    println!("coarsening sweeps deleted {:?}", reports.iter().map(|r| r.deleted).collect::<Vec<_>>());
    let c = surfgen::improve_pass(&c);
    show("coarse", &c);
    if let Some(out) = args.next() {
        let mut f = std::fs::File::create(&out).map_err(|e| pbe_afem::Error::Io { path: out.clone(), source: e })?;
        surfgen::write_off(&c, &mut f).map_err(|e| pbe_afem::Error::Io { path: out, source: e })?;
    }
    Ok(())
}
