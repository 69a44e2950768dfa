//! Electrostatic solvation energy ½ Σ z_i (u^h + u)(x_i) for a few charges in
//! a spherical cavity, under uniform interface-snapped refinement.

use pbe_afem::afem::{self, AfemOptions};
use pbe_afem::mesh::{build_ball_mesh, refine, MarkedSet};
use pbe_afem::molio::{BornIon, ChargeSystem, PointCharge};
use pbe_afem::Point;

fn main() -> pbe_afem::Result<()> {
    let born = BornIon::reference();
    let cs = ChargeSystem::new(
        vec![
            PointCharge::new(Point::new(0.031, 0.017, -0.023), 0.6),
            PointCharge::new(Point::new(0.47, 0.09, 0.05), -0.3),
            PointCharge::new(Point::new(-0.21, 0.41, -0.11), -0.1),
        ],
        born.eps_m,
        born.eps_s,
        0.0,
    )?;
    let mut mesh = build_ball_mesh(5.0, 1.0, 1)?;
    let mut prev: Option<f64> = None;
    for _ in 0..3 {
        let level = afem::solve_on(mesh.clone(), &cs, &AfemOptions::default(), None)?;
        let e = afem::solvation_energy(&level.mesh, &cs, &level.split, &level.solution, 1.0)?.energy;
        match prev {
            Some(p) => println!("{:>8} tets  ΔG = {e:.8}  (change {:+.3e})", mesh.num_tets(), e - p),
            None => println!("{:>8} tets  ΔG = {e:.8}", mesh.num_tets()),
        }
        prev = Some(e);
        mesh = refine(&mesh, &MarkedSet::all(&mesh), 3)?;
    }
    println!("Born ion for reference: {}", born.solvation_energy());
    Ok(())
}
