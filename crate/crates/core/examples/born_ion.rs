//! Solve the Born ion with the three-term splitting and compare with the
//! analytic regular component.
//!
//!     cargo run --release --example born_ion -- 3

use pbe_afem::afem::{self, AfemOptions};
use pbe_afem::mesh::build_ball_mesh;
use pbe_afem::molio::BornIon;
use pbe_afem::splitting::Scheme;

fn main() -> pbe_afem::Result<()> {
    let k: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let ion = BornIon::reference();
    let cs = ion.charge_system();
    let mesh = build_ball_mesh(ion.domain_radius, ion.radius, k)?;
    println!("ball mesh k={k}: {} tets, {} vertices", mesh.num_tets(), mesh.num_vertices());

    let level = afem::solve_on(mesh, &cs, &AfemOptions::default(), None)?;
    let flags = level.mesh.vertex_flags();
    let mut worst = (0.0f64, 0.0f64);
    for (v, f) in flags.iter().enumerate() {
        let r = level.mesh.vertex(v as u32).coords.norm();
        let e = (level.solution.values[v] - ion.exact_regular(r, Scheme::ThreeTerm)?).abs();
        if f.solvent {
            worst.0 = worst.0.max(e);
        } else {
            worst.1 = worst.1.max(e);
        }
    }
    let scale = ion.exact_regular(ion.radius, Scheme::ThreeTerm)?;
    println!("newton iterations: {}", level.solution.iterations);
    println!("relative L∞ error: solvent {:.3e}, molecule {:.3e}", worst.0 / scale, worst.1 / scale);
    println!("η = {:.4e}", level.indicators.eta());
    Ok(())
}
