//! The adaptive loop on the Born ion with the exact error, followed by the
//! contraction monitor.

use pbe_afem::afem::{contraction_check, run_afem, AfemOptions, BornOracle};
use pbe_afem::cli::render_table;
use pbe_afem::mesh::build_ball_mesh;
use pbe_afem::molio::BornIon;

fn main() -> pbe_afem::Result<()> {
    let ion = BornIon::reference();
    let opts = AfemOptions { theta: 0.5, max_iterations: 8, ..Default::default() };
    let run = run_afem(build_ball_mesh(5.0, 1.0, 1)?, &ion.charge_system(), &opts, Some(&BornOracle { ion }))?;
    print!("{}", render_table(&run.trace));

    let c = contraction_check(&run.trace, None)?;
    println!("\nγ = {:.4e}", c.gamma);
    for (k, r) in c.ratios.iter().enumerate() {
        println!("  q{}/q{} = {r:.4}", k + 1, k);
    }
    if !c.quasi_orthogonality_violations.is_empty() {
        println!("quasi-orthogonality flagged at steps {:?}", c.quasi_orthogonality_violations);
    }
    Ok(())
}
