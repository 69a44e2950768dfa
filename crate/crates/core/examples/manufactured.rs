//! Convergence on u = sin(πx)sin(πy)sin(πz) for −Δu + sinh u = f.

use pbe_afem::afem::sine_convergence;

fn main() -> pbe_afem::Result<()> {
    let rows = sine_convergence(4, 3)?;
    println!("{:>6} {:>9} {:>12} {:>6} {:>12} {:>6}", "cells", "tets", "L2", "rate", "energy", "rate");
    for (i, r) in rows.iter().enumerate() {
        let rate = |f: fn(&pbe_afem::afem::ConvergenceRow) -> f64| {
            if i == 0 { String::from("-") } else { format!("{:.2}", (f(&rows[i - 1]) / f(r)).log2()) }
        };
        println!(
            "{:>6} {:>9} {:>12.4e} {:>6} {:>12.4e} {:>6}",
            r.cells,
            r.tets,
            r.l2_error,
            rate(|r| r.l2_error),
            r.energy_error,
            rate(|r| r.energy_error)
        );
    }
    Ok(())
}
