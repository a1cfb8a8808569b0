//! Tracks the ten coverage probabilities as the second block of eigenvalues shrinks.

use covshrink::convergence::{convergence_sweep, g21_exceedance};
use covshrink::sampling::RandomStream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = [1.0, 0.1, 1e-2, 1e-4, 1e-6];
    let rep = convergence_sweep(3, 1, 10, &grid, 100_000, &RandomStream::root(3), false)?;
    print!("{:<10}", "");
    for b in &grid {
        print!("{:>10}", format!("{b:e}"));
    }
    println!("{:>10}", "nominal");
    for (i, pr) in rep.rows[0].probs.iter().enumerate() {
        print!("{:<10}", pr.name);
        for row in &rep.rows {
            print!("{:>10.4}", row.probs[i].value);
        }
        println!("{:>10.2}", pr.nominal);
    }
    for e in g21_exceedance(3, 1, 10, &grid, 0.05, 100_000, &RandomStream::root(4))? {
        print!("{:>10.4}", e.value);
    }
    println!("  <- P(max |G21| > 0.05)");
    Ok(())
}
