//! Exact ordered-eigenvalue moments from the gap densities, checked against Monte Carlo.

use covshrink::mc::McConfig;
use covshrink::moments::{f3_exact, ordered_moments, DeltaExponent, MomentPolicy};
use covshrink::sampling::RandomStream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dof = 10;
    println!("F3 moments for W_3({dof}, I):");
    for (a, b, c) in [(0, 0, 0), (1, 0, 0), (0, 1, 1), (0, 0, 2)] {
        println!("  F3({a}, {b}, {c}) = {}", f3_exact(DeltaExponent::new(a, b, c), dof)?);
    }
    for (block, dof) in [(2, 9), (3, 10)] {
        let exact = ordered_moments(block, dof, MomentPolicy::ExactOnly, &McConfig::new(1, RandomStream::root(0)))?;
        let mc = ordered_moments(block, dof, MomentPolicy::McOnly, &McConfig::new(200_000, RandomStream::root(2)))?;
        println!("block size {block}, dof {dof}");
        for i in 0..block {
            println!(
                "  E[l{}] exact {:.5} mc {:.5} ± {:.5}   E[l{}^2] exact {:.4} mc {:.4} ± {:.4}",
                i + 1,
                exact.e1[i],
                mc.e1[i],
                mc.stderr_e1[i],
                i + 1,
                exact.e2[i],
                mc.e2[i],
                mc.stderr_e2[i]
            );
        }
    }
    Ok(())
}
