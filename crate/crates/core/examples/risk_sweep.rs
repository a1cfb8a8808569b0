//! Finite-sample Monte Carlo risks approaching their asymptotic values.

use covshrink::convergence::convergence_sweep;
use covshrink::sampling::RandomStream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = [1.0, 0.3, 0.1, 0.01, 1e-4];
    let rep = convergence_sweep(4, 1, 11, &grid, 50_000, &RandomStream::root(5), true)?;
    for a in &rep.asymptotic_risks {
        let path: Vec<String> = rep
            .rows
            .iter()
            .map(|row| format!("{:.4}", row.risk(a.loss, a.estimator).map_or(f64::NAN, |r| r.value)))
            .collect();
        println!("{:<9} {:<4} {}  -> {:.4}", a.loss.to_string(), a.estimator.to_string(), path.join("  "), a.value);
    }
    Ok(())
}
