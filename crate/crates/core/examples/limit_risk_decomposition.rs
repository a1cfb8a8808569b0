//! Limit risk of each estimator split into its three parts, for a non-identity spectrum.

use covshrink::estimators::all_coeffs;
use covshrink::mc::McConfig;
use covshrink::moments::{moment_table, MomentPolicy};
use covshrink::risk::{asymptotic_risk_limitdist_mc, LossKind};
use covshrink::sampling::RandomStream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (p, m, n) = (4, 2, 9);
    let (xi1, xi2) = ([3.0, 1.0], [2.0, 0.5]);
    let t = moment_table(p, m, n, MomentPolicy::Auto, &McConfig::new(100_000, RandomStream::root(1)))?;
    for c in all_coeffs(p, m, n, &t)? {
        for loss in LossKind::BOTH {
            let d = asymptotic_risk_limitdist_mc(loss, &c, p, m, n, &xi1, &xi2, &McConfig::new(50_000, RandomStream::root(6)))?;
            println!(
                "{:<4} {:<9} R1 {:.4}  R2 {:.4}  R3 {:.4}  total {:.4} ± {:.4}",
                c.kind.to_string(),
                loss.to_string(),
                d.r1d,
                d.r2d,
                d.r3d,
                d.total,
                d.stderr_total
            );
        }
    }
    Ok(())
}
