//! Applies each estimator to one Wishart draw and compares the losses.

use covshrink::estimators::{all_coeffs, apply_estimator};
use covshrink::linalg::{build_sigma, symmetric_eigenvalues, EigenSpec};
use covshrink::mc::McConfig;
use covshrink::moments::{moment_table, MomentPolicy};
use covshrink::risk::{loss, LossKind};
use covshrink::sampling::{random_orthogonal, sample_wishart, RandomStream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (p, m, n) = (3, 1, 10);
    let spec = EigenSpec::identity_blocks(p, m, 1.0, 0.05)?;
    let gamma = random_orthogonal(p, &mut RandomStream::root(9).rng());
    let sigma = build_sigma(&spec, &gamma)?;
    let s = sample_wishart(n, &sigma, &RandomStream::root(7))?;
    println!("eigenvalues of S: {:?}", symmetric_eigenvalues(&s));
    let t = moment_table(p, m, n, MomentPolicy::Auto, &McConfig::new(100_000, RandomStream::root(1)))?;
    for c in all_coeffs(p, m, n, &t)? {
        let est = apply_estimator(&s, &c, None)?;
        println!(
            "{:<4} stein loss {:.4}  quadratic loss {:.4}",
            c.kind.to_string(),
            loss(LossKind::Stein, &est, &sigma)?,
            loss(LossKind::Quadratic, &est, &sigma)?
        );
    }
    Ok(())
}
