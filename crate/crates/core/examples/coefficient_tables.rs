//! Prints the coefficients and asymptotic risks of the five estimators for a few `(p, m, n)`.

use covshrink::estimators::all_coeffs;
use covshrink::mc::McConfig;
use covshrink::moments::{moment_table, MomentPolicy};
use covshrink::risk::{analytic_risk_table, LossKind};
use covshrink::sampling::RandomStream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (p, m, n) in [(3, 1, 10), (3, 2, 11), (4, 1, 11), (4, 3, 10)] {
        let t = moment_table(p, m, n, MomentPolicy::Auto, &McConfig::new(200_000, RandomStream::root(1)))?;
        let coeffs = all_coeffs(p, m, n, &t)?;
        let risks = analytic_risk_table(&coeffs, &t)?;
        println!("p={p} m={m} n={n} (exact moments: {})", t.is_exact());
        for c in &coeffs {
            let c_str: Vec<String> = c.c.iter().map(|x| format!("{x:.4}")).collect();
            let risk = |loss| risks.iter().find(|r| r.loss == loss && r.estimator == c.kind).map(|r| r.value).unwrap_or(f64::NAN);
            println!(
                "  {:<4} c = [{}]  stein {:.4}  quadratic {:.4}",
                c.kind.to_string(),
                c_str.join(", "),
                risk(LossKind::Stein),
                risk(LossKind::Quadratic)
            );
        }
    }
    Ok(())
}
