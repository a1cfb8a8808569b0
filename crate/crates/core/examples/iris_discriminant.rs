//! Quadratic discriminant analysis on iris with each covariance estimator.

use covshrink::discriminant::{cross_validate_many, load_csv, ClassifierConfig, CvScheme};
use covshrink::estimators::EstimatorKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = load_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv"), "species", None)?;
    let cfg = ClassifierConfig::default();
    for scheme in [CvScheme::LeaveOneOut, CvScheme::KSampleSet(10), CvScheme::KSampleSet(5)] {
        println!("{scheme}");
        for r in cross_validate_many(&ds, scheme, &EstimatorKind::ALL, &cfg)? {
            println!(
                "  {:<4} {}/{} correct, overall {:.2}%, fold average {:.2}%",
                r.estimator.to_string(),
                r.total_correct,
                r.total_trials,
                r.overall_ccp,
                r.average_ccp
            );
        }
    }
    Ok(())
}
