//! Acceptance suite: one line per criterion, non-zero exit if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use covshrink::cli::run;
use covshrink::convergence::{convergence_sweep, limit_moment_check, multiblock_limit_check, ConvergenceReport};
use covshrink::discriminant::{cross_validate_many, load_csv, ClassifierConfig, CvScheme};
use covshrink::estimators::{all_coeffs, CoefficientVector, EstimatorKind};
use covshrink::linalg::{BlockPartition, EigenSpec, OrthoMatrix};
use covshrink::mc::McConfig;
use covshrink::moments::{f3_exact, moment_table, DeltaExponent, MomentPolicy, MomentTable, DEFAULT_MOMENT_REPS};
use covshrink::risk::{analytic_risk_table, asymptotic_risk_identity_blocks, find_report, LossKind};
use covshrink::sampling::{split_stream, RandomStream};
use num::BigRational;
use rand::Rng;
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Deserialize)]
struct Reference {
    p: usize,
    m: usize,
    n: usize,
    c: BTreeMap<String, Vec<f64>>,
    stein: BTreeMap<String, f64>,
    stein_rrr: BTreeMap<String, f64>,
    quadratic: BTreeMap<String, f64>,
    quadratic_rrr: BTreeMap<String, f64>,
}

fn references() -> Vec<Reference> {
    let text = include_str!("data/reference_tables.json");
    serde_json::from_str(text).expect("reference tables parse")
}

fn kind_of(name: &str) -> EstimatorKind {
    name.parse().expect("known estimator")
}

fn moments_for(p: usize, m: usize, n: usize) -> MomentTable {
    let stream = split_stream(&RandomStream::root(20_240), ((p * 100 + m) * 1000 + n) as u64);
    moment_table(p, m, n, MomentPolicy::Auto, &McConfig::new(DEFAULT_MOMENT_REPS, stream)).expect("moment table")
}

/// Outcome of one criterion: failure messages and a one-line summary.
struct Outcome {
    summary: String,
    failures: Vec<String>,
}

/// Printed four-decimal value `y` is a rounding of `x`, directly or through five decimals.
fn rounds_to(x: f64, y: f64) -> bool {
    let printed = (y * 1e4).round() as i64;
    let five = (x * 1e5).round() as i64;
    format!("{x:.4}") == format!("{y:.4}") || (five + 5).div_euclid(10) == printed
}

fn criterion_1() -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0;
    for r in references() {
        let t = moments_for(r.p, r.m, r.n);
        let coeffs = all_coeffs(r.p, r.m, r.n, &t).expect("coefficients");
        for (name, printed) in &r.c {
            let ours = coeffs.iter().find(|c| c.kind == kind_of(name)).unwrap();
            for (i, (&x, &y)) in ours.c.iter().zip(printed).enumerate() {
                checked += 1;
                let ok = if t.is_exact() {
                    rounds_to(x, y)
                } else {
                    let se = t.stderr_e1.iter().chain(&t.stderr_e2).fold(0.0f64, |a, b| a.max(*b));
                    (x - y).abs() <= (5.0 * se).max(5e-4)
                };
                if !ok {
                    failures.push(format!("({},{},{}) {name} c{}: computed {x:.6}, printed {y:.4}", r.p, r.m, r.n, i + 1));
                }
            }
        }
    }
    Outcome {
        summary: format!("{} of {checked} coefficients match to 4 decimals", checked - failures.len()),
        failures,
    }
}

fn criterion_2() -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0;
    for r in references() {
        let t = moments_for(r.p, r.m, r.n);
        let risks = analytic_risk_table(&all_coeffs(r.p, r.m, r.n, &t).unwrap(), &t).unwrap();
        for (loss, printed, printed_rrr, tol) in [
            (LossKind::Stein, &r.stein, &r.stein_rrr, 0.005),
            (LossKind::Quadratic, &r.quadratic, &r.quadratic_rrr, 5e-4),
        ] {
            let passes = |name: &str| {
                let ours = find_report(&risks, loss, kind_of(name)).unwrap().value;
                (ours - printed[name]).abs() <= tol
            };
            for (name, &y) in printed {
                checked += 1;
                let ours = find_report(&risks, loss, kind_of(name)).unwrap().value;
                if !passes(name) {
                    failures.push(format!("({},{},{}) {loss} risk {name}: computed {ours:.4}, printed {y:.4}", r.p, r.m, r.n));
                }
            }
            for (name, &y) in printed_rrr {
                if !(passes(name) && passes("U")) {
                    continue;
                }
                checked += 1;
                let ours = find_report(&risks, loss, kind_of(name)).unwrap().rrr_vs_u.unwrap();
                if (ours - y).abs() > 0.1 {
                    failures.push(format!("({},{},{}) {loss} R.R.R. {name}: computed {ours:.2}, printed {y:.2}", r.p, r.m, r.n));
                }
            }
        }
    }
    Outcome {
        summary: format!("{} of {checked} risk and R.R.R. values within tolerance", checked - failures.len()),
        failures,
    }
}

fn criterion_3() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = RandomStream::root(3).rng();
    let refs = references();
    for r in &refs {
        let t = moments_for(r.p, r.m, r.n);
        let coeffs = all_coeffs(r.p, r.m, r.n, &t).unwrap();
        for (loss, best) in [(LossKind::Stein, EstimatorKind::Ma1), (LossKind::Quadratic, EstimatorKind::Ma2)] {
            let risk = |c: &CoefficientVector| asymptotic_risk_identity_blocks(loss, c, &t).unwrap().value;
            let opt = coeffs.iter().find(|c| c.kind == best).unwrap();
            let r_opt = risk(opt);
            let mut rivals: Vec<(String, CoefficientVector)> = coeffs
                .iter()
                .filter(|c| c.kind != best)
                .map(|c| (c.kind.to_string(), c.clone()))
                .collect();
            for k in 0..100 {
                let c: Vec<f64> = if k % 2 == 0 {
                    opt.c.iter().map(|ci| ci * (rng.random::<f64>() - 0.5).exp()).collect()
                } else {
                    (0..r.p).map(|_| rng.random_range(1e-3..2.0) / r.n as f64).collect()
                };
                let mut cv = CoefficientVector::custom(c, r.n).unwrap();
                cv.context = opt.context;
                rivals.push((format!("random #{k}"), cv));
            }
            for (name, c) in rivals {
                let rv = risk(&c);
                if rv < r_opt - 1e-12 {
                    failures.push(format!("({},{},{}) {loss}: {name} risk {rv:.6} below {best} {r_opt:.6}", r.p, r.m, r.n));
                }
            }
        }
    }
    Outcome {
        summary: format!("MA1/MA2 minimal against 104 rivals in each of {} configurations", refs.len()),
        failures,
    }
}

const SWEEP_CONFIGS: [(usize, usize); 6] = [(3, 10), (3, 20), (3, 50), (4, 11), (4, 21), (4, 51)];
const SWEEP_REPS: usize = 1_000_000;

fn sweeps() -> &'static Vec<ConvergenceReport> {
    static CELL: std::sync::OnceLock<Vec<ConvergenceReport>> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        SWEEP_CONFIGS
            .iter()
            .map(|&(p, n)| convergence_sweep(p, 1, n, &[1.0, 0.1, 1e-6], SWEEP_REPS, &RandomStream::root(46), false).unwrap())
            .collect()
    })
}

fn criterion_4() -> Outcome {
    let mut failures = Vec::new();
    for rep in sweeps() {
        let tag = format!("p={} n={}", rep.p, rep.n);
        let limit = rep.row(1e-6).unwrap();
        for pr in &limit.probs {
            let se = (pr.nominal * (1.0 - pr.nominal) / rep.reps as f64).sqrt();
            if (pr.value - pr.nominal).abs() > 4.0 * se {
                failures.push(format!("{tag} beta=1e-6 {}: {:.4} vs {:.2} ({:.1} stderr)", pr.name, pr.value, pr.nominal, (pr.value - pr.nominal) / se));
            }
        }
        let one = rep.row(1.0).unwrap();
        let v = |name: &str| one.prob(name).unwrap().value;
        let mut expect = |what: &str, ok: bool, value: f64| {
            if !ok {
                failures.push(format!("{tag} beta=1: expected {what}, got {value:.4}"));
            }
        };
        for name in ["Prob 1a", "Prob 2a", "Prob 3a"] {
            expect(&format!("{name} >> 0.05"), v(name) > 0.25, v(name));
        }
        expect("Prob 1b > 0.95", v("Prob 1b") > 0.95, v("Prob 1b"));
        for name in ["Prob 2b", "Prob 3b"] {
            expect(&format!("{name} > 0.99"), v(name) > 0.99, v(name));
        }
        expect("Prob 4a > 0.05", v("Prob 4a") > 0.05, v("Prob 4a"));
        for name in ["Prob 4b", "Prob 5b"] {
            expect(&format!("{name} well below 0.95"), v(name) < 0.8, v(name));
        }
        if rep.p == 3 {
            expect("Prob 5a ~ 0", v("Prob 5a") < 0.03, v("Prob 5a"));
        } else {
            expect("Prob 5a > 0.05", v("Prob 5a") > 0.05, v("Prob 5a"));
        }
    }
    Outcome {
        summary: format!("limit and beta=1 probabilities for {} configurations at {SWEEP_REPS} replicates", SWEEP_CONFIGS.len()),
        failures,
    }
}

fn criterion_5() -> Outcome {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for rep in sweeps() {
        let row = rep.row(0.1).unwrap();
        for a in &rep.asymptotic_risks {
            let mc = row.risk(a.loss, a.estimator).unwrap().value;
            let rel = mc / a.value - 1.0;
            worst = worst.max(rel.abs());
            if rel.abs() > 0.05 {
                failures.push(format!("p={} n={} {} {}: MC {mc:.4} vs {:.4} ({:+.1}%)", rep.p, rep.n, a.loss, a.estimator, a.value, 100.0 * rel));
            }
        }
    }
    Outcome {
        summary: format!("beta=0.1 risks of all estimators under both losses; worst deviation {:.1}%", 100.0 * worst),
        failures,
    }
}

fn criterion_6() -> Outcome {
    let mut failures = Vec::new();
    let cfg = |seed| McConfig::new(100_000, RandomStream::root(seed));
    let mut reports = Vec::new();
    let gamma = OrthoMatrix::identity(3);
    let two = EigenSpec::identity_blocks(3, 1, 1.0, 1e-6).unwrap();
    reports.push(("p=3 m=1 n=10", limit_moment_check(&two, &gamma, 10, &cfg(61)).unwrap()));
    let general = EigenSpec::two_block(4, 2, vec![3.0, 1.0, 2.0, 0.5], 1.0, 1e-6).unwrap();
    reports.push(("p=4 m=2 n=9 general xi", limit_moment_check(&general, &OrthoMatrix::identity(4), 9, &cfg(62)).unwrap()));
    let three = EigenSpec::new(BlockPartition::from_sizes(&[1, 2, 1]).unwrap(), vec![1.0; 4], vec![1.0, 1e-6, 1e-12]).unwrap();
    reports.push(("sizes (1,2,1) n=11", multiblock_limit_check(&three, 11, &cfg(63)).unwrap()));
    let singles = EigenSpec::new(BlockPartition::from_sizes(&[1, 1, 1]).unwrap(), vec![1.0; 3], vec![1.0, 1e-6, 1e-12]).unwrap();
    reports.push(("sizes (1,1,1) n=10", multiblock_limit_check(&singles, 10, &cfg(64)).unwrap()));
    let mut count = 0;
    for (tag, rep) in &reports {
        for c in &rep.checks {
            count += 1;
            if c.z_score().abs() > 5.0 {
                failures.push(format!("{tag} {}: {:.5} vs {:.5} ({:.1} stderr)", c.name, c.estimate, c.target, c.z_score()));
            }
        }
    }
    Outcome {
        summary: format!("{count} moment and correlation checks across {} spectra", reports.len()),
        failures,
    }
}

fn criterion_7() -> Outcome {
    let mut failures = Vec::new();
    let one = BigRational::from_integer(1.into());
    for dof in [4usize, 6, 8, 10, 20, 50] {
        let f = |a, b, c| f3_exact(DeltaExponent::new(a, b, c), dof).unwrap();
        if f(0, 0, 0) != one {
            failures.push(format!("F3(0,0,0) != 1 at dof {dof}"));
        }
        let two = BigRational::from_integer(2.into());
        let three = BigRational::from_integer(3.into());
        if f(1, 0, 0) + two * f(0, 1, 0) + three * f(0, 0, 1) != BigRational::from_integer((3 * dof).into()) {
            failures.push(format!("trace identity fails at dof {dof}"));
        }
    }
    for (p, m, n) in [(3, 1, 10), (4, 1, 11), (4, 2, 9), (4, 3, 10), (3, 2, 7)] {
        let exact = moment_table(p, m, n, MomentPolicy::ExactOnly, &McConfig::new(1, RandomStream::root(0))).unwrap();
        let mc = moment_table(p, m, n, MomentPolicy::McOnly, &McConfig::new(200_000, RandomStream::root(71))).unwrap();
        for (range, dof) in [(0..m, n), (m..p, n - m)] {
            let q = range.len() as f64;
            let s: f64 = exact.e1[range.clone()].iter().sum();
            if (s - q * dof as f64).abs() > 1e-9 * s {
                failures.push(format!("({p},{m},{n}) exact block trace {s} != {}", q * dof as f64));
            }
            let s_mc: f64 = mc.e1[range.clone()].iter().sum();
            let se: f64 = mc.stderr_e1[range.clone()].iter().map(|x| x * x).sum::<f64>().sqrt() * q.sqrt();
            if (s_mc - q * dof as f64).abs() > 5.0 * se.max(1e-12) {
                failures.push(format!("({p},{m},{n}) MC block trace {s_mc:.4} vs {}", q * dof as f64));
            }
        }
        for i in 0..p {
            for (name, e, x, se) in [("e1", exact.e1[i], mc.e1[i], mc.stderr_e1[i]), ("e2", exact.e2[i], mc.e2[i], mc.stderr_e2[i])] {
                if (e - x).abs() > 5.0 * se {
                    failures.push(format!("({p},{m},{n}) {name}[{}]: exact {e:.5}, MC {x:.5} +- {se:.5}", i + 1));
                }
            }
        }
    }
    Outcome {
        summary: "F3 normalization and trace identity exact; exact and MC moments agree".into(),
        failures,
    }
}

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    let ds = load_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv"), "species", None).unwrap();
    let cfg = ClassifierConfig::default();
    let kinds = EstimatorKind::ALL;
    let loo = cross_validate_many(&ds, CvScheme::LeaveOneOut, &kinds, &cfg).unwrap();
    for r in &loo {
        if r.total_trials != 150 {
            failures.push(format!("LOO {}: {} trials", r.estimator, r.total_trials));
        }
        if r.total_correct != 145 {
            failures.push(format!(
                "LOO {}: {}/150 correct ({:.2}%), expected 145/150 (96.67%)",
                r.estimator, r.total_correct, r.overall_ccp
            ));
        }
    }
    let targets = [
        (10usize, 600usize, [81.83, 82.33, 82.17, 82.83, 82.67]),
        (5, 1350, [67.33, 69.93, 68.59, 76.22, 73.85]),
    ];
    let mut five = Vec::new();
    for (k, trials, printed) in targets {
        let reports = cross_validate_many(&ds, CvScheme::KSampleSet(k), &kinds, &cfg).unwrap();
        for (r, y) in reports.iter().zip(printed) {
            if r.total_trials != trials {
                failures.push(format!("kset:{k} {}: {} trials, expected {trials}", r.estimator, r.total_trials));
            }
            if (r.average_ccp - y).abs() > 2.0 {
                failures.push(format!("kset:{k} {}: average {:.2}% vs printed {y:.2}%", r.estimator, r.average_ccp));
            }
        }
        if k == 5 {
            five = reports;
        }
    }
    let avg = |kind| five.iter().find(|r| r.estimator == kind).unwrap().average_ccp;
    let rest = [EstimatorKind::Sds, EstimatorKind::Kg, EstimatorKind::U].map(avg);
    if !(avg(EstimatorKind::Ma1) > avg(EstimatorKind::Ma2) && rest.iter().all(|&x| avg(EstimatorKind::Ma2) > x)) {
        failures.push(format!("kset:5 ordering MA1 > MA2 > {{SDS, KG, U}} violated: {:?}", five.iter().map(|r| (r.estimator, r.average_ccp)).collect::<Vec<_>>()));
    }
    Outcome {
        summary: "leave-one-out and sample-set cross-validation on iris".into(),
        failures,
    }
}

fn numbers_close(a: &Value, b: &Value, path: &str, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() > 1e-12 * x.abs().max(1.0) {
                out.push(format!("{path}: {x} vs {y}"));
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                numbers_close(u, v, &format!("{path}[{i}]"), out);
            }
        }
        (Value::Object(x), Value::Object(y)) if x.len() == y.len() => {
            for (k, u) in x {
                match y.get(k) {
                    Some(v) => numbers_close(u, v, &format!("{path}.{k}"), out),
                    None => out.push(format!("{path}.{k} missing")),
                }
            }
        }
        _ if a == b => {}
        _ => out.push(format!("{path}: {a} vs {b}")),
    }
}

fn criterion_9() -> Outcome {
    let iris = concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv");
    let commands: Vec<Vec<&str>> = vec![
        vec!["coeffs", "--p", "4", "--m", "1", "--n", "6", "--reps", "20000"],
        vec!["moments", "--p", "4", "--m", "2", "--n", "8", "--mc-only", "--reps", "20000"],
        vec!["risk-table", "--p", "3", "--m", "2", "--n-list", "5,8", "--reps", "20000"],
        vec!["risk-sweep", "--p", "3", "--m", "1", "--n", "10", "--beta-list", "1,0.1,1e-4", "--reps", "20000"],
        vec!["converge", "--p", "4", "--m", "1", "--n", "11", "--beta-list", "0.5,1e-6", "--reps", "20000", "--random-gamma", "--g21-eps", "0.1"],
        vec!["multiblock", "--cuts", "1,3,4", "--n", "11", "--reps", "20000"],
        vec!["classify", "--data", iris, "--scheme", "kset:5", "--reps", "20000"],
    ];
    let mut failures = Vec::new();
    for cmd in &commands {
        let outputs: Vec<(String, String)> = ["1", "2", "7"]
            .iter()
            .map(|t| {
                let mut args = vec!["covshrink", "--seed", "9", "--threads", t];
                args.extend(cmd);
                let json = run(args.iter().copied().chain(["--format", "json"])).unwrap();
                let csv = run(args.iter().copied()).unwrap();
                (json, csv)
            })
            .collect();
        let first: Value = serde_json::from_str(&outputs[0].0).unwrap();
        for (json, csv) in &outputs[1..] {
            let other: Value = serde_json::from_str(json).unwrap();
            let mut diffs = Vec::new();
            numbers_close(&first, &other, "", &mut diffs);
            if !diffs.is_empty() {
                failures.push(format!("{}: {} differing numbers, first {}", cmd[0], diffs.len(), diffs[0]));
            }
            if csv != &outputs[0].1 {
                failures.push(format!("{}: CSV differs across thread counts", cmd[0]));
            }
        }
    }
    Outcome {
        summary: format!("{} subcommands identical across 1, 2 and 7 threads", commands.len()),
        failures,
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("coefficient tables", criterion_1),
        ("asymptotic risks", criterion_2),
        ("optimality", criterion_3),
        ("convergence probabilities", criterion_4),
        ("risk convergence", criterion_5),
        ("limit moments", criterion_6),
        ("moment identities", criterion_7),
        ("discriminant analysis", criterion_8),
        ("determinism", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| label.contains(x.as_str()) || *x == (i + 1).to_string()) {
            continue;
        }
        let start = Instant::now();
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) if o.failures.is_empty() => {
                println!("PASS {label}: {} [{:.1}s]", o.summary, start.elapsed().as_secs_f64());
            }
            Ok(o) => {
                failed += 1;
                println!("FAIL {label}: {} [{:.1}s]", o.summary, start.elapsed().as_secs_f64());
                for msg in &o.failures {
                    println!("    {msg}");
                }
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {label}: panicked");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
