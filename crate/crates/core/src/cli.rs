//! Command-line front end. [`run`] parses arguments, executes one subcommand and
//! renders its result; the binary only prints and sets the exit code.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::convergence::{
    convergence_sweep, g21_exceedance, multiblock_limit_check, sweep_coefficients, DEFAULT_BETA_GRID,
    DEFAULT_SWEEP_REPS, PROB_NAMES, SWEEP_RISK_ROWS,
};
use crate::discriminant::{cross_validate_many, load_csv, ClassifierConfig, CvScheme, DofConvention, SingularPolicy};
use crate::error::Error;
use crate::estimators::{all_coeffs, EstimatorKind};
use crate::linalg::{build_sigma, BlockPartition, EigenSpec, OrthoMatrix};
use crate::mc::McConfig;
use crate::moments::{moment_table, MomentMethod, MomentPolicy, DEFAULT_MOMENT_REPS};
use crate::risk::{analytic_risk_table, find_report, risk_mc_finite_many, LossKind, DEFAULT_RISK_REPS};
use crate::sampling::{random_orthogonal, split_stream, RandomStream};

/// Largest dimension accepted on the command line.
pub const MAX_DIM: usize = 12;

/// `(p, m, n)` blocks printed by `coeffs --all`.
pub const REFERENCE_CONFIGS: [(usize, usize, usize); 30] = [
    (3, 1, 4),
    (3, 1, 6),
    (3, 1, 8),
    (3, 1, 10),
    (3, 1, 20),
    (3, 1, 50),
    (3, 2, 5),
    (3, 2, 7),
    (3, 2, 9),
    (3, 2, 11),
    (3, 2, 21),
    (3, 2, 51),
    (4, 1, 5),
    (4, 1, 7),
    (4, 1, 9),
    (4, 1, 11),
    (4, 1, 21),
    (4, 1, 51),
    (4, 2, 5),
    (4, 2, 7),
    (4, 2, 9),
    (4, 2, 11),
    (4, 2, 21),
    (4, 2, 51),
    (4, 3, 4),
    (4, 3, 6),
    (4, 3, 8),
    (4, 3, 10),
    (4, 3, 20),
    (4, 3, 50),
];

#[derive(Debug, Parser)]
#[command(name = "covshrink", version, about = "Covariance shrinkage under block-wise dispersed spectra")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Monte Carlo replicates (default depends on the subcommand).
    #[arg(long, global = true)]
    pub reps: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Stein,
    Quadratic,
    Both,
}

impl LossArg {
    fn kinds(self) -> Vec<LossKind> {
        match self {
            Self::Stein => vec![LossKind::Stein],
            Self::Quadratic => vec![LossKind::Quadratic],
            Self::Both => LossKind::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct Pm {
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub m: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coefficients and asymptotic risks of the five estimators.
    Coeffs {
        #[arg(long, requires = "m")]
        p: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, value_delimiter = ',', alias = "n-list")]
        n: Vec<usize>,
        /// Every reference configuration.
        #[arg(long, conflicts_with_all = ["p", "m", "n"])]
        all: bool,
        /// u, sds, kg, ma1, ma2 or all.
        #[arg(long, default_value = "all")]
        estimator: String,
    },
    /// First and second moments of the ordered limit eigenvalues.
    Moments {
        #[command(flatten)]
        pm: Pm,
        #[arg(long)]
        n: usize,
        #[arg(long, conflicts_with = "mc_only")]
        exact_only: bool,
        #[arg(long)]
        mc_only: bool,
    },
    /// Analytic asymptotic risks over a list of n.
    RiskTable {
        #[command(flatten)]
        pm: Pm,
        #[arg(long = "n-list", value_delimiter = ',', required = true, alias = "n")]
        n_list: Vec<usize>,
        #[arg(long, value_enum, default_value_t = LossArg::Both)]
        loss: LossArg,
    },
    /// Monte Carlo risks over a grid of scale ratios beta.
    RiskSweep {
        #[command(flatten)]
        pm: Pm,
        #[arg(long)]
        n: usize,
        #[arg(long = "beta-list", value_delimiter = ',')]
        beta_list: Vec<f64>,
        #[arg(long)]
        random_gamma: bool,
    },
    /// Convergence of the transformed statistics and risks over beta.
    Converge {
        #[command(flatten)]
        pm: Pm,
        #[arg(long)]
        n: usize,
        #[arg(long = "beta-list", value_delimiter = ',')]
        beta_list: Vec<f64>,
        #[arg(long)]
        random_gamma: bool,
        /// Also report P(max |G21| > eps).
        #[arg(long)]
        g21_eps: Option<f64>,
    },
    /// Limit-law moment checks for three or more blocks.
    Multiblock {
        /// Block end points, e.g. 1,3,4 for sizes (1,2,1).
        #[arg(long, value_delimiter = ',', required = true)]
        cuts: Vec<usize>,
        /// Ratios between consecutive block scales (one value is repeated).
        #[arg(long, value_delimiter = ',', default_value = "1e-6")]
        ratios: Vec<f64>,
        /// Within-block eigenvalues (default all ones).
        #[arg(long, value_delimiter = ',')]
        xi: Vec<f64>,
        #[arg(long)]
        n: usize,
    },
    /// Cross-validated Mahalanobis classification.
    Classify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "loo")]
        scheme: String,
        /// u, sds, kg, ma1, ma2 or all.
        #[arg(long, default_value = "all")]
        estimator: String,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value = "n-1")]
        dof: String,
        #[arg(long, default_value = "species")]
        label_column: String,
        /// error or exclude.
        #[arg(long, default_value = "exclude")]
        singular: String,
    },
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_sig(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) | Cell::Empty => Value::Null,
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

/// Formats `x` with six significant digits, trimming trailing zeros.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let rounded: f64 = sci.parse().unwrap_or(x);
    let exp = rounded.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        let (mantissa, e) = sci.split_once('e').unwrap_or((&sci, "0"));
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        return format!("{mantissa}e{e}");
    }
    let s = format!("{:.*}", (5 - exp).max(0) as usize, rounded);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Tabular result plus optional structured detail for JSON output.
#[derive(Clone, Debug)]
pub struct Output {
    pub command: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub details: Option<Value>,
}

impl Output {
    fn new(command: &str, columns: &[&str]) -> Self {
        Self {
            command: command.to_string(),
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            details: None,
        }
    }

    fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    fn row(&mut self, cells: Vec<Cell>) {
        self.rows.push(cells);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut out = format!("# command: {}\n", self.command);
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| config_error(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::csv)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| config_error(e.to_string()))?;
        out.push_str(&String::from_utf8_lossy(&bytes));
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let meta: Map<String, Value> = self.meta.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        let mut doc = json!({
            "command": self.command,
            "meta": meta,
            "columns": self.columns,
            "rows": rows,
        });
        if let Some(d) = &self.details {
            doc["details"] = d.clone();
        }
        serde_json::to_string_pretty(&doc)
            .map(|s| s + "\n")
            .map_err(|e| config_error(e.to_string()))
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

fn to_value<T: Serialize>(x: &T) -> Result<Value, CliError> {
    serde_json::to_value(x).map_err(|e| config_error(e.to_string()))
}

fn validate(p: usize, m: usize, n: usize) -> Result<(), CliError> {
    if p > MAX_DIM {
        return Err(config_error(format!("p = {p} exceeds the maximum {MAX_DIM}")));
    }
    if m == 0 || m >= p {
        return Err(config_error(format!("need 1 <= m < p, got p = {p}, m = {m}")));
    }
    if n < p {
        return Err(config_error(format!("need n >= p, got n = {n}, p = {p}")));
    }
    Ok(())
}

fn reps_or(global: &GlobalArgs, default: usize) -> Result<usize, CliError> {
    match global.reps {
        Some(0) => Err(config_error("--reps must be at least 1")),
        Some(r) => Ok(r),
        None => Ok(default),
    }
}

fn beta_grid(list: &[f64]) -> Result<Vec<f64>, CliError> {
    let grid = if list.is_empty() { DEFAULT_BETA_GRID.to_vec() } else { list.to_vec() };
    if grid.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
        return Err(config_error("beta values must lie in (0, 1]"));
    }
    Ok(grid)
}

fn base_meta(out: &mut Output, g: &GlobalArgs, reps: Option<usize>) {
    out.meta("version", env!("CARGO_PKG_VERSION"));
    out.meta("seed", g.seed);
    if let Some(r) = reps {
        out.meta("reps", r);
    }
}

fn cmd_coeffs(g: &GlobalArgs, configs: &[(usize, usize, usize)], kinds: &[EstimatorKind]) -> Result<Output, CliError> {
    let reps = reps_or(g, DEFAULT_MOMENT_REPS)?;
    let mut columns = vec!["p", "m", "n", "row"];
    columns.extend(kinds.iter().map(|k| k.name()));
    let mut out = Output::new("coeffs", &columns);
    base_meta(&mut out, g, Some(reps));
    let mut details = Vec::new();
    for &(p, m, n) in configs {
        validate(p, m, n)?;
        let stream = split_stream(&RandomStream::root(g.seed), ((p * 100 + m) * 1000 + n) as u64);
        let table = moment_table(p, m, n, MomentPolicy::Auto, &McConfig::new(reps, stream))?;
        let all = all_coeffs(p, m, n, &table)?;
        let risks = analytic_risk_table(&all, &table)?;
        let coeffs: Vec<_> = all.into_iter().filter(|c| kinds.contains(&c.kind)).collect();
        let lead = |label: String| -> Vec<Cell> { vec![p.into(), m.into(), n.into(), label.into()] };
        for i in 0..p {
            let mut r = lead(format!("c{}", i + 1));
            r.extend(coeffs.iter().map(|c| Cell::Num(c.c[i])));
            out.row(r);
        }
        for (loss, tag) in [(LossKind::Stein, "1"), (LossKind::Quadratic, "2")] {
            let mut risk = lead(format!("Asy.Risk{tag}"));
            let mut rrr = lead(format!("R.R.R.{tag}"));
            for &k in kinds {
                let rep = find_report(&risks, loss, k).expect("all estimators reported");
                risk.push(rep.value.into());
                rrr.push(if k == EstimatorKind::U { Cell::Empty } else { rep.rrr_vs_u.into() });
            }
            out.row(risk);
            out.row(rrr);
        }
        details.push(json!({
            "p": p, "m": m, "n": n,
            "moments_exact": table.is_exact(),
            "coefficients": to_value(&coeffs)?,
            "risks": to_value(&risks.iter().filter(|r| kinds.contains(&r.estimator)).collect::<Vec<_>>())?,
        }));
    }
    out.details = Some(Value::Array(details));
    Ok(out)
}

fn cmd_moments(g: &GlobalArgs, p: usize, m: usize, n: usize, policy: MomentPolicy) -> Result<Output, CliError> {
    validate(p, m, n)?;
    let reps = reps_or(g, DEFAULT_MOMENT_REPS)?;
    let table = moment_table(p, m, n, policy, &McConfig::new(reps, RandomStream::root(g.seed)))?;
    let mut out = Output::new("moments", &["i", "block", "dof", "e1", "e2", "method", "stderr_e1", "stderr_e2"]);
    base_meta(&mut out, g, Some(reps));
    out.meta("p", p);
    out.meta("m", m);
    out.meta("n", n);
    for i in 0..p {
        let (block, dof) = if i < m { (1usize, n) } else { (2, n - m) };
        let method = match table.method[i] {
            MomentMethod::Exact => "exact",
            MomentMethod::Mc => "mc",
        };
        out.row(vec![
            (i + 1).into(),
            block.into(),
            dof.into(),
            table.e1[i].into(),
            table.e2[i].into(),
            method.into(),
            table.stderr_e1[i].into(),
            table.stderr_e2[i].into(),
        ]);
    }
    out.details = Some(to_value(&table)?);
    Ok(out)
}

fn cmd_risk_table(g: &GlobalArgs, p: usize, m: usize, n_list: &[usize], loss: LossArg) -> Result<Output, CliError> {
    let reps = reps_or(g, DEFAULT_MOMENT_REPS)?;
    let mut out = Output::new("risk-table", &["p", "m", "n", "loss", "estimator", "risk", "stderr", "rrr"]);
    base_meta(&mut out, g, Some(reps));
    let mut details = Vec::new();
    for &n in n_list {
        validate(p, m, n)?;
        let stream = split_stream(&RandomStream::root(g.seed), n as u64);
        let table = moment_table(p, m, n, MomentPolicy::Auto, &McConfig::new(reps, stream))?;
        let risks = analytic_risk_table(&all_coeffs(p, m, n, &table)?, &table)?;
        for l in loss.kinds() {
            for r in risks.iter().filter(|r| r.loss == l) {
                out.row(vec![
                    p.into(),
                    m.into(),
                    n.into(),
                    l.to_string().into(),
                    r.estimator.name().into(),
                    r.value.into(),
                    r.stderr.into(),
                    r.rrr_vs_u.into(),
                ]);
            }
        }
        details.push(to_value(&risks)?);
    }
    out.details = Some(Value::Array(details));
    Ok(out)
}

fn risk_label(loss: LossKind, est: EstimatorKind) -> String {
    let tag = if loss == LossKind::Stein { 1 } else { 2 };
    format!("Risk {tag}_{}", est.name())
}

fn beta_columns(first: &str, grid: &[f64]) -> Vec<String> {
    let mut cols = vec![first.to_string()];
    cols.extend(grid.iter().map(|b| format!("beta={}", format_sig(*b))));
    cols.push("Asymp.".into());
    cols
}

fn cmd_risk_sweep(g: &GlobalArgs, p: usize, m: usize, n: usize, list: &[f64], random_gamma: bool) -> Result<Output, CliError> {
    validate(p, m, n)?;
    let reps = reps_or(g, DEFAULT_RISK_REPS)?;
    let grid = beta_grid(list)?;
    let root = RandomStream::root(g.seed);
    let (table, coeffs) = sweep_coefficients(p, m, n, &split_stream(&root, u64::MAX - 1))?;
    let gamma = if random_gamma {
        random_orthogonal(p, &mut split_stream(&root, u64::MAX).rng())
    } else {
        OrthoMatrix::identity(p)
    };
    let analytic = analytic_risk_table(&coeffs, &table)?;
    let mut per_beta = Vec::with_capacity(grid.len());
    for (b, &beta) in grid.iter().enumerate() {
        let spec = EigenSpec::identity_blocks(p, m, 1.0, beta)?;
        build_sigma(&spec, &gamma)?;
        per_beta.push(risk_mc_finite_many(&coeffs, &spec, &gamma, n, &McConfig::new(reps, split_stream(&root, b as u64)))?);
    }
    let mut out = Output {
        columns: beta_columns("row", &grid),
        ..Output::new("risk-sweep", &[])
    };
    base_meta(&mut out, g, Some(reps));
    out.meta("p", p);
    out.meta("m", m);
    out.meta("n", n);
    out.meta("random_gamma", random_gamma);
    for (loss, est) in SWEEP_RISK_ROWS {
        let mut row: Vec<Cell> = vec![risk_label(loss, est).into()];
        for reports in &per_beta {
            row.push(find_report(reports, loss, est).map(|r| r.value).into());
        }
        row.push(find_report(&analytic, loss, est).map(|r| r.value).into());
        out.row(row);
    }
    out.details = Some(json!({ "beta_grid": grid, "mc": to_value(&per_beta)?, "asymptotic": to_value(&analytic)? }));
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_converge(
    g: &GlobalArgs,
    p: usize,
    m: usize,
    n: usize,
    list: &[f64],
    random_gamma: bool,
    g21_eps: Option<f64>,
) -> Result<Output, CliError> {
    validate(p, m, n)?;
    let reps = reps_or(g, DEFAULT_SWEEP_REPS)?;
    let grid = beta_grid(list)?;
    let root = RandomStream::root(g.seed);
    let report = convergence_sweep(p, m, n, &grid, reps, &root, random_gamma)?;
    let mut out = Output {
        columns: beta_columns("row", &grid),
        ..Output::new("converge", &[])
    };
    base_meta(&mut out, g, Some(reps));
    out.meta("p", p);
    out.meta("m", m);
    out.meta("n", n);
    out.meta("random_gamma", random_gamma);
    for name in PROB_NAMES {
        let mut row: Vec<Cell> = vec![name.into()];
        let mut nominal = None;
        for r in &report.rows {
            let pr = r.prob(name).expect("every statistic reported");
            nominal = Some(pr.nominal);
            row.push(pr.value.into());
        }
        row.push(nominal.into());
        out.row(row);
    }
    for (loss, est) in SWEEP_RISK_ROWS {
        let mut row: Vec<Cell> = vec![risk_label(loss, est).into()];
        for r in &report.rows {
            row.push(r.risk(loss, est).map(|x| x.value).into());
        }
        let asym = report.asymptotic_risks.iter().find(|a| a.loss == loss && a.estimator == est);
        row.push(asym.map(|a| a.value).into());
        out.row(row);
    }
    let mut details = to_value(&report)?;
    if let Some(eps) = g21_eps {
        let ex = g21_exceedance(p, m, n, &grid, eps, reps, &split_stream(&root, u64::MAX - 2))?;
        let mut row: Vec<Cell> = vec![format!("P(max|G21| > {})", format_sig(eps)).into()];
        row.extend(ex.iter().map(|e| Cell::Num(e.value)));
        row.push(Cell::Num(0.0));
        out.row(row);
        details["g21_exceedance"] = to_value(&ex)?;
    }
    out.details = Some(details);
    Ok(out)
}

fn cmd_multiblock(g: &GlobalArgs, cuts: &[usize], ratios: &[f64], xi: &[f64], n: usize) -> Result<Output, CliError> {
    let reps = reps_or(g, DEFAULT_RISK_REPS)?;
    let mut full = vec![0];
    full.extend_from_slice(cuts);
    let partition = BlockPartition::new(full)?;
    let k = partition.num_blocks();
    let p = partition.dim();
    if p > MAX_DIM {
        return Err(config_error(format!("p = {p} exceeds the maximum {MAX_DIM}")));
    }
    if k < 3 {
        return Err(config_error("multiblock needs at least three blocks (e.g. --cuts 1,3,4)"));
    }
    if n < p {
        return Err(config_error(format!("need n >= p, got n = {n}, p = {p}")));
    }
    let ratios = match ratios.len() {
        1 => vec![ratios[0]; k - 1],
        len if len == k - 1 => ratios.to_vec(),
        len => return Err(config_error(format!("expected 1 or {} ratios, got {len}", k - 1))),
    };
    if ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(config_error("ratios must lie in (0, 1]"));
    }
    let mut scales = vec![1.0];
    for r in &ratios {
        scales.push(scales.last().unwrap() * r);
    }
    let xi = if xi.is_empty() { vec![1.0; p] } else { xi.to_vec() };
    let spec = EigenSpec::new(partition, xi, scales)?;
    let report = multiblock_limit_check(&spec, n, &McConfig::new(reps, RandomStream::root(g.seed)))?;
    let mut out = Output::new("multiblock", &["check", "estimate", "target", "stderr", "z"]);
    base_meta(&mut out, g, Some(reps));
    out.meta("cuts", cuts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","));
    out.meta("n", n);
    out.meta("max_abs_z", format_sig(report.max_abs_z()));
    for c in &report.checks {
        out.row(vec![
            c.name.clone().into(),
            c.estimate.into(),
            c.target.into(),
            c.stderr.into(),
            c.z_score().into(),
        ]);
    }
    out.details = Some(to_value(&report)?);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn parse_estimators(estimator: &str) -> Result<Vec<EstimatorKind>, CliError> {
    if estimator.eq_ignore_ascii_case("all") {
        return Ok(EstimatorKind::ALL.to_vec());
    }
    let k: EstimatorKind = estimator.parse()?;
    if k == EstimatorKind::Custom {
        return Err(config_error("custom coefficients are not available on the command line"));
    }
    Ok(vec![k])
}

fn cmd_classify(
    g: &GlobalArgs,
    data: &PathBuf,
    scheme: &str,
    estimator: &str,
    m: usize,
    dof: &str,
    label_column: &str,
    singular: &str,
) -> Result<Output, CliError> {
    let scheme: CvScheme = scheme.parse()?;
    let kinds = parse_estimators(estimator)?;
    let reps = reps_or(g, DEFAULT_MOMENT_REPS)?;
    let cfg = ClassifierConfig {
        m,
        dof: dof.parse::<DofConvention>()?,
        singular: singular.parse::<SingularPolicy>()?,
        moment_reps: reps,
        seed: g.seed,
    };
    let ds = load_csv(data, label_column, None)?;
    let reports = cross_validate_many(&ds, scheme, &kinds, &cfg)?;
    let mut out = Output::new("classify", &["estimator", "fold", "trials", "correct", "ccp", "excluded_groups"]);
    base_meta(&mut out, g, Some(reps));
    out.meta("data", data.display());
    out.meta("scheme", scheme);
    out.meta("m", m);
    out.meta("dof", cfg.dof);
    out.meta("singular", cfg.singular);
    for r in &reports {
        for f in &r.folds {
            out.row(vec![
                r.estimator.name().into(),
                f.fold.into(),
                f.trials.into(),
                f.correct.into(),
                f.ccp.into(),
                f.excluded_groups.join(";").into(),
            ]);
        }
        out.row(vec![
            r.estimator.name().into(),
            "average".into(),
            r.total_trials.into(),
            r.total_correct.into(),
            r.average_ccp.into(),
            Cell::Empty,
        ]);
    }
    let labels: Vec<&str> = ds.groups.iter().map(|g| g.label.as_str()).collect();
    out.details = Some(json!({ "groups": labels, "reports": to_value(&reports)? }));
    Ok(out)
}

fn execute(cli: &Cli) -> Result<Output, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Coeffs { p, m, n, all, estimator } => {
            let configs: Vec<(usize, usize, usize)> = if *all {
                REFERENCE_CONFIGS.to_vec()
            } else {
                let (Some(p), Some(m)) = (p, m) else {
                    return Err(config_error("coeffs needs --p, --m and --n, or --all"));
                };
                if n.is_empty() {
                    return Err(config_error("coeffs needs at least one --n"));
                }
                n.iter().map(|&n| (*p, *m, n)).collect()
            };
            cmd_coeffs(g, &configs, &parse_estimators(estimator)?)
        }
        Command::Moments {
            pm,
            n,
            exact_only,
            mc_only,
        } => {
            let policy = if *exact_only {
                MomentPolicy::ExactOnly
            } else if *mc_only {
                MomentPolicy::McOnly
            } else {
                MomentPolicy::Auto
            };
            cmd_moments(g, pm.p, pm.m, *n, policy)
        }
        Command::RiskTable { pm, n_list, loss } => cmd_risk_table(g, pm.p, pm.m, n_list, *loss),
        Command::RiskSweep {
            pm,
            n,
            beta_list,
            random_gamma,
        } => cmd_risk_sweep(g, pm.p, pm.m, *n, beta_list, *random_gamma),
        Command::Converge {
            pm,
            n,
            beta_list,
            random_gamma,
            g21_eps,
        } => cmd_converge(g, pm.p, pm.m, *n, beta_list, *random_gamma, *g21_eps),
        Command::Multiblock { cuts, ratios, xi, n } => cmd_multiblock(g, cuts, ratios, xi, *n),
        Command::Classify {
            data,
            scheme,
            estimator,
            m,
            dof,
            label_column,
            singular,
        } => cmd_classify(g, data, scheme, estimator, *m, dof, label_column, singular),
    }
}

/// Parses `args` (including the program name), runs the subcommand and returns the
/// rendered output. With `--output` the text is written to the file and an empty
/// string is returned. Help and version requests come back as `CliError` with code 0.
pub fn run<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| {
        let code = match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
            _ => 2,
        };
        CliError {
            code,
            message: e.render().to_string(),
        }
    })?;
    let output = match cli.global.threads {
        Some(0) => return Err(config_error("--threads must be at least 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| config_error(e.to_string()))?
            .install(|| execute(&cli))?,
        None => execute(&cli)?,
    };
    let text = output.render(cli.global.format)?;
    match &cli.global.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}
