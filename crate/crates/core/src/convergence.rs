//! Transformed eigenvalue/eigenvector statistics and their behaviour as the block
//! scale ratios shrink.
//!
//! For a draw `S = G·diag(l)·Gᵀ` with frame `Γ` and `G̃ = ΓᵀG`, set `dᵢ = lᵢ/α_{[i]}` and
//!
//! ```text
//! W̃ₛₛ = G̃ₛₛ Dₛ G̃ₛₛᵀ,     Z̃ₛₜ = (α_t/α_s)^{1/2} Ξₛ^{−1/2} G̃ₛₜ D_t^{1/2}   (t < s).
//! ```
//!
//! In the limit `W̃ₛₛ ~ W(n − m_{s−1}, Ξₛ)`, `Z̃ₛₜ` has i.i.d. standard normal entries,
//! and all of them are independent.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{all_coeffs, CoefficientVector, EstimatorKind};
use crate::linalg::{build_sigma, spectral_decompose_with_tolerance, EigenSpec, OrthoMatrix, SymMatrix};
use crate::mc::{monte_carlo, McConfig};
use crate::moments::{moment_table, validate_pmn, MomentPolicy, MomentTable, DEFAULT_MOMENT_REPS};
use crate::risk::{analytic_risk_table, find_report, LossEvaluator, LossKind};
use crate::sampling::{random_orthogonal, split_stream, RandomStream, WishartSampler};
use crate::special::{chi2_quantile, normal_quantile};

/// Scale ratios used for sweeps: `1, 0.8, 0.6, 0.4, 0.2, 10⁻¹, …, 10⁻⁶`.
pub const DEFAULT_BETA_GRID: [f64; 11] = [1.0, 0.8, 0.6, 0.4, 0.2, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

/// Default replicate count for convergence sweeps.
pub const DEFAULT_SWEEP_REPS: usize = 1_000_000;

/// Risk rows reported by sweeps.
pub const SWEEP_RISK_ROWS: [(LossKind, EstimatorKind); 6] = [
    (LossKind::Stein, EstimatorKind::U),
    (LossKind::Stein, EstimatorKind::Sds),
    (LossKind::Stein, EstimatorKind::Ma1),
    (LossKind::Quadratic, EstimatorKind::U),
    (LossKind::Quadratic, EstimatorKind::Kg),
    (LossKind::Quadratic, EstimatorKind::Ma2),
];

#[derive(Clone, Debug, PartialEq)]
pub struct TransformedStats {
    /// `W̃ₛₛ` for each block.
    pub w_blocks: Vec<DMatrix<f64>>,
    /// `((s, t), Z̃ₛₜ)` for every `t < s`.
    pub z_blocks: Vec<((usize, usize), DMatrix<f64>)>,
    /// `dᵢ = lᵢ / α_{[i]}`.
    pub d: Vec<f64>,
    /// `G̃ = ΓᵀG`.
    pub g_tilde: DMatrix<f64>,
}

impl TransformedStats {
    pub fn z(&self, s: usize, t: usize) -> Option<&DMatrix<f64>> {
        self.z_blocks.iter().find(|(k, _)| *k == (s, t)).map(|(_, z)| z)
    }
}

/// Computes `W̃ₛₛ`, `Z̃ₛₜ` for one sample matrix.
pub fn transformed_stats(s: &SymMatrix, gamma: &OrthoMatrix, spec: &EigenSpec) -> Result<TransformedStats> {
    if s.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: s.dim(),
        });
    }
    let dec = spectral_decompose_with_tolerance(s, Some(gamma), 0.0)?;
    let g_tilde = if gamma.is_identity() {
        dec.vectors.into_matrix()
    } else {
        gamma.as_matrix().transpose() * dec.vectors.as_matrix()
    };
    Ok(stats_from_parts(&g_tilde, &dec.values, spec))
}

fn stats_from_parts(g_tilde: &DMatrix<f64>, l: &[f64], spec: &EigenSpec) -> TransformedStats {
    let part = spec.partition();
    let k = part.num_blocks();
    let d: Vec<f64> = l.iter().enumerate().map(|(i, li)| li / spec.scale_of(i)).collect();
    let mut w_blocks = Vec::with_capacity(k);
    for s in 0..k {
        let r = part.range(s);
        let q = r.len();
        let w = DMatrix::from_fn(q, q, |i, j| {
            r.clone()
                .map(|c| g_tilde[(r.start + i, c)] * d[c] * g_tilde[(r.start + j, c)])
                .sum()
        });
        w_blocks.push(w);
    }
    let mut z_blocks = Vec::new();
    let xi = spec.xi();
    for s in 0..k {
        for t in 0..s {
            let rs = part.range(s);
            let rt = part.range(t);
            let ratio = (spec.scales()[t] / spec.scales()[s]).sqrt();
            let z = DMatrix::from_fn(rs.len(), rt.len(), |i, j| {
                let row = rs.start + i;
                let col = rt.start + j;
                ratio * g_tilde[(row, col)] * d[col].sqrt() / xi[row].sqrt()
            });
            z_blocks.push(((s, t), z));
        }
    }
    TransformedStats {
        w_blocks,
        z_blocks,
        d,
        g_tilde: g_tilde.clone(),
    }
}

/// One named probability estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbEstimate {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub nominal: f64,
}

/// One risk estimate in a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRisk {
    pub loss: LossKind,
    pub estimator: EstimatorKind,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaRow {
    pub beta: f64,
    pub probs: Vec<ProbEstimate>,
    pub risks: Vec<SweepRisk>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub p: usize,
    pub m: usize,
    pub n: usize,
    pub beta_grid: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<BetaRow>,
    /// Analytic asymptotic risks for the reported rows.
    pub asymptotic_risks: Vec<SweepRisk>,
    pub random_gamma: bool,
}

impl ConvergenceReport {
    pub fn row(&self, beta: f64) -> Option<&BetaRow> {
        self.rows.iter().find(|r| r.beta == beta)
    }
}

impl BetaRow {
    pub fn prob(&self, name: &str) -> Option<&ProbEstimate> {
        self.probs.iter().find(|p| p.name == name)
    }

    pub fn risk(&self, loss: LossKind, estimator: EstimatorKind) -> Option<&SweepRisk> {
        self.risks.iter().find(|r| r.loss == loss && r.estimator == estimator)
    }
}

/// Names of the ten probability statistics, in output order.
pub const PROB_NAMES: [&str; 10] = [
    "Prob 1a", "Prob 2a", "Prob 3a", "Prob 4a", "Prob 5a", "Prob 1b", "Prob 2b", "Prob 3b", "Prob 4b", "Prob 5b",
];

/// Thresholds for the five statistics at one quantile level.
struct Thresholds {
    chi_first: f64,
    chi_second: f64,
    z: f64,
}

impl Thresholds {
    fn new(n: usize, m: usize, q: f64) -> Result<Self> {
        Ok(Self {
            chi_first: chi2_quantile(n as f64, q)?,
            chi_second: chi2_quantile((n - m) as f64, q)?,
            z: normal_quantile(q)?,
        })
    }
}

/// The five statistics of the sweep tables: `(W̃₁₁)₁₁`, the first and last diagonal
/// entries of `W̃₂₂`, and the first and last entries of the first column of `Z̃₂₁`.
fn sweep_statistics(st: &TransformedStats) -> [f64; 5] {
    let w1 = &st.w_blocks[0];
    let w2 = &st.w_blocks[1];
    let z = &st.z_blocks[0].1;
    let last = w2.nrows() - 1;
    [w1[(0, 0)], w2[(0, 0)], w2[(last, last)], z[(0, 0)], z[(z.nrows() - 1, 0)]]
}

/// Coefficients for the five estimators at `(p, m, n)` with the default moment route.
pub fn sweep_coefficients(p: usize, m: usize, n: usize, stream: &RandomStream) -> Result<(MomentTable, Vec<CoefficientVector>)> {
    let t = moment_table(p, m, n, MomentPolicy::Auto, &McConfig::new(DEFAULT_MOMENT_REPS, *stream))?;
    let c = all_coeffs(p, m, n, &t)?;
    Ok((t, c))
}

/// Empirical probabilities and risks over a grid of `β` with `α = 1` and `Ξ = I`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_sweep(
    p: usize,
    m: usize,
    n: usize,
    beta_grid: &[f64],
    reps: usize,
    stream: &RandomStream,
    random_gamma: bool,
) -> Result<ConvergenceReport> {
    validate_pmn(p, m, n)?;
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    if beta_grid.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
        return Err(Error::Config("beta values must lie in (0, 1]".into()));
    }
    let (table, coeffs) = sweep_coefficients(p, m, n, &split_stream(stream, u64::MAX - 1))?;
    let gamma = if random_gamma {
        random_orthogonal(p, &mut split_stream(stream, u64::MAX).rng())
    } else {
        OrthoMatrix::identity(p)
    };
    let lo = Thresholds::new(n, m, 0.05)?;
    let hi = Thresholds::new(n, m, 0.95)?;
    let n_est = coeffs.len();

    let mut rows = Vec::with_capacity(beta_grid.len());
    for (b, &beta) in beta_grid.iter().enumerate() {
        let spec = EigenSpec::identity_blocks(p, m, 1.0, beta)?;
        let sigma = build_sigma(&spec, &gamma)?;
        let sampler = WishartSampler::new(n, &sigma)?;
        let eval = LossEvaluator::new(&sigma)?;
        let cfg = McConfig::new(reps, split_stream(stream, b as u64));
        let width = 10 + 2 * n_est;
        let summary = monte_carlo(&cfg, width, |rng, out| {
            let s = sampler.sample(rng);
            let dec = spectral_decompose_with_tolerance(&s, Some(&gamma), 0.0)?;
            let g = dec.vectors.as_matrix();
            let g_tilde = if gamma.is_identity() {
                g.clone()
            } else {
                gamma.as_matrix().transpose() * g
            };
            let st = stats_from_parts(&g_tilde, &dec.values, &spec);
            let x = sweep_statistics(&st);
            let cuts = [lo.chi_first, lo.chi_second, lo.chi_second, lo.z, lo.z];
            let cuts_hi = [hi.chi_first, hi.chi_second, hi.chi_second, hi.z, hi.z];
            for k in 0..5 {
                out[k] = f64::from(u8::from(x[k] <= cuts[k]));
                out[5 + k] = f64::from(u8::from(x[k] <= cuts_hi[k]));
            }
            for (e, c) in coeffs.iter().enumerate() {
                let v: Vec<f64> = dec.values.iter().zip(&c.c).map(|(l, ci)| l * ci).collect();
                let (stein, quad) = eval.losses_from_spectrum(g, &v);
                out[10 + e] = stein;
                out[10 + n_est + e] = quad;
            }
            Ok(())
        })?;
        let probs = PROB_NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| ProbEstimate {
                name: name.to_string(),
                value: summary.mean[k],
                stderr: summary.stderr(k),
                nominal: if k < 5 { 0.05 } else { 0.95 },
            })
            .collect();
        let mut risks = Vec::with_capacity(2 * n_est);
        for (li, loss) in LossKind::BOTH.iter().enumerate() {
            for (e, c) in coeffs.iter().enumerate() {
                let idx = 10 + li * n_est + e;
                risks.push(SweepRisk {
                    loss: *loss,
                    estimator: c.kind,
                    value: summary.mean[idx],
                    stderr: summary.stderr(idx),
                });
            }
        }
        rows.push(BetaRow { beta, probs, risks });
    }

    let analytic = analytic_risk_table(&coeffs, &table)?;
    let asymptotic_risks = LossKind::BOTH
        .iter()
        .flat_map(|&loss| {
            EstimatorKind::ALL.iter().filter_map({
                let analytic = &analytic;
                move |&est| {
                    find_report(analytic, loss, est).map(|r| SweepRisk {
                        loss,
                        estimator: est,
                        value: r.value,
                        stderr: r.stderr,
                    })
                }
            })
        })
        .collect();

    Ok(ConvergenceReport {
        p,
        m,
        n,
        beta_grid: beta_grid.to_vec(),
        reps,
        seed: stream.seed,
        rows,
        asymptotic_risks,
        random_gamma,
    })
}

/// Empirical `P(‖G̃₂₁‖_max > eps)` for each `β`.
pub fn g21_exceedance(
    p: usize,
    m: usize,
    n: usize,
    beta_grid: &[f64],
    eps: f64,
    reps: usize,
    stream: &RandomStream,
) -> Result<Vec<ProbEstimate>> {
    validate_pmn(p, m, n)?;
    let gamma = OrthoMatrix::identity(p);
    beta_grid
        .iter()
        .enumerate()
        .map(|(b, &beta)| {
            let spec = EigenSpec::identity_blocks(p, m, 1.0, beta)?;
            let sampler = WishartSampler::new(n, &build_sigma(&spec, &gamma)?)?;
            let s = monte_carlo(&McConfig::new(reps, split_stream(stream, b as u64)), 1, |rng, out| {
                let dec = spectral_decompose_with_tolerance(&sampler.sample(rng), Some(&gamma), 0.0)?;
                let g = dec.vectors.as_matrix();
                let max = (m..p).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| g[(i, j)].abs()).fold(0.0, f64::max);
                out[0] = f64::from(u8::from(max > eps));
                Ok(())
            })?;
            Ok(ProbEstimate {
                name: format!("P(|G21|max > {eps})"),
                value: s.mean[0],
                stderr: s.stderr(0),
                nominal: 0.0,
            })
        })
        .collect()
}

/// A moment or correlation compared with its limiting value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentCheck {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    pub stderr: f64,
}

impl MomentCheck {
    pub fn z_score(&self) -> f64 {
        if self.stderr == 0.0 {
            if self.estimate == self.target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.estimate - self.target) / self.stderr
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitCheckReport {
    pub n: usize,
    pub cuts: Vec<usize>,
    pub scales: Vec<f64>,
    pub reps: usize,
    pub checks: Vec<MomentCheck>,
}

impl LimitCheckReport {
    /// Largest `|z|` over all checks.
    pub fn max_abs_z(&self) -> f64 {
        self.checks.iter().map(|c| c.z_score().abs()).fold(0.0, f64::max)
    }

    pub fn passed(&self, z_limit: f64) -> bool {
        self.max_abs_z() <= z_limit
    }
}

/// Limit-law moment checks for any number of blocks `k ≥ 2`:
/// means of every `W̃ₛₛ` entry against `(n − m_{s−1})·Ξₛ`, mean and second moment of
/// every `Z̃ₛₜ` entry against `0` and `1`, and correlations of block traces with each
/// other and with the `Z̃` entries against `0`.
pub fn limit_moment_check(spec: &EigenSpec, gamma: &OrthoMatrix, n: usize, cfg: &McConfig) -> Result<LimitCheckReport> {
    let part = spec.partition().clone();
    let p = spec.dim();
    let k = part.num_blocks();
    if k < 2 {
        return Err(Error::InvalidPartition("limit checks need at least two blocks".into()));
    }
    if n < p {
        return Err(Error::InsufficientDof { n, p });
    }
    let sigma = build_sigma(spec, gamma)?;
    let sampler = WishartSampler::new(n, &sigma)?;

    // layout of the per-draw output vector
    let mut names: Vec<(String, f64)> = Vec::new();
    for s in 0..k {
        let nu = (n - part.start(s)) as f64;
        let xi = spec.block_xi(s);
        for i in 0..part.size(s) {
            for j in i..part.size(s) {
                let target = if i == j { nu * xi[i] } else { 0.0 };
                names.push((format!("mean W{}{}[{},{}]", s + 1, s + 1, i + 1, j + 1), target));
            }
        }
    }
    let mut z_shapes = Vec::new();
    for s in 0..k {
        for t in 0..s {
            z_shapes.push((s, t, part.size(s), part.size(t)));
        }
    }
    for &(s, t, rs, rt) in &z_shapes {
        for i in 0..rs {
            for j in 0..rt {
                names.push((format!("mean Z{}{}[{},{}]", s + 1, t + 1, i + 1, j + 1), 0.0));
                names.push((format!("mean Z{}{}[{},{}]^2", s + 1, t + 1, i + 1, j + 1), 1.0));
            }
        }
    }
    let base_len = names.len();
    // correlation pairs: (label, a-index into scalars, b-index into scalars)
    let trace_count = k;
    let z_count: usize = z_shapes.iter().map(|&(_, _, a, b)| a * b).sum();
    let mut pairs: Vec<(String, usize, usize)> = Vec::new();
    for s in 0..k {
        for t in (s + 1)..k {
            pairs.push((format!("corr(tr W{}{}, tr W{}{})", s + 1, s + 1, t + 1, t + 1), s, t));
        }
    }
    for s in 0..k {
        for z in 0..z_count {
            pairs.push((format!("corr(tr W{}{}, Z entry {})", s + 1, s + 1, z + 1), s, trace_count + z));
        }
    }
    if k >= 3 {
        pairs.push(("corr(W11[1,1], W22[1,1])".into(), trace_count + z_count, trace_count + z_count + 1));
    }
    let scalar_count = trace_count + z_count + if k >= 3 { 2 } else { 0 };
    let width = base_len + scalar_count + pairs.len();

    let summary = monte_carlo(cfg, width, |rng, out| {
        let st = transformed_stats(&sampler.sample(rng), gamma, spec)?;
        let mut idx = 0;
        for w in &st.w_blocks {
            for i in 0..w.nrows() {
                for j in i..w.ncols() {
                    out[idx] = w[(i, j)];
                    idx += 1;
                }
            }
        }
        let mut zs = Vec::with_capacity(z_count);
        for (_, z) in &st.z_blocks {
            for i in 0..z.nrows() {
                for j in 0..z.ncols() {
                    out[idx] = z[(i, j)];
                    out[idx + 1] = z[(i, j)] * z[(i, j)];
                    idx += 2;
                    zs.push(z[(i, j)]);
                }
            }
        }
        let mut scalars: Vec<f64> = st.w_blocks.iter().map(|w| w.trace()).collect();
        scalars.extend(zs);
        if k >= 3 {
            scalars.push(st.w_blocks[0][(0, 0)]);
            scalars.push(st.w_blocks[1][(0, 0)]);
        }
        for (q, x) in scalars.iter().enumerate() {
            out[base_len + q] = *x;
        }
        for (q, (_, a, b)) in pairs.iter().enumerate() {
            out[base_len + scalar_count + q] = scalars[*a] * scalars[*b];
        }
        Ok(())
    })?;

    let mut checks: Vec<MomentCheck> = names
        .into_iter()
        .enumerate()
        .map(|(i, (name, target))| MomentCheck {
            name,
            estimate: summary.mean[i],
            target,
            stderr: summary.stderr(i),
        })
        .collect();
    let se_corr = 1.0 / (summary.reps as f64).sqrt();
    for (q, (name, a, b)) in pairs.into_iter().enumerate() {
        let corr = summary.correlation(base_len + a, base_len + b, base_len + scalar_count + q);
        checks.push(MomentCheck {
            name,
            estimate: corr,
            target: 0.0,
            stderr: se_corr,
        });
    }
    Ok(LimitCheckReport {
        n,
        cuts: part.cuts().to_vec(),
        scales: spec.scales().to_vec(),
        reps: summary.reps,
        checks,
    })
}

/// [`limit_moment_check`] restricted to spectra with at least three blocks.
pub fn multiblock_limit_check(spec: &EigenSpec, n: usize, cfg: &McConfig) -> Result<LimitCheckReport> {
    if spec.partition().num_blocks() < 3 {
        return Err(Error::InvalidPartition("multi-block check needs at least three blocks".into()));
    }
    limit_moment_check(spec, &OrthoMatrix::identity(spec.dim()), n, cfg)
}
