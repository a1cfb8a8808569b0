//! Stein and quadratic losses, exact asymptotic risks for identity blocks, and Monte
//! Carlo risks under finite scale ratios and under the limit distribution.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{limit_system, CoefficientVector, EstimatorKind};
use crate::linalg::{build_sigma, spectral_decompose_with_tolerance, EigenSpec, OrthoMatrix, SymMatrix};
use crate::mc::{monte_carlo, McConfig};
use crate::moments::MomentTable;
use crate::sampling::WishartSampler;

pub use crate::special::elog_chi2;

/// Default replicate count for risk tables.
pub const DEFAULT_RISK_REPS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum LossKind {
    /// `tr(Σ̂Σ⁻¹) − log det(Σ̂Σ⁻¹) − p`
    Stein,
    /// `tr(Σ̂Σ⁻¹ − I)²`
    Quadratic,
}

impl LossKind {
    pub const BOTH: [LossKind; 2] = [LossKind::Stein, LossKind::Quadratic];

    /// Row-label index used in tables (`1` for Stein, `2` for quadratic).
    pub fn index(&self) -> usize {
        match self {
            LossKind::Stein => 1,
            LossKind::Quadratic => 2,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Stein => "stein",
            LossKind::Quadratic => "quadratic",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stein" | "1" => Ok(LossKind::Stein),
            "quadratic" | "quad" | "2" => Ok(LossKind::Quadratic),
            other => Err(Error::Config(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RiskMethod {
    AnalyticAsymptotic,
    McFinite,
    McLimitDist,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskContext {
    pub p: usize,
    pub m: Option<usize>,
    pub n: usize,
    pub spec: Option<EigenSpec>,
}

impl RiskContext {
    fn same_configuration(&self, other: &RiskContext) -> bool {
        self.p == other.p && self.m == other.m && self.n == other.n && self.spec == other.spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskReport {
    pub loss: LossKind,
    pub estimator: EstimatorKind,
    pub value: f64,
    pub method: RiskMethod,
    pub stderr: f64,
    /// Risk reduction rate against the unbiased estimator, in percent.
    pub rrr_vs_u: Option<f64>,
    pub context: RiskContext,
}

/// `R₁d`, `R₂d`, `R₃d` of the limit risk and their sum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskDecomposition {
    pub loss: LossKind,
    pub r1d: f64,
    pub r2d: f64,
    pub r3d: f64,
    pub total: f64,
    pub stderr_r1d: f64,
    pub stderr_r2d: f64,
    pub stderr_r3d: f64,
    pub stderr_total: f64,
}

/// Loss evaluation against a fixed `Σ` through its Cholesky factor `L`.
#[derive(Clone, Debug)]
pub struct LossEvaluator {
    p: usize,
    lower: DMatrix<f64>,
    /// `1/√σᵢᵢ` when `Σ` is diagonal.
    inv_sqrt_diag: Option<Vec<f64>>,
    log_det: f64,
}

impl LossEvaluator {
    pub fn new(sigma: &SymMatrix) -> Result<Self> {
        let p = sigma.dim();
        let chol = sigma.to_dense().cholesky().ok_or(Error::NotPositiveDefinite {
            eigenvalue: f64::NAN,
            tolerance: 0.0,
        })?;
        let lower = chol.l();
        let log_det = 2.0 * (0..p).map(|i| lower[(i, i)].ln()).sum::<f64>();
        let diagonal = (0..p).all(|i| (i + 1..p).all(|j| sigma.get(i, j) == 0.0));
        let inv_sqrt_diag = diagonal.then(|| (0..p).map(|i| 1.0 / lower[(i, i)]).collect());
        Ok(Self {
            p,
            lower,
            inv_sqrt_diag,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    fn whiten(&self, mut x: DMatrix<f64>) -> DMatrix<f64> {
        match &self.inv_sqrt_diag {
            Some(d) => {
                for (i, s) in d.iter().enumerate() {
                    for j in 0..x.ncols() {
                        x[(i, j)] *= s;
                    }
                }
                x
            }
            None => self.lower.solve_lower_triangular(&x).expect("nonsingular Cholesky factor"),
        }
    }

    /// Both losses of `Σ̂ = G·diag(v)·Gᵀ`, computed from `B = L⁻¹G·diag(√v)` so that
    /// `log det Σ̂` is the exact sum `Σ log vᵢ`.
    pub fn losses_from_spectrum(&self, g: &DMatrix<f64>, v: &[f64]) -> (f64, f64) {
        let mut x = g.clone();
        for (j, vj) in v.iter().enumerate() {
            let s = vj.sqrt();
            for i in 0..self.p {
                x[(i, j)] *= s;
            }
        }
        let b = self.whiten(x);
        let k = b.transpose() * &b;
        let mut trace = 0.0;
        let mut quad = 0.0;
        for i in 0..self.p {
            trace += k[(i, i)];
            for j in 0..self.p {
                let d = k[(i, j)] - if i == j { 1.0 } else { 0.0 };
                quad += d * d;
            }
        }
        let log_det_hat: f64 = v.iter().map(|x| x.ln()).sum();
        let stein = trace - (log_det_hat - self.log_det) - self.p as f64;
        (stein, quad)
    }

    pub fn loss(&self, kind: LossKind, sigma_hat: &SymMatrix) -> Result<f64> {
        if sigma_hat.dim() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: sigma_hat.dim(),
            });
        }
        let half = self.whiten(sigma_hat.to_dense());
        let m = self.whiten(half.transpose());
        let m = (&m + m.transpose()) * 0.5;
        match kind {
            LossKind::Stein => {
                let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite {
                    eigenvalue: f64::NAN,
                    tolerance: 0.0,
                })?;
                let l = chol.l();
                let log_det: f64 = 2.0 * (0..self.p).map(|i| l[(i, i)].ln()).sum::<f64>();
                Ok(m.trace() - log_det - self.p as f64)
            }
            LossKind::Quadratic => {
                let d = m - DMatrix::<f64>::identity(self.p, self.p);
                Ok(d.norm_squared())
            }
        }
    }
}

/// `L(Σ̂, Σ)` for the chosen loss.
pub fn loss(kind: LossKind, sigma_hat: &SymMatrix, sigma: &SymMatrix) -> Result<f64> {
    LossEvaluator::new(sigma)?.loss(kind, sigma_hat)
}

fn check_coeffs(c: &CoefficientVector, t: &MomentTable) -> Result<()> {
    if c.dim() != t.p {
        return Err(Error::DimensionMismatch {
            expected: t.p,
            found: c.dim(),
        });
    }
    if c.context.n != t.n {
        return Err(Error::ContextMismatch(format!(
            "coefficients built for n = {}, moments for n = {}",
            c.context.n, t.n
        )));
    }
    Ok(())
}

/// Exact asymptotic risk when `Ξ₁ = I`, `Ξ₂ = I`:
/// Stein `Σ(bᵢcᵢ − log cᵢ) − Σ E[log χ²_{n−i+1}] − p`, quadratic `cᵀAc − 2bᵀc + p`.
/// The standard error propagates Monte Carlo moment errors to first order, treating
/// entries as independent.
pub fn asymptotic_risk_identity_blocks(
    kind: LossKind,
    c: &CoefficientVector,
    moments: &MomentTable,
) -> Result<RiskReport> {
    check_coeffs(c, moments)?;
    let (p, m, n) = (moments.p, moments.m, moments.n);
    let sys = limit_system(moments);
    let cv = DVector::from_column_slice(&c.c);
    let q = (p - m) as f64;
    let (value, variance) = match kind {
        LossKind::Stein => {
            let elog: f64 = (1..=p).map(|i| elog_chi2(n - i + 1)).sum();
            let v: f64 = c.c.iter().zip(sys.b.iter()).map(|(ci, bi)| bi * ci - ci.ln()).sum::<f64>()
                - elog
                - p as f64;
            let var: f64 = (0..p).map(|i| (c.c[i] * moments.stderr_e1[i]).powi(2)).sum();
            (v, var)
        }
        LossKind::Quadratic => {
            let v = (cv.transpose() * &sys.a * &cv)[(0, 0)] - 2.0 * sys.b.dot(&cv) + p as f64;
            let c1: f64 = c.c[..m].iter().sum();
            let mut var = 0.0;
            for i in 0..p {
                let d_e2 = c.c[i] * c.c[i];
                let d_e1 = if i < m {
                    2.0 * q * c.c[i] * c.c[i] - 2.0 * c.c[i]
                } else {
                    2.0 * c.c[i] * c1 - 2.0 * c.c[i]
                };
                var += (d_e1 * moments.stderr_e1[i]).powi(2) + (d_e2 * moments.stderr_e2[i]).powi(2);
            }
            (v, var)
        }
    };
    Ok(RiskReport {
        loss: kind,
        estimator: c.kind,
        value,
        method: RiskMethod::AnalyticAsymptotic,
        stderr: variance.sqrt(),
        rrr_vs_u: None,
        context: RiskContext {
            p,
            m: Some(m),
            n,
            spec: None,
        },
    })
}

/// `100·(R_U − R)/R_U`.
pub fn rrr(r: &RiskReport, r_u: &RiskReport) -> Result<f64> {
    if r.loss != r_u.loss {
        return Err(Error::ContextMismatch("risk reports use different losses".into()));
    }
    if !r.context.same_configuration(&r_u.context) {
        return Err(Error::ContextMismatch("risk reports come from different configurations".into()));
    }
    Ok(100.0 * (r_u.value - r.value) / r_u.value)
}

/// Fills `rrr_vs_u` on every report that has a matching unbiased-estimator report.
pub fn attach_rrr(reports: &mut [RiskReport]) {
    let bases: Vec<RiskReport> = reports
        .iter()
        .filter(|r| r.estimator == EstimatorKind::U)
        .cloned()
        .collect();
    for r in reports.iter_mut() {
        if let Some(base) = bases
            .iter()
            .find(|b| b.loss == r.loss && b.method == r.method && b.context.same_configuration(&r.context))
        {
            r.rrr_vs_u = rrr(r, base).ok();
        }
    }
}

/// Analytic asymptotic risks of the given estimators under both losses, with RRR attached.
pub fn analytic_risk_table(coeffs: &[CoefficientVector], moments: &MomentTable) -> Result<Vec<RiskReport>> {
    let mut out = Vec::with_capacity(2 * coeffs.len());
    for kind in LossKind::BOTH {
        for c in coeffs {
            out.push(asymptotic_risk_identity_blocks(kind, c, moments)?);
        }
    }
    attach_rrr(&mut out);
    Ok(out)
}

/// Looks up the report for `(loss, estimator)`.
pub fn find_report(reports: &[RiskReport], loss: LossKind, estimator: EstimatorKind) -> Option<&RiskReport> {
    reports.iter().find(|r| r.loss == loss && r.estimator == estimator)
}

/// Monte Carlo risks at a finite spectrum, for several estimators and both losses from
/// shared draws. Reports are ordered by loss (Stein first), then by estimator.
pub fn risk_mc_finite_many(
    coeffs: &[CoefficientVector],
    spec: &EigenSpec,
    gamma: &OrthoMatrix,
    n: usize,
    cfg: &McConfig,
) -> Result<Vec<RiskReport>> {
    let p = spec.dim();
    for c in coeffs {
        if c.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: c.dim(),
            });
        }
    }
    if cfg.reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    let sigma = build_sigma(spec, gamma)?;
    let sampler = WishartSampler::new(n, &sigma)?;
    let eval = LossEvaluator::new(&sigma)?;
    let k = coeffs.len();
    let summary = monte_carlo(cfg, 2 * k, |rng, out| {
        let s = sampler.sample(rng);
        let d = spectral_decompose_with_tolerance(&s, Some(gamma), 0.0)?;
        let g = d.vectors.as_matrix();
        for (e, c) in coeffs.iter().enumerate() {
            let v: Vec<f64> = d.values.iter().zip(&c.c).map(|(l, ci)| l * ci).collect();
            let (stein, quad) = eval.losses_from_spectrum(g, &v);
            out[e] = stein;
            out[k + e] = quad;
        }
        Ok(())
    })?;
    let m = (spec.partition().num_blocks() == 2).then(|| spec.partition().size(0));
    let context = RiskContext {
        p,
        m,
        n,
        spec: Some(spec.clone()),
    };
    let mut reports = Vec::with_capacity(2 * k);
    for (l, loss) in LossKind::BOTH.iter().enumerate() {
        for (e, c) in coeffs.iter().enumerate() {
            let idx = l * k + e;
            reports.push(RiskReport {
                loss: *loss,
                estimator: c.kind,
                value: summary.mean[idx],
                method: RiskMethod::McFinite,
                stderr: summary.stderr(idx),
                rrr_vs_u: None,
                context: context.clone(),
            });
        }
    }
    attach_rrr(&mut reports);
    Ok(reports)
}

/// Monte Carlo risk of one estimator at a finite spectrum.
pub fn risk_mc_finite(
    kind: LossKind,
    c: &CoefficientVector,
    spec: &EigenSpec,
    gamma: &OrthoMatrix,
    n: usize,
    cfg: &McConfig,
) -> Result<RiskReport> {
    let reports = risk_mc_finite_many(std::slice::from_ref(c), spec, gamma, n, cfg)?;
    Ok(reports.into_iter().find(|r| r.loss == kind).expect("both losses reported"))
}

/// Limit-distribution risk for general diagonal `Ξ₁`, `Ξ₂`.
///
/// Draws `W₁₁ ~ W_m(n, Ξ₁)` and `W₂₂ ~ W_{p−m}(n−m, Ξ₂)`, estimates `Ξ̂ₛ` blockwise,
/// and averages the block losses. `R₃₁ = (p−m)Σ_{i≤m} cᵢ` is exact; `R₃₂` combines the
/// sampled terms `E[Σ_{i≤m} cᵢ² dᵢ (G₁₁ᵀΞ₁⁻¹G₁₁)ᵢᵢ]` and `E[tr Ξ₂⁻¹Ξ̂₂]` with its exact
/// remainder. The total's standard error is taken from the per-draw totals.
#[allow(clippy::too_many_arguments)]
pub fn asymptotic_risk_limitdist_mc(
    kind: LossKind,
    c: &CoefficientVector,
    p: usize,
    m: usize,
    n: usize,
    xi1: &[f64],
    xi2: &[f64],
    cfg: &McConfig,
) -> Result<RiskDecomposition> {
    crate::moments::validate_pmn(p, m, n)?;
    if c.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: c.dim(),
        });
    }
    if xi1.len() != m || xi2.len() != p - m {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: xi1.len() + xi2.len(),
        });
    }
    if let Some(x) = xi1.iter().chain(xi2).find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidSpectrum(format!("xi entries must be positive, got {x}")));
    }
    let sigma1 = SymMatrix::from_diagonal(xi1);
    let sigma2 = SymMatrix::from_diagonal(xi2);
    let s1 = WishartSampler::new(n, &sigma1)?;
    let s2 = WishartSampler::new(n - m, &sigma2)?;
    let e1 = LossEvaluator::new(&sigma1)?;
    let e2 = LossEvaluator::new(&sigma2)?;
    let (c1, c2) = c.c.split_at(m);
    let q = (p - m) as f64;
    let sum_c1: f64 = c1.iter().sum();
    let r31 = q * sum_c1;
    let r32_exact = {
        let sq: f64 = c1.iter().map(|x| x * x).sum();
        let mut pairs = 0.0;
        for i in 0..m {
            for s in (i + 1)..m {
                pairs += c1[i] * c1[s];
            }
        }
        q * (q + 2.0) * sq + 2.0 * q * pairs - 2.0 * q * sum_c1
    };

    let summary = monte_carlo(cfg, 4, |rng, out| {
        let w1 = s1.sample(rng);
        let w2 = s2.sample(rng);
        let d1 = spectral_decompose_with_tolerance(&w1, None, 0.0)?;
        let d2 = spectral_decompose_with_tolerance(&w2, None, 0.0)?;
        let v1: Vec<f64> = d1.values.iter().zip(c1).map(|(d, ci)| d * ci).collect();
        let v2: Vec<f64> = d2.values.iter().zip(c2).map(|(d, ci)| d * ci).collect();
        let g1 = d1.vectors.as_matrix();
        let g2 = d2.vectors.as_matrix();
        let (st1, qu1) = e1.losses_from_spectrum(g1, &v1);
        let (st2, qu2) = e2.losses_from_spectrum(g2, &v2);
        let (l1, l2, r3) = match kind {
            LossKind::Stein => (st1, st2, r31),
            LossKind::Quadratic => {
                // Σ cᵢ² dᵢ (G₁₁ᵀ Ξ₁⁻¹ G₁₁)ᵢᵢ
                let mut t1 = 0.0;
                for i in 0..m {
                    let h: f64 = (0..m).map(|r| g1[(r, i)] * g1[(r, i)] / xi1[r]).sum();
                    t1 += c1[i] * c1[i] * d1.values[i] * h;
                }
                // tr Ξ₂⁻¹ Ξ̂₂
                let mut t2 = 0.0;
                for r in 0..(p - m) {
                    let diag: f64 = (0..(p - m)).map(|k| g2[(r, k)] * g2[(r, k)] * v2[k]).sum();
                    t2 += diag / xi2[r];
                }
                (qu1, qu2, 2.0 * q * t1 + 2.0 * sum_c1 * t2 + r32_exact)
            }
        };
        out[0] = l1;
        out[1] = l2;
        out[2] = r3;
        out[3] = l1 + l2 + r3;
        Ok(())
    })?;
    let (r1d, r2d, r3d) = (summary.mean[0], summary.mean[1], summary.mean[2]);
    Ok(RiskDecomposition {
        loss: kind,
        r1d,
        r2d,
        r3d,
        total: r1d + r2d + r3d,
        stderr_r1d: summary.stderr(0),
        stderr_r2d: summary.stderr(1),
        stderr_r3d: summary.stderr(2),
        stderr_total: summary.stderr(3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{coeffs_kg, coeffs_ma1, coeffs_ma2, coeffs_sds, coeffs_u};
    use crate::moments::{moment_table, MomentPolicy};
    use crate::sampling::{random_orthogonal, RandomStream};
    use proptest::prelude::*;

    fn table(p: usize, m: usize, n: usize) -> MomentTable {
        moment_table(p, m, n, MomentPolicy::ExactOnly, &McConfig::new(1, RandomStream::root(0))).unwrap()
    }

    #[test]
    fn scalar_losses() {
        let s = SymMatrix::from_diagonal(&[2.0]);
        let i = SymMatrix::identity(1);
        assert!((loss(LossKind::Stein, &s, &i).unwrap() - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((loss(LossKind::Quadratic, &s, &i).unwrap() - 1.0).abs() < 1e-15);
        let a = SymMatrix::from_fn(3, |i, j| if i == j { 2.0 } else { 0.3 });
        for k in LossKind::BOTH {
            assert!(loss(k, &a, &a).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_path_agrees_with_dense_path() {
        let mut rng = RandomStream::root(5).rng();
        let sigma = WishartSampler::new(8, &SymMatrix::identity(3)).unwrap().sample(&mut rng);
        let hat = WishartSampler::new(8, &SymMatrix::identity(3)).unwrap().sample(&mut rng);
        let d = crate::linalg::spectral_decompose(&hat, None).unwrap();
        let ev = LossEvaluator::new(&sigma).unwrap();
        let (st, qu) = ev.losses_from_spectrum(d.vectors.as_matrix(), &d.values);
        assert!((st - ev.loss(LossKind::Stein, &hat).unwrap()).abs() < 1e-9);
        assert!((qu - ev.loss(LossKind::Quadratic, &hat).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn analytic_examples() {
        let t = table(3, 1, 10);
        let u = coeffs_u(3, 10).unwrap();
        let r = asymptotic_risk_identity_blocks(LossKind::Stein, &u, &t).unwrap();
        assert!((r.value - 0.6765).abs() < 0.005);
        let ma2 = coeffs_ma2(3, 1, 10, &t).unwrap();
        let r2 = asymptotic_risk_identity_blocks(LossKind::Quadratic, &ma2, &t).unwrap();
        assert!((r2.value - 0.6591).abs() < 5e-4);
        let ru = asymptotic_risk_identity_blocks(LossKind::Quadratic, &u, &t).unwrap();
        assert!((rrr(&r2, &ru).unwrap() - 45.07).abs() < 0.1);
        assert_eq!(rrr(&ru, &ru).unwrap(), 0.0);

        let sds = coeffs_sds(3, 10).unwrap();
        let rs = asymptotic_risk_identity_blocks(LossKind::Stein, &sds, &t).unwrap();
        assert!((rrr(&rs, &r).unwrap() - 15.85).abs() < 0.1);

        let t = table(4, 2, 51);
        let ma1 = coeffs_ma1(4, 2, 51, &t).unwrap();
        let r = asymptotic_risk_identity_blocks(LossKind::Stein, &ma1, &t).unwrap();
        let ru = asymptotic_risk_identity_blocks(LossKind::Stein, &coeffs_u(4, 51).unwrap(), &t).unwrap();
        assert!((r.value - 0.1377).abs() < 0.005);
        assert!((rrr(&r, &ru).unwrap() - 31.73).abs() < 0.1);
    }

    #[test]
    fn rrr_rejects_mismatched_reports() {
        let t = table(3, 1, 10);
        let u = coeffs_u(3, 10).unwrap();
        let a = asymptotic_risk_identity_blocks(LossKind::Stein, &u, &t).unwrap();
        let b = asymptotic_risk_identity_blocks(LossKind::Quadratic, &u, &t).unwrap();
        assert!(rrr(&a, &b).is_err());
    }

    #[test]
    fn finite_mc_scalar_closed_form() {
        // p = 1: E[χ²_k/k − log(χ²_k/k) − 1] = log k − E[log χ²_k]
        let k = 7;
        let spec = EigenSpec::new(crate::linalg::BlockPartition::new(vec![0, 1]).unwrap(), vec![1.0], vec![1.0]).unwrap();
        let r = risk_mc_finite(
            LossKind::Stein,
            &coeffs_u(1, k).unwrap(),
            &spec,
            &OrthoMatrix::identity(1),
            k,
            &McConfig::new(100_000, RandomStream::root(3)),
        )
        .unwrap();
        let exact = (k as f64).ln() - elog_chi2(k);
        assert!((r.value - exact).abs() < 5.0 * r.stderr);
    }

    #[test]
    fn finite_mc_matches_analytic_at_small_beta() {
        let t = table(3, 1, 10);
        let spec = EigenSpec::identity_blocks(3, 1, 1.0, 1e-6).unwrap();
        let coeffs = crate::estimators::all_coeffs(3, 1, 10, &t).unwrap();
        let reports = risk_mc_finite_many(
            &coeffs,
            &spec,
            &OrthoMatrix::identity(3),
            10,
            &McConfig::new(50_000, RandomStream::root(12)),
        )
        .unwrap();
        for r in &reports {
            let c = coeffs.iter().find(|c| c.kind == r.estimator).unwrap();
            let a = asymptotic_risk_identity_blocks(r.loss, c, &t).unwrap();
            assert!((r.value - a.value).abs() < 5.0 * r.stderr, "{:?} {:?}: {} vs {}", r.loss, r.estimator, r.value, a.value);
        }
    }

    #[test]
    fn limitdist_matches_identity_analytic() {
        let t = table(3, 1, 10);
        for c in [coeffs_u(3, 10).unwrap(), coeffs_kg(3, 10).unwrap(), coeffs_ma1(3, 1, 10, &t).unwrap()] {
            for kind in LossKind::BOTH {
                let d = asymptotic_risk_limitdist_mc(kind, &c, 3, 1, 10, &[1.0], &[1.0, 1.0], &McConfig::new(100_000, RandomStream::root(4)))
                    .unwrap();
                assert!((d.total - (d.r1d + d.r2d + d.r3d)).abs() < 1e-10);
                let a = asymptotic_risk_identity_blocks(kind, &c, &t).unwrap();
                assert!((d.total - a.value).abs() < 5.0 * d.stderr_total, "{kind} {}: {} vs {}", c.kind, d.total, a.value);
            }
        }
    }

    #[test]
    fn r31_is_exact() {
        let c = coeffs_u(4, 5).unwrap();
        let d = asymptotic_risk_limitdist_mc(LossKind::Stein, &c, 4, 1, 5, &[1.0], &[1.0; 3], &McConfig::new(10, RandomStream::root(1))).unwrap();
        assert!((d.r3d - 0.6).abs() < 1e-15);
    }

    #[test]
    fn limitdist_bridges_finite_beta_for_general_xi() {
        let c = coeffs_sds(3, 10).unwrap();
        let xi1 = [2.0];
        let xi2 = [1.5, 0.5];
        let spec = EigenSpec::two_block(3, 1, vec![2.0, 1.5, 0.5], 1.0, 1e-4).unwrap();
        let cfg = McConfig::new(100_000, RandomStream::root(21));
        for kind in LossKind::BOTH {
            let lim = asymptotic_risk_limitdist_mc(kind, &c, 3, 1, 10, &xi1, &xi2, &cfg).unwrap();
            let fin = risk_mc_finite(kind, &c, &spec, &OrthoMatrix::identity(3), 10, &McConfig::new(100_000, RandomStream::root(22))).unwrap();
            let se = (lim.stderr_total.powi(2) + fin.stderr.powi(2)).sqrt();
            assert!((lim.total - fin.value).abs() < 5.0 * se, "{kind}: {} vs {}", lim.total, fin.value);
        }
    }

    proptest! {
        #[test]
        fn losses_are_nonnegative(seed in 0u64..500) {
            let mut rng = RandomStream::root(seed).rng();
            let w = WishartSampler::new(6, &SymMatrix::identity(3)).unwrap();
            let a = w.sample(&mut rng);
            let b = w.sample(&mut rng);
            for k in LossKind::BOTH {
                prop_assert!(loss(k, &a, &b).unwrap() > 0.0);
            }
        }

        #[test]
        fn stein_is_congruence_invariant(seed in 0u64..500, scale in 0.1f64..10.0) {
            let mut rng = RandomStream::root(seed).rng();
            let w = WishartSampler::new(6, &SymMatrix::identity(3)).unwrap();
            let a = w.sample(&mut rng);
            let b = w.sample(&mut rng);
            let q = random_orthogonal(3, &mut rng);
            let m = q.as_matrix() * scale;
            let ta = SymMatrix::from_upper(&(&m * a.to_dense() * m.transpose())).unwrap();
            let tb = SymMatrix::from_upper(&(&m * b.to_dense() * m.transpose())).unwrap();
            for k in LossKind::BOTH {
                let x = loss(k, &a, &b).unwrap();
                let y = loss(k, &ta, &tb).unwrap();
                prop_assert!((x - y).abs() < 1e-8 * x.max(1.0));
            }
        }
    }
}
