//! Orthogonally equivariant estimators `Σ̂ = G·diag(cᵢlᵢ)·Gᵀ` and their coefficient rules.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{spectral_decompose, OrthoMatrix, SpectralDecomp, SymMatrix};
use crate::moments::MomentTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EstimatorKind {
    U,
    #[serde(rename = "SDS")]
    Sds,
    #[serde(rename = "KG")]
    Kg,
    #[serde(rename = "MA1")]
    Ma1,
    #[serde(rename = "MA2")]
    Ma2,
    Custom,
}

impl EstimatorKind {
    /// The five named estimators in table order.
    pub const ALL: [EstimatorKind; 5] = [Self::U, Self::Sds, Self::Kg, Self::Ma1, Self::Ma2];

    pub fn name(&self) -> &'static str {
        match self {
            Self::U => "U",
            Self::Sds => "SDS",
            Self::Kg => "KG",
            Self::Ma1 => "MA1",
            Self::Ma2 => "MA2",
            Self::Custom => "custom",
        }
    }

    /// Whether the rule depends on the block split `m`.
    pub fn needs_moments(&self) -> bool {
        matches!(self, Self::Ma1 | Self::Ma2)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u" => Ok(Self::U),
            "sds" => Ok(Self::Sds),
            "kg" => Ok(Self::Kg),
            "ma1" => Ok(Self::Ma1),
            "ma2" => Ok(Self::Ma2),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Configuration a coefficient vector was built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CoeffContext {
    pub p: usize,
    pub m: Option<usize>,
    pub n: usize,
}

/// Coefficients `c₁…c_p` of `ψᵢ(l) = cᵢlᵢ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientVector {
    pub c: Vec<f64>,
    pub kind: EstimatorKind,
    pub context: CoeffContext,
}

impl CoefficientVector {
    fn checked(c: Vec<f64>, kind: EstimatorKind, context: CoeffContext) -> Result<Self> {
        if let Some((index, &value)) = c.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::NegativeCoefficient { index, value });
        }
        Ok(Self { c, kind, context })
    }

    /// User-supplied coefficients; only positivity is checked.
    pub fn custom(c: Vec<f64>, n: usize) -> Result<Self> {
        let p = c.len();
        Self::checked(c, EstimatorKind::Custom, CoeffContext { p, m: None, n })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

fn context(p: usize, m: Option<usize>, n: usize) -> CoeffContext {
    CoeffContext { p, m, n }
}

fn require_dof(p: usize, n: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if n < p {
        return Err(Error::InsufficientDof { n, p });
    }
    Ok(())
}

/// `cᵢ = 1/n`.
pub fn coeffs_u(p: usize, n: usize) -> Result<CoefficientVector> {
    if p == 0 || n == 0 {
        return Err(Error::Domain("p and n must be at least 1".into()));
    }
    CoefficientVector::checked(vec![1.0 / n as f64; p], EstimatorKind::U, context(p, None, n))
}

/// `cᵢ = 1/(n + p + 1 − 2i)`.
pub fn coeffs_sds(p: usize, n: usize) -> Result<CoefficientVector> {
    require_dof(p, n)?;
    let c = (1..=p).map(|i| 1.0 / (n + p + 1 - 2 * i) as f64).collect();
    CoefficientVector::checked(c, EstimatorKind::Sds, context(p, None, n))
}

/// The `(A, b)` system whose solution gives the KG coefficients.
pub fn kg_system(p: usize, n: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    require_dof(p, n)?;
    let np = (n + p) as f64;
    let a = DMatrix::from_fn(p, p, |r, s| {
        let (i, j) = ((r + 1) as f64, (s + 1) as f64);
        if r == s {
            (np - 2.0 * i + 1.0) * (np - 2.0 * i + 3.0)
        } else {
            np - 2.0 * i.max(j) + 1.0
        }
    });
    let b = DVector::from_fn(p, |r, _| np + 1.0 - 2.0 * (r + 1) as f64);
    Ok((a, b))
}

/// `c = A⁻¹b` with the KG system.
pub fn coeffs_kg(p: usize, n: usize) -> Result<CoefficientVector> {
    let (a, b) = kg_system(p, n)?;
    let c = solve_refined(&a, &b)?;
    CoefficientVector::checked(c.as_slice().to_vec(), EstimatorKind::Kg, context(p, None, n))
}

/// The vector `b` and matrix `A` of the identity-block asymptotic risks.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Assembles `b` and `A` from a moment table:
/// `bᵢ = E[dᵢ] + (p − m)` for `i ≤ m`, `E[dᵢ]` otherwise; `A` has
/// `E[dᵢ²] + 2(p − m)E[dᵢ] + (p − m)(p − m + 2)` and `E[dᵢ²]` on the two diagonal
/// blocks, `p − m` off the diagonal of the first block, and `E[d_j]` in the
/// cross blocks.
pub fn limit_system(t: &MomentTable) -> LimitSystem {
    let (p, m) = (t.p, t.m);
    let q = (p - m) as f64;
    let b = DVector::from_fn(p, |i, _| if i < m { t.e1[i] + q } else { t.e1[i] });
    let a = DMatrix::from_fn(p, p, |i, j| {
        match (i < m, j < m) {
            (true, true) if i == j => t.e2[i] + 2.0 * q * t.e1[i] + q * (q + 2.0),
            (true, true) => q,
            (false, false) if i == j => t.e2[i],
            (false, false) => 0.0,
            (true, false) => t.e1[j],
            (false, true) => t.e1[i],
        }
    });
    LimitSystem { a, b }
}

/// `cᵢ = 1/bᵢ`.
pub fn coeffs_ma1(p: usize, m: usize, n: usize, moments: &MomentTable) -> Result<CoefficientVector> {
    moments.check_context(p, m, n)?;
    let sys = limit_system(moments);
    let c = sys.b.iter().map(|b| 1.0 / b).collect();
    CoefficientVector::checked(c, EstimatorKind::Ma1, context(p, Some(m), n))
}

/// `c = A⁻¹b`.
pub fn coeffs_ma2(p: usize, m: usize, n: usize, moments: &MomentTable) -> Result<CoefficientVector> {
    moments.check_context(p, m, n)?;
    let sys = limit_system(moments);
    let c = solve_refined(&sys.a, &sys.b)?;
    CoefficientVector::checked(c.as_slice().to_vec(), EstimatorKind::Ma2, context(p, Some(m), n))
}

/// Coefficients for `kind`; `moments` is required for MA1 and MA2.
pub fn coeffs_for(
    kind: EstimatorKind,
    p: usize,
    m: usize,
    n: usize,
    moments: Option<&MomentTable>,
) -> Result<CoefficientVector> {
    let need = || moments.ok_or_else(|| Error::Config(format!("{kind} needs a moment table")));
    match kind {
        EstimatorKind::U => coeffs_u(p, n),
        EstimatorKind::Sds => coeffs_sds(p, n),
        EstimatorKind::Kg => coeffs_kg(p, n),
        EstimatorKind::Ma1 => coeffs_ma1(p, m, n, need()?),
        EstimatorKind::Ma2 => coeffs_ma2(p, m, n, need()?),
        EstimatorKind::Custom => Err(Error::Config("custom coefficients must be supplied directly".into())),
    }
}

/// All five named estimators in table order.
pub fn all_coeffs(p: usize, m: usize, n: usize, moments: &MomentTable) -> Result<Vec<CoefficientVector>> {
    EstimatorKind::ALL
        .iter()
        .map(|&k| coeffs_for(k, p, m, n, Some(moments)))
        .collect()
}

/// LU solve with one step of iterative refinement; fails if the final residual
/// exceeds `1e-8·‖b‖∞`.
pub fn solve_refined(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let mut x = lu.solve(b).ok_or(Error::SingularSystem(f64::INFINITY))?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let resid = (b - a * &x).amax();
    let scale = b.amax().max(f64::MIN_POSITIVE);
    if !(resid <= 1e-8 * scale) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(resid));
    }
    Ok(x)
}

/// `G·diag(cᵢlᵢ)·Gᵀ` from an existing decomposition.
pub fn apply_to_decomp(d: &SpectralDecomp, c: &CoefficientVector) -> Result<SymMatrix> {
    if d.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            found: c.dim(),
        });
    }
    let scaled: Vec<f64> = d.values.iter().zip(&c.c).map(|(l, ci)| l * ci).collect();
    Ok(SymMatrix::congruence_diag(d.vectors.as_matrix(), &scaled))
}

/// Decomposes `S` (with `frame` for the sign convention, if given) and applies `c`.
pub fn apply_estimator(s: &SymMatrix, c: &CoefficientVector, frame: Option<&OrthoMatrix>) -> Result<SymMatrix> {
    if s.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            found: c.dim(),
        });
    }
    apply_to_decomp(&spectral_decompose(s, frame)?, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::McConfig;
    use crate::moments::{moment_table, MomentPolicy};
    use crate::sampling::{random_orthogonal, RandomStream};
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn table(p: usize, m: usize, n: usize) -> MomentTable {
        moment_table(p, m, n, MomentPolicy::ExactOnly, &McConfig::new(1, RandomStream::root(0))).unwrap()
    }

    #[test]
    fn simple_rules() {
        assert_eq!(coeffs_u(3, 10).unwrap().c, vec![0.1; 3]);
        assert_eq!(coeffs_u(4, 5).unwrap().c, vec![0.2; 4]);
        assert_eq!(coeffs_u(1, 1).unwrap().c, vec![1.0]);
        assert_eq!(coeffs_sds(3, 10).unwrap().c, vec![1.0 / 12.0, 0.1, 0.125]);
        assert_eq!(coeffs_sds(4, 4).unwrap().c, vec![1.0 / 7.0, 0.2, 1.0 / 3.0, 1.0]);
        assert_eq!(coeffs_sds(1, 2).unwrap().c, vec![0.5]);
        assert!(matches!(coeffs_sds(4, 3), Err(Error::InsufficientDof { .. })));
    }

    #[test]
    fn kg_examples() {
        assert!(close(&coeffs_kg(3, 10).unwrap().c, &[0.0630, 0.0723, 0.0865], 5e-5));
        assert!(close(&coeffs_kg(4, 5).unwrap().c, &[0.0822, 0.0973, 0.1222, 0.1746], 5e-5));
        // 1×1 system: 3c = 15 ⇒ c = 1/5
        assert!((coeffs_kg(1, 3).unwrap().c[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ma_examples() {
        let t = table(3, 1, 10);
        assert!(close(&coeffs_ma1(3, 1, 10, &t).unwrap().c, &[0.0833, 0.0790, 0.1872], 5e-5));
        assert!(close(&coeffs_ma2(3, 1, 10, &t).unwrap().c, &[0.0619, 0.0655, 0.1438], 5e-5));
        let t = table(4, 1, 5);
        assert!(close(&coeffs_ma1(4, 1, 5, &t).unwrap().c, &[0.1250, 0.1200, 0.3333, 1.5000], 5e-5));
        let t = table(4, 3, 4);
        assert!(close(&coeffs_ma2(4, 3, 4, &t).unwrap().c, &[0.0852, 0.1670, 0.2383, 0.1698], 5e-5));
    }

    #[test]
    fn two_dimensional_coincidences() {
        for n in [2usize, 5, 10, 33] {
            let t = table(2, 1, n);
            let ma1 = coeffs_ma1(2, 1, n, &t).unwrap().c;
            let expect = [1.0 / (n + 1) as f64, 1.0 / (n - 1) as f64];
            assert!(close(&ma1, &expect, 1e-15));
            assert!(close(&ma1, &coeffs_sds(2, n).unwrap().c, 1e-15));
            let ma2 = coeffs_ma2(2, 1, n, &t).unwrap().c;
            assert!(close(&ma2, &coeffs_kg(2, n).unwrap().c, 1e-9));
        }
    }

    #[test]
    fn context_is_checked() {
        let t = table(3, 1, 10);
        assert!(matches!(coeffs_ma1(3, 1, 11, &t), Err(Error::ContextMismatch(_))));
    }

    #[test]
    fn apply_examples() {
        let s = SymMatrix::from_diagonal(&[4.0, 1.0]);
        let c = CoefficientVector::custom(vec![0.5, 2.0], 2).unwrap();
        let r = apply_estimator(&s, &c, Some(&OrthoMatrix::identity(2))).unwrap();
        assert!(r.max_abs_diff(&SymMatrix::from_diagonal(&[2.0, 2.0])) < 1e-15);
        assert!(CoefficientVector::custom(vec![1.0, -1.0], 2).is_err());
    }

    #[test]
    fn unbiased_returns_scaled_input() {
        let mut rng = RandomStream::root(4).rng();
        let w = crate::sampling::WishartSampler::new(10, &SymMatrix::identity(4)).unwrap().sample(&mut rng);
        let r = apply_estimator(&w, &coeffs_u(4, 10).unwrap(), None).unwrap();
        assert!(r.max_abs_diff(&w.scaled(0.1)) < 1e-12 * w.trace());
    }

    #[test]
    fn within_block_ordering() {
        for (p, m, ns) in [
            (3usize, 1usize, vec![4usize, 6, 8, 10, 20, 50]),
            (4, 1, vec![5, 7, 9, 11, 21, 51]),
        ] {
            for n in ns {
                let t = table(p, m, n);
                for c in [coeffs_sds(p, n).unwrap(), coeffs_kg(p, n).unwrap()] {
                    assert!(c.c.windows(2).all(|w| w[0] < w[1]));
                }
                for c in [coeffs_ma1(p, m, n, &t).unwrap(), coeffs_ma2(p, m, n, &t).unwrap()] {
                    assert!(c.c[..m].windows(2).all(|w| w[0] < w[1]));
                    assert!(c.c[m..].windows(2).all(|w| w[0] < w[1]));
                }
            }
        }
    }

    #[test]
    fn solutions_have_small_residual() {
        for n in [4usize, 10, 50] {
            let (a, b) = kg_system(3, n).unwrap();
            let c = DVector::from_vec(coeffs_kg(3, n).unwrap().c);
            assert!((&b - &a * &c).amax() <= 1e-8 * b.amax());
            let t = table(3, 1, n);
            let sys = limit_system(&t);
            let c = DVector::from_vec(coeffs_ma2(3, 1, n, &t).unwrap().c);
            assert!((&sys.b - &sys.a * &c).amax() <= 1e-8 * sys.b.amax());
        }
    }

    #[test]
    fn ma_coefficients_are_local_minimizers() {
        let t = table(4, 1, 11);
        let sys = limit_system(&t);
        let stein = |c: &[f64]| -> f64 { c.iter().zip(sys.b.iter()).map(|(c, b)| b * c - c.ln()).sum() };
        let quad = |c: &[f64]| -> f64 {
            let v = DVector::from_column_slice(c);
            (v.transpose() * &sys.a * &v)[(0, 0)] - 2.0 * sys.b.dot(&v)
        };
        let c1 = coeffs_ma1(4, 1, 11, &t).unwrap().c;
        let c2 = coeffs_ma2(4, 1, 11, &t).unwrap().c;
        for i in 0..4 {
            for f in [0.99, 1.01] {
                let mut d1 = c1.clone();
                d1[i] *= f;
                assert!(stein(&c1) <= stein(&d1));
                let mut d2 = c2.clone();
                d2[i] *= f;
                assert!(quad(&c2) <= quad(&d2));
            }
        }
    }

    proptest! {
        #[test]
        fn orthogonal_equivariance(seed in 0u64..1000, c0 in 0.05f64..2.0, c1 in 0.05f64..2.0, c2 in 0.05f64..2.0) {
            let mut rng = RandomStream::root(seed).rng();
            let s = crate::sampling::WishartSampler::new(6, &SymMatrix::identity(3)).unwrap().sample(&mut rng);
            let q = random_orthogonal(3, &mut rng);
            let c = CoefficientVector::custom(vec![c0, c1, c2], 6).unwrap();
            let qm = q.as_matrix();
            let rotated = SymMatrix::from_upper(&(qm * s.to_dense() * qm.transpose())).unwrap();
            let lhs = apply_estimator(&rotated, &c, None).unwrap().to_dense();
            let rhs = qm * apply_estimator(&s, &c, None).unwrap().to_dense() * qm.transpose();
            prop_assert!((lhs - rhs).amax() <= 1e-8 * s.trace());
        }

        #[test]
        fn estimates_are_positive_definite(seed in 0u64..1000, n in 4usize..30) {
            let mut rng = RandomStream::root(seed).rng();
            let s = crate::sampling::WishartSampler::new(n, &SymMatrix::identity(4)).unwrap().sample(&mut rng);
            for c in [coeffs_sds(4, n).unwrap(), coeffs_kg(4, n).unwrap()] {
                let e = apply_estimator(&s, &c, None).unwrap();
                prop_assert!(spectral_decompose(&e, None).is_ok());
            }
        }
    }
}
