//! First and second moments of the ordered eigenvalues of identity-covariance Wishart
//! matrices.
//!
//! For a `3 × 3` block with even `dof` the mixed gap moments
//! `F₃(x) = E[Δ₁^{x₁} Δ₂^{x₂} Δ₃^{x₃}]` (with `Δ₁ = l₁ − l₂`, `Δ₂ = l₂ − l₃`, `Δ₃ = l₃`)
//! are evaluated in exact rational arithmetic by expanding the ordered-eigenvalue
//! density
//!
//! ```text
//! (l₁l₂l₃)^u (l₁ − l₂)(l₁ − l₃)(l₂ − l₃) exp(−(l₁ + l₂ + l₃)/2),   u = (dof − 4)/2,
//! ```
//!
//! in the gaps and integrating term by term. Normalizing by the `x = 0` sum removes the
//! density constant. A `2 × 2` block with odd `dof` is handled the same way with
//! `v = (dof − 3)/2`. Size-one blocks are `χ²_dof`. Everything else is estimated by
//! Monte Carlo.

use std::collections::BTreeMap;

use num::bigint::BigInt;
use num::{BigRational, One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, SymMatrix};
use crate::mc::{monte_carlo, McConfig};
use crate::sampling::{split_stream, WishartSampler};

/// Default replicate count for Monte Carlo moments.
pub const DEFAULT_MOMENT_REPS: usize = 1_000_000;

/// Exponents `(x₁, x₂, x₃)` of a mixed gap moment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DeltaExponent {
    pub x1: u32,
    pub x2: u32,
    pub x3: u32,
}

impl DeltaExponent {
    pub const fn new(x1: u32, x2: u32, x3: u32) -> Self {
        Self { x1, x2, x3 }
    }
}

/// How a moment entry was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMethod {
    Exact,
    Mc,
}

/// Which evaluation routes [`ordered_moments`] may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MomentPolicy {
    /// Exact where available, Monte Carlo otherwise.
    #[default]
    Auto,
    ExactOnly,
    McOnly,
}

fn factorials(upto: usize) -> Vec<BigInt> {
    let mut f = Vec::with_capacity(upto + 1);
    f.push(BigInt::one());
    for k in 1..=upto {
        let next = &f[k - 1] * BigInt::from(k);
        f.push(next);
    }
    f
}

fn binomials(n: usize) -> Vec<BigInt> {
    let mut row = vec![BigInt::one()];
    for k in 1..=n {
        let next = &row[k - 1] * BigInt::from(n - k + 1) / BigInt::from(k);
        row.push(next);
    }
    row
}

fn pow_big(base: u32, e: usize) -> BigInt {
    num::pow(BigInt::from(base), e)
}

/// Gap polynomial of the `W₃(dof, I)` ordered-eigenvalue density, as a map from
/// exponent triples to integer coefficients.
#[derive(Clone, Debug)]
pub struct GapDensity3 {
    dof: usize,
    u: usize,
    terms: BTreeMap<(usize, usize, usize), BigInt>,
}

impl GapDensity3 {
    pub fn new(dof: usize) -> Result<Self> {
        if dof < 4 {
            return Err(Error::ParityUnsupported {
                dof,
                reason: "three-eigenvalue expansion needs dof >= 4",
            });
        }
        if !(dof - 4).is_multiple_of(2) {
            return Err(Error::ParityUnsupported {
                dof,
                reason: "three-eigenvalue expansion needs (dof - 4) even",
            });
        }
        let u = (dof - 4) / 2;
        let cu = binomials(u);
        let mut terms: BTreeMap<(usize, usize, usize), BigInt> = BTreeMap::new();
        // l₁^u = Σ_s C(u,s) Δ₁^s (Δ₂+Δ₃)^{u−s},  (Δ₂+Δ₃)^{u−s} = Σ_t C(u−s,t) Δ₂^t Δ₃^{u−s−t},
        // l₂^u = Σ_i C(u,i) Δ₂^i Δ₃^{u−i},  l₃^u = Δ₃^u,
        // (l₁−l₂)(l₁−l₃)(l₂−l₃) = Δ₁ (Δ₁ + Δ₂) Δ₂ = Σ_{j∈{0,1}} Δ₁^{1+j} Δ₂^{2−j}
        for s in 0..=u {
            let cus = binomials(u - s);
            for t in 0..=(u - s) {
                let st = &cu[s] * &cus[t];
                for (i, cui) in cu.iter().enumerate() {
                    let coef = &st * cui;
                    for j in 0..=1 {
                        let key = (s + 1 + j, i + t + 2 - j, 3 * u - i - s - t);
                        *terms.entry(key).or_insert_with(BigInt::zero) += &coef;
                    }
                }
            }
        }
        Ok(Self { dof, u, terms })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    /// `Σ coef · ∫ Δ₁^{a+x₁} Δ₂^{b+x₂} Δ₃^{c+x₃} e^{−Δ₁/2 − Δ₂ − 3Δ₃/2}`, scaled by
    /// `3^{3u + x₃ + 1}` so that it is an integer.
    fn scaled_integral(&self, x: DeltaExponent, fact: &[BigInt]) -> BigInt {
        let k = 3 * self.u + x.x3 as usize + 1;
        let mut total = BigInt::zero();
        for (&(a, b, c), coef) in &self.terms {
            let a = a + x.x1 as usize;
            let b = b + x.x2 as usize;
            let c = c + x.x3 as usize;
            // ∫ y^a e^{−y/2} = a! 2^{a+1};  ∫ y^b e^{−y} = b!;  ∫ y^c e^{−3y/2} = c! 2^{c+1} / 3^{c+1}
            let term = coef
                * &fact[a]
                * &fact[b]
                * &fact[c]
                * pow_big(2, a + c + 2)
                * pow_big(3, k - (c + 1));
            total += term;
        }
        total
    }

    /// Exact `E[Δ₁^{x₁} Δ₂^{x₂} Δ₃^{x₃}]`.
    pub fn moment(&self, x: DeltaExponent) -> BigRational {
        let max_deg = 3 * self.u + 3 + (x.x1 + x.x2 + x.x3) as usize;
        let fact = factorials(max_deg);
        let num = self.scaled_integral(x, &fact);
        let den = self.scaled_integral(DeltaExponent::new(0, 0, 0), &fact);
        let k_x = 3 * self.u + x.x3 as usize + 1;
        let k_0 = 3 * self.u + 1;
        BigRational::new(num * pow_big(3, k_0), den * pow_big(3, k_x))
    }
}

/// Exact `F₃(x; dof)`.
pub fn f3_exact(x: DeltaExponent, dof: usize) -> Result<BigRational> {
    Ok(GapDensity3::new(dof)?.moment(x))
}

/// Exact `E[Δ₁^{x₁} Δ₂^{x₂}]` for `W₂(dof, I)` with `Δ₁ = l₁ − l₂`, `Δ₂ = l₂`.
pub fn f2_exact(x1: u32, x2: u32, dof: usize) -> Result<BigRational> {
    if dof < 3 {
        return Err(Error::ParityUnsupported {
            dof,
            reason: "two-eigenvalue expansion needs dof >= 3",
        });
    }
    if !(dof - 3).is_multiple_of(2) {
        return Err(Error::ParityUnsupported {
            dof,
            reason: "two-eigenvalue expansion needs (dof - 3) even",
        });
    }
    let v = (dof - 3) / 2;
    let cv = binomials(v);
    let fact = factorials(2 * v + 2 + (x1 + x2) as usize);
    // (l₁l₂)^v (l₁ − l₂) = Σ_s C(v,s) Δ₁^{s+1} Δ₂^{2v−s};  rates 1/2 on Δ₁ and 1 on Δ₂
    let sum = |e1: usize, e2: usize| -> BigInt {
        let mut total = BigInt::zero();
        for (s, c) in cv.iter().enumerate() {
            let a = s + 1 + e1;
            let b = 2 * v - s + e2;
            total += c * &fact[a] * &fact[b] * pow_big(2, a + 1);
        }
        total
    };
    Ok(BigRational::new(sum(x1 as usize, x2 as usize), sum(0, 0)))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite rational")
}

/// `E[dᵢ]`, `E[dᵢ²]` for the ordered eigenvalues of one identity-covariance block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockMoments {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub method: MomentMethod,
    pub stderr_e1: Vec<f64>,
    pub stderr_e2: Vec<f64>,
}

fn exact_block(block_size: usize, dof: usize) -> Option<BlockMoments> {
    let (e1, e2) = match block_size {
        1 => {
            let nu = dof as f64;
            (vec![nu], vec![nu * (nu + 2.0)])
        }
        2 => {
            let f = |a, b| f2_exact(a, b, dof).ok();
            let (d1, d2) = (f(1, 0)?, f(0, 1)?);
            let (d11, d22, d12) = (f(2, 0)?, f(0, 2)?, f(1, 1)?);
            let two = BigRational::from_integer(BigInt::from(2));
            // l₁ = Δ₁ + Δ₂, l₂ = Δ₂
            let e1 = [&d1 + &d2, d2.clone()];
            let e2 = [&d11 + &d22 + &two * &d12, d22];
            (e1.iter().map(to_f64).collect(), e2.iter().map(to_f64).collect())
        }
        3 => {
            let g = GapDensity3::new(dof).ok()?;
            let f = |a, b, c| g.moment(DeltaExponent::new(a, b, c));
            let (f100, f010, f001) = (f(1, 0, 0), f(0, 1, 0), f(0, 0, 1));
            let (f200, f020, f002) = (f(2, 0, 0), f(0, 2, 0), f(0, 0, 2));
            let (f110, f101, f011) = (f(1, 1, 0), f(1, 0, 1), f(0, 1, 1));
            let two = BigRational::from_integer(BigInt::from(2));
            // l₁ = Δ₁ + Δ₂ + Δ₃, l₂ = Δ₂ + Δ₃, l₃ = Δ₃
            let e1 = [&f100 + &f010 + &f001, &f010 + &f001, f001.clone()];
            let e2 = [
                &f200 + &f020 + &f002 + &two * (&f110 + &f101 + &f011),
                &f020 + &f002 + &two * &f011,
                f002.clone(),
            ];
            (e1.iter().map(to_f64).collect(), e2.iter().map(to_f64).collect())
        }
        _ => return None,
    };
    Some(BlockMoments {
        stderr_e1: vec![0.0; e1.len()],
        stderr_e2: vec![0.0; e2.len()],
        e1,
        e2,
        method: MomentMethod::Exact,
    })
}

fn mc_block(block_size: usize, dof: usize, cfg: &McConfig) -> Result<BlockMoments> {
    let sampler = WishartSampler::new(dof, &SymMatrix::identity(block_size))?;
    let q = block_size;
    let s = monte_carlo(cfg, 2 * q, |rng, out| {
        let values = symmetric_eigenvalues(&sampler.sample(rng));
        for (i, l) in values.iter().enumerate() {
            out[i] = *l;
            out[q + i] = l * l;
        }
        Ok(())
    })?;
    Ok(BlockMoments {
        e1: s.mean[..q].to_vec(),
        e2: s.mean[q..].to_vec(),
        method: MomentMethod::Mc,
        stderr_e1: (0..q).map(|i| s.stderr(i)).collect(),
        stderr_e2: (q..2 * q).map(|i| s.stderr(i)).collect(),
    })
}

/// Moments of the ordered eigenvalues of `W_{block_size}(dof, I)`.
pub fn ordered_moments(
    block_size: usize,
    dof: usize,
    policy: MomentPolicy,
    mc: &McConfig,
) -> Result<BlockMoments> {
    if block_size == 0 {
        return Err(Error::Domain("block size must be at least 1".into()));
    }
    if dof < block_size {
        return Err(Error::InsufficientDof { n: dof, p: block_size });
    }
    match policy {
        MomentPolicy::McOnly => mc_block(block_size, dof, mc),
        MomentPolicy::ExactOnly => exact_block(block_size, dof).ok_or(Error::ParityUnsupported {
            dof,
            reason: "no exact expansion for this block size and dof",
        }),
        MomentPolicy::Auto => match exact_block(block_size, dof) {
            Some(b) => Ok(b),
            None => mc_block(block_size, dof, mc),
        },
    }
}

/// Whether [`ordered_moments`] has an exact route for this block.
pub fn exact_available(block_size: usize, dof: usize) -> bool {
    match block_size {
        1 => dof >= 1,
        2 => dof >= 3 && (dof - 3).is_multiple_of(2),
        3 => dof >= 4 && (dof - 4).is_multiple_of(2),
        _ => false,
    }
}

/// `E[dᵢ]`, `E[dᵢ²]` for `d₁…d_m` from `W_m(n, I)` and `d_{m+1}…d_p` from `W_{p−m}(n−m, I)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentTable {
    pub p: usize,
    pub m: usize,
    pub n: usize,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub method: Vec<MomentMethod>,
    pub stderr_e1: Vec<f64>,
    pub stderr_e2: Vec<f64>,
}

impl MomentTable {
    pub fn is_exact(&self) -> bool {
        self.method.iter().all(|m| *m == MomentMethod::Exact)
    }

    /// Checks that the table was built for `(p, m, n)`.
    pub fn check_context(&self, p: usize, m: usize, n: usize) -> Result<()> {
        if (self.p, self.m, self.n) != (p, m, n) {
            return Err(Error::ContextMismatch(format!(
                "moment table built for (p, m, n) = ({}, {}, {}), requested ({p}, {m}, {n})",
                self.p, self.m, self.n
            )));
        }
        Ok(())
    }
}

pub fn validate_pmn(p: usize, m: usize, n: usize) -> Result<()> {
    if m == 0 || m >= p {
        return Err(Error::Config(format!("need 1 <= m < p, got p = {p}, m = {m}")));
    }
    if n < p {
        return Err(Error::InsufficientDof { n, p });
    }
    Ok(())
}

/// Moment table for the two-block limit with `Ξ₁ = I_m`, `Ξ₂ = I_{p−m}`.
pub fn moment_table(p: usize, m: usize, n: usize, policy: MomentPolicy, mc: &McConfig) -> Result<MomentTable> {
    validate_pmn(p, m, n)?;
    let first = ordered_moments(m, n, policy, &McConfig::new(mc.reps, split_stream(&mc.stream, 0)))?;
    let second = ordered_moments(p - m, n - m, policy, &McConfig::new(mc.reps, split_stream(&mc.stream, 1)))?;
    let mut method = vec![first.method; m];
    method.extend(std::iter::repeat_n(second.method, p - m));
    Ok(MomentTable {
        p,
        m,
        n,
        e1: [first.e1, second.e1].concat(),
        e2: [first.e2, second.e2].concat(),
        method,
        stderr_e1: [first.stderr_e1, second.stderr_e1].concat(),
        stderr_e2: [first.stderr_e2, second.stderr_e2].concat(),
    })
}
