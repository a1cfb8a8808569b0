//! Seeded Wishart, chi-square and Gaussian sampling with splittable streams.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{OrthoMatrix, SymMatrix};

/// Generator type behind every [`RandomStream`].
pub type StreamRng = ChaCha12Rng;

/// A `(seed, stream_id)` pair naming one reproducible random sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Root stream for a seed.
    pub fn root(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = StreamRng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child stream `index` of `stream`. Deterministic; distinct indices give distinct streams.
pub fn split_stream(stream: &RandomStream, index: u64) -> RandomStream {
    let mixed = splitmix64(stream.stream_id ^ splitmix64(index).rotate_left(17)) ^ index;
    RandomStream::new(stream.seed, mixed)
}

/// Bartlett-decomposition sampler for `W_p(n, Σ)` with the factorization of `Σ`
/// computed once.
#[derive(Clone, Debug)]
pub struct WishartSampler {
    n: usize,
    p: usize,
    factor: Factor,
    chi2: Vec<ChiSquared<f64>>,
}

#[derive(Clone, Debug)]
enum Factor {
    /// Square roots of a diagonal `Σ`.
    Diagonal(Vec<f64>),
    /// Lower Cholesky factor of a general `Σ`.
    Lower(DMatrix<f64>),
}

impl WishartSampler {
    pub fn new(n: usize, sigma: &SymMatrix) -> Result<Self> {
        let p = sigma.dim();
        if n < p {
            return Err(Error::InsufficientDof { n, p });
        }
        let diagonal = (0..p).all(|i| (i + 1..p).all(|j| sigma.get(i, j) == 0.0));
        let factor = if diagonal {
            let d: Vec<f64> = (0..p).map(|i| sigma.get(i, i)).collect();
            if let Some(&bad) = d.iter().find(|x| !(**x > 0.0)) {
                return Err(Error::NotPositiveDefinite {
                    eigenvalue: bad,
                    tolerance: 0.0,
                });
            }
            Factor::Diagonal(d.iter().map(|x| x.sqrt()).collect())
        } else {
            let chol = sigma.to_dense().cholesky().ok_or(Error::NotPositiveDefinite {
                eigenvalue: f64::NAN,
                tolerance: 0.0,
            })?;
            Factor::Lower(chol.l())
        };
        let chi2 = (0..p)
            .map(|i| ChiSquared::new((n - i) as f64).expect("positive dof"))
            .collect();
        Ok(Self { n, p, factor, chi2 })
    }

    pub fn dof(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Lower-triangular Bartlett factor `T` with `T_ii² ~ χ²_{n−i+1}` (1-based `i`).
    fn bartlett<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let p = self.p;
        let mut t = DMatrix::zeros(p, p);
        for i in 0..p {
            t[(i, i)] = self.chi2[i].sample(rng).sqrt();
            for j in 0..i {
                t[(i, j)] = rng.sample(StandardNormal);
            }
        }
        t
    }

    /// One draw, returned as `B·Bᵀ` with `B = C·T`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SymMatrix {
        let mut b = self.bartlett(rng);
        match &self.factor {
            Factor::Diagonal(d) => {
                for i in 0..self.p {
                    for j in 0..=i {
                        b[(i, j)] *= d[i];
                    }
                }
            }
            Factor::Lower(l) => b = l * b,
        }
        SymMatrix::gram(&b)
    }
}

/// One draw of `W_p(n, Σ)` from the start of `stream`.
pub fn sample_wishart(n: usize, sigma: &SymMatrix, stream: &RandomStream) -> Result<SymMatrix> {
    Ok(WishartSampler::new(n, sigma)?.sample(&mut stream.rng()))
}

/// `rows × cols` matrix of independent standard normals.
pub fn sample_gaussian_matrix_with<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn sample_gaussian_matrix(rows: usize, cols: usize, stream: &RandomStream) -> DMatrix<f64> {
    sample_gaussian_matrix_with(rows, cols, &mut stream.rng())
}

pub fn sample_chi2_with<R: Rng + ?Sized>(k: usize, rng: &mut R) -> f64 {
    ChiSquared::new(k as f64).expect("k >= 1").sample(rng)
}

/// One `χ²_k` draw from the start of `stream`.
pub fn sample_chi2(k: usize, stream: &RandomStream) -> f64 {
    sample_chi2_with(k, &mut stream.rng())
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with `R` given a
/// positive diagonal).
pub fn random_orthogonal<R: Rng + ?Sized>(p: usize, rng: &mut R) -> OrthoMatrix {
    let z = sample_gaussian_matrix_with(p, p, rng);
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            for i in 0..p {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    OrthoMatrix::new(q).expect("QR factor is orthogonal")
}
