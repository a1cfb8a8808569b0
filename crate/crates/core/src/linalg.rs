//! Symmetric matrices, orthogonal frames and the spectral decomposition used
//! throughout the crate.
//!
//! Eigenvalues come out in descending order. Eigenvector signs are fixed either
//! against a reference frame `Γ` (every diagonal entry of `ΓᵀG` positive) or, when
//! no frame is known, by making the largest-magnitude entry of each column positive.
//!
//! The eigen-solver is a cyclic Jacobi iteration with a relative off-diagonal
//! threshold. On matrices of the form `D·W·D` (the Wishart draws of a spectrum whose
//! scales differ by many orders of magnitude) it resolves the small eigenvalues to
//! high relative accuracy, which the limit statistics depend on.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Orthogonality tolerance applied when an [`OrthoMatrix`] is constructed.
pub const ORTHO_TOL: f64 = 1e-10;
/// An eigenvalue at or below `PD_REL_TOL * trace` rejects the matrix as not positive definite.
pub const PD_REL_TOL: f64 = 1e-12;
/// Relative gap below which two eigenvalues are reported as degenerate.
pub const DEGENERATE_REL_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;

/// Real symmetric `p × p` matrix. Only the upper triangle is stored, so
/// `get(i, j) == get(j, i)` holds exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    upper: Vec<f64>,
}

impl SymMatrix {
    fn index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        // row a of the packed upper triangle starts after sum_{r<a} (dim - r) entries
        a * self.dim - a * a.saturating_sub(1) / 2 + (b - a)
    }

    /// Builds a symmetric matrix from the upper triangle of a square matrix.
    pub fn from_upper(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::Domain("matrix dimension must be at least 1".into()));
        }
        Ok(Self::from_fn(m.nrows(), |i, j| m[(i, j)]))
    }

    /// Builds a matrix by evaluating `f(i, j)` for `i <= j`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        let mut upper = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in i..dim {
                upper.push(f(i, j));
            }
        }
        Self { dim, upper }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    /// `B·Bᵀ`, computed on the upper triangle only.
    pub fn gram(b: &DMatrix<f64>) -> Self {
        let cols = b.ncols();
        Self::from_fn(b.nrows(), |i, j| {
            let mut acc = 0.0;
            for k in 0..cols {
                acc += b[(i, k)] * b[(j, k)];
            }
            acc
        })
    }

    /// `Q·diag(values)·Qᵀ`.
    pub fn congruence_diag(q: &DMatrix<f64>, values: &[f64]) -> Self {
        let p = q.nrows();
        Self::from_fn(p, |i, j| {
            let mut acc = 0.0;
            for (k, v) in values.iter().enumerate() {
                acc += q[(i, k)] * v * q[(j, k)];
            }
            acc
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[self.index(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            upper: self.upper.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.upper
            .iter()
            .zip(&other.upper)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Orthogonal `p × p` matrix, validated to `‖QᵀQ − I‖_max ≤ 1e-10`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoMatrix(DMatrix<f64>);

impl OrthoMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let dev = orthogonality_defect(&m);
        if !(dev <= ORTHO_TOL) {
            return Err(Error::NotOrthogonal(dev));
        }
        Ok(Self(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    /// Planar rotation by `theta`.
    pub fn rotation2(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn is_identity(&self) -> bool {
        let p = self.dim();
        (0..p).all(|i| (0..p).all(|j| self.0[(i, j)] == if i == j { 1.0 } else { 0.0 }))
    }
}

fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let qtq = m.transpose() * m;
    let p = m.ncols();
    let mut dev: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((qtq[(i, j)] - target).abs());
        }
    }
    dev
}

/// Ordered eigenvalues `l₁ ≥ … ≥ l_p > 0` with their eigenvectors as columns of `G`.
#[derive(Clone, Debug)]
pub struct SpectralDecomp {
    pub values: Vec<f64>,
    pub vectors: OrthoMatrix,
    /// Frame used for the sign convention, if one was supplied.
    pub reference_frame: Option<OrthoMatrix>,
    /// Set when two eigenvalues agree to within [`DEGENERATE_REL_TOL`].
    pub degenerate: bool,
}

impl SpectralDecomp {
    /// `G·diag(values)·Gᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::congruence_diag(self.vectors.as_matrix(), &self.values)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Cyclic Jacobi on a row-major dense copy. On return the diagonal of `a` holds the
/// eigenvalues and the columns of `v` the eigenvectors.
fn jacobi_in_place(a: &mut [f64], v: &mut [f64], p: usize) {
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let aij = a[i * p + j];
                if aij == 0.0 {
                    continue;
                }
                let aii = a[i * p + i];
                let ajj = a[j * p + j];
                if aij.abs() <= f64::EPSILON * (aii * ajj).abs().sqrt() {
                    a[i * p + j] = 0.0;
                    a[j * p + i] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (ajj - aii) / (2.0 * aij);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[i * p + i] = aii - t * aij;
                a[j * p + j] = ajj + t * aij;
                a[i * p + j] = 0.0;
                a[j * p + i] = 0.0;
                for r in 0..p {
                    if r == i || r == j {
                        continue;
                    }
                    let ari = a[r * p + i];
                    let arj = a[r * p + j];
                    let ni = c * ari - s * arj;
                    let nj = s * ari + c * arj;
                    a[r * p + i] = ni;
                    a[i * p + r] = ni;
                    a[r * p + j] = nj;
                    a[j * p + r] = nj;
                }
                for r in 0..p {
                    let vri = v[r * p + i];
                    let vrj = v[r * p + j];
                    v[r * p + i] = c * vri - s * vrj;
                    v[r * p + j] = s * vri + c * vrj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Eigenvalues of a symmetric matrix in descending order, without eigenvectors
/// or a definiteness check.
pub fn symmetric_eigenvalues(m: &SymMatrix) -> Vec<f64> {
    let p = m.dim();
    let mut a: Vec<f64> = (0..p * p).map(|k| m.get(k / p, k % p)).collect();
    let mut v = vec![0.0; p * p];
    jacobi_in_place(&mut a, &mut v, p);
    let mut values: Vec<f64> = (0..p).map(|i| a[i * p + i]).collect();
    values.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    values
}

/// Eigen-decomposition of an SPD matrix with the ordering and sign conventions
/// described in the module docs.
pub fn spectral_decompose(m: &SymMatrix, frame: Option<&OrthoMatrix>) -> Result<SpectralDecomp> {
    spectral_decompose_with_tolerance(m, frame, PD_REL_TOL)
}

/// [`spectral_decompose`] with a caller-chosen definiteness threshold: the smallest
/// eigenvalue must exceed `rel_tol * trace` (and be positive).
pub fn spectral_decompose_with_tolerance(
    m: &SymMatrix,
    frame: Option<&OrthoMatrix>,
    rel_tol: f64,
) -> Result<SpectralDecomp> {
    let p = m.dim();
    if let Some(f) = frame {
        if f.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: f.dim(),
            });
        }
    }
    let mut a = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            a[i * p + j] = m.get(i, j);
        }
    }
    let mut v = vec![0.0; p * p];
    for i in 0..p {
        v[i * p + i] = 1.0;
    }
    jacobi_in_place(&mut a, &mut v, p);

    let raw: Vec<f64> = (0..p).map(|i| a[i * p + i]).collect();
    let mut order: Vec<usize> = (0..p).collect();
    // stable sort: equal eigenvalues keep their original column order
    order.sort_by(|&x, &y| raw[y].partial_cmp(&raw[x]).unwrap_or(std::cmp::Ordering::Equal));

    let trace = m.trace();
    let tolerance = rel_tol * trace.abs();
    let values: Vec<f64> = order.iter().map(|&k| raw[k]).collect();
    let smallest = values[p - 1];
    if !(trace > 0.0) || !(smallest > tolerance) || !(smallest > 0.0) {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: smallest,
            tolerance,
        });
    }
    let degenerate = values
        .windows(2)
        .any(|w| (w[0] - w[1]).abs() <= DEGENERATE_REL_TOL * w[0].abs().max(w[1].abs()));

    let mut g = DMatrix::from_fn(p, p, |r, c| v[r * p + order[c]]);
    for c in 0..p {
        let flip = match frame {
            Some(f) => {
                let dot: f64 = (0..p).map(|r| f.as_matrix()[(r, c)] * g[(r, c)]).sum();
                if dot != 0.0 {
                    dot < 0.0
                } else {
                    largest_entry_negative(&g, c)
                }
            }
            None => largest_entry_negative(&g, c),
        };
        if flip {
            for r in 0..p {
                g[(r, c)] = -g[(r, c)];
            }
        }
    }

    Ok(SpectralDecomp {
        values,
        vectors: OrthoMatrix::new(g)?,
        reference_frame: frame.cloned(),
        degenerate,
    })
}

fn largest_entry_negative(g: &DMatrix<f64>, c: usize) -> bool {
    let mut best = 0.0_f64;
    for r in 0..g.nrows() {
        let x = g[(r, c)];
        if x.abs() > best.abs() {
            best = x;
        }
    }
    best < 0.0
}

/// Split `0 = m₀ < m₁ < … < m_k = p` of the coordinates into `k` contiguous blocks.
/// Blocks are indexed from zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockPartition {
    cuts: Vec<usize>,
}

impl BlockPartition {
    pub fn new(cuts: Vec<usize>) -> Result<Self> {
        if cuts.len() < 2 {
            return Err(Error::InvalidPartition("need at least one block".into()));
        }
        if cuts[0] != 0 {
            return Err(Error::InvalidPartition("first cut point must be 0".into()));
        }
        if cuts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPartition(format!(
                "cut points must be strictly increasing: {cuts:?}"
            )));
        }
        Ok(Self { cuts })
    }

    /// Two blocks `{1..m}` and `{m+1..p}`.
    pub fn two_block(p: usize, m: usize) -> Result<Self> {
        Self::new(vec![0, m, p])
    }

    /// Builds a partition from block sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut cuts = vec![0];
        for s in sizes {
            cuts.push(cuts.last().unwrap() + s);
        }
        Self::new(cuts)
    }

    pub fn cuts(&self) -> &[usize] {
        &self.cuts
    }

    pub fn dim(&self) -> usize {
        *self.cuts.last().unwrap()
    }

    pub fn num_blocks(&self) -> usize {
        self.cuts.len() - 1
    }

    pub fn size(&self, s: usize) -> usize {
        self.cuts[s + 1] - self.cuts[s]
    }

    /// Coordinates preceding block `s` (`m_{s−1}` in 1-based block notation).
    pub fn start(&self, s: usize) -> usize {
        self.cuts[s]
    }

    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.cuts[s]..self.cuts[s + 1]
    }

    /// Block containing coordinate `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.cuts[1..].iter().position(|&c| i < c).expect("coordinate inside partition")
    }
}

/// Population spectrum `λᵢ = ξᵢ·α_{[i]}`: a block partition, fixed within-block
/// factors `ξ`, and one scale per block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenSpec {
    partition: BlockPartition,
    xi: Vec<f64>,
    scales: Vec<f64>,
}

impl EigenSpec {
    pub fn new(partition: BlockPartition, xi: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        let p = partition.dim();
        if xi.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: xi.len(),
            });
        }
        if scales.len() != partition.num_blocks() {
            return Err(Error::DimensionMismatch {
                expected: partition.num_blocks(),
                found: scales.len(),
            });
        }
        if let Some(x) = xi.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidSpectrum(format!("xi entries must be positive, got {x}")));
        }
        if let Some(a) = scales.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidSpectrum(format!("scales must be positive, got {a}")));
        }
        if scales.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidSpectrum(format!(
                "block scales must be non-increasing: {scales:?}"
            )));
        }
        let spec = Self {
            partition,
            xi,
            scales,
        };
        let lambda = spec.lambda();
        if lambda.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidSpectrum(format!(
                "eigenvalues must be non-increasing: {lambda:?}"
            )));
        }
        Ok(spec)
    }

    /// Two-block spectrum with scales `(alpha, beta)`.
    pub fn two_block(p: usize, m: usize, xi: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(BlockPartition::two_block(p, m)?, xi, vec![alpha, beta])
    }

    /// Two-block spectrum with `Ξ₁ = I`, `Ξ₂ = I`.
    pub fn identity_blocks(p: usize, m: usize, alpha: f64, beta: f64) -> Result<Self> {
        Self::two_block(p, m, vec![1.0; p], alpha, beta)
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn scale_of(&self, i: usize) -> f64 {
        self.scales[self.partition.block_of(i)]
    }

    pub fn lambda(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.xi[i] * self.scale_of(i)).collect()
    }

    pub fn block_xi(&self, s: usize) -> &[f64] {
        &self.xi[self.partition.range(s)]
    }
}

/// `Σ = Γ·diag(λ)·Γᵀ`.
pub fn build_sigma(spec: &EigenSpec, gamma: &OrthoMatrix) -> Result<SymMatrix> {
    if gamma.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: gamma.dim(),
        });
    }
    if gamma.is_identity() {
        return Ok(SymMatrix::from_diagonal(&spec.lambda()));
    }
    Ok(SymMatrix::congruence_diag(gamma.as_matrix(), &spec.lambda()))
}

/// `ΓᵀG`, no sign adjustment.
pub fn relative_rotation(gamma: &OrthoMatrix, g: &OrthoMatrix) -> Result<OrthoMatrix> {
    if gamma.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: gamma.dim(),
            found: g.dim(),
        });
    }
    if gamma.is_identity() {
        return Ok(g.clone());
    }
    OrthoMatrix::new(gamma.as_matrix().transpose() * g.as_matrix())
}

/// Copy of block `(s, t)` of a matrix partitioned by `partition` on both axes.
pub fn block_view(
    m: &DMatrix<f64>,
    partition: &BlockPartition,
    s: usize,
    t: usize,
) -> Result<DMatrix<f64>> {
    let k = partition.num_blocks();
    if s >= k || t >= k {
        return Err(Error::IndexOutOfRange(format!(
            "block ({s}, {t}) of a {k}-block partition"
        )));
    }
    if m.nrows() != partition.dim() || m.ncols() != partition.dim() {
        return Err(Error::DimensionMismatch {
            expected: partition.dim(),
            found: m.nrows(),
        });
    }
    let rows = partition.range(s);
    let cols = partition.range(t);
    Ok(m.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned())
}
