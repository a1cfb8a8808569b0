//! Quadratic discrimination by Mahalanobis distance with plug-in covariance
//! estimators, and the cross-validation protocols used to compare them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{apply_to_decomp, coeffs_for, CoefficientVector, EstimatorKind};
use crate::linalg::{spectral_decompose, SymMatrix};
use crate::mc::McConfig;
use crate::moments::{moment_table, MomentPolicy, DEFAULT_MOMENT_REPS};
use crate::sampling::{split_stream, RandomStream};

#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub label: String,
    pub samples: Vec<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// Groups in order of first appearance; samples keep file order.
    pub groups: Vec<Group>,
    pub feature_names: Vec<String>,
    pub source: String,
}

impl LabeledDataset {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads a headed CSV file. `feature_columns = None` takes every column except the label.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, feature_columns: Option<&[String]>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    parse_csv(file, &path.display().to_string(), label_column, feature_columns)
}

/// [`load_csv`] over any reader.
pub fn parse_csv<R: Read>(
    reader: R,
    source: &str,
    label_column: &str,
    feature_columns: Option<&[String]>,
) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            column: 0,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::Parse {
            row: 1,
            column: 0,
            message: "missing header row".into(),
        });
    }
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        names.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            column: 0,
            message: format!("no column named '{name}'"),
        })
    };
    let label_idx = find(label_column)?;
    let feature_idx: Vec<usize> = match feature_columns {
        Some(cols) => cols.iter().map(|c| find(c)).collect::<Result<_>>()?,
        None => (0..names.len()).filter(|&i| i != label_idx).collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::Config("no feature columns".into()));
    }

    let mut groups: Vec<Group> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != names.len() {
            return Err(Error::InconsistentDim {
                row,
                expected: names.len(),
                found: record.len(),
            });
        }
        let label = record[label_idx].trim().to_string();
        let x = feature_idx
            .iter()
            .map(|&c| {
                record[c].trim().parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("'{}': {e}", &record[c]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let g = *index.entry(label.clone()).or_insert_with(|| {
            groups.push(Group {
                label,
                samples: Vec::new(),
            });
            groups.len() - 1
        });
        groups[g].samples.push(DVector::from_vec(x));
    }
    if groups.is_empty() {
        return Err(Error::Parse {
            row: 2,
            column: 0,
            message: "no data rows".into(),
        });
    }
    Ok(LabeledDataset {
        groups,
        feature_names: feature_idx.iter().map(|&i| names[i].clone()).collect(),
        source: source.to_string(),
    })
}

/// Fitted mean and plug-in covariance of one group.
#[derive(Clone, Debug)]
pub struct GroupModel {
    pub label: String,
    pub mean: DVector<f64>,
    pub sigma_hat: SymMatrix,
    pub estimator: EstimatorKind,
    pub n_learn: usize,
    chol: Cholesky<f64, Dyn>,
}

impl GroupModel {
    /// `(x − ȳ)ᵀ Σ̂⁻¹ (x − ȳ)`.
    pub fn mahalanobis(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        let d = x - &self.mean;
        let y = self.chol.l().solve_lower_triangular(&d).ok_or(Error::SingularScatter(self.label.clone()))?;
        Ok(y.norm_squared())
    }
}

/// Mean and scatter `A = Σ (y − ȳ)(y − ȳ)ᵀ`.
pub fn mean_and_scatter(samples: &[&DVector<f64>]) -> Result<(DVector<f64>, SymMatrix)> {
    let first = samples.first().ok_or_else(|| Error::Config("empty sample".into()))?;
    let p = first.len();
    let n = samples.len() as f64;
    let mut mean = DVector::zeros(p);
    for s in samples {
        if s.len() != p {
            return Err(Error::DimensionMismatch { expected: p, found: s.len() });
        }
        mean += *s;
    }
    mean /= n;
    let mut centred = DMatrix::zeros(p, samples.len());
    for (j, s) in samples.iter().enumerate() {
        centred.set_column(j, &(*s - &mean));
    }
    Ok((mean, SymMatrix::gram(&centred)))
}

/// Fits one group with coefficients `c` applied to the eigenvalues of its scatter matrix.
pub fn fit_group(label: &str, samples: &[&DVector<f64>], c: &CoefficientVector) -> Result<GroupModel> {
    if samples.len() < 2 {
        return Err(Error::SingularScatter(label.to_string()));
    }
    let (mean, a) = mean_and_scatter(samples)?;
    if a.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: c.dim(),
        });
    }
    let dec = spectral_decompose(&a, None).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::SingularScatter(label.to_string()),
        other => other,
    })?;
    let sigma_hat = apply_to_decomp(&dec, c)?;
    let chol = Cholesky::new(sigma_hat.to_dense()).ok_or_else(|| Error::SingularScatter(label.to_string()))?;
    Ok(GroupModel {
        label: label.to_string(),
        mean,
        sigma_hat,
        estimator: c.kind,
        n_learn: samples.len(),
        chol,
    })
}

/// Index of the model with the smallest distance; ties go to the lowest index.
pub fn classify(x: &DVector<f64>, models: &[GroupModel]) -> Result<usize> {
    classify_available(x, &models.iter().map(Some).collect::<Vec<_>>())
}

/// [`classify`] with some groups unavailable.
pub fn classify_available(x: &DVector<f64>, models: &[Option<&GroupModel>]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in models.iter().enumerate() {
        let Some(m) = m else { continue };
        let d = m.mahalanobis(x)?;
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::Config("no group has a usable model".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CvScheme {
    LeaveOneOut,
    /// Consecutive blocks of `k` samples per group form each learning set.
    KSampleSet(usize),
}

impl fmt::Display for CvScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LeaveOneOut => f.write_str("loo"),
            Self::KSampleSet(k) => write!(f, "kset:{k}"),
        }
    }
}

impl FromStr for CvScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "loo" || s == "leave-one-out" {
            return Ok(Self::LeaveOneOut);
        }
        if let Some(k) = s.strip_prefix("kset:") {
            let k: usize = k.parse().map_err(|_| Error::Config(format!("bad sample-set size in '{s}'")))?;
            if k == 0 {
                return Err(Error::Config("sample-set size must be positive".into()));
            }
            return Ok(Self::KSampleSet(k));
        }
        Err(Error::Config(format!("unknown scheme '{s}' (expected loo or kset:K)")))
    }
}

/// Degrees of freedom used to build coefficients from a learning set of size `N`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum DofConvention {
    #[default]
    NMinusOne,
    N,
}

impl DofConvention {
    pub fn dof(&self, n_learn: usize) -> usize {
        match self {
            Self::NMinusOne => n_learn - 1,
            Self::N => n_learn,
        }
    }
}

impl fmt::Display for DofConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NMinusOne => "n-1",
            Self::N => "n",
        })
    }
}

impl FromStr for DofConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "n-1" => Ok(Self::NMinusOne),
            "n" => Ok(Self::N),
            other => Err(Error::Config(format!("unknown dof convention '{other}' (expected n-1 or n)"))),
        }
    }
}

/// Handling of a learning set whose scatter matrix is singular.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum SingularPolicy {
    /// Fail with [`Error::SingularScatter`].
    Error,
    /// Drop the group from that fold's candidates; its test points count as misclassified.
    #[default]
    Exclude,
}

impl fmt::Display for SingularPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Error => "error",
            Self::Exclude => "exclude",
        })
    }
}

impl FromStr for SingularPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "error" => Ok(Self::Error),
            "exclude" => Ok(Self::Exclude),
            other => Err(Error::Config(format!("unknown singular policy '{other}' (expected error or exclude)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    /// Block split used by MA1 and MA2.
    pub m: usize,
    pub dof: DofConvention,
    pub singular: SingularPolicy,
    /// Replicates for moments without an exact route.
    pub moment_reps: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            m: 1,
            dof: DofConvention::NMinusOne,
            singular: SingularPolicy::Exclude,
            moment_reps: DEFAULT_MOMENT_REPS,
            seed: 0,
        }
    }
}

/// Coefficients per `(estimator, dof)` for a fixed dimension.
#[derive(Clone, Debug)]
pub struct CoefficientCache {
    p: usize,
    m: usize,
    entries: BTreeMap<(EstimatorKind, usize), CoefficientVector>,
}

impl CoefficientCache {
    /// Builds coefficients for every `kind × dof` combination.
    pub fn build(p: usize, kinds: &[EstimatorKind], dofs: &[usize], cfg: &ClassifierConfig) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for &n in dofs {
            let table = if kinds.iter().any(|k| k.needs_moments()) {
                let stream = split_stream(&RandomStream::root(cfg.seed), n as u64);
                Some(moment_table(p, cfg.m, n, MomentPolicy::Auto, &McConfig::new(cfg.moment_reps, stream))?)
            } else {
                None
            };
            for &k in kinds {
                entries.insert((k, n), coeffs_for(k, p, cfg.m, n, table.as_ref())?);
            }
        }
        Ok(Self { p, m: cfg.m, entries })
    }

    pub fn get(&self, kind: EstimatorKind, n: usize) -> Result<&CoefficientVector> {
        self.entries
            .get(&(kind, n))
            .ok_or_else(|| Error::ContextMismatch(format!("no {kind} coefficients for p={}, m={}, n={n}", self.p, self.m)))
    }
}

/// Identifies a sample by group index and 1-based position within its group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct SampleId {
    pub group: usize,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    /// Labels of groups dropped for a singular learning set.
    pub excluded_groups: Vec<String>,
    pub trials: usize,
    pub correct: usize,
    pub ccp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvReport {
    pub scheme: CvScheme,
    pub estimator: EstimatorKind,
    pub dof: DofConvention,
    pub m: usize,
    pub folds: Vec<FoldReport>,
    pub total_trials: usize,
    pub total_correct: usize,
    /// Correct classification percentage over all trials.
    pub overall_ccp: f64,
    /// Mean of the per-fold percentages.
    pub average_ccp: f64,
    pub misclassified: Vec<SampleId>,
}

struct Fold {
    learn: Vec<Vec<usize>>,
    test: Vec<SampleId>,
}

fn folds(ds: &LabeledDataset, scheme: CvScheme) -> Result<Vec<Fold>> {
    let sizes: Vec<usize> = ds.groups.iter().map(|g| g.samples.len()).collect();
    match scheme {
        CvScheme::LeaveOneOut => Ok(sizes
            .iter()
            .enumerate()
            .flat_map(|(gi, &len)| (0..len).map(move |j| (gi, j)))
            .map(|(gi, j)| Fold {
                learn: sizes
                    .iter()
                    .enumerate()
                    .map(|(h, &len)| (0..len).filter(|&t| h != gi || t != j).collect())
                    .collect(),
                test: vec![SampleId { group: gi, index: j + 1 }],
            })
            .collect()),
        CvScheme::KSampleSet(k) => {
            if let Some((gi, _)) = sizes.iter().enumerate().find(|(_, &len)| len % k != 0) {
                return Err(Error::Config(format!(
                    "group '{}' has {} samples, not a multiple of {k}",
                    ds.groups[gi].label, sizes[gi]
                )));
            }
            let count = sizes.iter().map(|len| len / k).min().unwrap_or(0);
            if sizes.iter().any(|&len| len / k != count) {
                return Err(Error::Config("sample-set protocol needs equal group sizes".into()));
            }
            Ok((0..count)
                .map(|f| {
                    let range = f * k..(f + 1) * k;
                    Fold {
                        learn: sizes.iter().map(|_| range.clone().collect()).collect(),
                        test: sizes
                            .iter()
                            .enumerate()
                            .flat_map(|(gi, &len)| (0..len).map(move |j| (gi, j)))
                            .filter(|(_, j)| !range.contains(j))
                            .map(|(gi, j)| SampleId { group: gi, index: j + 1 })
                            .collect(),
                    }
                })
                .collect())
        }
    }
}

/// Learning-set sizes occurring under `scheme`.
pub fn learning_sizes(ds: &LabeledDataset, scheme: CvScheme) -> Result<Vec<usize>> {
    let mut sizes: Vec<usize> = folds(ds, scheme)?.iter().flat_map(|f| f.learn.iter().map(Vec::len)).collect();
    sizes.sort_unstable();
    sizes.dedup();
    Ok(sizes)
}

/// Runs `scheme` for every estimator in `kinds`, sharing folds and coefficients.
pub fn cross_validate_many(
    ds: &LabeledDataset,
    scheme: CvScheme,
    kinds: &[EstimatorKind],
    cfg: &ClassifierConfig,
) -> Result<Vec<CvReport>> {
    let p = ds.dim();
    if cfg.m == 0 || cfg.m >= p {
        return Err(Error::Config(format!("block split m={} must satisfy 1 <= m < p={p}", cfg.m)));
    }
    let folds = folds(ds, scheme)?;
    let mut dofs = Vec::new();
    for size in learning_sizes(ds, scheme)? {
        if size < 2 || cfg.dof.dof(size) < p {
            return Err(Error::InsufficientDof {
                n: if size == 0 { 0 } else { cfg.dof.dof(size) },
                p,
            });
        }
        dofs.push(cfg.dof.dof(size));
    }
    let cache = CoefficientCache::build(p, kinds, &dofs, cfg)?;

    // outcome[fold][kind] = (excluded groups, per-test-point correctness)
    let outcomes: Vec<Vec<(Vec<String>, Vec<bool>)>> = folds
        .par_iter()
        .map(|fold| {
            kinds
                .iter()
                .map(|&kind| {
                    let mut excluded = Vec::new();
                    let mut models = Vec::with_capacity(ds.groups.len());
                    for (g, idx) in ds.groups.iter().zip(&fold.learn) {
                        let samples: Vec<&DVector<f64>> = idx.iter().map(|&i| &g.samples[i]).collect();
                        match fit_group(&g.label, &samples, cache.get(kind, cfg.dof.dof(samples.len()))?) {
                            Ok(model) => models.push(Some(model)),
                            Err(Error::SingularScatter(label)) if cfg.singular == SingularPolicy::Exclude => {
                                excluded.push(label);
                                models.push(None);
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    let refs: Vec<Option<&GroupModel>> = models.iter().map(Option::as_ref).collect();
                    let hits = fold
                        .test
                        .iter()
                        .map(|id| Ok(classify_available(&ds.groups[id.group].samples[id.index - 1], &refs)? == id.group))
                        .collect::<Result<Vec<bool>>>()?;
                    Ok((excluded, hits))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    Ok(kinds
        .iter()
        .enumerate()
        .map(|(ki, &kind)| {
            let mut reports = Vec::with_capacity(folds.len());
            let mut misclassified = Vec::new();
            for (fi, fold) in folds.iter().enumerate() {
                let (excluded, hits) = &outcomes[fi][ki];
                let correct = hits.iter().filter(|h| **h).count();
                misclassified.extend(fold.test.iter().zip(hits).filter(|(_, h)| !**h).map(|(id, _)| *id));
                reports.push(FoldReport {
                    fold: fi + 1,
                    excluded_groups: excluded.clone(),
                    trials: hits.len(),
                    correct,
                    ccp: 100.0 * correct as f64 / hits.len() as f64,
                });
            }
            misclassified.sort_unstable();
            let total_trials: usize = reports.iter().map(|r| r.trials).sum();
            let total_correct: usize = reports.iter().map(|r| r.correct).sum();
            CvReport {
                scheme,
                estimator: kind,
                dof: cfg.dof,
                m: cfg.m,
                average_ccp: reports.iter().map(|r| r.ccp).sum::<f64>() / reports.len() as f64,
                overall_ccp: 100.0 * total_correct as f64 / total_trials as f64,
                folds: reports,
                total_trials,
                total_correct,
                misclassified,
            }
        })
        .collect())
}

/// Runs `scheme` for a single estimator.
pub fn cross_validate(ds: &LabeledDataset, scheme: CvScheme, kind: EstimatorKind, cfg: &ClassifierConfig) -> Result<CvReport> {
    Ok(cross_validate_many(ds, scheme, &[kind], cfg)?.remove(0))
}
