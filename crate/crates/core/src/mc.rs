//! Replicate-parallel Monte Carlo with results that do not depend on the number of
//! worker threads.
//!
//! Replicate `r` always draws from `split_stream(root, r)`. Replicates are grouped in
//! fixed-size chunks; each chunk is summed with compensated arithmetic and the chunk
//! totals are combined in chunk order.

use rayon::prelude::*;

use crate::error::Result;
use crate::sampling::{split_stream, RandomStream, StreamRng};

/// Replicates per work unit.
pub const CHUNK_SIZE: usize = 1024;

#[derive(Clone, Copy, Debug)]
pub struct McConfig {
    pub reps: usize,
    pub stream: RandomStream,
}

impl McConfig {
    pub fn new(reps: usize, stream: RandomStream) -> Self {
        Self { reps, stream }
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct CompSum {
    sum: f64,
    comp: f64,
}

impl CompSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Debug)]
struct Partial {
    count: usize,
    sum: Vec<CompSum>,
    sumsq: Vec<CompSum>,
}

impl Partial {
    fn new(width: usize) -> Self {
        Self {
            count: 0,
            sum: vec![CompSum::default(); width],
            sumsq: vec![CompSum::default(); width],
        }
    }
}

/// Means and sample variances of each output coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct McSummary {
    pub reps: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl McSummary {
    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Standard error of the mean of coordinate `k`.
    pub fn stderr(&self, k: usize) -> f64 {
        (self.variance[k].max(0.0) / self.reps as f64).sqrt()
    }

    /// `(mean − target) / stderr`; zero when both the deviation and the stderr vanish.
    pub fn z_score(&self, k: usize, target: f64) -> f64 {
        let dev = self.mean[k] - target;
        let se = self.stderr(k);
        if se == 0.0 {
            if dev == 0.0 {
                0.0
            } else {
                f64::INFINITY * dev.signum()
            }
        } else {
            dev / se
        }
    }

    /// Sample correlation of coordinates `x` and `y`, given that coordinate `xy` holds
    /// their product.
    pub fn correlation(&self, x: usize, y: usize, xy: usize) -> f64 {
        let n = self.reps as f64;
        let cov = (self.mean[xy] - self.mean[x] * self.mean[y]) * n / (n - 1.0);
        cov / (self.variance[x] * self.variance[y]).sqrt()
    }
}

/// Runs `cfg.reps` replicates of `f`, each writing `width` values into its output
/// slice, and summarizes them. The first error (in replicate order) is returned.
pub fn monte_carlo<F>(cfg: &McConfig, width: usize, f: F) -> Result<McSummary>
where
    F: Fn(&mut StreamRng, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = cfg.reps.div_ceil(CHUNK_SIZE);
    let partials: Vec<Result<Partial>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK_SIZE;
            let end = (start + CHUNK_SIZE).min(cfg.reps);
            let mut part = Partial::new(width);
            let mut out = vec![0.0; width];
            for r in start..end {
                let mut rng = split_stream(&cfg.stream, r as u64).rng();
                out.iter_mut().for_each(|x| *x = 0.0);
                f(&mut rng, &mut out)?;
                for (k, &x) in out.iter().enumerate() {
                    part.sum[k].add(x);
                    part.sumsq[k].add(x * x);
                }
                part.count += 1;
            }
            Ok(part)
        })
        .collect();

    let mut total = Partial::new(width);
    for part in partials {
        let part = part?;
        total.count += part.count;
        for k in 0..width {
            total.sum[k].add(part.sum[k].value());
            total.sumsq[k].add(part.sumsq[k].value());
        }
    }
    let n = total.count as f64;
    let mean: Vec<f64> = total.sum.iter().map(|s| s.value() / n).collect();
    let variance = if total.count > 1 {
        total
            .sumsq
            .iter()
            .zip(&mean)
            .map(|(ss, m)| ((ss.value() - n * m * m) / (n - 1.0)).max(0.0))
            .collect()
    } else {
        vec![0.0; width]
    };
    Ok(McSummary {
        reps: total.count,
        mean,
        variance,
    })
}
