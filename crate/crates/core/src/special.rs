//! Chi-square and normal distribution functions, and `E[log χ²_k]`.

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `E[log χ²_k] = ψ(k/2) + ln 2`, evaluated by the digamma recurrence from `ψ(1)` or `ψ(1/2)`.
pub fn elog_chi2(k: usize) -> f64 {
    assert!(k >= 1, "chi-square dof must be at least 1");
    let ln2 = std::f64::consts::LN_2;
    let half = k as f64 / 2.0;
    let (base, start) = if k.is_multiple_of(2) {
        (-EULER_GAMMA, 1.0)
    } else {
        (-EULER_GAMMA - 2.0 * ln2, 0.5)
    };
    // ψ(x + 1) = ψ(x) + 1/x; summed from the smallest term upward
    let steps = (half - start).round() as usize;
    let tail: f64 = (0..steps).rev().map(|j| 1.0 / (start + j as f64)).sum();
    base + tail + ln2
}

pub fn chi2_cdf(k: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(k / 2.0, x / 2.0)
    }
}

fn chi2_pdf(k: f64, x: f64) -> f64 {
    let a = k / 2.0;
    ((a - 1.0) * x.ln() - x / 2.0 - a * std::f64::consts::LN_2 - ln_gamma(a)).exp()
}

fn check_prob(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability must lie in (0, 1), got {q}")))
    }
}

/// Lower `q` quantile of `χ²_k`: Wilson–Hilferty start, then safeguarded Newton.
pub fn chi2_quantile(k: f64, q: f64) -> Result<f64> {
    check_prob(q)?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!("chi-square dof must be positive, got {k}")));
    }
    let z = normal_quantile(q)?;
    let h = 2.0 / (9.0 * k);
    let wh = k * (1.0 - h + z * h.sqrt()).powi(3);

    let (mut lo, mut hi) = (0.0_f64, k.max(1.0));
    while chi2_cdf(k, hi) < q {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = if wh > lo && wh < hi { wh } else { 0.5 * (lo + hi) };
    for _ in 0..300 {
        let f = chi2_cdf(k, x) - q;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = chi2_pdf(k, x);
        let newton = x - f / pdf;
        let next = if pdf > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Lower `q` quantile of the standard normal: rational-approximation inverse of `erfc`
/// followed by one Newton step.
pub fn normal_quantile(q: f64) -> Result<f64> {
    check_prob(q)?;
    if q == 0.5 {
        return Ok(0.0);
    }
    let x0 = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * q);
    let pdf = (-0.5 * x0 * x0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if pdf > 0.0 {
        Ok(x0 - (normal_cdf(x0) - q) / pdf)
    } else {
        Ok(x0)
    }
}
