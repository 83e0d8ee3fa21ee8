//! Batch means and confidence intervals.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Point estimate with standard error and a two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci_halfwidth: f64,
    pub dof: f64,
}

/// Two-sided Student-t quantile at the given confidence level.
pub fn t_quantile(level: f64, dof: f64) -> f64 {
    if !(dof >= 1.0) {
        return f64::INFINITY;
    }
    if dof > 1000.0 {
        // Cornish-Fisher expansion around the normal quantile; the t inverse
        // CDF loses accuracy at large dof.
        let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);
        let z3 = z * z * z;
        let z5 = z3 * z * z;
        return z + (z3 + z) / (4.0 * dof) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * dof * dof);
    }
    StudentsT::new(0.0, 1.0, dof)
        .map(|t| t.inverse_cdf(0.5 + 0.5 * level))
        .unwrap_or(f64::INFINITY)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with divisor `n - 1`; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Estimate from iid observations.
pub fn iid_estimate(xs: &[f64], level: f64) -> Estimate {
    let n = xs.len() as f64;
    let se = (sample_variance(xs) / n).sqrt();
    let dof = n - 1.0;
    Estimate {
        mean: mean(xs),
        std_error: se,
        ci_halfwidth: if xs.len() >= 2 {
            t_quantile(level, dof) * se
        } else {
            f64::INFINITY
        },
        dof,
    }
}

/// Pool per-replication batch-means estimates: the mean of the replication
/// means with `SE = sqrt(Σ SE_r²)/R`.
pub fn pool(parts: &[Estimate], level: f64) -> Estimate {
    let r = parts.len() as f64;
    let m = parts.iter().map(|e| e.mean).sum::<f64>() / r;
    let se = parts
        .iter()
        .map(|e| e.std_error * e.std_error)
        .sum::<f64>()
        .sqrt()
        / r;
    let dof: f64 = parts.iter().map(|e| e.dof).sum();
    Estimate {
        mean: m,
        std_error: se,
        ci_halfwidth: t_quantile(level, dof) * se,
        dof,
    }
}
