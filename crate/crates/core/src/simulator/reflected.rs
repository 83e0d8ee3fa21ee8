//! The uncontrolled process reflected at a lower barrier, used to check the
//! speed measure against simulation.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::rng::{stream, Lane};
use super::stats::{self, Estimate};
use super::{check_state, euler, Noise, SimConfig};
use crate::diffusion::{DemandModel, Kernel, KernelOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ReflectionScheme {
    /// Reflect using the sampled minimum of the Brownian bridge over the
    /// step, which removes the `O(√dt)` boundary bias of projection.
    #[default]
    BridgeMinimum,
    /// `max(z_b, z + Δ)`.
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    /// Fraction of simulated time spent in the bin.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectedRun {
    pub barrier: f64,
    pub scheme: ReflectionScheme,
    pub histogram: Vec<HistogramBin>,
    /// Time spent above the histogram range.
    pub mass_above: f64,
    pub mean: Estimate,
    /// Largest gap between empirical and stationary CDFs over the bin edges.
    pub ks_distance: f64,
    pub ks_at: f64,
}

/// Stationary CDF of the process reflected at `barrier`,
/// `1 - e^{-I(b, z)} T(z) / T(b)` with `T(z) = ∫_z^∞ σ⁻² e^{-I(z,·)}`.
pub fn stationary_cdf(model: &DemandModel, barrier: f64, z: f64) -> Result<f64> {
    if z <= barrier {
        return Ok(0.0);
    }
    let opts = KernelOptions::default();
    let k = Kernel::new(model, None, &opts);
    let tb = k.tail(barrier)?.speed;
    let tz = k.tail(z)?.speed;
    Ok(1.0 - (-k.exponent(barrier, z)?).exp() * tz / tb)
}

/// Bin counts, steps above the range and batch means of one replication.
type Occupancy = (Vec<u64>, u64, Vec<f64>);

fn reflect(scheme: ReflectionScheme, z: f64, step: f64, barrier: f64, s2dt: f64, u: f64) -> f64 {
    match scheme {
        ReflectionScheme::Projection => (z + step).max(barrier),
        ReflectionScheme::BridgeMinimum => {
            // Minimum of the bridge from 0 to `step` with variance `s2dt`.
            let m = 0.5 * (step - (step * step - 2.0 * s2dt * u.ln()).sqrt());
            (z + step).max(barrier + step - m)
        }
    }
}

/// Simulate the process reflected at `barrier` from `x0` and compare its
/// occupation measure with [`stationary_cdf`] on `bins` equal cells of
/// `[barrier, barrier + span]`.
pub fn simulate_reflected(
    model: &DemandModel,
    barrier: f64,
    cfg: &SimConfig,
    x0: f64,
    span: f64,
    bins: usize,
    scheme: ReflectionScheme,
) -> Result<ReflectedRun> {
    cfg.check()?;
    if !(x0.is_finite() && x0 >= barrier) {
        return Err(Error::Domain(format!(
            "initial state {x0} below barrier {barrier}"
        )));
    }
    if !(span > 0.0 && span.is_finite()) || bins == 0 {
        return Err(Error::Invalid(format!(
            "histogram needs span > 0 and bins > 0, got {span}, {bins}"
        )));
    }
    let steps = cfg.steps();
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let width = span / bins as f64;
    let per_rep: Result<Vec<Occupancy>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut noise = Noise::new(cfg, rep);
            let mut aux = stream(cfg.seed, rep, Lane::Aux);
            let mut counts = vec![0u64; bins];
            let mut above = 0u64;
            let batch_len = (steps / cfg.batch_count as u64).max(1);
            let mut batch_means = Vec::with_capacity(cfg.batch_count);
            let mut sum = 0.0;
            let mut in_batch = 0u64;
            let mut z = x0;
            for i in 0..steps {
                let free = euler(model, z, dt, sqrt_dt, noise.next());
                let u: f64 = 1.0 - aux.random::<f64>();
                z = reflect(scheme, z, free - z, barrier, model.sigma2(z) * dt, u);
                check_state(z, i + 1)?;
                let k = ((z - barrier) / width) as usize;
                if k < bins {
                    counts[k] += 1;
                } else {
                    above += 1;
                }
                sum += z;
                in_batch += 1;
                if in_batch == batch_len && batch_means.len() < cfg.batch_count {
                    batch_means.push(sum / in_batch as f64);
                    sum = 0.0;
                    in_batch = 0;
                }
            }
            Ok((counts, above, batch_means))
        })
        .collect();
    let per_rep = per_rep?;
    let total = (steps * cfg.replications as u64) as f64;
    let mut counts = vec![0u64; bins];
    let mut above = 0;
    let mut parts = Vec::new();
    for (c, a, means) in &per_rep {
        for (acc, x) in counts.iter_mut().zip(c) {
            *acc += x;
        }
        above += a;
        parts.push(stats::iid_estimate(means, cfg.confidence));
    }
    let mean = stats::pool(&parts, cfg.confidence);
    let histogram: Vec<HistogramBin> = counts
        .iter()
        .enumerate()
        .map(|(k, &n)| HistogramBin {
            bin_left: barrier + k as f64 * width,
            bin_right: barrier + (k + 1) as f64 * width,
            mass: n as f64 / total,
        })
        .collect();
    let mut ks: f64 = 0.0;
    let mut ks_at = barrier;
    let mut cum = 0.0;
    for bin in &histogram {
        cum += bin.mass;
        let d = (cum - stationary_cdf(model, barrier, bin.bin_right)?).abs();
        if d > ks {
            ks = d;
            ks_at = bin.bin_right;
        }
    }
    Ok(ReflectedRun {
        barrier,
        scheme,
        histogram,
        mass_above: above as f64 / total,
        mean,
        ks_distance: ks,
        ks_at,
    })
}
