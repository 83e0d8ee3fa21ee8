//! Euler–Maruyama simulation of the controlled inventory process.
//!
//! Between orders `Z` follows `dZ = -μ(Z) dt - σ(Z) dW`. After each step the
//! policy sees the left limit `Z(t-)` and may order `ξ ≥ 0`, making
//! `Z(t) = Z(t-) + ξ`. Holding cost is integrated by the trapezoid rule and
//! order costs are charged at the jump instants.

mod policy;
mod reflected;
pub mod rng;
pub mod stats;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{HoldingCost, OrderingCost};
use crate::diffusion::DemandModel;
use crate::error::{Error, Result};

pub use policy::{
    make_ss_policy, truncate_policy, CoupledContext, DecisionContext, FnPolicy, ImpulsePolicy,
    NeverOrder, SsPolicy, TruncatedPolicy,
};
pub use reflected::{
    simulate_reflected, stationary_cdf, HistogramBin, ReflectedRun, ReflectionScheme,
};
pub use stats::Estimate;

use rng::{stream, Lane};

/// States beyond this magnitude are treated as divergence.
const STATE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub replications: usize,
    pub seed: u64,
    pub batch_count: usize,
    /// Each Brownian increment is the scaled sum of this many normals, so a
    /// run at `dt` with 2 substeps sees the same path as a run at `dt/2`.
    pub noise_substeps: usize,
    /// Record the path of replication 0 every this many steps.
    pub record_every: Option<usize>,
    pub confidence: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1e3,
            replications: 8,
            seed: 20_240_917,
            batch_count: 20,
            noise_substeps: 1,
            record_every: None,
            confidence: 0.95,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.dt.is_finite()
            && self.horizon.is_finite()
            && self.horizon >= 10.0 * self.dt
            && self.replications >= 1
            && self.batch_count >= 1
            && self.noise_substeps >= 1
            && self.record_every != Some(0)
            && self.confidence > 0.0
            && self.confidence < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "simulation config out of range: {self:?}"
            )))
        }
    }

    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    /// Time actually simulated, `steps·dt`.
    pub fn effective_horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    /// Same configuration with half the step and matching Brownian paths.
    pub fn refined(&self) -> Result<(SimConfig, SimConfig)> {
        self.check()?;
        let coarse = SimConfig {
            noise_substeps: 2 * self.noise_substeps,
            ..*self
        };
        let fine = SimConfig {
            dt: 0.5 * self.dt,
            ..*self
        };
        Ok((coarse, fine))
    }
}

/// Warnings about step sizes that are large relative to the model's time
/// scales.
pub fn step_warnings(model: &DemandModel, cfg: &SimConfig) -> Vec<String> {
    let mut out = Vec::new();
    let scale = (model.sigma_lo / model.mu_hi).powi(2);
    if cfg.dt > 0.01 * scale {
        out.push(format!(
            "dt = {} exceeds 1% of the drift/diffusion time scale σ̲²/μ̄² = {scale}",
            cfg.dt
        ));
    }
    if cfg.batch_count < 10 {
        out.push(format!(
            "batch_count = {} < 10; intervals are unreliable",
            cfg.batch_count
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderEvent {
    pub time: f64,
    pub quantity: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathPoint {
    pub time: f64,
    pub state: f64,
    pub cumulative_order: f64,
    pub cumulative_cost: f64,
}

/// Pooled outcome of a simulation run.
///
/// Totals are summed over replications; `order_events`, `path` and
/// `final_state` describe replication 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostTrace {
    pub policy: String,
    pub horizon: f64,
    pub replications: usize,
    pub holding_cost_integral: f64,
    pub order_cost_total: f64,
    pub order_count: u64,
    pub average_cost: f64,
    pub std_error: f64,
    pub ci_halfwidth: f64,
    pub replication_costs: Vec<f64>,
    pub replication_std_errors: Vec<f64>,
    pub final_state: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub order_events: Vec<OrderEvent>,
    #[serde(skip)]
    pub path: Vec<PathPoint>,
}

/// Brownian increments in units of `√dt`.
struct Noise {
    rng: ChaCha8Rng,
    substeps: usize,
    scale: f64,
}

impl Noise {
    fn new(cfg: &SimConfig, replication: u64) -> Self {
        Self {
            rng: stream(cfg.seed, replication, Lane::Noise),
            substeps: cfg.noise_substeps,
            scale: 1.0 / (cfg.noise_substeps as f64).sqrt(),
        }
    }

    #[inline]
    fn next(&mut self) -> f64 {
        if self.substeps == 1 {
            return StandardNormal.sample(&mut self.rng);
        }
        let mut sum = 0.0;
        for _ in 0..self.substeps {
            let n: f64 = StandardNormal.sample(&mut self.rng);
            sum += n;
        }
        sum * self.scale
    }
}

#[inline]
fn euler(model: &DemandModel, z: f64, dt: f64, sqrt_dt: f64, n: f64) -> f64 {
    z - model.mu(z) * dt - model.sigma(z) * sqrt_dt * n
}

fn check_state(z: f64, step: u64) -> Result<()> {
    if z.is_finite() && z.abs() <= STATE_LIMIT {
        Ok(())
    } else {
        Err(Error::Simulation {
            step,
            reason: format!("state diverged to {z}"),
        })
    }
}

fn check_order(q: f64, step: u64, label: &str) -> Result<()> {
    if q.is_finite() && q >= 0.0 {
        Ok(())
    } else {
        Err(Error::Simulation {
            step,
            reason: format!("policy {label} returned invalid order quantity {q}"),
        })
    }
}

/// Per-batch cost accumulation for one replication.
struct Batches {
    bounds: Vec<u64>,
    sums: Vec<f64>,
    current: usize,
    dt: f64,
}

impl Batches {
    fn new(steps: u64, count: usize, dt: f64) -> Self {
        let bounds = (1..=count as u64)
            .map(|b| b * steps / count as u64)
            .collect();
        Self {
            bounds,
            sums: vec![0.0; count],
            current: 0,
            dt,
        }
    }

    /// Charge `cost` to the batch containing step index `i` (0-based, the
    /// step ending at time `(i+1)·dt`).
    #[inline]
    fn add(&mut self, i: u64, cost: f64) {
        while self.current + 1 < self.bounds.len() && i >= self.bounds[self.current] {
            self.current += 1;
        }
        self.sums[self.current] += cost;
    }

    /// Average cost rate per batch.
    fn rates(&self) -> Vec<f64> {
        let mut prev = 0;
        self.bounds
            .iter()
            .zip(&self.sums)
            .map(|(&b, &s)| {
                let len = (b - prev) as f64 * self.dt;
                prev = b;
                s / len
            })
            .collect()
    }
}

struct Replication {
    holding: f64,
    order_cost: f64,
    orders: u64,
    batch_rates: Vec<f64>,
    final_state: f64,
    events: Vec<OrderEvent>,
    path: Vec<PathPoint>,
}

fn run_replication(
    model: &DemandModel,
    h: &HoldingCost,
    c: &OrderingCost,
    policy: &dyn ImpulsePolicy,
    cfg: &SimConfig,
    x0: f64,
    rep: u64,
) -> Result<Replication> {
    let steps = cfg.steps();
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let keep_detail = rep == 0;
    let label = policy.label();
    let mut noise = Noise::new(cfg, rep);
    let mut batches = Batches::new(steps, cfg.batch_count, dt);
    let mut out = Replication {
        holding: 0.0,
        order_cost: 0.0,
        orders: 0,
        batch_rates: Vec::new(),
        final_state: x0,
        events: Vec::new(),
        path: Vec::new(),
    };
    let mut cumulative_order = 0.0;

    let mut z = x0;
    let q0 = policy.decide(&DecisionContext::new(0.0, z));
    check_order(q0, 0, &label)?;
    if q0 > 0.0 {
        let cost = c.value(q0);
        z += q0;
        check_state(z, 0)?;
        out.order_cost += cost;
        out.orders += 1;
        batches.add(0, cost);
        cumulative_order += q0;
        if keep_detail {
            out.events.push(OrderEvent {
                time: 0.0,
                quantity: q0,
                cost,
            });
        }
    }
    if keep_detail && cfg.record_every.is_some() {
        out.path.push(PathPoint {
            time: 0.0,
            state: z,
            cumulative_order,
            cumulative_cost: out.order_cost,
        });
    }
    let mut hz = h.eval(z);
    for i in 0..steps {
        let zm = euler(model, z, dt, sqrt_dt, noise.next());
        check_state(zm, i + 1)?;
        let hm = h.eval(zm);
        let hold = 0.5 * (hz + hm) * dt;
        out.holding += hold;
        batches.add(i, hold);
        let t = (i + 1) as f64 * dt;
        let q = policy.decide(&DecisionContext::new(t, zm));
        check_order(q, i + 1, &label)?;
        z = zm;
        hz = hm;
        if q > 0.0 {
            let cost = c.value(q);
            z += q;
            check_state(z, i + 1)?;
            hz = h.eval(z);
            out.order_cost += cost;
            out.orders += 1;
            batches.add(i, cost);
            cumulative_order += q;
            if keep_detail {
                out.events.push(OrderEvent {
                    time: t,
                    quantity: q,
                    cost,
                });
            }
        }
        if keep_detail {
            if let Some(every) = cfg.record_every {
                if (i + 1) % every as u64 == 0 {
                    out.path.push(PathPoint {
                        time: t,
                        state: z,
                        cumulative_order,
                        cumulative_cost: out.holding + out.order_cost,
                    });
                }
            }
        }
    }
    out.final_state = z;
    out.batch_rates = batches.rates();
    Ok(out)
}

fn assemble(
    label: String,
    cfg: &SimConfig,
    reps: Vec<Replication>,
    warnings: Vec<String>,
) -> CostTrace {
    let horizon = cfg.effective_horizon();
    let parts: Vec<Estimate> = reps
        .iter()
        .map(|r| stats::iid_estimate(&r.batch_rates, cfg.confidence))
        .collect();
    let pooled = stats::pool(&parts, cfg.confidence);
    let replication_costs = reps
        .iter()
        .map(|r| (r.holding + r.order_cost) / horizon)
        .collect();
    let holding: f64 = reps.iter().map(|r| r.holding).sum();
    let order_cost: f64 = reps.iter().map(|r| r.order_cost).sum();
    let mut first = reps.into_iter().next().expect("at least one replication");
    CostTrace {
        policy: label,
        horizon,
        replications: parts.len(),
        holding_cost_integral: holding,
        order_cost_total: order_cost,
        order_count: 0,
        average_cost: (holding + order_cost) / (horizon * parts.len() as f64),
        std_error: pooled.std_error,
        ci_halfwidth: pooled.ci_halfwidth,
        replication_costs,
        replication_std_errors: parts.iter().map(|p| p.std_error).collect(),
        final_state: first.final_state,
        warnings,
        order_events: std::mem::take(&mut first.events),
        path: std::mem::take(&mut first.path),
    }
}

/// Simulate `policy` from `x0` and estimate its long-run average cost.
pub fn simulate(
    model: &DemandModel,
    h: &HoldingCost,
    c: &OrderingCost,
    policy: &dyn ImpulsePolicy,
    cfg: &SimConfig,
    x0: f64,
) -> Result<CostTrace> {
    cfg.check()?;
    if !x0.is_finite() {
        return Err(Error::Domain(format!(
            "initial state must be finite, got {x0}"
        )));
    }
    if policy.needs_coupling() {
        return Err(Error::Invalid(format!(
            "policy {} must be run with simulate_coupled",
            policy.label()
        )));
    }
    let reps: Result<Vec<Replication>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(model, h, c, policy, cfg, x0, r))
        .collect();
    let reps = reps?;
    let orders = reps.iter().map(|r| r.orders).sum();
    let mut trace = assemble(policy.label(), cfg, reps, step_warnings(model, cfg));
    trace.order_count = orders;
    Ok(trace)
}

/// Base and truncated runs on common noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledRun {
    pub j: f64,
    pub base: CostTrace,
    pub truncated: CostTrace,
    /// `average_cost(truncated) - average_cost(base)` from paired batches.
    pub gap: Estimate,
    /// Largest post-order level of the truncated process after any order.
    pub max_truncated_post_order: f64,
    /// Steps at which the Euler paths crossed and were merged.
    pub coalescences: u64,
}

struct CoupledReplication {
    base: Replication,
    trunc: Replication,
    gap_rates: Vec<f64>,
    max_post: f64,
    coalescences: u64,
}

fn run_coupled_replication(
    model: &DemandModel,
    h: &HoldingCost,
    c: &OrderingCost,
    base: &dyn ImpulsePolicy,
    trunc: &TruncatedPolicy,
    cfg: &SimConfig,
    x0: f64,
    rep: u64,
) -> Result<CoupledReplication> {
    let steps = cfg.steps();
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let label = base.label();
    let mut noise = Noise::new(cfg, rep);
    let mut bb = Batches::new(steps, cfg.batch_count, dt);
    let mut bt = Batches::new(steps, cfg.batch_count, dt);
    let empty = || Replication {
        holding: 0.0,
        order_cost: 0.0,
        orders: 0,
        batch_rates: Vec::new(),
        final_state: x0,
        events: Vec::new(),
        path: Vec::new(),
    };
    let (mut rb, mut rt) = (empty(), empty());
    let mut max_post = f64::NEG_INFINITY;
    let mut coalescences = 0;
    let keep = rep == 0;

    let (mut zb, mut zt) = (x0, x0);
    let mut prev_zt = x0;
    for i in 0..=steps {
        let t = i as f64 * dt;
        let (zbm, ztm) = if i == 0 {
            (zb, zt)
        } else {
            let n = noise.next();
            let zbm = euler(model, zb, dt, sqrt_dt, n);
            let mut ztm = euler(model, zt, dt, sqrt_dt, n);
            if zt <= zb && ztm > zbm {
                ztm = zbm;
                coalescences += 1;
            }
            check_state(zbm, i)?;
            check_state(ztm, i)?;
            let hb = 0.5 * (h.eval(zb) + h.eval(zbm)) * dt;
            let ht = 0.5 * (h.eval(zt) + h.eval(ztm)) * dt;
            rb.holding += hb;
            rt.holding += ht;
            bb.add(i - 1, hb);
            bt.add(i - 1, ht);
            (zbm, ztm)
        };
        let qb = base.decide(&DecisionContext::new(t, zbm));
        check_order(qb, i, &label)?;
        let zb_post = zbm + qb;
        check_state(zb_post, i)?;
        let crossed = i > 0 && prev_zt > 0.0 && ztm <= 0.0;
        let qt = trunc.order(ztm, crossed, qb, zb_post);
        check_order(qt, i, &trunc.label())?;
        let zt_post = ztm + qt;
        let batch = i.saturating_sub(1);
        for (q, r, b) in [(qb, &mut rb, &mut bb), (qt, &mut rt, &mut bt)] {
            if q > 0.0 {
                let cost = c.value(q);
                r.order_cost += cost;
                r.orders += 1;
                b.add(batch, cost);
                if keep {
                    r.events.push(OrderEvent {
                        time: t,
                        quantity: q,
                        cost,
                    });
                }
            }
        }
        if qt > 0.0 {
            max_post = max_post.max(zt_post);
        }
        let tol = 1e-9 * (1.0 + zb_post.abs());
        let ordered = if zt_post >= 0.0 {
            zt_post <= zb_post + tol
        } else {
            (zt_post - zb_post).abs() <= tol
        };
        if !ordered {
            return Err(Error::Coupling {
                step: i,
                truncated: zt_post,
                base: zb_post,
            });
        }
        zb = zb_post;
        zt = zt_post;
        prev_zt = zt_post;
    }
    rb.final_state = zb;
    rt.final_state = zt;
    rb.batch_rates = bb.rates();
    rt.batch_rates = bt.rates();
    let gap_rates = rt
        .batch_rates
        .iter()
        .zip(&rb.batch_rates)
        .map(|(a, b)| a - b)
        .collect();
    Ok(CoupledReplication {
        base: rb,
        trunc: rt,
        gap_rates,
        max_post,
        coalescences,
    })
}

/// Run `base` and its level-`j` truncation on the same Brownian increments,
/// checking at every step that `Z_j ≤ Z` while `Z_j ≥ 0` and `Z_j = Z` while
/// `Z_j < 0`.
pub fn simulate_coupled(
    model: &DemandModel,
    h: &HoldingCost,
    c: &OrderingCost,
    base: std::sync::Arc<dyn ImpulsePolicy>,
    j: f64,
    cfg: &SimConfig,
    x0: f64,
) -> Result<CoupledRun> {
    cfg.check()?;
    if !x0.is_finite() {
        return Err(Error::Domain(format!(
            "initial state must be finite, got {x0}"
        )));
    }
    let trunc = truncate_policy(base.clone(), j)?;
    let reps: Result<Vec<CoupledReplication>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| run_coupled_replication(model, h, c, base.as_ref(), &trunc, cfg, x0, r))
        .collect();
    let reps = reps?;
    let gap_parts: Vec<Estimate> = reps
        .iter()
        .map(|r| stats::iid_estimate(&r.gap_rates, cfg.confidence))
        .collect();
    let gap = stats::pool(&gap_parts, cfg.confidence);
    let max_post = reps
        .iter()
        .map(|r| r.max_post)
        .fold(f64::NEG_INFINITY, f64::max);
    let coalescences = reps.iter().map(|r| r.coalescences).sum();
    let base_orders = reps.iter().map(|r| r.base.orders).sum();
    let trunc_orders = reps.iter().map(|r| r.trunc.orders).sum();
    let (b, t): (Vec<Replication>, Vec<Replication>) =
        reps.into_iter().map(|r| (r.base, r.trunc)).unzip();
    let warnings = step_warnings(model, cfg);
    let mut base_trace = assemble(base.label(), cfg, b, warnings.clone());
    base_trace.order_count = base_orders;
    let mut trunc_trace = assemble(trunc.label(), cfg, t, warnings);
    trunc_trace.order_count = trunc_orders;
    Ok(CoupledRun {
        j,
        base: base_trace,
        truncated: trunc_trace,
        gap,
        max_truncated_post_order: max_post,
        coalescences,
    })
}

/// Simulated cycle statistics of an `(s, S)` policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleEstimate {
    pub cycles: usize,
    pub cycle_cost: Estimate,
    pub cycle_time: Estimate,
}

/// Repeated first passages from `S` down to `s`.
///
/// A passage is detected when the post-step value is `≤ s`, or when the
/// Brownian bridge between two values above `s` dips below it, which happens
/// with probability `exp(-2(z-s)(z'-s)/(σ²dt))`. Cycles unfinished at the
/// horizon are discarded.
pub fn regenerative_cycle_stats(
    model: &DemandModel,
    h: &HoldingCost,
    s: f64,
    big_s: f64,
    cfg: &SimConfig,
) -> Result<CycleEstimate> {
    cfg.check()?;
    make_ss_policy(s, big_s)?;
    let steps = cfg.steps();
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let per_rep: Result<Vec<Vec<(f64, f64)>>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            use rand::Rng;
            let mut noise = Noise::new(cfg, rep);
            let mut aux = stream(cfg.seed, rep, Lane::Aux);
            let mut cycles = Vec::new();
            let (mut z, mut cost, mut elapsed) = (big_s, 0.0, 0u64);
            let mut hz = h.eval(z);
            for i in 0..steps {
                let zm = euler(model, z, dt, sqrt_dt, noise.next());
                check_state(zm, i + 1)?;
                let hm = h.eval(zm);
                cost += 0.5 * (hz + hm) * dt;
                elapsed += 1;
                let hit = zm <= s || {
                    let s2 = model.sigma2(z);
                    let p = (-2.0 * (z - s) * (zm - s) / (s2 * dt)).exp();
                    aux.random::<f64>() < p
                };
                if hit {
                    cycles.push((cost, elapsed as f64 * dt));
                    z = big_s;
                    hz = h.eval(z);
                    cost = 0.0;
                    elapsed = 0;
                } else {
                    z = zm;
                    hz = hm;
                }
            }
            Ok(cycles)
        })
        .collect();
    let all: Vec<(f64, f64)> = per_rep?.into_iter().flatten().collect();
    if all.len() < cfg.batch_count.max(2) {
        return Err(Error::InsufficientData(format!(
            "{} complete cycles, need at least {}",
            all.len(),
            cfg.batch_count.max(2)
        )));
    }
    let costs: Vec<f64> = all.iter().map(|c| c.0).collect();
    let times: Vec<f64> = all.iter().map(|c| c.1).collect();
    Ok(CycleEstimate {
        cycles: all.len(),
        cycle_cost: stats::iid_estimate(&costs, cfg.confidence),
        cycle_time: stats::iid_estimate(&times, cfg.confidence),
    })
}
