//! Long-run average cost of `(s, S)` policies.
//!
//! Starting from `S`, the expected holding cost and expected length of one
//! cycle down to `s` are `∫_s^S g` and `∫_s^S ℓ`, so by renewal-reward
//!
//! ```text
//! α(s, S) = (∫_s^S g + c(S - s)) / ∫_s^S ℓ.
//! ```
//!
//! [`CycleKernel`] tabulates `g`, `ℓ` and their antiderivatives `G`, `L` on a
//! grid once; afterwards each evaluation of `α` is a pair of table lookups.
//! Tails are propagated down the grid with
//! `T(z_k) = ∫_{z_k}^{z_{k+1}} w σ⁻² e^{-I(z_k,·)} + e^{-I(z_k,z_{k+1})} T(z_{k+1})`,
//! which only ever multiplies by factors below one. Inside a cell `G` is the
//! quintic Hermite interpolant of `(G, g, g')` at the two ends.

use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{HoldingCost, OrderingCost};
use crate::diffusion::{DemandModel, Kernel, KernelOptions, KernelValues, Tails};
use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// Cells beyond this count are refused rather than silently built.
const MAX_CELLS: usize = 400_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    pub s: f64,
    #[serde(rename = "S")]
    pub big_s: f64,
    pub cycle_cost: f64,
    pub cycle_time: f64,
    pub order_cost: f64,
    pub alpha: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy)]
struct Knot {
    z: f64,
    tails: Tails,
    g_prime: f64,
    ell_prime: f64,
    /// `∫_{z_0}^{z} (g, ℓ)`.
    big_g: f64,
    big_l: f64,
}

#[derive(Debug, Clone)]
struct Table {
    knots: Vec<Knot>,
}

/// `g`, `ℓ` and cycle functionals for one `(model, h)` pair, optionally
/// backed by a precomputed table.
#[derive(Debug, Clone)]
pub struct CycleKernel {
    model: DemandModel,
    h: HoldingCost,
    opts: KernelOptions,
    step: f64,
    table: Option<Table>,
}

fn check_pair(s: f64, big_s: f64) -> Result<()> {
    if !(s.is_finite() && big_s.is_finite()) {
        return Err(Error::Domain(format!(
            "policy levels must be finite, got ({s}, {big_s})"
        )));
    }
    if s >= big_s {
        return Err(Error::Domain(format!(
            "need s < S, got s = {s}, S = {big_s}"
        )));
    }
    Ok(())
}

/// Quintic Hermite interpolant of `F` on `[0, 1]` scaled to width `d`.
#[inline]
fn hermite5(t: f64, d: f64, f0: [f64; 3], f1: [f64; 3]) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h5 = 0.5 * t3 - t4 + 0.5 * t5;
    h0 * f0[0]
        + d * h1 * f0[1]
        + d * d * h2 * f0[2]
        + h3 * f1[0]
        + d * h4 * f1[1]
        + d * d * h5 * f1[2]
}

/// Tails at every grid point and cumulative integrals of `(g, ℓ)` from
/// `xs[0]`. `xs` must be strictly increasing with at least two points.
fn build_segment(k: &Kernel<'_>, xs: &[f64]) -> Result<Vec<Knot>> {
    let n = xs.len();
    let mut tails = vec![
        Tails {
            speed: 0.0,
            cost: 0.0
        };
        n
    ];
    tails[n - 1] = k.tail(xs[n - 1])?;
    for i in (0..n - 1).rev() {
        let (p, e) = k.panel(xs[i], xs[i + 1])?;
        let f = (-e).exp();
        tails[i] = Tails {
            speed: p[0] + f * tails[i + 1].speed,
            cost: p[1] + f * tails[i + 1].cost,
        };
    }
    let cells: Vec<Result<[f64; 2]>> = (0..n - 1)
        .into_par_iter()
        .map(|i| cell_integral(k, xs[i], xs[i + 1], &tails[i + 1]))
        .collect();
    let mut knots = Vec::with_capacity(n);
    let (mut big_g, mut big_l) = (0.0, 0.0);
    for i in 0..n {
        if i > 0 {
            let c = cells[i - 1].as_ref().map_err(Clone::clone)?;
            big_g += c[0];
            big_l += c[1];
        }
        let (gp, lp) = k.derivatives(xs[i], &tails[i]);
        knots.push(Knot {
            z: xs[i],
            tails: tails[i],
            g_prime: gp,
            ell_prime: lp,
            big_g,
            big_l,
        });
    }
    Ok(knots)
}

/// Tails at `u ∈ [lo, hi]` given the tails at `hi`.
fn tails_below(k: &Kernel<'_>, u: f64, hi: f64, top: &Tails) -> Result<Tails> {
    if u == hi {
        return Ok(*top);
    }
    let (p, e) = k.panel(u, hi)?;
    let f = (-e).exp();
    Ok(Tails {
        speed: p[0] + f * top.speed,
        cost: p[1] + f * top.cost,
    })
}

fn cell_integral(k: &Kernel<'_>, lo: f64, hi: f64, top: &Tails) -> Result<[f64; 2]> {
    let mut failure = None;
    let est = integrate(
        |u| match tails_below(k, u, hi, top) {
            Ok(t) => [t.g(), t.ell()],
            Err(e) => {
                failure.get_or_insert(e);
                [0.0, 0.0]
            }
        },
        lo,
        hi,
        &k.opts.tol,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(est.value)
}

impl CycleKernel {
    pub fn new(model: &DemandModel, h: &HoldingCost) -> Self {
        Self::with_options(model, h, KernelOptions::default())
    }

    pub fn with_options(model: &DemandModel, h: &HoldingCost, opts: KernelOptions) -> Self {
        let step = 0.05 / model.max_rate().max(1.0);
        Self {
            model: model.clone(),
            h: h.clone(),
            opts,
            step,
            table: None,
        }
    }

    /// Grid spacing used for tables and for building cycle integrals.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn with_step(mut self, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Invalid(format!(
                "table step must be positive, got {step}"
            )));
        }
        self.step = step;
        self.table = None;
        Ok(self)
    }

    pub fn model(&self) -> &DemandModel {
        &self.model
    }

    pub fn holding(&self) -> &HoldingCost {
        &self.h
    }

    pub fn options(&self) -> &KernelOptions {
        &self.opts
    }

    fn kernel(&self) -> Kernel<'_> {
        Kernel::new(&self.model, Some(&self.h), &self.opts)
    }

    /// Grid covering `[lo, hi]`: multiples of the step plus kinks of `μ`, `σ`.
    fn grid(&self, lo: f64, hi: f64, aligned: bool) -> Result<Vec<f64>> {
        let step = self.step;
        let cells = ((hi - lo) / step).ceil();
        if !(cells.is_finite()) || cells as usize > MAX_CELLS {
            return Err(Error::Resolution(format!(
                "range [{lo}, {hi}] needs {cells} cells of width {step}"
            )));
        }
        let mut xs: Vec<f64> = if aligned {
            let k0 = (lo / step).floor() as i64;
            let k1 = (hi / step).ceil() as i64;
            (k0..=k1).map(|k| k as f64 * step).collect()
        } else {
            let n = (cells as usize).max(1);
            let d = (hi - lo) / n as f64;
            let mut v: Vec<f64> = (0..n).map(|i| lo + i as f64 * d).collect();
            v.push(hi);
            v
        };
        let (a, b) = (xs[0], *xs.last().unwrap());
        let extra: Vec<f64> = self
            .model
            .kinks
            .iter()
            .chain(self.h.kinks())
            .copied()
            .filter(|x| *x > a && *x < b)
            .collect();
        xs.extend(extra);
        xs.sort_by(f64::total_cmp);
        let min_gap = step * 1e-6;
        xs.dedup_by(|x, prev| (*x - *prev).abs() < min_gap);
        if xs.len() < 2 {
            xs = vec![lo, hi];
        }
        Ok(xs)
    }

    /// Tabulate over (at least) `[lo, hi]`.
    pub fn tabulate(&mut self, lo: f64, hi: f64) -> Result<()> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Domain(format!(
                "table range must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        let xs = self.grid(lo, hi, true)?;
        let knots = build_segment(&self.kernel(), &xs)?;
        self.table = Some(Table { knots });
        Ok(())
    }

    pub fn tabulated(mut self, lo: f64, hi: f64) -> Result<Self> {
        self.tabulate(lo, hi)?;
        Ok(self)
    }

    pub fn table_range(&self) -> Option<(f64, f64)> {
        self.table
            .as_ref()
            .map(|t| (t.knots[0].z, t.knots[t.knots.len() - 1].z))
    }

    fn covers(&self, lo: f64, hi: f64) -> Option<&Table> {
        self.table
            .as_ref()
            .filter(|t| lo >= t.knots[0].z && hi <= t.knots[t.knots.len() - 1].z)
    }

    fn tails(&self, z: f64) -> Result<Tails> {
        if let Some(t) = self.covers(z, z) {
            let i = t.knots.partition_point(|k| k.z < z);
            let top = &t.knots[i];
            if top.z == z {
                return Ok(top.tails);
            }
            return tails_below(&self.kernel(), z, top.z, &top.tails);
        }
        self.kernel().tail(z)
    }

    /// `(g(z), ℓ(z))`.
    pub fn g_ell(&self, z: f64) -> Result<(f64, f64)> {
        let t = self.tails(z)?;
        Ok((t.g(), t.ell()))
    }

    /// `(g, ℓ, g', ℓ')` at `z`.
    pub fn g_ell_prime(&self, z: f64) -> Result<[f64; 4]> {
        let t = self.tails(z)?;
        let (gp, lp) = self.kernel().derivatives(z, &t);
        Ok([t.g(), t.ell(), gp, lp])
    }

    /// Full kernel record at `z`.
    pub fn values(&self, z: f64) -> Result<KernelValues> {
        let k = self.kernel();
        let t = self.tails(z)?;
        let (gp, lp) = k.derivatives(z, &t);
        let phi = k.exponent(self.model.ref_point, z)?;
        Ok(KernelValues {
            z,
            scale_density: phi.exp(),
            speed_density: (-phi).exp() / self.model.sigma2(z),
            tail_speed: (-phi).exp() * t.speed,
            tail_cost: (-phi).exp() * t.cost,
            g: t.g(),
            ell: t.ell(),
            g_prime: gp,
            ell_prime: lp,
        })
    }

    /// Table antiderivatives `(G(z), L(z))` relative to the first knot; `None`
    /// outside the table.
    pub fn antiderivatives(&self, z: f64) -> Option<(f64, f64)> {
        let t = self.covers(z, z)?;
        let knots = &t.knots;
        let i = knots
            .partition_point(|k| k.z <= z)
            .clamp(1, knots.len() - 1);
        let (a, b) = (&knots[i - 1], &knots[i]);
        if z == a.z {
            return Some((a.big_g, a.big_l));
        }
        if z == b.z {
            return Some((b.big_g, b.big_l));
        }
        let d = b.z - a.z;
        let tt = (z - a.z) / d;
        let gg = hermite5(
            tt,
            d,
            [a.big_g, a.tails.g(), a.g_prime],
            [b.big_g, b.tails.g(), b.g_prime],
        );
        let ll = hermite5(
            tt,
            d,
            [a.big_l, a.tails.ell(), a.ell_prime],
            [b.big_l, b.tails.ell(), b.ell_prime],
        );
        Some((gg, ll))
    }

    /// `(∫_s^S g, ∫_s^S ℓ)`: expected holding cost and expected length of a
    /// cycle from `S` down to `s`.
    pub fn cycle_stats(&self, s: f64, big_s: f64) -> Result<(f64, f64)> {
        check_pair(s, big_s)?;
        if let (Some(lo), Some(hi)) = (self.antiderivatives(s), self.antiderivatives(big_s)) {
            return Ok((hi.0 - lo.0, hi.1 - lo.1));
        }
        let xs = self.grid(s, big_s, false)?;
        let knots = build_segment(&self.kernel(), &xs)?;
        let last = knots[knots.len() - 1];
        Ok((last.big_g, last.big_l))
    }

    pub fn gamma(&self, s: f64, big_s: f64) -> Result<f64> {
        let (cost, time) = self.cycle_stats(s, big_s)?;
        Ok(cost / time)
    }

    pub fn alpha(&self, c: &OrderingCost, s: f64, big_s: f64) -> Result<PolicyEvaluation> {
        let (cycle_cost, cycle_time) = self.cycle_stats(s, big_s)?;
        let order_cost = c.eval(big_s - s)?;
        Ok(PolicyEvaluation {
            s,
            big_s,
            cycle_cost,
            cycle_time,
            order_cost,
            alpha: (cycle_cost + order_cost) / cycle_time,
            gamma: cycle_cost / cycle_time,
        })
    }
}

/// `(expected cycle cost, expected cycle time)` of the `(s, S)` policy.
pub fn cycle_stats(model: &DemandModel, h: &HoldingCost, s: f64, big_s: f64) -> Result<(f64, f64)> {
    CycleKernel::new(model, h).cycle_stats(s, big_s)
}

pub fn alpha(
    model: &DemandModel,
    h: &HoldingCost,
    c: &OrderingCost,
    s: f64,
    big_s: f64,
) -> Result<PolicyEvaluation> {
    CycleKernel::new(model, h).alpha(c, s, big_s)
}

pub fn gamma(model: &DemandModel, h: &HoldingCost, s: f64, big_s: f64) -> Result<f64> {
    CycleKernel::new(model, h).gamma(s, big_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_g(z: f64) -> f64 {
        if z >= 0.0 {
            z + 1.0
        } else {
            2.0 * z.exp() - z - 1.0
        }
    }

    fn exact_big_g(z: f64) -> f64 {
        if z >= 0.0 {
            0.5 * z * z + z
        } else {
            2.0 * z.exp() - 0.5 * z * z - z - 2.0
        }
    }

    #[test]
    fn hermite_reproduces_quintics() {
        let f = |x: f64| 1.0 + 2.0 * x - x * x + 0.5 * x.powi(3) + 3.0 * x.powi(4) - x.powi(5);
        let df = |x: f64| 2.0 - 2.0 * x + 1.5 * x * x + 12.0 * x.powi(3) - 5.0 * x.powi(4);
        let ddf = |x: f64| -2.0 + 3.0 * x + 36.0 * x * x - 20.0 * x.powi(3);
        let (a, b) = (0.3, 1.1);
        let d = b - a;
        for i in 0..=10 {
            let x = a + d * i as f64 / 10.0;
            let v = hermite5((x - a) / d, d, [f(a), df(a), ddf(a)], [f(b), df(b), ddf(b)]);
            assert!((v - f(x)).abs() < 1e-13, "x = {x}");
        }
    }

    #[test]
    fn baseline_examples() {
        let m = DemandModel::baseline();
        let h = HoldingCost::absolute();
        let c = OrderingCost::fixed(1.0).unwrap();
        let (cost, time) = cycle_stats(&m, &h, 0.0, 2.0).unwrap();
        assert!((cost - 4.0).abs() < 1e-9);
        assert!((time - 2.0).abs() < 1e-9);
        let root2 = std::f64::consts::SQRT_2;
        let e = alpha(&m, &h, &c, 0.0, root2).unwrap();
        assert!((e.alpha - (1.0 + root2)).abs() < 1e-9);
        assert!((gamma(&m, &h, 0.0, 2.0).unwrap() - 2.0).abs() < 1e-9);
        assert!(matches!(alpha(&m, &h, &c, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn table_matches_closed_form_between_knots() {
        let m = DemandModel::baseline();
        let h = HoldingCost::absolute();
        let k = CycleKernel::new(&m, &h).tabulated(-6.0, 6.0).unwrap();
        let (g0, _) = k.antiderivatives(-6.0).unwrap();
        for i in 0..=240 {
            let z = -5.9 + i as f64 * 0.049_37;
            let (gz, lz) = k.antiderivatives(z).unwrap();
            let expect = exact_big_g(z) - exact_big_g(-6.0);
            assert!(
                (gz - g0 - expect).abs() < 1e-9,
                "G at {z}: {} vs {expect}",
                gz - g0
            );
            let (g, ell) = k.g_ell(z).unwrap();
            assert!((g - exact_g(z)).abs() < 1e-9 * exact_g(z).max(1.0));
            assert!((ell - 1.0).abs() < 1e-9);
            let _ = lz;
        }
    }

    #[test]
    fn table_and_direct_agree() {
        let m = DemandModel::new(
            crate::diffusion::Coefficient::Tanh {
                base: 1.0,
                amplitude: 0.5,
                center: 0.0,
                scale: 1.0,
            },
            crate::diffusion::Coefficient::Constant(std::f64::consts::SQRT_2),
            (0.5, 1.5),
            (std::f64::consts::SQRT_2, std::f64::consts::SQRT_2),
        )
        .unwrap();
        let h = HoldingCost::absolute();
        let direct = CycleKernel::new(&m, &h);
        let table = direct.clone().tabulated(-4.0, 4.0).unwrap();
        for (s, big_s) in [(-1.3, 0.7), (-3.9, 3.9), (0.01, 0.02)] {
            let a = direct.cycle_stats(s, big_s).unwrap();
            let b = table.cycle_stats(s, big_s).unwrap();
            assert!((a.0 - b.0).abs() < 1e-9 * a.0.abs().max(1.0));
            assert!((a.1 - b.1).abs() < 1e-9 * a.1.abs().max(1.0));
        }
    }
}
