//! Search for the `(s, S)` pair minimizing `α(s, S)`.
//!
//! The search runs over `(s, Δ)` with `Δ = S - s`. It first brackets the
//! minimizer in `[-B1, B1]` with `Δ ≥ B2`, then evaluates a uniform grid and
//! repeatedly refines windows around the best few points. No derivatives are
//! used since `c` may jump; the `Δ` grids always contain the breakpoints of
//! `c` and their immediate neighbours on both sides.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{HoldingCost, OrderingCost};
use crate::diffusion::DemandModel;
use crate::error::{Error, Result};
use crate::policy::CycleKernel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Points per axis of the coarse grid.
    pub coarse_n: usize,
    /// Points per axis of each refinement window.
    pub refine_n: usize,
    pub pitch_tol: f64,
    pub b1_init: f64,
    pub b1_cap: f64,
    pub b2_floor: f64,
    /// Number of incumbents refined in parallel.
    pub candidates: usize,
    /// Shell grid points per `B1` of length.
    pub shell_n: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            coarse_n: 41,
            refine_n: 11,
            pitch_tol: 1e-6,
            b1_init: 1.0,
            b1_cap: 1e3,
            b2_floor: 1e-6,
            candidates: 3,
            shell_n: 16,
        }
    }
}

impl OptimizerOptions {
    fn check(&self) -> Result<()> {
        let ok = self.coarse_n >= 3
            && self.refine_n >= 3
            && self.candidates >= 1
            && self.shell_n >= 2
            && self.pitch_tol > 0.0
            && self.b1_init > 0.0
            && self.b1_cap >= self.b1_init
            && self.b2_floor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "optimizer options out of range: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub b1: f64,
    pub b2: f64,
    /// Best `α` on the interior coarse grid at the accepted `B1`.
    pub best_alpha: f64,
    /// Smallest `γ` on the shell at the accepted `B1`.
    pub shell_min_gamma: f64,
    pub doublings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GridStats {
    pub evaluations: usize,
    pub coarse_evaluations: usize,
    pub refinement_rounds: usize,
    pub final_pitch: f64,
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub round: usize,
    pub s: f64,
    #[serde(rename = "S")]
    pub big_s: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub s_star: f64,
    #[serde(rename = "S_star")]
    pub big_s_star: f64,
    pub alpha_star: f64,
    pub bracket: Bracket,
    pub grid_stats: GridStats,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

/// Exact lexicographic order on `(α, Δ, |s|)`.
fn rank(a: &TracePoint, b: &TracePoint) -> Ordering {
    a.alpha
        .total_cmp(&b.alpha)
        .then((a.big_s - a.s).total_cmp(&(b.big_s - b.s)))
        .then(a.s.abs().total_cmp(&b.s.abs()))
}

/// Best point, treating `α` values within a relative `1e-14` as tied and then
/// preferring the smallest `Δ`, then the smallest `|s|`.
fn pick(points: &[TracePoint]) -> Option<TracePoint> {
    let min = points.iter().map(|p| p.alpha).fold(f64::INFINITY, f64::min);
    let tol = 1e-14 * min.abs().max(1.0);
    points
        .iter()
        .filter(|p| p.alpha <= min + tol)
        .min_by(|a, b| {
            (a.big_s - a.s)
                .total_cmp(&(b.big_s - b.s))
                .then(a.s.abs().total_cmp(&b.s.abs()))
        })
        .copied()
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// `b` and the neighbouring floats on either side.
fn around(b: f64) -> [f64; 3] {
    [
        b * (1.0 - 4.0 * f64::EPSILON),
        b,
        b * (1.0 + 4.0 * f64::EPSILON),
    ]
}

/// Bracketing and grid search over one `(model, h, c)` problem.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kernel: CycleKernel,
    cost: OrderingCost,
    opts: OptimizerOptions,
}

impl Optimizer {
    pub fn new(
        model: &DemandModel,
        h: &HoldingCost,
        c: &OrderingCost,
        opts: OptimizerOptions,
    ) -> Result<Self> {
        opts.check()?;
        Ok(Self {
            kernel: CycleKernel::new(model, h),
            cost: c.clone(),
            opts,
        })
    }

    pub fn from_kernel(
        kernel: CycleKernel,
        c: &OrderingCost,
        opts: OptimizerOptions,
    ) -> Result<Self> {
        opts.check()?;
        Ok(Self {
            kernel,
            cost: c.clone(),
            opts,
        })
    }

    pub fn kernel(&self) -> &CycleKernel {
        &self.kernel
    }

    fn evaluate(&self, round: usize, pairs: &[(f64, f64)]) -> Result<Vec<TracePoint>> {
        pairs
            .par_iter()
            .map(|&(s, big_s)| {
                let e = self.kernel.alpha(&self.cost, s, big_s)?;
                Ok(TracePoint {
                    round,
                    s,
                    big_s,
                    alpha: e.alpha,
                })
            })
            .collect()
    }

    fn min_gamma(&self, pairs: &[(f64, f64)]) -> Result<f64> {
        let values: Result<Vec<f64>> = pairs
            .par_iter()
            .map(|&(s, big_s)| self.kernel.gamma(s, big_s))
            .collect();
        Ok(values?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Find `B1` by doubling and `B2` from the uniform bound
    /// `α(s, s+Δ') ≥ inf_{(0,Δ]} c / (Δ ℓ_max)` for all `Δ' ≤ Δ`.
    pub fn bracket(&mut self) -> Result<Bracket> {
        let o = self.opts;
        let mut b1 = o.b1_init;
        let mut doublings = 0;
        let (best, shell_min) = loop {
            self.kernel.tabulate(-2.0 * b1, 2.0 * b1)?;
            let axis = linspace(-b1, b1, o.coarse_n);
            let interior: Vec<(f64, f64)> = axis
                .iter()
                .flat_map(|&s| axis.iter().filter(move |&&t| t > s).map(move |&t| (s, t)))
                .collect();
            let best = pick(&self.evaluate(0, &interior)?).expect("interior grid is nonempty");
            let outer = linspace(-2.0 * b1, 2.0 * b1, 4 * o.shell_n + 1);
            let shell: Vec<(f64, f64)> = outer
                .iter()
                .flat_map(|&s| {
                    outer
                        .iter()
                        .filter(move |&&t| t > s && (s <= -b1 || t >= b1))
                        .map(move |&t| (s, t))
                })
                .collect();
            let shell_min = self.min_gamma(&shell)?;
            if shell_min > best.alpha {
                break (best, shell_min);
            }
            if 2.0 * b1 > o.b1_cap {
                return Err(Error::Bracketing(format!(
                    "B1 reached cap {} without separation: best interior alpha {} at ({}, {}), \
                     shell min gamma {shell_min}",
                    o.b1_cap, best.alpha, best.s, best.big_s
                )));
            }
            b1 *= 2.0;
            doublings += 1;
        };

        let ell_max = self.kernel.model().ell_upper_bound();
        let mut delta = best.big_s - best.s;
        let b2 = loop {
            delta *= 0.5;
            if delta < o.b2_floor {
                return Err(Error::Bracketing(format!(
                    "B2 fell below floor {} (c(0+) = {}): small order sizes cannot be excluded",
                    o.b2_floor,
                    self.cost.zero_plus()
                )));
            }
            let bound = self.cost.infimum_on(delta) / (delta * ell_max);
            if bound > best.alpha {
                break delta;
            }
        };
        Ok(Bracket {
            b1,
            b2,
            best_alpha: best.alpha,
            shell_min_gamma: shell_min,
            doublings,
        })
    }

    /// Grid of `(s, S)` pairs over an `(s, Δ)` window, clipped to the bracket.
    fn window(
        &self,
        br: &Bracket,
        s_axis: &[f64],
        d_lo: f64,
        d_hi: f64,
        n: usize,
    ) -> Vec<(f64, f64)> {
        let mut deltas = linspace(d_lo, d_hi, n);
        for b in self.cost.breakpoints() {
            if b >= d_lo && b <= d_hi {
                deltas.extend(around(b));
            }
        }
        deltas.retain(|d| *d >= br.b2 && *d <= 2.0 * br.b1);
        deltas.sort_by(f64::total_cmp);
        deltas.dedup();
        let mut out = Vec::with_capacity(s_axis.len() * deltas.len());
        for &s in s_axis {
            if s < -br.b1 || s > br.b1 {
                continue;
            }
            for &d in &deltas {
                let big_s = s + d;
                if big_s <= br.b1 && big_s > s {
                    out.push((s, big_s));
                }
            }
        }
        out
    }

    fn leaders(points: &[TracePoint], k: usize) -> Vec<TracePoint> {
        let mut sorted = points.to_vec();
        sorted.sort_by(rank);
        let mut out: Vec<TracePoint> = Vec::with_capacity(k);
        for p in sorted {
            if out.iter().all(|q| q.s != p.s || q.big_s != p.big_s) {
                out.push(p);
            }
            if out.len() == k {
                break;
            }
        }
        out
    }

    /// Coarse grid over the bracket followed by local refinement.
    pub fn optimize(&mut self) -> Result<Optimum> {
        let br = self.bracket()?;
        self.optimize_in(br)
    }

    /// As [`optimize`](Self::optimize) with a given bracket; the kernel table
    /// must cover `[-B1, B1]`.
    pub fn optimize_in(&mut self, br: Bracket) -> Result<Optimum> {
        let o = self.opts;
        match self.kernel.table_range() {
            Some((lo, hi)) if lo <= -br.b1 && hi >= br.b1 => {}
            _ => self.kernel.tabulate(-2.0 * br.b1, 2.0 * br.b1)?,
        }
        let s_axis = linspace(-br.b1, br.b1, o.coarse_n);
        let coarse = self.window(&br, &s_axis, br.b2, 2.0 * br.b1, o.coarse_n);
        let mut trace = self.evaluate(0, &coarse)?;
        let coarse_evaluations = trace.len();
        let mut pitch_s = 2.0 * br.b1 / (o.coarse_n - 1) as f64;
        let mut pitch_d = (2.0 * br.b1 - br.b2) / (o.coarse_n - 1) as f64;
        let mut leaders = Self::leaders(&trace, o.candidates);
        if leaders.is_empty() {
            return Err(Error::Resolution(
                "coarse grid contains no feasible (s, S) pair".into(),
            ));
        }
        let mut round = 0;
        while pitch_s.max(pitch_d) >= o.pitch_tol {
            round += 1;
            let mut pairs = Vec::new();
            for p in &leaders {
                let d = p.big_s - p.s;
                let s_ax = linspace(p.s - pitch_s, p.s + pitch_s, o.refine_n);
                pairs.extend(self.window(&br, &s_ax, d - pitch_d, d + pitch_d, o.refine_n));
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            pairs.dedup();
            let fresh = self.evaluate(round, &pairs)?;
            let mut pool = leaders.clone();
            pool.extend_from_slice(&fresh);
            trace.extend(fresh);
            leaders = Self::leaders(&pool, o.candidates);
            let shrink = 2.0 / (o.refine_n - 1) as f64;
            pitch_s *= shrink;
            pitch_d *= shrink;
        }
        let best = pick(&leaders).expect("leaders are nonempty");
        let check = self.kernel.alpha(&self.cost, best.s, best.big_s)?;
        Ok(Optimum {
            s_star: best.s,
            big_s_star: best.big_s,
            alpha_star: check.alpha,
            bracket: br,
            grid_stats: GridStats {
                evaluations: trace.len(),
                coarse_evaluations,
                refinement_rounds: round,
                final_pitch: pitch_s.max(pitch_d),
            },
            trace,
        })
    }
}

/// `(B1, B2)` for the problem.
pub fn bracket(model: &DemandModel, h: &HoldingCost, c: &OrderingCost) -> Result<Bracket> {
    Optimizer::new(model, h, c, OptimizerOptions::default())?.bracket()
}

pub fn optimize(
    model: &DemandModel,
    h: &HoldingCost,
    c: &OrderingCost,
    opts: OptimizerOptions,
) -> Result<Optimum> {
    Optimizer::new(model, h, c, opts)?.optimize()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_break_prefers_small_delta_then_small_s() {
        let p = |s: f64, big_s: f64, alpha: f64| TracePoint {
            round: 0,
            s,
            big_s,
            alpha,
        };
        let pts = [
            p(-1.0, 1.0, 2.0),
            p(0.5, 1.5, 2.0),
            p(-0.2, 0.8, 2.0),
            p(0.0, 0.1, 2.5),
        ];
        let best = pick(&pts).unwrap();
        assert_eq!((best.s, best.big_s), (-0.2, 0.8));
    }

    #[test]
    fn baseline_bracket_and_optimum() {
        let m = DemandModel::baseline();
        let h = HoldingCost::absolute();
        let c = OrderingCost::fixed(1.0).unwrap();
        let opt = optimize(&m, &h, &c, OptimizerOptions::default()).unwrap();
        let br = opt.bracket;
        assert!(br.b1 >= std::f64::consts::SQRT_2 && br.b2 <= std::f64::consts::SQRT_2);
        assert!(opt.alpha_star <= 1.0 + std::f64::consts::SQRT_2);
        assert!(opt.s_star < 0.0 && opt.big_s_star > 0.0);
        assert!((opt.alpha_star - 1.335_169_064_902_105).abs() < 1e-8);
        assert!(-br.b1 <= opt.s_star && opt.big_s_star <= br.b1);
        assert!(opt.big_s_star - opt.s_star >= br.b2);
    }

    #[test]
    fn bad_options_rejected() {
        let m = DemandModel::baseline();
        let h = HoldingCost::absolute();
        let c = OrderingCost::fixed(1.0).unwrap();
        let opts = OptimizerOptions {
            coarse_n: 1,
            ..Default::default()
        };
        assert!(matches!(
            Optimizer::new(&m, &h, &c, opts),
            Err(Error::Invalid(_))
        ));
    }
}
