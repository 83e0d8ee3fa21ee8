//! Numerical optimality certificate for an `(s★, S★)` policy.
//!
//! With `D(z) = g'(z) - α★ℓ'(z)` and a level `s̲ ≤ s★` below which `D < 0`,
//! the function
//!
//! ```text
//! V(z) = ∫_{s̲}^{z} (g - α★ℓ)               z ≥ s̲
//! V(z) = (g(s̲) - α★ℓ(s̲)) (z - s̲)          z < s̲
//! ```
//!
//! satisfies `𝒜V + h = α★` above `s̲` (an identity of the first-order
//! equations for `g` and `ℓ`), `𝒜V + h ≥ α★` below it, and together with the
//! intervention inequality `V(z₂) - V(z₁) + c(z₂ - z₁) ≥ 0` certifies that
//! no admissible policy beats `α★`. Here `𝒜f = σ²/2·f'' - μ f'`.
//!
//! Everything is checked on finite grids; the certificate records exactly
//! which region was examined.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{HoldingCost, OrderingCost};
use crate::diffusion::DemandModel;
use crate::error::{Error, Result};
use crate::optimizer::Optimum;
use crate::policy::CycleKernel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifierOptions {
    /// Base tolerance; the effective tolerance is `cert_tol·max(1, α★)`.
    pub cert_tol: f64,
    pub z_points: usize,
    pub pair_points: usize,
    /// Downward scan for `s̲` uses steps of `span / scan_density`.
    pub scan_density: usize,
    /// Lowest level examined, in multiples of `span = S★ - s★` below `s★`.
    pub floor_spans: f64,
    /// Points per axis of the grid checking the lower ratio bound.
    pub ratio_points: usize,
    /// Upper end of the `z̄` scan; `None` means `S★ + 10·span`.
    pub z_bar_scan_max: Option<f64>,
}

impl Default for VerifierOptions {
    fn default() -> Self {
        Self {
            cert_tol: 1e-7,
            z_points: 4001,
            pair_points: 201,
            scan_density: 200,
            floor_spans: 20.0,
            ratio_points: 101,
            z_bar_scan_max: None,
        }
    }
}

/// Result of the downward scan for `s̲`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnderlineS {
    pub value: f64,
    /// Lowest level at which `D < 0` was checked.
    pub floor: f64,
    /// Largest `D` on the checked grid below `s̲`.
    pub max_d_below: f64,
    /// Upper end of the `S` axis in the ratio check.
    pub ratio_s_max: f64,
    /// Smallest `α̲(s, S) - α★` over the ratio grid and tail points.
    pub ratio_min_slack: f64,
    pub ratio_points_checked: usize,
    /// `g(s̲) - α★ℓ(s̲) + k`, which must be nonnegative.
    pub slope_plus_rate: f64,
}

/// `|V(z)| ≤ coeff·(1 + |z|^degree)` on the checked grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolyGrowth {
    pub degree: u32,
    pub coeff: f64,
}

/// One row of the residual dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualSample {
    pub z: f64,
    pub v: f64,
    pub v_prime: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueCertificate {
    pub underline_s: f64,
    pub alpha_star: f64,
    /// Constant the HJB residual was measured against; equals `alpha_star`
    /// unless a perturbed check was requested.
    pub alpha_checked: f64,
    pub z_bar: f64,
    pub hjb_min_residual: f64,
    pub hjb_min_residual_at: f64,
    pub hjb_max_abs_residual_above: f64,
    pub intervention_min_slack: f64,
    pub intervention_min_at: (f64, f64),
    pub optimum_pair_slack: f64,
    pub vprime_bound: f64,
    pub poly_growth: PolyGrowth,
    pub cert_tol: f64,
    pub z_range: (f64, f64),
    pub pair_range: (f64, f64),
    pub underline: UnderlineS,
    pub pass: bool,
    #[serde(skip)]
    pub residuals: Vec<ResidualSample>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1).max(1) as f64
            }
        })
        .collect()
}

/// The lower-bound function `V` for given `α★` and `s̲`.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    kernel: CycleKernel,
    alpha: f64,
    underline_s: f64,
    slope: f64,
}

impl ValueFunction {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn underline_s(&self) -> f64 {
        self.underline_s
    }

    /// Constant slope of the linear branch below `s̲`.
    pub fn slope_below(&self) -> f64 {
        self.slope
    }

    pub fn kernel(&self) -> &CycleKernel {
        &self.kernel
    }

    pub fn value(&self, z: f64) -> Result<f64> {
        let a = self.underline_s;
        if z < a {
            return Ok(self.slope * (z - a));
        }
        if z == a {
            return Ok(0.0);
        }
        let (cost, time) = match (
            self.kernel.antiderivatives(a),
            self.kernel.antiderivatives(z),
        ) {
            (Some(lo), Some(hi)) => (hi.0 - lo.0, hi.1 - lo.1),
            _ => self.kernel.cycle_stats(a, z)?,
        };
        Ok(cost - self.alpha * time)
    }

    pub fn derivative(&self, z: f64) -> Result<f64> {
        if z < self.underline_s {
            return Ok(self.slope);
        }
        let (g, ell) = self.kernel.g_ell(z)?;
        Ok(g - self.alpha * ell)
    }

    /// `(V, V', V'')`, taking the right-hand second derivative at `s̲`.
    pub fn jet(&self, z: f64) -> Result<[f64; 3]> {
        if z < self.underline_s {
            return Ok([self.slope * (z - self.underline_s), self.slope, 0.0]);
        }
        let [g, ell, gp, lp] = self.kernel.g_ell_prime(z)?;
        Ok([self.value(z)?, g - self.alpha * ell, gp - self.alpha * lp])
    }

    /// `𝒜V(z) + h(z) - alpha_check`.
    pub fn hjb_residual(&self, z: f64, alpha_check: f64) -> Result<f64> {
        let [_, d1, d2] = self.jet(z)?;
        let m = self.kernel.model();
        Ok(0.5 * m.sigma2(z) * d2 - m.mu(z) * d1 + self.kernel.holding().eval(z) - alpha_check)
    }
}

/// Build `V` on a kernel whose table should cover the region of interest.
pub fn build_v(kernel: &CycleKernel, alpha_star: f64, underline_s: f64) -> Result<ValueFunction> {
    let (g, ell) = kernel.g_ell(underline_s)?;
    Ok(ValueFunction {
        kernel: kernel.clone(),
        alpha: alpha_star,
        underline_s,
        slope: g - alpha_star * ell,
    })
}

/// Certificate machinery for one problem and one claimed optimum.
#[derive(Debug, Clone)]
pub struct Verifier {
    kernel: CycleKernel,
    cost: OrderingCost,
    opts: VerifierOptions,
    s_star: f64,
    big_s_star: f64,
    alpha_star: f64,
    b1: f64,
    k_rate: f64,
}

impl Verifier {
    pub fn new(
        model: &DemandModel,
        h: &HoldingCost,
        c: &OrderingCost,
        optimum: &Optimum,
        opts: VerifierOptions,
    ) -> Result<Self> {
        let span = optimum.big_s_star - optimum.s_star;
        if !(span > 0.0) {
            return Err(Error::Domain("optimum must satisfy s* < S*".into()));
        }
        if opts.z_points < 3
            || opts.pair_points < 3
            || opts.ratio_points < 3
            || opts.scan_density < 1
        {
            return Err(Error::Invalid(format!(
                "verifier grid sizes too small: {opts:?}"
            )));
        }
        if !(opts.cert_tol >= 0.0) {
            return Err(Error::Invalid("cert_tol must be nonnegative".into()));
        }
        let k_rate = crate::cost::decompose(c, 1e8)?.k;
        let mut v = Self {
            kernel: CycleKernel::new(model, h),
            cost: c.clone(),
            opts,
            s_star: optimum.s_star,
            big_s_star: optimum.big_s_star,
            alpha_star: optimum.alpha_star,
            b1: optimum.bracket.b1,
            k_rate,
        };
        let (lo, hi) = v.table_range();
        v.kernel.tabulate(lo, hi)?;
        Ok(v)
    }

    fn span(&self) -> f64 {
        self.big_s_star - self.s_star
    }

    pub fn floor(&self) -> f64 {
        self.s_star - self.opts.floor_spans * self.span()
    }

    pub fn scan_max(&self) -> f64 {
        self.opts
            .z_bar_scan_max
            .unwrap_or(self.big_s_star + 10.0 * self.span())
    }

    fn far_point(&self) -> f64 {
        let m = self.scan_max();
        m + m.abs().max(self.span())
    }

    fn table_range(&self) -> (f64, f64) {
        let span = self.span();
        let hi = self
            .b1
            .max(self.big_s_star + 5.0 * span)
            .max(self.far_point())
            + span;
        (self.floor() - span, hi)
    }

    pub fn tolerance(&self) -> f64 {
        self.opts.cert_tol * self.alpha_star.abs().max(1.0)
    }

    pub fn kernel(&self) -> &CycleKernel {
        &self.kernel
    }

    /// `α̲(s, S)` with `g`, `ℓ` frozen at `s̲` below `s̲`.
    fn lower_ratio(
        &self,
        us: f64,
        g0: f64,
        l0: f64,
        anti0: (f64, f64),
        s: f64,
        big_s: f64,
    ) -> Result<f64> {
        let below = big_s.min(us) - s;
        let (dg, dl) = if big_s > us {
            match self.kernel.antiderivatives(big_s) {
                Some(a) => (a.0 - anti0.0, a.1 - anti0.1),
                None => self.kernel.cycle_stats(us, big_s)?,
            }
        } else {
            (0.0, 0.0)
        };
        let c = self.cost.eval(big_s - s)?;
        Ok((g0 * below + dg + c) / (l0 * below + dl))
    }

    /// Check the ratio bound at candidate `us`; returns the smallest slack and
    /// number of points examined.
    fn ratio_check(&self, us: f64) -> Result<(f64, usize)> {
        let (g0, l0) = self.kernel.g_ell(us)?;
        let anti0 = self
            .kernel
            .antiderivatives(us)
            .ok_or_else(|| Error::Domain(format!("s = {us} outside verifier table")))?;
        let floor = self.floor();
        let n = self.opts.ratio_points;
        let s_top = self.ratio_s_max();
        let pz = self.pair_axis(us);
        let mut s_axis: Vec<f64> = linspace(floor, us, n);
        s_axis.pop();
        s_axis.extend(pz.iter().copied().filter(|&z| z < us));
        let span = self.span();
        for k in 1..=4 {
            s_axis.push(us - 10f64.powi(k) * span);
        }
        let mut big_axis = linspace(floor, s_top, n);
        big_axis.extend(pz.iter().copied().filter(|&z| z <= s_top));
        let breaks = self.cost.breakpoints();
        let pairs: Vec<(f64, f64)> = s_axis
            .iter()
            .flat_map(|&s| {
                let mut v: Vec<(f64, f64)> = big_axis
                    .iter()
                    .filter(|&&b| b > s)
                    .map(|&b| (s, b))
                    .collect();
                for &b in &breaks {
                    for d in [
                        b * (1.0 - 4.0 * f64::EPSILON),
                        b,
                        b * (1.0 + 4.0 * f64::EPSILON),
                    ] {
                        if s + d <= s_top {
                            v.push((s, s + d));
                        }
                    }
                }
                v
            })
            .collect();
        let slacks: Result<Vec<f64>> = pairs
            .par_iter()
            .map(|&(s, b)| Ok(self.lower_ratio(us, g0, l0, anti0, s, b)? - self.alpha_star))
            .collect();
        let min = slacks?.into_iter().fold(f64::INFINITY, f64::min);
        Ok((min, pairs.len()))
    }

    /// Level grid of the intervention check for candidate `us`. The ratio
    /// check at `us` contains it, so the two conditions see the same pairs.
    fn pair_axis(&self, us: f64) -> Vec<f64> {
        let span = self.span();
        linspace(
            us - 5.0 * span,
            self.big_s_star + 5.0 * span,
            self.opts.pair_points,
        )
    }

    fn ratio_s_max(&self) -> f64 {
        self.b1.max(self.big_s_star + 5.0 * self.span())
    }

    /// Largest grid level `s̲ ≤ s★` with `D < 0` below it and the lower ratio
    /// bound satisfied.
    pub fn find_underline_s(&self) -> Result<UnderlineS> {
        let tol = self.tolerance();
        let step = self.span() / self.opts.scan_density as f64;
        let floor = self.floor();
        let count = ((self.s_star - floor) / step).round() as usize;
        let grid: Vec<f64> = (0..=count).map(|i| self.s_star - i as f64 * step).collect();
        let d: Result<Vec<f64>> = grid
            .par_iter()
            .map(|&z| {
                let [_, _, gp, lp] = self.kernel.g_ell_prime(z)?;
                Ok(gp - self.alpha_star * lp)
            })
            .collect();
        let d = d?;
        // suffix_max[i] = max D over grid[i..] (all levels at or below grid[i]).
        let mut suffix_max = vec![f64::NEG_INFINITY; grid.len() + 1];
        for i in (0..grid.len()).rev() {
            suffix_max[i] = suffix_max[i + 1].max(d[i]);
        }
        let mut offending = Vec::new();
        for (i, &us) in grid.iter().enumerate() {
            if suffix_max[i] >= 0.0 {
                if offending.len() < 8 {
                    offending.push(us);
                }
                continue;
            }
            let (g, ell) = self.kernel.g_ell(us)?;
            let slope_plus_rate = g - self.alpha_star * ell + self.k_rate;
            if slope_plus_rate < -tol {
                if offending.len() < 8 {
                    offending.push(us);
                }
                continue;
            }
            let (slack, checked) = self.ratio_check(us)?;
            if slack >= -tol {
                return Ok(UnderlineS {
                    value: us,
                    floor,
                    max_d_below: suffix_max[i],
                    ratio_s_max: self.ratio_s_max(),
                    ratio_min_slack: slack,
                    ratio_points_checked: checked,
                    slope_plus_rate,
                });
            }
            if offending.len() < 8 {
                offending.push(us);
            }
        }
        Err(Error::Certificate(format!(
            "no level s_ at or below s* = {} down to {floor} satisfies the side conditions; \
             first rejected candidates {offending:?}",
            self.s_star
        )))
    }

    pub fn build_v(&self, alpha: f64, underline_s: f64) -> Result<ValueFunction> {
        build_v(&self.kernel, alpha, underline_s)
    }

    /// HJB, intervention and derivative conditions for `v`, measuring the
    /// HJB residual against `alpha_check`.
    pub fn check_certificate(
        &self,
        v: &ValueFunction,
        underline: &UnderlineS,
        alpha_check: f64,
    ) -> Result<ValueCertificate> {
        let tol = self.tolerance();
        let span = self.span();
        let us = v.underline_s();
        let z_lo = us - 5.0 * span;
        let z_hi = self.big_s_star + 5.0 * span;
        let mut zs = linspace(z_lo, z_hi, self.opts.z_points);
        zs.push(us);
        zs.push(us - 50.0 * span);
        zs.push(self.big_s_star + 50.0 * span);
        zs.sort_by(f64::total_cmp);
        zs.dedup();

        let samples: Result<Vec<ResidualSample>> = zs
            .par_iter()
            .map(|&z| {
                let [val, d1, _] = v.jet(z)?;
                Ok(ResidualSample {
                    z,
                    v: val,
                    v_prime: d1,
                    residual: v.hjb_residual(z, alpha_check)?,
                })
            })
            .collect();
        let samples = samples?;
        let mut hjb_min = f64::INFINITY;
        let mut hjb_min_at = f64::NAN;
        let mut max_abs_above: f64 = 0.0;
        let mut vprime_bound: f64 = v.slope_below().abs();
        let degree = self.kernel.holding().poly_degree + 1;
        let mut poly_coeff: f64 = 0.0;
        for r in &samples {
            if r.residual < hjb_min {
                hjb_min = r.residual;
                hjb_min_at = r.z;
            }
            if r.z >= us {
                max_abs_above = max_abs_above.max(r.residual.abs());
            }
            if r.z < 0.0 {
                vprime_bound = vprime_bound.max(r.v_prime.abs());
            }
            poly_coeff = poly_coeff.max(r.v.abs() / (1.0 + r.z.abs().powi(degree as i32)));
        }

        let pz = self.pair_axis(us);
        let pv: Result<Vec<f64>> = pz.par_iter().map(|&z| v.value(z)).collect();
        let pv = pv?;
        let breaks = self.cost.breakpoints();
        let rows: Result<Vec<(f64, (f64, f64))>> = (0..pz.len())
            .into_par_iter()
            .map(|i| {
                let mut best = (f64::INFINITY, (f64::NAN, f64::NAN));
                let mut consider = |z2: f64, v2: f64| -> Result<()> {
                    let slack = v2 - pv[i] + self.cost.eval(z2 - pz[i])?;
                    if slack < best.0 {
                        best = (slack, (pz[i], z2));
                    }
                    Ok(())
                };
                for j in i + 1..pz.len() {
                    consider(pz[j], pv[j])?;
                }
                for &b in &breaks {
                    for d in [
                        b * (1.0 - 4.0 * f64::EPSILON),
                        b,
                        b * (1.0 + 4.0 * f64::EPSILON),
                    ] {
                        let z2 = pz[i] + d;
                        if z2 <= z_hi {
                            consider(z2, v.value(z2)?)?;
                        }
                    }
                }
                Ok(best)
            })
            .collect();
        let mut slack_min = (f64::INFINITY, (f64::NAN, f64::NAN));
        for r in rows? {
            if r.0 < slack_min.0 {
                slack_min = r;
            }
        }
        let optimum_pair_slack = v.value(self.big_s_star)? - v.value(self.s_star)?
            + self.cost.eval(self.big_s_star - self.s_star)?;
        if optimum_pair_slack < slack_min.0 {
            slack_min = (optimum_pair_slack, (self.s_star, self.big_s_star));
        }

        let pass = hjb_min >= -tol
            && max_abs_above <= tol
            && slack_min.0 >= -tol
            && vprime_bound.is_finite()
            && underline.ratio_min_slack >= -tol
            && underline.max_d_below < 0.0;
        Ok(ValueCertificate {
            underline_s: us,
            alpha_star: v.alpha(),
            alpha_checked: alpha_check,
            z_bar: f64::NAN,
            hjb_min_residual: hjb_min,
            hjb_min_residual_at: hjb_min_at,
            hjb_max_abs_residual_above: max_abs_above,
            intervention_min_slack: slack_min.0,
            intervention_min_at: slack_min.1,
            optimum_pair_slack,
            vprime_bound,
            poly_growth: PolyGrowth {
                degree,
                coeff: poly_coeff,
            },
            cert_tol: tol,
            z_range: (z_lo, z_hi),
            pair_range: (z_lo, z_hi),
            underline: underline.clone(),
            pass,
            residuals: samples,
        })
    }

    /// Smallest grid level beyond which `V > 0` and `V' > 0` up to the scan
    /// end, confirmed again at twice that distance.
    pub fn find_z_bar(&self, v: &ValueFunction) -> Result<f64> {
        find_z_bar(
            v,
            self.scan_max(),
            self.span() / self.opts.scan_density as f64,
        )
    }

    /// Run every stage for the claimed optimum.
    pub fn certify(&self) -> Result<ValueCertificate> {
        self.certify_against(self.alpha_star)
    }

    /// As [`certify`](Self::certify) but measuring HJB residuals against
    /// `alpha_check` instead of `α★`.
    pub fn certify_against(&self, alpha_check: f64) -> Result<ValueCertificate> {
        let underline = self.find_underline_s()?;
        let v = self.build_v(self.alpha_star, underline.value)?;
        let mut cert = self.check_certificate(&v, &underline, alpha_check)?;
        cert.z_bar = self.find_z_bar(&v)?;
        Ok(cert)
    }
}

/// See [`Verifier::find_z_bar`]; `step` is the scan resolution.
pub fn find_z_bar(v: &ValueFunction, scan_max: f64, step: f64) -> Result<f64> {
    let start = v.underline_s();
    if !(scan_max > start.max(0.0)) || !(step > 0.0) {
        return Err(Error::Domain(format!(
            "z_bar scan needs scan_max > max(s_, 0) and a positive step, got {scan_max}, {step}"
        )));
    }
    let n = ((scan_max - start) / step).ceil() as usize;
    let grid: Vec<f64> = (0..=n)
        .map(|i| (start + i as f64 * step).min(scan_max))
        .collect();
    let vals: Result<Vec<(f64, f64)>> = grid
        .par_iter()
        .map(|&z| Ok((v.value(z)?, v.derivative(z)?)))
        .collect();
    let vals = vals?;
    let mut z_bar = None;
    for i in (0..grid.len()).rev() {
        let (val, d) = vals[i];
        if val > 0.0 && d > 0.0 {
            z_bar = Some(grid[i]);
        } else {
            break;
        }
    }
    let z = z_bar.ok_or_else(|| {
        Error::Certificate(format!(
            "V or V' is not positive at the scan end {scan_max}"
        ))
    })?;
    let far = scan_max + scan_max.abs().max(step);
    let (vf, df) = (v.value(far)?, v.derivative(far)?);
    if !(vf > 0.0 && df > 0.0) {
        return Err(Error::Certificate(format!(
            "growth check failed at {far}: V = {vf}, V' = {df}"
        )));
    }
    if z > 0.0 {
        Ok(z)
    } else {
        // Positivity holds from a nonpositive level on; report the first
        // positive grid level.
        Ok(grid.iter().copied().find(|&g| g > 0.0).unwrap_or(step))
    }
}

/// Underline level, `V`, certificate and `z̄` for a solved problem.
pub fn certify(
    model: &DemandModel,
    h: &HoldingCost,
    c: &OrderingCost,
    optimum: &Optimum,
    opts: VerifierOptions,
) -> Result<ValueCertificate> {
    Verifier::new(model, h, c, optimum, opts)?.certify()
}
