//! Scale and speed densities of the uncontrolled inventory diffusion
//! `dX = -μ(X) dt - σ(X) dW`, and the tail functionals `g`, `ℓ` built on them.
//!
//! With `r(u) = 2μ(u)/σ²(u)` and `I(x, y) = ∫_x^y r`, the scale density is
//! `𝒮'(x) = exp(I(a, x))` and the speed density is `1/(σ²(x) 𝒮'(x))`. The
//! functionals
//!
//! ```text
//! g(z) = 2 𝒮'(z) ∫_z^∞ h dℳ,    ℓ(z) = 2 𝒮'(z) ∫_z^∞ dℳ
//! ```
//!
//! are evaluated in the factored form `2 ∫_z^∞ w(u) σ⁻²(u) e^{-I(z,u)} du`,
//! which never forms `𝒮'` or the speed density and so neither overflows nor
//! depends on the reference point `a`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::cost::{HoldingCost, REPORT_TOL};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_split, Tolerance};
use crate::validation::ValidationReport;

/// A drift or volatility coefficient.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// `base + amplitude·tanh((z - center)/scale)`.
    Tanh {
        base: f64,
        amplitude: f64,
        center: f64,
        scale: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Coefficient {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Coefficient::Constant(v) => *v,
            Coefficient::Tanh {
                base,
                amplitude,
                center,
                scale,
            } => base + amplitude * ((z - center) / scale).tanh(),
            Coefficient::Custom(f) => f(z),
        }
    }

    fn constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Coefficient::Tanh {
                base,
                amplitude,
                center,
                scale,
            } => f
                .debug_struct("Tanh")
                .field("base", base)
                .field("amplitude", amplitude)
                .field("center", center)
                .field("scale", scale)
                .finish(),
            Coefficient::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Drift `μ` and volatility `σ` of the inventory process together with their
/// declared bounds `μ̲ ≤ μ ≤ μ̄`, `σ̲ ≤ σ ≤ σ̄`.
///
/// The bounds are declared by the caller; [`validate_model`] spot-checks them
/// on a grid.
#[derive(Debug, Clone)]
pub struct DemandModel {
    pub drift: Coefficient,
    pub volatility: Coefficient,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub ref_point: f64,
    /// Points where `μ` or `σ` may fail to be smooth; quadrature splits there.
    pub kinks: Vec<f64>,
}

impl DemandModel {
    pub fn new(
        drift: Coefficient,
        volatility: Coefficient,
        (mu_lo, mu_hi): (f64, f64),
        (sigma_lo, sigma_hi): (f64, f64),
    ) -> Result<Self> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi;
        if !ok(mu_lo, mu_hi) {
            return Err(Error::Invalid(format!(
                "drift bounds must satisfy 0 < mu_lo <= mu_hi < inf, got ({mu_lo}, {mu_hi})"
            )));
        }
        if !ok(sigma_lo, sigma_hi) {
            return Err(Error::Invalid(format!(
                "volatility bounds must satisfy 0 < sigma_lo <= sigma_hi < inf, got ({sigma_lo}, {sigma_hi})"
            )));
        }
        Ok(Self {
            drift,
            volatility,
            mu_lo,
            mu_hi,
            sigma_lo,
            sigma_hi,
            ref_point: 0.0,
            kinks: Vec::new(),
        })
    }

    /// Constant drift and volatility with tight bounds.
    pub fn constant(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(
            Coefficient::Constant(mu),
            Coefficient::Constant(sigma),
            (mu, mu),
            (sigma, sigma),
        )
    }

    /// `μ ≡ 1`, `σ² ≡ 2`.
    pub fn baseline() -> Self {
        Self::constant(1.0, std::f64::consts::SQRT_2).expect("baseline parameters are valid")
    }

    pub fn with_ref_point(mut self, a: f64) -> Self {
        self.ref_point = a;
        self
    }

    pub fn with_kinks(mut self, mut kinks: Vec<f64>) -> Self {
        kinks.sort_by(f64::total_cmp);
        kinks.dedup();
        self.kinks = kinks;
        self
    }

    #[inline]
    pub fn mu(&self, z: f64) -> f64 {
        self.drift.eval(z)
    }

    #[inline]
    pub fn sigma(&self, z: f64) -> f64 {
        self.volatility.eval(z)
    }

    #[inline]
    pub fn sigma2(&self, z: f64) -> f64 {
        let s = self.sigma(z);
        s * s
    }

    /// `2μ(z)/σ²(z)`.
    #[inline]
    pub fn rate(&self, z: f64) -> f64 {
        2.0 * self.mu(z) / self.sigma2(z)
    }

    fn constant_rate(&self) -> Option<f64> {
        let m = self.drift.constant()?;
        let s = self.volatility.constant()?;
        Some(2.0 * m / (s * s))
    }

    /// Slowest decay rate `2μ̲/σ̄²` of `e^{-I}` permitted by the bounds.
    pub fn min_rate(&self) -> f64 {
        2.0 * self.mu_lo / (self.sigma_hi * self.sigma_hi)
    }

    pub fn max_rate(&self) -> f64 {
        2.0 * self.mu_hi / (self.sigma_lo * self.sigma_lo)
    }

    /// Uniform upper bound `σ̄²/(σ̲² μ̲)` on `ℓ`.
    pub fn ell_upper_bound(&self) -> f64 {
        self.sigma_hi * self.sigma_hi / (self.sigma_lo * self.sigma_lo * self.mu_lo)
    }

    /// Constant `4μ̄σ̄²/σ̲²` in the truncation cost-gap bound.
    pub fn truncation_constant(&self) -> f64 {
        4.0 * self.mu_hi * self.sigma_hi * self.sigma_hi / (self.sigma_lo * self.sigma_lo)
    }
}

/// Accuracy controls for kernel evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    pub tol: Tolerance,
    /// Tolerance for the exponent `I(x, y)`; errors there become relative
    /// errors of every tail value.
    pub exponent_tol: Tolerance,
    /// Number of doublings of the truncation point before giving up.
    pub max_expansions: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            tol: Tolerance::default(),
            exponent_tol: Tolerance::new(1e-13, 1e-15),
            max_expansions: 30,
        }
    }
}

/// Every kernel quantity at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValues {
    pub z: f64,
    pub scale_density: f64,
    pub speed_density: f64,
    /// `∫_z^∞ ℳ(dy)`.
    pub tail_speed: f64,
    /// `∫_z^∞ h(y) ℳ(dy)`.
    pub tail_cost: f64,
    pub g: f64,
    pub ell: f64,
    pub g_prime: f64,
    pub ell_prime: f64,
}

/// `(T_1(z), T_h(z))` where `T_w(z) = ∫_z^∞ w σ⁻² e^{-I(z,·)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tails {
    pub speed: f64,
    pub cost: f64,
}

impl Tails {
    pub fn g(&self) -> f64 {
        2.0 * self.cost
    }
    pub fn ell(&self) -> f64 {
        2.0 * self.speed
    }
}

/// Evaluation engine over one `(model, h)` pair. Cheap to construct.
#[derive(Clone, Copy)]
pub(crate) struct Kernel<'a> {
    pub model: &'a DemandModel,
    pub h: Option<&'a HoldingCost>,
    pub opts: &'a KernelOptions,
}

impl<'a> Kernel<'a> {
    pub fn new(
        model: &'a DemandModel,
        h: Option<&'a HoldingCost>,
        opts: &'a KernelOptions,
    ) -> Self {
        Self { model, h, opts }
    }

    #[inline]
    fn holding(&self, u: f64) -> f64 {
        self.h.map_or(0.0, |h| h.eval(u))
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b = self.model.kinks.clone();
        if let Some(h) = self.h {
            b.extend_from_slice(h.kinks());
        }
        b
    }

    /// `I(x, y) = ∫_x^y 2μ/σ²`.
    pub fn exponent(&self, x: f64, y: f64) -> Result<f64> {
        if let Some(r) = self.model.constant_rate() {
            return Ok(r * (y - x));
        }
        if x == y {
            return Ok(0.0);
        }
        let m = self.model;
        let est = integrate_split(|u| [m.rate(u)], x, y, &m.kinks, &self.opts.exponent_tol)
            .map_err(|e| rename(e, "exponent integral"))?;
        Ok(est.value[0])
    }

    /// `(∫_x^y w σ⁻² e^{-I(x,·)}, I(x, y))` for `w ∈ {1, h}` on a finite panel.
    pub fn panel(&self, x: f64, y: f64) -> Result<([f64; 2], f64)> {
        let m = self.model;
        let mut failure = None;
        let integrand = |u: f64| {
            let i = match self.exponent(x, u) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            };
            let w = (-i).exp() / m.sigma2(u);
            [w, w * self.holding(u)]
        };
        let est = integrate_split(integrand, x, y, &self.breaks(), &self.opts.tol)
            .map_err(|e| rename(e, "panel integral"))?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((est.value, self.exponent(x, y)?))
    }

    /// Remainder factor: `∫_y^∞ w̄(u) e^{-λ(u - y)} du / σ̲²` for the declared
    /// growth envelope `w̄` of each weight.
    fn remainder_envelope(&self, y: f64) -> [f64; 2] {
        let lam = self.model.min_rate();
        let s2 = self.model.sigma_lo * self.model.sigma_lo;
        let speed = 1.0 / (lam * s2);
        let cost = match self.h {
            None => 0.0,
            Some(h) => {
                // ∫_0^∞ c(1 + (|y| + t)^n) e^{-λt} dt, expanded binomially.
                let n = h.poly_degree as i32;
                let ay = y.abs();
                let mut sum = 1.0 / lam;
                let mut binom = 1.0;
                let mut fact = 1.0;
                for i in 0..=n {
                    if i > 0 {
                        binom *= (n - i + 1) as f64 / i as f64;
                        fact *= i as f64;
                    }
                    sum += binom * ay.powi(n - i) * fact / lam.powi(i + 1);
                }
                h.poly_coeff * sum / s2
            }
        };
        [speed, cost]
    }

    /// Full tails from `z` to infinity with a rigorous truncation rule.
    pub fn tail(&self, z: f64) -> Result<Tails> {
        if !z.is_finite() {
            return Err(Error::Domain(format!(
                "tail integral at non-finite z = {z}"
            )));
        }
        let lam_lo = self.model.min_rate();
        let lam_hi = self.model.max_rate();
        let mut reach = 10.0 / lam_lo;
        // Panels no wider than one e-fold of the fastest decay, but never
        // more than about 400 across the first truncation window.
        let width = (1.0 / lam_hi).max(reach / 400.0);
        let breaks = self.breaks();

        let mut acc = [0.0; 2];
        let mut decay = 0.0_f64; // I(z, y)
        let mut y = z;
        let mut expansions = 0;
        loop {
            let target = z + reach;
            while y < target {
                let mut next = (y + width).min(target);
                if let Some(&k) = breaks.iter().find(|&&k| k > y && k < next) {
                    next = k;
                }
                let (p, i) = self.panel(y, next)?;
                let scale = (-decay).exp();
                acc[0] += scale * p[0];
                acc[1] += scale * p[1];
                decay += i;
                y = next;
            }
            let env = self.remainder_envelope(y);
            let factor = (-decay).exp();
            let rem = [factor * env[0], factor * env[1]];
            let done =
                (0..2).all(|c| rem[c] <= (self.opts.tol.rel * acc[c]).max(self.opts.tol.abs));
            if done {
                return Ok(Tails {
                    speed: acc[0],
                    cost: acc[1],
                });
            }
            expansions += 1;
            if expansions > self.opts.max_expansions {
                let achieved = (0..2)
                    .map(|c| rem[c] / acc[c].max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max);
                return Err(Error::numeric(
                    format!("tail truncation from z = {z} (reached y = {y})"),
                    achieved,
                ));
            }
            reach *= 2.0;
        }
    }

    /// `(g', ℓ')` from the first-order identities `σ²/2·g' = μg - h`,
    /// `σ²/2·ℓ' = μℓ - 1`.
    pub fn derivatives(&self, z: f64, t: &Tails) -> (f64, f64) {
        let mu = self.model.mu(z);
        let k = 2.0 / self.model.sigma2(z);
        (k * (mu * t.g() - self.holding(z)), k * (mu * t.ell() - 1.0))
    }

    pub fn values(&self, z: f64) -> Result<KernelValues> {
        let t = self.tail(z)?;
        let (gp, lp) = self.derivatives(z, &t);
        let phi = self.exponent(self.model.ref_point, z)?;
        let scale = phi.exp();
        Ok(KernelValues {
            z,
            scale_density: scale,
            speed_density: (-phi).exp() / self.model.sigma2(z),
            tail_speed: (-phi).exp() * t.speed,
            tail_cost: (-phi).exp() * t.cost,
            g: t.g(),
            ell: t.ell(),
            g_prime: gp,
            ell_prime: lp,
        })
    }
}

fn rename(e: Error, what: &str) -> Error {
    match e {
        Error::NumericFailure {
            what: inner,
            achieved,
        } => Error::NumericFailure {
            what: format!("{what}: {inner}"),
            achieved,
        },
        other => other,
    }
}

/// `𝒮'(x) = exp(∫_a^x 2μ/σ²)`.
pub fn scale_density(model: &DemandModel, x: f64) -> Result<f64> {
    let opts = KernelOptions::default();
    Ok(Kernel::new(model, None, &opts)
        .exponent(model.ref_point, x)?
        .exp())
}

/// Density of the speed measure, `1/(σ²(x) 𝒮'(x))`.
pub fn speed_density(model: &DemandModel, x: f64) -> Result<f64> {
    let opts = KernelOptions::default();
    let phi = Kernel::new(model, None, &opts).exponent(model.ref_point, x)?;
    Ok((-phi).exp() / model.sigma2(x))
}

/// `(∫_z^∞ ℳ(dy), ∫_z^∞ h(y) ℳ(dy))`.
pub fn tail_integrals(model: &DemandModel, h: &HoldingCost, z: f64) -> Result<(f64, f64)> {
    let v = eval_g_ell(model, h, z)?;
    Ok((v.tail_speed, v.tail_cost))
}

pub fn eval_g_ell(model: &DemandModel, h: &HoldingCost, z: f64) -> Result<KernelValues> {
    eval_g_ell_with(model, h, z, &KernelOptions::default())
}

pub fn eval_g_ell_with(
    model: &DemandModel,
    h: &HoldingCost,
    z: f64,
    opts: &KernelOptions,
) -> Result<KernelValues> {
    Kernel::new(model, Some(h), opts).values(z)
}

/// Spot-check the declared bounds of `μ`, `σ` and monotonicity of `μ`.
pub fn validate_model(model: &DemandModel, grid: &[f64]) -> ValidationReport {
    let tol = REPORT_TOL;
    let mut report = ValidationReport::new("demand model");
    let mut prev: Option<(f64, f64)> = None;
    for &z in grid {
        let mu = model.mu(z);
        let sigma = model.sigma(z);
        report.expect(
            mu.is_finite() && mu >= model.mu_lo - tol,
            "mu lower bound",
            &[z],
            || format!("mu = {mu} < mu_lo = {}", model.mu_lo),
        );
        report.expect(
            mu.is_finite() && mu <= model.mu_hi + tol,
            "mu upper bound",
            &[z],
            || format!("mu = {mu} > mu_hi = {}", model.mu_hi),
        );
        report.expect(
            sigma.is_finite() && sigma >= model.sigma_lo - tol,
            "sigma lower bound",
            &[z],
            || format!("sigma = {sigma} < sigma_lo = {}", model.sigma_lo),
        );
        report.expect(
            sigma.is_finite() && sigma <= model.sigma_hi + tol,
            "sigma upper bound",
            &[z],
            || format!("sigma = {sigma} > sigma_hi = {}", model.sigma_hi),
        );
        if let Some((pz, pmu)) = prev {
            report.expect(mu >= pmu - tol, "mu nondecreasing", &[pz, z], || {
                format!("mu drops from {pmu} to {mu}")
            });
        }
        prev = Some((z, mu));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh_model() -> DemandModel {
        DemandModel::new(
            Coefficient::Tanh {
                base: 1.0,
                amplitude: 0.5,
                center: 0.0,
                scale: 1.0,
            },
            Coefficient::Constant(std::f64::consts::SQRT_2),
            (0.5, 1.5),
            (std::f64::consts::SQRT_2, std::f64::consts::SQRT_2),
        )
        .unwrap()
    }

    #[test]
    fn baseline_densities() {
        let m = DemandModel::baseline();
        assert!((scale_density(&m, 1.0).unwrap() - std::f64::consts::E).abs() < 1e-14);
        assert_eq!(scale_density(&m, 0.0).unwrap(), 1.0);
        assert!((speed_density(&m, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((speed_density(&m, 1.0).unwrap() - (-1f64).exp() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn baseline_tails_and_g() {
        let m = DemandModel::baseline();
        let h = HoldingCost::absolute();
        let (ts, tc) = tail_integrals(&m, &h, 0.0).unwrap();
        assert!((ts - 0.5).abs() < 1e-10);
        assert!((tc - 0.5).abs() < 1e-10);
        for z in [0.0, 0.7, 3.0] {
            let v = eval_g_ell(&m, &h, z).unwrap();
            assert!((v.g - (z + 1.0)).abs() < 1e-9 * (z + 1.0));
            assert!((v.ell - 1.0).abs() < 1e-9);
        }
        let v = eval_g_ell(&m, &h, 0.0).unwrap();
        assert!((v.g_prime - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ell_is_inverse_drift_for_constant_coefficients() {
        let h = HoldingCost::absolute();
        for (mu, sigma) in [(2.0, 1.0), (0.5, 3.0)] {
            let m = DemandModel::constant(mu, sigma).unwrap();
            let v = eval_g_ell(&m, &h, -1.3).unwrap();
            assert!((v.ell - 1.0 / mu).abs() < 1e-9 / mu);
        }
    }

    #[test]
    fn scale_density_of_tanh_drift() {
        // ∫_0^2 (1 + 0.5 tanh v) dv = 2 + 0.5 ln cosh 2.
        let m = tanh_model();
        let expect = (2.0 + 0.5 * 2f64.cosh().ln()).exp();
        let got = scale_density(&m, 2.0).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn validation_reports() {
        let m = DemandModel::new(
            Coefficient::Constant(1.0),
            Coefficient::Constant(std::f64::consts::SQRT_2),
            (0.5, 2.0),
            (1.0, 2.0),
        )
        .unwrap();
        let grid: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.5).collect();
        assert!(validate_model(&m, &grid).passed());

        let dec = DemandModel::new(
            Coefficient::custom(|z| -z),
            Coefficient::Constant(1.0),
            (0.5, 2.0),
            (1.0, 1.0),
        )
        .unwrap();
        assert!(validate_model(&dec, &grid).has("mu nondecreasing"));

        let abs = DemandModel::new(
            Coefficient::Constant(1.0),
            Coefficient::custom(f64::abs),
            (1.0, 1.0),
            (0.1, 10.0),
        )
        .unwrap();
        let r = validate_model(&abs, &grid);
        assert!(r
            .violations
            .iter()
            .any(|v| v.check == "sigma lower bound" && v.at == vec![0.0]));
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(DemandModel::constant(0.0, 1.0).is_err());
        assert!(DemandModel::new(
            Coefficient::Constant(1.0),
            Coefficient::Constant(1.0),
            (2.0, 1.0),
            (1.0, 1.0)
        )
        .is_err());
    }
}
