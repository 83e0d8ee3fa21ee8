//! Impulse policies: given the left limit of the inventory at a step, how
//! much to order.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Information about the base process when driving a truncated policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledContext {
    /// Order placed by the base policy at this instant.
    pub base_order: f64,
    /// Base inventory right after its order, `Z(t)`.
    pub base_post: f64,
    /// The truncated process went from positive to `≤ 0` during the step.
    pub crossed_zero: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionContext {
    pub time: f64,
    /// Left limit `Z(t-)` of the controlled process.
    pub state: f64,
    pub coupled: Option<CoupledContext>,
}

impl DecisionContext {
    pub fn new(time: f64, state: f64) -> Self {
        Self {
            time,
            state,
            coupled: None,
        }
    }
}

pub trait ImpulsePolicy: Send + Sync {
    /// Order quantity at this instant; zero means no order.
    fn decide(&self, ctx: &DecisionContext) -> f64;

    fn label(&self) -> String;

    /// Policies that can only run alongside a base process.
    fn needs_coupling(&self) -> bool {
        false
    }
}

/// Order up to `S` whenever the inventory is at or below `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsPolicy {
    pub s: f64,
    pub big_s: f64,
}

pub fn make_ss_policy(s: f64, big_s: f64) -> Result<SsPolicy> {
    if !(s.is_finite() && big_s.is_finite() && s < big_s) {
        return Err(Error::Domain(format!(
            "need finite s < S, got ({s}, {big_s})"
        )));
    }
    Ok(SsPolicy { s, big_s })
}

impl ImpulsePolicy for SsPolicy {
    fn decide(&self, ctx: &DecisionContext) -> f64 {
        if ctx.state <= self.s {
            self.big_s - ctx.state
        } else {
            0.0
        }
    }

    fn label(&self) -> String {
        format!("(s,S)=({}, {})", self.s, self.big_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeverOrder;

impl ImpulsePolicy for NeverOrder {
    fn decide(&self, _: &DecisionContext) -> f64 {
        0.0
    }

    fn label(&self) -> String {
        "never-order".into()
    }
}

/// Arbitrary state- and clock-feedback rule.
#[derive(Clone)]
pub struct FnPolicy {
    label: String,
    rule: Arc<dyn Fn(&DecisionContext) -> f64 + Send + Sync>,
}

impl FnPolicy {
    pub fn new(
        label: impl Into<String>,
        rule: impl Fn(&DecisionContext) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            rule: Arc::new(rule),
        }
    }
}

impl ImpulsePolicy for FnPolicy {
    fn decide(&self, ctx: &DecisionContext) -> f64 {
        (self.rule)(ctx)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Level-`j` truncation of a base policy. Run through
/// [`simulate_coupled`](super::simulate_coupled), which supplies the base
/// process in the decision context.
#[derive(Clone)]
pub struct TruncatedPolicy {
    base: Arc<dyn ImpulsePolicy>,
    j: f64,
}

pub fn truncate_policy(base: Arc<dyn ImpulsePolicy>, j: f64) -> Result<TruncatedPolicy> {
    if !(j.is_finite() && j > 0.0) {
        return Err(Error::Domain(format!(
            "truncation level must be positive, got {j}"
        )));
    }
    Ok(TruncatedPolicy { base, j })
}

impl TruncatedPolicy {
    pub fn level(&self) -> f64 {
        self.j
    }

    pub fn base(&self) -> &Arc<dyn ImpulsePolicy> {
        &self.base
    }

    /// The truncation rule.
    ///
    /// On reaching zero the truncated process is lifted to `min(Z(t), j)`.
    /// Otherwise a base order is dropped while `Z_j(t-) > j/2`, passed
    /// through if it keeps `Z_j ≤ j`, and clipped to reach exactly `j`
    /// otherwise.
    pub fn order(&self, z_minus: f64, crossed_zero: bool, base_order: f64, base_post: f64) -> f64 {
        let j = self.j;
        if crossed_zero {
            return (base_post.min(j) - z_minus).max(0.0);
        }
        if base_order <= 0.0 || z_minus > 0.5 * j {
            return 0.0;
        }
        if z_minus + base_order <= j {
            base_order
        } else {
            j - z_minus
        }
    }
}

impl ImpulsePolicy for TruncatedPolicy {
    fn decide(&self, ctx: &DecisionContext) -> f64 {
        match ctx.coupled {
            Some(c) => self.order(ctx.state, c.crossed_zero, c.base_order, c.base_post),
            None => f64::NAN,
        }
    }

    fn label(&self) -> String {
        format!("truncate[j={}]({})", self.j, self.base.label())
    }

    fn needs_coupling(&self) -> bool {
        true
    }
}
