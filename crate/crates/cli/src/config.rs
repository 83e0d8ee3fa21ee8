//! Run configuration: a TOML document plus dotted `KEY=VAL` overrides.

use std::path::{Path, PathBuf};

use ergodic_core::cost::CostTable;
use ergodic_core::simulator::ReflectionScheme;
use ergodic_core::{
    Coefficient, DemandModel, HoldingCost, OptimizerOptions, OrderingCost, SimConfig,
    VerifierOptions,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub holding: HoldingSpec,
    pub ordering: OrderingSpec,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub verify: VerifierOptions,
    #[serde(default)]
    pub simulation: SimConfig,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        value: f64,
    },
    /// `base + amplitude·tanh((z - center)/scale)`.
    Tanh {
        base: f64,
        amplitude: f64,
        center: f64,
        scale: f64,
    },
}

impl CoefficientSpec {
    fn build(&self) -> Coefficient {
        match *self {
            CoefficientSpec::Constant { value } => Coefficient::Constant(value),
            CoefficientSpec::Tanh {
                base,
                amplitude,
                center,
                scale,
            } => Coefficient::Tanh {
                base,
                amplitude,
                center,
                scale,
            },
        }
    }

    /// Tightest bounds the family admits.
    fn natural_bounds(&self) -> [f64; 2] {
        match *self {
            CoefficientSpec::Constant { value } => [value, value],
            CoefficientSpec::Tanh {
                base, amplitude, ..
            } => [base - amplitude.abs(), base + amplitude.abs()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub drift: CoefficientSpec,
    pub volatility: CoefficientSpec,
    /// Declared `[μ̲, μ̄]`; defaults to the family's range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_bounds: Option<[f64; 2]>,
    #[serde(default)]
    pub ref_point: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HoldingSpec {
    Absolute,
    Linear { holding: f64, shortage: f64 },
    Quadratic { holding: f64, shortage: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OrderingSpec {
    Fixed {
        setup: f64,
    },
    SetupPlusLinear {
        setup: f64,
        rate: f64,
    },
    AllUnitDiscount {
        setup: f64,
        breaks: Vec<f64>,
        rates: Vec<f64>,
    },
    IncrementalDiscount {
        setup: f64,
        breaks: Vec<f64>,
        rates: Vec<f64>,
    },
    QuantityDependentSetup {
        breaks: Vec<f64>,
        setups: Vec<f64>,
        rate: f64,
    },
    Power {
        setup: f64,
        coeff: f64,
        exponent: f64,
    },
    Table {
        origin: f64,
        knots: Vec<f64>,
        left: Vec<f64>,
        right: Vec<f64>,
        tail_rate: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    /// Initial state of simulations; defaults to `S` of the simulated pair
    /// or to the barrier.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Check the HJB identity against `alpha_scale·α★` instead of `α★`.
    pub alpha_scale: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            x0: None,
            alpha_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub s: f64,
    #[serde(rename = "S")]
    pub big_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeSpec {
    BridgeMinimum,
    Projection,
}

impl From<SchemeSpec> for ReflectionScheme {
    fn from(s: SchemeSpec) -> Self {
        match s {
            SchemeSpec::BridgeMinimum => ReflectionScheme::BridgeMinimum,
            SchemeSpec::Projection => ReflectionScheme::Projection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    /// The optimal pair found by the optimizer.
    #[default]
    Optimal,
    Ss {
        s: f64,
        #[serde(rename = "S")]
        big_s: f64,
    },
    Never,
    /// The uncontrolled process reflected at `barrier`.
    Reflected {
        barrier: f64,
        span: f64,
        bins: usize,
        scheme: SchemeSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<PairSpec>,
    pub j: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Largest order quantity considered when bounding the setup part.
    pub xi_max: f64,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            base: None,
            j: vec![10.0, 20.0, 40.0],
            x0: None,
            xi_max: 1e6,
        }
    }
}

/// Model, holding cost and ordering cost built from a configuration.
pub struct Problem {
    pub model: DemandModel,
    pub holding: HoldingCost,
    pub ordering: OrderingCost,
}

impl RunConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            CliError::config(format!("config is not valid TOML: {e}"))
        })?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(format!("config: {e}")))?;
        cfg.simulation.check().map_err(CliError::from)?;
        cfg.check_pairs()?;
        Ok(cfg)
    }

    fn check_pairs(&self) -> Result<(), CliError> {
        let mut pairs = Vec::new();
        if let PolicySpec::Ss { s, big_s } = self.policy {
            pairs.push(("policy", s, big_s));
        }
        if let Some(b) = self.compare.base {
            pairs.push(("compare.base", b.s, b.big_s));
        }
        for (name, s, big_s) in pairs {
            if !(s.is_finite() && big_s.is_finite() && s < big_s) {
                return Err(CliError::config(format!(
                    "{name}: need finite s < S, got ({s}, {big_s})"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let m = &self.model;
        let mu = m.mu_bounds.unwrap_or_else(|| m.drift.natural_bounds());
        let sigma = m
            .sigma_bounds
            .unwrap_or_else(|| m.volatility.natural_bounds());
        let model = DemandModel::new(
            m.drift.build(),
            m.volatility.build(),
            (mu[0], mu[1]),
            (sigma[0], sigma[1]),
        )?
        .with_ref_point(m.ref_point);
        let holding = match self.holding {
            HoldingSpec::Absolute => HoldingCost::absolute(),
            HoldingSpec::Linear { holding, shortage } => HoldingCost::linear(holding, shortage)?,
            HoldingSpec::Quadratic { holding, shortage } => {
                HoldingCost::quadratic(holding, shortage)?
            }
        };
        let ordering = match &self.ordering {
            OrderingSpec::Fixed { setup } => OrderingCost::fixed(*setup)?,
            OrderingSpec::SetupPlusLinear { setup, rate } => {
                OrderingCost::setup_plus_linear(*setup, *rate)?
            }
            OrderingSpec::AllUnitDiscount {
                setup,
                breaks,
                rates,
            } => OrderingCost::all_unit_discount(*setup, breaks.clone(), rates.clone())?,
            OrderingSpec::IncrementalDiscount {
                setup,
                breaks,
                rates,
            } => OrderingCost::incremental_discount(*setup, breaks.clone(), rates.clone())?,
            OrderingSpec::QuantityDependentSetup {
                breaks,
                setups,
                rate,
            } => OrderingCost::quantity_dependent_setup(breaks.clone(), setups.clone(), *rate)?,
            OrderingSpec::Power {
                setup,
                coeff,
                exponent,
            } => OrderingCost::power(*setup, *coeff, *exponent)?,
            OrderingSpec::Table {
                origin,
                knots,
                left,
                right,
                tail_rate,
            } => OrderingCost::table(CostTable::new(
                *origin,
                knots.clone(),
                left.clone(),
                right.clone(),
                *tail_rate,
            )?)?,
        };
        Ok(Problem {
            model,
            holding,
            ordering,
        })
    }
}

/// Set `a.b.c = VAL`, creating intermediate tables. `VAL` is read as a TOML
/// value and falls back to a plain string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override {spec:?} is not KEY=VAL")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!(
            "override key {key:?} is malformed"
        )));
    }
    let raw = raw.trim();
    let value = raw
        .parse::<toml::Value>()
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()));
    let (last, path) = parts.split_last().expect("key has at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Configuration of the reference problem `μ ≡ 1`, `σ² ≡ 2`, `h = |z|`,
/// `c = 1{ξ>0}`.
#[cfg(test)]
pub const BASELINE: &str = r#"
[model]
drift = { kind = "constant", value = 1.0 }
volatility = { kind = "constant", value = 1.4142135623730951 }

[holding]
kind = "absolute"

[ordering]
kind = "fixed"
setup = 1.0
"#;
