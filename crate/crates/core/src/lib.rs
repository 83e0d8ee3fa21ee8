//! Ergodic inventory control of an inventory-dependent diffusion.
//!
//! The inventory level follows `dZ = -μ(Z) dt - σ(Z) dW + dQ` where `Q` is the
//! cumulative order process. This crate evaluates the long-run average cost of
//! `(s, S)` policies in closed form, finds the optimal pair, certifies it
//! through a lower-bound value function and cross-checks everything by
//! simulation.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::too_many_arguments
)]

pub mod cost;
pub mod diffusion;
pub mod error;
pub mod optimizer;
pub mod policy;
pub mod quadrature;
pub mod simulator;
pub mod validation;
pub mod verifier;

pub use cost::{
    decompose, validate_cost, validate_holding, CostDecomposition, HoldingCost, OrderingCost,
};
pub use diffusion::{
    eval_g_ell, scale_density, speed_density, tail_integrals, validate_model, Coefficient,
    DemandModel, KernelOptions, KernelValues,
};
pub use error::{Error, Result};
pub use optimizer::{bracket, optimize, Bracket, Optimizer, OptimizerOptions, Optimum};
pub use policy::{alpha, cycle_stats, gamma, CycleKernel, PolicyEvaluation};
pub use simulator::{
    make_ss_policy, regenerative_cycle_stats, simulate, simulate_coupled, simulate_reflected,
    stationary_cdf, truncate_policy, CostTrace, CoupledRun, ImpulsePolicy, SimConfig, SsPolicy,
};
pub use validation::{ValidationReport, Violation};
pub use verifier::{
    certify, find_z_bar, ValueCertificate, ValueFunction, Verifier, VerifierOptions,
};
