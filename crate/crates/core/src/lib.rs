//! Kernel-smoothed, triply robust estimation of the mediation functional
//! `ψ(a, a') = E[ E[ E[Y | A = a, M, X] | A = a', X ] ]` for continuous
//! treatments, with cross-fitting, normal-theory confidence intervals and a
//! Monte Carlo harness that checks the estimator against closed-form truth.

pub mod data;
pub mod dgp;
pub mod effects;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod nuisance;
pub mod par;
pub mod quadrature;

pub use data::{Dataset, Observation};
pub use dgp::{DgpSpec, OracleEffects};
pub use effects::{decompose, EffectDecomposition, EffectEstimate};
pub use error::{Error, Result};
pub use estimator::theory::{smoothing_bias, theoretical_bias_variance, TheoreticalBiasVariance};
pub use estimator::{
    estimate_psi, estimate_psi_plugin, estimate_psi_with_plan, moment_function, solve_fold_psi, BandwidthRule,
    CrossFit, EstimateResult, EstimatorConfig, FoldPlan, TreatmentPair,
};
pub use harness::{normality_check, run_experiment, ExperimentReport, ExperimentSpec};
pub use kernels::{KernelFamily, KernelMoments, KernelSpec};
pub use nuisance::{Nuisance, NuisanceConfig, NuisanceFit, Pattern};
pub use par::Execution;
