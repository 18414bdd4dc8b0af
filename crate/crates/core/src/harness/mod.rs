//! Replicated Monte Carlo experiments against closed-form truth.
//!
//! One task per `(n, replication)` draws a dataset, fits the cross-fitted
//! nuisances once and evaluates every `(pair, pattern, estimator)` cell on
//! it. Tasks may run in parallel; their outputs are collected by index and
//! reduced in replication order, so reports do not depend on the worker
//! count.

mod report;
mod stats;

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use report::{CellReport, ExperimentReport, Failure, CSV_HEADER};
pub use stats::{normality_check, NormalityCheck, KURTOSIS_LIMIT, MIN_NORMALITY_SAMPLE, SKEW_LIMIT};

use crate::data::Dataset;
use crate::dgp::DgpSpec;
use crate::error::{Error, Result};
use crate::estimator::{plugin_from_fit, CrossFit, EstimatorConfig, TreatmentPair};
use crate::nuisance::{NuisanceFit, Pattern};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Cross-fitted kernel-smoothed triply robust estimator.
    Tr,
    /// Full-sample plug-in `mean η(a, a', X)`.
    Plugin,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Tr => "tr",
            EstimatorKind::Plugin => "plugin",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dgp: DgpSpec,
    /// Kernel, bandwidth, nuisance and fold settings. Its `misspecification`
    /// is ignored in favour of `patterns`.
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub n_grid: Vec<usize>,
    pub pairs: Vec<TreatmentPair>,
    pub reps: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_patterns")]
    pub patterns: Vec<Pattern>,
    #[serde(default)]
    pub base_seed: u64,
    /// Records wall-clock time per cell; off by default so that reports are
    /// byte-reproducible.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Tr]
}

fn default_patterns() -> Vec<Pattern> {
    vec![Pattern::NONE]
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        self.estimator.validate()?;
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.pairs.is_empty() || self.estimators.is_empty() || self.patterns.is_empty() {
            return Err(Error::Config("n_grid, pairs, estimators and patterns must be non-empty".into()));
        }
        if let Some(pair) = self.pairs.iter().find(|p| p.dim() != 1) {
            return Err(Error::Config(format!("simulated treatments are scalar; pair {pair:?} is not")));
        }
        for p in &self.pairs {
            TreatmentPair::new(p.a.clone(), p.a_prime.clone())?;
        }
        if self.estimator.kernel.treatment_dim != 1 {
            return Err(Error::Config("simulated treatments are scalar; set kernel.treatment_dim = 1".into()));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < 2 * self.estimator.folds) {
            return Err(Error::Config(format!("n = {n} is too small for {} folds", self.estimator.folds)));
        }
        Ok(())
    }

    /// Seed of replication `rep` at sample size `n`:
    /// `base ⊕ mix(hash("n=<n>"), rep)`.
    pub fn replication_seed(&self, n: usize, rep: usize) -> u64 {
        let cell = stats::fnv1a(format!("n={n}").as_bytes());
        self.base_seed ^ stats::splitmix64(cell ^ stats::splitmix64(rep as u64))
    }

    fn cells_per_task(&self) -> usize {
        self.pairs.len() * self.patterns.len() * self.estimators.len()
    }
}

/// One estimator's output for one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RepEstimate {
    pub estimate: f64,
    pub se: Option<f64>,
    pub covered: Option<bool>,
}

struct TaskOutput {
    seed: u64,
    elapsed_ms: f64,
    /// Indexed pair-major, then pattern, then estimator.
    results: Vec<std::result::Result<RepEstimate, String>>,
}

/// Runs every cell of `spec` and aggregates the replications.
pub fn run_experiment(spec: &ExperimentSpec, exec: Execution) -> Result<ExperimentReport> {
    spec.validate()?;
    let truths: Vec<f64> = spec.pairs.iter().map(|p| spec.dgp.oracle_psi(p.a[0], p.a_prime[0])).collect();
    let tasks: Vec<(usize, usize)> = spec
        .n_grid
        .iter()
        .flat_map(|&n| (0..spec.reps).map(move |r| (n, r)))
        .collect();
    let outputs = exec.map(tasks.len(), |t| {
        let (n, rep) = tasks[t];
        run_task(spec, &truths, n, spec.replication_seed(n, rep))
    });

    let mut cells = Vec::new();
    for (ni, &n) in spec.n_grid.iter().enumerate() {
        let block = &outputs[ni * spec.reps..(ni + 1) * spec.reps];
        let elapsed: f64 = block.iter().map(|o| o.elapsed_ms).sum();
        let mut k = 0;
        for (pi, pair) in spec.pairs.iter().enumerate() {
            for &pattern in &spec.patterns {
                for &estimator in &spec.estimators {
                    let mut completed = Vec::with_capacity(spec.reps);
                    let mut failures = Vec::new();
                    for (rep, out) in block.iter().enumerate() {
                        match &out.results[k] {
                            Ok(r) => completed.push(*r),
                            Err(message) => failures.push(Failure {
                                rep,
                                seed: out.seed,
                                message: message.clone(),
                            }),
                        }
                    }
                    for f in &failures {
                        log::warn!("{estimator} n={n} pattern={pattern} rep {} (seed {}): {}", f.rep, f.seed, f.message);
                    }
                    cells.push(CellReport::aggregate(
                        estimator,
                        n,
                        pair,
                        pattern,
                        truths[pi],
                        &completed,
                        failures,
                        spec.reps,
                        if spec.record_timing { elapsed } else { 0.0 },
                    ));
                    k += 1;
                }
            }
        }
    }
    Ok(ExperimentReport {
        dgp: spec.dgp.name.clone(),
        base_seed: spec.base_seed,
        reps: spec.reps,
        cells,
    })
}

fn run_task(spec: &ExperimentSpec, truths: &[f64], n: usize, seed: u64) -> TaskOutput {
    let start = spec.record_timing.then(Instant::now);
    let results = match evaluate_task(spec, truths, n, seed) {
        Ok(results) => results,
        Err(e) => vec![Err(e.to_string()); spec.cells_per_task()],
    };
    TaskOutput {
        seed,
        elapsed_ms: start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3),
        results,
    }
}

type CellResults = Vec<std::result::Result<RepEstimate, String>>;

fn evaluate_task(spec: &ExperimentSpec, truths: &[f64], n: usize, seed: u64) -> Result<CellResults> {
    let data = spec.dgp.generate_with_seed(n, seed)?;
    let config = EstimatorConfig {
        seed: spec.estimator.seed ^ seed,
        misspecification: Pattern::NONE,
        ..spec.estimator
    };
    let wants = |k| spec.estimators.contains(&k);
    let cross = if wants(EstimatorKind::Tr) {
        Some(CrossFit::fit(&data, &config)?)
    } else {
        None
    };
    let full = if wants(EstimatorKind::Plugin) {
        Some(NuisanceFit::fit(&data, &config.nuisance)?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(spec.cells_per_task());
    let by_pattern: Vec<(Option<CrossFit>, Option<NuisanceFit>)> = spec
        .patterns
        .iter()
        .map(|&p| {
            (
                cross.as_ref().map(|c| c.misspecified(p)),
                full.as_ref().map(|f| f.misspecify_pattern(p)),
            )
        })
        .collect();
    for (pi, pair) in spec.pairs.iter().enumerate() {
        for (cross, full) in &by_pattern {
            for &kind in &spec.estimators {
                out.push(evaluate_cell(kind, cross.as_ref(), full.as_ref(), &data, pair, truths[pi]).map_err(|e| e.to_string()));
            }
        }
    }
    Ok(out)
}

fn evaluate_cell(
    kind: EstimatorKind,
    cross: Option<&CrossFit>,
    full: Option<&NuisanceFit>,
    data: &Dataset,
    pair: &TreatmentPair,
    truth: f64,
) -> Result<RepEstimate> {
    match kind {
        EstimatorKind::Tr => {
            let r = cross.expect("cross-fit prepared for tr").estimate(data, pair)?;
            Ok(RepEstimate {
                estimate: r.psi_hat,
                se: Some(r.se),
                covered: Some(r.covers(truth)),
            })
        }
        EstimatorKind::Plugin => Ok(RepEstimate {
            estimate: plugin_from_fit(full.expect("full fit prepared for plugin"), data, pair)?,
            se: None,
            covered: None,
        }),
    }
}
