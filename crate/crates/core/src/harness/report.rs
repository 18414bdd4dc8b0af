use std::io::Write;

use serde::{Deserialize, Serialize};

use super::stats::{mean_sd, shape};
use super::{EstimatorKind, RepEstimate};
use crate::error::Result;
use crate::estimator::TreatmentPair;
use crate::nuisance::Pattern;

pub const CSV_HEADER: [&str; 14] = [
    "estimator",
    "n",
    "a",
    "a_prime",
    "pattern",
    "bias",
    "sd",
    "rmse",
    "mean_se",
    "coverage",
    "skew",
    "kurtosis",
    "reps_completed",
    "wall_ms",
];

/// A replication that produced no estimate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub rep: usize,
    pub seed: u64,
    pub message: String,
}

/// Summary of one `(estimator, n, pair, pattern)` cell over its completed
/// replications. Standard deviations use the population denominator, so
/// `rmse² = bias² + sd²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub a: f64,
    pub a_prime: f64,
    pub pattern: Pattern,
    pub truth: f64,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    /// Absent for estimators without a standard error.
    pub mean_se: Option<f64>,
    pub coverage: Option<f64>,
    pub skew: Option<f64>,
    pub kurtosis: Option<f64>,
    pub reps_completed: usize,
    pub reps_requested: usize,
    pub wall_ms: f64,
    pub failures: Vec<Failure>,
    /// Per-replication estimates in replication order.
    #[serde(skip)]
    pub estimates: Vec<f64>,
    #[serde(skip)]
    pub standard_errors: Vec<f64>,
}

impl CellReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn aggregate(
        estimator: EstimatorKind,
        n: usize,
        pair: &TreatmentPair,
        pattern: Pattern,
        truth: f64,
        completed: &[RepEstimate],
        failures: Vec<Failure>,
        reps_requested: usize,
        wall_ms: f64,
    ) -> Self {
        let estimates: Vec<f64> = completed.iter().map(|r| r.estimate).collect();
        let standard_errors: Vec<f64> = completed.iter().filter_map(|r| r.se).collect();
        let (bias, sd, rmse) = if estimates.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let (mean, sd) = mean_sd(&estimates);
            let mse = estimates.iter().map(|e| (e - truth) * (e - truth)).sum::<f64>() / estimates.len() as f64;
            (mean - truth, sd, mse.sqrt())
        };
        let mean_of = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let covered: Vec<f64> = completed
            .iter()
            .filter_map(|r| r.covered.map(|c| if c { 1.0 } else { 0.0 }))
            .collect();
        let shape = shape(&estimates);
        Self {
            estimator,
            n,
            a: pair.a[0],
            a_prime: pair.a_prime[0],
            pattern,
            truth,
            bias,
            sd,
            rmse,
            mean_se: mean_of(&standard_errors),
            coverage: mean_of(&covered),
            skew: shape.map(|s| s.0),
            kurtosis: shape.map(|s| s.1),
            reps_completed: estimates.len(),
            reps_requested,
            wall_ms,
            failures,
            estimates,
            standard_errors,
        }
    }

    /// Monte Carlo standard error of the mean estimate.
    pub fn mc_se(&self) -> f64 {
        self.sd / (self.reps_completed as f64).sqrt()
    }

    pub fn is_complete(&self) -> bool {
        self.reps_completed == self.reps_requested
    }

    fn csv_record(&self) -> [String; 14] {
        let opt = |v: Option<f64>| v.map_or_else(String::new, num);
        [
            self.estimator.to_string(),
            self.n.to_string(),
            num(self.a),
            num(self.a_prime),
            self.pattern.to_string(),
            num(self.bias),
            num(self.sd),
            num(self.rmse),
            opt(self.mean_se),
            opt(self.coverage),
            opt(self.skew),
            opt(self.kurtosis),
            self.reps_completed.to_string(),
            num(self.wall_ms),
        ]
    }
}

/// Shortest representation that round-trips; empty for non-finite values.
fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dgp: String,
    pub base_seed: u64,
    pub reps: usize,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn find(&self, estimator: EstimatorKind, n: usize, a: f64, a_prime: f64, pattern: Pattern) -> Option<&CellReport> {
        self.cells.iter().find(|c| {
            c.estimator == estimator && c.n == n && c.a == a && c.a_prime == a_prime && c.pattern == pattern
        })
    }

    /// One row per cell with the fixed [`CSV_HEADER`] columns.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for cell in &self.cells {
            w.write_record(cell.csv_record())?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
