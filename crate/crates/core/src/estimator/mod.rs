//! Kernel-smoothed triply robust estimator of the mediation functional.
//!
//! For a treatment pair `(a, a')` the moment function is
//!
//! ```text
//! m(O; psi) = K_h(A - a) λ(a, X) α(a', M, X) / α(a, M, X) (Y - γ(a, M, X))
//!           + K_h(A - a') λ(a', X) (γ(a, M, X) - η(a, a', X))
//!           + η(a, a', X) - psi
//! ```
//!
//! It is affine in `psi` with slope -1, so each fold's estimating equation
//! is solved by the fold mean of `m(O; 0)`.

mod folds;
pub mod theory;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub use folds::FoldPlan;

use crate::data::{mean, Dataset, Observation};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::nuisance::{NuisanceConfig, NuisanceFit, Pattern};
use crate::par::Execution;

/// Arguments `(a, a')` of the mediation functional.
/// Deserializes from scalars (`{ a = 1.0, a_prime = 0.0 }`) or arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentPair {
    #[serde(deserialize_with = "scalar_or_vec")]
    pub a: Vec<f64>,
    #[serde(deserialize_with = "scalar_or_vec")]
    pub a_prime: Vec<f64>,
}

fn scalar_or_vec<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Scalar(f64),
        Vector(Vec<f64>),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::Scalar(v) => vec![v],
        Raw::Vector(v) => v,
    })
}

impl TreatmentPair {
    pub fn new(a: Vec<f64>, a_prime: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != a_prime.len() {
            return Err(Error::Config(format!(
                "treatment pair has mismatched dimensions {} and {}",
                a.len(),
                a_prime.len()
            )));
        }
        if a.iter().chain(&a_prime).any(|v| !v.is_finite()) {
            return Err(Error::Config("treatment pair must be finite".into()));
        }
        Ok(Self { a, a_prime })
    }

    pub fn scalar(a: f64, a_prime: f64) -> Self {
        Self {
            a: vec![a],
            a_prime: vec![a_prime],
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn swapped(&self) -> Self {
        Self {
            a: self.a_prime.clone(),
            a_prime: self.a.clone(),
        }
    }

    /// `(a, a)`, the pair whose functional is the mean potential outcome at `a`.
    pub fn diagonal_a(&self) -> Self {
        Self {
            a: self.a.clone(),
            a_prime: self.a.clone(),
        }
    }

    pub fn diagonal_a_prime(&self) -> Self {
        Self {
            a: self.a_prime.clone(),
            a_prime: self.a_prime.clone(),
        }
    }
}

/// How the bandwidth constant maps to `h` for a sample of size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum BandwidthRule {
    /// `h = c * sd(A) * n^(-1/(d_A + 4))`, averaging the treatment standard
    /// deviations when `d_A > 1`.
    #[default]
    SdScaled,
    /// `h = c * n^(-1/(d_A + 4))`.
    Raw,
    /// A fixed `h`, independent of the data.
    Fixed { h: f64 },
}

impl BandwidthRule {
    pub fn bandwidth(&self, kernel: &KernelSpec, data: &Dataset) -> Result<f64> {
        let h = match *self {
            BandwidthRule::Fixed { h } => h,
            BandwidthRule::Raw => kernel.bandwidth(data.len())?,
            BandwidthRule::SdScaled => {
                let sd = data.treatment_sd();
                let scale = sd.iter().sum::<f64>() / sd.len() as f64;
                kernel.bandwidth(data.len())? * scale
            }
        };
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Degenerate(format!("bandwidth evaluates to {h}")));
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub bandwidth: BandwidthRule,
    #[serde(default)]
    pub nuisance: NuisanceConfig,
    /// Number of cross-fitting folds. One fold fits and evaluates on the
    /// full sample.
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    /// Nuisances replaced by intercept-only fits.
    #[serde(default)]
    pub misspecification: Pattern,
}

fn default_folds() -> usize {
    5
}

fn default_ci_level() -> f64 {
    0.95
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            bandwidth: BandwidthRule::default(),
            nuisance: NuisanceConfig::default(),
            folds: default_folds(),
            seed: 0,
            ci_level: default_ci_level(),
            misspecification: Pattern::NONE,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.nuisance.validate()?;
        if self.folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config(format!("ci_level must lie in (0, 1), got {}", self.ci_level)));
        }
        if let BandwidthRule::Fixed { h } = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Config(format!("fixed bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// Point estimate, standard error and confidence interval for `ψ(a, a')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub pair: TreatmentPair,
    pub psi_hat: f64,
    pub per_fold: Vec<f64>,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub ci_level: f64,
    pub h_used: f64,
    pub n: usize,
}

impl EstimateResult {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }
}

/// Evaluates the moment function for one observation.
pub fn moment_function(
    obs: &Observation<'_>,
    fit: &NuisanceFit,
    pair: &TreatmentPair,
    psi: f64,
    kernel: &KernelSpec,
    h: f64,
) -> Result<f64> {
    if obs.a.len() != pair.dim() || kernel.treatment_dim != pair.dim() {
        return Err(Error::Domain(format!(
            "treatment dimension {} does not match pair dimension {} and kernel dimension {}",
            obs.a.len(),
            pair.dim(),
            kernel.treatment_dim
        )));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {h}")));
    }
    Ok(score(obs, fit, pair, kernel, h)? - psi)
}

/// `m(O; psi = 0)`. Kernel terms are skipped when their weight is zero so
/// that observations outside both windows never touch `α` or `λ`.
fn score(obs: &Observation<'_>, fit: &NuisanceFit, pair: &TreatmentPair, kernel: &KernelSpec, h: f64) -> Result<f64> {
    let (a, a_prime, x) = (&pair.a[..], &pair.a_prime[..], obs.x);
    let eta = finite(fit.eta(a, a_prime, x)?, "eta")?;
    let mut total = eta;
    let k_a = kernel.smoothed_indicator(obs.a, a, h);
    let k_ap = kernel.smoothed_indicator(obs.a, a_prime, h);
    if k_a == 0.0 && k_ap == 0.0 {
        return Ok(total);
    }
    let gamma = finite(fit.gamma(a, obs.m, x), "gamma")?;
    if k_a != 0.0 {
        let ratio = fit.alpha(a_prime, obs.m, x) / fit.alpha(a, obs.m, x);
        let term = k_a * fit.lambda(a, x) * finite(ratio, "mediator density ratio")? * (obs.y - gamma);
        total += finite(term, "weighted outcome residual")?;
    }
    if k_ap != 0.0 {
        let term = k_ap * fit.lambda(a_prime, x) * (gamma - eta);
        total += finite(term, "weighted regression residual")?;
    }
    finite(total, "moment")
}

fn finite(v: f64, term: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { term })
    }
}

/// Root of the fold estimating equation: the fold mean of `m(O; 0)`.
pub fn solve_fold_psi(
    fold: &Dataset,
    fit: &NuisanceFit,
    pair: &TreatmentPair,
    kernel: &KernelSpec,
    h: f64,
) -> Result<f64> {
    if fold.is_empty() {
        return Err(Error::EmptyFold { fold: 0 });
    }
    let mut sum = 0.0;
    for obs in fold.rows() {
        sum += moment_function(&obs, fit, pair, 0.0, kernel, h)?;
    }
    Ok(sum / fold.len() as f64)
}

/// Centred population standard deviation of the moment values divided by
/// `sqrt(n)`.
pub fn standard_error(moments: &[f64]) -> f64 {
    let n = moments.len() as f64;
    if moments.is_empty() {
        return f64::NAN;
    }
    let m = mean(moments);
    let ss: f64 = moments.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / n).sqrt() / n.sqrt()
}

/// Two-sided normal interval `estimate ± z se`.
pub fn confidence_interval(estimate: f64, se: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("ci_level must lie in (0, 1), got {level}")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok((estimate - z * se, estimate + z * se))
}

/// Fold plan and per-fold nuisance fits, reusable across treatment pairs.
#[derive(Debug, Clone)]
pub struct CrossFit {
    plan: FoldPlan,
    fits: Vec<NuisanceFit>,
    kernel: KernelSpec,
    h: f64,
    ci_level: f64,
}

impl CrossFit {
    pub fn fit(data: &Dataset, config: &EstimatorConfig) -> Result<Self> {
        Self::fit_with(data, config, Execution::Sequential)
    }

    /// Fits the per-fold nuisances, possibly in parallel across folds.
    pub fn fit_with(data: &Dataset, config: &EstimatorConfig, exec: Execution) -> Result<Self> {
        config.validate()?;
        let plan = FoldPlan::new(data.len(), config.folds, config.seed)?;
        Self::with_plan(data, config, plan, exec)
    }

    pub fn with_plan(data: &Dataset, config: &EstimatorConfig, plan: FoldPlan, exec: Execution) -> Result<Self> {
        config.validate()?;
        if plan.len() != data.len() {
            return Err(Error::Config(format!(
                "fold plan covers {} rows but the data have {}",
                plan.len(),
                data.len()
            )));
        }
        if config.kernel.treatment_dim != data.treatment_dim() {
            return Err(Error::Config(format!(
                "kernel treatment_dim {} does not match data treatment dimension {}",
                config.kernel.treatment_dim,
                data.treatment_dim()
            )));
        }
        let h = config.bandwidth.bandwidth(&config.kernel, data)?;
        let fits = exec.map(plan.folds(), |l| {
            let train = if plan.folds() == 1 {
                data.clone()
            } else {
                data.select(&plan.complement(l))
            };
            NuisanceFit::fit(&train, &config.nuisance)
                .map(|fit| fit.misspecify_pattern(config.misspecification))
                .map_err(|e| e.in_fold(l))
        });
        Ok(Self {
            plan,
            fits: fits.into_iter().collect::<Result<_>>()?,
            kernel: config.kernel,
            h,
            ci_level: config.ci_level,
        })
    }

    /// Copy whose per-fold fits have the nuisances in `pattern` replaced by
    /// their intercept-only versions.
    pub fn misspecified(&self, pattern: Pattern) -> Self {
        Self {
            fits: self.fits.iter().map(|f| f.misspecify_pattern(pattern)).collect(),
            ..self.clone()
        }
    }

    pub fn plan(&self) -> &FoldPlan {
        &self.plan
    }

    pub fn fits(&self) -> &[NuisanceFit] {
        &self.fits
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// `m(O_i; psi = 0)` for every row, each evaluated with the fit of the
    /// row's own fold.
    pub fn scores(&self, data: &Dataset, pair: &TreatmentPair) -> Result<Vec<f64>> {
        if pair.dim() != data.treatment_dim() {
            return Err(Error::Config(format!(
                "pair dimension {} does not match data treatment dimension {}",
                pair.dim(),
                data.treatment_dim()
            )));
        }
        warn_outside_support(data, pair);
        (0..data.len())
            .map(|i| {
                let fold = self.plan.fold_of(i);
                score(&data.row(i), &self.fits[fold], pair, &self.kernel, self.h).map_err(|e| e.in_fold(fold))
            })
            .collect()
    }

    /// Per-fold roots given row scores.
    pub fn fold_estimates(&self, scores: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.plan.folds()];
        for (i, s) in scores.iter().enumerate() {
            sums[self.plan.fold_of(i)] += s;
        }
        sums.iter()
            .zip(self.plan.sizes())
            .map(|(s, size)| s / size as f64)
            .collect()
    }

    pub fn estimate(&self, data: &Dataset, pair: &TreatmentPair) -> Result<EstimateResult> {
        let scores = self.scores(data, pair)?;
        self.result_from_scores(pair, &scores)
    }

    pub(crate) fn result_from_scores(&self, pair: &TreatmentPair, scores: &[f64]) -> Result<EstimateResult> {
        let per_fold = self.fold_estimates(scores);
        let psi_hat = mean(&per_fold);
        let (se, (ci_lower, ci_upper)) = self.variance(scores, psi_hat)?;
        Ok(EstimateResult {
            pair: pair.clone(),
            psi_hat,
            per_fold,
            se,
            ci_lower,
            ci_upper,
            ci_level: self.ci_level,
            h_used: self.h,
            n: scores.len(),
        })
    }

    /// Standard error from the empirical moment variance at `psi_hat`, and
    /// the matching confidence interval.
    pub fn variance(&self, scores: &[f64], psi_hat: f64) -> Result<(f64, (f64, f64))> {
        let moments: Vec<f64> = scores.iter().map(|s| s - psi_hat).collect();
        let se = standard_error(&moments);
        Ok((se, confidence_interval(psi_hat, se, self.ci_level)?))
    }

    pub fn ci_level(&self) -> f64 {
        self.ci_level
    }
}

/// Cross-fitted estimate of `ψ(a, a')` with its standard error.
pub fn estimate_psi(data: &Dataset, pair: &TreatmentPair, config: &EstimatorConfig) -> Result<EstimateResult> {
    CrossFit::fit(data, config)?.estimate(data, pair)
}

/// Like [`estimate_psi`] with an explicit fold assignment.
pub fn estimate_psi_with_plan(
    data: &Dataset,
    pair: &TreatmentPair,
    config: &EstimatorConfig,
    plan: FoldPlan,
) -> Result<EstimateResult> {
    CrossFit::with_plan(data, config, plan, Execution::Sequential)?.estimate(data, pair)
}

/// Plug-in estimate `(1/n) Σ η(a, a', X_i)` with nuisances fit on the full
/// sample.
pub fn estimate_psi_plugin(data: &Dataset, pair: &TreatmentPair, config: &EstimatorConfig) -> Result<f64> {
    config.validate()?;
    let fit = NuisanceFit::fit(data, &config.nuisance)?.misspecify_pattern(config.misspecification);
    plugin_from_fit(&fit, data, pair)
}

/// Sample mean of `η(a, a', X_i)` under an existing fit.
pub fn plugin_from_fit(fit: &NuisanceFit, data: &Dataset, pair: &TreatmentPair) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Degenerate("empty sample".into()));
    }
    let mut sum = 0.0;
    for obs in data.rows() {
        sum += finite(fit.eta(&pair.a, &pair.a_prime, obs.x)?, "eta")?;
    }
    Ok(sum / data.len() as f64)
}

fn warn_outside_support(data: &Dataset, pair: &TreatmentPair) {
    let range = data.treatment_range();
    let outside = |t: &[f64]| t.iter().zip(&range).any(|(v, (lo, hi))| v < lo || v > hi);
    if outside(&pair.a) || outside(&pair.a_prime) {
        log::warn!(
            "treatment pair ({:?}, {:?}) lies outside the observed treatment range",
            pair.a,
            pair.a_prime
        );
    }
}
