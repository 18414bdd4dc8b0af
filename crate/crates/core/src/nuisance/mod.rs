//! Nuisance functions of the mediation moment.
//!
//! * `gamma(a, m, x) = E[Y | A = a, M = m, X = x]`
//! * `alpha(a, m, x) = f_{M|A,X}(m | a, x)`
//! * `lambda(a, x) = 1 / f_{A|X}(a | x)`
//! * `eta(a, a', x) = ∫ gamma(a, m, x) f_{M|A,X}(m | a', x) dm`
//!
//! Densities are floored at `trim_floor` before use, which bounds `alpha`
//! below and `lambda` above by `1 / trim_floor`. `eta` is always derived from
//! the current `gamma` and mediator model by quadrature, so replacing either
//! keeps it consistent.

mod linear;
mod smooth;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use linear::{GaussianLinearDensity, LinearOutcome};
use linear::Regressors;
pub use smooth::{KernelConditionalDensity, KernelRegression};

use crate::data::{mean, Dataset};
use crate::error::{Error, Result};
use crate::quadrature::{QuadratureRule, Rule};

pub trait OutcomeModel: Send + Sync + fmt::Debug {
    fn predict(&self, a: &[f64], m: f64, x: &[f64]) -> f64;
}

/// Conditional density of the mediator given treatment and covariates.
pub trait MediatorDensity: Send + Sync + fmt::Debug {
    /// Untrimmed density at `m`.
    fn density(&self, m: f64, a: &[f64], x: &[f64]) -> f64;
    /// Centre and scale of the conditional law; the `eta` quadrature grid
    /// covers `centre ± half_width * scale`.
    fn location_scale(&self, a: &[f64], x: &[f64]) -> (f64, f64);
}

/// Conditional density of the treatment given covariates.
pub trait TreatmentDensity: Send + Sync + fmt::Debug {
    fn density(&self, a: &[f64], x: &[f64]) -> f64;
}

/// Outcome model that ignores its inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantOutcome(pub f64);

impl OutcomeModel for ConstantOutcome {
    fn predict(&self, _: &[f64], _: f64, _: &[f64]) -> f64 {
        self.0
    }
}

/// Wraps a closure as an outcome model.
pub struct FnOutcome<F>(pub F);

impl<F> fmt::Debug for FnOutcome<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnOutcome")
    }
}

impl<F> OutcomeModel for FnOutcome<F>
where
    F: Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync,
{
    fn predict(&self, a: &[f64], m: f64, x: &[f64]) -> f64 {
        (self.0)(a, m, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeFamily {
    /// Least squares on `(1, a, m, x[, a*m])`.
    #[default]
    Linear,
    NadarayaWatson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityFamily {
    /// Normal with mean linear in the conditioning variables.
    #[default]
    Gaussian,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Grid half-width in units of the mediator scale.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default)]
    pub rule: QuadratureRule,
}

fn default_nodes() -> usize {
    64
}

fn default_half_width() -> f64 {
    6.0
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes: default_nodes(),
            half_width: default_half_width(),
            rule: QuadratureRule::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisanceConfig {
    #[serde(default)]
    pub outcome: OutcomeFamily,
    /// Adds `a_j * m` terms to the linear outcome regression.
    #[serde(default)]
    pub interaction: bool,
    #[serde(default)]
    pub mediator: DensityFamily,
    #[serde(default)]
    pub treatment: DensityFamily,
    #[serde(default = "default_trim_floor")]
    pub trim_floor: f64,
    /// Multiplier on the normal-reference bandwidths of the kernel variants.
    #[serde(default = "default_smoothing_scale")]
    pub smoothing_scale: f64,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

fn default_trim_floor() -> f64 {
    1e-3
}

fn default_smoothing_scale() -> f64 {
    1.0
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            outcome: OutcomeFamily::default(),
            interaction: false,
            mediator: DensityFamily::default(),
            treatment: DensityFamily::default(),
            trim_floor: default_trim_floor(),
            smoothing_scale: default_smoothing_scale(),
            quadrature: QuadratureConfig::default(),
        }
    }
}

impl NuisanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.trim_floor > 0.0 && self.trim_floor.is_finite()) {
            return Err(Error::Config(format!("trim_floor must be positive, got {}", self.trim_floor)));
        }
        if !(self.smoothing_scale > 0.0 && self.smoothing_scale.is_finite()) {
            return Err(Error::Config("smoothing_scale must be positive".into()));
        }
        let min_nodes = match self.quadrature.rule {
            QuadratureRule::GaussLegendre => 1,
            QuadratureRule::Trapezoid => 2,
        };
        if self.quadrature.nodes < min_nodes {
            return Err(Error::Config("too few quadrature nodes".into()));
        }
        if !(self.quadrature.half_width > 0.0 && self.quadrature.half_width.is_finite()) {
            return Err(Error::Config("quadrature half_width must be positive".into()));
        }
        Ok(())
    }
}

/// The three modelled nuisances; `eta` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nuisance {
    Gamma,
    Alpha,
    Lambda,
}

impl Nuisance {
    pub fn name(self) -> &'static str {
        match self {
            Nuisance::Gamma => "gamma",
            Nuisance::Alpha => "alpha",
            Nuisance::Lambda => "lambda",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specification {
    #[default]
    Correct,
    Misspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpecFlags {
    pub gamma: Specification,
    pub alpha: Specification,
    pub lambda: Specification,
}

/// Set of nuisances to replace by intercept-only fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Pattern {
    pub gamma: bool,
    pub alpha: bool,
    pub lambda: bool,
}

impl Pattern {
    pub const NONE: Pattern = Pattern {
        gamma: false,
        alpha: false,
        lambda: false,
    };

    pub fn only(n: Nuisance) -> Self {
        Self::NONE.with(n)
    }

    pub fn with(mut self, n: Nuisance) -> Self {
        match n {
            Nuisance::Gamma => self.gamma = true,
            Nuisance::Alpha => self.alpha = true,
            Nuisance::Lambda => self.lambda = true,
        }
        self
    }

    pub fn members(self) -> impl Iterator<Item = Nuisance> {
        [
            (self.gamma, Nuisance::Gamma),
            (self.alpha, Nuisance::Alpha),
            (self.lambda, Nuisance::Lambda),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
    }

    pub fn is_none(self) -> bool {
        self == Self::NONE
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_none() {
            return f.write_str("none");
        }
        let names: Vec<&str> = self.members().map(Nuisance::name).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            return Ok(Self::NONE);
        }
        s.split('+').try_fold(Self::NONE, |p, part| {
            let n = match part.trim().to_ascii_lowercase().as_str() {
                "gamma" => Nuisance::Gamma,
                "alpha" => Nuisance::Alpha,
                "lambda" => Nuisance::Lambda,
                other => return Err(Error::Config(format!("unknown nuisance `{other}` in pattern `{s}`"))),
            };
            Ok(p.with(n))
        })
    }
}

impl Serialize for Pattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Quadrature evaluator for `eta`.
#[derive(Debug, Clone)]
pub struct EtaQuadrature {
    rule: Arc<Rule>,
    half_width: f64,
}

impl EtaQuadrature {
    pub fn new(config: &QuadratureConfig) -> Self {
        Self {
            rule: Arc::new(Rule::new(config.rule, config.nodes)),
            half_width: config.half_width,
        }
    }

    /// `∫ gamma(a, m, x) f(m | a', x) dm`, normalised by the quadrature mass
    /// of the density so that constants integrate exactly.
    pub fn eval(
        &self,
        gamma: &dyn OutcomeModel,
        mediator: &dyn MediatorDensity,
        a: &[f64],
        a_prime: &[f64],
        x: &[f64],
    ) -> Result<f64> {
        let (centre, scale) = mediator.location_scale(a_prime, x);
        if !(scale > 0.0 && scale.is_finite() && centre.is_finite()) {
            return Err(Error::DegenerateGrid { scale });
        }
        let half = self.half_width * scale;
        let (mut num, mut mass) = (0.0, 0.0);
        for (m, w) in self.rule.points(centre - half, centre + half) {
            let wf = w * mediator.density(m, a_prime, x);
            num += wf * gamma.predict(a, m, x);
            mass += wf;
        }
        if !(mass > 0.0) {
            return Err(Error::DegenerateGrid { scale });
        }
        Ok(num / mass)
    }
}

/// `eta` bound to a specific outcome and mediator model.
#[derive(Debug, Clone)]
pub struct EtaFunction {
    gamma: Arc<dyn OutcomeModel>,
    mediator: Arc<dyn MediatorDensity>,
    quadrature: EtaQuadrature,
}

impl EtaFunction {
    pub fn eval(&self, a: &[f64], a_prime: &[f64], x: &[f64]) -> Result<f64> {
        self.quadrature.eval(&*self.gamma, &*self.mediator, a, a_prime, x)
    }
}

pub fn fit_gamma(train: &Dataset, config: &NuisanceConfig) -> Result<Arc<dyn OutcomeModel>> {
    non_empty(train, "gamma")?;
    Ok(match config.outcome {
        OutcomeFamily::Linear => Arc::new(LinearOutcome::fit(train, config.interaction)?),
        OutcomeFamily::NadarayaWatson => Arc::new(KernelRegression::fit(train, config.smoothing_scale)?),
    })
}

pub fn fit_alpha(train: &Dataset, config: &NuisanceConfig) -> Result<Arc<dyn MediatorDensity>> {
    non_empty(train, "alpha")?;
    Ok(match config.mediator {
        DensityFamily::Gaussian => Arc::new(GaussianLinearDensity::fit(
            "alpha",
            Regressors::TreatmentAndCovariates {
                d_a: train.treatment_dim(),
                d_x: train.covariate_dim(),
            },
            train,
            |i| vec![train.mediators()[i]],
            1,
        )?),
        DensityFamily::Kernel => Arc::new(KernelConditionalDensity::mediator(train, config.smoothing_scale)?),
    })
}

pub fn fit_lambda(train: &Dataset, config: &NuisanceConfig) -> Result<Arc<dyn TreatmentDensity>> {
    non_empty(train, "lambda")?;
    Ok(match config.treatment {
        DensityFamily::Gaussian => Arc::new(gaussian_treatment(train, Regressors::Covariates {
            d_x: train.covariate_dim(),
        })?),
        DensityFamily::Kernel => Arc::new(KernelConditionalDensity::treatment(train, config.smoothing_scale)?),
    })
}

pub fn fit_eta(
    gamma: Arc<dyn OutcomeModel>,
    mediator: Arc<dyn MediatorDensity>,
    quadrature: &QuadratureConfig,
) -> EtaFunction {
    EtaFunction {
        gamma,
        mediator,
        quadrature: EtaQuadrature::new(quadrature),
    }
}

fn gaussian_treatment(train: &Dataset, regressors: Regressors) -> Result<GaussianLinearDensity> {
    let d_a = train.treatment_dim();
    GaussianLinearDensity::fit(
        "lambda",
        regressors,
        train,
        |i| train.treatments()[i * d_a..(i + 1) * d_a].to_vec(),
        d_a,
    )
}

fn non_empty(train: &Dataset, nuisance: &'static str) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Fit {
            nuisance,
            reason: "empty training sample".into(),
        });
    }
    Ok(())
}

/// Intercept-only fits used as deliberately misspecified replacements.
#[derive(Debug, Clone)]
pub struct Marginals {
    outcome: f64,
    mediator: Arc<GaussianLinearDensity>,
    treatment: Arc<GaussianLinearDensity>,
}

impl Marginals {
    pub fn fit(train: &Dataset) -> Result<Self> {
        non_empty(train, "gamma")?;
        let mediator = GaussianLinearDensity::fit(
            "alpha",
            Regressors::InterceptOnly,
            train,
            |i| vec![train.mediators()[i]],
            1,
        )?;
        Ok(Self {
            outcome: mean(train.outcomes()),
            mediator: Arc::new(mediator),
            treatment: Arc::new(gaussian_treatment(train, Regressors::InterceptOnly)?),
        })
    }
}

/// Fitted `gamma`, `alpha`, `lambda` and the derived `eta`, evaluable at
/// arbitrary arguments. Immutable and cheap to clone.
#[derive(Debug, Clone)]
pub struct NuisanceFit {
    gamma: Arc<dyn OutcomeModel>,
    mediator: Arc<dyn MediatorDensity>,
    treatment: Arc<dyn TreatmentDensity>,
    marginals: Marginals,
    eta: EtaQuadrature,
    trim_floor: f64,
    flags: SpecFlags,
}

impl NuisanceFit {
    pub fn fit(train: &Dataset, config: &NuisanceConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            gamma: fit_gamma(train, config)?,
            mediator: fit_alpha(train, config)?,
            treatment: fit_lambda(train, config)?,
            marginals: Marginals::fit(train)?,
            eta: EtaQuadrature::new(&config.quadrature),
            trim_floor: config.trim_floor,
            flags: SpecFlags::default(),
        })
    }

    pub fn from_parts(
        gamma: Arc<dyn OutcomeModel>,
        mediator: Arc<dyn MediatorDensity>,
        treatment: Arc<dyn TreatmentDensity>,
        marginals: Marginals,
        config: &NuisanceConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            gamma,
            mediator,
            treatment,
            marginals,
            eta: EtaQuadrature::new(&config.quadrature),
            trim_floor: config.trim_floor,
            flags: SpecFlags::default(),
        })
    }

    #[inline]
    pub fn gamma(&self, a: &[f64], m: f64, x: &[f64]) -> f64 {
        self.gamma.predict(a, m, x)
    }

    #[inline]
    pub fn alpha(&self, a: &[f64], m: f64, x: &[f64]) -> f64 {
        self.mediator.density(m, a, x).max(self.trim_floor)
    }

    #[inline]
    pub fn lambda(&self, a: &[f64], x: &[f64]) -> f64 {
        1.0 / self.treatment.density(a, x).max(self.trim_floor)
    }

    pub fn eta(&self, a: &[f64], a_prime: &[f64], x: &[f64]) -> Result<f64> {
        self.eta.eval(&*self.gamma, &*self.mediator, a, a_prime, x)
    }

    pub fn eta_function(&self) -> EtaFunction {
        EtaFunction {
            gamma: self.gamma.clone(),
            mediator: self.mediator.clone(),
            quadrature: self.eta.clone(),
        }
    }

    pub fn mediator_model(&self) -> &Arc<dyn MediatorDensity> {
        &self.mediator
    }

    pub fn trim_floor(&self) -> f64 {
        self.trim_floor
    }

    pub fn flags(&self) -> SpecFlags {
        self.flags
    }

    /// Copy with `which` replaced by its intercept-only fit: a constant
    /// outcome, or a normal law that ignores the conditioning variables.
    pub fn misspecify(&self, which: Nuisance) -> NuisanceFit {
        let mut out = self.clone();
        match which {
            Nuisance::Gamma => {
                out.gamma = Arc::new(ConstantOutcome(self.marginals.outcome));
                out.flags.gamma = Specification::Misspecified;
            }
            Nuisance::Alpha => {
                out.mediator = self.marginals.mediator.clone();
                out.flags.alpha = Specification::Misspecified;
            }
            Nuisance::Lambda => {
                out.treatment = self.marginals.treatment.clone();
                out.flags.lambda = Specification::Misspecified;
            }
        }
        out
    }

    pub fn misspecify_pattern(&self, pattern: Pattern) -> NuisanceFit {
        pattern.members().fold(self.clone(), |fit, n| fit.misspecify(n))
    }
}
