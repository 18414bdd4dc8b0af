//! Natural direct and indirect effects from three evaluations of the
//! mediation functional:
//!
//! ```text
//! NIE = ψ(a, a)  - ψ(a, a')
//! NDE = ψ(a, a') - ψ(a', a')
//! ACE = NDE + NIE
//! ```
//!
//! All three functionals share one fold plan and one set of per-fold fits,
//! so the delta-method standard errors come from differences of the
//! per-observation moment values.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::estimator::{confidence_interval, standard_error, CrossFit, EstimateResult, EstimatorConfig, TreatmentPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectDecomposition {
    pub pair: TreatmentPair,
    pub ace: EffectEstimate,
    pub nde: EffectEstimate,
    pub nie: EffectEstimate,
    /// `ψ(a, a)`.
    pub psi_aa: EstimateResult,
    /// `ψ(a, a')`.
    pub psi_ap: EstimateResult,
    /// `ψ(a', a')`.
    pub psi_pp: EstimateResult,
    pub ci_level: f64,
}

pub fn decompose(data: &Dataset, pair: &TreatmentPair, config: &EstimatorConfig) -> Result<EffectDecomposition> {
    decompose_with(&CrossFit::fit(data, config)?, data, pair)
}

/// Decomposition reusing existing cross-fitted nuisances.
pub fn decompose_with(cross: &CrossFit, data: &Dataset, pair: &TreatmentPair) -> Result<EffectDecomposition> {
    let (pair_aa, pair_pp) = (pair.diagonal_a(), pair.diagonal_a_prime());
    let s_aa = cross.scores(data, &pair_aa)?;
    let s_ap = cross.scores(data, pair)?;
    let s_pp = cross.scores(data, &pair_pp)?;
    let psi_aa = cross.result_from_scores(&pair_aa, &s_aa)?;
    let psi_ap = cross.result_from_scores(pair, &s_ap)?;
    let psi_pp = cross.result_from_scores(&pair_pp, &s_pp)?;

    let level = cross.ci_level();
    let moments = |s: &[f64], psi: f64| -> Vec<f64> { s.iter().map(|v| v - psi).collect() };
    let m_aa = moments(&s_aa, psi_aa.psi_hat);
    let m_ap = moments(&s_ap, psi_ap.psi_hat);
    let m_pp = moments(&s_pp, psi_pp.psi_hat);
    let contrast = |estimate: f64, plus: &[f64], minus: &[f64]| -> Result<EffectEstimate> {
        let diff: Vec<f64> = plus.iter().zip(minus).map(|(p, m)| p - m).collect();
        let se = standard_error(&diff);
        let (ci_lower, ci_upper) = confidence_interval(estimate, se, level)?;
        Ok(EffectEstimate {
            estimate,
            se,
            ci_lower,
            ci_upper,
        })
    };
    let nde_hat = psi_ap.psi_hat - psi_pp.psi_hat;
    let nie_hat = psi_aa.psi_hat - psi_ap.psi_hat;
    Ok(EffectDecomposition {
        pair: pair.clone(),
        nde: contrast(nde_hat, &m_ap, &m_pp)?,
        nie: contrast(nie_hat, &m_aa, &m_ap)?,
        ace: contrast(nde_hat + nie_hat, &m_aa, &m_pp)?,
        psi_aa,
        psi_ap,
        psi_pp,
        ci_level: level,
    })
}
