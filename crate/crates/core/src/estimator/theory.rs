//! Leading-order bias and variance of the estimator under a known
//! linear-Gaussian law, evaluated by deterministic quadrature over `(X, M)`.
//!
//! With `r = f(M | a', X) / f(M | a, X)` and `μ2 = ∫ u² k(u) du`,
//!
//! ```text
//! B  = h² μ2 E[ r (∂γ ∂f(a|X,M) / f(a|X) + ½ ∂²γ f(a|X,M) / f(a|X))
//!             + (γ(a,M,X) - η(a,a',X)) ½ ∂²f(a'|X,M) / f(a'|X) ]
//! E1 = E[ r² f(a|X,M) / f(a|X)² var(Y|X,M,a) ]
//!    + E[ var(γ(a,M,X) | X, a') / f(a'|X) ]
//! V  = ∫ k² · E1
//! ```
//!
//! where derivatives are in the treatment argument and the outer
//! expectations are over the joint law of `(X, M)`.

use serde::{Deserialize, Serialize};

use super::TreatmentPair;
use crate::dgp::{normal_pdf, DgpSpec};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::quadrature::Rule;

const NODES: usize = 96;
const HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalBiasVariance {
    /// Leading bias `B` at the supplied bandwidth.
    pub bias: f64,
    /// `B / h²`.
    pub bias_coefficient: f64,
    pub e1: f64,
    /// `∫ k² · E1`, the limit of `n h^{d_A} Var(ψ̂)`.
    pub variance_leading: f64,
}

impl TheoreticalBiasVariance {
    /// Leading-order standard deviation of the estimator at sample size `n`.
    pub fn sd(&self, n: usize, h: f64) -> f64 {
        (self.variance_leading / (n as f64 * h)).sqrt()
    }
}

struct Setup<'a> {
    dgp: &'a DgpSpec,
    a: f64,
    a_prime: f64,
    rule: Rule,
}

impl<'a> Setup<'a> {
    fn new(dgp: &'a DgpSpec, pair: &TreatmentPair, kernel: &KernelSpec, h: f64) -> Result<Self> {
        dgp.require_densities()?;
        if pair.dim() != 1 || kernel.treatment_dim != 1 {
            return Err(Error::UnsupportedDgp("closed-form theory covers scalar treatments only".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {h}")));
        }
        Ok(Self {
            dgp,
            a: pair.a[0],
            a_prime: pair.a_prime[0],
            rule: Rule::gauss_legendre(NODES),
        })
    }

    /// `Σ w(x, m) f_X(x) f_{M|X}(m | x) g(x, m)`; the mediator grid is centred
    /// on `E[M | a', x]` and widened to cover the shift to `E[M | a, x]`.
    fn expect_xm(&self, extra_shift: f64, g: impl Fn(f64, f64) -> f64) -> f64 {
        let d = self.dgp;
        let m_half = HALF_WIDTH * d.sd_m + (d.m_a * (self.a - self.a_prime)).abs() + extra_shift;
        let mut total = 0.0;
        for (x, wx) in self.rule.points(d.x_mean - HALF_WIDTH, d.x_mean + HALF_WIDTH) {
            let fx = d.covariate_density(x);
            let (mm, msd) = d.mediator_marginal(x);
            let centre = d.mediator_mean(self.a_prime, x);
            let mut inner = 0.0;
            for (m, wm) in self.rule.points(centre - m_half, centre + m_half) {
                inner += wm * normal_pdf(m, mm, msd) * g(x, m);
            }
            total += wx * fx * inner;
        }
        total
    }

    fn expect_x(&self, g: impl Fn(f64) -> f64) -> f64 {
        let d = self.dgp;
        self.rule
            .points(d.x_mean - HALF_WIDTH, d.x_mean + HALF_WIDTH)
            .map(|(x, w)| w * d.covariate_density(x) * g(x))
            .sum()
    }

    fn ratio(&self, x: f64, m: f64) -> f64 {
        self.dgp.mediator_density(m, self.a_prime, x) / self.dgp.mediator_density(m, self.a, x)
    }
}

/// Leading bias `B(a, a')` and variance constant for bandwidth `h`.
pub fn theoretical_bias_variance(
    dgp: &DgpSpec,
    pair: &TreatmentPair,
    kernel: &KernelSpec,
    h: f64,
) -> Result<TheoreticalBiasVariance> {
    let s = Setup::new(dgp, pair, kernel, h)?;
    let (a, ap) = (s.a, s.a_prime);
    // γ is linear in a for every supported law.
    let gamma_aa = 0.0;
    let coefficient = s.expect_xm(0.0, |x, m| {
        let (mu, sd) = dgp.treatment_posterior(x, m);
        let var = sd * sd;
        let f_a = normal_pdf(a, mu, sd);
        let df_a = -(a - mu) / var * f_a;
        let f_ap = normal_pdf(ap, mu, sd);
        let d2f_ap = ((ap - mu) * (ap - mu) / (var * var) - 1.0 / var) * f_ap;
        let marg_a = dgp.treatment_density(a, x);
        let first = s.ratio(x, m) * (dgp.gamma_da(m) * df_a / marg_a + 0.5 * f_a / marg_a * gamma_aa);
        let second = (dgp.gamma(a, m, x) - dgp.eta(a, ap, x)) * 0.5 * d2f_ap / dgp.treatment_density(ap, x);
        first + second
    });
    let mu2 = kernel.kernel_moments().second_moment;
    let outcome_var = dgp.sd_y * dgp.sd_y;
    let weighted_noise = s.expect_xm(0.0, |x, m| {
        let (mu, sd) = dgp.treatment_posterior(x, m);
        let r = s.ratio(x, m);
        let marg = dgp.treatment_density(a, x);
        r * r * normal_pdf(a, mu, sd) / (marg * marg) * outcome_var
    });
    let regression_noise = s.expect_x(|x| dgp.gamma_variance(a) / dgp.treatment_density(ap, x));
    let e1 = weighted_noise + regression_noise;
    Ok(TheoreticalBiasVariance {
        bias: h * h * mu2 * coefficient,
        bias_coefficient: mu2 * coefficient,
        e1,
        variance_leading: kernel.kernel_moments().l2_norm * e1,
    })
}

/// Exact mean of the moment function at the true nuisances and `ψ0` for
/// bandwidth `h`, i.e. the smoothing bias before any expansion in `h`.
pub fn smoothing_bias(dgp: &DgpSpec, pair: &TreatmentPair, kernel: &KernelSpec, h: f64) -> Result<f64> {
    let s = Setup::new(dgp, pair, kernel, h)?;
    let (a, ap) = (s.a, s.a_prime);
    let (lo, hi) = match kernel.family {
        KernelFamily::Epanechnikov => (-1.0, 1.0),
        KernelFamily::Gaussian => (-8.0, 8.0),
    };
    let u_nodes: Vec<(f64, f64)> = s
        .rule
        .points(lo, hi)
        .map(|(u, w)| (u, w * kernel.family.eval(u)))
        .collect();
    let shift = dgp.m_a.abs() * hi * h;
    Ok(s.expect_xm(shift, |x, m| {
        let (mu, sd) = dgp.treatment_posterior(x, m);
        let g_a = dgp.gamma(a, m, x);
        let (mut smooth_residual, mut smooth_density) = (0.0, 0.0);
        for &(u, w) in &u_nodes {
            let t = a + u * h;
            smooth_residual += w * (dgp.gamma(t, m, x) - g_a) * normal_pdf(t, mu, sd);
            smooth_density += w * normal_pdf(ap + u * h, mu, sd);
        }
        let first = s.ratio(x, m) / dgp.treatment_density(a, x) * smooth_residual;
        let second = (g_a - dgp.eta(a, ap, x)) / dgp.treatment_density(ap, x) * smooth_density;
        first + second
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_unsupported() {
        let dgp = DgpSpec {
            sd_y: 0.0,
            ..DgpSpec::reference()
        };
        let err = theoretical_bias_variance(&dgp, &TreatmentPair::scalar(1.0, 0.0), &KernelSpec::default(), 0.1);
        assert!(matches!(err, Err(Error::UnsupportedDgp(_))));
    }

    #[test]
    fn no_treatment_effect_means_no_bias() {
        let dgp = DgpSpec {
            y_a: 0.0,
            y_m: 0.0,
            ..DgpSpec::reference()
        };
        let t = theoretical_bias_variance(&dgp, &TreatmentPair::scalar(1.0, 0.0), &KernelSpec::default(), 0.3).unwrap();
        assert!(t.bias.abs() < 1e-12);
        assert!(smoothing_bias(&dgp, &TreatmentPair::scalar(1.0, 0.0), &KernelSpec::default(), 0.3)
            .unwrap()
            .abs()
            < 1e-12);
    }
}
