//! Synthetic data-generating processes with closed-form ground truth.
//!
//! Structural equations (scalar treatment, mediator and covariate):
//!
//! ```text
//! X = x_mean + e_X                          e_X ~ N(0, 1)
//! A = a_x X + e_A                           e_A ~ N(0, sd_a²)
//! M = m0 + m_a A + m_x X + e_M              e_M ~ N(0, sd_m²)
//! Y = y0 + y_a A + y_m M + y_am A M + y_x X + e_Y     e_Y ~ N(0, sd_y²)
//! ```
//!
//! `y_am = 0` gives the linear-Gaussian family; a non-zero `y_am` adds the
//! treatment–mediator interaction.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub x_mean: f64,
    #[serde(default)]
    pub a_x: f64,
    #[serde(default = "one")]
    pub sd_a: f64,
    #[serde(default)]
    pub m0: f64,
    #[serde(default)]
    pub m_a: f64,
    #[serde(default)]
    pub m_x: f64,
    #[serde(default = "one")]
    pub sd_m: f64,
    #[serde(default)]
    pub y0: f64,
    #[serde(default)]
    pub y_a: f64,
    #[serde(default)]
    pub y_m: f64,
    #[serde(default)]
    pub y_x: f64,
    /// Interaction coefficient on `A * M`.
    #[serde(default)]
    pub y_am: f64,
    #[serde(default = "one")]
    pub sd_y: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "linear_gaussian".into()
}

fn one() -> f64 {
    1.0
}

/// Closed-form effects for a treatment pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEffects {
    pub nde: f64,
    pub nie: f64,
    pub ace: f64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            name: default_name(),
            x_mean: 0.0,
            a_x: 0.0,
            sd_a: 1.0,
            m0: 0.0,
            m_a: 0.0,
            m_x: 0.0,
            sd_m: 1.0,
            y0: 0.0,
            y_a: 0.0,
            y_m: 0.0,
            y_x: 0.0,
            y_am: 0.0,
            sd_y: 1.0,
            seed: 0,
        }
    }
}

impl DgpSpec {
    /// Confounded design with both direct and mediated paths:
    /// `y_a = 2`, `y_m = 1`, `m_a = 1`, so `NDE(1, 0) = 2` and `NIE(1, 0) = 1`.
    pub fn reference() -> Self {
        Self {
            name: "reference".into(),
            a_x: 0.25,
            m0: 0.0,
            m_a: 1.0,
            m_x: 0.5,
            sd_m: 1.5,
            y0: 1.0,
            y_a: 2.0,
            y_m: 1.0,
            y_x: 0.5,
            ..Self::default()
        }
    }

    pub fn has_interaction(&self) -> bool {
        self.y_am != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let coefs = [
            self.x_mean,
            self.a_x,
            self.m0,
            self.m_a,
            self.m_x,
            self.y0,
            self.y_a,
            self.y_m,
            self.y_x,
            self.y_am,
        ];
        if coefs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config(format!("dgp `{}` has a non-finite coefficient", self.name)));
        }
        for (name, sd) in [("sd_a", self.sd_a), ("sd_m", self.sd_m), ("sd_y", self.sd_y)] {
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(Error::Config(format!("dgp `{}`: {name} must be >= 0, got {sd}", self.name)));
            }
        }
        Ok(())
    }

    /// Densities exist only when every noise term has positive variance.
    pub fn require_densities(&self) -> Result<()> {
        self.validate()?;
        if self.sd_a > 0.0 && self.sd_m > 0.0 && self.sd_y > 0.0 {
            Ok(())
        } else {
            Err(Error::UnsupportedDgp(format!(
                "`{}` has a zero noise scale, so its conditional densities do not exist",
                self.name
            )))
        }
    }

    pub fn generate(&self, n: usize) -> Result<Dataset> {
        self.generate_with_seed(n, self.seed)
    }

    /// `n` i.i.d. draws; the draw order per row is `(e_X, e_A, e_M, e_Y)`.
    pub fn generate_with_seed(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut a, mut m, mut x, mut y) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for _ in 0..n {
            let ex: f64 = rng.sample(StandardNormal);
            let ea: f64 = rng.sample(StandardNormal);
            let em: f64 = rng.sample(StandardNormal);
            let ey: f64 = rng.sample(StandardNormal);
            let xi = self.x_mean + ex;
            let ai = self.a_x * xi + self.sd_a * ea;
            let mi = self.mediator_mean(ai, xi) + self.sd_m * em;
            let yi = self.gamma(ai, mi, xi) + self.sd_y * ey;
            x.push(xi);
            a.push(ai);
            m.push(mi);
            y.push(yi);
        }
        Dataset::from_scalar_columns(a, m, x, y)
    }

    /// `E[M | A = a, X = x]`.
    #[inline]
    pub fn mediator_mean(&self, a: f64, x: f64) -> f64 {
        self.m0 + self.m_a * a + self.m_x * x
    }

    /// `E[Y | A = a, M = m, X = x]`.
    #[inline]
    pub fn gamma(&self, a: f64, m: f64, x: f64) -> f64 {
        self.y0 + self.y_a * a + self.y_m * m + self.y_am * a * m + self.y_x * x
    }

    /// `∂γ/∂a`; the second derivative is identically zero.
    #[inline]
    pub fn gamma_da(&self, m: f64) -> f64 {
        self.y_a + self.y_am * m
    }

    /// `η(a, a', x) = E[γ(a, M, x) | A = a', X = x]`.
    #[inline]
    pub fn eta(&self, a: f64, a_prime: f64, x: f64) -> f64 {
        self.gamma(a, self.mediator_mean(a_prime, x), x)
    }

    /// `Var[γ(a, M, X) | X = x, A = a']`.
    pub fn gamma_variance(&self, a: f64) -> f64 {
        let slope = self.y_m + self.y_am * a;
        slope * slope * self.sd_m * self.sd_m
    }

    pub fn covariate_density(&self, x: f64) -> f64 {
        normal_pdf(x, self.x_mean, 1.0)
    }

    pub fn treatment_density(&self, a: f64, x: f64) -> f64 {
        normal_pdf(a, self.a_x * x, self.sd_a)
    }

    pub fn mediator_density(&self, m: f64, a: f64, x: f64) -> f64 {
        normal_pdf(m, self.mediator_mean(a, x), self.sd_m)
    }

    /// Mean and standard deviation of `A | X = x, M = m`.
    pub fn treatment_posterior(&self, x: f64, m: f64) -> (f64, f64) {
        let prec_a = 1.0 / (self.sd_a * self.sd_a);
        let prec_m = self.m_a * self.m_a / (self.sd_m * self.sd_m);
        let var = 1.0 / (prec_a + prec_m);
        let mean = var * (self.a_x * x * prec_a + self.m_a * (m - self.m0 - self.m_x * x) / (self.sd_m * self.sd_m));
        (mean, var.sqrt())
    }

    /// Mean and standard deviation of `M | X = x` with the treatment integrated out.
    pub fn mediator_marginal(&self, x: f64) -> (f64, f64) {
        let mean = self.m0 + (self.m_a * self.a_x + self.m_x) * x;
        let var = self.m_a * self.m_a * self.sd_a * self.sd_a + self.sd_m * self.sd_m;
        (mean, var.sqrt())
    }

    /// Closed-form mediation functional `ψ0(a, a')`.
    pub fn oracle_psi(&self, a: f64, a_prime: f64) -> f64 {
        // η is linear in x, so averaging over X substitutes E[X].
        self.eta(a, a_prime, self.x_mean)
    }

    /// Monte Carlo evaluation of `ψ0(a, a') = E[γ(a, M*, X)]` with
    /// `X ~ f_X` and `M* ~ f(M | A = a', X)`.
    pub fn oracle_psi_monte_carlo(&self, a: f64, a_prime: f64, draws: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        for _ in 0..draws {
            let ex: f64 = rng.sample(StandardNormal);
            let em: f64 = rng.sample(StandardNormal);
            let x = self.x_mean + ex;
            let m = self.mediator_mean(a_prime, x) + self.sd_m * em;
            sum += self.gamma(a, m, x);
        }
        sum / draws as f64
    }

    pub fn oracle_effects(&self, a: f64, a_prime: f64) -> OracleEffects {
        let aa = self.oracle_psi(a, a);
        let ap = self.oracle_psi(a, a_prime);
        let pp = self.oracle_psi(a_prime, a_prime);
        OracleEffects {
            nde: ap - pp,
            nie: aa - ap,
            ace: aa - pp,
        }
    }
}

#[inline]
pub(crate) fn normal_pdf(v: f64, mean: f64, sd: f64) -> f64 {
    let z = (v - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}
