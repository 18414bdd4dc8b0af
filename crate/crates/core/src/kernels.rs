//! Second-order smoothing kernels and the bandwidth rule.
//!
//! A kernel `k` integrates to one, is symmetric (so its first moment
//! vanishes) and has a finite positive second moment. The smoothed treatment
//! indicator is the product kernel
//!
//! `K_h(d) = (1/h) * prod_j k(d_j / h)`
//!
//! Note the single `1/h` factor regardless of the treatment dimension. It is
//! kept as written; only `treatment_dim == 1` is the validated configuration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    #[default]
    Epanechnikov,
}

impl KernelFamily {
    /// Kernel value without input validation; callers guarantee finite `u`.
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            KernelFamily::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
            KernelFamily::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Closed interval outside of which the kernel is (numerically) zero.
    pub fn support(self) -> (f64, f64) {
        match self {
            KernelFamily::Gaussian => (-9.0, 9.0),
            KernelFamily::Epanechnikov => (-1.0, 1.0),
        }
    }
}

/// Second moment and squared L2 norm of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    /// `∫ u² k(u) du`
    pub second_moment: f64,
    /// `∫ k(u)² du`
    pub l2_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub family: KernelFamily,
    #[serde(default = "default_bandwidth_constant")]
    pub bandwidth_constant: f64,
    #[serde(default = "default_treatment_dim")]
    pub treatment_dim: usize,
}

fn default_bandwidth_constant() -> f64 {
    1.0
}

fn default_treatment_dim() -> usize {
    1
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            family: KernelFamily::default(),
            bandwidth_constant: default_bandwidth_constant(),
            treatment_dim: default_treatment_dim(),
        }
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth_constant: f64, treatment_dim: usize) -> Result<Self> {
        let spec = Self {
            family,
            bandwidth_constant,
            treatment_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_constant.is_finite() && self.bandwidth_constant > 0.0) {
            return Err(Error::Config(format!(
                "bandwidth_constant must be positive, got {}",
                self.bandwidth_constant
            )));
        }
        if self.treatment_dim == 0 {
            return Err(Error::Config("treatment_dim must be at least 1".into()));
        }
        Ok(())
    }

    pub fn kernel_value(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::Domain(format!("kernel argument {u} is not finite")));
        }
        Ok(self.family.eval(u))
    }

    pub fn product_kernel(&self, diff: &[f64], h: f64) -> Result<f64> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {h}")));
        }
        if diff.len() != self.treatment_dim {
            return Err(Error::Domain(format!(
                "difference has length {}, expected {}",
                diff.len(),
                self.treatment_dim
            )));
        }
        if let Some(d) = diff.iter().find(|d| !d.is_finite()) {
            return Err(Error::Domain(format!("kernel argument {d} is not finite")));
        }
        Ok(diff.iter().map(|d| self.family.eval(d / h)).product::<f64>() / h)
    }

    /// `K_h(point - center)` without allocating the difference vector.
    #[inline]
    pub(crate) fn smoothed_indicator(&self, point: &[f64], center: &[f64], h: f64) -> f64 {
        let mut prod = 1.0 / h;
        for (p, c) in point.iter().zip(center) {
            prod *= self.family.eval((p - c) / h);
            if prod == 0.0 {
                break;
            }
        }
        prod
    }

    /// `h = c * n^(-1/(d_A + 4))`.
    pub fn bandwidth(&self, n: usize) -> Result<f64> {
        if n < 2 {
            return Err(Error::Domain(format!("bandwidth needs n >= 2, got {n}")));
        }
        let exponent = -1.0 / (self.treatment_dim as f64 + 4.0);
        Ok(self.bandwidth_constant * (n as f64).powf(exponent))
    }

    pub fn kernel_moments(&self) -> KernelMoments {
        match self.family {
            KernelFamily::Gaussian => KernelMoments {
                second_moment: 1.0,
                l2_norm: 1.0 / (2.0 * PI.sqrt()),
            },
            KernelFamily::Epanechnikov => KernelMoments {
                second_moment: 0.2,
                l2_norm: 0.6,
            },
        }
    }
}
