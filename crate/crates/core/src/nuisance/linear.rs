//! Least-squares outcome regression and Gaussian linear conditional densities.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{MediatorDensity, OutcomeModel, TreatmentDensity};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Relative size of an R diagonal below which a design column is treated as
/// linearly dependent on the columns before it.
const RANK_TOL: f64 = 1e-9;

pub(crate) struct LeastSquares {
    /// Row-major `k x q`.
    pub coef: Vec<f64>,
    /// Row-major `q x q` residual covariance with `n - k` denominator.
    pub residual_cov: Vec<f64>,
}

/// Multi-response least squares via Householder QR of the design.
pub(crate) fn least_squares(
    nuisance: &'static str,
    design: &[f64],
    names: &[String],
    responses: &[f64],
    q: usize,
) -> Result<LeastSquares> {
    let k = names.len();
    let n = design.len() / k;
    if n <= k {
        return Err(Error::Fit {
            nuisance,
            reason: format!("{n} rows cannot identify {k} coefficients"),
        });
    }
    let x = DMatrix::from_row_slice(n, k, design);
    let col_norms: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
    let qr = x.qr();
    let r = qr.r();
    for j in 0..k {
        if col_norms[j] == 0.0 || r[(j, j)].abs() <= RANK_TOL * col_norms[j] {
            return Err(Error::DegenerateColumn {
                nuisance,
                column: names[j].clone(),
            });
        }
    }
    let y = DMatrix::from_row_slice(n, q, responses);
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let top = qty.rows(0, k).into_owned();
    let beta = r.solve_upper_triangular(&top).ok_or_else(|| Error::Fit {
        nuisance,
        reason: "triangular solve failed".into(),
    })?;
    let fitted = DMatrix::from_row_slice(n, k, design) * &beta;
    let resid = y - fitted;
    let cov = (resid.transpose() * &resid) / (n - k) as f64;
    Ok(LeastSquares {
        coef: beta.transpose().as_slice().to_vec(),
        residual_cov: cov.transpose().as_slice().to_vec(),
    })
}

/// Which regressors a Gaussian linear density conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Regressors {
    /// `(1, a, x)`: mediator given treatment and covariates.
    TreatmentAndCovariates { d_a: usize, d_x: usize },
    /// `(1, x)`: treatment given covariates.
    Covariates { d_x: usize },
    /// `(1)`: marginal law.
    InterceptOnly,
}

impl Regressors {
    fn names(self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        match self {
            Regressors::TreatmentAndCovariates { d_a, d_x } => {
                names.extend((1..=d_a).map(|j| format!("A{j}")));
                names.extend((1..=d_x).map(|j| format!("X{j}")));
            }
            Regressors::Covariates { d_x } => names.extend((1..=d_x).map(|j| format!("X{j}"))),
            Regressors::InterceptOnly => {}
        }
        names
    }

    fn push_row(self, a: &[f64], x: &[f64], out: &mut Vec<f64>) {
        out.push(1.0);
        match self {
            Regressors::TreatmentAndCovariates { .. } => {
                out.extend_from_slice(a);
                out.extend_from_slice(x);
            }
            Regressors::Covariates { .. } => out.extend_from_slice(x),
            Regressors::InterceptOnly => {}
        }
    }

    /// `coef[.., r]` dotted with the regressor row, without materialising it.
    #[inline]
    fn predict(self, coef: &[f64], q: usize, r: usize, a: &[f64], x: &[f64]) -> f64 {
        let mut acc = coef[r];
        let mut k = 1;
        if let Regressors::TreatmentAndCovariates { .. } = self {
            for &v in a {
                acc += coef[k * q + r] * v;
                k += 1;
            }
        }
        if !matches!(self, Regressors::InterceptOnly) {
            for &v in x {
                acc += coef[k * q + r] * v;
                k += 1;
            }
        }
        acc
    }
}

/// Multivariate normal response whose mean is linear in the regressors and
/// whose covariance is the least-squares residual covariance.
#[derive(Debug, Clone)]
pub struct GaussianLinearDensity {
    regressors: Regressors,
    q: usize,
    coef: Vec<f64>,
    /// Inverse of the lower Cholesky factor of the covariance, row-major.
    chol_inv: Vec<f64>,
    log_norm: f64,
    scale: f64,
}

impl GaussianLinearDensity {
    pub(crate) fn fit(
        nuisance: &'static str,
        regressors: Regressors,
        rows: &Dataset,
        response: impl Fn(usize) -> Vec<f64>,
        q: usize,
    ) -> Result<Self> {
        let names = regressors.names();
        let mut design = Vec::with_capacity(rows.len() * names.len());
        let mut responses = Vec::with_capacity(rows.len() * q);
        for i in 0..rows.len() {
            let obs = rows.row(i);
            regressors.push_row(obs.a, obs.x, &mut design);
            responses.extend(response(i));
        }
        let ls = least_squares(nuisance, &design, &names, &responses, q)?;
        Self::from_parts(nuisance, regressors, q, ls.coef, &ls.residual_cov)
    }

    fn from_parts(nuisance: &'static str, regressors: Regressors, q: usize, coef: Vec<f64>, cov: &[f64]) -> Result<Self> {
        let cov_m = DMatrix::from_row_slice(q, q, cov);
        let scale_floor = 1e-12 * cov_m.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        if cov_m.diagonal().iter().any(|&v| !(v > scale_floor)) {
            return Err(Error::Fit {
                nuisance,
                reason: "residual variance is not positive".into(),
            });
        }
        let chol = cov_m.cholesky().ok_or_else(|| Error::Fit {
            nuisance,
            reason: "residual covariance is not positive definite".into(),
        })?;
        let l = chol.l();
        let log_det_l: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(q, q))
            .ok_or_else(|| Error::Fit {
                nuisance,
                reason: "singular covariance factor".into(),
            })?;
        Ok(Self {
            regressors,
            q,
            coef,
            chol_inv: l_inv.transpose().as_slice().to_vec(),
            log_norm: -0.5 * q as f64 * (2.0 * PI).ln() - log_det_l,
            scale: l[(0, 0)],
        })
    }

    /// Scalar normal with mean `intercept + sum(coef_a * a) + sum(coef_x * x)`
    /// and standard deviation `sd`. Used to build models with known parameters.
    pub fn mediator(intercept: f64, coef_a: &[f64], coef_x: &[f64], sd: f64) -> Result<Self> {
        let mut coef = vec![intercept];
        coef.extend_from_slice(coef_a);
        coef.extend_from_slice(coef_x);
        Self::from_parts(
            "alpha",
            Regressors::TreatmentAndCovariates {
                d_a: coef_a.len(),
                d_x: coef_x.len(),
            },
            1,
            coef,
            &[sd * sd],
        )
    }

    /// Mean of response component `r`.
    #[inline]
    pub fn mean(&self, r: usize, a: &[f64], x: &[f64]) -> f64 {
        self.regressors.predict(&self.coef, self.q, r, a, x)
    }

    /// Standard deviation of the first response component.
    pub fn sd(&self) -> f64 {
        self.scale
    }

    #[inline]
    fn density_of(&self, value: &[f64], a: &[f64], x: &[f64]) -> f64 {
        if self.q == 1 {
            let z = (value[0] - self.mean(0, a, x)) * self.chol_inv[0];
            return (self.log_norm - 0.5 * z * z).exp();
        }
        let mut quad = 0.0;
        for i in 0..self.q {
            let mut z = 0.0;
            for j in 0..=i {
                z += self.chol_inv[i * self.q + j] * (value[j] - self.mean(j, a, x));
            }
            quad += z * z;
        }
        (self.log_norm - 0.5 * quad).exp()
    }
}

impl MediatorDensity for GaussianLinearDensity {
    fn density(&self, m: f64, a: &[f64], x: &[f64]) -> f64 {
        self.density_of(&[m], a, x)
    }

    fn location_scale(&self, a: &[f64], x: &[f64]) -> (f64, f64) {
        (self.mean(0, a, x), self.scale)
    }
}

impl TreatmentDensity for GaussianLinearDensity {
    fn density(&self, a: &[f64], x: &[f64]) -> f64 {
        self.density_of(a, a, x)
    }
}

/// Least-squares regression of `Y` on `(1, a, m, x)` and optionally `a_j * m`.
#[derive(Debug, Clone)]
pub struct LinearOutcome {
    d_a: usize,
    interaction: bool,
    coef: Vec<f64>,
}

impl LinearOutcome {
    pub(crate) fn fit(rows: &Dataset, interaction: bool) -> Result<Self> {
        let d_a = rows.treatment_dim();
        let d_x = rows.covariate_dim();
        let mut names = vec!["intercept".to_string()];
        names.extend((1..=d_a).map(|j| format!("A{j}")));
        names.push("M".into());
        names.extend((1..=d_x).map(|j| format!("X{j}")));
        if interaction {
            names.extend((1..=d_a).map(|j| format!("A{j}*M")));
        }
        let mut design = Vec::with_capacity(rows.len() * names.len());
        for obs in rows.rows() {
            design.push(1.0);
            design.extend_from_slice(obs.a);
            design.push(obs.m);
            design.extend_from_slice(obs.x);
            if interaction {
                design.extend(obs.a.iter().map(|v| v * obs.m));
            }
        }
        let ls = least_squares("gamma", &design, &names, rows.outcomes(), 1)?;
        Ok(Self {
            d_a,
            interaction,
            coef: ls.coef,
        })
    }

    /// Coefficients in design order: intercept, `A1..`, `M`, `X1..`, `A1*M..`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }
}

impl OutcomeModel for LinearOutcome {
    #[inline]
    fn predict(&self, a: &[f64], m: f64, x: &[f64]) -> f64 {
        let c = &self.coef;
        let mut acc = c[0];
        for (j, v) in a.iter().enumerate() {
            acc += c[1 + j] * v;
        }
        acc += c[1 + self.d_a] * m;
        let off = 2 + self.d_a;
        for (j, v) in x.iter().enumerate() {
            acc += c[off + j] * v;
        }
        if self.interaction {
            let off = off + x.len();
            for (j, v) in a.iter().enumerate() {
                acc += c[off + j] * v * m;
            }
        }
        acc
    }
}
