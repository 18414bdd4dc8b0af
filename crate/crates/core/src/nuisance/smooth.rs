//! Nonparametric nuisance estimators with Gaussian product kernels.
//!
//! Bandwidths follow a normal-reference rule per coordinate:
//! `b_j = scale * sd_j * n^(-1/(d+4))`. Evaluation is `O(n_train)` per query.

use std::f64::consts::PI;

use super::{MediatorDensity, OutcomeModel, TreatmentDensity};
use crate::data::{sample_sd, Dataset};
use crate::error::{Error, Result};

fn bandwidths(nuisance: &'static str, columns: &[Vec<f64>], n: usize, total_dim: usize, scale: f64) -> Result<Vec<f64>> {
    let factor = scale * (n as f64).powf(-1.0 / (total_dim as f64 + 4.0));
    columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let sd = sample_sd(col);
            if sd > 0.0 {
                Ok(factor * sd)
            } else {
                Err(Error::Fit {
                    nuisance,
                    reason: format!("smoothing column {} has zero spread", j + 1),
                })
            }
        })
        .collect()
}

#[inline]
fn gaussian_weight(point: &[f64], query: &[f64]) -> f64 {
    let d2: f64 = point.iter().zip(query).map(|(p, q)| (p - q) * (p - q)).sum();
    (-0.5 * d2).exp()
}

/// Local-constant (Nadaraya–Watson) regression of `Y` on `(a, m, x)`.
#[derive(Debug, Clone)]
pub struct KernelRegression {
    dim: usize,
    /// Row-major `n x dim`, each coordinate divided by its bandwidth.
    points: Vec<f64>,
    y: Vec<f64>,
    inv_bw: Vec<f64>,
    fallback: f64,
}

impl KernelRegression {
    pub(crate) fn fit(rows: &Dataset, scale: f64) -> Result<Self> {
        let n = rows.len();
        let d_a = rows.treatment_dim();
        let d_x = rows.covariate_dim();
        let dim = d_a + 1 + d_x;
        let mut columns = vec![Vec::with_capacity(n); dim];
        for obs in rows.rows() {
            for (j, v) in obs.a.iter().chain(std::iter::once(&obs.m)).chain(obs.x).enumerate() {
                columns[j].push(*v);
            }
        }
        let inv_bw: Vec<f64> = bandwidths("gamma", &columns, n, dim, scale)?.iter().map(|b| 1.0 / b).collect();
        let mut points = Vec::with_capacity(n * dim);
        for i in 0..n {
            for j in 0..dim {
                points.push(columns[j][i] * inv_bw[j]);
            }
        }
        Ok(Self {
            dim,
            points,
            y: rows.outcomes().to_vec(),
            inv_bw,
            fallback: crate::data::mean(rows.outcomes()),
        })
    }
}

impl OutcomeModel for KernelRegression {
    fn predict(&self, a: &[f64], m: f64, x: &[f64]) -> f64 {
        let query: Vec<f64> = a
            .iter()
            .chain(std::iter::once(&m))
            .chain(x)
            .zip(&self.inv_bw)
            .map(|(v, ib)| v * ib)
            .collect();
        let (mut num, mut den) = (0.0, 0.0);
        for (p, y) in self.points.chunks_exact(self.dim).zip(&self.y) {
            let w = gaussian_weight(p, &query);
            num += w * y;
            den += w;
        }
        if den > 1e-300 {
            num / den
        } else {
            self.fallback
        }
    }
}

/// Kernel conditional density `f(r | c) = sum_i K(c - c_i) prod_j phi_b(r_j - r_ij) / sum_i K(c - c_i)`.
///
/// With no conditioning columns it reduces to a product-kernel density
/// estimate of the response.
#[derive(Debug, Clone)]
pub struct KernelConditionalDensity {
    cond_dim: usize,
    resp_dim: usize,
    cond: Vec<f64>,
    cond_inv_bw: Vec<f64>,
    resp: Vec<f64>,
    resp_bw: Vec<f64>,
}

impl KernelConditionalDensity {
    fn fit(nuisance: &'static str, cond_cols: Vec<Vec<f64>>, resp_cols: Vec<Vec<f64>>, n: usize, scale: f64) -> Result<Self> {
        let cond_dim = cond_cols.len();
        let resp_dim = resp_cols.len();
        let total = cond_dim + resp_dim;
        let cond_inv_bw: Vec<f64> = bandwidths(nuisance, &cond_cols, n, total, scale)?
            .iter()
            .map(|b| 1.0 / b)
            .collect();
        let resp_bw = bandwidths(nuisance, &resp_cols, n, total, scale)?;
        let mut cond = Vec::with_capacity(n * cond_dim);
        let mut resp = Vec::with_capacity(n * resp_dim);
        for i in 0..n {
            cond.extend(cond_cols.iter().zip(&cond_inv_bw).map(|(c, ib)| c[i] * ib));
            resp.extend(resp_cols.iter().map(|c| c[i]));
        }
        Ok(Self {
            cond_dim,
            resp_dim,
            cond,
            cond_inv_bw,
            resp,
            resp_bw,
        })
    }

    /// Mediator given `(a, x)`.
    pub(crate) fn mediator(rows: &Dataset, scale: f64) -> Result<Self> {
        let (d_a, d_x) = (rows.treatment_dim(), rows.covariate_dim());
        let mut cond = vec![Vec::with_capacity(rows.len()); d_a + d_x];
        for obs in rows.rows() {
            for (j, v) in obs.a.iter().chain(obs.x).enumerate() {
                cond[j].push(*v);
            }
        }
        Self::fit("alpha", cond, vec![rows.mediators().to_vec()], rows.len(), scale)
    }

    /// Treatment given `x`.
    pub(crate) fn treatment(rows: &Dataset, scale: f64) -> Result<Self> {
        let (d_a, d_x) = (rows.treatment_dim(), rows.covariate_dim());
        let mut cond = vec![Vec::with_capacity(rows.len()); d_x];
        let mut resp = vec![Vec::with_capacity(rows.len()); d_a];
        for obs in rows.rows() {
            for (j, v) in obs.x.iter().enumerate() {
                cond[j].push(*v);
            }
            for (j, v) in obs.a.iter().enumerate() {
                resp[j].push(*v);
            }
        }
        Self::fit("lambda", cond, resp, rows.len(), scale)
    }

    fn weights<'a>(&'a self, query: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        let scaled: Vec<f64> = query.iter().zip(&self.cond_inv_bw).map(|(v, ib)| v * ib).collect();
        (0..self.resp.len() / self.resp_dim).map(move |i| {
            if self.cond_dim == 0 {
                1.0
            } else {
                gaussian_weight(&self.cond[i * self.cond_dim..(i + 1) * self.cond_dim], &scaled)
            }
        })
    }

    fn conditional_density(&self, value: &[f64], cond: &[f64]) -> f64 {
        let norm: f64 = self.resp_bw.iter().map(|b| b * (2.0 * PI).sqrt()).product();
        let (mut num, mut den) = (0.0, 0.0);
        for (i, w) in self.weights(cond).enumerate() {
            if w == 0.0 {
                continue;
            }
            let r = &self.resp[i * self.resp_dim..(i + 1) * self.resp_dim];
            let d2: f64 = value
                .iter()
                .zip(r)
                .zip(&self.resp_bw)
                .map(|((v, ri), b)| ((v - ri) / b).powi(2))
                .sum();
            num += w * (-0.5 * d2).exp();
            den += w;
        }
        if den > 1e-300 {
            num / (den * norm)
        } else {
            0.0
        }
    }
}

impl MediatorDensity for KernelConditionalDensity {
    fn density(&self, m: f64, a: &[f64], x: &[f64]) -> f64 {
        let cond: Vec<f64> = a.iter().chain(x).copied().collect();
        self.conditional_density(&[m], &cond)
    }

    fn location_scale(&self, a: &[f64], x: &[f64]) -> (f64, f64) {
        let cond: Vec<f64> = a.iter().chain(x).copied().collect();
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (w, r) in self.weights(&cond).zip(&self.resp) {
            s0 += w;
            s1 += w * r;
            s2 += w * r * r;
        }
        let b = self.resp_bw[0];
        if s0 <= 1e-300 {
            let n = self.resp.len() as f64;
            let mu = self.resp.iter().sum::<f64>() / n;
            let var = self.resp.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / n;
            return (mu, (var + b * b).sqrt());
        }
        let mu = s1 / s0;
        let var = (s2 / s0 - mu * mu).max(0.0);
        (mu, (var + b * b).sqrt())
    }
}

impl TreatmentDensity for KernelConditionalDensity {
    fn density(&self, a: &[f64], x: &[f64]) -> f64 {
        self.conditional_density(a, x)
    }
}
