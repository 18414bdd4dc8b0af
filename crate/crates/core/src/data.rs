//! Observations `O = (A, M, X, Y)` stored column-wise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Borrowed view of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<'a> {
    pub a: &'a [f64],
    pub m: f64,
    pub x: &'a [f64],
    pub y: f64,
}

/// A sample of `n` observations with treatment dimension `d_a` and covariate
/// dimension `d_x` (which may be zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    d_a: usize,
    d_x: usize,
    /// Row-major `n x d_a`.
    a: Vec<f64>,
    m: Vec<f64>,
    /// Row-major `n x d_x`.
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(d_a: usize, d_x: usize, a: Vec<f64>, m: Vec<f64>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if d_a == 0 {
            return Err(Error::Config("treatment dimension must be at least 1".into()));
        }
        let n = m.len();
        if y.len() != n || a.len() != n * d_a || x.len() != n * d_x {
            return Err(Error::Config(format!(
                "inconsistent column lengths: a={}, m={}, x={}, y={} for d_a={d_a}, d_x={d_x}",
                a.len(),
                n,
                x.len(),
                y.len()
            )));
        }
        let data = Self { d_a, d_x, a, m, x, y };
        for i in 0..n {
            let obs = data.row(i);
            let bad = obs
                .a
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite())
                .map(|(j, _)| format!("A{}", j + 1))
                .or_else(|| (!obs.m.is_finite()).then(|| "M".to_string()))
                .or_else(|| {
                    obs.x
                        .iter()
                        .enumerate()
                        .find(|(_, v)| !v.is_finite())
                        .map(|(j, _)| format!("X{}", j + 1))
                })
                .or_else(|| (!obs.y.is_finite()).then(|| "Y".to_string()));
            if let Some(column) = bad {
                return Err(Error::Data {
                    row: i + 1,
                    column,
                    reason: "non-finite value".into(),
                });
            }
        }
        Ok(data)
    }

    /// Scalar-treatment, scalar-covariate convenience constructor.
    pub fn from_scalar_columns(a: Vec<f64>, m: Vec<f64>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::new(1, 1, a, m, x, y)
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn treatment_dim(&self) -> usize {
        self.d_a
    }

    pub fn covariate_dim(&self) -> usize {
        self.d_x
    }

    #[inline]
    pub fn row(&self, i: usize) -> Observation<'_> {
        Observation {
            a: &self.a[i * self.d_a..(i + 1) * self.d_a],
            m: self.m[i],
            x: &self.x[i * self.d_x..(i + 1) * self.d_x],
            y: self.y[i],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Observation<'_>> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn treatments(&self) -> &[f64] {
        &self.a
    }

    pub fn mediators(&self) -> &[f64] {
        &self.m
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset {
            d_a: self.d_a,
            d_x: self.d_x,
            a: Vec::with_capacity(indices.len() * self.d_a),
            m: Vec::with_capacity(indices.len()),
            x: Vec::with_capacity(indices.len() * self.d_x),
            y: Vec::with_capacity(indices.len()),
        };
        for &i in indices {
            let r = self.row(i);
            out.a.extend_from_slice(r.a);
            out.m.push(r.m);
            out.x.extend_from_slice(r.x);
            out.y.push(r.y);
        }
        out
    }

    /// Per-coordinate sample standard deviation of the treatment.
    pub fn treatment_sd(&self) -> Vec<f64> {
        (0..self.d_a)
            .map(|j| {
                let col: Vec<f64> = (0..self.len()).map(|i| self.a[i * self.d_a + j]).collect();
                sample_sd(&col)
            })
            .collect()
    }

    /// Componentwise range of the observed treatments.
    pub fn treatment_range(&self) -> Vec<(f64, f64)> {
        (0..self.d_a)
            .map(|j| {
                (0..self.len())
                    .map(|i| self.a[i * self.d_a + j])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
            })
            .collect()
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation with the `n - 1` denominator.
pub(crate) fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
