//! Fixed-node quadrature on finite intervals.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    #[default]
    GaussLegendre,
    Trapezoid,
}

/// Nodes and weights on the reference interval `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn new(kind: QuadratureRule, n: usize) -> Self {
        match kind {
            QuadratureRule::GaussLegendre => Self::gauss_legendre(n),
            QuadratureRule::Trapezoid => Self::trapezoid(n),
        }
    }

    /// Gauss–Legendre rule with `n` nodes; roots of `P_n` by Newton's method
    /// from the Chebyshev-like initial guess.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp;
            loop {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            dp = if d.is_finite() { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Composite trapezoid rule with `n >= 2` equispaced nodes.
    pub fn trapezoid(n: usize) -> Self {
        assert!(n >= 2, "trapezoid rule needs two nodes");
        let dx = 2.0 / (n - 1) as f64;
        let nodes = (0..n).map(|i| -1.0 + i as f64 * dx).collect();
        let weights = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * dx } else { dx })
            .collect();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(node, weight)` pairs mapped onto `[lo, hi]`.
    pub fn points(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(t, w)| (mid + half * t, half * w))
    }

    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.points(lo, hi).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        for n in [1, 2, 5, 16, 64, 129] {
            let r = Rule::gauss_legendre(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}: {s}");
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let r = Rule::gauss_legendre(5);
        // ∫_0^2 x^9 dx = 2^10 / 10
        let v = r.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((v - 102.4).abs() < 1e-10);
    }

    #[test]
    fn nodes_are_sorted_and_symmetric() {
        let r = Rule::gauss_legendre(64);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        for i in 0..32 {
            assert_eq!(r.nodes[i], -r.nodes[63 - i]);
        }
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let r = Rule::trapezoid(7);
        assert!((r.integrate(1.0, 3.0, |x| 2.0 * x + 1.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_density_integrates_to_one() {
        let r = Rule::gauss_legendre(64);
        let v = r.integrate(-8.0, 8.0, |x| (-0.5 * x * x).exp() / (2.0 * PI).sqrt());
        assert!((v - 1.0).abs() < 1e-12);
    }
}
