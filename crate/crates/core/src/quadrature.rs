//! Gauss–Hermite rules and Gaussian expectations.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Nodes and weights for `∫ g(x) e^{-x²} dx`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes from the eigenvalues of the Jacobi matrix, polished by Newton
    /// steps; weights from the orthonormal recurrence in log scale.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return invalid("quadrature order must be at least 2");
        }
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        nodes.sort_by(|a, b| a.total_cmp(b));
        // Exact symmetry about zero.
        for i in 0..n / 2 {
            let m = 0.5 * (nodes[n - 1 - i] - nodes[i]);
            nodes[i] = -m;
            nodes[n - 1 - i] = m;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = nodes[i];
            let mut log_p = 0.0;
            for it in 0..3 {
                let (p1, p2, lp) = recurrence(z, n);
                log_p = lp;
                if it < 2 && z != 0.0 {
                    z -= p1 / ((2.0 * n as f64).sqrt() * p2);
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = (-(n as f64).ln() - 2.0 * log_p).exp();
            weights[n - 1 - i] = weights[i];
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Standard-normal nodes `sqrt(2) x_i` with weights normalized to sum to one.
    pub fn normal_rule(&self) -> (Vec<f64>, Vec<f64>) {
        let s = PI.sqrt();
        (
            self.nodes.iter().map(|x| std::f64::consts::SQRT_2 * x).collect(),
            self.weights.iter().map(|w| w / s).collect(),
        )
    }
}

/// Quadrature order and refinement policy.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Starting node count per dimension.
    pub nodes: usize,
    /// Largest accepted change between a rule and its doubled refinement.
    pub tol: f64,
    /// Refinement stops with an error beyond this node count.
    pub max_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { nodes: 31, tol: 1e-8, max_nodes: 1024 }
    }
}

/// Scaled values `(p_n, p_{n-1})` of the orthonormal Hermite polynomials at
/// `z`, plus `ln |p_{n-1}|` unscaled.
fn recurrence(z: f64, n: usize) -> (f64, f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let (mut p1, mut p2) = (PIM4, 0.0);
    let mut log_scale = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
        if p1.abs() > 1e150 {
            p1 *= 1e-150;
            p2 *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    (p1, p2, log_scale + p2.abs().ln())
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return invalid("quadrature order must be at least 2");
        }
        if !(self.tol > 0.0) || self.max_nodes < self.nodes {
            return invalid("invalid quadrature refinement settings");
        }
        Ok(())
    }
}
