//! Gauss–Hermite rules rescaled to standard-normal expectations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODES: usize = 61;
pub const MAX_NODES: usize = 180;

/// Nodes and weights with `E f(eta) ~ sum_k w_k f(x_k)` for `eta ~ N(0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::gauss_hermite(DEFAULT_NODES).expect("default rule")
    }
}

impl QuadratureRule {
    /// `k`-point rule, exact for polynomials of degree `2k - 1`.
    ///
    /// Roots of the physicists' Hermite polynomial are found by Newton's
    /// method on the orthonormal recurrence, started from the usual
    /// asymptotic guesses and then mapped to the `N(0,1)` weight.
    pub fn gauss_hermite(k: usize) -> Result<Self> {
        if k == 0 || k > MAX_NODES {
            return Err(Error::InvalidArgument(format!(
                "quadrature node count {k} not in 1..={MAX_NODES}"
            )));
        }
        let n = k;
        let nf = n as f64;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut z: f64 = 0.0;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            let mut settled = 0;
            for _ in 0..200 {
                let (p1, deriv) = hermite_orthonormal(n, z);
                pp = deriv;
                let step = p1 / pp;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    settled += 1;
                    if settled == 2 {
                        break;
                    }
                }
            }
            let (_, deriv) = hermite_orthonormal(n, z);
            if deriv != 0.0 {
                pp = deriv;
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
        let weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
        Ok(QuadratureRule { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E f(eta)` under the rule.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Orthonormal Hermite value `p_n(z)` and derivative `sqrt(2n) p_{n-1}(z)`.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64) {
    const PI_M4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut p1 = PI_M4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// `E f(eta sqrt(a) + h)` for `eta ~ N(0,1)`; exactly `f(h)` when `a == 0`.
pub fn gauss_expect(f: impl Fn(f64) -> f64, a: f64, h: f64, rule: &QuadratureRule) -> f64 {
    debug_assert!(a >= 0.0);
    if a <= 0.0 {
        return f(h);
    }
    let scale = a.sqrt();
    rule.expect(|x| f(x * scale + h))
}
