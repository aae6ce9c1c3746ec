//! Replica-symmetric order parameter `q` and the critical temperatures.
//!
//! `q` solves `q_s = E tanh^2(beta eta sqrt((Delta^2 Lambda q)_s) + h)` for
//! every species `s`, with `eta ~ N(0,1)`. The solver is a (damped) Picard
//! iteration; the map is a contraction below `beta_0`, above which the
//! result is still returned but flagged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    classify_definiteness, solve_dense, spectral_radius, Definiteness, DEFAULT_DEFINITENESS_TOL,
};
use crate::model::ModelSpec;
use crate::quadrature::{gauss_expect, QuadratureRule};

const DAMPING_FLOOR: f64 = 0.125;
const SENSITIVITY_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalTemperatures {
    /// `rho(Delta^2 Lambda)`.
    pub rho: f64,
    pub beta_c: f64,
    pub beta_0: f64,
    /// 2 for an indefinite variance profile, 1 otherwise.
    pub alpha: u8,
}

/// `beta_c = rho(Lambda^{1/2} Delta^2 Lambda^{1/2})^{-1/2}` and
/// `beta_0 = beta_c / sqrt(4 alpha)`.
pub fn critical_temperatures(spec: &ModelSpec) -> Result<CriticalTemperatures> {
    let sqrt_lambda: Vec<f64> = spec.lambdas.iter().map(|l| l.sqrt()).collect();
    let rho = spectral_radius(&spec.delta2.congruence_diag(&sqrt_lambda))?;
    if rho <= 0.0 {
        return Err(Error::DegenerateModel);
    }
    let alpha = match classify_definiteness(&spec.delta2, DEFAULT_DEFINITENESS_TOL)? {
        Definiteness::Psd => 1,
        Definiteness::Indefinite => 2,
    };
    let beta_c = rho.powf(-0.5);
    Ok(CriticalTemperatures {
        rho,
        beta_c,
        beta_0: beta_c / (4.0 * f64::from(alpha)).sqrt(),
        alpha,
    })
}

pub fn beta_c(spec: &ModelSpec) -> Result<f64> {
    critical_temperatures(spec).map(|t| t.beta_c)
}

/// `(beta_0, alpha)`.
pub fn beta_0(spec: &ModelSpec) -> Result<(f64, u8)> {
    critical_temperatures(spec).map(|t| (t.beta_0, t.alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderParams {
    pub q: Vec<f64>,
    pub beta: f64,
    pub beta_c: f64,
    pub beta_0: f64,
    pub alpha: u8,
    pub iterations: usize,
    pub residual: f64,
    /// `beta >= beta_0`: uniqueness of the fixed point is not guaranteed.
    pub outside_proven_regime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point; defaults to `tanh^2(h) * 1`.
    pub initial: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            damping: 1.0,
            tol: 1e-12,
            max_iter: 100_000,
            initial: None,
        }
    }
}

/// `f_s(beta, q) = E tanh^2(beta eta sqrt((Delta^2 Lambda q)_s) + h)`.
pub fn fixed_point_map(spec: &ModelSpec, q: &[f64], rule: &QuadratureRule) -> Vec<f64> {
    let beta2 = spec.beta * spec.beta;
    spec.delta2_lambda(q)
        .into_iter()
        .map(|a| gauss_expect(|x| x.tanh().powi(2), beta2 * a.max(0.0), spec.h, rule))
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn solve_q(
    spec: &ModelSpec,
    rule: &QuadratureRule,
    opts: &SolveOptions,
) -> Result<OrderParams> {
    spec.validate()?;
    let temps = critical_temperatures(spec)?;
    let m = spec.species_count();
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping {} not in (0, 1]",
            opts.damping
        )));
    }
    let mut q = match &opts.initial {
        Some(init) if init.len() != m => {
            return Err(Error::DimensionError {
                expected: m,
                got: init.len(),
            })
        }
        Some(init) => init.clone(),
        None => vec![spec.h.tanh().powi(2); m],
    };

    let mut damping = opts.damping;
    let mut prev_residual = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let image = fixed_point_map(spec, &q, rule);
        let residual = max_abs_diff(&q, &image);
        if residual <= opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual,
                last: q,
            });
        }
        if residual > prev_residual {
            damping = (damping * 0.5).max(DAMPING_FLOOR);
        }
        prev_residual = residual;
        for (qs, fs) in q.iter_mut().zip(&image) {
            *qs = (1.0 - damping) * *qs + damping * fs;
        }
        iterations += 1;
    }

    // independent re-evaluation of the accepted iterate
    let residual = max_abs_diff(&q, &fixed_point_map(spec, &q, rule));
    Ok(OrderParams {
        q,
        beta: spec.beta,
        beta_c: temps.beta_c,
        beta_0: temps.beta_0,
        alpha: temps.alpha,
        iterations,
        residual,
        outside_proven_regime: spec.beta >= temps.beta_0,
    })
}

/// `d^2/dx^2 tanh^2(x) = (2 - 4 sinh^2 x) / cosh^4 x`.
pub fn tanh_sq_second_derivative(x: f64) -> f64 {
    let c = x.cosh();
    if !c.is_finite() {
        return 0.0;
    }
    let s = x.sinh();
    (2.0 - 4.0 * s * s) / (c * c * c * c)
}

/// `dq/dbeta` at a solved fixed point, from `(I - J) q' = b` with
/// `J_tr = beta^2 Delta^2_tr lambda_r / 2 * E g''` and
/// `b_t = beta (Delta^2 Lambda q)_t * E g''`.
pub fn q_sensitivity(
    spec: &ModelSpec,
    params: &OrderParams,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let m = spec.species_count();
    if params.q.len() != m {
        return Err(Error::DimensionError {
            expected: m,
            got: params.q.len(),
        });
    }
    let beta = spec.beta;
    let a = spec.delta2_lambda(&params.q);
    let curvature: Vec<f64> = a
        .iter()
        .map(|&at| {
            gauss_expect(
                tanh_sq_second_derivative,
                beta * beta * at.max(0.0),
                spec.h,
                rule,
            )
        })
        .collect();
    let system: Vec<Vec<f64>> = (0..m)
        .map(|t| {
            (0..m)
                .map(|r| {
                    let j =
                        beta * beta * spec.delta2.get(t, r) * spec.lambdas[r] / 2.0 * curvature[t];
                    if t == r {
                        1.0 - j
                    } else {
                        -j
                    }
                })
                .collect()
        })
        .collect();
    let rhs: Vec<f64> = (0..m).map(|t| beta * a[t] * curvature[t]).collect();
    solve_dense(&system, &rhs, SENSITIVITY_PIVOT_TOL)
        .map_err(|pivot| Error::SensitivitySingular { pivot })
}
