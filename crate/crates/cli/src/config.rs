//! JSON experiment configuration.

use std::path::Path;

use msk_core::mcmc::{ChainConfig, DEFAULT_BURN_IN};
use msk_core::order_params::{critical_temperatures, SolveOptions};
use msk_core::quadrature::DEFAULT_NODES;
use msk_core::tap::Estimator;
use msk_core::{ModelSpec, Preset, QuadratureRule, SymMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Model section; either a preset or explicit `lambdas` and `delta2`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta2: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Temperature as a fraction of `beta_0`; exclusive with `beta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_over_beta0: Option<f64>,
    #[serde(default)]
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub quadrature_nodes: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolveOptions::default();
        SolverSection {
            quadrature_nodes: DEFAULT_NODES,
            damping: d.damping,
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub n_sweeps: usize,
    pub burn_in_sweeps: usize,
    pub thin: usize,
    pub n_replicas: usize,
    pub adaptive_burn_in: bool,
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            n_sweeps: 2000,
            burn_in_sweeps: DEFAULT_BURN_IN,
            thin: 1,
            n_replicas: 4,
            adaptive_burn_in: true,
        }
    }
}

impl ChainSection {
    pub fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            n_sweeps: self.n_sweeps,
            burn_in_sweeps: self.burn_in_sweeps,
            thin: self.thin,
            n_replicas: self.n_replicas,
            seed,
            adaptive_burn_in: self.adaptive_burn_in,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Exact,
    #[default]
    Mcmc,
}

/// Top-level configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default = "default_n_disorder")]
    pub n_disorder: usize,
    #[serde(default)]
    pub estimator: EstimatorKind,
    /// Defaults to `(beta_c^2 - 4 alpha beta^2) / 4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_n_eta")]
    pub n_eta: usize,
    #[serde(default)]
    pub species: usize,
    #[serde(default = "default_tap_max_iter")]
    pub tap_max_iter: usize,
    #[serde(default = "default_tap_tol")]
    pub tap_tol: f64,
}

fn default_n_disorder() -> usize {
    20
}
fn default_k() -> u32 {
    1
}
fn default_n_eta() -> usize {
    200
}
fn default_tap_max_iter() -> usize {
    10_000
}
fn default_tap_tol() -> f64 {
    1e-10
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config = parse_config(&text)?;
    config.model_spec()?;
    Ok(config)
}

/// Parses JSON; errors carry the path of the offending field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

impl ExperimentConfig {
    /// Resolved model; `N` defaults to the species count when absent.
    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        let m = &self.model;
        let (lambdas, delta2) = match (self.preset, &m.lambdas, &m.delta2) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(ConfigError::Invalid(
                    "model.lambdas/model.delta2 conflict with preset; give one or the other".into(),
                ))
            }
            (Some(p), None, None) => (p.lambdas(), p.delta2()),
            (None, Some(l), Some(d)) => {
                let d = SymMatrix::from_rows(d)
                    .map_err(|e| ConfigError::Invalid(format!("model.delta2: {e}")))?;
                (l.clone(), d)
            }
            (None, _, _) => {
                return Err(ConfigError::Invalid(
                    "either preset or both model.lambdas and model.delta2 are required".into(),
                ))
            }
        };
        let n = m.n.unwrap_or(lambdas.len());
        let probe = ModelSpec::new(lambdas, delta2, 0.0, m.h, n)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let beta = match (m.beta, m.beta_over_beta0) {
            (Some(b), None) => b,
            (None, Some(frac)) => {
                let t = critical_temperatures(&probe)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                frac * t.beta_0
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "model.beta and model.beta_over_beta0 are mutually exclusive".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError::Invalid(
                    "model.beta or model.beta_over_beta0 is required".into(),
                ))
            }
        };
        let spec = probe.with_beta(beta);
        spec.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(spec)
    }

    /// `N` when the file states it.
    pub fn require_n(&self, command: &str) -> Result<usize, ConfigError> {
        self.model
            .n
            .ok_or_else(|| ConfigError::Invalid(format!("model.n is required for {command}")))
    }

    pub fn quadrature(&self) -> Result<QuadratureRule, ConfigError> {
        QuadratureRule::gauss_hermite(self.solver.quadrature_nodes)
            .map_err(|e| ConfigError::Invalid(format!("solver.quadrature_nodes: {e}")))
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            damping: self.solver.damping,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            initial: None,
        }
    }

    pub fn estimator(&self, seed: u64) -> Estimator {
        match self.estimator {
            EstimatorKind::Exact => Estimator::Exact,
            EstimatorKind::Mcmc => Estimator::Mcmc {
                chain: self.chain.chain_config(seed),
            },
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
