//! Built-in variance profiles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::SymMatrix;
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Single species with unit variance: the classical SK model.
    Sk,
    /// Interactions only across the two species: `Delta^2 = [[0,1],[1,0]]`.
    Bipartite,
    /// Positive definite profile `[[2,1],[1,2]]`.
    Convex,
    /// Two decoupled SK systems, `Delta^2 = diag(1, 0.5)`.
    TwoCopies,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Sk,
        Preset::Bipartite,
        Preset::Convex,
        Preset::TwoCopies,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Sk => "sk",
            Preset::Bipartite => "bipartite",
            Preset::Convex => "convex",
            Preset::TwoCopies => "two-copies",
        }
    }

    pub fn lambdas(self) -> Vec<f64> {
        match self {
            Preset::Sk => vec![1.0],
            _ => vec![0.5, 0.5],
        }
    }

    pub fn delta2(self) -> SymMatrix {
        let rows = match self {
            Preset::Sk => vec![vec![1.0]],
            Preset::Bipartite => vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            Preset::Convex => vec![vec![2.0, 1.0], vec![1.0, 2.0]],
            Preset::TwoCopies => vec![vec![1.0, 0.0], vec![0.0, 0.5]],
        };
        SymMatrix::from_rows(&rows).expect("preset matrices are symmetric")
    }

    pub fn spec(self, beta: f64, h: f64, n: usize) -> ModelSpec {
        ModelSpec::new(self.lambdas(), self.delta2(), beta, h, n)
            .expect("preset parameters are valid")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                format!("unknown preset `{s}` (expected sk, bipartite, convex or two-copies)")
            })
    }
}
