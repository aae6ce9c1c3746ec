//! Concrete model instances: species layout, Gaussian disorder and the
//! Hamiltonian `H(s) = (beta/sqrt N) sum_{i<j} g_ij s_i s_j + h sum_i s_i`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::rng::{StreamRng, DISORDER_STREAM};

const LAMBDA_SUM_TOL: f64 = 1e-12;

/// Species fractions, variance profile, temperature, field and size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub lambdas: Vec<f64>,
    pub delta2: SymMatrix,
    pub beta: f64,
    pub h: f64,
    pub n: usize,
}

impl ModelSpec {
    pub fn new(lambdas: Vec<f64>, delta2: SymMatrix, beta: f64, h: f64, n: usize) -> Result<Self> {
        let spec = ModelSpec {
            lambdas,
            delta2,
            beta,
            h,
            n,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.lambdas.len();
        if m == 0 {
            return Err(Error::InvalidSpec(
                "at least one species is required".into(),
            ));
        }
        if self.delta2.dim() != m {
            return Err(Error::InvalidSpec(format!(
                "delta2 is {}x{} but there are {m} species",
                self.delta2.dim(),
                self.delta2.dim()
            )));
        }
        for (s, &l) in self.lambdas.iter().enumerate() {
            // a single species carries the whole system
            let ok = l.is_finite() && l > 0.0 && (l < 1.0 || (m == 1 && l == 1.0));
            if !ok {
                return Err(Error::InvalidSpec(format!(
                    "lambda[{s}] = {l} must lie in (0, 1)"
                )));
            }
        }
        let sum: f64 = self.lambdas.iter().sum();
        if (sum - 1.0).abs() > LAMBDA_SUM_TOL {
            return Err(Error::InvalidSpec(format!(
                "lambdas sum to {sum}, expected 1"
            )));
        }
        for s in 0..m {
            for t in 0..m {
                if self.delta2.get(s, t) < 0.0 {
                    return Err(Error::InvalidSpec(format!(
                        "delta2[{s}][{t}] = {} is negative",
                        self.delta2.get(s, t)
                    )));
                }
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "beta = {} must be >= 0",
                self.beta
            )));
        }
        if !(self.h.is_finite() && self.h >= 0.0) {
            return Err(Error::InvalidSpec(format!("h = {} must be >= 0", self.h)));
        }
        if self.n == 0 {
            return Err(Error::InvalidSpec("N must be at least 1".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn species_count(&self) -> usize {
        self.lambdas.len()
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        ModelSpec {
            beta,
            ..self.clone()
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        ModelSpec { n, ..self.clone() }
    }

    pub fn with_h(&self, h: f64) -> Self {
        ModelSpec { h, ..self.clone() }
    }

    /// `(Delta^2 Lambda x)_s` for every species.
    pub fn delta2_lambda(&self, x: &[f64]) -> Vec<f64> {
        let weighted: Vec<f64> = x.iter().zip(&self.lambdas).map(|(a, l)| a * l).collect();
        self.delta2.mul_vec(&weighted)
    }

    /// Relabels species so that new species `s` is old species `perm[s]`.
    pub fn permute_species(&self, perm: &[usize]) -> Self {
        ModelSpec {
            lambdas: perm.iter().map(|&p| self.lambdas[p]).collect(),
            delta2: self.delta2.permuted(perm),
            ..self.clone()
        }
    }
}

/// Contiguous species blocks partitioning `0..N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesLayout {
    pub sizes: Vec<usize>,
    pub species_of: Vec<usize>,
    pub ranges: Vec<Range<usize>>,
}

impl SpeciesLayout {
    pub fn n(&self) -> usize {
        self.species_of.len()
    }

    pub fn species_count(&self) -> usize {
        self.sizes.len()
    }
}

/// Splits `N` spins into species blocks: `floor(lambda_s N)` each, with the
/// leftover spins going to the largest fractional parts (ties to the lower
/// species index).
pub fn build_layout(spec: &ModelSpec) -> Result<SpeciesLayout> {
    let n = spec.n;
    let exact: Vec<f64> = spec.lambdas.iter().map(|l| l * n as f64).collect();
    if let Some((s, &e)) = exact.iter().enumerate().find(|(_, &e)| e < 1.0) {
        return Err(Error::SpeciesTooSmall {
            species: s,
            expected: e,
            n,
        });
    }
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut remaining = n.saturating_sub(assigned);
    let mut by_fraction: Vec<usize> = (0..sizes.len()).collect();
    by_fraction.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &s in by_fraction.iter().cycle() {
        if remaining == 0 {
            break;
        }
        sizes[s] += 1;
        remaining -= 1;
    }
    // float round-up in lambda*N can overshoot by one spin
    while sizes.iter().sum::<usize>() > n {
        let s = (0..sizes.len()).max_by_key(|&s| sizes[s]).unwrap();
        sizes[s] -= 1;
    }

    let mut ranges = Vec::with_capacity(sizes.len());
    let mut species_of = Vec::with_capacity(n);
    let mut start = 0;
    for (s, &size) in sizes.iter().enumerate() {
        ranges.push(start..start + size);
        species_of.extend(std::iter::repeat_n(s, size));
        start += size;
    }
    Ok(SpeciesLayout {
        sizes,
        species_of,
        ranges,
    })
}

/// Upper-triangular couplings `g_ij`, `i < j`, in a flat array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderSample {
    pub n: usize,
    pub couplings: Vec<f64>,
    pub seed: u64,
}

impl DisorderSample {
    /// Wraps explicit couplings (row-major over `i < j`).
    pub fn from_couplings(n: usize, couplings: Vec<f64>) -> Result<Self> {
        let expected = n * n.saturating_sub(1) / 2;
        if couplings.len() != expected {
            return Err(Error::DimensionError {
                expected,
                got: couplings.len(),
            });
        }
        if couplings.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument("couplings must be finite".into()));
        }
        Ok(DisorderSample {
            n,
            couplings,
            seed: 0,
        })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// `g_ij` for `i != j` (symmetric access).
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < j {
            self.couplings[self.index(i, j)]
        } else {
            self.couplings[self.index(j, i)]
        }
    }

    pub fn negated(&self) -> Self {
        DisorderSample {
            couplings: self.couplings.iter().map(|g| -g).collect(),
            ..self.clone()
        }
    }

    /// Dense symmetric copy scaled by `factor`, zero diagonal.
    pub fn dense_scaled(&self, factor: f64) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = factor * self.couplings[k];
                out[i * n + j] = v;
                out[j * n + i] = v;
                k += 1;
            }
        }
        out
    }
}

/// Draws `g_ij ~ N(0, Delta^2_{s(i) s(j)})` independently from stream 0.
pub fn sample_disorder(spec: &ModelSpec, layout: &SpeciesLayout, seed: u64) -> DisorderSample {
    let n = spec.n;
    assert_eq!(layout.n(), n, "layout does not match model size");
    let m = spec.species_count();
    let std_dev: Vec<f64> = (0..m * m)
        .map(|k| spec.delta2.get(k / m, k % m).sqrt())
        .collect();
    let mut rng = StreamRng::new(seed, DISORDER_STREAM);
    let mut couplings = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        let si = layout.species_of[i];
        for j in (i + 1)..n {
            let sd = std_dev[si * m + layout.species_of[j]];
            couplings.push(sd * rng.standard_normal());
        }
    }
    DisorderSample { n, couplings, seed }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(i) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument(format!(
                "spin {i} is {}, not +-1",
                spins[i]
            )));
        }
        Ok(SpinConfig { spins })
    }

    pub fn all_up(n: usize) -> Self {
        SpinConfig { spins: vec![1; n] }
    }

    /// Bit `i` of `bits` set means spin `i` is `+1`.
    pub fn from_bits(bits: u64, n: usize) -> Self {
        SpinConfig {
            spins: (0..n)
                .map(|i| if bits >> i & 1 == 1 { 1 } else { -1 })
                .collect(),
        }
    }

    pub fn to_bits(&self) -> u64 {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .fold(0u64, |acc, (i, _)| acc | 1 << i)
    }

    #[inline]
    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.spins.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        f64::from(self.spins[i])
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: i8) {
        assert!(value == 1 || value == -1);
        self.spins[i] = value;
    }

    pub fn flipped(&self) -> Self {
        SpinConfig {
            spins: self.spins.iter().map(|s| -s).collect(),
        }
    }
}

/// A model specification together with its layout and one disorder draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub spec: ModelSpec,
    pub layout: SpeciesLayout,
    pub disorder: DisorderSample,
}

impl Instance {
    /// Builds the layout and samples disorder with `seed`.
    pub fn sample(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layout = build_layout(spec)?;
        let disorder = sample_disorder(spec, &layout, seed);
        Ok(Instance {
            spec: spec.clone(),
            layout,
            disorder,
        })
    }

    pub fn with_disorder(spec: &ModelSpec, disorder: DisorderSample) -> Result<Self> {
        spec.validate()?;
        if disorder.n != spec.n {
            return Err(Error::DimensionError {
                expected: spec.n,
                got: disorder.n,
            });
        }
        let layout = build_layout(spec)?;
        Ok(Instance {
            spec: spec.clone(),
            layout,
            disorder,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.spec.n
    }

    /// `beta / sqrt(N)`.
    #[inline]
    pub fn coupling_scale(&self) -> f64 {
        self.spec.beta / (self.spec.n as f64).sqrt()
    }

    /// `(beta/sqrt N) sum_{j != i} g_ij x_j` for every `i`.
    pub fn cavity_fields(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n);
        let mut out = vec![0.0; n];
        let mut k = 0;
        for i in 0..n {
            let mut acc = 0.0;
            for j in (i + 1)..n {
                let g = self.disorder.couplings[k];
                acc += g * x[j];
                out[j] += g * x[i];
                k += 1;
            }
            out[i] += acc;
        }
        let scale = self.coupling_scale();
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }
}

/// `H(sigma) = (beta/sqrt N) sum_{i<j} g_ij s_i s_j + h sum_i s_i`.
pub fn hamiltonian(inst: &Instance, sigma: &SpinConfig) -> f64 {
    let n = inst.n();
    assert_eq!(sigma.len(), n);
    let mut pair = 0.0;
    let mut k = 0;
    for i in 0..n {
        let si = sigma.get(i);
        let mut row = 0.0;
        for j in (i + 1)..n {
            row += inst.disorder.couplings[k] * sigma.get(j);
            k += 1;
        }
        pair += si * row;
    }
    let field: f64 = sigma.spins().iter().map(|&s| f64::from(s)).sum();
    inst.coupling_scale() * pair + inst.spec.h * field
}

/// `(beta/sqrt N) sum_{j != i} g_ij s_j + h`; flipping spin `i` changes
/// `H` by `-2 s_i` times this value.
pub fn local_field(inst: &Instance, sigma: &SpinConfig, i: usize) -> f64 {
    let n = inst.n();
    assert!(i < n && sigma.len() == n);
    let sum: f64 = (0..n)
        .filter(|&j| j != i)
        .map(|j| inst.disorder.get(i, j) * sigma.get(j))
        .sum();
    inst.coupling_scale() * sum + inst.spec.h
}
