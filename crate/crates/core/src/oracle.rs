//! Exact Gibbs averages by enumeration of all `2^N` configurations.
//!
//! Configuration index bit `i` set means `sigma_i = +1`. The table is
//! filled in Gray-code order over the lower `N - 1` bits; the partner
//! `-sigma` shares the pair energy and has the opposite magnetization, so
//! each step fills two entries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matrix_abs, sym_eigen, SymMatrix};
use crate::model::{hamiltonian, Instance, ModelSpec, SpeciesLayout, SpinConfig};
use crate::order_params::{critical_temperatures, OrderParams};
use crate::rng::derive_seed;
use crate::stats::{log_sum_exp, pairwise_sum, Estimate};

/// Largest `N` for single-replica tables.
pub const MAX_EXACT_N: usize = 24;
/// Largest `N` for exact two-replica averages.
pub const MAX_OVERLAP_N: usize = 12;
/// Largest `N` for the `4^N` reference pair sum.
pub const MAX_DIRECT_PAIR_N: usize = 8;

const RESYNC_INTERVAL: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsTable {
    pub n: usize,
    /// `H(sigma)` for every configuration index.
    pub log_weights: Vec<f64>,
    pub log_z: f64,
}

impl GibbsTable {
    fn from_log_weights(n: usize, log_weights: Vec<f64>) -> Self {
        let log_z = log_sum_exp(&log_weights);
        GibbsTable {
            n,
            log_weights,
            log_z,
        }
    }

    /// `G_N(sigma)` for every configuration index.
    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights
            .iter()
            .map(|w| (w - self.log_z).exp())
            .collect()
    }
}

fn check_size(n: usize, max: usize) -> Result<()> {
    if n > max {
        Err(Error::TooLargeForExact { n, max })
    } else {
        Ok(())
    }
}

/// Pair energy and fields `f_i = sum_j J_ij s_j` from scratch.
fn resync(j: &[f64], spins: &[f64], fields: &mut [f64]) -> f64 {
    let n = spins.len();
    let mut pair = 0.0;
    for i in 0..n {
        let row = &j[i * n..(i + 1) * n];
        fields[i] = row.iter().zip(spins).map(|(a, b)| a * b).sum();
        pair += spins[i] * fields[i];
    }
    0.5 * pair
}

/// Exact table of `H(sigma)` and `log Z`.
pub fn enumerate_gibbs(inst: &Instance) -> Result<GibbsTable> {
    let n = inst.n();
    check_size(n, MAX_EXACT_N)?;
    let size = 1usize << n;
    let half = size >> 1;
    let full = size - 1;
    let h = inst.spec.h;
    let j = inst.disorder.dense_scaled(inst.coupling_scale());

    let mut spins = vec![-1.0; n];
    let mut fields = vec![0.0; n];
    let mut pair = resync(&j, &spins, &mut fields);
    let mut mag = -(n as f64);
    let mut log_weights = vec![0.0; size];
    let mut idx = 0usize;
    log_weights[idx] = pair + h * mag;
    log_weights[idx ^ full] = pair - h * mag;

    for k in 1..half {
        let i = k.trailing_zeros() as usize;
        let s = spins[i];
        pair -= 2.0 * s * fields[i];
        spins[i] = -s;
        mag -= 2.0 * s;
        let delta = -2.0 * s;
        for (f, &jij) in fields.iter_mut().zip(&j[i * n..(i + 1) * n]) {
            *f += jij * delta;
        }
        idx ^= 1 << i;
        if k % RESYNC_INTERVAL == 0 {
            pair = resync(&j, &spins, &mut fields);
        }
        log_weights[idx] = pair + h * mag;
        log_weights[idx ^ full] = pair - h * mag;
    }
    Ok(GibbsTable::from_log_weights(n, log_weights))
}

/// Reference table evaluating the Hamiltonian separately for every configuration.
pub fn enumerate_gibbs_direct(inst: &Instance) -> Result<GibbsTable> {
    let n = inst.n();
    check_size(n, MAX_EXACT_N)?;
    let log_weights = (0..1u64 << n)
        .map(|bits| hamiltonian(inst, &SpinConfig::from_bits(bits, n)))
        .collect();
    Ok(GibbsTable::from_log_weights(n, log_weights))
}

/// `<sigma_i>` for every spin, summed over `(sigma, -sigma)` pairs.
pub fn magnetizations(table: &GibbsTable) -> Vec<f64> {
    let n = table.n;
    let size = 1usize << n;
    let full = size - 1;
    let mut m = vec![0.0; n];
    for idx in 0..size >> 1 {
        let d = (table.log_weights[idx] - table.log_z).exp()
            - (table.log_weights[idx ^ full] - table.log_z).exp();
        for (i, mi) in m.iter_mut().enumerate() {
            if idx >> i & 1 == 1 {
                *mi += d;
            } else {
                *mi -= d;
            }
        }
    }
    m.iter().map(|v| v.clamp(-1.0, 1.0)).collect()
}

/// `<sigma_i>` as the Gibbs average of the conditional mean
/// `tanh(f_i(sigma) + h)`, accumulated as deviations from its value at the
/// first configuration. Exactly `tanh(h)` when the couplings vanish.
pub fn conditional_magnetizations(inst: &Instance, table: &GibbsTable) -> Result<Vec<f64>> {
    let n = inst.n();
    if table.n != n {
        return Err(Error::DimensionError {
            expected: n,
            got: table.n,
        });
    }
    let h = inst.spec.h;
    let j = inst.disorder.dense_scaled(inst.coupling_scale());
    let mut spins = vec![-1.0; n];
    let mut fields = vec![0.0; n];
    resync(&j, &spins, &mut fields);
    let origin: Vec<f64> = fields.iter().map(|f| (f + h).tanh()).collect();
    let mut acc = vec![0.0; n];
    let mut idx = 0usize;
    for k in 0..1usize << n {
        if k > 0 {
            let i = k.trailing_zeros() as usize;
            let delta = -2.0 * spins[i];
            spins[i] = -spins[i];
            for (f, &jij) in fields.iter_mut().zip(&j[i * n..(i + 1) * n]) {
                *f += jij * delta;
            }
            idx ^= 1 << i;
            if k % RESYNC_INTERVAL == 0 {
                resync(&j, &spins, &mut fields);
            }
        }
        let p = (table.log_weights[idx] - table.log_z).exp();
        for ((a, f), o) in acc.iter_mut().zip(&fields).zip(&origin) {
            *a += p * ((f + h).tanh() - o);
        }
    }
    Ok(origin
        .iter()
        .zip(&acc)
        .map(|(o, a)| (o + a).clamp(-1.0, 1.0))
        .collect())
}

/// Reference `sum_sigma sigma_i G_N(sigma)` with no pairing.
pub fn magnetizations_direct(table: &GibbsTable) -> Vec<f64> {
    let p = table.probabilities();
    (0..table.n)
        .map(|i| {
            let terms: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(idx, &w)| if idx >> i & 1 == 1 { w } else { -w })
                .collect();
            pairwise_sum(&terms)
        })
        .collect()
}

fn species_masks(layout: &SpeciesLayout) -> Vec<usize> {
    layout
        .ranges
        .iter()
        .map(|r| r.clone().fold(0usize, |acc, i| acc | 1 << i))
        .collect()
}

fn overlap_from_counts(layout: &SpeciesLayout, differing: &[usize]) -> Vec<f64> {
    layout
        .sizes
        .iter()
        .zip(differing)
        .map(|(&size, &d)| (size as f64 - 2.0 * d as f64) / size as f64)
        .collect()
}

/// In-place unnormalised Walsh–Hadamard transform.
fn walsh_hadamard(v: &mut [f64]) {
    let mut len = 1;
    while len < v.len() {
        for block in v.chunks_exact_mut(2 * len) {
            let (a, b) = block.split_at_mut(len);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (s, d) = (*x + *y, *x - *y);
                *x = s;
                *y = d;
            }
        }
        len *= 2;
    }
}

/// Law of the overlap vector of two independent replicas, stored by the
/// number of disagreeing spins in each species.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapDistribution {
    sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl OverlapDistribution {
    /// Built from `C(tau) = sum_sigma G(sigma) G(sigma xor tau)`, itself
    /// obtained as `WHT(WHT(G)^2) / 2^N`.
    pub fn new(table: &GibbsTable, layout: &SpeciesLayout) -> Result<Self> {
        check_size(table.n, MAX_OVERLAP_N)?;
        if layout.n() != table.n {
            return Err(Error::DimensionError {
                expected: table.n,
                got: layout.n(),
            });
        }
        let mut c = table.probabilities();
        walsh_hadamard(&mut c);
        c.iter_mut().for_each(|v| *v *= *v);
        walsh_hadamard(&mut c);
        let norm = 1.0 / c.len() as f64;

        let masks = species_masks(layout);
        let radices: Vec<usize> = layout.sizes.iter().map(|s| s + 1).collect();
        let mut probs = vec![0.0; radices.iter().product()];
        for (tau, &v) in c.iter().enumerate() {
            let mut key = 0;
            for (mask, radix) in masks.iter().zip(&radices) {
                key = key * radix + (tau & mask).count_ones() as usize;
            }
            probs[key] += v * norm;
        }
        Ok(OverlapDistribution {
            sizes: layout.sizes.clone(),
            probs,
        })
    }

    /// `(R, P(R_12 = R))` over every reachable overlap vector.
    pub fn support(&self) -> Vec<(Vec<f64>, f64)> {
        let m = self.sizes.len();
        self.probs
            .iter()
            .enumerate()
            .map(|(mut key, &p)| {
                let mut r = vec![0.0; m];
                for s in (0..m).rev() {
                    let radix = self.sizes[s] + 1;
                    let d = key % radix;
                    key /= radix;
                    r[s] = (self.sizes[s] as f64 - 2.0 * d as f64) / self.sizes[s] as f64;
                }
                (r, p)
            })
            .collect()
    }

    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let terms: Vec<f64> = self.support().iter().map(|(r, p)| p * f(r)).collect();
        pairwise_sum(&terms)
    }
}

/// `E f(R_12)` for two independent replicas from the table's Gibbs measure.
pub fn overlap_expectation(
    table: &GibbsTable,
    layout: &SpeciesLayout,
    f: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    Ok(OverlapDistribution::new(table, layout)?.expect(f))
}

/// Reference `sum_{sigma1, sigma2} f(R_12) G(sigma1) G(sigma2)` over all `4^N` pairs.
pub fn overlap_expectation_direct(
    table: &GibbsTable,
    layout: &SpeciesLayout,
    f: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    check_size(table.n, MAX_DIRECT_PAIR_N)?;
    let p = table.probabilities();
    let masks = species_masks(layout);
    let mut differing = vec![0; masks.len()];
    let outer: Vec<f64> = (0..p.len())
        .map(|a| {
            let inner: Vec<f64> = (0..p.len())
                .map(|b| {
                    for (d, mask) in differing.iter_mut().zip(&masks) {
                        *d = ((a ^ b) & mask).count_ones() as usize;
                    }
                    p[b] * f(&overlap_from_counts(layout, &differing))
                })
                .collect();
            p[a] * pairwise_sum(&inner)
        })
        .collect();
    Ok(pairwise_sum(&outer))
}

/// `P(x) = x^T Lambda^{1/2} V Lambda^{1/2} x` with `V = |Lambda^{1/2} Delta^2 Lambda^{1/2}|`,
/// evaluated at `x = R - q_ref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapFunctional {
    pub v_matrix: SymMatrix,
    pub lambdas: Vec<f64>,
    pub q_ref: Vec<f64>,
    weighted: SymMatrix,
}

impl OverlapFunctional {
    pub fn new(spec: &ModelSpec, q_ref: &[f64]) -> Result<Self> {
        let m = spec.species_count();
        if q_ref.len() != m {
            return Err(Error::DimensionError {
                expected: m,
                got: q_ref.len(),
            });
        }
        let sqrt_lambda: Vec<f64> = spec.lambdas.iter().map(|l| l.sqrt()).collect();
        let v_matrix = matrix_abs(&spec.delta2.congruence_diag(&sqrt_lambda))?;
        let weighted = v_matrix.congruence_diag(&sqrt_lambda);
        Ok(OverlapFunctional {
            v_matrix,
            lambdas: spec.lambdas.clone(),
            q_ref: q_ref.to_vec(),
            weighted,
        })
    }

    /// `P(R - q_ref)`.
    pub fn eval(&self, r: &[f64]) -> f64 {
        let x: Vec<f64> = r.iter().zip(&self.q_ref).map(|(a, b)| a - b).collect();
        self.weighted.quadratic_form(&x).max(0.0)
    }

    /// `det(I - c V)^{-1/2}`; infinite once `c rho(V) >= 1`.
    pub fn determinant_bound(&self, c: f64) -> Result<f64> {
        let eig = sym_eigen(&self.v_matrix)?.eigenvalues;
        let mut det = 1.0;
        for mu in eig {
            let factor = 1.0 - c * mu;
            if factor <= 0.0 {
                return Ok(f64::INFINITY);
            }
            det *= factor;
        }
        Ok(det.powf(-0.5))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub beta: f64,
    pub gamma: f64,
    /// Supremum of admissible `gamma`: `(beta_c^2 - 4 alpha beta^2) / 2`.
    pub gamma_max: f64,
    pub n_disorder: usize,
    pub seed: u64,
    pub mean: f64,
    pub std_err: f64,
    pub bound: f64,
    pub pass: bool,
    /// `<exp(gamma N P(R_12 - q))>` for each disorder draw.
    pub per_draw: Vec<f64>,
}

/// Disorder average of the exact `<exp(gamma N P(R_12 - q))>` against the
/// determinant bound. Draw `d` uses disorder seed `derive_seed(seed, d)`.
pub fn concentration_bound_check(
    spec: &ModelSpec,
    q: &OrderParams,
    gamma: f64,
    n_disorder: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    spec.validate()?;
    check_size(spec.n, MAX_OVERLAP_N)?;
    let temps = critical_temperatures(spec)?;
    let alpha = f64::from(temps.alpha);
    let beta2 = spec.beta * spec.beta;
    let gamma_max = (temps.beta_c * temps.beta_c - 4.0 * alpha * beta2) / 2.0;
    if !(gamma >= 0.0 && gamma < gamma_max) {
        return Err(Error::InvalidGamma {
            gamma,
            max: gamma_max,
        });
    }
    if n_disorder == 0 {
        return Err(Error::InsufficientSamples {
            required: 1,
            got: 0,
        });
    }
    let functional = OverlapFunctional::new(spec, &q.q)?;
    let bound = functional.determinant_bound(2.0 * gamma + 4.0 * alpha * beta2)?;
    let scale = gamma * spec.n as f64;

    let per_draw = (0..n_disorder)
        .into_par_iter()
        .map(|d| {
            let inst = Instance::sample(spec, derive_seed(seed, d as u64))?;
            let table = enumerate_gibbs(&inst)?;
            overlap_expectation(&table, &inst.layout, |r| (scale * functional.eval(r)).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    let est = Estimate::from_samples(&per_draw);
    Ok(ConcentrationReport {
        n: spec.n,
        beta: spec.beta,
        gamma,
        gamma_max,
        n_disorder,
        seed,
        mean: est.mean,
        std_err: est.std_err,
        bound,
        pass: est.mean <= bound,
        per_draw,
    })
}
