//! Heat-bath (Glauber) sampling of the Gibbs measure.
//!
//! Each replica runs sequential-scan sweeps with a cached vector of
//! coupling fields. Magnetizations are estimated by averaging the
//! conditional mean `tanh(field_i + h)` at every update of spin `i`, which
//! has the same expectation as `sigma_i` and a smaller variance. Overlaps
//! are computed from stored spin snapshots of distinct replicas.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{local_field, Instance, SpinConfig};
use crate::order_params::critical_temperatures;
use crate::rng::{replica_stream, StreamRng};
use crate::stats::{batch_count, batch_means, Estimate};

pub const DEFAULT_BURN_IN: usize = 200;
pub const MIN_SAMPLES_PER_THIN: usize = 20;
const MAX_BURN_IN_DOUBLINGS: usize = 4;
const RESYNC_SWEEPS: usize = 64;
const DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Production sweeps per replica.
    pub n_sweeps: usize,
    pub burn_in_sweeps: usize,
    /// Sweeps between recorded samples.
    pub thin: usize,
    pub n_replicas: usize,
    pub seed: u64,
    /// Double the burn-in while the first and second halves of the energy
    /// trace disagree by more than three standard errors.
    pub adaptive_burn_in: bool,
}

impl ChainConfig {
    pub fn new(n_sweeps: usize, n_replicas: usize, seed: u64) -> Self {
        ChainConfig {
            n_sweeps,
            burn_in_sweeps: DEFAULT_BURN_IN,
            thin: 1,
            n_replicas,
            seed,
            adaptive_burn_in: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        if self.n_replicas == 0 {
            return Err(Error::InvalidArgument(
                "n_replicas must be at least 1".into(),
            ));
        }
        let required = MIN_SAMPLES_PER_THIN * self.thin;
        if self.n_sweeps < required {
            return Err(Error::InsufficientSamples {
                required,
                got: self.n_sweeps,
            });
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.n_sweeps / self.thin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurnIn {
    pub sweeps: usize,
    /// False when the doubling cap was reached without passing the test.
    pub stationary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapEstimate {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Time variance of `R_12^(s)`, averaged over replica pairs.
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcEstimate {
    pub magnetizations: Vec<f64>,
    pub magnetization_se: Vec<f64>,
    /// Per-replica magnetization estimates; independent given the disorder.
    pub replica_magnetizations: Vec<Vec<f64>>,
    /// `None` with a single replica.
    pub overlap: Option<OverlapEstimate>,
    /// Fraction of heat-bath updates that changed the spin.
    pub flip_rate: f64,
    pub burn_in: Vec<BurnIn>,
    pub n_samples: usize,
    pub n_batches: usize,
    pub outside_proven_regime: bool,
}

/// One sequential-scan heat-bath sweep: spin `i` becomes `+1` with
/// probability `(1 + tanh(local_field(i))) / 2`. Uses one uniform per spin.
pub fn glauber_sweep(inst: &Instance, sigma: &SpinConfig, rng: &mut StreamRng) -> SpinConfig {
    let mut next = sigma.clone();
    for i in 0..inst.n() {
        let t = local_field(inst, &next, i).tanh();
        next.set(
            i,
            if rng.uniform() < 0.5 * (1.0 + t) {
                1
            } else {
                -1
            },
        );
    }
    next
}

/// Chain state with cached fields `f_i = (beta/sqrt N) sum_j g_ij s_j`.
pub struct Chain<'a> {
    couplings: &'a [f64],
    h: f64,
    spins: Vec<f64>,
    fields: Vec<f64>,
    rng: StreamRng,
    sweeps: usize,
    flips: u64,
    updates: u64,
}

impl<'a> Chain<'a> {
    /// `couplings` is the dense `N x N` matrix `(beta/sqrt N) g`.
    pub fn new(couplings: &'a [f64], h: f64, initial: &SpinConfig, rng: StreamRng) -> Self {
        let n = initial.len();
        assert_eq!(couplings.len(), n * n);
        let spins: Vec<f64> = (0..n).map(|i| initial.get(i)).collect();
        let mut chain = Chain {
            couplings,
            h,
            fields: vec![0.0; n],
            spins,
            rng,
            sweeps: 0,
            flips: 0,
            updates: 0,
        };
        chain.fields = chain.fresh_fields();
        chain
    }

    /// Random initial state drawn from the chain's own stream.
    pub fn random_start(couplings: &'a [f64], h: f64, n: usize, mut rng: StreamRng) -> Self {
        let init = SpinConfig::new((0..n).map(|_| rng.spin()).collect()).expect("spins are +-1");
        Chain::new(couplings, h, &init, rng)
    }

    fn fresh_fields(&self) -> Vec<f64> {
        let n = self.spins.len();
        (0..n)
            .map(|i| {
                self.couplings[i * n..(i + 1) * n]
                    .iter()
                    .zip(&self.spins)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Recomputes the fields and fails if the cached copy drifted.
    pub fn resync(&mut self) -> Result<()> {
        let fresh = self.fresh_fields();
        let drift = fresh
            .iter()
            .zip(&self.fields)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        if drift > DRIFT_TOL {
            return Err(Error::FieldDrift { drift });
        }
        self.fields = fresh;
        Ok(())
    }

    /// One sweep; `observe(i, tanh(f_i + h))` is called before spin `i` is updated.
    pub fn sweep(&mut self, mut observe: impl FnMut(usize, f64)) -> Result<()> {
        let n = self.spins.len();
        for i in 0..n {
            let t = (self.fields[i] + self.h).tanh();
            observe(i, t);
            let new = if self.rng.uniform() < 0.5 * (1.0 + t) {
                1.0
            } else {
                -1.0
            };
            self.updates += 1;
            if new != self.spins[i] {
                let delta = new - self.spins[i];
                self.spins[i] = new;
                for (f, &jij) in self
                    .fields
                    .iter_mut()
                    .zip(&self.couplings[i * n..(i + 1) * n])
                {
                    *f += jij * delta;
                }
                self.flips += 1;
            }
        }
        self.sweeps += 1;
        if self.sweeps.is_multiple_of(RESYNC_SWEEPS) {
            self.resync()?;
        }
        Ok(())
    }

    /// `H(sigma)` of the current state.
    pub fn energy(&self) -> f64 {
        let pair: f64 = self
            .spins
            .iter()
            .zip(&self.fields)
            .map(|(s, f)| s * f)
            .sum();
        let mag: f64 = self.spins.iter().sum();
        0.5 * pair + self.h * mag
    }

    pub fn state(&self) -> SpinConfig {
        SpinConfig::new(
            self.spins
                .iter()
                .map(|&s| if s > 0.0 { 1 } else { -1 })
                .collect(),
        )
        .expect("spins are +-1")
    }

    fn packed(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.spins.len().div_ceil(64)];
        for (i, &s) in self.spins.iter().enumerate() {
            if s > 0.0 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        words
    }

    pub fn flip_counts(&self) -> (u64, u64) {
        (self.flips, self.updates)
    }
}

/// Halves of the trace agree within three standard errors.
fn looks_stationary(trace: &[f64]) -> bool {
    let half = trace.len() / 2;
    if half < 4 {
        return true;
    }
    let batches = (half / 4).clamp(2, 10);
    let a = batch_means(&trace[..half], batches);
    let b = batch_means(&trace[half..2 * half], batches);
    (a.mean - b.mean).abs() <= 3.0 * (a.std_err.powi(2) + b.std_err.powi(2)).sqrt()
}

fn burn_in(chain: &mut Chain<'_>, cfg: &ChainConfig) -> Result<BurnIn> {
    let mut trace = Vec::new();
    let mut block = cfg.burn_in_sweeps;
    let mut doublings = 0;
    loop {
        for _ in 0..block {
            chain.sweep(|_, _| {})?;
            trace.push(chain.energy());
        }
        let stationary = looks_stationary(&trace);
        if block == 0 || !cfg.adaptive_burn_in || stationary || doublings == MAX_BURN_IN_DOUBLINGS {
            return Ok(BurnIn {
                sweeps: trace.len(),
                stationary,
            });
        }
        block = trace.len();
        doublings += 1;
    }
}

struct ReplicaRun {
    /// Per batch, per spin: batch mean of `tanh(f_i + h)`.
    batch_means: Vec<Vec<f64>>,
    snapshots: Vec<Vec<u64>>,
    burn_in: BurnIn,
    flips: u64,
    updates: u64,
}

fn run_replica(
    couplings: &[f64],
    inst: &Instance,
    cfg: &ChainConfig,
    replica: usize,
    n_batches: usize,
) -> Result<ReplicaRun> {
    let n = inst.n();
    let rng = StreamRng::new(cfg.seed, replica_stream(replica));
    let mut chain = Chain::random_start(couplings, inst.spec.h, n, rng);
    let burn = burn_in(&mut chain, cfg)?;
    let (flips0, updates0) = chain.flip_counts();

    let batch_len = cfg.n_samples() / n_batches;
    let used = batch_len * n_batches;
    // accumulate deviations from the first observation so constant inputs are exact
    let mut origin: Option<Vec<f64>> = None;
    let mut current = vec![0.0; n];
    let mut sums = vec![vec![0.0; n]; n_batches];
    let mut snapshots = Vec::with_capacity(used);
    let mut sample = 0;
    for sweep in 0..cfg.n_sweeps {
        let record = (sweep + 1) % cfg.thin == 0 && sample < used;
        if record {
            chain.sweep(|i, t| current[i] = t)?;
            let base = origin.get_or_insert_with(|| current.clone());
            for ((acc, c), b) in sums[sample / batch_len]
                .iter_mut()
                .zip(&current)
                .zip(base.iter())
            {
                *acc += c - b;
            }
            snapshots.push(chain.packed());
            sample += 1;
        } else {
            chain.sweep(|_, _| {})?;
        }
    }
    let base = origin.unwrap_or_else(|| vec![0.0; n]);
    let batch_means = sums
        .into_iter()
        .map(|s| {
            s.iter()
                .zip(&base)
                .map(|(acc, b)| b + acc / batch_len as f64)
                .collect()
        })
        .collect();
    let (flips, updates) = chain.flip_counts();
    Ok(ReplicaRun {
        batch_means,
        snapshots,
        burn_in: burn,
        flips: flips - flips0,
        updates: updates - updates0,
    })
}

fn species_word_masks(inst: &Instance) -> Vec<Vec<u64>> {
    let words = inst.n().div_ceil(64);
    inst.layout
        .ranges
        .iter()
        .map(|r| {
            let mut mask = vec![0u64; words];
            for i in r.clone() {
                mask[i / 64] |= 1 << (i % 64);
            }
            mask
        })
        .collect()
}

fn overlap_estimate(
    inst: &Instance,
    runs: &[ReplicaRun],
    n_batches: usize,
) -> Option<OverlapEstimate> {
    if runs.len() < 2 {
        return None;
    }
    let masks = species_word_masks(inst);
    let samples = runs[0].snapshots.len();
    let pairs: Vec<(usize, usize)> = (0..runs.len())
        .flat_map(|a| ((a + 1)..runs.len()).map(move |b| (a, b)))
        .collect();
    let m = masks.len();
    let mut mean = Vec::with_capacity(m);
    let mut std_err = Vec::with_capacity(m);
    let mut variance = Vec::with_capacity(m);
    for (s, mask) in masks.iter().enumerate() {
        let size = inst.layout.sizes[s] as f64;
        let per_pair: Vec<Vec<f64>> = pairs
            .iter()
            .map(|&(a, b)| {
                (0..samples)
                    .map(|k| {
                        let differ: u32 = runs[a].snapshots[k]
                            .iter()
                            .zip(&runs[b].snapshots[k])
                            .zip(mask)
                            .map(|((x, y), w)| ((x ^ y) & w).count_ones())
                            .sum();
                        (size - 2.0 * f64::from(differ)) / size
                    })
                    .collect()
            })
            .collect();
        let averaged: Vec<f64> = (0..samples)
            .map(|k| per_pair.iter().map(|series| series[k]).sum::<f64>() / pairs.len() as f64)
            .collect();
        let est = batch_means(&averaged, n_batches);
        let var = per_pair
            .iter()
            .map(|series| Estimate::from_samples(series).std_err.powi(2) * series.len() as f64)
            .sum::<f64>()
            / pairs.len() as f64;
        mean.push(est.mean);
        std_err.push(est.std_err);
        variance.push(var);
    }
    Some(OverlapEstimate {
        mean,
        std_err,
        variance,
    })
}

/// Runs `cfg.n_replicas` independent chains on one disorder sample.
pub fn estimate(inst: &Instance, cfg: &ChainConfig) -> Result<McmcEstimate> {
    cfg.validate()?;
    let n = inst.n();
    let couplings = inst.disorder.dense_scaled(inst.coupling_scale());
    let n_samples = cfg.n_samples();
    let n_batches = batch_count(n_samples);

    let runs = (0..cfg.n_replicas)
        .into_par_iter()
        .map(|r| run_replica(&couplings, inst, cfg, r, n_batches))
        .collect::<Result<Vec<_>>>()?;

    let mut magnetizations = Vec::with_capacity(n);
    let mut magnetization_se = Vec::with_capacity(n);
    for i in 0..n {
        let pooled: Vec<f64> = runs
            .iter()
            .flat_map(|run| run.batch_means.iter().map(move |b| b[i]))
            .collect();
        let est = Estimate::from_samples(&pooled);
        magnetizations.push(est.mean.clamp(-1.0, 1.0));
        magnetization_se.push(est.std_err);
    }
    let replica_magnetizations = runs
        .iter()
        .map(|run| {
            (0..n)
                .map(|i| {
                    let col: Vec<f64> = run.batch_means.iter().map(|b| b[i]).collect();
                    Estimate::from_samples(&col).mean.clamp(-1.0, 1.0)
                })
                .collect()
        })
        .collect();
    let (flips, updates) = runs
        .iter()
        .fold((0, 0), |(f, u), r| (f + r.flips, u + r.updates));
    let outside_proven_regime = critical_temperatures(&inst.spec)
        .map(|t| inst.spec.beta >= t.beta_0)
        .unwrap_or(false);

    Ok(McmcEstimate {
        magnetizations,
        magnetization_se,
        replica_magnetizations,
        overlap: overlap_estimate(inst, &runs, n_batches),
        flip_rate: if updates == 0 {
            0.0
        } else {
            flips as f64 / updates as f64
        },
        burn_in: runs.iter().map(|r| r.burn_in).collect(),
        n_samples: runs[0].snapshots.len(),
        n_batches,
        outside_proven_regime,
    })
}
