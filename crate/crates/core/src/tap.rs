//! TAP equations: Onsager corrections, residuals and their scaling with
//! `N`, an iterative TAP solver, and exact checks of the cavity identities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{self, ChainConfig};
use crate::model::{Instance, ModelSpec};
use crate::oracle::{conditional_magnetizations, enumerate_gibbs, magnetizations, GibbsTable};
use crate::order_params::critical_temperatures;
use crate::rng::{derive_seed, eta_stream, StreamRng};
use crate::stats::{log_log_slope, Estimate};

/// Largest `N` accepted by the cavity checks.
pub const MAX_CAVITY_N: usize = 20;

/// `c_s = beta^2 sum_t lambda_t Delta^2_st (1 - q_t)`.
pub fn onsager_correction(spec: &ModelSpec, q: &[f64]) -> Vec<f64> {
    let m = spec.species_count();
    assert_eq!(q.len(), m, "one order parameter per species");
    let beta2 = spec.beta * spec.beta;
    (0..m)
        .map(|s| {
            let sum: f64 = (0..m)
                .map(|t| spec.lambdas[t] * spec.delta2.get(s, t) * (1.0 - q[t]))
                .sum();
            beta2 * sum
        })
        .collect()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionError { expected, got })
    }
}

/// `m_i - tanh(cavity_i(m) + h - c_{s(i)} m_i)` for every spin.
fn residual_vector(inst: &Instance, mags: &[f64], onsager: &[f64]) -> Vec<f64> {
    let cavity = inst.cavity_fields(mags);
    mags.iter()
        .zip(&cavity)
        .zip(&inst.layout.species_of)
        .map(|((&m, &f), &s)| m - (f + inst.spec.h - onsager[s] * m).tanh())
        .collect()
}

fn beta_over_beta0(spec: &ModelSpec) -> f64 {
    critical_temperatures(spec).map_or(f64::NAN, |t| spec.beta / t.beta_0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapReport {
    pub onsager: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Mean of `residual^2` over spins.
    pub moment_2: f64,
    /// Mean of `residual^4` over spins.
    pub moment_4: f64,
    pub max_abs_residual: f64,
    pub n: usize,
    pub beta_over_beta0: f64,
}

impl TapReport {
    /// `moment_4 >= moment_2^2` up to rounding.
    pub fn jensen_holds(&self) -> bool {
        self.moment_4 >= self.moment_2 * self.moment_2 * (1.0 - 1e-12)
    }
}

pub fn tap_residuals(inst: &Instance, mags: &[f64], q: &[f64]) -> Result<TapReport> {
    check_len(inst.n(), mags.len())?;
    check_len(inst.spec.species_count(), q.len())?;
    let onsager = onsager_correction(&inst.spec, q);
    let residuals = residual_vector(inst, mags, &onsager);
    let n = residuals.len() as f64;
    let moment_2 = residuals.iter().map(|r| r * r).sum::<f64>() / n;
    let moment_4 = residuals.iter().map(|r| r.powi(4)).sum::<f64>() / n;
    let max_abs_residual = residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    Ok(TapReport {
        onsager,
        residuals,
        moment_2,
        moment_4,
        max_abs_residual,
        n: inst.n(),
        beta_over_beta0: beta_over_beta0(&inst.spec),
    })
}

/// Residual moments with sampling noise removed by multiplying residuals
/// computed from independent replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossReplicaMoments {
    /// Mean over replica pairs of `mean_i r^a_i r^b_i`.
    pub moment_2: f64,
    /// Mean over replica quadruples of `mean_i r^a_i r^b_i r^c_i r^d_i`; needs four replicas.
    pub moment_4: Option<f64>,
}

pub fn cross_replica_moments(
    inst: &Instance,
    replica_mags: &[Vec<f64>],
    q: &[f64],
) -> Result<CrossReplicaMoments> {
    let k = replica_mags.len();
    if k < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: k,
        });
    }
    check_len(inst.spec.species_count(), q.len())?;
    for m in replica_mags {
        check_len(inst.n(), m.len())?;
    }
    let onsager = onsager_correction(&inst.spec, q);
    let res: Vec<Vec<f64>> = replica_mags
        .iter()
        .map(|m| residual_vector(inst, m, &onsager))
        .collect();
    let n = inst.n() as f64;
    let product_mean = |idx: &[usize]| -> f64 {
        (0..inst.n())
            .map(|i| idx.iter().map(|&a| res[a][i]).product::<f64>())
            .sum::<f64>()
            / n
    };
    let mut pairs = Vec::new();
    let mut quads = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            pairs.push(product_mean(&[a, b]));
            for c in (b + 1)..k {
                for d in (c + 1)..k {
                    quads.push(product_mean(&[a, b, c, d]));
                }
            }
        }
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(CrossReplicaMoments {
        moment_2: avg(&pairs),
        moment_4: (!quads.is_empty()).then(|| avg(&quads)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimator {
    /// Exact enumeration; `N <= 24`.
    Exact,
    /// Heat-bath chains; the seed field of `chain` is replaced per draw.
    Mcmc { chain: ChainConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedJob {
    pub n: usize,
    pub draw: usize,
    pub disorder_seed: u64,
    /// Chain seed for the MCMC estimator.
    pub chain_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub n_disorder: usize,
    /// Disorder average of the residual second moment (cross-replica for MCMC).
    pub moment_2: f64,
    pub moment_2_se: f64,
    /// Disorder average of the residual fourth moment; absent for MCMC with fewer than four replicas.
    pub moment_4: Option<f64>,
    pub moment_4_se: Option<f64>,
    /// Plug-in second moment from pooled magnetizations.
    pub plugin_moment_2: f64,
    pub plugin_moment_2_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    /// Log-log slope of `moment_2` against `N`; `None` when any moment is not positive.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub q: Vec<f64>,
    pub seed: u64,
}

fn check_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "scaling study needs at least 4 sizes, got {}",
            n_list.len()
        )));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "sizes must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Seeds used by [`scaling_study`], without computing anything.
pub fn scaling_plan(
    n_list: &[usize],
    n_disorder: usize,
    estimator: &Estimator,
    seed: u64,
) -> Result<Vec<PlannedJob>> {
    check_n_list(n_list)?;
    Ok(n_list
        .iter()
        .flat_map(|&n| {
            (0..n_disorder).map(move |draw| {
                let disorder_seed = derive_seed(derive_seed(seed, n as u64), draw as u64);
                PlannedJob {
                    n,
                    draw,
                    disorder_seed,
                    chain_seed: matches!(estimator, Estimator::Mcmc { .. })
                        .then_some(disorder_seed),
                }
            })
        })
        .collect())
}

struct DrawMoments {
    moment_2: f64,
    moment_4: Option<f64>,
    plugin_2: f64,
}

fn draw_moments(
    spec: &ModelSpec,
    q: &[f64],
    estimator: &Estimator,
    job: &PlannedJob,
) -> Result<DrawMoments> {
    let inst = Instance::sample(&spec.with_n(job.n), job.disorder_seed)?;
    match estimator {
        Estimator::Exact => {
            let mags = conditional_magnetizations(&inst, &enumerate_gibbs(&inst)?)?;
            let report = tap_residuals(&inst, &mags, q)?;
            Ok(DrawMoments {
                moment_2: report.moment_2,
                moment_4: Some(report.moment_4),
                plugin_2: report.moment_2,
            })
        }
        Estimator::Mcmc { chain } => {
            let cfg = ChainConfig {
                seed: job.chain_seed.unwrap_or(job.disorder_seed),
                ..chain.clone()
            };
            let est = mcmc::estimate(&inst, &cfg)?;
            let cross = cross_replica_moments(&inst, &est.replica_magnetizations, q)?;
            let plugin = tap_residuals(&inst, &est.magnetizations, q)?;
            Ok(DrawMoments {
                moment_2: cross.moment_2,
                moment_4: cross.moment_4,
                plugin_2: plugin.moment_2,
            })
        }
    }
}

/// Disorder-averaged residual moments for each `N` in `n_list` and the
/// fitted decay exponent of the second moment.
pub fn scaling_study(
    spec: &ModelSpec,
    q: &[f64],
    n_list: &[usize],
    n_disorder: usize,
    estimator: &Estimator,
    seed: u64,
) -> Result<ScalingStudy> {
    check_len(spec.species_count(), q.len())?;
    if n_disorder < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: n_disorder,
        });
    }
    if let Estimator::Mcmc { chain } = estimator {
        if chain.n_replicas < 2 {
            return Err(Error::InvalidArgument(
                "the MCMC estimator needs at least 2 replicas".into(),
            ));
        }
    }
    let plan = scaling_plan(n_list, n_disorder, estimator, seed)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for (k, &n) in n_list.iter().enumerate() {
        let jobs = &plan[k * n_disorder..(k + 1) * n_disorder];
        let draws = jobs
            .par_iter()
            .map(|job| draw_moments(spec, q, estimator, job))
            .collect::<Result<Vec<_>>>()?;
        let m2 = Estimate::from_samples(&draws.iter().map(|d| d.moment_2).collect::<Vec<_>>());
        let m4: Option<Vec<f64>> = draws.iter().map(|d| d.moment_4).collect();
        let m4 = m4.map(|v| Estimate::from_samples(&v));
        let plugin = Estimate::from_samples(&draws.iter().map(|d| d.plugin_2).collect::<Vec<_>>());
        rows.push(ScalingRow {
            n,
            n_disorder,
            moment_2: m2.mean,
            moment_2_se: m2.std_err,
            moment_4: m4.map(|e| e.mean),
            moment_4_se: m4.map(|e| e.std_err),
            plugin_moment_2: plugin.mean,
            plugin_moment_2_se: plugin.std_err,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.moment_2).collect();
    let fit = log_log_slope(&x, &y);
    Ok(ScalingStudy {
        rows,
        slope: fit.map(|f| f.0),
        slope_se: fit.map(|f| f.1),
        q: q.to_vec(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TapStatus {
    Converged,
    NonConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapIteration {
    pub magnetizations: Vec<f64>,
    pub status: TapStatus,
    pub iterations: usize,
    /// `max_i |m^(t+1) - m^(t)|` at each iteration.
    pub steps: Vec<f64>,
    /// Largest TAP residual of the returned iterate.
    pub max_residual: f64,
}

/// `m^(t+1) = tanh(cavity(m^(t)) + h - c m^(t-1))` from `m^(0) = m^(-1) = tanh(h)`.
/// Stops once both the step and the TAP residual of the new iterate are at most `tol`.
pub fn tap_iterate(inst: &Instance, q: &[f64], max_iter: usize, tol: f64) -> Result<TapIteration> {
    check_len(inst.spec.species_count(), q.len())?;
    let onsager = onsager_correction(&inst.spec, q);
    let h = inst.spec.h;
    let n = inst.n();
    let mut prev = vec![h.tanh(); n];
    let mut cur = prev.clone();
    let mut steps = Vec::new();
    for t in 1..=max_iter {
        let cavity = inst.cavity_fields(&cur);
        let next: Vec<f64> = (0..n)
            .map(|i| (cavity[i] + h - onsager[inst.layout.species_of[i]] * prev[i]).tanh())
            .collect();
        let step = next
            .iter()
            .zip(&cur)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        steps.push(step);
        prev = std::mem::replace(&mut cur, next);
        if step <= tol {
            let max_residual = residual_vector(inst, &cur, &onsager)
                .iter()
                .fold(0.0f64, |a, r| a.max(r.abs()));
            if max_residual <= tol {
                return Ok(TapIteration {
                    magnetizations: cur,
                    status: TapStatus::Converged,
                    iterations: t,
                    steps,
                    max_residual,
                });
            }
        }
        if !step.is_finite() {
            break;
        }
    }
    let max_residual = residual_vector(inst, &cur, &onsager)
        .iter()
        .fold(0.0f64, |a, r| a.max(r.abs()));
    Ok(TapIteration {
        magnetizations: cur,
        status: TapStatus::NonConverged,
        iterations: steps.len(),
        steps,
        max_residual,
    })
}

/// Both sides of the two cavity identities for one draw of `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityProbe {
    pub species: usize,
    /// `<sinh Y> / <cosh Y>` with `Y = (beta/sqrt N) sum_j eta_j sigma_j + h`.
    pub lhs_mag: f64,
    /// `tanh((beta/sqrt N) sum_j eta_j <sigma_j> + h)`.
    pub rhs_mag: f64,
    /// `lhs_mag - rhs_mag`, evaluated without cancellation.
    pub diff_mag: f64,
    /// `N^{-1/2} <X cosh Y> / <cosh Y>` with `X = sum_j eta_j sigma_j`.
    pub lhs_field: f64,
    /// `beta (Delta^2 Lambda (1 - q))_s lhs_mag + N^{-1/2} sum_j eta_j <sigma_j>`.
    pub rhs_field: f64,
    pub diff_field: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityReport {
    pub n: usize,
    pub species: usize,
    pub k: u32,
    pub n_eta: usize,
    /// Empirical `E diff^{2k}` over eta draws, with standard error.
    pub moment_mag: Estimate,
    pub moment_field: Estimate,
    pub probes: Vec<CavityProbe>,
}

fn log_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `eta_j ~ N(0, Delta^2_{s, t(j)})`.
pub fn sample_eta(inst: &Instance, species: usize, rng: &mut StreamRng) -> Vec<f64> {
    let sd: Vec<f64> = (0..inst.spec.species_count())
        .map(|t| inst.spec.delta2.get(species, t).sqrt())
        .collect();
    inst.layout
        .species_of
        .iter()
        .map(|&t| sd[t] * rng.standard_normal())
        .collect()
}

/// Evaluates both identities for a fixed `eta` against an exact table.
pub fn cavity_probe(
    inst: &Instance,
    table: &GibbsTable,
    mags: &[f64],
    q: &[f64],
    species: usize,
    eta: &[f64],
) -> Result<CavityProbe> {
    let n = inst.n();
    check_len(n, eta.len())?;
    check_len(n, mags.len())?;
    check_len(n, table.n)?;
    let spec = &inst.spec;
    let scale = inst.coupling_scale();
    let sqrt_n = (n as f64).sqrt();
    let coeff = spec.beta
        * (0..spec.species_count())
            .map(|t| spec.delta2.get(species, t) * spec.lambdas[t] * (1.0 - q[t]))
            .sum::<f64>();
    let x_bar: f64 = eta.iter().zip(mags).map(|(e, m)| e * m).sum();
    let reference = (scale * x_bar + spec.h).tanh();

    // X(sigma) from precomputed half tables over the low and high index bits
    let lo_bits = n / 2;
    let partial = |range: std::ops::Range<usize>| -> Vec<f64> {
        let width = range.len();
        (0..1usize << width)
            .map(|bits| {
                range
                    .clone()
                    .enumerate()
                    .map(|(b, j)| if bits >> b & 1 == 1 { eta[j] } else { -eta[j] })
                    .sum()
            })
            .collect()
    };
    let x_lo = partial(0..lo_bits);
    let x_hi = partial(lo_bits..n);
    let lo_mask = (1usize << lo_bits) - 1;
    let x_of = |idx: usize| x_lo[idx & lo_mask] + x_hi[idx >> lo_bits];

    let log_w: Vec<f64> = table
        .log_weights
        .iter()
        .enumerate()
        .map(|(idx, lw)| lw + log_cosh(scale * x_of(idx) + spec.h))
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut total, mut d27, mut d28, mut x_sum) = (0.0, 0.0, 0.0, 0.0);
    for (idx, lw) in log_w.iter().enumerate() {
        let w = (lw - max).exp();
        let x = x_of(idx);
        let t = (scale * x + spec.h).tanh();
        total += w;
        x_sum += w * x;
        d27 += w * (t - reference);
        d28 += w * ((x - x_bar) / sqrt_n - coeff * t);
    }
    let diff_mag = d27 / total;
    let lhs_field = x_sum / total / sqrt_n;
    let lhs_mag = reference + diff_mag;
    Ok(CavityProbe {
        species,
        lhs_mag,
        rhs_mag: reference,
        diff_mag,
        lhs_field,
        rhs_field: coeff * lhs_mag + x_bar / sqrt_n,
        diff_field: d28 / total,
    })
}

fn check_cavity_args(n: usize, species: usize, m: usize, k: u32, n_eta: usize) -> Result<()> {
    if n > MAX_CAVITY_N {
        return Err(Error::TooLargeForExact {
            n,
            max: MAX_CAVITY_N,
        });
    }
    if species >= m {
        return Err(Error::InvalidArgument(format!(
            "species {species} out of range for {m} species"
        )));
    }
    if !(1..=2).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "moment order k = {k} not in {{1, 2}}"
        )));
    }
    if n_eta == 0 {
        return Err(Error::InsufficientSamples {
            required: 1,
            got: 0,
        });
    }
    Ok(())
}

/// `n_eta` independent cavity fields on one disorder sample. Draw `e`
/// uses stream `eta_stream(e)` of `seed`.
pub fn cavity_check(
    inst: &Instance,
    q: &[f64],
    species: usize,
    k: u32,
    n_eta: usize,
    seed: u64,
) -> Result<CavityReport> {
    check_cavity_args(inst.n(), species, inst.spec.species_count(), k, n_eta)?;
    check_len(inst.spec.species_count(), q.len())?;
    let table = enumerate_gibbs(inst)?;
    let mags = magnetizations(&table);
    let probes = (0..n_eta)
        .into_par_iter()
        .map(|e| {
            let mut rng = StreamRng::new(seed, eta_stream(e));
            let eta = sample_eta(inst, species, &mut rng);
            cavity_probe(inst, &table, &mags, q, species, &eta)
        })
        .collect::<Result<Vec<_>>>()?;
    let power = 2 * k as i32;
    let m27: Vec<f64> = probes.iter().map(|p| p.diff_mag.powi(power)).collect();
    let m28: Vec<f64> = probes.iter().map(|p| p.diff_field.powi(power)).collect();
    Ok(CavityReport {
        n: inst.n(),
        species,
        k,
        n_eta,
        moment_mag: Estimate::from_samples(&m27),
        moment_field: Estimate::from_samples(&m28),
        probes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityStudyRow {
    pub n: usize,
    pub n_disorder: usize,
    pub n_eta: usize,
    /// Mean over disorder draws of the per-draw moment; the error is across draws.
    pub moment_mag: Estimate,
    pub moment_field: Estimate,
}

/// Disorder average of [`cavity_check`]; draw `d` uses disorder seed and
/// eta seed `derive_seed(seed, d)`.
pub fn cavity_study(
    spec: &ModelSpec,
    q: &[f64],
    species: usize,
    k: u32,
    n_eta: usize,
    n_disorder: usize,
    seed: u64,
) -> Result<CavityStudyRow> {
    check_cavity_args(spec.n, species, spec.species_count(), k, n_eta)?;
    if n_disorder == 0 {
        return Err(Error::InsufficientSamples {
            required: 1,
            got: 0,
        });
    }
    let reports = (0..n_disorder)
        .into_par_iter()
        .map(|d| {
            let draw_seed = derive_seed(seed, d as u64);
            let inst = Instance::sample(spec, draw_seed)?;
            cavity_check(&inst, q, species, k, n_eta, draw_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let m27: Vec<f64> = reports.iter().map(|r| r.moment_mag.mean).collect();
    let m28: Vec<f64> = reports.iter().map(|r| r.moment_field.mean).collect();
    Ok(CavityStudyRow {
        n: spec.n,
        n_disorder,
        n_eta,
        moment_mag: Estimate::from_samples(&m27),
        moment_field: Estimate::from_samples(&m28),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order_params::{solve_q, SolveOptions};
    use crate::presets::Preset;
    use crate::quadrature::QuadratureRule;

    fn q_of(spec: &ModelSpec) -> Vec<f64> {
        solve_q(spec, &QuadratureRule::default(), &SolveOptions::default())
            .unwrap()
            .q
    }

    #[test]
    fn onsager_examples() {
        let spec = Preset::Convex.spec(0.3, 0.2, 10);
        assert_eq!(onsager_correction(&spec, &[1.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(
            onsager_correction(&spec.with_beta(0.0), &[0.2, 0.7]),
            vec![0.0, 0.0]
        );

        let spec = Preset::Bipartite.spec(0.4, 0.3, 10);
        let q = q_of(&spec);
        let c = onsager_correction(&spec, &q);
        assert!((c[0] - 0.08 * (1.0 - q[0])).abs() < 1e-15);
        assert!((c[1] - 0.08 * (1.0 - q[1])).abs() < 1e-15);
    }

    #[test]
    fn onsager_equivariant_under_relabelling() {
        let spec = ModelSpec::new(
            vec![0.2, 0.3, 0.5],
            crate::linalg::SymMatrix::from_rows(&[
                vec![1.0, 0.3, 2.0],
                vec![0.3, 0.0, 0.7],
                vec![2.0, 0.7, 0.4],
            ])
            .unwrap(),
            0.3,
            0.1,
            10,
        )
        .unwrap();
        let q = [0.1, 0.4, 0.25];
        let base = onsager_correction(&spec, &q);
        let perm = [2, 0, 1];
        let permuted = onsager_correction(&spec.permute_species(&perm), &[q[2], q[0], q[1]]);
        for (s, &p) in perm.iter().enumerate() {
            assert!((permuted[s] - base[p]).abs() < 1e-15);
        }
    }

    #[test]
    fn single_spin_residual() {
        let spec = Preset::Sk.spec(0.3, 0.4, 1);
        let inst = Instance::sample(&spec, 1).unwrap();
        let q = q_of(&spec);
        let c = onsager_correction(&spec, &q)[0];
        let m = 0.4f64.tanh();
        let report = tap_residuals(&inst, &[m], &q).unwrap();
        assert_eq!(report.residuals[0], m - (0.4 - c * m).tanh());
    }

    #[test]
    fn residuals_vanish_at_infinite_temperature() {
        for n in [1, 5, 50] {
            let spec = Preset::Bipartite.spec(0.0, 0.3, n.max(2));
            let inst = Instance::sample(&spec, 3).unwrap();
            let mags = vec![0.3f64.tanh(); inst.n()];
            let r = tap_residuals(&inst, &mags, &q_of(&spec)).unwrap();
            assert!(r.residuals.iter().all(|&x| x == 0.0));
        }
        let inst = Instance::sample(&Preset::Sk.spec(0.2, 0.3, 4), 3).unwrap();
        assert!(matches!(
            tap_residuals(&inst, &[0.0; 3], &[0.1]),
            Err(Error::DimensionError {
                expected: 4,
                got: 3
            })
        ));
    }

    #[test]
    fn residual_moments_with_exact_magnetizations() {
        let spec = Preset::Bipartite.spec(0.25, 0.3, 10);
        let q = q_of(&spec);
        let inst = Instance::sample(&spec, 5).unwrap();
        let mags = magnetizations(&enumerate_gibbs(&inst).unwrap());
        let r = tap_residuals(&inst, &mags, &q).unwrap();
        assert!(r.jensen_holds());
        assert!(r.residuals.iter().all(|x| x.abs() <= 2.0));
        assert!((r.beta_over_beta0 - 0.5).abs() < 1e-12);
        // identical replicas reduce the cross moments to the plug-in ones
        let cross = cross_replica_moments(&inst, &vec![mags.clone(); 4], &q).unwrap();
        assert!((cross.moment_2 - r.moment_2).abs() < 1e-15);
        assert!((cross.moment_4.unwrap() - r.moment_4).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_transfer() {
        let spec = Preset::Convex.spec(0.2, 0.3, 12);
        let inst = Instance::sample(&spec, 2).unwrap();
        let onsager = onsager_correction(&spec, &[0.1, 0.1]);
        let m: Vec<f64> = (0..12).map(|i| 0.1 * (i as f64 - 6.0) / 6.0).collect();
        let m2: Vec<f64> = m.iter().map(|x| x + 0.01).collect();
        let base = residual_vector(&inst, &m, &onsager);
        let shifted = residual_vector(&inst, &m2, &onsager);
        let f1 = inst.cavity_fields(&m);
        let f2 = inst.cavity_fields(&m2);
        for i in 0..12 {
            let s = inst.layout.species_of[i];
            let a1 = f1[i] + spec.h - onsager[s] * m[i];
            let a2 = f2[i] + spec.h - onsager[s] * m2[i];
            let t_diff = (base[i] - m[i]) - (shifted[i] - m2[i]);
            assert!(t_diff.abs() <= (a1 - a2).abs() + 1e-15);
        }
    }

    #[test]
    fn tap_iterate_at_infinite_temperature() {
        let spec = Preset::Convex.spec(0.0, 0.3, 20);
        let inst = Instance::sample(&spec, 1).unwrap();
        let out = tap_iterate(&inst, &q_of(&spec), 100, 1e-12).unwrap();
        assert_eq!(out.status, TapStatus::Converged);
        assert_eq!(out.iterations, 1);
        assert!(out.magnetizations.iter().all(|&m| m == 0.3f64.tanh()));
    }

    #[test]
    fn tap_iterate_solution_satisfies_tap() {
        for preset in [Preset::Bipartite, Preset::Convex] {
            let b0 = critical_temperatures(&preset.spec(0.1, 0.0, 2))
                .unwrap()
                .beta_0;
            let spec = preset.spec(0.5 * b0, 0.3, 200);
            let q = q_of(&spec);
            let inst = Instance::sample(&spec, 4).unwrap();
            let tol = 1e-10;
            let out = tap_iterate(&inst, &q, 10_000, tol).unwrap();
            assert_eq!(out.status, TapStatus::Converged);
            let r = tap_residuals(&inst, &out.magnetizations, &q).unwrap();
            assert!(r.max_abs_residual <= tol + 1e-12);
        }
    }

    #[test]
    fn tap_iterate_reports_non_convergence() {
        let spec = Preset::Sk.spec(0.3, 0.3, 50);
        let inst = Instance::sample(&spec, 4).unwrap();
        let out = tap_iterate(&inst, &q_of(&spec), 2, 1e-14).unwrap();
        assert_eq!(out.status, TapStatus::NonConverged);
        assert_eq!(out.steps.len(), 2);
    }

    #[test]
    fn cavity_identity_exact_cases() {
        let spec = Preset::Bipartite.spec(0.0, 0.3, 8);
        let q = q_of(&spec);
        let inst = Instance::sample(&spec, 1).unwrap();
        let report = cavity_check(&inst, &q, 0, 1, 20, 3).unwrap();
        assert!(report.probes.iter().all(|p| p.diff_mag == 0.0));
        assert_eq!(report.moment_mag.mean, 0.0);

        let spec = Preset::Convex.spec(0.3, 0.3, 8);
        let q = q_of(&spec);
        let inst = Instance::sample(&spec, 1).unwrap();
        let table = enumerate_gibbs(&inst).unwrap();
        let mags = magnetizations(&table);
        let p = cavity_probe(&inst, &table, &mags, &q, 1, &[0.0; 8]).unwrap();
        assert_eq!(p.diff_mag, 0.0);
        assert_eq!(p.lhs_mag, 0.3f64.tanh());
    }

    /// Brute-force evaluation of both sides straight from the definitions.
    #[test]
    fn cavity_probe_matches_definitions() {
        let spec = Preset::Convex.spec(0.3, 0.3, 7);
        let q = q_of(&spec);
        let inst = Instance::sample(&spec, 9).unwrap();
        let table = enumerate_gibbs(&inst).unwrap();
        let mags = magnetizations(&table);
        let mut rng = StreamRng::new(5, eta_stream(0));
        let eta = sample_eta(&inst, 0, &mut rng);
        let p = cavity_probe(&inst, &table, &mags, &q, 0, &eta).unwrap();

        let probs = table.probabilities();
        let scale = inst.coupling_scale();
        let (mut av_eps, mut av, mut av_x) = (0.0, 0.0, 0.0);
        for (idx, pr) in probs.iter().enumerate() {
            let x: f64 = (0..7)
                .map(|j| if idx >> j & 1 == 1 { eta[j] } else { -eta[j] })
                .sum();
            // AV over eps = +-1 of eps E_s and of E_s
            let e_plus = (scale * x + spec.h).exp();
            let e_minus = (-scale * x - spec.h).exp();
            av_eps += pr * 0.5 * (e_plus - e_minus);
            av += pr * 0.5 * (e_plus + e_minus);
            av_x += pr * x * 0.5 * (e_plus + e_minus);
        }
        let x_bar: f64 = eta.iter().zip(&mags).map(|(e, m)| e * m).sum();
        let lhs27 = av_eps / av;
        let rhs27 = (scale * x_bar + spec.h).tanh();
        assert!((p.lhs_mag - lhs27).abs() < 1e-13);
        assert!((p.diff_mag - (lhs27 - rhs27)).abs() < 1e-13);
        let coeff = spec.beta
            * (0..2)
                .map(|t| spec.delta2.get(0, t) * spec.lambdas[t] * (1.0 - q[t]))
                .sum::<f64>();
        let diff28 = av_x / av / 7f64.sqrt() - coeff * lhs27 - x_bar / 7f64.sqrt();
        assert!((p.diff_field - diff28).abs() < 1e-13);
    }

    #[test]
    fn eta_variance_profile() {
        let spec = Preset::Bipartite.spec(0.3, 0.3, 10);
        let inst = Instance::sample(&spec, 1).unwrap();
        let mut rng = StreamRng::new(1, eta_stream(0));
        let eta = sample_eta(&inst, 0, &mut rng);
        // species 0 has no self-interaction in the bipartite profile
        assert!(eta[..5].iter().all(|&e| e == 0.0));
        assert!(eta[5..].iter().all(|&e| e != 0.0));
    }

    #[test]
    fn cavity_argument_checks() {
        let spec = Preset::Sk.spec(0.3, 0.3, 21);
        let inst = Instance::sample(&spec, 1).unwrap();
        assert!(matches!(
            cavity_check(&inst, &[0.1], 0, 1, 5, 1),
            Err(Error::TooLargeForExact { n: 21, max: 20 })
        ));
        let inst = Instance::sample(&spec.with_n(6), 1).unwrap();
        assert!(cavity_check(&inst, &[0.1], 0, 3, 5, 1).is_err());
        assert!(cavity_check(&inst, &[0.1], 1, 1, 5, 1).is_err());
    }

    #[test]
    fn scaling_study_contract() {
        let spec = Preset::Bipartite.spec(0.0, 0.3, 8);
        let q = q_of(&spec);
        assert!(scaling_study(&spec, &q, &[4, 6, 8], 3, &Estimator::Exact, 1).is_err());
        assert!(scaling_study(&spec, &q, &[4, 8, 6, 10], 3, &Estimator::Exact, 1).is_err());
        let study = scaling_study(&spec, &q, &[4, 6, 8, 10], 3, &Estimator::Exact, 1).unwrap();
        assert!(study.rows.iter().all(|r| r.moment_2 == 0.0));
        assert_eq!(study.slope, None);

        let plan = scaling_plan(&[4, 6, 8, 10], 3, &Estimator::Exact, 1).unwrap();
        assert_eq!(plan.len(), 12);
        assert!(plan.iter().all(|j| j.chain_seed.is_none()));
    }

    #[test]
    fn exact_scaling_study_is_reproducible() {
        let b0 = critical_temperatures(&Preset::Bipartite.spec(0.1, 0.0, 2))
            .unwrap()
            .beta_0;
        let spec = Preset::Bipartite.spec(0.5 * b0, 0.3, 8);
        let q = q_of(&spec);
        let a = scaling_study(&spec, &q, &[4, 6, 8, 10], 4, &Estimator::Exact, 7).unwrap();
        let b = scaling_study(&spec, &q, &[4, 6, 8, 10], 4, &Estimator::Exact, 7).unwrap();
        assert_eq!(a, b);
        assert!(a
            .rows
            .iter()
            .all(|r| r.moment_2 > 0.0 && r.moment_4.unwrap() >= 0.0));
    }
}
