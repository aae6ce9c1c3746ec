//! One function per subcommand, each producing tables and a JSON summary.

use anyhow::{bail, Context, Result};
use msk_core::mcmc::estimate;
use msk_core::oracle::{
    concentration_bound_check, conditional_magnetizations, enumerate_gibbs, overlap_expectation,
    MAX_EXACT_N, MAX_OVERLAP_N,
};
use msk_core::order_params::{critical_temperatures, q_sensitivity, solve_q, OrderParams};
use msk_core::tap::{
    cavity_study, cross_replica_moments, scaling_plan, scaling_study, tap_iterate, tap_residuals,
    Estimator,
};
use msk_core::{Instance, ModelSpec};
use serde_json::{json, Value};

use crate::config::{EstimatorKind, ExperimentConfig};
use crate::report::Table;
use crate::Command;

/// Tables plus free-form summary values.
pub struct Output {
    pub tables: Vec<Table>,
    pub summary: Value,
}

pub fn dispatch(cmd: Command, cfg: &ExperimentConfig, seed: u64, dry_run: bool) -> Result<Output> {
    let spec = cfg.model_spec()?;
    if dry_run && cmd != Command::ScalingStudy {
        bail!("--dry-run is only supported by scaling-study");
    }
    match cmd {
        Command::BetaC => beta_c(&spec),
        Command::SolveQ => solve(cfg, &spec),
        Command::Sensitivity => sensitivity(cfg, &spec),
        Command::Oracle => oracle(cfg, &spec, seed),
        Command::Mcmc => mcmc(cfg, &spec, seed),
        Command::TapCheck => tap_check(cfg, &spec, seed),
        Command::TapIterate => tap_iter(cfg, &spec, seed),
        Command::CavityCheck => cavity(cfg, &spec, seed),
        Command::Concentration => concentration(cfg, &spec, seed),
        Command::ScalingStudy => scaling(cfg, &spec, seed, dry_run),
    }
}

fn sized(cfg: &ExperimentConfig, spec: &ModelSpec, command: &str) -> Result<ModelSpec> {
    Ok(spec.with_n(cfg.require_n(command)?))
}

fn order_params(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<OrderParams> {
    solve_q(spec, &cfg.quadrature()?, &cfg.solve_options())
        .context("solving the order-parameter fixed point")
}

fn species_table(spec: &ModelSpec, name: &str, column: &str, values: &[f64]) -> Table {
    let mut t = Table::new(name, &["species", "lambda", column]);
    for (s, (&l, &v)) in spec.lambdas.iter().zip(values).enumerate() {
        t.push(vec![json!(s), json!(l), json!(v)]);
    }
    t
}

fn spin_table(inst: &Instance, name: &str, columns: &[(&str, &[f64])]) -> Table {
    let mut header = vec!["spin", "species"];
    header.extend(columns.iter().map(|c| c.0));
    let mut t = Table::new(name, &header);
    for i in 0..inst.n() {
        let mut row = vec![json!(i), json!(inst.layout.species_of[i])];
        row.extend(columns.iter().map(|c| json!(c.1[i])));
        t.push(row);
    }
    t
}

fn beta_c(spec: &ModelSpec) -> Result<Output> {
    let t = critical_temperatures(spec)?;
    let mut table = Table::new(
        "critical",
        &[
            "rho",
            "beta_c",
            "alpha",
            "beta_0",
            "beta",
            "beta_over_beta0",
        ],
    );
    table.push(vec![
        json!(t.rho),
        json!(t.beta_c),
        json!(t.alpha),
        json!(t.beta_0),
        json!(spec.beta),
        json!(spec.beta / t.beta_0),
    ]);
    Ok(Output {
        tables: vec![table],
        summary: json!({ "beta_c": t.beta_c, "alpha": t.alpha, "beta_0": t.beta_0 }),
    })
}

fn solve_summary(p: &OrderParams) -> Value {
    json!({
        "iterations": p.iterations,
        "residual": p.residual,
        "beta_c": p.beta_c,
        "beta_0": p.beta_0,
        "alpha": p.alpha,
        "outside_proven_regime": p.outside_proven_regime,
    })
}

fn solve(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<Output> {
    let p = order_params(cfg, spec)?;
    Ok(Output {
        tables: vec![species_table(spec, "q", "q", &p.q)],
        summary: solve_summary(&p),
    })
}

fn sensitivity(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<Output> {
    let p = order_params(cfg, spec)?;
    let dq = q_sensitivity(spec, &p, &cfg.quadrature()?)?;
    let mut table = species_table(spec, "sensitivity", "q", &p.q);
    table.columns.push("dq_dbeta".into());
    for (row, d) in table.rows.iter_mut().zip(&dq) {
        row.push(json!(d));
    }
    Ok(Output {
        tables: vec![table],
        summary: solve_summary(&p),
    })
}

fn oracle(cfg: &ExperimentConfig, spec: &ModelSpec, seed: u64) -> Result<Output> {
    let spec = sized(cfg, spec, "oracle")?;
    let inst = Instance::sample(&spec, seed)?;
    let table = enumerate_gibbs(&inst)?;
    let mags = conditional_magnetizations(&inst, &table)?;
    let mut tables = vec![spin_table(&inst, "magnetizations", &[("m", &mags)])];
    if spec.n <= MAX_OVERLAP_N {
        let mut t = Table::new("overlap", &["species", "mean_overlap", "mean_overlap_sq"]);
        for s in 0..spec.species_count() {
            let m1 = overlap_expectation(&table, &inst.layout, |r| r[s])?;
            let m2 = overlap_expectation(&table, &inst.layout, |r| r[s] * r[s])?;
            t.push(vec![json!(s), json!(m1), json!(m2)]);
        }
        tables.push(t);
    }
    Ok(Output {
        tables,
        summary: json!({ "n": spec.n, "log_z": table.log_z, "max_exact_n": MAX_EXACT_N }),
    })
}

fn mcmc(cfg: &ExperimentConfig, spec: &ModelSpec, seed: u64) -> Result<Output> {
    let spec = sized(cfg, spec, "mcmc")?;
    let inst = Instance::sample(&spec, seed)?;
    let est = estimate(&inst, &cfg.chain.chain_config(seed))?;
    let mut tables = vec![spin_table(
        &inst,
        "magnetizations",
        &[
            ("m", &est.magnetizations),
            ("std_err", &est.magnetization_se),
        ],
    )];
    if let Some(ov) = &est.overlap {
        let p = order_params(cfg, &spec)?;
        let mut t = Table::new("overlap", &["species", "q", "mean", "std_err", "variance"]);
        for s in 0..spec.species_count() {
            t.push(vec![
                json!(s),
                json!(p.q[s]),
                json!(ov.mean[s]),
                json!(ov.std_err[s]),
                json!(ov.variance[s]),
            ]);
        }
        tables.push(t);
    }
    Ok(Output {
        tables,
        summary: json!({
            "n": spec.n,
            "flip_rate": est.flip_rate,
            "burn_in": est.burn_in,
            "n_samples": est.n_samples,
            "n_batches": est.n_batches,
            "outside_proven_regime": est.outside_proven_regime,
        }),
    })
}

fn tap_check(cfg: &ExperimentConfig, spec: &ModelSpec, seed: u64) -> Result<Output> {
    let spec = sized(cfg, spec, "tap-check")?;
    let p = order_params(cfg, &spec)?;
    let inst = Instance::sample(&spec, seed)?;
    let (mags, cross) = match cfg.estimator {
        EstimatorKind::Exact => (
            conditional_magnetizations(&inst, &enumerate_gibbs(&inst)?)?,
            None,
        ),
        EstimatorKind::Mcmc => {
            let est = estimate(&inst, &cfg.chain.chain_config(seed))?;
            let cross = if est.replica_magnetizations.len() >= 2 {
                Some(cross_replica_moments(
                    &inst,
                    &est.replica_magnetizations,
                    &p.q,
                )?)
            } else {
                None
            };
            (est.magnetizations, cross)
        }
    };
    let rep = tap_residuals(&inst, &mags, &p.q)?;
    Ok(Output {
        tables: vec![
            spin_table(
                &inst,
                "residuals",
                &[("m", &mags), ("residual", &rep.residuals)],
            ),
            species_table(&spec, "onsager", "onsager", &rep.onsager),
        ],
        summary: json!({
            "n": spec.n,
            "moment_2": rep.moment_2,
            "moment_4": rep.moment_4,
            "max_abs_residual": rep.max_abs_residual,
            "jensen_holds": rep.jensen_holds(),
            "beta_over_beta0": rep.beta_over_beta0,
            "cross_replica": cross,
        }),
    })
}

fn tap_iter(cfg: &ExperimentConfig, spec: &ModelSpec, seed: u64) -> Result<Output> {
    let spec = sized(cfg, spec, "tap-iterate")?;
    let p = order_params(cfg, &spec)?;
    let inst = Instance::sample(&spec, seed)?;
    let it = tap_iterate(&inst, &p.q, cfg.tap_max_iter, cfg.tap_tol)?;
    let mut steps = Table::new("steps", &["iteration", "step"]);
    for (t, s) in it.steps.iter().enumerate() {
        steps.push(vec![json!(t + 1), json!(s)]);
    }
    Ok(Output {
        tables: vec![
            spin_table(&inst, "magnetizations", &[("m", &it.magnetizations)]),
            steps,
        ],
        summary: json!({
            "n": spec.n,
            "status": it.status,
            "iterations": it.iterations,
            "max_residual": it.max_residual,
        }),
    })
}

fn cavity(cfg: &ExperimentConfig, spec: &ModelSpec, seed: u64) -> Result<Output> {
    let sizes = match &cfg.n_list {
        Some(list) => list.clone(),
        None => vec![cfg.require_n("cavity-check")?],
    };
    let mut table = Table::new(
        "cavity",
        &[
            "n",
            "n_disorder",
            "n_eta",
            "moment_mag",
            "moment_27_se",
            "moment_field",
            "moment_28_se",
        ],
    );
    for n in sizes {
        let spec_n = spec.with_n(n);
        let p = order_params(cfg, &spec_n)?;
        let row = cavity_study(
            &spec_n,
            &p.q,
            cfg.species,
            cfg.k,
            cfg.n_eta,
            cfg.n_disorder,
            seed,
        )?;
        table.push(vec![
            json!(row.n),
            json!(row.n_disorder),
            json!(row.n_eta),
            json!(row.moment_mag.mean),
            json!(row.moment_mag.std_err),
            json!(row.moment_field.mean),
            json!(row.moment_field.std_err),
        ]);
    }
    Ok(Output {
        tables: vec![table],
        summary: json!({ "species": cfg.species, "k": cfg.k }),
    })
}

fn concentration(cfg: &ExperimentConfig, spec: &ModelSpec, seed: u64) -> Result<Output> {
    let spec = sized(cfg, spec, "concentration")?;
    let p = order_params(cfg, &spec)?;
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => {
            let alpha = f64::from(p.alpha);
            (p.beta_c * p.beta_c - 4.0 * alpha * spec.beta * spec.beta) / 4.0
        }
    };
    let rep = concentration_bound_check(&spec, &p, gamma, cfg.n_disorder, seed)?;
    let mut per_draw = Table::new("per_draw", &["draw", "expectation"]);
    for (d, v) in rep.per_draw.iter().enumerate() {
        per_draw.push(vec![json!(d), json!(v)]);
    }
    let mut summary = Table::new(
        "concentration",
        &[
            "n",
            "beta",
            "gamma",
            "gamma_max",
            "n_disorder",
            "mean",
            "std_err",
            "bound",
            "pass",
        ],
    );
    summary.push(vec![
        json!(rep.n),
        json!(rep.beta),
        json!(rep.gamma),
        json!(rep.gamma_max),
        json!(rep.n_disorder),
        json!(rep.mean),
        json!(rep.std_err),
        json!(rep.bound),
        json!(rep.pass),
    ]);
    Ok(Output {
        tables: vec![summary, per_draw],
        summary: json!({ "pass": rep.pass, "mean": rep.mean, "bound": rep.bound }),
    })
}

fn scaling(cfg: &ExperimentConfig, spec: &ModelSpec, seed: u64, dry_run: bool) -> Result<Output> {
    let n_list = cfg
        .n_list
        .as_deref()
        .context("n_list is required for scaling-study")?;
    let estimator = cfg.estimator(seed);
    if let Estimator::Exact = estimator {
        if let Some(&n) = n_list.iter().find(|&&n| n > MAX_EXACT_N) {
            bail!("N = {n} exceeds the exact-enumeration cap of {MAX_EXACT_N}; use the mcmc estimator");
        }
    }
    if dry_run {
        let plan = scaling_plan(n_list, cfg.n_disorder, &estimator, seed)?;
        let mut t = Table::new("plan", &["n", "draw", "disorder_seed", "chain_seed"]);
        for job in &plan {
            t.push(vec![
                json!(job.n),
                json!(job.draw),
                json!(job.disorder_seed),
                json!(job.chain_seed),
            ]);
        }
        return Ok(Output {
            tables: vec![t],
            summary: json!({ "dry_run": true, "jobs": plan.len() }),
        });
    }
    let p = order_params(cfg, spec)?;
    let study = scaling_study(spec, &p.q, n_list, cfg.n_disorder, &estimator, seed)?;
    let mut t = Table::new(
        "scaling",
        &[
            "n",
            "n_disorder",
            "moment_2",
            "moment_2_se",
            "moment_4",
            "moment_4_se",
            "plugin_moment_2",
            "plugin_moment_2_se",
        ],
    );
    for r in &study.rows {
        t.push(vec![
            json!(r.n),
            json!(r.n_disorder),
            json!(r.moment_2),
            json!(r.moment_2_se),
            json!(r.moment_4),
            json!(r.moment_4_se),
            json!(r.plugin_moment_2),
            json!(r.plugin_moment_2_se),
        ]);
    }
    Ok(Output {
        tables: vec![t, species_table(spec, "q", "q", &study.q)],
        summary: json!({ "slope": study.slope, "slope_se": study.slope_se }),
    })
}
