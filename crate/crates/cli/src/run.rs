//! Task dispatch and report assembly.

use std::fs;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use rfield_core::dependence::{dependence_profile, NormOrder, OrliczSpec, ProfileMethod};
use rfield_core::estimation::estimation_report;
use rfield_core::fclt::{
    covering_number_bound, discrete_smoothed_gap, entropy_integral, fd_covariance_check, vc_index,
};
use rfield_core::rng::CounterRng;
use rfield_core::verify::{
    autocov_clt_experiment, clt_experiment, moment_inequality_check, truncation_gap_check, variance_limit_check,
};
use rfield_core::{Domain, FieldModel, ModelKind, NoiseField, NoiseSpec};

use crate::config::{ExperimentConfig, Task, Weights};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "RFIELD_WORKERS";

/// Result of one task before serialization.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub csv: Option<String>,
    /// `None` for tasks without a pass criterion.
    pub pass: Option<bool>,
}

struct Inputs {
    model: Option<FieldModel>,
    domain: Option<Domain>,
}

fn resolve(config: &ExperimentConfig) -> Result<Inputs> {
    config.validate()?;
    let domain = config.domain.as_ref().map(|d| d.load()).transpose()?;
    let dim = match (&domain, config.dim, &config.task) {
        (Some(g), Some(d), _) if g.dim() != d => bail!("--dim {d} contradicts the {}-dimensional domain", g.dim()),
        (Some(g), _, _) => Some(g.dim()),
        (None, Some(d), _) => Some(d),
        (None, None, Task::Fclt { pairs, gap_sets, .. }) => {
            pairs.first().map(|p| p.0.dim()).or_else(|| gap_sets.first().map(|a| a.dim()))
        }
        _ => None,
    };
    let model = match &config.model {
        Some(spec) if !matches!(config.task, Task::VcIndex { .. }) => {
            let dim = dim.context("cannot infer the lattice dimension; pass --dim")?;
            Some(spec.build(dim, NoiseSpec::new(config.noise), config.mean)?)
        }
        _ => None,
    };
    Ok(Inputs { model, domain })
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn replicate_csv(values: &[f64]) -> Result<String> {
    #[derive(Serialize)]
    struct Row {
        replicate: usize,
        value: f64,
    }
    to_csv(values.iter().enumerate().map(|(replicate, &value)| Row { replicate, value }))
}

fn weights(w: Weights, n: usize) -> Vec<f64> {
    match w {
        Weights::Ones => vec![1.0; n],
        Weights::Uniform(seed) => {
            let mut rng = CounterRng::new(seed);
            (0..n).map(|_| 2.0 * rng.next_unit() - 1.0).collect()
        }
    }
}

/// Runs the configured task on the current rayon pool.
pub fn execute(config: &ExperimentConfig) -> Result<Outcome> {
    let Inputs { model, domain } = resolve(config)?;
    let seed = config.seed;
    let m = || model.as_ref().expect("validated");
    let g = || domain.as_ref().expect("validated");
    Ok(match &config.task {
        Task::Simulate { replicate } => {
            let f = NoiseField::new(m().noise, seed, *replicate);
            let values = m().eval_domain(&f, g())?;
            let sum: f64 = values.iter().sum();
            #[derive(Serialize)]
            struct Row {
                site: String,
                value: f64,
            }
            let csv = to_csv(g().iter().zip(&values).map(|(p, &value)| Row {
                site: p.to_string(),
                value,
            }))?;
            Outcome {
                report: json!({
                    "domain_size": values.len(),
                    "replicate": replicate,
                    "sum": sum,
                    "mean": sum / values.len() as f64,
                    "min": values.iter().cloned().fold(f64::INFINITY, f64::min),
                    "max": values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                }),
                csv: Some(csv),
                pass: None,
            }
        }
        Task::Dependence { p, orlicz_q, replicates } => {
            let order = match orlicz_q {
                Some(q) => NormOrder::Orlicz(OrliczSpec::for_q(*q)?),
                None => NormOrder::P(*p),
            };
            let method = match (replicates, &m().kind) {
                (None, ModelKind::Linear(_)) if orlicz_q.is_none() => ProfileMethod::Analytic,
                (r, _) => ProfileMethod::MonteCarlo {
                    replicates: r.unwrap_or(rfield_core::dependence::DEFAULT_REPLICATES),
                    seed,
                },
            };
            let profile = dependence_profile(m(), order, method)?;
            #[derive(Serialize)]
            struct Row {
                site: String,
                delta: f64,
                se: Option<f64>,
                method: &'static str,
            }
            let rows: Vec<Row> = profile
                .entries
                .iter()
                .map(|(i, e)| Row {
                    site: i.to_string(),
                    delta: e.estimate,
                    se: e.se.is_finite().then_some(e.se),
                    method: match e.method {
                        rfield_core::dependence::Method::Analytic => "analytic",
                        rfield_core::dependence::Method::MonteCarlo => "monte-carlo",
                    },
                })
                .collect();
            let csv = to_csv(&rows)?;
            Outcome {
                report: json!({
                    "model": profile.model,
                    "order": profile.order,
                    "entries": rows,
                    "delta_sum": profile.delta_sum,
                    "delta_sum_se": profile.delta_sum_se.is_finite().then_some(profile.delta_sum_se),
                }),
                csv: Some(csv),
                pass: None,
            }
        }
        Task::Estimate { lags, replicates, level } => {
            let rep = estimation_report(m(), g(), lags, *replicates, seed, *level)?;
            #[derive(Serialize)]
            struct Row {
                lag: String,
                lag_set_size: usize,
                gamma_hat: f64,
                gamma_exact: Option<f64>,
                se: f64,
                ci_lower: f64,
                ci_upper: f64,
            }
            let csv = to_csv(rep.lags.iter().map(|l| Row {
                lag: l.lag.to_string(),
                lag_set_size: l.lag_set_size,
                gamma_hat: l.mean,
                gamma_exact: l.exact,
                se: l.se,
                ci_lower: l.interval.lower,
                ci_upper: l.interval.upper,
            }))?;
            Outcome {
                report: serde_json::to_value(&rep)?,
                csv: Some(csv),
                pass: None,
            }
        }
        Task::VerifyClt { replicates, mode, tolerance } => {
            let rep = clt_experiment(m(), g(), *replicates, seed, *mode, *tolerance)?;
            Outcome {
                csv: Some(replicate_csv(&rep.statistics)?),
                pass: Some(rep.pass),
                report: serde_json::to_value(&rep)?,
            }
        }
        Task::VerifyMoment { p, replicates, weights: w } => {
            let w = weights(*w, g().len());
            let rep = moment_inequality_check(m(), g(), &w, *p, *replicates, seed)?;
            Outcome {
                pass: Some(!rep.violation),
                report: serde_json::to_value(&rep)?,
                csv: None,
            }
        }
        Task::VerifyVariance { sizes } => {
            let rep = variance_limit_check(m(), sizes)?;
            Outcome {
                pass: Some(rep.decreasing),
                csv: Some(to_csv(&rep.rows)?),
                report: serde_json::to_value(&rep)?,
            }
        }
        Task::VerifyTruncation { ms, replicates } => {
            let rep = truncation_gap_check(m(), g(), ms, *replicates, seed)?;
            Outcome {
                pass: Some(rep.pass),
                csv: Some(to_csv(&rep.rows)?),
                report: serde_json::to_value(&rep)?,
            }
        }
        Task::VerifyAutocov { lag, replicates, tolerance } => {
            let rep = autocov_clt_experiment(m(), g(), lag, *replicates, seed, *tolerance)?;
            let mean_ok = rep.z_score.is_none_or(|z| z <= 3.0);
            let clt_ok = rep.clt.as_ref().is_some_and(|c| c.pass);
            Outcome {
                pass: Some(!rep.degenerate && mean_ok && clt_ok),
                csv: rep.clt.as_ref().map(|c| replicate_csv(&c.statistics)).transpose()?,
                report: serde_json::to_value(&rep)?,
            }
        }
        Task::Fclt { n, pairs, gap_sets, replicates } => {
            let cov = if pairs.is_empty() {
                None
            } else {
                Some(fd_covariance_check(m(), *n, pairs, *replicates, seed)?)
            };
            let gaps = gap_sets
                .iter()
                .enumerate()
                .map(|(j, a)| discrete_smoothed_gap(m(), a, *n, *replicates, rfield_core::rng::derive_seed(seed, j as u64)))
                .collect::<rfield_core::Result<Vec<_>>>()?;
            let pass = cov.as_ref().is_none_or(|c| c.pass) && gaps.iter().all(|r| r.pass && r.count_within_boundary);
            #[derive(Serialize)]
            struct Row {
                a: String,
                b: String,
                target: f64,
                finite_n: f64,
                covariance: f64,
                se: f64,
                z: f64,
            }
            let csv = cov
                .as_ref()
                .map(|c| {
                    to_csv(c.rows.iter().map(|r| Row {
                        a: r.a.to_string(),
                        b: r.b.to_string(),
                        target: r.target,
                        finite_n: r.finite_n,
                        covariance: r.covariance,
                        se: r.se,
                        z: r.z,
                    }))
                })
                .transpose()?;
            Outcome {
                report: json!({ "covariance": cov, "gaps": gaps }),
                csv,
                pass: Some(pass),
            }
        }
        Task::VcIndex { kind, d, search } => {
            let res = vc_index(*kind, *d, *search)?;
            let declared = kind.declared_index(*d);
            let envelope = [0.5, 0.1, 0.01]
                .iter()
                .map(|&eps| Ok(json!({ "epsilon": eps, "bound": covering_number_bound(res.index.max(2), eps)? })))
                .collect::<Result<Vec<_>>>()?;
            Outcome {
                pass: Some(res.index == declared),
                report: json!({
                    "result": res,
                    "declared_index": declared,
                    "covering_bound": envelope,
                    "entropy_integral": entropy_integral(res.index.max(2), 2.0)?,
                }),
                csv: None,
            }
        }
    })
}

/// Runs `f` on a dedicated pool with `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("cannot build worker pool")?;
    Ok(pool.install(f))
}

/// Worker count from the environment, if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("{WORKERS_ENV}={v:?} is not a count"))?;
            if n == 0 {
                bail!("{WORKERS_ENV} must be positive");
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

/// The JSON document written for a run. `timestamp` is the only field that
/// varies between identical runs.
pub fn render(config: &ExperimentConfig, outcome: &Outcome, timestamp: Option<u64>) -> Result<String> {
    let doc = json!({
        "provenance": {
            "tool": "rfield",
            "cli_version": env!("CARGO_PKG_VERSION"),
            "core_version": rfield_core::VERSION,
            "config_hash": config.hash()?,
            "seed": config.seed,
            "timestamp": timestamp,
        },
        "command": config.task.name(),
        "config": config,
        "pass": outcome.pass,
        "report": outcome.report,
    });
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

/// Exit code for a finished run: 0 on pass, 2 on a failed verification.
pub fn exit_code(outcome: &Outcome) -> i32 {
    if outcome.pass == Some(false) {
        2
    } else {
        0
    }
}

/// Executes `config`, writes its outputs, and returns the exit code.
pub fn run(config: &ExperimentConfig, workers: Option<usize>) -> Result<i32> {
    let outcome = match workers {
        Some(w) => with_workers(w, || execute(config))??,
        None => execute(config)?,
    };
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).ok();
    let text = render(config, &outcome, now)?;
    match &config.output.json {
        Some(p) => fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    if let (Some(p), Some(csv)) = (&config.output.csv, &outcome.csv) {
        fs::write(p, csv).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(exit_code(&outcome))
}
