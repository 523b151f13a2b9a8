//! Subcommand implementations. Every command is deterministic given its
//! arguments and writes only under its `--out` target.

use crate::overrides::{resolve_config, ConfigOverrides};
use crate::{CliFailure, EXIT_BOUND, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO, EXIT_PARTIAL};
use std::path::{Path, PathBuf};
use zsharp::data::{gen_blobs, gen_spirals, gen_two_moons, DataError};
use zsharp::harness::{
    compare_methods, sweep_qp, train, verify_convergence_bound, verify_diminishing_steps,
    with_worker_pool, write_manifest, write_metrics_csv, AscentVariant, DecaySchedule,
    HarnessError, MethodName, RunResult,
};
use zsharp::math::FlatVec;
use zsharp::model::QuadraticProblem;
use zsharp::zfilter::FilterConfig;

pub fn failure(code: u8, message: impl Into<String>) -> CliFailure {
    CliFailure {
        code,
        message: message.into(),
    }
}

fn from_harness(err: HarnessError) -> CliFailure {
    let code = match &err {
        HarnessError::Config(_) | HarnessError::Precondition { .. } => EXIT_CONFIG,
        HarnessError::Data(_) => EXIT_CONFIG,
        HarnessError::Diverged { .. } => EXIT_DIVERGENCE,
        _ => EXIT_IO,
    };
    failure(code, err.to_string())
}

/// `--out` falls back to the `ZSHARP_OUT` environment variable.
pub fn resolve_out_dir(out: Option<PathBuf>) -> Result<PathBuf, CliFailure> {
    out.or_else(|| std::env::var_os("ZSHARP_OUT").map(PathBuf::from))
        .ok_or_else(|| {
            failure(
                EXIT_CONFIG,
                "missing --out directory (or ZSHARP_OUT environment variable)",
            )
        })
}

fn ensure_dir(dir: &Path) -> Result<(), CliFailure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| failure(EXIT_IO, format!("cannot create {}: {e}", dir.display())))
}

fn write_run_artifacts(
    dir: &Path,
    result: &RunResult,
    diverged_at: Option<(usize, usize)>,
) -> Result<(), CliFailure> {
    ensure_dir(dir)?;
    write_metrics_csv(&dir.join("metrics.csv"), result).map_err(from_harness)?;
    write_manifest(&dir.join("manifest"), result, diverged_at).map_err(from_harness)?;
    Ok(())
}

pub fn cmd_train(
    config: Option<PathBuf>,
    overrides: &ConfigOverrides,
    out: Option<PathBuf>,
) -> Result<(), CliFailure> {
    let cfg = resolve_config(config.as_ref(), overrides)?;
    let out = resolve_out_dir(out)?;
    match train(&cfg) {
        Ok(result) => {
            write_run_artifacts(&out, &result, None)?;
            println!(
                "run complete: {} epochs, final train loss {}, final test acc {}",
                result.summary.epochs_run,
                result
                    .summary
                    .final_train_loss
                    .map_or("-".into(), |v| v.to_string()),
                result
                    .summary
                    .final_test_acc
                    .map_or("-".into(), |v| v.to_string()),
            );
            println!(
                "wrote {} and {}",
                out.join("metrics.csv").display(),
                out.join("manifest").display()
            );
            Ok(())
        }
        Err(HarnessError::Diverged {
            epoch,
            step,
            partial,
        }) => {
            write_run_artifacts(&out, &partial, Some((epoch, step)))?;
            Err(failure(
                EXIT_DIVERGENCE,
                format!(
                    "numerical divergence at epoch {epoch} step {step}; partial metrics written"
                ),
            ))
        }
        Err(other) => Err(from_harness(other)),
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>, CliFailure> {
    let items: Result<Vec<T>, _> = raw
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse())
        .collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(failure(
            EXIT_CONFIG,
            format!("expected a non-empty comma-separated {what} list, got {raw:?}"),
        )),
    }
}

pub fn cmd_sweep(
    config: Option<PathBuf>,
    overrides: &ConfigOverrides,
    out: Option<PathBuf>,
    qp: &str,
    seeds: &str,
    jobs: Option<usize>,
) -> Result<(), CliFailure> {
    let qp_values: Vec<f64> = parse_list(qp, "qp")?;
    let seed_values: Vec<u64> = parse_list(seeds, "seed")?;
    let base = resolve_config(config.as_ref(), overrides)?;
    let out = resolve_out_dir(out)?;
    ensure_dir(&out)?;
    let (table, cells) = with_worker_pool(jobs, || sweep_qp(&base, &qp_values, &seed_values))
        .map_err(from_harness)?;
    std::fs::write(out.join("sweep.csv"), table.to_csv_string())
        .map_err(|e| failure(EXIT_IO, format!("cannot write sweep.csv: {e}")))?;
    for (qp, seed, outcome) in &cells {
        let dir = out.join("runs").join(format!("qp-{qp}-seed-{seed}"));
        match outcome {
            Ok(result) => write_run_artifacts(&dir, result, None)?,
            Err(HarnessError::Diverged {
                epoch,
                step,
                partial,
            }) => {
                write_run_artifacts(&dir, partial, Some((*epoch, *step)))?;
            }
            Err(_) => {}
        }
    }
    print!("{}", table.to_csv_string());
    println!("wrote {}", out.join("sweep.csv").display());
    if table.any_failures() {
        let detail = table
            .rows
            .iter()
            .find_map(|r| r.error.clone())
            .unwrap_or_else(|| "see per-run artifacts".into());
        return Err(failure(
            EXIT_PARTIAL,
            format!("some sweep cells failed: {detail}"),
        ));
    }
    Ok(())
}

pub fn cmd_compare(
    config: Option<PathBuf>,
    overrides: &ConfigOverrides,
    out: Option<PathBuf>,
    methods: &str,
    seeds: &str,
    jobs: Option<usize>,
) -> Result<(), CliFailure> {
    let methods: Vec<MethodName> = parse_list::<String>(methods, "method")?
        .iter()
        .map(|token| {
            MethodName::parse(token).ok_or_else(|| {
                failure(
                    EXIT_CONFIG,
                    format!("unknown method {token:?}: expected base, sam or zsharp"),
                )
            })
        })
        .collect::<Result<_, _>>()?;
    let seed_values: Vec<u64> = parse_list(seeds, "seed")?;
    let base = resolve_config(config.as_ref(), overrides)?;
    let out = resolve_out_dir(out)?;
    ensure_dir(&out)?;
    let (table, cells) = with_worker_pool(jobs, || compare_methods(&base, &methods, &seed_values))
        .map_err(from_harness)?;
    std::fs::write(out.join("compare.csv"), table.to_csv_string())
        .map_err(|e| failure(EXIT_IO, format!("cannot write compare.csv: {e}")))?;
    for (method, seed, outcome) in &cells {
        let dir = out
            .join("runs")
            .join(format!("{}-seed-{seed}", method.as_str()));
        match outcome {
            Ok((result, _)) => write_run_artifacts(&dir, result, None)?,
            Err(HarnessError::Diverged {
                epoch,
                step,
                partial,
            }) => {
                write_run_artifacts(&dir, partial, Some((*epoch, *step)))?;
            }
            Err(_) => {}
        }
    }
    print!("{}", table.to_csv_string());
    println!("wrote {}", out.join("compare.csv").display());
    if table.any_failures() {
        let detail = table
            .rows
            .iter()
            .find_map(|r| r.error.clone())
            .unwrap_or_else(|| "see per-run artifacts".into());
        return Err(failure(
            EXIT_PARTIAL,
            format!("some comparison cells failed: {detail}"),
        ));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_verify(
    beta: f64,
    eta: Option<f64>,
    r: Option<f64>,
    qp: Option<f64>,
    steps: usize,
    checkpoints: &[usize],
    threshold: f64,
    w0: &str,
) -> Result<(), CliFailure> {
    if !beta.is_finite() || beta <= 1.0 {
        return Err(failure(
            EXIT_CONFIG,
            format!("--beta {beta} must be a finite number > 1"),
        ));
    }
    let prob = QuadraticProblem::diagonal(vec![1.0, beta])
        .map_err(|e| failure(EXIT_CONFIG, e.to_string()))?;
    let etas = eta.map_or_else(|| vec![1.0 / (4.0 * beta), 1.0 / (8.0 * beta)], |v| vec![v]);
    let rs = r.map_or_else(|| vec![1.0 / (2.0 * beta), 1.0 / (4.0 * beta)], |v| vec![v]);
    let qps = qp.map_or_else(|| vec![0.0, 0.5, 0.95], |v| vec![v]);
    let bound_w0 = FlatVec::new(vec![1.0, 1.0]).expect("finite");

    let mut all_good = true;
    let mut first_violation = None;
    for &eta in &etas {
        for &r in &rs {
            for &qp in &qps {
                let filter =
                    FilterConfig::new(qp).map_err(|e| failure(EXIT_CONFIG, e.to_string()))?;
                let report = verify_convergence_bound(
                    &prob,
                    &bound_w0,
                    &filter,
                    eta,
                    r,
                    steps,
                    AscentVariant::Unnormalized,
                )
                .map_err(from_harness)?;
                println!(
                    "bound beta={beta} eta={eta} r={r} qp={qp} T={steps} lhs={} rhs={} satisfied={}",
                    report.lhs, report.rhs, report.satisfied
                );
                if !report.satisfied && first_violation.is_none() {
                    first_violation = Some(format!(
                        "averaged bound violated: lhs {} > rhs {} (beta={beta} eta={eta} r={r} qp={qp})",
                        report.lhs, report.rhs
                    ));
                }
                all_good &= report.satisfied;
            }
        }
    }

    let diminishing_w0: Vec<f64> = parse_list(w0, "w0 coordinate")?;
    if diminishing_w0.len() != 2 {
        return Err(failure(
            EXIT_CONFIG,
            format!("--w0 needs exactly 2 coordinates, got {w0:?}"),
        ));
    }
    let diminishing_w0 =
        FlatVec::new(diminishing_w0).map_err(|e| failure(EXIT_CONFIG, format!("--w0: {e}")))?;
    let filter =
        FilterConfig::new(qp.unwrap_or(0.95)).map_err(|e| failure(EXIT_CONFIG, e.to_string()))?;
    let report = verify_diminishing_steps(
        &prob,
        &diminishing_w0,
        &filter,
        &DecaySchedule::InverseTime {
            scale: 1.0 / (4.0 * beta),
        },
        &DecaySchedule::InverseTime {
            scale: 1.0 / (2.0 * beta),
        },
        checkpoints,
        threshold,
    )
    .map_err(from_harness)?;
    for (t, min_grad_sq) in &report.checkpoints {
        println!("diminishing T={t} min_grad_sq={min_grad_sq}");
    }
    println!(
        "diminishing threshold={threshold} min_nonincreasing={} converged={}",
        report.min_nonincreasing, report.converged
    );
    if !report.converged && first_violation.is_none() {
        first_violation = Some(format!(
            "diminishing-step minimum {} did not fall below {threshold}",
            report.checkpoints.last().map(|c| c.1).unwrap_or(f64::NAN)
        ));
    }
    all_good &= report.converged && report.min_nonincreasing;

    if all_good {
        Ok(())
    } else {
        Err(failure(
            EXIT_BOUND,
            first_violation.unwrap_or_else(|| "bound violated".into()),
        ))
    }
}

pub fn cmd_gen_data(
    generator: &str,
    n: usize,
    noise: f64,
    seed: u64,
    centers: usize,
    out: Option<PathBuf>,
) -> Result<(), CliFailure> {
    let out = out.ok_or_else(|| failure(EXIT_CONFIG, "gen-data requires --out FILE"))?;
    let dataset = match generator {
        "two-moons" => gen_two_moons(n, noise, seed),
        "blobs" => gen_blobs(n, centers, noise, seed),
        "spirals" => gen_spirals(n, noise, seed),
        other => {
            return Err(failure(
                EXIT_CONFIG,
                format!("unknown generator {other:?}: expected two-moons, blobs or spirals"),
            ))
        }
    };
    let dataset = dataset.map_err(|e| match e {
        DataError::InvalidParam { .. } => failure(EXIT_CONFIG, e.to_string()),
        other => failure(EXIT_IO, other.to_string()),
    })?;
    std::fs::write(&out, dataset.to_csv_string())
        .map_err(|e| failure(EXIT_IO, format!("cannot write {}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}
