//! Artifact emission (metrics CSV, run manifests, sweep and comparison
//! tables) plus the multi-run drivers that produce them.

use crate::data::Samples;
use crate::harness::config::{MethodSpec, RunConfig};
use crate::harness::train::{prepare_data, sharpness_probe, train, RunResult};
use crate::harness::HarnessError;
use crate::opt::ParamSet;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

pub const METRICS_CSV_HEADER: &str = "epoch,train_loss,test_acc,grad_norm,kept_fraction,sharpness";

fn push_opt(line: &mut String, value: Option<f64>) {
    if let Some(v) = value {
        let _ = write!(line, "{v}");
    }
}

/// Per-epoch metrics as CSV. Absent metrics are empty fields.
pub fn metrics_csv_string(result: &RunResult) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for m in &result.metrics {
        let mut line = format!(
            "{},{},{},{},",
            m.epoch, m.train_loss, m.test_acc, m.grad_norm
        );
        push_opt(&mut line, m.kept_fraction);
        line.push(',');
        push_opt(&mut line, m.sharpness);
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn write_metrics_csv(path: &Path, result: &RunResult) -> Result<(), HarnessError> {
    std::fs::write(path, metrics_csv_string(result)).map_err(HarnessError::Io)
}

/// Run manifest: the flat `key = value` dialect (the same one config
/// files use) echoing the resolved config plus run facts. Field names are
/// stable; `run.wall_secs` is the only value that varies between
/// identical runs.
pub fn manifest_string(result: &RunResult, diverged_at: Option<(usize, usize)>) -> String {
    let mut out = String::from("# zsharp run manifest\n");
    let mut push = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    push("manifest.version", "1".into());
    push("lib.version", env!("CARGO_PKG_VERSION").into());
    for (k, v) in result.config.to_kv() {
        push(&k, v);
    }
    push(
        "run.epochs_completed",
        result.summary.epochs_run.to_string(),
    );
    push("run.diverged", diverged_at.is_some().to_string());
    if let Some((epoch, step)) = diverged_at {
        push("run.diverged_at_epoch", epoch.to_string());
        push("run.diverged_at_step", step.to_string());
    }
    if let Some(v) = result.summary.final_train_loss {
        push("run.final_train_loss", v.to_string());
    }
    if let Some(v) = result.summary.final_test_acc {
        push("run.final_test_acc", v.to_string());
    }
    if let Some(v) = result.summary.final_sharpness {
        push("run.final_sharpness", v.to_string());
    }
    push("run.wall_secs", format!("{:.3}", result.wall_secs));
    out
}

pub fn write_manifest(
    path: &Path,
    result: &RunResult,
    diverged_at: Option<(usize, usize)>,
) -> Result<(), HarnessError> {
    std::fs::write(path, manifest_string(result, diverged_at)).map_err(HarnessError::Io)
}

/// Hex digest of the canonical parameter bytes (layer ids and exact
/// little-endian value bits). Two parameter sets hash equal iff they are
/// bitwise identical.
pub fn param_hash(params: &ParamSet) -> String {
    let mut hasher = Sha256::new();
    for (id, layer) in params.layer_ids().iter().zip(params.layers()) {
        hasher.update(id.as_bytes());
        hasher.update([0u8]);
        for v in layer.iter() {
            hasher.update(v.to_le_bytes());
        }
    }
    hex_prefix(&hasher.finalize())
}

/// Hash of the config fields shared by every run of a comparison
/// (everything except the method kind and the training seed).
pub fn shared_config_hash(cfg: &RunConfig) -> String {
    let mut hasher = Sha256::new();
    for (k, v) in cfg.to_kv() {
        if k == "train.seed" || k == "optimizer.kind" {
            continue;
        }
        hasher.update(k.as_bytes());
        hasher.update(*b"=");
        hasher.update(v.as_bytes());
        hasher.update(*b"\n");
    }
    hex_prefix(&hasher.finalize())
}

fn hex_prefix(digest: &[u8]) -> String {
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Runs `f` on a dedicated worker pool capped at `jobs` threads, or on
/// the global pool when `jobs` is `None`. Sweep and comparison results
/// are collected in declared order either way, so the cap changes only
/// the wall-clock time.
pub fn with_worker_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("worker pool")
            .install(f),
    }
}

/// Mean and population standard deviation of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(Aggregate {
        mean,
        std: var.sqrt(),
    })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub qp: f64,
    pub seeds: usize,
    pub failures: usize,
    pub test_acc: Option<Aggregate>,
    pub train_loss: Option<Aggregate>,
    /// First failure message, when any seed run failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn any_failures(&self) -> bool {
        self.rows.iter().any(|r| r.failures > 0)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "qp,seeds,mean_test_acc,std_test_acc,mean_train_loss,std_train_loss,failures\n",
        );
        for row in &self.rows {
            let mut line = format!("{},{},", row.qp, row.seeds);
            match row.test_acc {
                Some(a) => {
                    let _ = write!(line, "{},{}", a.mean, a.std);
                }
                None => line.push(','),
            }
            line.push(',');
            match row.train_loss {
                Some(a) => {
                    let _ = write!(line, "{},{}", a.mean, a.std);
                }
                None => line.push(','),
            }
            let _ = write!(line, ",{}", row.failures);
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// A filtered-run result paired with the identifiers that produced it.
pub type CellResult = (f64, u64, Result<RunResult, HarnessError>);

/// Cross product of `qp_values` and `seeds`, each trained independently,
/// aggregated per qp with population statistics over seeds. Runs execute
/// on the rayon pool; results are collected in declared order, so the
/// table is deterministic regardless of scheduling.
pub fn sweep_qp(
    base: &RunConfig,
    qp_values: &[f64],
    seeds: &[u64],
) -> Result<(SweepTable, Vec<CellResult>), HarnessError> {
    let MethodSpec::ZSharp {
        rho,
        delta,
        scope,
        sigma_eps,
        ..
    } = base.method
    else {
        return Err(HarnessError::Precondition {
            message: "sweep requires optimizer.kind = zsharp".into(),
        });
    };
    if qp_values.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Precondition {
            message: "sweep needs at least one qp and one seed".into(),
        });
    }
    if let Some(&bad) = qp_values.iter().find(|q| !(0.0..1.0).contains(*q)) {
        return Err(HarnessError::Precondition {
            message: format!("qp {bad} outside [0, 1)"),
        });
    }
    let cells: Vec<(f64, u64)> = qp_values
        .iter()
        .flat_map(|&qp| seeds.iter().map(move |&seed| (qp, seed)))
        .collect();
    let results: Vec<CellResult> = cells
        .into_par_iter()
        .map(|(qp, seed)| {
            let mut cfg = base.clone();
            cfg.method = MethodSpec::ZSharp {
                rho,
                delta,
                qp,
                scope,
                sigma_eps,
            };
            cfg.seed = seed;
            (qp, seed, train(&cfg))
        })
        .collect();

    let rows = qp_values
        .iter()
        .map(|&qp| {
            let mut accs = Vec::new();
            let mut losses = Vec::new();
            let mut failures = 0;
            let mut error = None;
            for (cell_qp, _, outcome) in &results {
                if cell_qp != &qp {
                    continue;
                }
                match outcome {
                    Ok(result) => {
                        accs.extend(result.summary.final_test_acc);
                        losses.extend(result.summary.final_train_loss);
                    }
                    Err(e) => {
                        failures += 1;
                        error.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            SweepRow {
                qp,
                seeds: seeds.len(),
                failures,
                test_acc: aggregate(&accs),
                train_loss: aggregate(&losses),
                error,
            }
        })
        .collect();
    Ok((SweepTable { rows }, results))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodName {
    Base,
    Sam,
    ZSharp,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Base => "base",
            MethodName::Sam => "sam",
            MethodName::ZSharp => "zsharp",
        }
    }

    pub fn parse(token: &str) -> Option<MethodName> {
        match token {
            "base" => Some(MethodName::Base),
            "sam" => Some(MethodName::Sam),
            "zsharp" => Some(MethodName::ZSharp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub method: MethodName,
    pub seeds: usize,
    pub failures: usize,
    pub test_acc: Option<Aggregate>,
    pub train_loss: Option<Aggregate>,
    /// Post-training probe at the final weights, taken with the shared
    /// ascent radius for every method (including the plain baseline).
    pub sharpness: Option<Aggregate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CompareTable {
    pub config_hash: String,
    pub rows: Vec<CompareRow>,
}

impl CompareTable {
    pub fn any_failures(&self) -> bool {
        self.rows.iter().any(|r| r.failures > 0)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "method,seeds,mean_test_acc,std_test_acc,mean_train_loss,std_train_loss,mean_sharpness,std_sharpness,failures,config_hash\n",
        );
        for row in &self.rows {
            let mut line = format!("{},{},", row.method.as_str(), row.seeds);
            for agg in [row.test_acc, row.train_loss, row.sharpness] {
                match agg {
                    Some(a) => {
                        let _ = write!(line, "{},{},", a.mean, a.std);
                    }
                    None => line.push_str(",,"),
                }
            }
            let _ = write!(line, "{},{}", row.failures, self.config_hash);
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

pub type CompareCell = (MethodName, u64, Result<(RunResult, f64), HarnessError>);

/// Same-seed paired runs for each method. For a given seed every method
/// starts from the identical initial parameters (initialization depends
/// only on the model shape and the training seed). The returned cells
/// carry each run plus its final-weight sharpness probe.
pub fn compare_methods(
    base: &RunConfig,
    methods: &[MethodName],
    seeds: &[u64],
) -> Result<(CompareTable, Vec<CompareCell>), HarnessError> {
    let MethodSpec::ZSharp {
        rho,
        delta,
        qp,
        scope,
        sigma_eps,
    } = base.method
    else {
        return Err(HarnessError::Precondition {
            message: "compare requires a zsharp-flavored base config carrying rho and qp".into(),
        });
    };
    if methods.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Precondition {
            message: "compare needs at least one method and one seed".into(),
        });
    }
    let cells: Vec<(MethodName, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results: Vec<CompareCell> = cells
        .into_par_iter()
        .map(|(method, seed)| {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.method = match method {
                MethodName::Base => MethodSpec::Base,
                MethodName::Sam => MethodSpec::Sam { rho, delta },
                MethodName::ZSharp => MethodSpec::ZSharp {
                    rho,
                    delta,
                    qp,
                    scope,
                    sigma_eps,
                },
            };
            let outcome = train(&cfg).and_then(|result| {
                let (train_ds, _) = prepare_data(&cfg.dataset)?;
                let mlp = crate::harness::train::build_model(
                    &cfg,
                    train_ds.feature_dim(),
                    train_ds.n_classes(),
                )?;
                let probe = sharpness_probe(&mlp, &result.final_params, &train_ds, rho, delta)?;
                Ok((result, probe))
            });
            (method, seed, outcome)
        })
        .collect();

    let rows = methods
        .iter()
        .map(|&method| {
            let mut accs = Vec::new();
            let mut losses = Vec::new();
            let mut probes = Vec::new();
            let mut failures = 0;
            let mut error = None;
            for (cell_method, _, outcome) in &results {
                if *cell_method != method {
                    continue;
                }
                match outcome {
                    Ok((result, probe)) => {
                        accs.extend(result.summary.final_test_acc);
                        losses.extend(result.summary.final_train_loss);
                        probes.push(*probe);
                    }
                    Err(e) => {
                        failures += 1;
                        error.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            CompareRow {
                method,
                seeds: seeds.len(),
                failures,
                test_acc: aggregate(&accs),
                train_loss: aggregate(&losses),
                sharpness: aggregate(&probes),
                error,
            }
        })
        .collect();
    Ok((
        CompareTable {
            config_hash: shared_config_hash(base),
            rows,
        },
        results,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{DataSource, DatasetSpec};

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::default_desk();
        cfg.dataset = DatasetSpec {
            source: DataSource::TwoMoons { n: 40, noise: 0.15 },
            seed: 5,
            label_flip: 0.0,
            test_fraction: 0.25,
        };
        cfg.hidden_dims = vec![6];
        cfg.epochs = 2;
        cfg.batch_size = 10;
        cfg
    }

    #[test]
    fn metrics_csv_has_empty_fields_for_absent_metrics() {
        let mut cfg = tiny_cfg();
        cfg.method = MethodSpec::Base;
        let result = train(&cfg).unwrap();
        let csv = metrics_csv_string(&result);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRICS_CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",,"), "{}", lines[1]);
    }

    #[test]
    fn manifest_echoes_config_keys() {
        let result = train(&tiny_cfg()).unwrap();
        let manifest = manifest_string(&result, None);
        assert!(manifest.contains("optimizer.kind = zsharp"));
        assert!(manifest.contains("filter.qp = 0.95"));
        assert!(manifest.contains("run.diverged = false"));
        assert!(manifest.contains("run.epochs_completed = 2"));
    }

    #[test]
    fn aggregate_over_three_values() {
        let agg = aggregate(&[1.0, 2.0, 3.0]).unwrap();
        assert!((agg.mean - 2.0).abs() < 1e-15);
        assert!((agg.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let single = aggregate(&[0.5]).unwrap();
        assert_eq!(single.std, 0.0);
        assert!(aggregate(&[]).is_none());
    }

    #[test]
    fn sweep_emits_one_row_per_qp_in_order() {
        let (table, cells) = sweep_qp(&tiny_cfg(), &[0.9, 0.5], &[1, 2]).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].qp, 0.9);
        assert_eq!(table.rows[1].qp, 0.5);
        assert!(!table.any_failures());
        assert_eq!(cells.len(), 4);
        let csv = table.to_csv_string();
        assert_eq!(csv.lines().count(), 3);
        // One seed -> zero std.
        let (single, _) = sweep_qp(&tiny_cfg(), &[0.9], &[1]).unwrap();
        assert_eq!(single.rows[0].test_acc.unwrap().std, 0.0);
    }

    #[test]
    fn sweep_requires_zsharp_base() {
        let mut cfg = tiny_cfg();
        cfg.method = MethodSpec::Base;
        assert!(sweep_qp(&cfg, &[0.9], &[1]).is_err());
    }

    #[test]
    fn compare_pairs_initializations_by_seed() {
        let (table, cells) = compare_methods(
            &tiny_cfg(),
            &[MethodName::Base, MethodName::Sam, MethodName::ZSharp],
            &[3, 4],
        )
        .unwrap();
        assert_eq!(table.rows.len(), 3);
        assert!(!table.config_hash.is_empty());
        // Base rows still carry a probe (shared rho), but never a
        // kept_fraction anywhere in their metric stream.
        let base_row = &table.rows[0];
        assert!(base_row.sharpness.is_some());
        for (method, seed, outcome) in &cells {
            let (result, _) = outcome.as_ref().unwrap();
            // Paired runs share the initial parameters: rebuild them.
            let (train_ds, _) = prepare_data(&result.config.dataset).unwrap();
            let mlp = crate::harness::train::build_model(
                &result.config,
                train_ds.feature_dim(),
                train_ds.n_classes(),
            )
            .unwrap();
            let init_hash = param_hash(&mlp.init_params());
            for (other_method, other_seed, other_outcome) in &cells {
                if other_seed == seed && other_method != method {
                    let (other_result, _) = other_outcome.as_ref().unwrap();
                    let (ds2, _) = prepare_data(&other_result.config.dataset).unwrap();
                    let mlp2 = crate::harness::train::build_model(
                        &other_result.config,
                        ds2.feature_dim(),
                        ds2.n_classes(),
                    )
                    .unwrap();
                    assert_eq!(init_hash, param_hash(&mlp2.init_params()));
                }
            }
        }
        let csv = table.to_csv_string();
        assert_eq!(csv.lines().count(), 4);
        for line in csv.lines().skip(1) {
            assert!(line.ends_with(&table.config_hash));
        }
    }

    #[test]
    fn param_hash_distinguishes_bits() {
        let cfg = tiny_cfg();
        let (train_ds, _) = prepare_data(&cfg.dataset).unwrap();
        let mlp =
            crate::harness::train::build_model(&cfg, train_ds.feature_dim(), train_ds.n_classes())
                .unwrap();
        let a = mlp.init_params();
        let mut b = a.clone();
        assert_eq!(param_hash(&a), param_hash(&b));
        b.layers_mut()[0].as_mut_slice()[0] = 42.0;
        assert_ne!(param_hash(&a), param_hash(&b));
    }
}
