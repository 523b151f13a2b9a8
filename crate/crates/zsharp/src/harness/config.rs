//! Run configuration and its flat `key = value` representation.
//!
//! Every field of [`RunConfig`] has a dot-notation key (`optimizer.kind`,
//! `ascent.rho`, `filter.qp`, ...). The same keys appear in config files,
//! as CLI flag names, and in run manifests, so the three stay isomorphic.
//! Unknown keys are hard errors.

use crate::opt::{AdamWConfig, AscentConfig, AscentKind, LrSchedule, OptError};
use crate::zfilter::{FilterConfig, PercentileScope, DEFAULT_SIGMA_EPS};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key {key:?}")]
    UnknownKey { key: String },
    #[error("duplicate config key {key:?}")]
    DuplicateKey { key: String },
    #[error("invalid value for {key}: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("missing required key {key:?} ({reason})")]
    MissingKey { key: String, reason: String },
    #[error("key {key:?} does not apply: {reason}")]
    NotApplicable { key: String, reason: String },
    #[error("malformed config line {line}: {reason}")]
    BadLine { line: usize, reason: String },
}

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    TwoMoons {
        n: usize,
        noise: f64,
    },
    Blobs {
        n: usize,
        centers: usize,
        noise: f64,
    },
    Spirals {
        n: usize,
        noise: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub source: DataSource,
    pub seed: u64,
    /// Fraction of train labels flipped after the split.
    pub label_flip: f64,
    pub test_fraction: f64,
}

/// Optimizer family. Presence of ascent and filter settings is tied to
/// the kind: a plain base run has neither, SAM has an ascent radius, and
/// the filtered variant adds the percentile settings.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    Base,
    Sam {
        rho: f64,
        delta: f64,
    },
    ZSharp {
        rho: f64,
        delta: f64,
        qp: f64,
        scope: PercentileScope,
        sigma_eps: f64,
    },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Base => "base",
            MethodSpec::Sam { .. } => "sam",
            MethodSpec::ZSharp { .. } => "zsharp",
        }
    }

    /// The ascent configuration, or `None` for a plain base run.
    pub fn ascent(&self) -> Result<Option<AscentConfig>, OptError> {
        match *self {
            MethodSpec::Base => Ok(None),
            MethodSpec::Sam { rho, delta } => {
                Ok(Some(AscentConfig::new(rho, delta, AscentKind::Sam)?))
            }
            MethodSpec::ZSharp {
                rho,
                delta,
                qp,
                scope,
                sigma_eps,
            } => {
                let mut filter = FilterConfig::new(qp).map_err(OptError::Filter)?;
                filter.scope = scope;
                filter.sigma_eps = sigma_eps;
                Ok(Some(AscentConfig::new(
                    rho,
                    delta,
                    AscentKind::ZSharp(filter),
                )?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseOptKind {
    AdamW,
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseSpec {
    pub kind: BaseOptKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl BaseSpec {
    pub fn adamw_config(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Complete description of one training run. A `RunConfig` determines the
/// run bit-for-bit: dataset, initialization, shuffling, and updates are
/// all pure functions of these fields.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub hidden_dims: Vec<usize>,
    pub method: MethodSpec,
    pub base: BaseSpec,
    pub schedule: LrSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub drop_last: bool,
    pub seed: u64,
}

impl RunConfig {
    /// Desk-scale defaults mirroring the documented key defaults.
    pub fn default_desk() -> Self {
        RunConfig {
            dataset: DatasetSpec {
                source: DataSource::TwoMoons { n: 400, noise: 0.1 },
                seed: 7,
                label_flip: 0.0,
                test_fraction: 0.2,
            },
            hidden_dims: vec![32, 32],
            method: MethodSpec::ZSharp {
                rho: 0.05,
                delta: 1e-8,
                qp: 0.95,
                scope: PercentileScope::Global,
                sigma_eps: DEFAULT_SIGMA_EPS,
            },
            base: BaseSpec {
                kind: BaseOptKind::AdamW,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                weight_decay: 5e-5,
            },
            schedule: LrSchedule::StepDecay {
                base_lr: 0.001,
                factor: 0.75,
                every_n_epochs: 10,
            },
            epochs: 50,
            batch_size: 64,
            drop_last: false,
            seed: 1,
        }
    }

    /// Canonical `(key, value)` echo of every field, sorted by key.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| kv.push((k.to_string(), v));
        match &self.dataset.source {
            DataSource::TwoMoons { n, noise } => {
                push("dataset.kind", "two-moons".into());
                push("dataset.n", n.to_string());
                push("dataset.noise", noise.to_string());
            }
            DataSource::Blobs { n, centers, noise } => {
                push("dataset.kind", "blobs".into());
                push("dataset.n", n.to_string());
                push("dataset.centers", centers.to_string());
                push("dataset.noise", noise.to_string());
            }
            DataSource::Spirals { n, noise } => {
                push("dataset.kind", "spirals".into());
                push("dataset.n", n.to_string());
                push("dataset.noise", noise.to_string());
            }
            DataSource::Idx { images, labels } => {
                push("dataset.kind", "idx".into());
                push("dataset.images", images.display().to_string());
                push("dataset.labels", labels.display().to_string());
            }
        }
        push("dataset.seed", self.dataset.seed.to_string());
        push("dataset.label_flip", self.dataset.label_flip.to_string());
        push(
            "dataset.test_fraction",
            self.dataset.test_fraction.to_string(),
        );
        push(
            "model.hidden",
            self.hidden_dims
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        push("optimizer.kind", self.method.name().into());
        match &self.method {
            MethodSpec::Base => {}
            MethodSpec::Sam { rho, delta } => {
                push("ascent.rho", rho.to_string());
                push("ascent.delta", delta.to_string());
            }
            MethodSpec::ZSharp {
                rho,
                delta,
                qp,
                scope,
                sigma_eps,
            } => {
                push("ascent.rho", rho.to_string());
                push("ascent.delta", delta.to_string());
                push("filter.qp", qp.to_string());
                push(
                    "filter.scope",
                    match scope {
                        PercentileScope::Global => "global".into(),
                        PercentileScope::PerLayer => "per-layer".into(),
                    },
                );
                push("filter.sigma_eps", sigma_eps.to_string());
            }
        }
        push(
            "optimizer.base",
            match self.base.kind {
                BaseOptKind::AdamW => "adamw".into(),
                BaseOptKind::Sgd => "sgd".into(),
            },
        );
        push("optimizer.lr", self.schedule.base_lr().to_string());
        push("optimizer.beta1", self.base.beta1.to_string());
        push("optimizer.beta2", self.base.beta2.to_string());
        push("optimizer.eps", self.base.eps.to_string());
        push("optimizer.weight_decay", self.base.weight_decay.to_string());
        match self.schedule {
            LrSchedule::Constant(_) => push("schedule.kind", "constant".into()),
            LrSchedule::StepDecay {
                factor,
                every_n_epochs,
                ..
            } => {
                push("schedule.kind", "step".into());
                push("schedule.factor", factor.to_string());
                push("schedule.every", every_n_epochs.to_string());
            }
        }
        push("train.epochs", self.epochs.to_string());
        push("train.batch_size", self.batch_size.to_string());
        push("train.drop_last", self.drop_last.to_string());
        push("train.seed", self.seed.to_string());
        kv.sort();
        kv
    }
}

/// Parses the flat config-file dialect: one `key = value` per line,
/// `#` comments, blank lines ignored, duplicate keys rejected.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::BadLine {
                line: idx + 1,
                reason: "expected key = value".into(),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::BadLine {
                line: idx + 1,
                reason: "empty key".into(),
            });
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(ConfigError::DuplicateKey { key });
        }
    }
    Ok(map)
}

struct KvReader {
    map: BTreeMap<String, String>,
}

impl KvReader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(
        &mut self,
        key: &str,
        default: T,
        expected: &str,
    ) -> Result<T, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| ConfigError::InvalidValue {
                key: key.to_string(),
                reason: format!("expected {expected}, got {raw:?}"),
            }),
        }
    }

    fn parse_f64_in(
        &mut self,
        key: &str,
        default: f64,
        lo: f64,
        hi: f64,
        lo_open: bool,
        hi_open: bool,
    ) -> Result<f64, ConfigError> {
        let range = format!(
            "{}{}, {}{}",
            if lo_open { "(" } else { "[" },
            lo,
            hi,
            if hi_open { ")" } else { "]" }
        );
        let v: f64 = self.parse(key, default, &format!("a number in {range}"))?;
        let ok = v.is_finite()
            && (if lo_open { v > lo } else { v >= lo })
            && (if hi_open { v < hi } else { v <= hi });
        if !ok {
            return Err(ConfigError::InvalidValue {
                key: key.to_string(),
                reason: format!("value {v} outside {range}"),
            });
        }
        Ok(v)
    }

    fn reject_if_present(&mut self, keys: &[&str], reason: &str) -> Result<(), ConfigError> {
        for key in keys {
            if self.map.contains_key(*key) {
                return Err(ConfigError::NotApplicable {
                    key: (*key).to_string(),
                    reason: reason.to_string(),
                });
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(key) = self.map.into_keys().next() {
            return Err(ConfigError::UnknownKey { key });
        }
        Ok(())
    }
}

/// Builds a [`RunConfig`] from explicit `(key, value)` entries, filling
/// unset keys with defaults and rejecting unknown or inapplicable keys.
pub fn resolve_run_config(map: &BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
    let mut r = KvReader { map: map.clone() };

    let kind = r.take("dataset.kind").unwrap_or_else(|| "two-moons".into());
    let source = match kind.as_str() {
        "two-moons" => {
            r.reject_if_present(
                &["dataset.centers", "dataset.images", "dataset.labels"],
                "only used by other dataset kinds",
            )?;
            DataSource::TwoMoons {
                n: r.parse("dataset.n", 400, "a positive integer")?,
                noise: r.parse_f64_in("dataset.noise", 0.1, 0.0, f64::INFINITY, false, true)?,
            }
        }
        "blobs" => {
            let centers: usize = r.parse("dataset.centers", 3, "an integer >= 2")?;
            if centers < 2 {
                return Err(ConfigError::InvalidValue {
                    key: "dataset.centers".into(),
                    reason: format!("value {centers} must be >= 2"),
                });
            }
            r.reject_if_present(&["dataset.images", "dataset.labels"], "only used by idx")?;
            DataSource::Blobs {
                n: r.parse("dataset.n", 400, "a positive integer")?,
                centers,
                noise: r.parse_f64_in("dataset.noise", 0.1, 0.0, f64::INFINITY, false, true)?,
            }
        }
        "spirals" => {
            r.reject_if_present(
                &["dataset.centers", "dataset.images", "dataset.labels"],
                "only used by other dataset kinds",
            )?;
            DataSource::Spirals {
                n: r.parse("dataset.n", 400, "a positive integer")?,
                noise: r.parse_f64_in("dataset.noise", 0.1, 0.0, f64::INFINITY, false, true)?,
            }
        }
        "idx" => {
            r.reject_if_present(
                &["dataset.n", "dataset.noise", "dataset.centers"],
                "only used by synthetic generators",
            )?;
            let images = r
                .take("dataset.images")
                .ok_or_else(|| ConfigError::MissingKey {
                    key: "dataset.images".into(),
                    reason: "required when dataset.kind = idx".into(),
                })?;
            let labels = r
                .take("dataset.labels")
                .ok_or_else(|| ConfigError::MissingKey {
                    key: "dataset.labels".into(),
                    reason: "required when dataset.kind = idx".into(),
                })?;
            DataSource::Idx {
                images: images.into(),
                labels: labels.into(),
            }
        }
        other => {
            return Err(ConfigError::InvalidValue {
                key: "dataset.kind".into(),
                reason: format!("expected two-moons, blobs, spirals or idx, got {other:?}"),
            })
        }
    };
    let dataset = DatasetSpec {
        source,
        seed: r.parse("dataset.seed", 7, "an unsigned integer")?,
        label_flip: r.parse_f64_in("dataset.label_flip", 0.0, 0.0, 1.0, false, true)?,
        test_fraction: r.parse_f64_in("dataset.test_fraction", 0.2, 0.0, 1.0, true, true)?,
    };

    let hidden_raw = r.take("model.hidden").unwrap_or_else(|| "32,32".into());
    let hidden_dims: Vec<usize> = if hidden_raw.trim().is_empty() {
        Vec::new()
    } else {
        hidden_raw
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&d| d >= 1)
                    .ok_or_else(|| ConfigError::InvalidValue {
                        key: "model.hidden".into(),
                        reason: format!(
                            "expected comma-separated positive integers, got {hidden_raw:?}"
                        ),
                    })
            })
            .collect::<Result<_, _>>()?
    };

    let method_kind = r.take("optimizer.kind").unwrap_or_else(|| "zsharp".into());
    let method = match method_kind.as_str() {
        "base" => {
            r.reject_if_present(
                &[
                    "ascent.rho",
                    "ascent.delta",
                    "filter.qp",
                    "filter.scope",
                    "filter.sigma_eps",
                ],
                "optimizer.kind = base performs no ascent step",
            )?;
            MethodSpec::Base
        }
        "sam" => {
            r.reject_if_present(
                &["filter.qp", "filter.scope", "filter.sigma_eps"],
                "optimizer.kind = sam does not filter gradients",
            )?;
            MethodSpec::Sam {
                rho: r.parse_f64_in("ascent.rho", 0.05, 0.0, f64::INFINITY, true, true)?,
                delta: r.parse_f64_in("ascent.delta", 1e-8, 0.0, f64::INFINITY, true, true)?,
            }
        }
        "zsharp" => {
            let scope_raw = r.take("filter.scope").unwrap_or_else(|| "global".into());
            let scope = match scope_raw.as_str() {
                "global" => PercentileScope::Global,
                "per-layer" => PercentileScope::PerLayer,
                other => {
                    return Err(ConfigError::InvalidValue {
                        key: "filter.scope".into(),
                        reason: format!("expected global or per-layer, got {other:?}"),
                    })
                }
            };
            MethodSpec::ZSharp {
                rho: r.parse_f64_in("ascent.rho", 0.05, 0.0, f64::INFINITY, true, true)?,
                delta: r.parse_f64_in("ascent.delta", 1e-8, 0.0, f64::INFINITY, true, true)?,
                qp: r.parse_f64_in("filter.qp", 0.95, 0.0, 1.0, false, true)?,
                scope,
                sigma_eps: r.parse_f64_in(
                    "filter.sigma_eps",
                    DEFAULT_SIGMA_EPS,
                    0.0,
                    f64::INFINITY,
                    true,
                    true,
                )?,
            }
        }
        other => {
            return Err(ConfigError::InvalidValue {
                key: "optimizer.kind".into(),
                reason: format!("expected base, sam or zsharp, got {other:?}"),
            })
        }
    };

    let base_kind = r.take("optimizer.base").unwrap_or_else(|| "adamw".into());
    let base_kind = match base_kind.as_str() {
        "adamw" => BaseOptKind::AdamW,
        "sgd" => BaseOptKind::Sgd,
        other => {
            return Err(ConfigError::InvalidValue {
                key: "optimizer.base".into(),
                reason: format!("expected adamw or sgd, got {other:?}"),
            })
        }
    };
    let base = BaseSpec {
        kind: base_kind,
        beta1: r.parse_f64_in("optimizer.beta1", 0.9, 0.0, 1.0, true, true)?,
        beta2: r.parse_f64_in("optimizer.beta2", 0.999, 0.0, 1.0, true, true)?,
        eps: r.parse_f64_in("optimizer.eps", 1e-8, 0.0, f64::INFINITY, true, true)?,
        weight_decay: r.parse_f64_in(
            "optimizer.weight_decay",
            5e-5,
            0.0,
            f64::INFINITY,
            false,
            true,
        )?,
    };

    let lr = r.parse_f64_in("optimizer.lr", 0.001, 0.0, f64::INFINITY, true, true)?;
    let schedule_kind = r.take("schedule.kind").unwrap_or_else(|| "step".into());
    let schedule = match schedule_kind.as_str() {
        "constant" => {
            r.reject_if_present(
                &["schedule.factor", "schedule.every"],
                "schedule.kind = constant has no decay",
            )?;
            LrSchedule::Constant(lr)
        }
        "step" => {
            let factor = r.parse_f64_in("schedule.factor", 0.75, 0.0, 1.0, true, false)?;
            let every: usize = r.parse("schedule.every", 10, "a positive integer")?;
            if every == 0 {
                return Err(ConfigError::InvalidValue {
                    key: "schedule.every".into(),
                    reason: "value 0 must be >= 1".into(),
                });
            }
            LrSchedule::StepDecay {
                base_lr: lr,
                factor,
                every_n_epochs: every,
            }
        }
        other => {
            return Err(ConfigError::InvalidValue {
                key: "schedule.kind".into(),
                reason: format!("expected constant or step, got {other:?}"),
            })
        }
    };

    let epochs: usize = r.parse("train.epochs", 50, "a non-negative integer")?;
    let batch_size: usize = r.parse("train.batch_size", 64, "a positive integer")?;
    if batch_size == 0 {
        return Err(ConfigError::InvalidValue {
            key: "train.batch_size".into(),
            reason: "value 0 must be >= 1".into(),
        });
    }
    let drop_last: bool = r.parse("train.drop_last", false, "true or false")?;
    let seed: u64 = r.parse("train.seed", 1, "an unsigned integer")?;

    r.finish()?;

    Ok(RunConfig {
        dataset,
        hidden_dims,
        method,
        base,
        schedule,
        epochs,
        batch_size,
        drop_last,
        seed,
    })
}

/// `(key, default, description)` for every config key, in display order.
/// Drives CLI help and the README key table.
pub const CONFIG_KEY_HELP: &[(&str, &str, &str)] = &[
    (
        "dataset.kind",
        "two-moons",
        "dataset source: two-moons, blobs, spirals or idx",
    ),
    ("dataset.n", "400", "number of generated samples"),
    ("dataset.noise", "0.1", "generator noise standard deviation"),
    (
        "dataset.centers",
        "3",
        "number of blob centers (blobs only)",
    ),
    ("dataset.seed", "7", "dataset generation and split seed"),
    (
        "dataset.label_flip",
        "0",
        "fraction of train labels flipped after the split",
    ),
    ("dataset.test_fraction", "0.2", "held-out test fraction"),
    ("dataset.images", "", "IDX image file path (idx only)"),
    ("dataset.labels", "", "IDX label file path (idx only)"),
    (
        "model.hidden",
        "32,32",
        "comma-separated hidden layer widths",
    ),
    (
        "optimizer.kind",
        "zsharp",
        "update rule: base, sam or zsharp",
    ),
    (
        "optimizer.base",
        "adamw",
        "descent-phase optimizer: adamw or sgd",
    ),
    ("optimizer.lr", "0.001", "initial learning rate"),
    ("optimizer.beta1", "0.9", "AdamW first-moment decay"),
    ("optimizer.beta2", "0.999", "AdamW second-moment decay"),
    ("optimizer.eps", "1e-8", "AdamW denominator stabilizer"),
    ("optimizer.weight_decay", "5e-5", "decoupled weight decay"),
    (
        "schedule.kind",
        "step",
        "learning-rate schedule: constant or step",
    ),
    ("schedule.factor", "0.75", "step-decay multiplier"),
    ("schedule.every", "10", "epochs between step decays"),
    ("ascent.rho", "0.05", "perturbation radius (sam and zsharp)"),
    (
        "ascent.delta",
        "1e-8",
        "perturbation denominator stabilizer",
    ),
    (
        "filter.qp",
        "0.95",
        "percentile of coordinates filtered out (zsharp)",
    ),
    (
        "filter.scope",
        "global",
        "percentile scope: global or per-layer",
    ),
    (
        "filter.sigma_eps",
        "1e-12",
        "degenerate-layer standard deviation cutoff",
    ),
    ("train.epochs", "50", "number of training epochs"),
    ("train.batch_size", "64", "minibatch size"),
    (
        "train.drop_last",
        "false",
        "drop the final short batch each epoch",
    ),
    ("train.seed", "1", "training seed (init and shuffling)"),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn defaults_resolve() {
        let cfg = resolve_run_config(&BTreeMap::new()).unwrap();
        assert_eq!(cfg, RunConfig::default_desk());
    }

    #[test]
    fn unknown_key_is_a_hard_error() {
        let err = resolve_run_config(&kv(&[("optimizer.momentum", "0.9")])).unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                key: "optimizer.momentum".into()
            }
        );
    }

    #[test]
    fn qp_out_of_range_names_key_and_range() {
        let err = resolve_run_config(&kv(&[("filter.qp", "1.5")])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("filter.qp"), "{msg}");
        assert!(msg.contains("[0, 1)"), "{msg}");
    }

    #[test]
    fn filter_keys_require_zsharp() {
        let err = resolve_run_config(&kv(&[("optimizer.kind", "sam"), ("filter.qp", "0.9")]))
            .unwrap_err();
        assert!(matches!(err, ConfigError::NotApplicable { .. }));
        let err = resolve_run_config(&kv(&[("optimizer.kind", "base"), ("ascent.rho", "0.1")]))
            .unwrap_err();
        assert!(matches!(err, ConfigError::NotApplicable { .. }));
    }

    #[test]
    fn config_file_dialect() {
        let text = "# comment\n\nfilter.qp = 0.9\ntrain.seed = 5\n";
        let map = parse_config_text(text).unwrap();
        assert_eq!(map.len(), 2);
        let cfg = resolve_run_config(&map).unwrap();
        assert_eq!(cfg.seed, 5);
        match cfg.method {
            MethodSpec::ZSharp { qp, .. } => assert_eq!(qp, 0.9),
            other => panic!("unexpected method {other:?}"),
        }
    }

    #[test]
    fn config_file_rejects_duplicates_and_garbage() {
        assert!(matches!(
            parse_config_text("a.b = 1\na.b = 2\n"),
            Err(ConfigError::DuplicateKey { .. })
        ));
        assert!(matches!(
            parse_config_text("nonsense line\n"),
            Err(ConfigError::BadLine { .. })
        ));
    }

    #[test]
    fn kv_round_trip() {
        let cfg = RunConfig::default_desk();
        let map: BTreeMap<String, String> = cfg.to_kv().into_iter().collect();
        let back = resolve_run_config(&map).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn idx_kind_requires_paths() {
        let err = resolve_run_config(&kv(&[("dataset.kind", "idx")])).unwrap_err();
        assert!(matches!(err, ConfigError::MissingKey { .. }));
    }
}
