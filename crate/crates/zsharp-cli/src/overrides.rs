//! Per-key CLI override flags. Every flag name is the dot-path of the
//! corresponding config key, so `--filter.qp 0.9` on the command line,
//! `filter.qp = 0.9` in a config file, and the manifest echo all speak
//! the same schema. Flags override file values.

use std::collections::BTreeMap;
use std::path::PathBuf;
use zsharp::harness::{parse_config_text, resolve_run_config, RunConfig};

use crate::{CliFailure, EXIT_CONFIG};

macro_rules! config_overrides {
    ($( $field:ident, $key:literal, $help:literal; )+) => {
        /// Config-key overrides; values are parsed by the shared
        /// resolver, so errors name the dot-path key and valid range.
        #[derive(clap::Args, Debug, Default, Clone)]
        pub struct ConfigOverrides {
            $(
                #[arg(long = $key, value_name = "VALUE", help = $help, help_heading = "Config overrides")]
                pub $field: Option<String>,
            )+
        }

        impl ConfigOverrides {
            pub fn apply(&self, map: &mut BTreeMap<String, String>) {
                $(
                    if let Some(value) = &self.$field {
                        map.insert($key.to_string(), value.clone());
                    }
                )+
            }
        }
    };
}

config_overrides! {
    dataset_kind, "dataset.kind", "dataset source: two-moons, blobs, spirals or idx [default: two-moons]";
    dataset_n, "dataset.n", "number of generated samples [default: 400]";
    dataset_noise, "dataset.noise", "generator noise standard deviation [default: 0.1]";
    dataset_centers, "dataset.centers", "number of blob centers, blobs only [default: 3]";
    dataset_seed, "dataset.seed", "dataset generation and split seed [default: 7]";
    dataset_label_flip, "dataset.label_flip", "fraction of train labels flipped after the split [default: 0]";
    dataset_test_fraction, "dataset.test_fraction", "held-out test fraction [default: 0.2]";
    dataset_images, "dataset.images", "IDX image file path, idx only";
    dataset_labels, "dataset.labels", "IDX label file path, idx only";
    model_hidden, "model.hidden", "comma-separated hidden layer widths [default: 32,32]";
    optimizer_kind, "optimizer.kind", "update rule: base, sam or zsharp [default: zsharp]";
    optimizer_base, "optimizer.base", "descent-phase optimizer: adamw or sgd [default: adamw]";
    optimizer_lr, "optimizer.lr", "initial learning rate [default: 0.001]";
    optimizer_beta1, "optimizer.beta1", "AdamW first-moment decay [default: 0.9]";
    optimizer_beta2, "optimizer.beta2", "AdamW second-moment decay [default: 0.999]";
    optimizer_eps, "optimizer.eps", "AdamW denominator stabilizer [default: 1e-8]";
    optimizer_weight_decay, "optimizer.weight_decay", "decoupled weight decay [default: 5e-5]";
    schedule_kind, "schedule.kind", "learning-rate schedule: constant or step [default: step]";
    schedule_factor, "schedule.factor", "step-decay multiplier [default: 0.75]";
    schedule_every, "schedule.every", "epochs between step decays [default: 10]";
    ascent_rho, "ascent.rho", "perturbation radius, sam and zsharp [default: 0.05]";
    ascent_delta, "ascent.delta", "perturbation denominator stabilizer [default: 1e-8]";
    filter_qp, "filter.qp", "percentile of coordinates filtered out, zsharp only [default: 0.95]";
    filter_scope, "filter.scope", "percentile scope: global or per-layer [default: global]";
    filter_sigma_eps, "filter.sigma_eps", "degenerate-layer std cutoff [default: 1e-12]";
    train_epochs, "train.epochs", "number of training epochs [default: 50]";
    train_batch_size, "train.batch_size", "minibatch size [default: 64]";
    train_drop_last, "train.drop_last", "drop the final short batch each epoch [default: false]";
    train_seed, "train.seed", "training seed for init and shuffling [default: 1]";
}

/// Resolves a run config from an optional file plus flag overrides.
pub fn resolve_config(
    config_path: Option<&PathBuf>,
    overrides: &ConfigOverrides,
) -> Result<RunConfig, CliFailure> {
    let mut map = match config_path {
        None => BTreeMap::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliFailure {
                code: EXIT_CONFIG,
                message: format!("cannot read config file {}: {e}", path.display()),
            })?;
            parse_config_text(&text).map_err(|e| CliFailure {
                code: EXIT_CONFIG,
                message: e.to_string(),
            })?
        }
    };
    overrides.apply(&mut map);
    resolve_run_config(&map).map_err(|e| CliFailure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    })
}
