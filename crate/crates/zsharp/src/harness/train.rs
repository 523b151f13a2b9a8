//! The training loop with per-epoch metric capture, plus the sharpness
//! probe used as a flatness proxy.

use crate::data::{
    flip_labels, gen_blobs, gen_spirals, gen_two_moons, load_idx_pair, minibatches, split,
    BatchPlan, Dataset, Samples,
};
use crate::harness::config::{BaseOptKind, DataSource, DatasetSpec, RunConfig};
use crate::harness::HarnessError;
use crate::model::{Mlp, MlpSpec};
use crate::opt::{
    compute_perturbation, sam_step, AscentConfig, AscentKind, BaseOptimizer, OptError, ParamSet,
};
use crate::zfilter::GradientSet;
use std::time::Instant;

/// Metrics recorded at the end of each epoch.
///
/// `train_loss` is the mean of the minibatch losses measured at the
/// pre-step weights. `grad_norm` is the mean pre-step gradient norm over
/// the epoch's batches. `kept_fraction` is present only for filtered runs
/// with `qp > 0`; `sharpness` is present whenever the run has an ascent
/// radius to probe with.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_acc: f64,
    pub grad_norm: f64,
    pub kept_fraction: Option<f64>,
    pub sharpness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub epochs_run: usize,
    pub final_train_loss: Option<f64>,
    pub final_test_acc: Option<f64>,
    pub final_sharpness: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub metrics: Vec<EpochMetrics>,
    pub final_params: ParamSet,
    pub summary: RunSummary,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub wall_secs: f64,
}

impl RunResult {
    fn from_metrics(
        config: RunConfig,
        metrics: Vec<EpochMetrics>,
        final_params: ParamSet,
        started: Instant,
    ) -> Self {
        let summary = RunSummary {
            epochs_run: metrics.len(),
            final_train_loss: metrics.last().map(|m| m.train_loss),
            final_test_acc: metrics.last().map(|m| m.test_acc),
            final_sharpness: metrics.last().and_then(|m| m.sharpness),
        };
        RunResult {
            config,
            metrics,
            final_params,
            summary,
            wall_secs: started.elapsed().as_secs_f64(),
        }
    }
}

// Sub-stream tags for seed derivation; fixed so every run derives the
// same streams from its seeds.
const STREAM_SPLIT: u64 = 101;
const STREAM_FLIP: u64 = 202;
const STREAM_SHUFFLE: u64 = 1;

fn derive_seed(seed: u64, stream: u64) -> u64 {
    // Reuse the rng derivation so the mapping stays in one place.
    crate::math::SeededRng::derive(seed, stream).next_u64()
}

/// Materializes the dataset spec into train and test splits. Label flips
/// apply to the train split only, so test accuracy measures
/// generalization against clean labels.
pub fn prepare_data(spec: &DatasetSpec) -> Result<(Dataset, Dataset), HarnessError> {
    let full = match &spec.source {
        DataSource::TwoMoons { n, noise } => gen_two_moons(*n, *noise, spec.seed)?,
        DataSource::Blobs { n, centers, noise } => gen_blobs(*n, *centers, *noise, spec.seed)?,
        DataSource::Spirals { n, noise } => gen_spirals(*n, *noise, spec.seed)?,
        DataSource::Idx { images, labels } => load_idx_pair(images, labels)?,
    };
    let (mut train, test) = split(
        &full,
        spec.test_fraction,
        derive_seed(spec.seed, STREAM_SPLIT),
    )?;
    if spec.label_flip > 0.0 {
        train = flip_labels(&train, spec.label_flip, derive_seed(spec.seed, STREAM_FLIP))?;
    }
    Ok((train, test))
}

pub(crate) fn build_model(
    cfg: &RunConfig,
    input_dim: usize,
    n_classes: usize,
) -> Result<Mlp, HarnessError> {
    let spec = MlpSpec::new(input_dim, cfg.hidden_dims.clone(), n_classes, cfg.seed);
    Ok(Mlp::new(spec)?)
}

fn build_base(cfg: &RunConfig, template: &ParamSet) -> BaseOptimizer {
    match cfg.base.kind {
        BaseOptKind::Sgd => BaseOptimizer::sgd(),
        BaseOptKind::AdamW => BaseOptimizer::adamw(cfg.base.adamw_config(), template),
    }
}

/// One-step worst-case loss rise `L(w + eps) - L(w)` with the plain
/// full-gradient perturbation, evaluated by `eval` (typically the full
/// training set). Small and non-negative at flat points.
pub fn sharpness_probe_with<F>(
    mut eval: F,
    w: &ParamSet,
    rho: f64,
    delta: f64,
) -> Result<f64, OptError>
where
    F: FnMut(&ParamSet) -> Result<(f64, GradientSet), OptError>,
{
    let cfg = AscentConfig::new(rho, delta, AscentKind::Sam)?;
    let (base_loss, grad) = eval(w)?;
    let (eps, _) = compute_perturbation(&grad, &cfg);
    let perturbed = crate::opt::ascend(w, &eps)?;
    let (perturbed_loss, _) = eval(&perturbed)?;
    Ok(perturbed_loss - base_loss)
}

/// Sharpness probe over a dataset through an MLP.
pub fn sharpness_probe(
    mlp: &Mlp,
    params: &ParamSet,
    data: &Dataset,
    rho: f64,
    delta: f64,
) -> Result<f64, OptError> {
    sharpness_probe_with(
        |p| mlp.loss_and_grad(p, data).map_err(OptError::from),
        params,
        rho,
        delta,
    )
}

/// Runs the full training loop described by `cfg`. Deterministic: the
/// metric stream and final parameters are a pure function of the config.
///
/// On numerical divergence the error carries the metrics of the epochs
/// completed so far.
pub fn train(cfg: &RunConfig) -> Result<RunResult, HarnessError> {
    let started = Instant::now();
    let (train_ds, test_ds) = prepare_data(&cfg.dataset)?;
    let mlp = build_model(cfg, train_ds.feature_dim(), train_ds.n_classes())?;
    let mut params = mlp.init_params();
    let mut base = build_base(cfg, &params);
    let ascent = cfg.method.ascent()?;
    let plan = BatchPlan {
        batch_size: cfg.batch_size,
        shuffle_seed: derive_seed(cfg.seed, STREAM_SHUFFLE),
        drop_last: cfg.drop_last,
    };

    let mut metrics: Vec<EpochMetrics> = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.lr_at(epoch);
        let mut loss_sum = 0.0;
        let mut grad_norm_sum = 0.0;
        let mut kept_sum = 0.0;
        let mut kept_count = 0usize;
        let batches = minibatches(&train_ds, &plan, epoch);
        let n_batches = batches.len();
        for (step, batch) in batches.iter().enumerate() {
            let stepped = match &ascent {
                Some(ascent_cfg) => sam_step(
                    |p| mlp.loss_and_grad(p, batch).map_err(OptError::from),
                    &mut params,
                    &mut base,
                    ascent_cfg,
                    lr,
                )
                .map(|report| {
                    if let Some(f) = report.kept_fraction {
                        kept_sum += f;
                        kept_count += 1;
                    }
                    (report.loss, report.grad_norm)
                }),
                None => plain_step(&mlp, batch, &mut params, &mut base, lr),
            };
            match stepped {
                Ok((loss, grad_norm)) => {
                    loss_sum += loss;
                    grad_norm_sum += grad_norm;
                }
                Err(err) if is_divergence(&err) => {
                    return Err(HarnessError::Diverged {
                        epoch,
                        step,
                        partial: Box::new(RunResult::from_metrics(
                            cfg.clone(),
                            metrics,
                            params,
                            started,
                        )),
                    });
                }
                Err(other) => return Err(other.into()),
            }
        }
        let sharpness = match &ascent {
            Some(a) => match sharpness_probe(&mlp, &params, &train_ds, a.rho(), a.delta()) {
                Ok(probe) => Some(probe),
                Err(err) if is_divergence(&err) => {
                    return Err(HarnessError::Diverged {
                        epoch,
                        step: n_batches,
                        partial: Box::new(RunResult::from_metrics(
                            cfg.clone(),
                            metrics,
                            params,
                            started,
                        )),
                    });
                }
                Err(other) => return Err(other.into()),
            },
            None => None,
        };
        metrics.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / n_batches as f64,
            test_acc: mlp.accuracy(&params, &test_ds),
            grad_norm: grad_norm_sum / n_batches as f64,
            kept_fraction: if kept_count > 0 {
                Some(kept_sum / kept_count as f64)
            } else {
                None
            },
            sharpness,
        });
    }
    Ok(RunResult::from_metrics(
        cfg.clone(),
        metrics,
        params,
        started,
    ))
}

/// Overflow inside the model surfaces as a non-finite loss error, which
/// counts as divergence for reporting purposes.
fn is_divergence(err: &OptError) -> bool {
    matches!(
        err,
        OptError::Divergence | OptError::Model(crate::model::ModelError::NonFinite { .. })
    )
}

fn plain_step(
    mlp: &Mlp,
    batch: &impl Samples,
    params: &mut ParamSet,
    base: &mut BaseOptimizer,
    lr: f64,
) -> Result<(f64, f64), OptError> {
    let (loss, grad) = mlp.loss_and_grad(params, batch)?;
    let grad_norm = grad.flat_norm2();
    if !loss.is_finite() || !grad_norm.is_finite() {
        return Err(OptError::Divergence);
    }
    base.step(params, &grad, lr)?;
    Ok((loss, grad_norm))
}

/// Final train-set accuracy of a finished run, for sanity checks.
pub fn train_accuracy(result: &RunResult) -> Result<f64, HarnessError> {
    let (train_ds, _) = prepare_data(&result.config.dataset)?;
    let mlp = build_model(&result.config, train_ds.feature_dim(), train_ds.n_classes())?;
    Ok(mlp.accuracy(&result.final_params, &train_ds))
}
