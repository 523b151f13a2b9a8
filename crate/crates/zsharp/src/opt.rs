//! Two-phase sharpness-aware updates: perturbation construction with the
//! zero-norm fallback, the ascent step, and descent through a base
//! optimizer (plain SGD or decoupled-weight-decay AdamW).

use crate::math::FlatVec;
use crate::model::ModelError;
use crate::zfilter::{
    check_shapes, filter_gradient, FilterConfig, FilterError, FilterOutcome, GradientSet,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },
    #[error("invalid optimizer config: {detail}")]
    InvalidConfig { detail: String },
    #[error("numerical divergence")]
    Divergence,
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Model parameters, one flat tensor per layer. Shape-compatible with the
/// [`GradientSet`] the model produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layer_ids: Vec<String>,
    layers: Vec<FlatVec>,
}

impl ParamSet {
    pub fn new(layer_ids: Vec<String>, layers: Vec<FlatVec>) -> Result<Self, OptError> {
        if layers.is_empty() || layer_ids.len() != layers.len() {
            return Err(OptError::ShapeMismatch {
                detail: format!("{} ids for {} layers", layer_ids.len(), layers.len()),
            });
        }
        if let Some(pos) = layers.iter().position(FlatVec::is_empty) {
            return Err(OptError::ShapeMismatch {
                detail: format!("layer {:?} is empty", layer_ids[pos]),
            });
        }
        Ok(Self { layer_ids, layers })
    }

    pub fn layer_ids(&self) -> &[String] {
        &self.layer_ids
    }

    pub fn layers(&self) -> &[FlatVec] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [FlatVec] {
        &mut self.layers
    }

    pub fn total_dim(&self) -> usize {
        self.layers.iter().map(FlatVec::len).sum()
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|layer| layer.iter().copied())
    }

    /// Zero gradient buffers mirroring this parameter set.
    pub fn zero_gradients(&self) -> GradientSet {
        GradientSet::from_parts_unchecked(
            self.layer_ids.clone(),
            self.layers
                .iter()
                .map(|l| FlatVec::zeros(l.len()))
                .collect(),
        )
    }

    pub fn check_gradient_shape(&self, g: &GradientSet) -> Result<(), OptError> {
        check_shapes(&self.layer_ids, &self.layers, g.layer_ids(), g.layers()).map_err(|e| {
            OptError::ShapeMismatch {
                detail: e.to_string(),
            }
        })
    }
}

/// Which ascent direction a SAM-style step uses.
#[derive(Debug, Clone, PartialEq)]
pub enum AscentKind {
    /// Full-gradient ascent.
    Sam,
    /// Z-score filtered ascent with fallback to the full gradient when the
    /// filtered norm is zero.
    ZSharp(FilterConfig),
}

pub const DEFAULT_DELTA: f64 = 1e-8;

/// Perturbation settings. `rho` is the ascent radius and `delta` the
/// denominator stabilizer; together with `kind` they fully determine the
/// perturbation for a given gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentConfig {
    rho: f64,
    delta: f64,
    kind: AscentKind,
}

impl AscentConfig {
    pub fn new(rho: f64, delta: f64, kind: AscentKind) -> Result<Self, OptError> {
        if !rho.is_finite() || rho <= 0.0 {
            return Err(OptError::InvalidConfig {
                detail: format!("rho {rho} must be positive"),
            });
        }
        if !delta.is_finite() || delta <= 0.0 {
            return Err(OptError::InvalidConfig {
                detail: format!("delta {delta} must be positive"),
            });
        }
        Ok(Self { rho, delta, kind })
    }

    pub fn sam(rho: f64) -> Result<Self, OptError> {
        Self::new(rho, DEFAULT_DELTA, AscentKind::Sam)
    }

    pub fn zsharp(rho: f64, filter: FilterConfig) -> Result<Self, OptError> {
        Self::new(rho, DEFAULT_DELTA, AscentKind::ZSharp(filter))
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn kind(&self) -> &AscentKind {
        &self.kind
    }
}

/// `rho * v / (||v|| + delta)`. Shared by both ascent kinds so that the
/// qp = 0 filter path and the plain path run the identical arithmetic.
fn scaled_direction(v: &GradientSet, rho: f64, delta: f64) -> GradientSet {
    let norm = v.flat_norm2();
    v.scaled(rho / (norm + delta))
}

/// Builds the ascent perturbation for `g`.
///
/// For the filtered kind the perturbation follows the filtered gradient
/// when its norm is positive and falls back to the full gradient
/// otherwise. An all-zero gradient yields an all-zero perturbation.
pub fn compute_perturbation(
    g: &GradientSet,
    cfg: &AscentConfig,
) -> (GradientSet, Option<FilterOutcome>) {
    match &cfg.kind {
        AscentKind::Sam => (scaled_direction(g, cfg.rho, cfg.delta), None),
        AscentKind::ZSharp(filter) => {
            let outcome = filter_gradient(g, filter).expect("well-formed gradient set");
            let eps = if outcome.filtered_norm > 0.0 {
                scaled_direction(&outcome.filtered, cfg.rho, cfg.delta)
            } else {
                scaled_direction(g, cfg.rho, cfg.delta)
            };
            (eps, Some(outcome))
        }
    }
}

/// Elementwise `w + epsilon`; the input is left untouched so the caller
/// keeps the pre-ascent snapshot.
pub fn ascend(w: &ParamSet, epsilon: &GradientSet) -> Result<ParamSet, OptError> {
    w.check_gradient_shape(epsilon)?;
    let layers = w
        .layers
        .iter()
        .zip(epsilon.layers())
        .map(|(wl, el)| FlatVec::from_raw(wl.iter().zip(el.iter()).map(|(a, b)| a + b).collect()))
        .collect();
    Ok(ParamSet {
        layer_ids: w.layer_ids.clone(),
        layers,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// AdamW moment accumulators. `t` increments by exactly one per step.
#[derive(Debug, Clone)]
pub struct AdamWState {
    cfg: AdamWConfig,
    m: Vec<FlatVec>,
    v: Vec<FlatVec>,
    t: u64,
}

impl AdamWState {
    pub fn new(cfg: AdamWConfig, template: &ParamSet) -> Self {
        let zeros: Vec<FlatVec> = template
            .layers()
            .iter()
            .map(|l| FlatVec::zeros(l.len()))
            .collect();
        Self {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[FlatVec] {
        &self.m
    }

    pub fn second_moment(&self) -> &[FlatVec] {
        &self.v
    }
}

/// One decoupled-weight-decay AdamW update:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, bias-corrected
/// `m_hat`, `v_hat`, then `w <- w - lr (m_hat / (sqrt(v_hat) + eps) + wd w)`.
pub fn adamw_step(
    state: &mut AdamWState,
    w: &mut ParamSet,
    g: &GradientSet,
    lr: f64,
) -> Result<(), OptError> {
    w.check_gradient_shape(g)?;
    state.t += 1;
    let AdamWConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.cfg;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for ((wl, gl), (ml, vl)) in w
        .layers_mut()
        .iter_mut()
        .zip(g.layers())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let ws = wl.as_mut_slice();
        let ms = ml.as_mut_slice();
        let vs = vl.as_mut_slice();
        for (i, &gi) in gl.iter().enumerate() {
            ms[i] = beta1 * ms[i] + (1.0 - beta1) * gi;
            vs[i] = beta2 * vs[i] + (1.0 - beta2) * gi * gi;
            let m_hat = ms[i] / bc1;
            let v_hat = vs[i] / bc2;
            ws[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * ws[i]);
        }
    }
    Ok(())
}

/// The descent-phase optimizer applied to the perturbed-point gradient.
#[derive(Debug, Clone)]
pub enum BaseOptimizer {
    Sgd,
    AdamW(AdamWState),
}

impl BaseOptimizer {
    pub fn sgd() -> Self {
        BaseOptimizer::Sgd
    }

    pub fn adamw(cfg: AdamWConfig, template: &ParamSet) -> Self {
        BaseOptimizer::AdamW(AdamWState::new(cfg, template))
    }

    pub fn step(&mut self, w: &mut ParamSet, g: &GradientSet, lr: f64) -> Result<(), OptError> {
        match self {
            BaseOptimizer::Sgd => {
                w.check_gradient_shape(g)?;
                for (wl, gl) in w.layers_mut().iter_mut().zip(g.layers()) {
                    for (wi, &gi) in wl.as_mut_slice().iter_mut().zip(gl.iter()) {
                        *wi -= lr * gi;
                    }
                }
                Ok(())
            }
            BaseOptimizer::AdamW(state) => adamw_step(state, w, g, lr),
        }
    }
}

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    StepDecay {
        base_lr: f64,
        factor: f64,
        every_n_epochs: usize,
    },
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant(lr) => lr,
            LrSchedule::StepDecay {
                base_lr,
                factor,
                every_n_epochs,
            } => base_lr * factor.powi((epoch / every_n_epochs) as i32),
        }
    }

    pub fn base_lr(&self) -> f64 {
        match *self {
            LrSchedule::Constant(lr) => lr,
            LrSchedule::StepDecay { base_lr, .. } => base_lr,
        }
    }
}

/// Per-step diagnostics from [`sam_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Loss at the pre-step weights.
    pub loss: f64,
    /// Norm of the pre-step gradient.
    pub grad_norm: f64,
    /// Norm of the applied perturbation.
    pub eps_norm: f64,
    /// Fraction of coordinates the filter kept. Present only when the
    /// filter actually selects (qp > 0), so that a qp = 0 run reports the
    /// same metric stream as plain SAM.
    pub kept_fraction: Option<f64>,
}

/// One two-phase update: gradient at `w`, perturb, gradient at the
/// perturbed point on the same batch, then a base-optimizer step applied
/// to the pre-ascent weights. `eval` must return the loss and gradient of
/// the same minibatch for any parameter point it is given.
pub fn sam_step<F>(
    mut eval: F,
    w: &mut ParamSet,
    base: &mut BaseOptimizer,
    cfg: &AscentConfig,
    lr: f64,
) -> Result<StepReport, OptError>
where
    F: FnMut(&ParamSet) -> Result<(f64, GradientSet), OptError>,
{
    let (loss, g1) = eval(w)?;
    let grad_norm = g1.flat_norm2();
    if !loss.is_finite() || !grad_norm.is_finite() {
        return Err(OptError::Divergence);
    }
    let (eps, diagnostics) = compute_perturbation(&g1, cfg);
    let perturbed = ascend(w, &eps)?;
    let (_, g2) = eval(&perturbed)?;
    if !g2.flat_norm2().is_finite() {
        return Err(OptError::Divergence);
    }
    // `w` was never mutated above, so the descent starts from the
    // pre-ascent snapshot exactly.
    base.step(w, &g2, lr)?;
    let kept_fraction = match cfg.kind() {
        AscentKind::ZSharp(filter) if filter.qp > 0.0 => diagnostics
            .as_ref()
            .map(|o| o.mask.kept_count() as f64 / o.mask.len() as f64),
        _ => None,
    };
    Ok(StepReport {
        loss,
        grad_norm,
        eps_norm: eps.flat_norm2(),
        kept_fraction,
    })
}
