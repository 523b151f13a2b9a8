//! Layer-wise Z-score normalization of gradients and percentile-based
//! mask construction.
//!
//! The pipeline is `layer_stats -> znormalize -> build_mask`, composed by
//! [`filter_gradient`]. Z-scores are computed per layer (each trainable
//! tensor is its own group), the percentile threshold is taken over the
//! absolute Z-scores, and the resulting binary mask is applied to the
//! *original* gradient, never to the normalized values.

use crate::math::{percentile_threshold, FlatVec, MathError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("gradient set must contain at least one layer")]
    NoLayers,
    #[error("empty layer {id:?}")]
    EmptyLayer { id: String },
    #[error("layer id/count mismatch: {detail}")]
    LayerMismatch { detail: String },
    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },
    #[error("invalid filter config: {detail}")]
    InvalidConfig { detail: String },
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Per-layer gradient slices, mirroring the owning parameter set.
///
/// The flattened order (layers in sequence, elements in storage order)
/// defines the global coordinate index used by masks.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layer_ids: Vec<String>,
    layers: Vec<FlatVec>,
    total_dim: usize,
}

impl GradientSet {
    pub fn new(layer_ids: Vec<String>, layers: Vec<FlatVec>) -> Result<Self, FilterError> {
        if layers.is_empty() {
            return Err(FilterError::NoLayers);
        }
        if layer_ids.len() != layers.len() {
            return Err(FilterError::LayerMismatch {
                detail: format!("{} ids for {} layers", layer_ids.len(), layers.len()),
            });
        }
        for (id, layer) in layer_ids.iter().zip(&layers) {
            if layer.is_empty() {
                return Err(FilterError::EmptyLayer { id: id.clone() });
            }
        }
        let total_dim = layers.iter().map(FlatVec::len).sum();
        Ok(Self {
            layer_ids,
            layers,
            total_dim,
        })
    }

    /// Single unnamed layer, for flat problems like the quadratic probes.
    pub fn single(values: FlatVec) -> Result<Self, FilterError> {
        Self::new(vec!["w".to_string()], vec![values])
    }

    pub fn layer_ids(&self) -> &[String] {
        &self.layer_ids
    }

    pub fn layers(&self) -> &[FlatVec] {
        &self.layers
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// Iterates every entry in flattened order.
    pub fn iter_flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|layer| layer.iter().copied())
    }

    pub fn flatten(&self) -> FlatVec {
        FlatVec::from_raw(self.iter_flat().collect())
    }

    /// Euclidean norm over the flattened entries, accumulated in
    /// flattened order (bitwise equal to `self.flatten().norm2()`).
    pub fn flat_norm2(&self) -> f64 {
        self.iter_flat().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> GradientSet {
        GradientSet {
            layer_ids: self.layer_ids.clone(),
            layers: self.layers.iter().map(|l| l.scaled(factor)).collect(),
            total_dim: self.total_dim,
        }
    }

    pub(crate) fn from_parts_unchecked(layer_ids: Vec<String>, layers: Vec<FlatVec>) -> Self {
        let total_dim = layers.iter().map(FlatVec::len).sum();
        GradientSet {
            layer_ids,
            layers,
            total_dim,
        }
    }
}

pub(crate) fn check_shapes(
    a_ids: &[String],
    a_layers: &[FlatVec],
    b_ids: &[String],
    b_layers: &[FlatVec],
) -> Result<(), FilterError> {
    if a_ids.len() != b_ids.len() {
        return Err(FilterError::ShapeMismatch {
            detail: format!("{} layers vs {}", a_ids.len(), b_ids.len()),
        });
    }
    for i in 0..a_ids.len() {
        if a_ids[i] != b_ids[i] {
            return Err(FilterError::ShapeMismatch {
                detail: format!("layer {i} id {:?} vs {:?}", a_ids[i], b_ids[i]),
            });
        }
        if a_layers[i].len() != b_layers[i].len() {
            return Err(FilterError::ShapeMismatch {
                detail: format!(
                    "layer {:?} length {} vs {}",
                    a_ids[i],
                    a_layers[i].len(),
                    b_layers[i].len()
                ),
            });
        }
    }
    Ok(())
}

/// Mean and population standard deviation of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub mu: f64,
    /// Population standard deviation (1/d normalization).
    pub sigma: f64,
    /// True when `sigma < sigma_eps`; such layers carry no ranking
    /// information and normalize to zero.
    pub degenerate: bool,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZStats {
    pub layers: Vec<LayerStats>,
    pub sigma_eps: f64,
}

/// Percentile scope for mask construction.
///
/// `Global` ranks all `d` absolute Z-scores together with one threshold.
/// `PerLayer` computes and applies a threshold within each layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PercentileScope {
    Global,
    PerLayer,
}

pub const DEFAULT_SIGMA_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Fraction of coordinates excluded, in `[0, 1)`. The top `1 - qp`
    /// fraction by absolute Z-score is retained; `qp = 0` keeps all.
    pub qp: f64,
    pub scope: PercentileScope,
    pub sigma_eps: f64,
}

impl FilterConfig {
    pub fn new(qp: f64) -> Result<Self, FilterError> {
        if !(0.0..1.0).contains(&qp) {
            return Err(FilterError::InvalidConfig {
                detail: format!("qp {qp} outside [0, 1)"),
            });
        }
        Ok(Self {
            qp,
            scope: PercentileScope::Global,
            sigma_eps: DEFAULT_SIGMA_EPS,
        })
    }

    pub fn with_scope(mut self, scope: PercentileScope) -> Self {
        self.scope = scope;
        self
    }
}

/// Binary keep/drop mask aligned with a gradient set's flattened order.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    bits: Vec<bool>,
    kept_count: usize,
}

impl Mask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let kept_count = bits.iter().filter(|&&b| b).count();
        Self { bits, kept_count }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn kept_count(&self) -> usize {
        self.kept_count
    }

    /// Masks `g` elementwise, keeping entries whose bit is set and
    /// zeroing the rest. Kept entries are copied bit-for-bit.
    pub fn apply(&self, g: &GradientSet) -> Result<GradientSet, FilterError> {
        if self.bits.len() != g.total_dim() {
            return Err(FilterError::ShapeMismatch {
                detail: format!(
                    "mask length {} vs gradient dim {}",
                    self.bits.len(),
                    g.total_dim()
                ),
            });
        }
        let mut offset = 0;
        let layers = g
            .layers()
            .iter()
            .map(|layer| {
                let bits = &self.bits[offset..offset + layer.len()];
                offset += layer.len();
                FlatVec::from_raw(
                    layer
                        .iter()
                        .zip(bits)
                        .map(|(&v, &keep)| if keep { v } else { 0.0 })
                        .collect(),
                )
            })
            .collect();
        Ok(GradientSet::from_parts_unchecked(
            g.layer_ids().to_vec(),
            layers,
        ))
    }
}

/// Percentile threshold(s) backing a mask. The `-inf` sentinel means
/// "keep everything" (produced by `qp = 0`).
#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Global(f64),
    PerLayer(Vec<f64>),
}

/// Full provenance of one filtering pass.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub stats: ZStats,
    pub threshold: Threshold,
    pub mask: Mask,
    /// The original gradient with dropped coordinates zeroed.
    pub filtered: GradientSet,
    pub filtered_norm: f64,
}

/// Two-pass mean and population standard deviation per layer.
pub fn layer_stats(g: &GradientSet, sigma_eps: f64) -> Result<ZStats, FilterError> {
    let mut layers = Vec::with_capacity(g.layers().len());
    for (id, layer) in g.layer_ids().iter().zip(g.layers()) {
        if layer.is_empty() {
            return Err(FilterError::EmptyLayer { id: id.clone() });
        }
        let len = layer.len();
        let mu = layer.iter().sum::<f64>() / len as f64;
        let var = layer.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / len as f64;
        let sigma = var.sqrt();
        layers.push(LayerStats {
            mu,
            sigma,
            degenerate: sigma < sigma_eps,
            len,
        });
    }
    Ok(ZStats { layers, sigma_eps })
}

/// Z-score normalization `(g - mu) / sigma` per layer. Degenerate layers
/// map to all-zeros so their coordinates are never selected.
pub fn znormalize(g: &GradientSet, stats: &ZStats) -> Result<GradientSet, FilterError> {
    if stats.layers.len() != g.layers().len() {
        return Err(FilterError::ShapeMismatch {
            detail: format!(
                "{} stat layers vs {} gradient layers",
                stats.layers.len(),
                g.layers().len()
            ),
        });
    }
    let mut layers = Vec::with_capacity(g.layers().len());
    for ((id, layer), stat) in g.layer_ids().iter().zip(g.layers()).zip(&stats.layers) {
        if stat.len != layer.len() {
            return Err(FilterError::ShapeMismatch {
                detail: format!(
                    "layer {id:?} length {} vs stats length {}",
                    layer.len(),
                    stat.len
                ),
            });
        }
        let values = if stat.degenerate {
            vec![0.0; layer.len()]
        } else {
            layer.iter().map(|v| (v - stat.mu) / stat.sigma).collect()
        };
        layers.push(FlatVec::from_raw(values));
    }
    Ok(GradientSet::from_parts_unchecked(
        g.layer_ids().to_vec(),
        layers,
    ))
}

/// Builds the keep mask from normalized gradients. Bits are set exactly
/// where `|omega|` is strictly greater than the threshold, so ties at the
/// threshold are dropped.
pub fn build_mask(omega: &GradientSet, cfg: &FilterConfig) -> (Mask, Threshold) {
    match cfg.scope {
        PercentileScope::Global => {
            let abs: Vec<f64> = omega.iter_flat().map(f64::abs).collect();
            let thr = percentile_threshold(&abs, cfg.qp).expect("non-empty gradient set");
            let bits = abs.iter().map(|&a| a > thr).collect();
            (Mask::from_bits(bits), Threshold::Global(thr))
        }
        PercentileScope::PerLayer => {
            let mut bits = Vec::with_capacity(omega.total_dim());
            let mut thresholds = Vec::with_capacity(omega.layers().len());
            for layer in omega.layers() {
                let abs: Vec<f64> = layer.iter().map(|v| v.abs()).collect();
                let thr = percentile_threshold(&abs, cfg.qp).expect("non-empty layer");
                bits.extend(abs.iter().map(|&a| a > thr));
                thresholds.push(thr);
            }
            (Mask::from_bits(bits), Threshold::PerLayer(thresholds))
        }
    }
}

/// Runs the full filtering pass and masks the original gradient.
pub fn filter_gradient(g: &GradientSet, cfg: &FilterConfig) -> Result<FilterOutcome, FilterError> {
    let stats = layer_stats(g, cfg.sigma_eps)?;
    let omega = znormalize(g, &stats)?;
    let (mask, threshold) = build_mask(&omega, cfg);
    let filtered = mask.apply(g)?;
    let filtered_norm = filtered.flat_norm2();
    Ok(FilterOutcome {
        stats,
        threshold,
        mask,
        filtered,
        filtered_norm,
    })
}
