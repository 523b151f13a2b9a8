//! A small ReLU MLP classifier with hand-written forward and backward
//! passes, plus the diagonal quadratic test problem used by the
//! convergence diagnostics. Gradients are first-class values so they can
//! be checked against finite differences.

use crate::data::Samples;
use crate::math::{FlatVec, SeededRng};
use crate::opt::ParamSet;
use crate::zfilter::GradientSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {detail}")]
    InvalidSpec { detail: String },
    #[error("bad batch: {detail}")]
    BadBatch { detail: String },
    #[error("non-finite value in {place}")]
    NonFinite { place: String },
    #[error("parameter snapshot is malformed: {detail}")]
    Snapshot { detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Gaussian weights with variance `2 / fan_in`, zero biases.
    HeNormal { seed: u64 },
}

/// Feed-forward classifier shape. Parameter tensors enumerate as
/// `[W1, b1, W2, b2, ...]`; that order defines the flattened coordinate
/// index used everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub n_classes: usize,
    pub activation: Activation,
    pub init: InitScheme,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, n_classes: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden_dims,
            n_classes,
            activation: Activation::Relu,
            init: InitScheme::HeNormal { seed },
        }
    }

    /// Layer widths from input to logits.
    fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.n_classes);
        dims
    }
}

pub struct Mlp {
    spec: MlpSpec,
    dims: Vec<usize>,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self, ModelError> {
        let dims = spec.dims();
        if dims.contains(&0) {
            return Err(ModelError::InvalidSpec {
                detail: format!("zero-width layer in {dims:?}"),
            });
        }
        Ok(Self { dims, spec })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    fn layer_ids(&self) -> Vec<String> {
        (0..self.layer_count())
            .flat_map(|l| [format!("fc{}.weight", l + 1), format!("fc{}.bias", l + 1)])
            .collect()
    }

    /// He-normal weights sampled in storage order, zero biases.
    /// Deterministic for a given spec and seed.
    pub fn init_params(&self) -> ParamSet {
        let InitScheme::HeNormal { seed } = self.spec.init;
        let mut rng = SeededRng::new(seed);
        let mut layers = Vec::with_capacity(self.layer_count() * 2);
        for l in 0..self.layer_count() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let weights: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| std * rng.next_gaussian())
                .collect();
            layers.push(FlatVec::from_raw(weights));
            layers.push(FlatVec::zeros(fan_out));
        }
        ParamSet::new(self.layer_ids(), layers).expect("spec dims validated")
    }

    fn check_params(&self, params: &ParamSet) -> Result<(), ModelError> {
        let expected: Vec<usize> = (0..self.layer_count())
            .flat_map(|l| [self.dims[l] * self.dims[l + 1], self.dims[l + 1]])
            .collect();
        let actual: Vec<usize> = params.layers().iter().map(|l| l.len()).collect();
        if expected != actual {
            return Err(ModelError::InvalidSpec {
                detail: format!("parameter shape {actual:?} does not match spec {expected:?}"),
            });
        }
        Ok(())
    }

    /// Logits for one sample.
    fn forward_logits(&self, params: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut activation = x.to_vec();
        for l in 0..self.layer_count() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let w = params.layers()[2 * l].as_slice();
            let b = params.layers()[2 * l + 1].as_slice();
            let mut z = vec![0.0; fan_out];
            for r in 0..fan_out {
                let mut acc = b[r];
                let row = &w[r * fan_in..(r + 1) * fan_in];
                for (wv, av) in row.iter().zip(&activation) {
                    acc += wv * av;
                }
                z[r] = acc;
            }
            if l + 1 < self.layer_count() {
                for v in z.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0; // ReLU; subgradient at 0 taken as 0
                    }
                }
            }
            activation = z;
        }
        activation
    }

    /// Mean softmax cross-entropy over the batch plus the gradient from
    /// backpropagation, shape-mirroring `params`.
    pub fn loss_and_grad(
        &self,
        params: &ParamSet,
        batch: &impl Samples,
    ) -> Result<(f64, GradientSet), ModelError> {
        self.check_params(params)?;
        if batch.is_empty() {
            return Err(ModelError::BadBatch {
                detail: "empty batch".into(),
            });
        }
        if batch.feature_dim() != self.spec.input_dim {
            return Err(ModelError::BadBatch {
                detail: format!(
                    "feature dim {} does not match input dim {}",
                    batch.feature_dim(),
                    self.spec.input_dim
                ),
            });
        }
        let layer_count = self.layer_count();
        let mut grads: Vec<Vec<f64>> = params.layers().iter().map(|l| vec![0.0; l.len()]).collect();
        let mut total_loss = 0.0;

        for i in 0..batch.len() {
            let label = batch.label(i);
            if label >= self.spec.n_classes {
                return Err(ModelError::BadBatch {
                    detail: format!("label {label} >= n_classes {}", self.spec.n_classes),
                });
            }
            // Forward pass, keeping every post-activation.
            let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layer_count + 1);
            acts.push(batch.features(i).to_vec());
            for l in 0..layer_count {
                let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
                let w = params.layers()[2 * l].as_slice();
                let b = params.layers()[2 * l + 1].as_slice();
                let prev = &acts[l];
                let mut z = vec![0.0; fan_out];
                for r in 0..fan_out {
                    let mut acc = b[r];
                    let row = &w[r * fan_in..(r + 1) * fan_in];
                    for (wv, av) in row.iter().zip(prev) {
                        acc += wv * av;
                    }
                    z[r] = acc;
                }
                if l + 1 < layer_count {
                    for v in z.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                acts.push(z);
            }

            // Max-shifted log-sum-exp cross-entropy.
            let logits = &acts[layer_count];
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
            total_loss += max + sum_exp.ln() - logits[label];

            // Backward pass. delta starts as softmax - onehot.
            let mut delta: Vec<f64> = logits.iter().map(|&z| (z - max).exp() / sum_exp).collect();
            delta[label] -= 1.0;
            for l in (0..layer_count).rev() {
                let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
                let w = params.layers()[2 * l].as_slice();
                let prev = &acts[l];
                let (gw, gb) = {
                    let (head, tail) = grads.split_at_mut(2 * l + 1);
                    (&mut head[2 * l], &mut tail[0])
                };
                for r in 0..fan_out {
                    let d = delta[r];
                    gb[r] += d;
                    let row = &mut gw[r * fan_in..(r + 1) * fan_in];
                    for (gv, av) in row.iter_mut().zip(prev) {
                        *gv += d * av;
                    }
                }
                if l > 0 {
                    let mut next = vec![0.0; fan_in];
                    for (c, nv) in next.iter_mut().enumerate() {
                        if prev[c] > 0.0 {
                            let mut acc = 0.0;
                            for (r, &d) in delta.iter().enumerate() {
                                acc += w[r * fan_in + c] * d;
                            }
                            *nv = acc;
                        }
                    }
                    delta = next;
                }
            }
        }

        let scale = 1.0 / batch.len() as f64;
        let loss = total_loss * scale;
        if !loss.is_finite() {
            return Err(ModelError::NonFinite {
                place: "loss".into(),
            });
        }
        let layers: Result<Vec<FlatVec>, _> = grads
            .into_iter()
            .map(|mut g| {
                for v in g.iter_mut() {
                    *v *= scale;
                }
                FlatVec::new(g)
            })
            .collect();
        let layers = layers.map_err(|_| ModelError::NonFinite {
            place: "gradient".into(),
        })?;
        Ok((
            loss,
            GradientSet::from_parts_unchecked(params.layer_ids().to_vec(), layers),
        ))
    }

    /// Top-1 accuracy with ties broken toward the lowest class index.
    pub fn accuracy(&self, params: &ParamSet, data: &impl Samples) -> f64 {
        let mut correct = 0usize;
        for i in 0..data.len() {
            let logits = self.forward_logits(params, data.features(i));
            let mut best = 0;
            for (c, &z) in logits.iter().enumerate() {
                if z > logits[best] {
                    best = c;
                }
            }
            if best == data.label(i) {
                correct += 1;
            }
        }
        correct as f64 / data.len() as f64
    }
}

/// `L(w) = 0.5 w^T A w` with diagonal positive-definite `A`. The
/// smoothness constant `beta` is the largest diagonal entry, and the
/// gradient `A w` is exactly `beta`-Lipschitz.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    diag: Vec<f64>,
    beta: f64,
}

impl QuadraticProblem {
    pub fn diagonal(diag: Vec<f64>) -> Result<Self, ModelError> {
        if diag.is_empty() {
            return Err(ModelError::InvalidSpec {
                detail: "empty diagonal".into(),
            });
        }
        if diag.iter().any(|&d| !d.is_finite() || d <= 0.0) {
            return Err(ModelError::InvalidSpec {
                detail: format!("diagonal {diag:?} must be positive and finite"),
            });
        }
        let beta = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { diag, beta })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Largest eigenvalue of `A`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn loss(&self, w: &FlatVec) -> f64 {
        0.5 * w
            .iter()
            .zip(&self.diag)
            .map(|(x, a)| a * x * x)
            .sum::<f64>()
    }

    /// Returns `(0.5 w^T A w, A w)`.
    pub fn loss_and_grad(&self, w: &FlatVec) -> (f64, FlatVec) {
        assert_eq!(w.len(), self.diag.len(), "dimension mismatch");
        let grad = FlatVec::from_raw(w.iter().zip(&self.diag).map(|(x, a)| a * x).collect());
        (self.loss(w), grad)
    }
}

const SNAPSHOT_HEADER: &str = "zsharp-params v1";

/// Writes a parameter snapshot. The format is line-oriented text:
///
/// ```text
/// zsharp-params v1
/// layers <count>
/// layer <id> <len>
/// <len space-separated values>
/// ...
/// ```
///
/// Values are printed with shortest round-trip formatting, so loading
/// reproduces the exact bits.
pub fn save_params(path: &Path, params: &ParamSet) -> Result<(), ModelError> {
    let mut out = String::new();
    out.push_str(SNAPSHOT_HEADER);
    out.push('\n');
    out.push_str(&format!("layers {}\n", params.layers().len()));
    for (id, layer) in params.layer_ids().iter().zip(params.layers()) {
        if id.chars().any(char::is_whitespace) {
            return Err(ModelError::Snapshot {
                detail: format!("layer id {id:?} has whitespace"),
            });
        }
        out.push_str(&format!("layer {id} {}\n", layer.len()));
        let mut first = true;
        for v in layer.iter() {
            if !first {
                out.push(' ');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamSet, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != SNAPSHOT_HEADER {
        return Err(ModelError::Snapshot {
            detail: format!("unknown header {header:?}"),
        });
    }
    let count_line = lines.next().ok_or_else(|| ModelError::Snapshot {
        detail: "missing layer count".into(),
    })?;
    let count: usize = count_line
        .strip_prefix("layers ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ModelError::Snapshot {
            detail: format!("bad count line {count_line:?}"),
        })?;
    let mut ids = Vec::with_capacity(count);
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let meta = lines.next().ok_or_else(|| ModelError::Snapshot {
            detail: "truncated snapshot".into(),
        })?;
        let mut parts = meta.split_whitespace();
        let (tag, id, len) = (parts.next(), parts.next(), parts.next());
        if tag != Some("layer") {
            return Err(ModelError::Snapshot {
                detail: format!("bad layer line {meta:?}"),
            });
        }
        let id = id.ok_or_else(|| ModelError::Snapshot {
            detail: "missing layer id".into(),
        })?;
        let len: usize = len
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ModelError::Snapshot {
                detail: format!("bad length in {meta:?}"),
            })?;
        let values_line = lines.next().ok_or_else(|| ModelError::Snapshot {
            detail: "missing values line".into(),
        })?;
        let values: Result<Vec<f64>, _> = values_line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect();
        let values = values.map_err(|e| ModelError::Snapshot {
            detail: format!("bad value: {e}"),
        })?;
        if values.len() != len {
            return Err(ModelError::Snapshot {
                detail: format!("layer {id}: expected {len} values, found {}", values.len()),
            });
        }
        ids.push(id.to_string());
        layers.push(FlatVec::new(values).map_err(|e| ModelError::Snapshot {
            detail: format!("layer {id}: {e}"),
        })?);
    }
    ParamSet::new(ids, layers).map_err(|e| ModelError::Snapshot {
        detail: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::*;

    fn toy_batch(n: usize, m: usize, n_classes: usize, seed: u64) -> Dataset {
        toy_batch_scaled(n, m, n_classes, seed, 1.0)
    }

    fn toy_batch_scaled(n: usize, m: usize, n_classes: usize, seed: u64, scale: f64) -> Dataset {
        let mut rng = SeededRng::new(seed);
        let features: Vec<f64> = (0..n * m).map(|_| scale * rng.next_gaussian()).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
        Dataset::new(features, labels, m, n_classes).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let mlp = Mlp::new(MlpSpec::new(2, vec![4], 2, 7)).unwrap();
        let a = mlp.init_params();
        let b = mlp.init_params();
        assert_eq!(a, b);
        assert!(a.layers()[1].iter().all(|&v| v == 0.0));
        assert!(a.layers()[3].iter().all(|&v| v == 0.0));
        assert_eq!(a.layer_ids()[0], "fc1.weight");
        assert_eq!(a.layer_ids()[3], "fc2.bias");
    }

    #[test]
    fn init_variance_matches_he() {
        let mlp = Mlp::new(MlpSpec::new(256, vec![40], 2, 3)).unwrap();
        let params = mlp.init_params();
        let w = &params.layers()[0]; // 256 * 40 = 10_240 samples
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let expected = 2.0 / 256.0;
        assert!(
            (var - expected).abs() < 0.2 * expected,
            "var {var} vs {expected}"
        );
    }

    #[test]
    fn untrained_loss_is_near_ln2() {
        // Small-scale features keep the untrained logits near uniform,
        // the regime where the ln(2) baseline applies.
        let mlp = Mlp::new(MlpSpec::new(4, vec![8], 2, 5)).unwrap();
        let params = mlp.init_params();
        let batch = toy_batch_scaled(256, 4, 2, 6, 0.3);
        let (loss, _) = mlp.loss_and_grad(&params, &batch).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 0.15, "loss {loss}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mlp = Mlp::new(MlpSpec::new(2, vec![3], 2, 11)).unwrap();
        let params = mlp.init_params();
        let batch = toy_batch(1, 2, 2, 12);
        let (_, grads) = mlp.loss_and_grad(&params, &batch).unwrap();
        let h = 1e-5;
        for (li, layer) in params.layers().iter().enumerate() {
            for k in 0..layer.len() {
                let mut plus = params.clone();
                plus.layers_mut()[li].as_mut_slice()[k] += h;
                let mut minus = params.clone();
                minus.layers_mut()[li].as_mut_slice()[k] -= h;
                let (lp, _) = mlp.loss_and_grad(&plus, &batch).unwrap();
                let (lm, _) = mlp.loss_and_grad(&minus, &batch).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let analytic = grads.layers()[li][k];
                if analytic.abs() < 1e-8 {
                    assert!((fd - analytic).abs() < 1e-8, "layer {li} coord {k}");
                } else {
                    let rel = (fd - analytic).abs() / analytic.abs();
                    assert!(rel < 1e-5, "layer {li} coord {k} rel {rel}");
                }
            }
        }
    }

    #[test]
    fn duplicated_batch_leaves_loss_and_grads_unchanged() {
        let mlp = Mlp::new(MlpSpec::new(3, vec![5], 3, 21)).unwrap();
        let params = mlp.init_params();
        let base = toy_batch(6, 3, 3, 22);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for round in 0..2 {
            let _ = round;
            for i in 0..base.len() {
                features.extend_from_slice(base.features(i));
                labels.push(base.label(i));
            }
        }
        let doubled = Dataset::new(features, labels, 3, 3).unwrap();
        let (l1, g1) = mlp.loss_and_grad(&params, &base).unwrap();
        let (l2, g2) = mlp.loss_and_grad(&params, &doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter_flat().zip(g2.iter_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_is_non_negative_and_exact_at_uniform_logits() {
        // Zero parameters force uniform logits: loss is exactly ln(n_classes).
        let mlp = Mlp::new(MlpSpec::new(2, vec![], 4, 0)).unwrap();
        let ids = vec!["fc1.weight".to_string(), "fc1.bias".to_string()];
        let zeros = ParamSet::new(ids, vec![FlatVec::zeros(8), FlatVec::zeros(4)]).unwrap();
        let ds = toy_batch(16, 2, 4, 8);
        let (uniform_loss, _) = mlp.loss_and_grad(&zeros, &ds).unwrap();
        assert!((uniform_loss - 4.0f64.ln()).abs() < 1e-12);

        let trained = Mlp::new(MlpSpec::new(2, vec![5], 3, 9)).unwrap();
        let params = trained.init_params();
        for seed in 0..20 {
            let batch = toy_batch(8, 2, 3, seed);
            let (loss, _) = trained.loss_and_grad(&params, &batch).unwrap();
            assert!(loss >= 0.0, "negative cross-entropy {loss}");
        }
    }

    #[test]
    fn accuracy_tie_breaks_to_class_zero() {
        // All-zero parameters force equal logits for every class.
        let mlp = Mlp::new(MlpSpec::new(2, vec![], 3, 0)).unwrap();
        let ids = vec!["fc1.weight".to_string(), "fc1.bias".to_string()];
        let zeros = ParamSet::new(ids, vec![FlatVec::zeros(6), FlatVec::zeros(3)]).unwrap();
        let ds = toy_batch(9, 2, 3, 1);
        let acc = mlp.accuracy(&zeros, &ds);
        let class0 = ds.labels().iter().filter(|&&l| l == 0).count() as f64;
        assert!((acc - class0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn accuracy_counts_correct_fraction() {
        let mlp = Mlp::new(MlpSpec::new(2, vec![8], 2, 2)).unwrap();
        let params = mlp.init_params();
        let ds = toy_batch(10, 2, 2, 3);
        // Relabel the dataset with the model's own argmax; accuracy must be 1.
        let labels: Vec<usize> = (0..ds.len())
            .map(|i| {
                let logits = mlp.forward_logits(&params, ds.features(i));
                if logits[1] > logits[0] {
                    1
                } else {
                    0
                }
            })
            .collect();
        let relabeled = Dataset::new(
            (0..ds.len())
                .flat_map(|i| ds.features(i).to_vec())
                .collect(),
            labels,
            2,
            2,
        )
        .unwrap();
        assert_eq!(mlp.accuracy(&params, &relabeled), 1.0);
    }

    #[test]
    fn quadratic_closed_form() {
        let prob = QuadraticProblem::diagonal(vec![1.0, 10.0]).unwrap();
        let (loss, grad) = prob.loss_and_grad(&FlatVec::new(vec![1.0, 1.0]).unwrap());
        assert_eq!(loss, 5.5);
        assert_eq!(grad.as_slice(), &[1.0, 10.0]);
        let (l0, g0) = prob.loss_and_grad(&FlatVec::zeros(2));
        assert_eq!(l0, 0.0);
        assert!(g0.iter().all(|&v| v == 0.0));
        assert_eq!(prob.beta(), 10.0);
    }

    #[test]
    fn quadratic_gradient_is_beta_lipschitz() {
        let prob = QuadraticProblem::diagonal(vec![1.0, 10.0]).unwrap();
        let mut rng = SeededRng::new(17);
        for _ in 0..1000 {
            let u = FlatVec::new(vec![rng.next_gaussian(), rng.next_gaussian()]).unwrap();
            let v = FlatVec::new(vec![rng.next_gaussian(), rng.next_gaussian()]).unwrap();
            let (_, gu) = prob.loss_and_grad(&u);
            let (_, gv) = prob.loss_and_grad(&v);
            let grad_dist: f64 = gu
                .iter()
                .zip(gv.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let point_dist: f64 = u
                .iter()
                .zip(v.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(grad_dist <= 10.0 * point_dist + 1e-12);
        }
    }

    #[test]
    fn snapshot_round_trips_exact_bits() {
        let mlp = Mlp::new(MlpSpec::new(3, vec![4, 2], 2, 31)).unwrap();
        let params = mlp.init_params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.txt");
        save_params(&path, &params).unwrap();
        let loaded = load_params(&path).unwrap();
        assert_eq!(loaded.layer_ids(), params.layer_ids());
        for (a, b) in loaded.iter_flat().zip(params.iter_flat()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn snapshot_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "not a snapshot\n").unwrap();
        assert!(matches!(
            load_params(&path),
            Err(ModelError::Snapshot { .. })
        ));
    }

    #[test]
    fn bad_batch_is_rejected() {
        let mlp = Mlp::new(MlpSpec::new(3, vec![4], 2, 0)).unwrap();
        let params = mlp.init_params();
        let wrong_dim = toy_batch(4, 2, 2, 1);
        assert!(matches!(
            mlp.loss_and_grad(&params, &wrong_dim),
            Err(ModelError::BadBatch { .. })
        ));
    }
}
