//! Mini-batch gradient descent for dense QCFS networks.
//!
//! The backward pass treats QCFS as its clip envelope (straight-through
//! estimator): gradient 1 on `0 < z < lambda`, 0 elsewhere. `lambda` is not
//! learned; it is recalibrated to the largest observed pre-activation of each
//! layer before training and after every epoch.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::{qcfs, qcfs_ste_grad, QcfsParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{LayerKind, LayerSpec, Metadata, ModelSpec, Tensor};

/// Smallest lambda assigned by calibration.
pub const LAMBDA_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub levels: u32,
    pub seed: u64,
    /// Layer widths including input and output, e.g. `[2, 16, 2]`.
    pub widths: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            learning_rate: 0.1,
            batch_size: 16,
            levels: 4,
            seed: 0,
            widths: vec![2, 16, 2],
        }
    }
}

impl TrainConfig {
    fn validate(&self, data: &Dataset) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "architecture needs at least two non-zero widths, got {:?}",
                self.widths
            )));
        }
        if self.epochs < 1 || self.batch_size < 1 || self.levels < 1 {
            return Err(Error::InvalidConfig(
                "epochs, batch size and L must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if data.is_empty() {
            return Err(Error::Dataset("training set is empty".into()));
        }
        if data.feature_len() != self.widths[0] {
            return Err(Error::Dataset(format!(
                "samples have {} features but the input width is {}",
                data.feature_len(),
                self.widths[0]
            )));
        }
        let outputs = *self.widths.last().unwrap();
        if data.num_classes() > outputs {
            return Err(Error::Dataset(format!(
                "labels reach class {} but the model has {outputs} outputs",
                data.num_classes() - 1
            )));
        }
        Ok(())
    }
}

/// Trained model plus the mean training loss of every epoch.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ModelSpec,
    pub epoch_losses: Vec<f64>,
}

struct DenseParams {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

struct Mlp {
    layers: Vec<DenseParams>,
    lambdas: Vec<f64>,
    levels: u32,
}

struct Cache {
    /// Input of every layer (activations of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    fn init(widths: &[usize], levels: u32, rng: &mut ChaCha8Rng) -> Self {
        let layers: Vec<DenseParams> = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                DenseParams {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out)
                        .map(|_| rng.gen_range(-limit..=limit))
                        .collect(),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        let hidden = layers.len() - 1;
        Self {
            layers,
            lambdas: vec![1.0; hidden],
            levels,
        }
    }

    fn params(&self, l: usize) -> QcfsParams {
        QcfsParams {
            lambda: self.lambdas[l],
            levels: self.levels,
        }
    }

    fn affine(layer: &DenseParams, x: &[f64]) -> Vec<f64> {
        layer
            .weights
            .chunks_exact(layer.inputs)
            .zip(&layer.bias)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v))
            .collect()
    }

    fn forward(&self, x: &[f64]) -> Cache {
        let mut cache = Cache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &a);
            cache.inputs.push(a);
            a = if l < last {
                let p = self.params(l);
                z.iter().map(|&v| qcfs(v, &p)).collect()
            } else {
                z.clone()
            };
            cache.pre.push(z);
        }
        cache
    }

    fn calibrate(&mut self, data: &Dataset) {
        let mut acts: Vec<Vec<f64>> = (0..data.len()).map(|i| data.features(i).to_vec()).collect();
        for l in 0..self.lambdas.len() {
            let pre: Vec<Vec<f64>> = acts.iter().map(|a| Self::affine(&self.layers[l], a)).collect();
            let max = pre.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            self.lambdas[l] = max.max(LAMBDA_FLOOR);
            let p = self.params(l);
            acts = pre
                .into_iter()
                .map(|z| z.into_iter().map(|v| qcfs(v, &p)).collect())
                .collect();
        }
    }

    fn into_model(self, input_width: usize, seed: u64) -> Result<ModelSpec> {
        let last = self.layers.len() - 1;
        let levels = self.levels;
        let lambdas = self.lambdas;
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(l, p)| {
                let kind = LayerKind::dense(p.inputs, p.outputs, p.weights, p.bias);
                if l < last {
                    Ok(LayerSpec::activated(kind, QcfsParams::new(lambdas[l], levels)?))
                } else {
                    Ok(LayerSpec::linear(kind))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = ModelSpec::new(vec![input_width], levels, layers)?;
        model.metadata = Metadata {
            seed: Some(seed),
            provenance: Some("qcfs-mlp minibatch-sgd ste max-calibrated-lambda".into()),
        };
        Ok(model)
    }
}

fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.into_iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Train a dense QCFS network and return it with its loss history.
pub fn train_with_history(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mlp = Mlp::init(&cfg.widths, cfg.levels, &mut rng);
    mlp.calibrate(data);

    let depth = mlp.layers.len();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_w: Vec<Vec<f64>> = mlp.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
            let mut grad_b: Vec<Vec<f64>> = mlp.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();
            for &i in batch {
                let cache = mlp.forward(data.features(i));
                let (loss, mut delta) = softmax_cross_entropy(&cache.pre[depth - 1], data.labels()[i]);
                total_loss += loss;
                for l in (0..depth).rev() {
                    let layer = &mlp.layers[l];
                    if l < depth - 1 {
                        let p = mlp.params(l);
                        for (d, &z) in delta.iter_mut().zip(&cache.pre[l]) {
                            *d *= qcfs_ste_grad(z, &p);
                        }
                    }
                    let input = &cache.inputs[l];
                    for (o, &d) in delta.iter().enumerate() {
                        grad_b[l][o] += d;
                        let row = &mut grad_w[l][o * layer.inputs..(o + 1) * layer.inputs];
                        for (g, &x) in row.iter_mut().zip(input) {
                            *g += d * x;
                        }
                    }
                    if l > 0 {
                        let mut prev = vec![0.0; layer.inputs];
                        for (o, &d) in delta.iter().enumerate() {
                            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                            for (p, &w) in prev.iter_mut().zip(row) {
                                *p += d * w;
                            }
                        }
                        delta = prev;
                    }
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (l, layer) in mlp.layers.iter_mut().enumerate() {
                for (w, g) in layer.weights.iter_mut().zip(&grad_w[l]) {
                    *w -= scale * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(&grad_b[l]) {
                    *b -= scale * g;
                }
            }
        }
        let mean_loss = total_loss / data.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: mean_loss,
            });
        }
        epoch_losses.push(mean_loss);
        mlp.calibrate(data);
    }

    Ok(TrainOutcome {
        model: mlp.into_model(cfg.widths[0], cfg.seed)?,
        epoch_losses,
    })
}

/// Train a dense QCFS network.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<ModelSpec> {
    train_with_history(data, cfg).map(|o| o.model)
}

/// Set every layer's lambda to the largest pre-activation it sees over
/// `sample` (at least [`LAMBDA_FLOOR`]), calibrating front to back.
pub fn calibrate_lambda(model: &ModelSpec, sample: &Dataset) -> Result<ModelSpec> {
    let mut out = model.clone();
    let mut acts: Vec<Tensor> = (0..sample.len()).map(|i| sample.input(i)).collect();
    for (i, layer) in out.layers.iter_mut().enumerate() {
        let pre = acts
            .iter()
            .map(|a| layer.kind.forward(i, a))
            .collect::<Result<Vec<_>>>()?;
        acts = match &mut layer.act {
            Some(act) => {
                let max = pre
                    .iter()
                    .flat_map(|t| t.data().iter().copied())
                    .fold(f64::NEG_INFINITY, f64::max);
                act.lambda = max.max(LAMBDA_FLOOR);
                let p = *act;
                pre.into_iter().map(|t| t.map(|v| qcfs(v, &p))).collect()
            }
            None => pre,
        };
    }
    Ok(out)
}

/// Fraction of samples whose ANN argmax matches the label.
pub fn training_accuracy(model: &ModelSpec, data: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for i in 0..data.len() {
        let logits = crate::network::ann_forward(model, &data.input(i))?;
        if crate::analysis::argmax(&logits) == data.labels()[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}
