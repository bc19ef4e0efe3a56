//! Weight graph shared by the ANN and SNN execution paths.
//!
//! A [`ModelSpec`] is an ordered chain of layers. Dense and conv layers may
//! carry QCFS parameters; those are the "activated" layers, and after
//! conversion they also carry a spiking neuron. The final layer never has an
//! activation and produces the logits.

mod file;
mod snn;
mod tensor;

pub use file::{model_hash, LayerRecord, ModelFile, MODEL_FORMAT_VERSION};
pub use snn::{phi, snn_forward, Decoding, Encoding, LayerTrace, NeuronKind, SimConfig, Trace, V0Policy};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

use crate::activation::{qcfs, QcfsParams};
use crate::error::{Error, Result};
use crate::neuron::NeuronModel;

/// Linear operation performed by a layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    /// `y = W x + b`, `W` stored row-major as `[out, in]`.
    Dense {
        in_features: usize,
        out_features: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Cross-correlation over `[C, H, W]` inputs with zero padding.
    /// `W` is stored row-major as `[out, in, kh, kw]`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    AvgPool2d {
        kernel: [usize; 2],
        stride: usize,
    },
    Flatten,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::AvgPool2d { .. } => "avgpool2d",
            LayerKind::Flatten => "flatten",
        }
    }

    pub fn dense(in_features: usize, out_features: usize, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        LayerKind::Dense {
            in_features,
            out_features,
            weights,
            bias,
        }
    }

    fn is_affine(&self) -> bool {
        matches!(self, LayerKind::Dense { .. } | LayerKind::Conv2d { .. })
    }

    /// Weights and bias of an affine layer.
    pub fn parameters(&self) -> Option<(&[f64], &[f64])> {
        match self {
            LayerKind::Dense { weights, bias, .. } | LayerKind::Conv2d { weights, bias, .. } => {
                Some((weights, bias))
            }
            _ => None,
        }
    }

    fn check_parameters(&self, index: usize) -> Result<()> {
        let (expected_w, expected_b, w, b) = match self {
            LayerKind::Dense {
                in_features,
                out_features,
                weights,
                bias,
            } => (in_features * out_features, *out_features, weights, bias),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                weights,
                bias,
                ..
            } => {
                if *stride == 0 || kernel[0] == 0 || kernel[1] == 0 {
                    return Err(Error::InvalidModel(format!(
                        "layer {index} (conv2d): kernel and stride must be positive"
                    )));
                }
                (
                    out_channels * in_channels * kernel[0] * kernel[1],
                    *out_channels,
                    weights,
                    bias,
                )
            }
            LayerKind::AvgPool2d { kernel, stride } => {
                if *stride == 0 || kernel[0] == 0 || kernel[1] == 0 {
                    return Err(Error::InvalidModel(format!(
                        "layer {index} (avgpool2d): kernel and stride must be positive"
                    )));
                }
                return Ok(());
            }
            LayerKind::Flatten => return Ok(()),
        };
        if w.len() != expected_w || b.len() != expected_b {
            return Err(Error::InvalidModel(format!(
                "layer {index} ({}): expected {expected_w} weights and {expected_b} biases, got {} and {}",
                self.name(),
                w.len(),
                b.len()
            )));
        }
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "layer {index} ({}): non-finite parameter",
                self.name()
            )));
        }
        Ok(())
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| Error::ShapeMismatch {
            layer: index,
            kind: self.name(),
            expected,
            found: input.to_vec(),
        };
        match self {
            LayerKind::Dense {
                in_features,
                out_features,
                ..
            } => {
                if input != [*in_features] {
                    return Err(mismatch(vec![*in_features]));
                }
                Ok(vec![*out_features])
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                if input.len() != 3 || input[0] != *in_channels {
                    return Err(mismatch(vec![*in_channels, 0, 0]));
                }
                let out_dim = |n: usize, k: usize| -> Option<usize> {
                    let padded = n + 2 * padding;
                    (padded >= k).then(|| (padded - k) / stride + 1)
                };
                match (out_dim(input[1], kernel[0]), out_dim(input[2], kernel[1])) {
                    (Some(h), Some(w)) => Ok(vec![*out_channels, h, w]),
                    _ => Err(mismatch(vec![*in_channels, kernel[0], kernel[1]])),
                }
            }
            LayerKind::AvgPool2d { kernel, stride } => {
                if input.len() != 3 || input[1] < kernel[0] || input[2] < kernel[1] {
                    return Err(mismatch(vec![input.first().copied().unwrap_or(0), kernel[0], kernel[1]]));
                }
                Ok(vec![
                    input[0],
                    (input[1] - kernel[0]) / stride + 1,
                    (input[2] - kernel[1]) / stride + 1,
                ])
            }
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Apply the linear part of the layer. `index` is only used in
    /// diagnostics.
    pub fn forward(&self, index: usize, input: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(index, input.shape())?;
        Ok(match self {
            LayerKind::Dense {
                in_features,
                weights,
                bias,
                ..
            } => {
                let x = input.data();
                let out = weights
                    .chunks_exact(*in_features)
                    .zip(bias)
                    .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v))
                    .collect();
                Tensor::new(out_shape, out)
            }
            LayerKind::Conv2d {
                in_channels,
                kernel,
                stride,
                padding,
                weights,
                bias,
                ..
            } => conv2d(input, &out_shape, *in_channels, *kernel, *stride, *padding, weights, bias),
            LayerKind::AvgPool2d { kernel, stride } => avgpool2d(input, &out_shape, *kernel, *stride),
            LayerKind::Flatten => input.clone().reshaped(out_shape),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d(
    input: &Tensor,
    out_shape: &[usize],
    in_channels: usize,
    kernel: [usize; 2],
    stride: usize,
    padding: usize,
    weights: &[f64],
    bias: &[f64],
) -> Tensor {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let (oc, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
    let [kh, kw] = kernel;
    let x = input.data();
    let mut out = Vec::with_capacity(oc * oh * ow);
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[o];
                for c in 0..in_channels {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let wi = ((o * in_channels + c) * kh + ky) * kw + kx;
                            let xi = (c * h + iy as usize) * w + ix as usize;
                            acc += weights[wi] * x[xi];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor::new(out_shape.to_vec(), out)
}

fn avgpool2d(input: &Tensor, out_shape: &[usize], kernel: [usize; 2], stride: usize) -> Tensor {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let (ch, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
    let [kh, kw] = kernel;
    let area = (kh * kw) as f64;
    let x = input.data();
    let mut out = Vec::with_capacity(ch * oh * ow);
    for c in 0..ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ky in 0..kh {
                    for kx in 0..kw {
                        acc += x[(c * h + oy * stride + ky) * w + ox * stride + kx];
                    }
                }
                out.push(acc / area);
            }
        }
    }
    Tensor::new(out_shape.to_vec(), out)
}

/// One layer of the weight graph.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// QCFS parameters of an activated layer.
    pub act: Option<QcfsParams>,
    /// Spiking neuron assigned by conversion.
    pub neuron: Option<NeuronModel>,
}

impl LayerSpec {
    pub fn linear(kind: LayerKind) -> Self {
        Self {
            kind,
            act: None,
            neuron: None,
        }
    }

    pub fn activated(kind: LayerKind, act: QcfsParams) -> Self {
        Self {
            kind,
            act: Some(act),
            neuron: None,
        }
    }

    pub fn is_activated(&self) -> bool {
        self.act.is_some()
    }
}

/// Provenance carried alongside the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    /// Global QCFS quantization level `L`.
    pub levels: u32,
    pub layers: Vec<LayerSpec>,
    pub metadata: Metadata,
}

impl ModelSpec {
    pub fn new(input_shape: Vec<usize>, levels: u32, layers: Vec<LayerSpec>) -> Result<Self> {
        let model = Self {
            input_shape,
            levels,
            layers,
            metadata: Metadata::default(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Check parameter counts, the shape chain, activation placement and
    /// neuron consistency.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidModel("model has no layers".into()));
        }
        if self.levels < 1 {
            return Err(Error::InvalidModel("L must be at least 1".into()));
        }
        if self.layers.last().is_some_and(LayerSpec::is_activated) {
            return Err(Error::InvalidModel(
                "final layer must not have an activation".into(),
            ));
        }
        let mut shape = self.input_shape.clone();
        let mut group_size: Option<Option<u32>> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.kind.check_parameters(i)?;
            shape = layer.kind.output_shape(i, &shape)?;
            if let Some(act) = &layer.act {
                if !layer.kind.is_affine() {
                    return Err(Error::InvalidModel(format!(
                        "layer {i} ({}) cannot carry an activation",
                        layer.kind.name()
                    )));
                }
                if !(act.lambda > 0.0 && act.lambda.is_finite()) {
                    return Err(Error::MissingLambda { layer: i });
                }
                if act.levels != self.levels {
                    return Err(Error::InvalidModel(format!(
                        "layer {i}: quantization level {} differs from model L = {}",
                        act.levels, self.levels
                    )));
                }
            }
            match (&layer.neuron, layer.is_activated()) {
                (Some(_), false) => {
                    return Err(Error::InvalidModel(format!(
                        "layer {i} has a neuron but no activation"
                    )))
                }
                (Some(n), true) => {
                    let tau = match n {
                        NeuronModel::If(_) => None,
                        NeuronModel::Gn(g) => Some(g.tau()),
                    };
                    match group_size {
                        None => group_size = Some(tau),
                        Some(prev) if prev != tau => {
                            return Err(Error::InvalidModel(
                                "all spiking layers must use the same neuron kind and tau".into(),
                            ))
                        }
                        _ => {}
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.kind.output_shape(i, &shape)?;
        }
        Ok(shape)
    }

    /// Indices of layers with an activation.
    pub fn activated_layers(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_activated())
            .map(|(i, _)| i)
    }

    /// True when every activated layer carries a neuron.
    pub fn is_converted(&self) -> bool {
        self.layers
            .iter()
            .all(|l| !l.is_activated() || l.neuron.is_some())
    }

    /// Group size shared by the GN layers, if the model uses group neurons.
    pub fn group_size(&self) -> Option<u32> {
        self.layers.iter().find_map(|l| match &l.neuron {
            Some(NeuronModel::Gn(g)) => Some(g.tau()),
            _ => None,
        })
    }

    pub(crate) fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                kind: self.layers[0].kind.name(),
                expected: self.input_shape.clone(),
                found: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Compare layer kinds and shapes, ignoring parameter values.
    pub fn same_architecture(&self, other: &ModelSpec) -> Result<()> {
        if self.input_shape != other.input_shape {
            return Err(Error::ArchitectureMismatch(format!(
                "input shapes {:?} and {:?}",
                self.input_shape, other.input_shape
            )));
        }
        if self.layers.len() != other.layers.len() {
            return Err(Error::ArchitectureMismatch(format!(
                "{} layers vs {} layers",
                self.layers.len(),
                other.layers.len()
            )));
        }
        let mut shape = self.input_shape.clone();
        for (i, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            let sa = a.kind.output_shape(i, &shape)?;
            let sb = b.kind.output_shape(i, &shape)?;
            if a.kind.name() != b.kind.name() || sa != sb || a.is_activated() != b.is_activated() {
                return Err(Error::ArchitectureMismatch(format!(
                    "layer {i}: {} {:?} vs {} {:?}",
                    a.kind.name(),
                    sa,
                    b.kind.name(),
                    sb
                )));
            }
            shape = sa;
        }
        Ok(())
    }
}

/// Run the ANN: QCFS on every activated layer, raw affine output on the rest.
pub fn ann_forward(model: &ModelSpec, input: &Tensor) -> Result<Vec<f64>> {
    model.check_input(input)?;
    let mut x = input.clone();
    for (i, layer) in model.layers.iter().enumerate() {
        let z = layer.kind.forward(i, &x)?;
        x = match &layer.act {
            Some(params) => z.map(|v| qcfs(v, params)),
            None => z,
        };
    }
    Ok(x.into_data())
}
