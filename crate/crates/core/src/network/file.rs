//! JSON model file.
//!
//! ```json
//! {"version": 1, "input_shape": [2], "L": 4,
//!  "layers": [{"kind": "dense", "shape": [16, 2], "weights": [...], "bias": [...],
//!              "lambda": 1.3, "theta": 1.3, "tau": 4}, ...]}
//! ```
//!
//! Weights are flat row-major. `theta` appears once a layer is converted and
//! `tau` once its IF neurons are replaced by group neurons.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LayerKind, LayerSpec, Metadata, ModelSpec};
use crate::activation::QcfsParams;
use crate::error::{Error, Result};
use crate::neuron::{GnConfig, IfConfig, NeuronModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub kind: String,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bias: Vec<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub input_shape: Vec<usize>,
    #[serde(rename = "L")]
    pub levels: u32,
    pub layers: Vec<LayerRecord>,
    #[serde(default)]
    pub metadata: Metadata,
}

fn shape_error(index: usize, kind: &str, shape: &[usize]) -> Error {
    Error::InvalidModel(format!(
        "layer {index} ({kind}): malformed shape {shape:?}"
    ))
}

impl LayerRecord {
    fn from_layer(layer: &LayerSpec) -> Self {
        let (shape, weights, bias, stride, padding) = match &layer.kind {
            LayerKind::Dense {
                in_features,
                out_features,
                weights,
                bias,
            } => (vec![*out_features, *in_features], weights.clone(), bias.clone(), None, None),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weights,
                bias,
            } => (
                vec![*out_channels, *in_channels, kernel[0], kernel[1]],
                weights.clone(),
                bias.clone(),
                Some(*stride),
                Some(*padding),
            ),
            LayerKind::AvgPool2d { kernel, stride } => {
                (kernel.to_vec(), Vec::new(), Vec::new(), Some(*stride), None)
            }
            LayerKind::Flatten => (Vec::new(), Vec::new(), Vec::new(), None, None),
        };
        let (theta, tau) = match &layer.neuron {
            Some(NeuronModel::If(c)) => (Some(c.theta), None),
            Some(NeuronModel::Gn(c)) => (Some(c.theta()), Some(c.tau())),
            None => (None, None),
        };
        Self {
            kind: layer.kind.name().to_string(),
            shape,
            weights,
            bias,
            lambda: layer.act.map(|a| a.lambda),
            theta,
            tau,
            stride,
            padding,
        }
    }

    fn into_layer(self, index: usize, levels: u32) -> Result<LayerSpec> {
        let kind = match self.kind.as_str() {
            "dense" => match self.shape[..] {
                [out_features, in_features] => LayerKind::Dense {
                    in_features,
                    out_features,
                    weights: self.weights,
                    bias: self.bias,
                },
                _ => return Err(shape_error(index, "dense", &self.shape)),
            },
            "conv2d" => match self.shape[..] {
                [out_channels, in_channels, kh, kw] => LayerKind::Conv2d {
                    in_channels,
                    out_channels,
                    kernel: [kh, kw],
                    stride: self.stride.unwrap_or(1),
                    padding: self.padding.unwrap_or(0),
                    weights: self.weights,
                    bias: self.bias,
                },
                _ => return Err(shape_error(index, "conv2d", &self.shape)),
            },
            "avgpool2d" => match self.shape[..] {
                [kh, kw] => LayerKind::AvgPool2d {
                    kernel: [kh, kw],
                    stride: self.stride.unwrap_or(kh),
                },
                _ => return Err(shape_error(index, "avgpool2d", &self.shape)),
            },
            "flatten" => LayerKind::Flatten,
            other => {
                return Err(Error::InvalidModel(format!(
                    "layer {index}: unknown layer kind {other:?}"
                )))
            }
        };
        let act = self
            .lambda
            .map(|lambda| QcfsParams::new(lambda, levels))
            .transpose()
            .map_err(|_| Error::MissingLambda { layer: index })?;
        let neuron = match (self.theta, self.tau) {
            (None, None) => None,
            (Some(theta), None) => Some(NeuronModel::If(IfConfig::new(theta)?)),
            (Some(theta), Some(tau)) => Some(NeuronModel::Gn(GnConfig::new(theta, tau)?)),
            (None, Some(_)) => {
                return Err(Error::InvalidModel(format!(
                    "layer {index}: tau given without theta"
                )))
            }
        };
        Ok(LayerSpec { kind, act, neuron })
    }
}

impl ModelFile {
    pub fn from_model(model: &ModelSpec) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            input_shape: model.input_shape.clone(),
            levels: model.levels,
            layers: model.layers.iter().map(LayerRecord::from_layer).collect(),
            metadata: model.metadata.clone(),
        }
    }

    pub fn into_model(self) -> Result<ModelSpec> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported model format version {}",
                self.version
            )));
        }
        let levels = self.levels;
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.into_layer(i, levels))
            .collect::<Result<Vec<_>>>()?;
        let model = ModelSpec {
            input_shape: self.input_shape,
            levels,
            layers,
            metadata: self.metadata,
        };
        model.validate()?;
        Ok(model)
    }
}

impl ModelSpec {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&ModelFile::from_model(self))
            .expect("model serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(text)?.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Short content hash of the serialized model, used in report file names.
pub fn model_hash(model: &ModelSpec) -> String {
    let digest = Sha256::digest(model.to_json().as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelSpec {
        let mut model = ModelSpec::new(
            vec![1, 4, 4],
            4,
            vec![
                LayerSpec::activated(
                    LayerKind::Conv2d {
                        in_channels: 1,
                        out_channels: 2,
                        kernel: [3, 3],
                        stride: 1,
                        padding: 1,
                        weights: (0..18).map(|i| f64::from(i) * 0.01 - 0.05).collect(),
                        bias: vec![0.1, -0.2],
                    },
                    QcfsParams::new(1.25, 4).unwrap(),
                ),
                LayerSpec::linear(LayerKind::AvgPool2d { kernel: [2, 2], stride: 2 }),
                LayerSpec::linear(LayerKind::Flatten),
                LayerSpec::linear(LayerKind::dense(8, 3, vec![0.1; 24], vec![0.0, 0.1, 0.2])),
            ],
        )
        .unwrap();
        model.metadata.seed = Some(3);
        model
    }

    #[test]
    fn json_round_trip() {
        let model = sample();
        let text = model.to_json();
        assert_eq!(ModelSpec::from_json(&text).unwrap(), model);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["L"], 4);
        assert_eq!(value["layers"][0]["kind"], "conv2d");
        assert!(value["layers"][3]["lambda"].is_null());
        assert!(value["layers"][0].get("theta").is_none());
    }

    #[test]
    fn rejects_bad_files() {
        let mut file = ModelFile::from_model(&sample());
        file.layers[0].tau = Some(2);
        assert!(file.clone().into_model().is_err());

        let mut file = ModelFile::from_model(&sample());
        file.layers[0].lambda = Some(-1.0);
        assert!(matches!(file.into_model(), Err(Error::MissingLambda { layer: 0 })));

        let mut file = ModelFile::from_model(&sample());
        file.layers[3].kind = "maxpool".into();
        assert!(file.into_model().is_err());

        let mut file = ModelFile::from_model(&sample());
        file.version = 9;
        assert!(file.into_model().is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = sample();
        let mut b = sample();
        assert_eq!(model_hash(&a), model_hash(&b));
        assert_eq!(model_hash(&a).len(), 12);
        if let LayerKind::Dense { weights, .. } = &mut b.layers[3].kind {
            weights[0] = 0.2;
        }
        assert_ne!(model_hash(&a), model_hash(&b));
    }
}
