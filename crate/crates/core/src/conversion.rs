//! ANN to SNN conversion.
//!
//! [`ann_to_snn`] maps each QCFS threshold `lambda` onto the threshold of an
//! IF neuron. [`replace_if_with_gn`] then swaps every IF neuron for a group
//! neuron of `tau` members with thresholds `theta * i / tau` and group
//! threshold `theta / tau`. Weights and biases are never touched.

use crate::error::{Error, Result};
use crate::network::ModelSpec;
use crate::neuron::{GnConfig, IfConfig, NeuronModel};

/// Assign `theta := lambda` to every activated layer and tag it as an IF
/// spiking layer.
///
/// Every affine layer other than the output layer must carry QCFS parameters.
pub fn ann_to_snn(model: &ModelSpec) -> Result<ModelSpec> {
    model.validate()?;
    let last = model.layers.len() - 1;
    let mut out = model.clone();
    for (i, layer) in out.layers.iter_mut().enumerate() {
        match layer.act {
            Some(act) => layer.neuron = Some(NeuronModel::If(IfConfig::new(act.lambda)?)),
            None if i != last && layer.kind.parameters().is_some() => {
                return Err(Error::MissingLambda { layer: i })
            }
            None => layer.neuron = None,
        }
    }
    Ok(out)
}

/// Replace the IF neurons of a converted model by group neurons with `tau`
/// members.
pub fn replace_if_with_gn(model: &ModelSpec, tau: u32) -> Result<ModelSpec> {
    if tau < 1 {
        return Err(Error::InvalidConfig(format!(
            "tau must be at least 1, got {tau}"
        )));
    }
    let mut out = model.clone();
    for (i, layer) in out.layers.iter_mut().enumerate() {
        if let Some(neuron) = &layer.neuron {
            layer.neuron = Some(NeuronModel::Gn(GnConfig::new(neuron.theta(), tau)?));
        } else if layer.is_activated() {
            return Err(Error::NotConverted { layer: i });
        }
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::QcfsParams;
    use crate::network::{LayerKind, LayerSpec};

    fn two_layer(lambda: f64) -> ModelSpec {
        ModelSpec::new(
            vec![2],
            4,
            vec![
                LayerSpec::activated(
                    LayerKind::dense(2, 3, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6], vec![0.0, 0.1, 0.2]),
                    QcfsParams::new(lambda, 4).unwrap(),
                ),
                LayerSpec::linear(LayerKind::dense(3, 1, vec![1.0, 1.0, 1.0], vec![0.0])),
            ],
        )
        .unwrap()
    }

    #[test]
    fn lambda_maps_to_threshold() {
        let snn = ann_to_snn(&two_layer(2.0)).unwrap();
        assert_eq!(snn.layers[0].neuron, Some(NeuronModel::If(IfConfig { theta: 2.0 })));
        assert_eq!(snn.layers[1].neuron, None);
    }

    #[test]
    fn single_affine_layer_only_gets_tagged() {
        let model = ModelSpec::new(
            vec![2],
            4,
            vec![LayerSpec::linear(LayerKind::dense(2, 1, vec![1.0, 2.0], vec![0.5]))],
        )
        .unwrap();
        let snn = ann_to_snn(&model).unwrap();
        assert_eq!(snn, model);
        assert!(snn.is_converted());
    }

    #[test]
    fn hidden_affine_layer_without_lambda_is_rejected() {
        let model = ModelSpec::new(
            vec![2],
            4,
            vec![
                LayerSpec::linear(LayerKind::dense(2, 2, vec![1.0; 4], vec![0.0; 2])),
                LayerSpec::linear(LayerKind::dense(2, 1, vec![1.0; 2], vec![0.0])),
            ],
        )
        .unwrap();
        assert!(matches!(ann_to_snn(&model), Err(Error::MissingLambda { layer: 0 })));
    }

    #[test]
    fn group_neuron_thresholds() {
        let gn = replace_if_with_gn(&ann_to_snn(&two_layer(2.0)).unwrap(), 4).unwrap();
        match &gn.layers[0].neuron {
            Some(NeuronModel::Gn(cfg)) => {
                assert_eq!(cfg.theta_gn(), 0.5);
                assert_eq!(cfg.member_thresholds(), &[0.5, 1.0, 1.5, 2.0]);
            }
            other => panic!("expected GN, got {other:?}"),
        }
        let single = replace_if_with_gn(&ann_to_snn(&two_layer(2.0)).unwrap(), 1).unwrap();
        match &single.layers[0].neuron {
            Some(NeuronModel::Gn(cfg)) => {
                assert_eq!(cfg.theta_gn(), 2.0);
                assert_eq!(cfg.member_thresholds(), &[2.0]);
            }
            other => panic!("expected GN, got {other:?}"),
        }
    }

    #[test]
    fn rejects_zero_tau_and_unconverted_models() {
        let snn = ann_to_snn(&two_layer(1.0)).unwrap();
        assert!(matches!(replace_if_with_gn(&snn, 0), Err(Error::InvalidConfig(_))));
        assert!(matches!(
            replace_if_with_gn(&two_layer(1.0), 2),
            Err(Error::NotConverted { layer: 0 })
        ));
    }

    #[test]
    fn weights_untouched_and_idempotent() {
        let ann = two_layer(1.5);
        let once = replace_if_with_gn(&ann_to_snn(&ann).unwrap(), 3).unwrap();
        let twice = replace_if_with_gn(&ann_to_snn(&once).unwrap(), 3).unwrap();
        assert_eq!(once, twice);
        for (a, b) in ann.layers.iter().zip(&once.layers) {
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.act, b.act);
        }
    }
}
