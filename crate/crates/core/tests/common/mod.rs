#![allow(dead_code)]

use gnconvert_core::activation::QcfsParams;
use gnconvert_core::network::{LayerKind, LayerSpec, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense QCFS network with weights in `[-1, 1]`, biases in `[-0.2, 0.2]` and
/// lambdas in `[0.5, 2]`.
pub fn random_mlp(widths: &[usize], levels: u32, seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = widths.len() - 2;
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let weights = (0..w[0] * w[1]).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bias = (0..w[1]).map(|_| rng.gen_range(-0.2..0.2)).collect();
            let kind = LayerKind::dense(w[0], w[1], weights, bias);
            if l == last {
                LayerSpec::linear(kind)
            } else {
                let lambda = rng.gen_range(0.5..2.0);
                LayerSpec::activated(kind, QcfsParams::new(lambda, levels).unwrap())
            }
        })
        .collect();
    ModelSpec::new(vec![widths[0]], levels, layers).unwrap()
}

pub fn random_input(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

/// One activated `1 -> 1` identity layer followed by an identity readout.
pub fn identity_layer(lambda: f64, levels: u32) -> ModelSpec {
    ModelSpec::new(
        vec![1],
        levels,
        vec![
            LayerSpec::activated(
                LayerKind::dense(1, 1, vec![1.0], vec![0.0]),
                QcfsParams::new(lambda, levels).unwrap(),
            ),
            LayerSpec::linear(LayerKind::dense(1, 1, vec![1.0], vec![0.0])),
        ],
    )
    .unwrap()
}
