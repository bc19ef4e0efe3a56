mod common;

use common::{random_input, random_mlp};
use gnconvert_core::activation::QcfsParams;
use gnconvert_core::analysis::*;
use gnconvert_core::conversion::{ann_to_snn, replace_if_with_gn};
use gnconvert_core::data::{BlobsConfig, Dataset};
use gnconvert_core::network::*;
use gnconvert_core::trainer::{calibrate_lambda, train, TrainConfig};
use gnconvert_core::Error;

fn blobs(samples: usize, seed: u64) -> Dataset {
    BlobsConfig {
        samples_per_cluster: samples,
        std_dev: 0.35,
        seed,
        ..Default::default()
    }
    .generate()
    .unwrap()
}

fn trained() -> (ModelSpec, Dataset) {
    let data = blobs(200, 3);
    let cfg = TrainConfig {
        epochs: 30,
        learning_rate: 0.05,
        levels: 16,
        seed: 3,
        widths: vec![2, 16, 16, 2],
        ..Default::default()
    };
    (train(&data, &cfg).unwrap(), data)
}

#[test]
fn converted_model_round_trips_through_json() {
    let snn = ann_to_snn(&random_mlp(&[3, 6, 5, 2], 8, 1)).unwrap();
    let text = snn.to_json();
    assert!(text.contains("\"theta\""));
    assert!(!text.contains("\"tau\""));
    assert_eq!(ModelSpec::from_json(&text).unwrap(), snn);

    let gn = replace_if_with_gn(&snn, 4).unwrap();
    let text = gn.to_json();
    assert!(text.contains("\"tau\": 4"));
    let back = ModelSpec::from_json(&text).unwrap();
    assert_eq!(back, gn);
    assert_eq!(model_hash(&back), model_hash(&gn));
}

#[test]
fn group_and_if_models_agree_at_long_horizons() {
    for seed in 0..5 {
        let snn = ann_to_snn(&random_mlp(&[3, 8, 8, 2], 16, seed)).unwrap();
        let gn = replace_if_with_gn(&snn, 4).unwrap();
        let mut total = 0.0;
        for s in 0..10 {
            let x = Tensor::vector(random_input(3, 50 + s));
            let (a, _) = snn_forward(&snn, &x, &SimConfig::for_model(&snn, 1024).unwrap()).unwrap();
            let (b, _) = snn_forward(&gn, &x, &SimConfig::for_model(&gn, 1024).unwrap()).unwrap();
            total += a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64;
        }
        assert!(total / 10.0 < 1e-3, "seed {seed}: {}", total / 10.0);
    }
}

#[test]
fn rate_staircases_are_monotone_bounded_and_refine() {
    for t in [1u32, 2, 4, 8] {
        let grid = curve_grid(NeuronKind::Gn { tau: 4 }, 1.0, t, V0Policy::HalfThreshold, -0.5, 1.5).unwrap();
        let ifc = firing_rate_curve(NeuronKind::If, 1.0, t, V0Policy::HalfThreshold, &grid).unwrap();
        let gnc = firing_rate_curve(NeuronKind::Gn { tau: 4 }, 1.0, t, V0Policy::HalfThreshold, &grid).unwrap();
        for curve in [&ifc, &gnc] {
            assert!(curve.windows(2).all(|w| w[1].1 >= w[0].1));
            assert!(curve.iter().all(|&(_, r)| (0.0..=1.0).contains(&r)));
        }
        let step = 1.0 / (4.0 * f64::from(t));
        for (&(x, ri), &(_, rg)) in ifc.iter().zip(&gnc) {
            let ideal = x.clamp(0.0, 1.0);
            assert!((rg - ideal).abs() <= (ri - ideal).abs() + step + 1e-12, "T {t} x {x}");
        }
    }
}

#[test]
fn mse_of_identical_models_vanishes_at_long_horizons() {
    let ann = random_mlp(&[2, 8, 3], 64, 9);
    let snn = ann_to_snn(&ann).unwrap();
    let report = conversion_mse(&ann, &snn, &blobs(20, 1), &[256, 512], V0Policy::HalfThreshold).unwrap();
    assert!(report.values(Metric::Mse).iter().all(|&m| m < 1e-2));
}

#[test]
fn mse_rejects_mismatched_architectures() {
    let ann = random_mlp(&[2, 8, 3], 8, 9);
    let other = ann_to_snn(&random_mlp(&[2, 7, 3], 8, 9)).unwrap();
    let err = conversion_mse(&ann, &other, &blobs(5, 1), &[4], V0Policy::HalfThreshold).unwrap_err();
    assert!(matches!(err, Error::ArchitectureMismatch(_)));
}

#[test]
fn constant_class_zero_model_scores_half() {
    let model = ModelSpec::new(
        vec![2],
        4,
        vec![LayerSpec::linear(LayerKind::dense(2, 2, vec![0.0; 4], vec![1.0, 0.0]))],
    )
    .unwrap();
    assert_eq!(accuracy_eval(&model, &blobs(50, 2), &EvalMode::Ann).unwrap(), 0.5);
    let snn = ann_to_snn(&model).unwrap();
    let sim = SimConfig::new(3, NeuronKind::If).unwrap();
    assert_eq!(accuracy_eval(&snn, &blobs(50, 2), &EvalMode::Snn(sim)).unwrap(), 0.5);
}

#[test]
fn trained_model_conversion_trends() {
    let (ann, data) = trained();
    assert!(accuracy_eval(&ann, &data, &EvalMode::Ann).unwrap() >= 0.95);
    let snn = ann_to_snn(&ann).unwrap();
    let gn = replace_if_with_gn(&snn, 4).unwrap();
    let t_list = [1, 2, 4, 8];
    let mse_if = conversion_mse(&ann, &snn, &data, &t_list, V0Policy::HalfThreshold).unwrap();
    let mse_gn = conversion_mse(&ann, &gn, &data, &t_list, V0Policy::HalfThreshold).unwrap();
    for (g, i) in mse_gn.values(Metric::Mse).iter().zip(mse_if.values(Metric::Mse)) {
        assert!(*g <= i, "GN {g} IF {i}");
    }
    assert_eq!(mse_gn.rows[0].tau, Some(4));
    assert_eq!(mse_if.rows[0].neuron, "if");
}

#[test]
fn mapping_error_shrinks_with_time_and_group_size() {
    let (ann, data) = trained();
    let snn = ann_to_snn(&ann).unwrap();
    let sample = data.head(100);
    let mean_mapping = |model: &ModelSpec, t: u32| -> Vec<f64> {
        let sim = SimConfig::for_model(model, t).unwrap();
        phi_residual_dataset(model, &sample, &sim)
            .unwrap()
            .iter()
            .map(|a| {
                assert!(a.residual_max <= 1e-9);
                a.mapping_error_mean
            })
            .collect()
    };
    let by_t: Vec<Vec<f64>> = [1u32, 2, 4, 8, 16, 32].iter().map(|&t| mean_mapping(&snn, t)).collect();
    for w in by_t.windows(2) {
        for (next, prev) in w[1].iter().zip(&w[0]) {
            assert!(next < prev, "{next} vs {prev}");
        }
    }
    let by_tau: Vec<Vec<f64>> = [1u32, 2, 4, 8]
        .iter()
        .map(|&tau| mean_mapping(&replace_if_with_gn(&snn, tau).unwrap(), 2))
        .collect();
    for w in by_tau.windows(2) {
        for (next, prev) in w[1].iter().zip(&w[0]) {
            assert!(next <= prev, "{next} vs {prev}");
        }
    }
}

/// A first-layer neuron whose drive lies in `[0, theta]` keeps its potential
/// in `[0, w)` when it starts at `w / 2`, so its mapping error is at most
/// `w / (2T)`. Drives outside that range leave a clipping error that does
/// not decay with `T`.
#[test]
fn in_range_mapping_error_decays_as_one_over_t() {
    let (ann, data) = trained();
    let snn = ann_to_snn(&ann).unwrap();
    let theta = snn.layers[0].neuron.as_ref().unwrap().theta();
    for kind in [NeuronKind::If, NeuronKind::Gn { tau: 4 }] {
        for t in [1u32, 2, 4, 8, 16, 32, 64] {
            let sim = SimConfig::new(t, kind).unwrap();
            for i in 0..100 {
                let x = data.input(i);
                let z = snn.layers[0].kind.forward(0, &x).unwrap();
                let (_, trace) = snn_forward(&snn, &x, &sim).unwrap();
                let lt = trace.layer(0).unwrap();
                let bound = lt.per_spike_weight / (2.0 * f64::from(t)) + 1e-12;
                for (j, &zj) in z.data().iter().enumerate() {
                    let err = ((lt.v_final[j] - lt.v_initial[j]) / f64::from(t)).abs();
                    if (0.0..=theta).contains(&zj) {
                        assert!(err <= bound, "{kind:?} T {t}: {err} > {bound}");
                    } else {
                        let clip = if zj < 0.0 { -zj } else { zj - theta };
                        assert!(err >= clip - bound);
                    }
                }
            }
        }
    }
}

#[test]
fn reports_are_byte_stable() {
    let (ann, data) = trained();
    let snn = ann_to_snn(&ann).unwrap();
    let sample = data.head(50);
    let a = conversion_mse(&ann, &snn, &sample, &[1, 4], V0Policy::HalfThreshold).unwrap();
    let b = conversion_mse(&ann, &snn, &sample, &[1, 4], V0Policy::HalfThreshold).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_csv().lines().count(), 3);
}

#[test]
fn calibration_covers_the_sample() {
    let model = random_mlp(&[2, 8, 8, 2], 8, 4);
    let data = blobs(100, 4);
    let calibrated = calibrate_lambda(&model, &data).unwrap();
    let mut x: Vec<Tensor> = (0..data.len()).map(|i| data.input(i)).collect();
    for (i, layer) in calibrated.layers.iter().enumerate() {
        let z: Vec<Tensor> = x.iter().map(|t| layer.kind.forward(i, t).unwrap()).collect();
        if let Some(act) = layer.act {
            let above = z.iter().flat_map(|t| t.data()).filter(|&&v| v > act.lambda).count();
            assert_eq!(above, 0, "layer {i}");
            let p = QcfsParams::new(act.lambda, act.levels).unwrap();
            x = z.into_iter().map(|t| t.map(|v| gnconvert_core::activation::qcfs(v, &p))).collect();
        } else {
            x = z;
        }
    }
}
