use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::data::{synth_blobs, synth_images, Dataset};
use crate::rng;
use crate::Tensor;

fn numeric_net(id: u8, dims: usize, classes: usize, seed: u64) -> TrainedNetwork {
    let spec = build_architecture(id, InputShape::Flat(dims), classes).unwrap();
    TrainedNetwork::initialize(spec, seed).unwrap()
}

fn batch_of(data: &Dataset, n: usize) -> (Tensor, Vec<usize>) {
    let idx: Vec<usize> = (0..n).collect();
    let sub = data.subset(&idx).unwrap();
    (sub.features().clone(), sub.labels().to_vec())
}

#[test]
fn momentum_step_examples() {
    let (mut w, mut v) = ([1.0], [0.0]);
    sgd_momentum_step(&mut w, &mut v, &[0.0], 0.1, 0.9, MomentumKind::Classical).unwrap();
    assert_eq!((w, v), ([1.0], [0.0]));

    let (mut w, mut v) = ([1.0], [0.0]);
    sgd_momentum_step(&mut w, &mut v, &[1.0], 0.1, 0.9, MomentumKind::Classical).unwrap();
    assert!((v[0] + 0.1).abs() < 1e-15 && (w[0] - 0.9).abs() < 1e-15);
    sgd_momentum_step(&mut w, &mut v, &[1.0], 0.1, 0.9, MomentumKind::Classical).unwrap();
    assert!((v[0] + 0.19).abs() < 1e-15 && (w[0] - 0.71).abs() < 1e-15);

    // Nesterov looks one step ahead: w = 1 + 0.9 * -0.1 - 0.1.
    let (mut w, mut v) = ([1.0], [0.0]);
    sgd_momentum_step(&mut w, &mut v, &[1.0], 0.1, 0.9, MomentumKind::Nesterov).unwrap();
    assert!((w[0] - 0.81).abs() < 1e-15);

    assert!(sgd_momentum_step(&mut [0.0; 2], &mut [0.0], &[0.0], 0.1, 0.9, MomentumKind::Classical).is_err());
}

#[test]
fn inference_is_deterministic_and_shaped() {
    let spec = build_architecture(4, InputShape::mnist(), 7).unwrap();
    let net = TrainedNetwork::initialize(spec, 3).unwrap();
    let data = synth_images(2, 7, 28, 0.2, 5).unwrap();
    let a = net.forward(data.features(), Mode::Infer).unwrap();
    let b = net.forward(data.features(), Mode::Infer).unwrap();
    assert_eq!(a.output(), b.output());
    assert_eq!(a.output().shape(), &[14, 7]);
    for i in 0..14 {
        let row = a.output().row(i);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
    }
    let wrong = Tensor::zeros(&[2, 1, 27, 28]).unwrap();
    assert!(net.forward(&wrong, Mode::Infer).is_err());
}

#[test]
fn dropout_preserves_the_mean_pre_activation() {
    let mut net = numeric_net(5, 50, 2, 1);
    // All-ones first layer so the output is the plain sum of masked inputs.
    let first = net.params_mut()[0].as_mut().unwrap();
    first.weights.data_mut().iter_mut().for_each(|w| *w = 1.0);
    let x = Tensor::new(&[1, 50], (0..50).map(|i| 0.5 + (i % 7) as f64 * 0.1).collect()).unwrap();
    let plain = net.forward(&x, Mode::Infer).unwrap().layer_outputs()[0].data()[0];
    let mut rng = rng::seeded(11);
    let draws = 20_000;
    let mut sum = 0.0;
    for _ in 0..draws {
        sum += net.forward(&x, Mode::Train(&mut rng)).unwrap().layer_outputs()[0].data()[0];
    }
    let mean = sum / draws as f64;
    assert!((mean - plain).abs() / plain < 0.02, "mean {mean} vs {plain}");
}

#[test]
fn output_gradient_is_probs_minus_one_hot() {
    let net = numeric_net(5, 6, 3, 2);
    let data = synth_blobs(2, 6, 3, 4.0, 8).unwrap();
    let (x, labels) = batch_of(&data, 6);
    let acts = net.forward(&x, Mode::Infer).unwrap();
    let grads = net.backward(&acts, &labels).unwrap();
    let db = grads.0.last().unwrap().as_ref().unwrap().bias.data().to_vec();
    let probs = acts.output();
    for c in 0..3 {
        let expected: f64 = (0..6)
            .map(|i| probs.row(i)[c] - if labels[i] == c { 1.0 } else { 0.0 })
            .sum::<f64>()
            / 6.0;
        assert!((db[c] - expected).abs() < 1e-15);
    }
}

#[test]
fn zero_input_gives_zero_first_layer_weight_gradient() {
    let spec = build_architecture(4, InputShape::mnist(), 10).unwrap();
    let net = TrainedNetwork::initialize(spec, 4).unwrap();
    let x = Tensor::zeros(&[3, 1, 28, 28]).unwrap();
    let mut rng = rng::seeded(1);
    let acts = net.forward(&x, Mode::Train(&mut rng)).unwrap();
    let grads = net.backward(&acts, &[0, 4, 9]).unwrap();
    let first = grads.0[0].as_ref().unwrap();
    assert!(first.weights.data().iter().all(|&g| g == 0.0));
    let out = grads.0.last().unwrap().as_ref().unwrap();
    assert!(out.bias.data().iter().any(|&g| g != 0.0));
}

#[test]
fn zero_epochs_returns_the_initialization() {
    let data = synth_blobs(10, 4, 2, 5.0, 1).unwrap();
    let spec = build_architecture(5, InputShape::Flat(4), 2).unwrap();
    let net = train(&spec, &data, 0, 42).unwrap();
    assert_eq!(net, TrainedNetwork::initialize(spec, 42).unwrap());
    assert_eq!(net.epochs_trained(), 0);
}

#[test]
fn training_is_deterministic() {
    let data = synth_blobs(30, 4, 3, 5.0, 1).unwrap();
    let spec = build_architecture(6, InputShape::Flat(4), 3).unwrap();
    let cfg = TrainConfig::new(3, 9);
    let (a, la) = train_with_history(&spec, &data, &cfg).unwrap();
    let (b, lb) = train_with_history(&spec, &data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    let (c, _) = train_with_history(&spec, &data, &TrainConfig::new(3, 10)).unwrap();
    assert_ne!(a.params(), c.params());
}

#[test]
fn resumed_training_matches_a_single_run() {
    let data = synth_blobs(20, 3, 2, 5.0, 2).unwrap();
    let spec = build_architecture(5, InputShape::Flat(3), 2).unwrap();
    let full = train(&spec, &data, 4, 5).unwrap();
    let (half, _) = train_with_history(&spec, &data, &TrainConfig::new(2, 5)).unwrap();
    let (resumed, _) = continue_training(half, &data, &TrainConfig::new(2, 5)).unwrap();
    assert_eq!(full, resumed);
}

#[test]
fn training_rejects_bad_input() {
    let spec = build_architecture(5, InputShape::Flat(3), 2).unwrap();
    let wrong_dims = synth_blobs(5, 4, 2, 5.0, 1).unwrap();
    assert!(train(&spec, &wrong_dims, 1, 0).is_err());
    let three_classes = synth_blobs(5, 3, 3, 5.0, 1).unwrap();
    assert!(matches!(
        train(&spec, &three_classes, 1, 0),
        Err(crate::Error::LabelOutOfRange { label: 2, .. })
    ));
}

#[test]
fn separable_blobs_are_learned() {
    // Nearest-centroid classifies this set perfectly; the network should
    // get close with the stock numeric hyperparameters.
    let data = synth_blobs(100, 2, 2, 20.0, 12).unwrap();
    let spec = build_architecture(5, InputShape::Flat(2), 2).unwrap();
    let net = train(&spec, &data, 20, 3).unwrap();
    let pred = net.predict(&data).unwrap();
    let acc = pred.iter().zip(data.labels()).filter(|(a, b)| a == b).count() as f64 / data.len() as f64;
    assert!(acc >= 0.95, "training accuracy {acc}");
}

fn full_loss(net: &TrainedNetwork, data: &Dataset) -> f64 {
    categorical_cross_entropy(&net.predict_proba(data).unwrap(), data.labels()).unwrap()
}

#[test]
fn loss_decreases_over_the_first_epochs() {
    let images = synth_images(8, 3, 28, 0.3, 4).unwrap();
    let numeric = synth_blobs(40, 6, 3, 3.0, 4).unwrap();
    for (id, data) in [(4u8, &images), (5u8, &numeric)] {
        for seed in 1..=3u64 {
            let input = InputShape::from_dims(data.sample_shape()).unwrap();
            let mut spec = build_architecture(id, input, 3).unwrap();
            spec.learning_rate = 0.01;
            let mut net = TrainedNetwork::initialize(spec, seed).unwrap();
            let mut losses = vec![full_loss(&net, data)];
            for _ in 0..5 {
                net = continue_training(net, data, &TrainConfig::new(1, seed)).unwrap().0;
                losses.push(full_loss(&net, data));
            }
            let down = losses.windows(2).filter(|w| w[1] < w[0]).count();
            assert!(down >= 4, "architecture {id} seed {seed}: {losses:?}");
        }
    }
}

#[test]
fn stripping_removes_exactly_the_softmax() {
    let spec = build_architecture(1, InputShape::mnist(), 10).unwrap();
    let net = TrainedNetwork::initialize(spec.clone(), 8).unwrap();
    let ext = net.strip_softmax().unwrap();
    assert_eq!(ext.output_dim(), 256);
    assert_eq!(ext.layers(), &spec.layers[..5]);
    assert!(matches!(ext.layers().last(), Some(LayerSpec::Dense { units: 256, .. })));

    let data = synth_images(1, 10, 28, 0.2, 3).unwrap();
    let feats = ext.extract_batch(data.features()).unwrap();
    let acts = net.forward(data.features(), Mode::Infer).unwrap();
    assert_eq!(&feats, &acts.layer_outputs()[4]);
    assert_eq!(feats.shape(), &[10, 256]);

    assert_eq!(ext.strip_softmax(), Err(crate::Error::NoSoftmaxHead));
    let mut headless = spec;
    headless.layers.pop();
    let params = net.params()[..5].to_vec();
    let net2 = TrainedNetwork::from_parts(headless, params.clone(), params, 0, 0).unwrap();
    assert_eq!(net2.strip_softmax(), Err(crate::Error::NoSoftmaxHead));
}

#[test]
fn extracted_features_are_pure_functions_of_the_sample() {
    let spec = build_architecture(2, InputShape::mnist(), 4).unwrap();
    let ext = TrainedNetwork::initialize(spec, 6).unwrap().strip_softmax().unwrap();
    let base = synth_images(70, 4, 28, 0.4, 2).unwrap();
    // 280 samples spans three inference chunks; duplicate one across chunks.
    let mut idx: Vec<usize> = (0..base.len()).collect();
    idx.push(3);
    let data = base.subset(&idx).unwrap();
    let a = extract_features(&ext, &data).unwrap();
    let b = extract_features(&ext, &data).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.shape(), &[281, 256]);
    assert_eq!(a.row(3), a.row(280));
    let single = ext.extract_batch(&data.subset(&[3]).unwrap().features().clone()).unwrap();
    assert_eq!(single.row(0), a.row(3));
}
