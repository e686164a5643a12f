use cvr_core::cvr::Modality;
use cvr_core::model::build_model;
use cvr_core::nn::{check_param_gradients, Layer, LayerSpec, Network};
use cvr_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0)).unwrap()
}

fn net(specs: Vec<LayerSpec>, seed: u64) -> Network<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = specs
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut l = Layer::<f64>::zeroed(format!("l{i}"), s).unwrap();
            for t in [&mut l.weight, &mut l.bias].into_iter().flatten() {
                *t = random(t.dims(), &mut rng).map(|v| 0.5 * v);
            }
            l
        })
        .collect();
    Network::new(layers).unwrap()
}

fn assert_close(network: &Network<f64>, input_dims: &[usize], step: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = random(input_dims, &mut rng);
    let labels: Vec<f64> = (0..input_dims[0]).map(|i| (i % 2) as f64).collect();
    let r = check_param_gradients(network, &x, &labels, 100, step, 5).unwrap();
    assert!(r.checked - r.negligible >= 100, "{r:?}");
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn linear_layer() {
    let n = net(
        vec![
            LayerSpec::Flatten,
            LayerSpec::Linear {
                in_features: 24,
                out_features: 1,
            },
        ],
        1,
    );
    assert_close(&n, &[3, 2, 3, 2, 2], 1e-3);
}

#[test]
fn conv3d_layer() {
    let conv = LayerSpec::Conv3d {
        in_channels: 2,
        out_channels: 3,
        kernel: [3, 3, 3],
        stride: [1, 2, 2],
        padding: [1, 1, 1],
    };
    let n = net(
        vec![
            conv,
            LayerSpec::Flatten,
            LayerSpec::Linear {
                in_features: 3 * 4 * 3 * 3,
                out_features: 1,
            },
        ],
        2,
    );
    assert_close(&n, &[2, 2, 4, 5, 5], 1e-3);
}

#[test]
fn relu_layer() {
    let conv = LayerSpec::Conv3d {
        in_channels: 1,
        out_channels: 4,
        kernel: [2, 2, 2],
        stride: [1, 1, 1],
        padding: [0, 0, 0],
    };
    let n = net(
        vec![
            conv,
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Linear {
                in_features: 4 * 2 * 2 * 2,
                out_features: 1,
            },
        ],
        3,
    );
    assert_close(&n, &[2, 1, 3, 3, 3], 1e-3);
}

#[test]
fn two_linear_layers_with_relu() {
    let n = net(
        vec![
            LayerSpec::Flatten,
            LayerSpec::Linear {
                in_features: 8,
                out_features: 6,
            },
            LayerSpec::Relu,
            LayerSpec::Linear {
                in_features: 6,
                out_features: 1,
            },
        ],
        4,
    );
    assert_close(&n, &[4, 1, 2, 2, 2], 1e-6);
}

#[test]
fn full_model_on_appearance_sized_input() {
    let model = build_model(Modality::Appearance, 6, [24, 16, 16], 0).unwrap();
    let n = model.network.cast::<f64>();
    assert_close(&n, &[2, 6, 24, 16, 16], 1e-6);
}
