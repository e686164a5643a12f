use cvr_core::cvr::{Modality, ModalityVolume};
use cvr_core::ensemble::Label;
use cvr_core::model::{
    build_model, decode_checkpoint, encode_checkpoint, predict_clip, train, TrainConfig,
};
use cvr_core::TensorND;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXTENT: [usize; 3] = [24, 16, 16];

fn volumes(n: usize, seed: u64) -> Vec<(ModalityVolume, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let t = TensorND::from_fn(&[1, 24, 16, 16], |_| rng.random_range(0.0f32..1.0)).unwrap();
            let label = if i % 2 == 0 { Label::Fake } else { Label::Real };
            (ModalityVolume::new(Modality::Depth, t).unwrap(), label)
        })
        .collect()
}

fn plain(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        seed,
        patience: None,
        augment: false,
        ..TrainConfig::default()
    }
}

#[test]
fn eight_samples_are_memorized_with_monotone_loss() {
    let data = volumes(8, 1);
    let model = build_model(Modality::Depth, 1, EXTENT, 0).unwrap();
    let out = train(model, &data, &[], &plain(200, 0)).unwrap();
    let ok = data
        .iter()
        .filter(|(v, l)| predict_clip(&out.model, v).unwrap().label == *l)
        .count();
    assert_eq!(ok, 8);
    let loss: Vec<f64> = out.history.iter().map(|h| h.loss).collect();
    for s in 50..loss.len() - 20 {
        assert!(
            loss[s + 20] <= loss[s],
            "loss rose between epochs {} and {}",
            s + 1,
            s + 21
        );
    }
}

#[test]
fn training_is_deterministic() {
    let data = volumes(12, 2);
    let val = volumes(4, 3);
    let run = || {
        let model = build_model(Modality::Depth, 1, EXTENT, 7).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            seed: 7,
            ..TrainConfig::default()
        };
        encode_checkpoint(&train(model, &data, &val, &cfg).unwrap().model).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn untrained_model_is_at_chance() {
    let data = volumes(100, 4);
    let model = build_model(Modality::Depth, 1, EXTENT, 11).unwrap();
    let ok = data
        .iter()
        .filter(|(v, l)| predict_clip(&model, v).unwrap().label == *l)
        .count();
    assert!((35..=65).contains(&ok), "{ok} of 100");
}

#[test]
fn checkpoint_round_trip_predicts_identically() {
    let data = volumes(10, 5);
    let model = build_model(Modality::Depth, 1, EXTENT, 3).unwrap();
    let trained = train(model, &data, &[], &plain(2, 3)).unwrap().model;
    let back = decode_checkpoint(&encode_checkpoint(&trained).unwrap()).unwrap();
    for (v, _) in &data {
        let (a, b) = (
            predict_clip(&trained, v).unwrap(),
            predict_clip(&back, v).unwrap(),
        );
        assert_eq!(a.logit.to_bits(), b.logit.to_bits());
    }
}

#[test]
fn single_class_and_bad_config_rejected() {
    let mut data = volumes(4, 6);
    for d in &mut data {
        d.1 = Label::Real;
    }
    let model = build_model(Modality::Depth, 1, EXTENT, 0).unwrap();
    assert!(train(model.clone(), &data, &[], &plain(1, 0)).is_err());
    let bad = TrainConfig {
        lr: 0.0,
        ..TrainConfig::default()
    };
    assert!(train(model, &volumes(4, 6), &[], &bad).is_err());
}

#[test]
fn frozen_model_stops_after_patience_epochs() {
    let (data, val) = (volumes(6, 2), volumes(4, 3));
    let model = build_model(Modality::Depth, 1, EXTENT, 0).unwrap();
    let config = TrainConfig {
        lr: 1e-15,
        patience: Some(3),
        ..plain(50, 0)
    };
    let out = train(model, &data, &val, &config).unwrap();
    assert_eq!(out.history.len(), 4);
    assert_eq!(out.best_epoch, 1);
}
