use cvr_core::cvr::{FrameSequence, Modality};
use cvr_core::ensemble::{DetectorConfig, EnsembleWeights, Label, ModalityLogits};
use cvr_core::eval::{
    detect, evaluate, run_protocol, ConstantSource, DetectInput, Detectors, LogitSource,
    OracleSource, ProtocolConfig, VolumeStore,
};
use cvr_core::model::{build_model, TrainConfig};
use cvr_core::synth::{
    build_corpus, fingerprint, CorpusConfig, Family, LoadedManifest, ManifestEntry, Split,
};
use cvr_core::{Result, TensorND};

fn corpus(dir: &std::path::Path, n_train: usize, n_test: usize) -> LoadedManifest {
    let cfg = CorpusConfig {
        family: Family::A,
        n_train,
        n_test,
        val_fraction: 0.2,
        seed: 4,
        size: 32,
    };
    build_corpus(&cfg, dir).unwrap()
}

#[test]
fn oracle_and_constant_stubs() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 2, 5);
    let store = VolumeStore::new(&m, false);
    let cfg = DetectorConfig::default();
    let w = EnsembleWeights::uniform();
    let r = evaluate(&OracleSource, &w, &store, Split::Test, &cfg, false, false).unwrap();
    assert_eq!(r.video_accuracy, 1.0);
    assert_eq!((r.confusion.fp, r.confusion.fn_), (0, 0));
    let r = evaluate(
        &ConstantSource(3.0),
        &w,
        &store,
        Split::Test,
        &cfg,
        false,
        false,
    )
    .unwrap();
    assert_eq!(r.video_accuracy, 0.5);
    assert_eq!(r.confusion.fp, 5);
}

/// Distinct pseudo-random logits per modality, clip and video.
struct Hashed {
    only_a: bool,
}

impl LogitSource for Hashed {
    fn clip_logits(
        &self,
        entry: &ManifestEntry,
        store: &VolumeStore,
    ) -> Result<Vec<ModalityLogits>> {
        let n = store.clips(entry)?.len();
        let h = |k: usize, m: usize| {
            let d = fingerprint(format!("{}/{k}/{m}", entry.id).as_bytes());
            (u8::from_str_radix(&d[..2], 16).unwrap() as f64 - 127.5) / 20.0
        };
        Ok((0..n)
            .map(|k| {
                if self.only_a {
                    ModalityLogits::new(Some(h(k, 0)), None, None)
                } else {
                    ModalityLogits::new(Some(h(k, 0)), Some(h(k, 1)), Some(h(k, 2)))
                }
            })
            .collect())
    }

    fn describe(&self) -> String {
        format!("hashed({})", self.only_a)
    }
}

#[test]
fn one_hot_weights_equal_the_single_classifier() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 2, 6);
    let store = VolumeStore::new(&m, false);
    let cfg = DetectorConfig::default();
    let w = EnsembleWeights::single(Modality::Appearance);
    let full = evaluate(
        &Hashed { only_a: false },
        &w,
        &store,
        Split::Test,
        &cfg,
        false,
        false,
    )
    .unwrap();
    let alone = evaluate(
        &Hashed { only_a: true },
        &w,
        &store,
        Split::Test,
        &cfg,
        false,
        false,
    )
    .unwrap();
    assert_eq!(full.videos, alone.videos);
    assert_eq!(full.confusion, alone.confusion);
}

#[test]
fn protocol_rows_and_identical_families() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ma, mb) = (corpus(a.path(), 10, 3), corpus(b.path(), 10, 3));
    let config = ProtocolConfig {
        train: TrainConfig {
            epochs: 1,
            patience: None,
            ..TrainConfig::default()
        },
        seeds: vec![0],
        detector: DetectorConfig::default(),
        cache: false,
    };
    let out = run_protocol(&ma, Some(&mb), &config, None).unwrap();
    let names: Vec<&str> = out
        .report
        .ablation
        .iter()
        .map(|r| r.name.as_str())
        .collect();
    assert_eq!(names, ["A", "A+M", "A+G", "A+M+G"]);
    assert_eq!(out.report.singles.len(), 3);
    for r in out.report.singles.iter().chain(&out.report.ablation) {
        assert_eq!(Some(r.in_domain), r.cross_family, "{}", r.name);
    }
    let text = out.report.to_text();
    assert!(text.contains("in-domain") && text.contains("cross-family"));
}

/// Depth model whose logit is the clip's (constant) depth minus 5.
fn depth_reader() -> Detectors {
    let mut model = build_model(Modality::Depth, 1, [24, 32, 32], 0).unwrap();
    for layer in model.network.layers_mut() {
        for t in [&mut layer.weight, &mut layer.bias].into_iter().flatten() {
            t.data_mut().fill(0.0);
        }
        let is_conv = layer.name.ends_with("_conv");
        let name = layer.name.clone();
        if let Some(w) = layer.weight.as_mut() {
            if is_conv {
                w.set(&[0, 0, 1, 1, 1], 1.0);
            } else {
                w.set(&[0, 0], 1.0);
            }
        }
        if name == "fc2" {
            layer.bias.as_mut().unwrap().data_mut()[0] = -5.0;
        }
    }
    Detectors::from_models([model]).unwrap()
}

fn video(clips: usize, fake: &[usize]) -> DetectInput {
    let (t, n) = (clips * 25, 32);
    let frames = FrameSequence::new(t, n, n, vec![0; t * n * n * 3]).unwrap();
    let depth = TensorND::from_fn(&[t, n, n], |i| {
        if fake.contains(&(i / (n * n) / 25)) {
            9.0
        } else {
            1.0
        }
    })
    .unwrap();
    DetectInput {
        frames,
        depth: Some(depth),
    }
}

#[test]
fn detect_votes_over_clips() {
    let det = depth_reader();
    let w = EnsembleWeights::single(Modality::Depth);
    let input = video(10, &[1, 4, 6, 9]);
    let strict = detect(&input, &det, &w, &DetectorConfig::default()).unwrap();
    let labels: Vec<Label> = strict.clips.iter().map(|c| c.label).collect();
    assert_eq!(labels.iter().filter(|l| l.is_fake()).count(), 4);
    assert!(
        (strict.clips[1].fused - 4.0).abs() < 1e-5 && (strict.clips[0].fused + 4.0).abs() < 1e-5
    );
    assert_eq!(strict.verdict.unwrap().label, Label::Fake);
    let lenient = DetectorConfig {
        epsilon: 0.5,
        ..DetectorConfig::default()
    };
    let v = detect(&input, &det, &w, &lenient).unwrap().verdict.unwrap();
    assert_eq!((v.label, v.fake_fraction), (Label::Real, 0.4));
}

#[test]
fn short_input_is_insufficient() {
    let det = depth_reader();
    let w = EnsembleWeights::single(Modality::Depth);
    let mut input = video(1, &[]);
    input.frames = input.frames.slice(0, 24).unwrap();
    let d = detect(&input, &det, &w, &DetectorConfig::default()).unwrap();
    assert!(d.verdict.is_none() && d.clips.is_empty());
    assert_eq!(d.frames, 24);
    let mut no_depth = video(2, &[]);
    no_depth.depth = None;
    assert!(detect(&no_depth, &det, &w, &DetectorConfig::default()).is_err());
}
