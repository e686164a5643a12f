use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cvr_core::cvr::{read_cvrt, read_frames, segment_clips, write_cvrt, Modality, CLIP_LEN};
use cvr_core::ensemble::{calibrate_weights, DetectorConfig, EnsembleWeights, WeightsFile};
use cvr_core::eval::{
    detect, evaluate, export_top_heatmaps, extract_volume, frame_range, run_protocol,
    train_modality, DetectInput, Detectors, LogitTable, ProtocolConfig, VolumeStore, WORK_SIZE,
};
use cvr_core::gradcam::{
    compute_gradcam, export_heatmap_frames, localization_score, DEFAULT_TARGET_LAYER,
};
use cvr_core::model::{load_checkpoint, save_checkpoint, TrainConfig};
use cvr_core::synth::{build_corpus, CorpusConfig, Family, LoadedManifest, Split};
use cvr_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cvr",
    version,
    about = "Fake-video detection from appearance, motion and geometry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired real/fake corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "A")]
        family: Family,
        /// Real/fake pairs for training (the last 10% become `val`).
        #[arg(long, default_value_t = 200)]
        n_train: usize,
        #[arg(long, default_value_t = 50)]
        n_test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        val_fraction: f64,
        #[arg(long, default_value_t = cvr_core::synth::FRAME_SIZE)]
        size: usize,
    },
    /// Build one modality volume from a clip.
    Extract {
        #[arg(long)]
        modality: Modality,
        #[arg(long)]
        frames: PathBuf,
        /// Per-frame metric depth `[T,H,W]`, for the depth modality.
        #[arg(long)]
        depth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = WORK_SIZE)]
        size: usize,
    },
    /// Train one modality classifier.
    Train {
        #[arg(long)]
        modality: Modality,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 20)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Epochs without validation gain before stopping; 0 disables.
        #[arg(long, default_value_t = 10)]
        patience: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Evaluate checkpoints on a manifest split.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[command(flatten)]
        ckpt: Checkpoints,
        /// Fusion weights; uniform over the given checkpoints if absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Directory for report.{txt,csv,json}.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        allow_imbalanced: bool,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Choose fusion weights on a validation split.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "val")]
        split: Split,
        #[command(flatten)]
        ckpt: Checkpoints,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Grad-CAM overlays for one manifest clip.
    Gradcam {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Video id, optionally `id:k` for its k-th clip.
        #[arg(long)]
        clip_id: String,
        #[arg(long, default_value = DEFAULT_TARGET_LAYER)]
        layer: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify a video end to end.
    Detect {
        /// Raw frames file (with its JSON sidecar) or a directory of PNGs.
        #[arg(long)]
        input: PathBuf,
        /// Metric depth `[T,H,W]`; defaults to `depth.cvrt` beside the input.
        #[arg(long)]
        depth: Option<PathBuf>,
        #[command(flatten)]
        ckpt: Checkpoints,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Write Grad-CAM overlays of the most fake clips here.
        #[arg(long)]
        heatmaps: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
    },
    /// Train all modalities per seed and render the ablation tables.
    Protocol {
        /// Corpus for training, calibration and the in-domain test.
        #[arg(long)]
        manifest: PathBuf,
        /// Corpus whose test split is the cross-family test.
        #[arg(long)]
        cross: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 20)]
        batch: usize,
        #[arg(long, default_value_t = 10)]
        patience: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cache: CacheArgs,
    },
}

#[derive(Args)]
struct Checkpoints {
    /// Appearance checkpoint.
    #[arg(long)]
    ckpt_a: Option<PathBuf>,
    /// Motion (flow) checkpoint.
    #[arg(long)]
    ckpt_m: Option<PathBuf>,
    /// Geometry (depth) checkpoint.
    #[arg(long)]
    ckpt_g: Option<PathBuf>,
}

impl Checkpoints {
    fn load(&self) -> Result<Detectors> {
        Detectors::load([
            self.ckpt_a.as_deref(),
            self.ckpt_m.as_deref(),
            self.ckpt_g.as_deref(),
        ])
    }
}

#[derive(Args)]
struct CacheArgs {
    /// Recompute volumes and logits instead of using the on-disk caches.
    #[arg(long)]
    no_cache: bool,
}

fn weights_or_uniform(
    path: Option<&Path>,
    detectors: &Detectors,
) -> Result<(EnsembleWeights, Option<f64>)> {
    match path {
        Some(p) => {
            let f = WeightsFile::read(p)?;
            Ok((f.weights()?, Some(f.epsilon)))
        }
        None => {
            let enabled = detectors.enabled();
            let mut a = [0.0; 3];
            for m in &enabled {
                a[m.index()] = 1.0 / enabled.len() as f64;
            }
            Ok((EnsembleWeights::from_array(a)?, None))
        }
    }
}

fn detector_config(epsilon: Option<f64>, from_file: Option<f64>) -> Result<DetectorConfig> {
    let c = DetectorConfig {
        epsilon: epsilon.or(from_file).unwrap_or(0.05),
        ..DetectorConfig::default()
    };
    c.validate()?;
    Ok(c)
}

fn patience(p: usize) -> Option<usize> {
    (p > 0).then_some(p)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            family,
            n_train,
            n_test,
            seed,
            val_fraction,
            size,
        } => {
            let config = CorpusConfig {
                family,
                n_train,
                n_test,
                val_fraction,
                seed,
                size,
            };
            let m = build_corpus(&config, &out)?;
            println!(
                "{} videos, manifest {} (sha256 {})",
                m.manifest.entries.len(),
                m.path.display(),
                m.fingerprint
            );
        }
        Command::Extract {
            modality,
            frames,
            depth,
            out,
            size,
        } => {
            let video = read_frames(&frames)?;
            let seg = segment_clips(&video, CLIP_LEN)?;
            let clip = seg.clips.first().ok_or(Error::InsufficientFrames {
                have: video.len(),
                need: CLIP_LEN,
            })?;
            let depth = depth
                .map(read_cvrt)
                .transpose()?
                .map(|d| frame_range(&d, 0, CLIP_LEN))
                .transpose()?;
            let v = extract_volume(modality, clip, depth.as_ref(), size)?;
            write_cvrt(&out, &v.tensor)?;
            println!("{} {:?} -> {}", modality, v.tensor.dims(), out.display());
        }
        Command::Train {
            modality,
            manifest,
            epochs,
            lr,
            batch,
            seed,
            patience: p,
            out,
            cache,
        } => {
            let m = LoadedManifest::read(&manifest)?;
            let store = VolumeStore::new(&m, !cache.no_cache);
            let config = TrainConfig {
                lr,
                batch_size: batch,
                epochs,
                seed,
                patience: patience(p),
                ..TrainConfig::default()
            };
            let outcome = train_modality(&store, modality, &config)?;
            save_checkpoint(&outcome.model, &out)?;
            for r in &outcome.history {
                println!(
                    "epoch {:>3}  loss {:.4}  train {:.3}  val {}",
                    r.epoch,
                    r.loss,
                    r.train_accuracy,
                    r.val_accuracy.map_or("-".into(), |v| format!("{v:.3}"))
                );
            }
            println!("kept epoch {} -> {}", outcome.best_epoch, out.display());
        }
        Command::Eval {
            manifest,
            split,
            ckpt,
            weights,
            report,
            epsilon,
            allow_imbalanced,
            cache,
        } => {
            let m = LoadedManifest::read(&manifest)?;
            let detectors = ckpt.load()?;
            let (w, eps) = weights_or_uniform(weights.as_deref(), &detectors)?;
            let config = detector_config(epsilon, eps)?;
            let store = VolumeStore::new(&m, !cache.no_cache);
            let mut r = evaluate(
                &detectors,
                &w,
                &store,
                split,
                &config,
                allow_imbalanced,
                !cache.no_cache,
            )?;
            r.seed = detectors
                .enabled()
                .first()
                .and_then(|&m| detectors.get(m))
                .map(|d| d.seed);
            print!("{}", r.to_text());
            if let Some(dir) = report {
                r.write(&dir)?;
            }
        }
        Command::Calibrate {
            manifest,
            split,
            ckpt,
            epsilon,
            out,
            cache,
        } => {
            let m = LoadedManifest::read(&manifest)?;
            let detectors = ckpt.load()?;
            let store = VolumeStore::new(&m, !cache.no_cache);
            let table = if cache.no_cache {
                LogitTable::compute(&detectors, &store, split)?
            } else {
                LogitTable::cached(&detectors, &store, split)?
            };
            let config = detector_config(Some(epsilon), None)?;
            let c = calibrate_weights(&table.calibration_set(), &detectors.enabled(), &config)?;
            WeightsFile::new(&c.weights, epsilon, Some(manifest.display().to_string()))
                .write(&out)?;
            let w = c.weights;
            println!(
                "alpha_a {:.2} alpha_m {:.2} alpha_g {:.2}  balanced clip accuracy {:.4} -> {}",
                w.alpha_a,
                w.alpha_m,
                w.alpha_g,
                c.balanced_accuracy,
                out.display()
            );
        }
        Command::Gradcam {
            ckpt,
            manifest,
            clip_id,
            layer,
            out,
        } => {
            let model = load_checkpoint(&ckpt)?;
            let m = LoadedManifest::read(&manifest)?;
            let (id, k) = match clip_id.rsplit_once(':') {
                Some((id, k)) => (
                    id,
                    k.parse()
                        .map_err(|_| Error::Invalid(format!("clip index `{k}`")))?,
                ),
                None => (clip_id.as_str(), 0usize),
            };
            let entry = m
                .manifest
                .get(id)
                .ok_or_else(|| Error::Invalid(format!("no video `{id}` in manifest")))?;
            let store = VolumeStore::new(&m, false);
            let vols = store.volumes(entry, model.modality)?;
            let v = vols.get(k).ok_or_else(|| {
                Error::Invalid(format!("video `{id}` has {} clip(s)", vols.len()))
            })?;
            let h = compute_gradcam(&model, v, &layer)?;
            let clips = store.clips(entry)?;
            let files = export_heatmap_frames(&h, &clips[k], &out)?;
            println!("{} files -> {}", files.len(), out.display());
            if let Some(masks) = store.masks(entry, model.modality)? {
                if let Some(mask) = masks.get(k).filter(|m| !m.is_empty()) {
                    println!(
                        "IoU vs artifact mask: {:.4}",
                        localization_score(&h.values, mask, 0.5)?
                    );
                }
            }
        }
        Command::Detect {
            input,
            depth,
            ckpt,
            weights,
            epsilon,
            heatmaps,
            top_k,
        } => {
            let detectors = ckpt.load()?;
            let (w, eps) = weights_or_uniform(weights.as_deref(), &detectors)?;
            let config = detector_config(epsilon, eps)?;
            let data = DetectInput::read(&input, depth.as_deref())?;
            let d = detect(&data, &detectors, &w, &config)?;
            let Some(verdict) = &d.verdict else {
                println!(
                    "verdict: insufficient frames ({} < {})",
                    d.frames, config.clip_len
                );
                return Err(Error::InsufficientFrames {
                    have: d.frames,
                    need: config.clip_len,
                });
            };
            println!(
                "verdict: {}  fake fraction {:.4} ({}/{} clips, epsilon {})",
                verdict.label,
                verdict.fake_fraction,
                verdict.fake_clips,
                verdict.clips,
                config.epsilon
            );
            for c in &d.clips {
                let part = |m: Modality| c.logits.get(m).map_or("-".into(), |l| format!("{l:+.4}"));
                println!(
                    "clip {:>3} frames {:>5}-{:<5} a {} m {} g {}  fused {:+.4}  {}",
                    c.index,
                    c.start,
                    c.start + config.clip_len - 1,
                    part(Modality::Appearance),
                    part(Modality::Flow),
                    part(Modality::Depth),
                    c.fused,
                    c.label
                );
            }
            if let Some(dir) = heatmaps {
                let files = export_top_heatmaps(&data, &detectors, &d, top_k, &dir)?;
                println!("{} heatmap files -> {}", files.len(), dir.display());
            }
        }
        Command::Protocol {
            manifest,
            cross,
            seeds,
            epochs,
            lr,
            batch,
            patience: p,
            out,
            cache,
        } => {
            let a = LoadedManifest::read(&manifest)?;
            let b = cross.map(LoadedManifest::read).transpose()?;
            let config = ProtocolConfig {
                train: TrainConfig {
                    lr,
                    batch_size: batch,
                    epochs,
                    seed: 0,
                    patience: patience(p),
                    ..TrainConfig::default()
                },
                seeds,
                detector: DetectorConfig::default(),
                cache: !cache.no_cache,
            };
            let outcome = run_protocol(&a, b.as_ref(), &config, Some(&out.join("checkpoints")))?;
            outcome.report.write(&out)?;
            print!("{}", outcome.report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
