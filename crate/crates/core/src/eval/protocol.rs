use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cvr::{Modality, ModalityVolume};
use crate::ensemble::{calibrate_weights, DetectorConfig, EnsembleWeights, Label};
use crate::error::{Error, Result};
use crate::model::{build_model, save_checkpoint, train, TrainConfig, TrainOutcome};
use crate::synth::{LoadedManifest, Split};

use super::logits::{Detectors, LogitTable};
use super::report::evaluate_table;
use super::volumes::VolumeStore;

/// Every clip of a split with its video's label.
pub fn labelled_volumes(
    store: &VolumeStore,
    split: Split,
    m: Modality,
) -> Result<Vec<(ModalityVolume, Label)>> {
    let mut out = Vec::new();
    for e in store.manifest().manifest.split(split) {
        for v in store.volumes(e, m)? {
            out.push((v, e.label));
        }
    }
    Ok(out)
}

/// Trains one modality classifier on the `train` split, early-stopping
/// on `val`.
pub fn train_modality(
    store: &VolumeStore,
    m: Modality,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let train_set = labelled_volumes(store, Split::Train, m)?;
    let val_set = labelled_volumes(store, Split::Val, m)?;
    let first = train_set
        .first()
        .ok_or_else(|| Error::Empty("train split".into()))?;
    let model = build_model(m, first.0.channels(), first.0.extent(), config.seed)?;
    let mut out = train(model, &train_set, &val_set, config)?;
    out.model.corpus_fingerprint = Some(store.manifest().fingerprint.clone());
    Ok(out)
}

/// Modality subsets of the ablation table, in row order.
pub const ABLATION: [&[Modality]; 4] = [
    &[Modality::Appearance],
    &[Modality::Appearance, Modality::Flow],
    &[Modality::Appearance, Modality::Depth],
    &[Modality::Appearance, Modality::Flow, Modality::Depth],
];

pub fn row_name(ms: &[Modality]) -> String {
    ms.iter()
        .map(|m| m.letter().to_string())
        .collect::<Vec<_>>()
        .join("+")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub weights: Option<EnsembleWeights>,
    pub in_domain: f64,
    pub cross_family: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub best_epochs: [usize; 3],
    /// One row per modality.
    pub singles: Vec<Row>,
    pub ablation: Vec<Row>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub in_domain_fingerprint: String,
    pub cross_family_fingerprint: Option<String>,
    pub runs: Vec<SeedRun>,
    /// Means over seeds.
    pub singles: Vec<Row>,
    pub ablation: Vec<Row>,
}

#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub detector: DetectorConfig,
    pub cache: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2],
            detector: DetectorConfig::default(),
            cache: true,
        }
    }
}

pub struct ProtocolOutcome {
    pub report: ProtocolReport,
    /// Trained classifiers per seed, in `seeds` order.
    pub detectors: Vec<Detectors>,
    /// Wall-clock training time per seed and modality.
    pub train_time: Vec<[Duration; 3]>,
}

/// Trains on `in_domain`'s train split, calibrates each ablation subset on
/// its val split, and tests on its test split and on `cross`'s test split.
pub fn run_protocol(
    in_domain: &LoadedManifest,
    cross: Option<&LoadedManifest>,
    config: &ProtocolConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<ProtocolOutcome> {
    if config.seeds.is_empty() {
        return Err(Error::Invalid("protocol needs at least one seed".into()));
    }
    let store = VolumeStore::new(in_domain, config.cache);
    let cross_store = cross.map(|c| VolumeStore::new(c, config.cache));
    let mut runs = Vec::new();
    let mut all = Vec::new();
    let mut train_time = Vec::new();
    for &seed in &config.seeds {
        let tc = TrainConfig {
            seed,
            ..config.train
        };
        let mut models = Vec::new();
        let mut best_epochs = [0; 3];
        let mut times = [Duration::ZERO; 3];
        for m in Modality::ALL {
            log::info!("seed {seed}: training {m}");
            let started = Instant::now();
            let out = train_modality(&store, m, &tc)?;
            times[m.index()] = started.elapsed();
            best_epochs[m.index()] = out.best_epoch;
            if let Some(dir) = checkpoint_dir {
                let d = dir.join(format!("seed-{seed}"));
                std::fs::create_dir_all(&d).map_err(|e| crate::Error::io(&d, e))?;
                save_checkpoint(&out.model, d.join(format!("{m}.cvrm")))?;
            }
            models.push(out.model);
        }
        let detectors = Detectors::from_models(models)?;
        let table = |s: &VolumeStore, split| {
            if config.cache {
                LogitTable::cached(&detectors, s, split)
            } else {
                LogitTable::compute(&detectors, s, split)
            }
        };
        let val = table(&store, Split::Val)?;
        let test = table(&store, Split::Test)?;
        let cross_test = cross_store
            .as_ref()
            .map(|s| table(s, Split::Test))
            .transpose()?;
        let score = |w: &EnsembleWeights| -> Result<(f64, Option<f64>)> {
            let a = evaluate_table(&test, w, &config.detector, false)?.video_accuracy;
            let b = cross_test
                .as_ref()
                .map(|t| evaluate_table(t, w, &config.detector, false).map(|r| r.video_accuracy))
                .transpose()?;
            Ok((a, b))
        };
        let mut singles = Vec::new();
        for m in Modality::ALL {
            let w = EnsembleWeights::single(m);
            let (in_domain, cross_family) = score(&w)?;
            singles.push(Row {
                name: row_name(&[m]),
                weights: Some(w),
                in_domain,
                cross_family,
            });
        }
        let mut ablation = Vec::new();
        for ms in ABLATION {
            let w = calibrate_weights(&val.calibration_set(), ms, &config.detector)?.weights;
            let (in_domain, cross_family) = score(&w)?;
            ablation.push(Row {
                name: row_name(ms),
                weights: Some(w),
                in_domain,
                cross_family,
            });
        }
        runs.push(SeedRun {
            seed,
            best_epochs,
            singles,
            ablation,
        });
        all.push(detectors);
        train_time.push(times);
    }
    let mean = |pick: fn(&SeedRun) -> &Vec<Row>| -> Vec<Row> {
        let n = runs.len() as f64;
        (0..pick(&runs[0]).len())
            .map(|i| {
                let rows: Vec<&Row> = runs.iter().map(|r| &pick(r)[i]).collect();
                Row {
                    name: rows[0].name.clone(),
                    weights: None,
                    in_domain: rows.iter().map(|r| r.in_domain).sum::<f64>() / n,
                    cross_family: rows
                        .iter()
                        .map(|r| r.cross_family)
                        .sum::<Option<f64>>()
                        .map(|s| s / n),
                }
            })
            .collect()
    };
    let report = ProtocolReport {
        in_domain_fingerprint: in_domain.fingerprint.clone(),
        cross_family_fingerprint: cross.map(|c| c.fingerprint.clone()),
        singles: mean(|r| &r.singles),
        ablation: mean(|r| &r.ablation),
        runs,
    };
    Ok(ProtocolOutcome {
        report,
        detectors: all,
        train_time,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

pub fn render_rows(title: &str, rows: &[Row]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "{:<10}{:>12}{:>14}", "row", "in-domain", "cross-family");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10}{:>12}{:>14}",
            r.name,
            pct(Some(r.in_domain)),
            pct(r.cross_family)
        );
    }
    s
}

impl ProtocolReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.runs {
            s += &render_rows(
                &format!("seed {} per modality (video accuracy %)", r.seed),
                &r.singles,
            );
            s += &render_rows(&format!("seed {} ensembles", r.seed), &r.ablation);
            s.push('\n');
        }
        s += &render_rows(
            &format!("mean over {} seeds, per modality", self.runs.len()),
            &self.singles,
        );
        s += &render_rows("mean ensembles", &self.ablation);
        s += "A = appearance, M = motion (flow), G = geometry (depth)\n";
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,table,row,in_domain,cross_family\n");
        let mut put = |seed: &str, table: &str, rows: &[Row]| {
            for r in rows {
                let _ = writeln!(
                    s,
                    "{seed},{table},{},{:.6},{}",
                    r.name,
                    r.in_domain,
                    r.cross_family.map_or(String::new(), |v| format!("{v:.6}"))
                );
            }
        };
        for r in &self.runs {
            put(&r.seed.to_string(), "single", &r.singles);
            put(&r.seed.to_string(), "ensemble", &r.ablation);
        }
        put("mean", "single", &self.singles);
        put("mean", "ensemble", &self.ablation);
        s
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        use crate::cvr::cvrt::write_atomic;
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("protocol.txt"), self.to_text().as_bytes())?;
        write_atomic(&dir.join("protocol.csv"), self.to_csv().as_bytes())?;
        let mut j = serde_json::to_vec_pretty(self)?;
        j.push(b'\n');
        write_atomic(&dir.join("protocol.json"), &j)
    }
}
