use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cvr::cvrt::write_atomic;
use crate::ensemble::{
    decide_clip, decide_video, fuse_logits, DetectorConfig, EnsembleWeights, Label,
};
use crate::error::{Error, Result};
use crate::synth::{fingerprint, Family, Split};

use super::logits::{LogitSource, LogitTable};
use super::volumes::VolumeStore;

/// Confusion counts with fake as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: Label, predicted: Label) {
        match (truth.is_fake(), predicted.is_fake()) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoResult {
    pub id: String,
    pub label: Label,
    pub family: Family,
    pub predicted: Label,
    pub fake_fraction: f64,
    pub fused_logits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub weights: EnsembleWeights,
    pub epsilon: f64,
    /// Video-level counts.
    pub confusion: Confusion,
    pub video_accuracy: f64,
    pub clip_accuracy: f64,
    /// Video accuracy per source family.
    pub per_family: BTreeMap<String, f64>,
    pub videos: Vec<VideoResult>,
    pub manifest_fingerprint: String,
    /// SHA-256 over the logit source, weights and detector config.
    pub config_fingerprint: String,
    pub seed: Option<u64>,
}

/// Refuses a split whose fake share is outside `[0.4, 0.6]` unless allowed.
pub fn check_balance(table: &LogitTable, allow_imbalanced: bool) -> Result<()> {
    let fakes = table.videos.iter().filter(|v| v.label.is_fake()).count();
    let ratio = fakes as f64 / table.videos.len() as f64;
    if !(0.4..=0.6).contains(&ratio) {
        if !allow_imbalanced {
            return Err(Error::Imbalanced { ratio });
        }
        log::warn!("reporting on an imbalanced split (fake share {ratio:.3})");
    }
    Ok(())
}

/// Fuses, decides and aggregates a logit table.
pub fn evaluate_table(
    table: &LogitTable,
    weights: &EnsembleWeights,
    config: &DetectorConfig,
    allow_imbalanced: bool,
) -> Result<EvalReport> {
    config.validate()?;
    check_balance(table, allow_imbalanced)?;
    let mut confusion = Confusion::default();
    let mut fam: BTreeMap<String, Confusion> = BTreeMap::new();
    let (mut clip_ok, mut clip_n) = (0usize, 0usize);
    let mut videos = Vec::with_capacity(table.videos.len());
    for (v, clips) in table.per_video() {
        let fused = clips
            .iter()
            .map(|l| fuse_logits(l, weights))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<Label> = fused.iter().map(|&l| decide_clip(l, config)).collect();
        clip_ok += labels.iter().filter(|&&l| l == v.label).count();
        clip_n += labels.len();
        let verdict = decide_video(&labels, config)?;
        confusion.add(v.label, verdict.label);
        fam.entry(v.family.to_string())
            .or_default()
            .add(v.label, verdict.label);
        videos.push(VideoResult {
            id: v.id.clone(),
            label: v.label,
            family: v.family,
            predicted: verdict.label,
            fake_fraction: verdict.fake_fraction,
            fused_logits: fused,
        });
    }
    let config_fingerprint =
        fingerprint(serde_json::to_string(&(&table.source, weights, config))?.as_bytes());
    Ok(EvalReport {
        split: table.split,
        weights: *weights,
        epsilon: config.epsilon,
        confusion,
        video_accuracy: confusion.accuracy(),
        clip_accuracy: clip_ok as f64 / clip_n as f64,
        per_family: fam.into_iter().map(|(k, c)| (k, c.accuracy())).collect(),
        videos,
        manifest_fingerprint: table.manifest_fingerprint.clone(),
        config_fingerprint,
        seed: None,
    })
}

/// Scores a manifest split with `source` (through the logit cache when
/// `cache` is set) and evaluates it.
pub fn evaluate(
    source: &dyn LogitSource,
    weights: &EnsembleWeights,
    store: &VolumeStore,
    split: Split,
    config: &DetectorConfig,
    allow_imbalanced: bool,
    cache: bool,
) -> Result<EvalReport> {
    let table = if cache {
        LogitTable::cached(source, store, split)?
    } else {
        LogitTable::compute(source, store, split)?
    };
    evaluate_table(&table, weights, config, allow_imbalanced)
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let c = &self.confusion;
        let w = self.weights;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "split {}  weights a={:.2} m={:.2} g={:.2}  epsilon {}",
            self.split, w.alpha_a, w.alpha_m, w.alpha_g, self.epsilon
        );
        let _ = writeln!(s, "{:<12}{:>10}", "source", "accuracy");
        for (f, acc) in &self.per_family {
            let _ = writeln!(s, "{:<12}{:>9.2}%", f, 100.0 * acc);
        }
        let _ = writeln!(s, "{:<12}{:>9.2}%", "overall", 100.0 * self.video_accuracy);
        let _ = writeln!(
            s,
            "{:<12}{:>9.2}%",
            "clip-level",
            100.0 * self.clip_accuracy
        );
        let _ = writeln!(
            s,
            "TP {}  FP {}  TN {}  FN {}  (n = {})",
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            c.total()
        );
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,label,family,predicted,fake_fraction,fused_logits\n");
        for v in &self.videos {
            let logits: Vec<String> = v.fused_logits.iter().map(|l| format!("{l:.6}")).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{}",
                v.id,
                v.label,
                v.family,
                v.predicted,
                v.fake_fraction,
                logits.join(";")
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut b = serde_json::to_vec_pretty(self)?;
        b.push(b'\n');
        Ok(b)
    }

    /// `report.txt`, `report.csv` and `report.json` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("report.txt"), self.to_text().as_bytes())?;
        write_atomic(&dir.join("report.csv"), self.to_csv().as_bytes())?;
        write_atomic(&dir.join("report.json"), &self.to_json()?)
    }
}
