use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cvr::cvrt::write_atomic;
use crate::cvr::{read_cvrt, write_cvrt, Modality, ModalityVolume};
use crate::ensemble::{CalibrationSet, Label, ModalityLogits};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, ConvNet3D};
use crate::synth::{fingerprint, Family, ManifestEntry, Split};
use crate::tensor::TensorND;

use super::volumes::VolumeStore;

/// Anything that scores the clips of a manifest video.
pub trait LogitSource {
    /// One entry per clip.
    fn clip_logits(
        &self,
        entry: &ManifestEntry,
        store: &VolumeStore,
    ) -> Result<Vec<ModalityLogits>>;

    /// Identifies the source in cache keys and reports.
    fn describe(&self) -> String;
}

/// Up to one trained classifier per modality.
#[derive(Clone, Debug, Default)]
pub struct Detectors {
    pub models: [Option<ConvNet3D>; 3],
}

impl Detectors {
    pub fn from_models(models: impl IntoIterator<Item = ConvNet3D>) -> Result<Self> {
        let mut d = Self::default();
        for m in models {
            let slot = &mut d.models[m.modality.index()];
            if slot.is_some() {
                return Err(Error::Invalid(format!("two {} checkpoints", m.modality)));
            }
            *slot = Some(m);
        }
        Ok(d)
    }

    /// Loads whichever of the three checkpoint paths are given.
    pub fn load(paths: [Option<&Path>; 3]) -> Result<Self> {
        let mut d = Self::default();
        for (m, p) in Modality::ALL.into_iter().zip(paths) {
            if let Some(p) = p {
                let model = load_checkpoint(p)?;
                if model.modality != m {
                    return Err(Error::Invalid(format!(
                        "{} holds a {} model, expected {m}",
                        p.display(),
                        model.modality
                    )));
                }
                d.models[m.index()] = Some(model);
            }
        }
        if d.enabled().is_empty() {
            return Err(Error::Invalid("at least one checkpoint is required".into()));
        }
        Ok(d)
    }

    pub fn get(&self, m: Modality) -> Option<&ConvNet3D> {
        self.models[m.index()].as_ref()
    }

    pub fn enabled(&self) -> Vec<Modality> {
        Modality::ALL
            .into_iter()
            .filter(|m| self.get(*m).is_some())
            .collect()
    }

    /// Logits of every enabled model for one clip's volumes.
    pub fn score(&self, volumes: &[Option<&ModalityVolume>; 3]) -> Result<ModalityLogits> {
        let mut out = ModalityLogits::default();
        for m in self.enabled() {
            let v = volumes[m.index()]
                .ok_or_else(|| Error::Invalid(format!("no {m} volume for an enabled model")))?;
            let model = self.get(m).expect("enabled");
            out.set(m, model.logit(&model.prepare(v)?)?);
        }
        Ok(out)
    }
}

impl LogitSource for Detectors {
    fn clip_logits(
        &self,
        entry: &ManifestEntry,
        store: &VolumeStore,
    ) -> Result<Vec<ModalityLogits>> {
        let mut vols: [Option<Vec<ModalityVolume>>; 3] = Default::default();
        for m in self.enabled() {
            vols[m.index()] = Some(store.volumes(entry, m)?);
        }
        let clips = vols.iter().flatten().map(Vec::len).min().unwrap_or(0);
        (0..clips)
            .map(|k| self.score(&[0, 1, 2].map(|i| vols[i].as_ref().map(|v| &v[k]))))
            .collect()
    }

    fn describe(&self) -> String {
        let parts: Vec<String> = self
            .enabled()
            .into_iter()
            .map(|m| {
                format!(
                    "{}:{:016x}",
                    m.letter(),
                    self.get(m).expect("enabled").param_checksum()
                )
            })
            .collect();
        format!("detectors[{}]", parts.join(","))
    }
}

/// Reads the label: every modality says +4 for fakes and -4 for reals.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleSource;

impl LogitSource for OracleSource {
    fn clip_logits(
        &self,
        entry: &ManifestEntry,
        store: &VolumeStore,
    ) -> Result<Vec<ModalityLogits>> {
        let l = if entry.label.is_fake() { 4.0 } else { -4.0 };
        let n = store.clips(entry)?.len();
        Ok(vec![ModalityLogits::new(Some(l), Some(l), Some(l)); n])
    }

    fn describe(&self) -> String {
        "oracle".into()
    }
}

/// The same logit for every clip and modality.
#[derive(Clone, Copy, Debug)]
pub struct ConstantSource(pub f64);

impl LogitSource for ConstantSource {
    fn clip_logits(
        &self,
        entry: &ManifestEntry,
        store: &VolumeStore,
    ) -> Result<Vec<ModalityLogits>> {
        let n = store.clips(entry)?.len();
        Ok(vec![
            ModalityLogits::new(
                Some(self.0),
                Some(self.0),
                Some(self.0)
            );
            n
        ])
    }

    fn describe(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// Per-video rows of a logit table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableVideo {
    pub id: String,
    pub label: Label,
    pub family: Family,
    pub clips: usize,
}

/// Per-clip logits of one manifest split, in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitTable {
    pub split: Split,
    pub manifest_fingerprint: String,
    pub source: String,
    pub videos: Vec<TableVideo>,
    /// Clip-major, one per clip of every video in order.
    pub logits: Vec<ModalityLogits>,
}

#[derive(Serialize, Deserialize)]
struct TableIndex {
    split: Split,
    manifest_fingerprint: String,
    source: String,
    present: [bool; 3],
    videos: Vec<TableVideo>,
}

impl LogitTable {
    pub fn compute(source: &dyn LogitSource, store: &VolumeStore, split: Split) -> Result<Self> {
        let manifest = store.manifest();
        let (mut videos, mut logits) = (Vec::new(), Vec::new());
        for e in manifest.manifest.split(split) {
            let clips = source.clip_logits(e, store)?;
            if clips.is_empty() {
                return Err(Error::InsufficientFrames {
                    have: 0,
                    need: crate::cvr::CLIP_LEN,
                });
            }
            for c in &clips {
                c.validate()?;
            }
            videos.push(TableVideo {
                id: e.id.clone(),
                label: e.label,
                family: e.family,
                clips: clips.len(),
            });
            logits.extend(clips);
        }
        if videos.is_empty() {
            return Err(Error::Empty(format!("split `{split}`")));
        }
        Ok(Self {
            split,
            manifest_fingerprint: manifest.fingerprint.clone(),
            source: source.describe(),
            videos,
            logits,
        })
    }

    /// Modalities present in every clip.
    pub fn present(&self) -> [bool; 3] {
        [0, 1, 2].map(|i| self.logits.iter().all(|l| l.0[i].is_some()))
    }

    /// Clip-level calibration data: every clip carries its video's label.
    pub fn calibration_set(&self) -> CalibrationSet {
        let labels = self
            .videos
            .iter()
            .flat_map(|v| std::iter::repeat_n(v.label, v.clips))
            .collect();
        CalibrationSet {
            logits: self.logits.clone(),
            labels,
        }
    }

    /// Clip logits grouped by video.
    pub fn per_video(&self) -> impl Iterator<Item = (&TableVideo, &[ModalityLogits])> {
        let mut start = 0;
        self.videos.iter().map(move |v| {
            let s = &self.logits[start..start + v.clips];
            start += v.clips;
            (v, s)
        })
    }

    /// Writes `<stem>.cvrt` (`[clips, 3]`, absent modalities as 0) and
    /// `<stem>.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        let present = self.present();
        let data = self
            .logits
            .iter()
            .flat_map(|l| [0, 1, 2].map(|i| l.0[i].unwrap_or(0.0) as f32))
            .collect();
        if let Some(dir) = stem.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_cvrt(
            stem.with_extension("cvrt"),
            &TensorND::new(vec![self.logits.len(), 3], data)?,
        )?;
        let index = TableIndex {
            split: self.split,
            manifest_fingerprint: self.manifest_fingerprint.clone(),
            source: self.source.clone(),
            present,
            videos: self.videos.clone(),
        };
        write_atomic(
            &stem.with_extension("json"),
            &serde_json::to_vec_pretty(&index)?,
        )
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let jp = stem.with_extension("json");
        let bytes = std::fs::read(&jp).map_err(|e| Error::io(&jp, e))?;
        let index: TableIndex = serde_json::from_slice(&bytes)?;
        let t = read_cvrt(stem.with_extension("cvrt"))?;
        let n: usize = index.videos.iter().map(|v| v.clips).sum();
        if t.dims() != [n, 3] {
            return Err(Error::Shape(format!(
                "logit cache {:?} for {n} clips",
                t.dims()
            )));
        }
        let logits = t
            .data()
            .chunks_exact(3)
            .map(|r| ModalityLogits([0, 1, 2].map(|i| index.present[i].then_some(r[i] as f64))))
            .collect();
        Ok(Self {
            split: index.split,
            manifest_fingerprint: index.manifest_fingerprint,
            source: index.source,
            videos: index.videos,
            logits,
        })
    }

    /// Cache location beside the manifest for a given source and split.
    pub fn cache_stem(store: &VolumeStore, source: &dyn LogitSource, split: Split) -> PathBuf {
        let key = fingerprint(source.describe().as_bytes());
        let m = store.manifest();
        m.root
            .join("logits")
            .join(format!("{split}-{}-{}", &m.fingerprint[..12], &key[..12]))
    }

    /// Loads the cached table if it matches, otherwise computes and caches.
    /// Logits round-trip through f32 either way, so fresh and cached
    /// tables agree bit for bit.
    pub fn cached(source: &dyn LogitSource, store: &VolumeStore, split: Split) -> Result<Self> {
        let stem = Self::cache_stem(store, source, split);
        if stem.with_extension("json").exists() {
            let t = Self::read(&stem)?;
            if t.source == source.describe()
                && t.manifest_fingerprint == store.manifest().fingerprint
            {
                return Ok(t);
            }
        }
        Self::compute(source, store, split)?.write(&stem)?;
        Self::read(&stem)
    }
}
