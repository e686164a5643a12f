use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cvr::cvrt::write_atomic;
use crate::cvr::{write_cvrt, write_frames_raw};
use crate::ensemble::Label;
use crate::error::{Error, Result};
use crate::tensor::TensorND;

use super::injector::{sample_and_apply, Family, Injector};
use super::render::{render, Edits, Render};
use super::scene::{random_scene, SceneSpec, FRAME_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtPaths {
    pub depth: String,
    pub flow: String,
    pub mask: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub label: Label,
    pub family: Family,
    pub split: Split,
    /// Relative to the manifest's directory, like every path below.
    pub frames_path: String,
    pub gt: GtPaths,
    pub injectors: Vec<Injector>,
}

/// The corpus index, serialized as a bare JSON array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

/// A manifest read from disk, with what is needed to resolve its paths.
#[derive(Clone, Debug)]
pub struct LoadedManifest {
    pub manifest: CorpusManifest,
    pub path: PathBuf,
    pub root: PathBuf,
    /// Hex SHA-256 of the manifest bytes.
    pub fingerprint: String,
}

pub fn fingerprint(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl CorpusManifest {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn families(&self) -> Vec<Family> {
        let mut f: Vec<Family> = self.entries.iter().map(|e| e.family).collect();
        f.sort_by_key(|f| f.to_string());
        f.dedup();
        f
    }
}

impl LoadedManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let manifest: CorpusManifest = serde_json::from_slice(&bytes)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            manifest,
            path: path.to_path_buf(),
            root,
            fingerprint: fingerprint(&bytes),
        })
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub family: Family,
    /// Real/fake pairs for training, before the validation carve-out.
    pub n_train: usize,
    pub n_test: usize,
    /// Share of the training pairs (the last ones) labelled `val`.
    pub val_fraction: f64,
    pub seed: u64,
    pub size: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            family: Family::A,
            n_train: 200,
            n_test: 50,
            val_fraction: 0.1,
            seed: 0,
            size: FRAME_SIZE,
        }
    }
}

/// One generated video and its ground truth.
#[derive(Clone, Debug)]
pub struct Video {
    pub label: Label,
    pub scene: SceneSpec,
    pub render: Render,
    /// `[T, H, W]`; empty for real videos.
    pub mask: Option<Vec<u8>>,
    pub injectors: Vec<Injector>,
}

/// Scene seeds depend on the split and pair index only, so corpora of
/// both families built with one seed share their scenes.
pub fn scene_seed(seed: u64, split: Split, index: usize) -> u64 {
    let tag = match split {
        Split::Train | Split::Val => 1u64,
        Split::Test => 2,
    };
    let mut z = seed
        ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders the real and the fake twin of one scene.
pub fn generate_pair(scene_seed: u64, family: Family, size: usize) -> Result<(Video, Video)> {
    let scene = random_scene(scene_seed, size);
    let clean = render(&scene, &Edits::identity(&scene))?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    rng.set_stream(7);
    let (injectors, fake) = sample_and_apply(&mut rng, family, &scene, &clean)?;
    let real = Video {
        label: Label::Real,
        scene: scene.clone(),
        render: clean,
        mask: None,
        injectors: vec![],
    };
    let fake = Video {
        label: Label::Fake,
        scene,
        render: fake.render,
        mask: Some(fake.mask),
        injectors,
    };
    Ok((real, fake))
}

fn write_video(dir: &Path, v: &Video) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = v.render.size();
    let t = v.render.frames.len();
    write_frames_raw(dir.join("frames.rgb"), &v.render.frames)?;
    write_cvrt(
        dir.join("depth.cvrt"),
        &TensorND::new(vec![t, n, n], v.render.depth.clone())?,
    )?;
    write_cvrt(
        dir.join("flow.cvrt"),
        &TensorND::new(vec![2, t - 1, n, n], v.render.flow.clone())?,
    )?;
    if let Some(mask) = &v.mask {
        let data = mask.iter().map(|&m| m as f32).collect();
        write_cvrt(dir.join("mask.cvrt"), &TensorND::new(vec![t, n, n], data)?)?;
    }
    Ok(())
}

fn entry(id: &str, v: &Video, family: Family, split: Split) -> ManifestEntry {
    ManifestEntry {
        id: id.to_string(),
        label: v.label,
        family,
        split,
        frames_path: format!("{id}/frames.rgb"),
        gt: GtPaths {
            depth: format!("{id}/depth.cvrt"),
            flow: format!("{id}/flow.cvrt"),
            mask: v.mask.as_ref().map(|_| format!("{id}/mask.cvrt")),
        },
        injectors: v.injectors.clone(),
    }
}

/// Generates the corpus under `out_dir` and writes `out_dir/manifest.json`.
pub fn build_corpus(config: &CorpusConfig, out_dir: impl AsRef<Path>) -> Result<LoadedManifest> {
    let out = out_dir.as_ref();
    if config.n_train + config.n_test == 0 {
        return Err(Error::Invalid("corpus needs at least one pair".into()));
    }
    if !(0.0..1.0).contains(&config.val_fraction) {
        return Err(Error::Invalid(format!(
            "val_fraction {} not in [0, 1)",
            config.val_fraction
        )));
    }
    if config.size < 16 {
        return Err(Error::Invalid(format!(
            "frame size {} below 16",
            config.size
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let n_val = (config.n_train as f64 * config.val_fraction).round() as usize;
    let mut entries = Vec::with_capacity(2 * (config.n_train + config.n_test));
    let jobs = (0..config.n_train)
        .map(|i| {
            (
                if i >= config.n_train - n_val {
                    Split::Val
                } else {
                    Split::Train
                },
                i,
            )
        })
        .chain((0..config.n_test).map(|i| (Split::Test, i)));
    for (split, i) in jobs {
        let (real, fake) = generate_pair(
            scene_seed(config.seed, split, i),
            config.family,
            config.size,
        )?;
        let group = if split == Split::Test {
            "test"
        } else {
            "train"
        };
        for v in [&real, &fake] {
            let id = format!("{group}-{i:04}-{}", v.label);
            write_video(&out.join(&id), v)?;
            entries.push(entry(&id, v, config.family, split));
        }
    }
    let manifest = CorpusManifest { entries };
    let bytes = manifest.to_bytes()?;
    let path = out.join("manifest.json");
    write_atomic(&path, &bytes)?;
    log::info!(
        "wrote {} videos to {}",
        manifest.entries.len(),
        out.display()
    );
    Ok(LoadedManifest {
        manifest,
        path,
        root: out.to_path_buf(),
        fingerprint: fingerprint(&bytes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(family: Family, seed: u64) -> CorpusConfig {
        CorpusConfig {
            family,
            n_train: 5,
            n_test: 2,
            val_fraction: 0.2,
            seed,
            size: 32,
        }
    }

    #[test]
    fn counts_and_splits_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_corpus(&small(Family::A, 1), dir.path())
            .unwrap()
            .manifest;
        assert_eq!(m.entries.len(), 14);
        assert_eq!(m.split(Split::Train).count(), 8);
        assert_eq!(m.split(Split::Val).count(), 2);
        assert_eq!(m.split(Split::Test).count(), 4);
        for s in [Split::Train, Split::Val, Split::Test] {
            let fakes = m.split(s).filter(|e| e.label == Label::Fake).count();
            assert_eq!(2 * fakes, m.split(s).count());
        }
        for e in &m.entries {
            assert_eq!(e.label == Label::Fake, e.gt.mask.is_some());
            assert_eq!(e.label == Label::Fake, !e.injectors.is_empty());
            assert!(dir.path().join(&e.frames_path).exists());
        }
    }

    #[test]
    fn manifest_json_shape() {
        let dir = tempfile::tempdir().unwrap();
        let loaded = build_corpus(&small(Family::B, 2), dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&loaded.path).unwrap()).unwrap();
        let first = &v.as_array().unwrap()[1];
        for key in [
            "id",
            "label",
            "family",
            "split",
            "frames_path",
            "gt",
            "injectors",
        ] {
            assert!(first.get(key).is_some(), "{key}");
        }
        assert_eq!(first["label"], "fake");
        assert_eq!(first["family"], "B");
        let inj = &first["injectors"][0];
        assert!(
            inj["kind"].is_string() && inj["magnitude"].is_number() && inj["frames"].is_array()
        );
        assert!(v[0]["gt"]["mask"].is_null());
        let back = LoadedManifest::read(&loaded.path).unwrap();
        assert_eq!(back.fingerprint, loaded.fingerprint);
        assert_eq!(back.manifest, loaded.manifest);
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = build_corpus(&small(Family::A, 9), a.path()).unwrap();
        let mb = build_corpus(&small(Family::A, 9), b.path()).unwrap();
        assert_eq!(ma.fingerprint, mb.fingerprint);
        for e in &ma.manifest.entries {
            for rel in [&e.frames_path, &e.gt.depth, &e.gt.flow] {
                let x = std::fs::read(a.path().join(rel)).unwrap();
                let y = std::fs::read(b.path().join(rel)).unwrap();
                assert_eq!(fingerprint(&x), fingerprint(&y), "{rel}");
            }
        }
    }
}
