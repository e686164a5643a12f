use std::path::PathBuf;

use crate::cvr::{
    extract_appearance_proxy, extract_flow, load_depth, read_cvrt, read_frames, segment_clips,
    write_cvrt, DepthKind, FlowParams, FrameSequence, Modality, ModalityVolume, CLIP_LEN,
    VOLUME_FRAMES,
};
use crate::error::{Error, Result};
use crate::gradcam::ArtifactMask;
use crate::synth::{LoadedManifest, ManifestEntry};
use crate::tensor::TensorND;

/// Spatial extent of every volume the classifiers see.
pub const WORK_SIZE: usize = 32;

/// Built-in volume for one 25-frame clip. `depth` holds the clip's
/// per-frame metric maps `[T, H, W]` and is required for geometry.
pub fn extract_volume(
    modality: Modality,
    clip: &FrameSequence,
    depth: Option<&TensorND>,
    size: usize,
) -> Result<ModalityVolume> {
    match modality {
        Modality::Appearance => extract_appearance_proxy(clip, (size, size)),
        Modality::Flow => {
            let params = FlowParams {
                out_size: Some((size, size)),
                ..FlowParams::default()
            };
            extract_flow(clip, &params)
        }
        Modality::Depth => {
            let maps = depth.ok_or_else(|| {
                Error::MissingFile(PathBuf::from("depth maps for the geometry modality"))
            })?;
            load_depth(maps, DepthKind::Metric, Some((size, size)))
        }
    }
}

/// Frames `[start, start + len)` of a `[T, H, W]` tensor.
pub fn frame_range(maps: &TensorND, start: usize, len: usize) -> Result<TensorND> {
    let d = maps.dims();
    if d.len() != 3 || start + len > d[0] {
        return Err(Error::Shape(format!(
            "frames {start}..{} of {d:?}",
            start + len
        )));
    }
    let plane = d[1] * d[2];
    TensorND::new(
        vec![len, d[1], d[2]],
        maps.data()[start * plane..(start + len) * plane].to_vec(),
    )
}

/// Per-clip volumes of manifest videos, optionally cached as CVRT under
/// the manifest directory.
pub struct VolumeStore<'a> {
    manifest: &'a LoadedManifest,
    cache: Option<PathBuf>,
    size: usize,
}

impl<'a> VolumeStore<'a> {
    pub fn new(manifest: &'a LoadedManifest, cache: bool) -> Self {
        let cache = cache.then(|| {
            manifest
                .root
                .join(format!("volumes-{}", &manifest.fingerprint[..12]))
        });
        Self {
            manifest,
            cache,
            size: WORK_SIZE,
        }
    }

    pub fn manifest(&self) -> &LoadedManifest {
        self.manifest
    }

    fn cache_path(&self, entry: &ManifestEntry, m: Modality) -> Option<PathBuf> {
        self.cache
            .as_ref()
            .map(|c| c.join(m.as_str()).join(format!("{}.cvrt", entry.id)))
    }

    pub fn frames(&self, entry: &ManifestEntry) -> Result<FrameSequence> {
        read_frames(self.manifest.resolve(&entry.frames_path))
    }

    pub fn clips(&self, entry: &ManifestEntry) -> Result<Vec<FrameSequence>> {
        let seg = segment_clips(&self.frames(entry)?, CLIP_LEN)?;
        if seg.insufficient {
            return Err(Error::InsufficientFrames {
                have: seg.dropped,
                need: CLIP_LEN,
            });
        }
        Ok(seg.clips)
    }

    /// One volume per clip of the video.
    pub fn volumes(&self, entry: &ManifestEntry, m: Modality) -> Result<Vec<ModalityVolume>> {
        let cached = self.cache_path(entry, m);
        if let Some(p) = cached.as_ref().filter(|p| p.exists()) {
            let t = read_cvrt(p)?;
            return (0..t.dims()[0])
                .map(|i| ModalityVolume::new(m, t.index_outer(i)?))
                .collect();
        }
        let clips = self.clips(entry)?;
        let depth = match m {
            Modality::Depth => Some(read_cvrt(self.manifest.resolve(&entry.gt.depth))?),
            _ => None,
        };
        let vols = clips
            .iter()
            .enumerate()
            .map(|(k, clip)| {
                let d = depth
                    .as_ref()
                    .map(|d| frame_range(d, k * CLIP_LEN, CLIP_LEN))
                    .transpose()?;
                extract_volume(m, clip, d.as_ref(), self.size)
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(p) = cached {
            let parent = p.parent().expect("cache file has a parent");
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            let refs: Vec<&TensorND> = vols.iter().map(|v| &v.tensor).collect();
            write_cvrt(&p, &TensorND::stack(&refs)?)?;
        }
        Ok(vols)
    }

    /// Ground-truth artifact masks `[24, size, size]` per clip, aligned with
    /// the modality's frames; `None` for real videos.
    pub fn masks(&self, entry: &ManifestEntry, m: Modality) -> Result<Option<Vec<ArtifactMask>>> {
        let Some(rel) = &entry.gt.mask else {
            return Ok(None);
        };
        let mask = read_cvrt(self.manifest.resolve(rel))?;
        let clips = mask.dims()[0] / CLIP_LEN;
        (0..clips)
            .map(|k| {
                let clip = frame_range(&mask, k * CLIP_LEN, CLIP_LEN)?;
                ArtifactMask::new(mask_volume(&clip, m, self.size)?)
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

/// Downsamples a 25-frame `[T, H, W]` pixel mask to `[24, size, size]`:
/// a cell is set if any covered pixel is. Flow frame `t` spans frames `t`
/// and `t + 1`.
pub fn mask_volume(mask: &TensorND, m: Modality, size: usize) -> Result<TensorND> {
    let d = mask.dims();
    if d.len() != 3 || d[0] < VOLUME_FRAMES + 1 || d[1] < size || d[2] < size {
        return Err(Error::Shape(format!(
            "mask {d:?} for a {size}x{size} volume"
        )));
    }
    let (h, w) = (d[1], d[2]);
    let at = |t: usize, y: usize, x: usize| mask.data()[(t * h + y) * w + x] != 0.0;
    let mut out = vec![0.0f32; VOLUME_FRAMES * size * size];
    for t in 0..VOLUME_FRAMES {
        let frames: &[usize] = if m == Modality::Flow {
            &[t, t + 1]
        } else {
            &[t]
        };
        for cy in 0..size {
            for cx in 0..size {
                let hit = frames.iter().any(|&f| {
                    (cy * h / size..(cy + 1) * h / size)
                        .any(|y| (cx * w / size..(cx + 1) * w / size).any(|x| at(f, y, x)))
                });
                out[(t * size + cy) * size + cx] = f32::from(u8::from(hit));
            }
        }
    }
    TensorND::new(vec![VOLUME_FRAMES, size, size], out)
}
