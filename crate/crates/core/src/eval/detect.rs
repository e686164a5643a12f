use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cvr::{
    read_cvrt, read_frames, segment_clips, FrameSequence, Modality, ModalityVolume, CLIP_LEN,
};
use crate::ensemble::{
    decide_clip, decide_video, fuse_logits, DetectorConfig, EnsembleWeights, Label, ModalityLogits,
    VideoVerdict,
};
use crate::error::{Error, Result};
use crate::gradcam::{compute_gradcam, export_heatmap_frames, DEFAULT_TARGET_LAYER};
use crate::tensor::TensorND;

use super::logits::Detectors;
use super::volumes::{extract_volume, frame_range, WORK_SIZE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipBreakdown {
    pub index: usize,
    /// First frame of the clip in the video.
    pub start: usize,
    pub logits: ModalityLogits,
    pub fused: f64,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// `None` when the video is shorter than one clip.
    pub verdict: Option<VideoVerdict>,
    pub frames: usize,
    pub clips: Vec<ClipBreakdown>,
}

pub struct DetectInput {
    pub frames: FrameSequence,
    /// Per-frame metric depth `[T, H, W]`, needed by a geometry model.
    pub depth: Option<TensorND>,
}

impl DetectInput {
    /// Reads frames from `path`; depth comes from `depth` or, failing
    /// that, a `depth.cvrt` next to the frames.
    pub fn read(path: &Path, depth: Option<&Path>) -> Result<Self> {
        let frames = read_frames(path)?;
        let sibling = path
            .parent()
            .map(|p| p.join("depth.cvrt"))
            .filter(|p| p.exists());
        let depth = depth
            .map(Path::to_path_buf)
            .or(sibling)
            .map(read_cvrt)
            .transpose()?;
        Ok(Self { frames, depth })
    }
}

fn clip_volumes(
    detectors: &Detectors,
    clip: &FrameSequence,
    depth: Option<&TensorND>,
    start: usize,
) -> Result<[Option<ModalityVolume>; 3]> {
    let mut out: [Option<ModalityVolume>; 3] = Default::default();
    for m in detectors.enabled() {
        let d = match (m, depth) {
            (Modality::Depth, Some(d)) => Some(frame_range(d, start, clip.len())?),
            (Modality::Depth, None) => {
                return Err(Error::MissingFile(PathBuf::from(
                    "depth maps for the geometry checkpoint",
                )))
            }
            _ => None,
        };
        out[m.index()] = Some(extract_volume(m, clip, d.as_ref(), WORK_SIZE)?);
    }
    Ok(out)
}

/// Segments, scores, fuses and votes one video.
pub fn detect(
    input: &DetectInput,
    detectors: &Detectors,
    weights: &EnsembleWeights,
    config: &DetectorConfig,
) -> Result<Detection> {
    config.validate()?;
    let seg = segment_clips(&input.frames, config.clip_len)?;
    if seg.insufficient {
        return Ok(Detection {
            verdict: None,
            frames: input.frames.len(),
            clips: vec![],
        });
    }
    let mut clips = Vec::with_capacity(seg.clips.len());
    for (k, clip) in seg.clips.iter().enumerate() {
        let start = k * config.clip_len;
        let vols = clip_volumes(detectors, clip, input.depth.as_ref(), start)?;
        let logits = detectors.score(&[0, 1, 2].map(|i| vols[i].as_ref()))?;
        let fused = fuse_logits(&logits, weights)?;
        clips.push(ClipBreakdown {
            index: k,
            start,
            logits,
            fused,
            label: decide_clip(fused, config),
        });
    }
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    Ok(Detection {
        verdict: Some(decide_video(&labels, config)?),
        frames: input.frames.len(),
        clips,
    })
}

/// Grad-CAM overlays of the `top_k` clips with the largest fused logits,
/// under `out/clip_<k>/<modality>/`.
pub fn export_top_heatmaps(
    input: &DetectInput,
    detectors: &Detectors,
    detection: &Detection,
    top_k: usize,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let mut order: Vec<&ClipBreakdown> = detection.clips.iter().collect();
    order.sort_by(|a, b| b.fused.total_cmp(&a.fused).then(a.index.cmp(&b.index)));
    let mut written = Vec::new();
    for c in order.into_iter().take(top_k) {
        let clip = input
            .frames
            .slice(c.start, CLIP_LEN.min(input.frames.len() - c.start))?;
        let vols = clip_volumes(detectors, &clip, input.depth.as_ref(), c.start)?;
        for m in detectors.enabled() {
            let model = detectors.get(m).expect("enabled");
            let v = vols[m.index()].as_ref().expect("built for enabled");
            let h = compute_gradcam(model, v, DEFAULT_TARGET_LAYER)?;
            let dir = out.join(format!("clip_{:03}", c.index)).join(m.as_str());
            written.extend(export_heatmap_frames(&h, &clip, dir)?);
        }
    }
    Ok(written)
}
