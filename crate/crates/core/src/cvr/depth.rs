use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorND;

use super::resample::area_resample;
use super::{Modality, ModalityVolume, VOLUME_FRAMES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthKind {
    /// Meters; passed through without per-clip rescaling.
    Metric,
    /// Unknown scale; min-max normalized to `[0, 1]` per clip.
    Relative,
}

/// Builds a `[1, 24, h, w]` depth volume from per-frame maps `[T, H, W]`
/// (or `[1, T, H, W]`), using the first 24 frames.
pub fn load_depth(
    maps: &TensorND,
    kind: DepthKind,
    out_size: Option<(usize, usize)>,
) -> Result<ModalityVolume> {
    let d = maps.dims();
    let (t, h, w) = match *d {
        [t, h, w] => (t, h, w),
        [1, t, h, w] => (t, h, w),
        _ => {
            return Err(Error::Shape(format!(
                "depth maps must be [T,H,W], got {d:?}"
            )))
        }
    };
    if t < VOLUME_FRAMES {
        return Err(Error::InsufficientFrames {
            have: t,
            need: VOLUME_FRAMES,
        });
    }
    let src = &maps.data()[..VOLUME_FRAMES * h * w];
    if kind == DepthKind::Metric && src.iter().any(|&z| z < 0.0) {
        return Err(Error::Invalid("metric depth must be non-negative".into()));
    }
    let (oh, ow) = out_size.unwrap_or((h, w));
    let mut out = Vec::with_capacity(VOLUME_FRAMES * oh * ow);
    for plane in src.chunks(h * w) {
        out.extend(area_resample(plane, h, w, oh, ow)?);
    }
    if kind == DepthKind::Relative {
        let (lo, hi) = out
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &z| {
                (lo.min(z), hi.max(z))
            });
        let span = hi - lo;
        for z in &mut out {
            *z = if span > 0.0 { (*z - lo) / span } else { 0.0 };
        }
    }
    let tensor = TensorND::new(vec![1, VOLUME_FRAMES, oh, ow], out)?;
    tensor.check_finite("depth volume")?;
    ModalityVolume::new(Modality::Depth, tensor)
}
