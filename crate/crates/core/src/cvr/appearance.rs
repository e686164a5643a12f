use crate::error::{Error, Result};
use crate::tensor::TensorND;

use super::{FrameSequence, Modality, ModalityVolume, VOLUME_FRAMES};

/// Mean R, G, B; intensity std; mean |d/dx|; mean |d/dy|.
pub const APPEARANCE_CHANNELS: usize = 6;

/// Cell `i` of `n` along an axis of length `len` covers `i*len/n .. (i+1)*len/n`.
fn cell_bounds(i: usize, n: usize, len: usize) -> (usize, usize) {
    (i * len / n, (i + 1) * len / n)
}

/// Grid-statistics appearance features for the first 24 frames of a clip.
///
/// Output `[6, 24, gh, gw]`; each frame's cells depend on that frame only.
pub fn extract_appearance_proxy(
    clip: &FrameSequence,
    grid: (usize, usize),
) -> Result<ModalityVolume> {
    let (gh, gw) = grid;
    let (h, w) = (clip.height(), clip.width());
    if clip.len() < VOLUME_FRAMES {
        return Err(Error::InsufficientFrames {
            have: clip.len(),
            need: VOLUME_FRAMES,
        });
    }
    if gh == 0 || gw == 0 || gh > h || gw > w {
        return Err(Error::Invalid(format!("grid {gh}x{gw} for {h}x{w} frames")));
    }
    let plane = VOLUME_FRAMES * gh * gw;
    let mut out = vec![0.0f32; APPEARANCE_CHANNELS * plane];
    for t in 0..VOLUME_FRAMES {
        let frame = clip.frame(t);
        let inten = clip.intensity(t);
        let at = |y: usize, x: usize| inten[y * w + x];
        for cy in 0..gh {
            let (y0, y1) = cell_bounds(cy, gh, h);
            for cx in 0..gw {
                let (x0, x1) = cell_bounds(cx, gw, w);
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                let mut acc = [0.0f64; 7];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = &frame[(y * w + x) * 3..(y * w + x) * 3 + 3];
                        acc[0] += p[0] as f64;
                        acc[1] += p[1] as f64;
                        acc[2] += p[2] as f64;
                        let i = at(y, x) as f64;
                        acc[3] += i;
                        acc[4] += i * i;
                        let gx = (at(y, (x + 1).min(w - 1)) - at(y, x.saturating_sub(1))) / 2.0;
                        let gy = (at((y + 1).min(h - 1), x) - at(y.saturating_sub(1), x)) / 2.0;
                        acc[5] += gx.abs() as f64;
                        acc[6] += gy.abs() as f64;
                    }
                }
                let mean_i = acc[3] / n;
                let std_i = (acc[4] / n - mean_i * mean_i).max(0.0).sqrt();
                let values = [
                    acc[0] / n / 255.0,
                    acc[1] / n / 255.0,
                    acc[2] / n / 255.0,
                    std_i,
                    acc[5] / n,
                    acc[6] / n,
                ];
                let cell = (t * gh + cy) * gw + cx;
                for (c, v) in values.iter().enumerate() {
                    out[c * plane + cell] = *v as f32;
                }
            }
        }
    }
    let tensor = TensorND::new(vec![APPEARANCE_CHANNELS, VOLUME_FRAMES, gh, gw], out)?;
    ModalityVolume::new(Modality::Appearance, tensor)
}
