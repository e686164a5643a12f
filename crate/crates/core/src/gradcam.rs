//! Grad-CAM over (t, h, w) for the 3D classifiers, and localization scoring
//! against ground-truth artifact masks.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cvr::cvrt::{write_atomic, write_cvrt};
use crate::cvr::{FrameSequence, ModalityVolume};
use crate::error::{Error, Result};
use crate::model::ConvNet3D;
use crate::nn::Network;
use crate::tensor::TensorND;

/// Output of the third conv block.
pub const DEFAULT_TARGET_LAYER: &str = "block3";

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    /// `[T, H, W]` in `[0, 1]`.
    pub values: TensorND,
    /// Map at the target layer's resolution before upsampling.
    pub raw: TensorND,
    pub target_layer: String,
}

/// Binary `[T, H, W]` set of voxels an injector touched.
#[derive(Clone, Debug, PartialEq)]
pub struct ArtifactMask(TensorND);

impl ArtifactMask {
    pub fn new(t: TensorND) -> Result<Self> {
        if t.ndim() != 3 {
            return Err(Error::Shape(format!(
                "mask must be [T,H,W], got {:?}",
                t.dims()
            )));
        }
        if t.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Invalid("mask is not binary".into()));
        }
        Ok(Self(t))
    }

    pub fn tensor(&self) -> &TensorND {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.data().iter().filter(|&&v| v == 1.0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// Grad-CAM of the fake logit for one raw volume.
pub fn compute_gradcam(
    model: &ConvNet3D,
    volume: &ModalityVolume,
    target_layer: &str,
) -> Result<Heatmap> {
    let input = model.prepare(volume)?;
    let mut dims = vec![1];
    dims.extend_from_slice(input.dims());
    gradcam_network(
        &model.network,
        &input.reshape(dims)?,
        target_layer,
        model.input_extent,
    )
}

/// Grad-CAM on any network and `[1, C, T, H, W]` input, upsampled to `extent`.
pub fn gradcam_network(
    network: &Network<f32>,
    input: &TensorND,
    target_layer: &str,
    extent: [usize; 3],
) -> Result<Heatmap> {
    let idx = network
        .layer_index(target_layer)
        .ok_or_else(|| Error::UnknownLayer(target_layer.to_string()))?;
    let fwd = network.forward(input, true)?;
    let grads = network.backward(&fwd, &[1.0])?;
    let acts = &fwd.activations.as_ref().expect("cached")[idx + 1];
    let grad = &grads.layer_outputs[idx];
    if acts.ndim() != 5 || acts.dims()[0] != 1 {
        return Err(Error::Invalid(format!(
            "layer {target_layer} is not a conv block output ({:?})",
            acts.dims()
        )));
    }
    let (c, t, h, w) = (
        acts.dims()[1],
        acts.dims()[2],
        acts.dims()[3],
        acts.dims()[4],
    );
    let per = t * h * w;
    let mut raw = vec![0.0f64; per];
    for ch in 0..c {
        let g = &grad.data()[ch * per..(ch + 1) * per];
        let alpha = g.iter().map(|&v| v as f64).sum::<f64>() / per as f64;
        if alpha == 0.0 {
            continue;
        }
        for (r, &a) in raw.iter_mut().zip(&acts.data()[ch * per..(ch + 1) * per]) {
            *r += alpha * a as f64;
        }
    }
    let raw = TensorND::new(
        vec![t, h, w],
        raw.into_iter().map(|v| v.max(0.0) as f32).collect(),
    )?;
    let mut values = trilinear(&raw, extent)?;
    let max = values.max();
    if max > 0.0 {
        for v in values.data_mut() {
            *v /= max;
        }
    } else {
        values.data_mut().fill(0.0);
    }
    values.check_finite("grad-cam heatmap")?;
    Ok(Heatmap {
        values,
        raw,
        target_layer: target_layer.to_string(),
    })
}

/// Separable linear resampling of a `[T, H, W]` map, half-pixel centers,
/// edge clamped.
pub fn trilinear(map: &TensorND, extent: [usize; 3]) -> Result<TensorND> {
    if map.ndim() != 3 {
        return Err(Error::Shape(format!(
            "trilinear needs [T,H,W], got {:?}",
            map.dims()
        )));
    }
    let src = [map.dims()[0], map.dims()[1], map.dims()[2]];
    let mut data = map.data().to_vec();
    let mut dims = src;
    for axis in 0..3 {
        let (n_in, n_out) = (dims[axis], extent[axis]);
        let taps: Vec<(usize, usize, f32)> = (0..n_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5)
                    .clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect();
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let mut out = vec![0.0f32; outer * n_out * inner];
        for a in 0..outer {
            for (o, &(i0, i1, f)) in taps.iter().enumerate() {
                for b in 0..inner {
                    let x0 = data[(a * n_in + i0) * inner + b];
                    let x1 = data[(a * n_in + i1) * inner + b];
                    out[(a * n_out + o) * inner + b] = x0 + (x1 - x0) * f;
                }
            }
        }
        data = out;
        dims[axis] = n_out;
    }
    TensorND::new(dims.to_vec(), data)
}

/// IoU between the heatmap binarized at `>= threshold` and the mask.
pub fn localization_score(heatmap: &TensorND, mask: &ArtifactMask, threshold: f32) -> Result<f64> {
    if heatmap.dims() != mask.tensor().dims() {
        return Err(Error::Shape(format!(
            "heatmap {:?} vs mask {:?}",
            heatmap.dims(),
            mask.tensor().dims()
        )));
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&h, &m) in heatmap.data().iter().zip(mask.tensor().data()) {
        let (a, b) = (h >= threshold, m == 1.0);
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(inter as f64 / union as f64)
}

/// Heatmap of i.i.d. uniform `[0, 1)` values.
pub fn uniform_random_heatmap(dims: &[usize], seed: u64) -> Result<TensorND> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TensorND::from_fn(dims, |_| rng.random::<f32>())
}

/// Monotone black-red-yellow-white ramp.
fn ramp(h: f32) -> [f32; 3] {
    [
        (3.0 * h).clamp(0.0, 1.0),
        (3.0 * h - 1.0).clamp(0.0, 1.0),
        (3.0 * h - 2.0).clamp(0.0, 1.0),
    ]
}

/// Writes `frame_000.png` .. one per heatmap frame, plus `heatmap.cvrt`.
///
/// Each overlay mixes the grayscale frame with the ramp color at weight
/// `0.5 * h`, so a zero heatmap leaves the grayscale frame untouched.
pub fn export_heatmap_frames(
    heatmap: &Heatmap,
    clip: &FrameSequence,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    let d = heatmap.values.dims();
    let (t, fh, fw) = (d[0], clip.height(), clip.width());
    if clip.len() < t {
        return Err(Error::InsufficientFrames {
            have: clip.len(),
            need: t,
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let full = trilinear(&heatmap.values, [t, fh, fw])?;
    let mut paths = Vec::with_capacity(t + 1);
    for k in 0..t {
        let hm = &full.data()[k * fh * fw..(k + 1) * fh * fw];
        let mut img = image::RgbImage::new(fw as u32, fh as u32);
        for y in 0..fh {
            for x in 0..fw {
                let [r, g, b] = clip.rgb(k, y, x);
                let gray = ((r as u32 + g as u32 + b as u32 + 1) / 3) as f32;
                let h = hm[y * fw + x].clamp(0.0, 1.0);
                let a = 0.5 * h;
                let c = ramp(h);
                let px = c.map(|ch| {
                    ((1.0 - a) * gray + a * 255.0 * ch)
                        .round()
                        .clamp(0.0, 255.0) as u8
                });
                img.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png)?;
        let path = out_dir.join(format!("frame_{k:03}.png"));
        write_atomic(&path, buf.get_ref())?;
        paths.push(path);
    }
    let raw_path = out_dir.join("heatmap.cvrt");
    write_cvrt(&raw_path, &heatmap.values)?;
    paths.push(raw_path);
    Ok(paths)
}
