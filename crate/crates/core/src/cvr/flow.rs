//! Dense pyramidal Lucas-Kanade optical flow.

use crate::error::{Error, Result};
use crate::tensor::TensorND;

use super::resample::area_resample;
use super::{FrameSequence, Modality, ModalityVolume, CLIP_LEN, VOLUME_FRAMES};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowParams {
    pub levels: usize,
    pub window: usize,
    pub iterations: usize,
    /// Windows whose structure tensor has a smaller minimum eigenvalue get
    /// no update (intensities in `[0, 1]`).
    pub min_eigen: f32,
    /// Tikhonov term added to the structure tensor diagonal.
    pub damping: f32,
    /// Output `(h, w)`; `None` keeps the frame resolution.
    pub out_size: Option<(usize, usize)>,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 3,
            window: 5,
            iterations: 3,
            min_eigen: 1e-6,
            damping: 1e-5,
            out_size: Some((32, 32)),
        }
    }
}

impl FlowParams {
    pub fn native() -> Self {
        Self {
            out_size: None,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
struct Image {
    h: usize,
    w: usize,
    px: Vec<f32>,
}

impl Image {
    #[inline]
    fn at(&self, y: isize, x: isize) -> f32 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.px[y * self.w + x]
    }

    /// Bilinear sample with edge clamping; integer coordinates are exact.
    #[inline]
    fn sample(&self, y: f32, x: f32) -> f32 {
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let (yi, xi) = (y0 as isize, x0 as isize);
        let top = self.at(yi, xi) * (1.0 - fx) + self.at(yi, xi + 1) * fx;
        let bottom = self.at(yi + 1, xi) * (1.0 - fx) + self.at(yi + 1, xi + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Binomial [1 4 6 4 1] blur then 2x subsampling.
    fn pyr_down(&self) -> Image {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let mut tmp = vec![0.0f32; self.h * self.w];
        for y in 0..self.h {
            for x in 0..self.w {
                tmp[y * self.w + x] = (0..5)
                    .map(|k| K[k] * self.at(y as isize, x as isize + k as isize - 2))
                    .sum();
            }
        }
        let tmp = Image {
            h: self.h,
            w: self.w,
            px: tmp,
        };
        let (h, w) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let mut px = vec![0.0f32; h * w];
        for y in 0..h {
            for x in 0..w {
                px[y * w + x] = (0..5)
                    .map(|k| K[k] * tmp.at((2 * y) as isize + k as isize - 2, (2 * x) as isize))
                    .sum();
            }
        }
        Image { h, w, px }
    }

    /// Sum over a `(2r+1)^2` window with edge replication.
    fn box_sum(&self, r: isize) -> Vec<f32> {
        let mut rows = vec![0.0f32; self.h * self.w];
        for y in 0..self.h {
            for x in 0..self.w {
                rows[y * self.w + x] = (-r..=r).map(|d| self.at(y as isize, x as isize + d)).sum();
            }
        }
        let rows = Image {
            h: self.h,
            w: self.w,
            px: rows,
        };
        let mut out = vec![0.0f32; self.h * self.w];
        for y in 0..self.h {
            for x in 0..self.w {
                out[y * self.w + x] = (-r..=r).map(|d| rows.at(y as isize + d, x as isize)).sum();
            }
        }
        out
    }

    fn with(&self, px: Vec<f32>) -> Image {
        Image {
            h: self.h,
            w: self.w,
            px,
        }
    }
}

/// Largest per-iteration update, in pixels of the current level.
const MAX_STEP: f32 = 1.0;

fn gradients(img: &Image) -> (Vec<f32>, Vec<f32>) {
    let (h, w) = (img.h as isize, img.w as isize);
    let mut gx = Vec::with_capacity(img.px.len());
    let mut gy = Vec::with_capacity(img.px.len());
    for y in 0..h {
        for x in 0..w {
            gx.push((img.at(y, x + 1) - img.at(y, x - 1)) / 2.0);
            gy.push((img.at(y + 1, x) - img.at(y - 1, x)) / 2.0);
        }
    }
    (gx, gy)
}

fn pyramid(base: Image, levels: usize, window: usize) -> Vec<Image> {
    let mut pyr = vec![base];
    while pyr.len() < levels {
        let last = pyr.last().expect("non-empty");
        if last.h.div_ceil(2) < window || last.w.div_ceil(2) < window {
            break;
        }
        let next = last.pyr_down();
        pyr.push(next);
    }
    pyr
}

/// Flow `(u, v)` in pixels from `prev` to `next`, both `h x w` intensities.
pub fn flow_pair(
    prev: &[f32],
    next: &[f32],
    h: usize,
    w: usize,
    params: &FlowParams,
) -> Result<(Vec<f32>, Vec<f32>)> {
    if prev.len() != h * w || next.len() != h * w {
        return Err(Error::Shape(format!("flow frames must be {h}x{w}")));
    }
    if params.window % 2 == 0 || params.window < 3 || params.levels == 0 {
        return Err(Error::Invalid(format!(
            "flow window {} / levels {}",
            params.window, params.levels
        )));
    }
    let r = (params.window / 2) as isize;
    let p0 = pyramid(
        Image {
            h,
            w,
            px: prev.to_vec(),
        },
        params.levels,
        params.window,
    );
    let p1 = pyramid(
        Image {
            h,
            w,
            px: next.to_vec(),
        },
        params.levels,
        params.window,
    );

    let mut u: Vec<f32> = Vec::new();
    let mut v: Vec<f32> = Vec::new();
    for level in (0..p0.len()).rev() {
        let (i0, i1) = (&p0[level], &p1[level]);
        let (lh, lw) = (i0.h, i0.w);
        if u.is_empty() {
            u = vec![0.0; lh * lw];
            v = vec![0.0; lh * lw];
        } else {
            let coarse = &p0[level + 1];
            let cu = coarse.with(std::mem::take(&mut u));
            let cv = coarse.with(std::mem::take(&mut v));
            u = Vec::with_capacity(lh * lw);
            v = Vec::with_capacity(lh * lw);
            for y in 0..lh {
                for x in 0..lw {
                    let (sy, sx) = (y as f32 / 2.0, x as f32 / 2.0);
                    u.push(2.0 * cu.sample(sy, sx));
                    v.push(2.0 * cv.sample(sy, sx));
                }
            }
        }

        let (g0x, g0y) = gradients(i0);
        let (g1x, g1y) = gradients(i1);
        let (g1x, g1y) = (i1.with(g1x), i1.with(g1y));

        let (maxy, maxx) = ((lh - 1) as f32, (lw - 1) as f32);
        let n = lh * lw;
        let (mut gx, mut gy, mut it) = (vec![0.0f32; n], vec![0.0f32; n], vec![0.0f32; n]);
        for _ in 0..params.iterations {
            // Symmetric gradient: mean of the reference gradient and the warped
            // target gradient. Samples warped outside the frame are zeroed out
            // of both the structure tensor and the mismatch.
            for y in 0..lh {
                for x in 0..lw {
                    let k = y * lw + x;
                    let (ty, tx) = (y as f32 + v[k], x as f32 + u[k]);
                    if (0.0..=maxy).contains(&ty) && (0.0..=maxx).contains(&tx) {
                        gx[k] = 0.5 * (g0x[k] + g1x.sample(ty, tx));
                        gy[k] = 0.5 * (g0y[k] + g1y.sample(ty, tx));
                        it[k] = i1.sample(ty, tx) - i0.px[k];
                    } else {
                        (gx[k], gy[k], it[k]) = (0.0, 0.0, 0.0);
                    }
                }
            }
            let sxx = i0.with(gx.iter().map(|a| a * a).collect()).box_sum(r);
            let sxy = i0
                .with(gx.iter().zip(&gy).map(|(a, b)| a * b).collect())
                .box_sum(r);
            let syy = i0.with(gy.iter().map(|b| b * b).collect()).box_sum(r);
            let bx = i0
                .with(gx.iter().zip(&it).map(|(a, t)| a * t).collect())
                .box_sum(r);
            let by = i0
                .with(gy.iter().zip(&it).map(|(b, t)| b * t).collect())
                .box_sum(r);
            for k in 0..n {
                let (a, b, c) = (sxx[k], sxy[k], syy[k]);
                let half_tr = 0.5 * (a + c);
                let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                if half_tr - disc < params.min_eigen {
                    continue;
                }
                let (a, c) = (a + params.damping, c + params.damping);
                let det = a * c - b * b;
                let mut du = -(c * bx[k] - b * by[k]) / det;
                let mut dv = -(a * by[k] - b * bx[k]) / det;
                let norm = (du * du + dv * dv).sqrt();
                if norm > MAX_STEP {
                    du *= MAX_STEP / norm;
                    dv *= MAX_STEP / norm;
                }
                if du.is_finite() && dv.is_finite() {
                    u[k] += du;
                    v[k] += dv;
                }
            }
        }
    }
    Ok((u, v))
}

/// Flow for the 24 adjacent pairs among the first 25 frames: `[2, 24, H', W']`.
pub fn extract_flow(clip: &FrameSequence, params: &FlowParams) -> Result<ModalityVolume> {
    if clip.len() < CLIP_LEN {
        return Err(Error::InsufficientFrames {
            have: clip.len(),
            need: CLIP_LEN,
        });
    }
    let (h, w) = (clip.height(), clip.width());
    let (oh, ow) = params.out_size.unwrap_or((h, w));
    let (sx, sy) = (ow as f32 / w as f32, oh as f32 / h as f32);
    let plane = oh * ow;
    let mut out = vec![0.0f32; 2 * VOLUME_FRAMES * plane];
    let mut prev = clip.intensity(0);
    for t in 0..VOLUME_FRAMES {
        let next = clip.intensity(t + 1);
        let (u, v) = flow_pair(&prev, &next, h, w, params)?;
        let u = area_resample(&u, h, w, oh, ow)?;
        let v = area_resample(&v, h, w, oh, ow)?;
        for k in 0..plane {
            out[t * plane + k] = u[k] * sx;
            out[(VOLUME_FRAMES + t) * plane + k] = v[k] * sy;
        }
        prev = next;
    }
    let tensor = TensorND::new(vec![2, VOLUME_FRAMES, oh, ow], out)?;
    tensor.check_finite("optical flow")?;
    ModalityVolume::new(Modality::Flow, tensor)
}
