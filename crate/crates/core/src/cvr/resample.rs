use crate::error::{Error, Result};

/// Overlap weights of source cells onto each destination cell along one axis.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f32)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let lo = d as f64 * scale;
            let hi = (d + 1) as f64 * scale;
            let mut out = Vec::new();
            let mut s = lo.floor() as usize;
            while (s as f64) < hi && s < src {
                let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                if overlap > 0.0 {
                    out.push((s, (overlap / scale) as f32));
                }
                s += 1;
            }
            out
        })
        .collect()
}

/// Area-averaging resample of one `h x w` plane to `oh x ow`.
///
/// Equal sizes return the input unchanged, bit for bit.
pub fn area_resample(plane: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Result<Vec<f32>> {
    if plane.len() != h * w || oh == 0 || ow == 0 {
        return Err(Error::Shape(format!(
            "resample {h}x{w} (len {}) to {oh}x{ow}",
            plane.len()
        )));
    }
    if (h, w) == (oh, ow) {
        return Ok(plane.to_vec());
    }
    let wy = area_weights(h, oh);
    let wx = area_weights(w, ow);
    let mut rows = vec![0.0f32; oh * w];
    for (oy, taps) in wy.iter().enumerate() {
        for &(sy, a) in taps {
            for x in 0..w {
                rows[oy * w + x] += a * plane[sy * w + x];
            }
        }
    }
    let mut out = vec![0.0f32; oh * ow];
    for oy in 0..oh {
        for (ox, taps) in wx.iter().enumerate() {
            out[oy * ow + ox] = taps.iter().map(|&(sx, a)| a * rows[oy * w + sx]).sum();
        }
    }
    Ok(out)
}

/// Resamples every `h x w` plane of a `[.., h, w]` buffer.
pub fn area_resample_volume(
    data: &[f32],
    planes: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(planes * oh * ow);
    for p in data.chunks(h * w).take(planes) {
        out.extend(area_resample(p, h, w, oh, ow)?);
    }
    Ok(out)
}
