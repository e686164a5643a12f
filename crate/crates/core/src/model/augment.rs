use crate::cvr::{Modality, NormStats, STD_FLOOR};
use crate::error::{Error, Result};
use crate::tensor::TensorND;

/// An axis flip, transpose and time-reversal combination.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Symmetry {
    pub flip_h: bool,
    pub flip_w: bool,
    /// Swap H and W (square volumes only).
    pub transpose: bool,
    pub reverse_t: bool,
}

impl Symmetry {
    pub const COUNT: usize = 16;

    /// `i` in `0..16`, bit per field; 0 is the identity.
    pub fn from_index(i: usize) -> Self {
        Self {
            flip_h: i & 1 != 0,
            flip_w: i & 2 != 0,
            transpose: i & 4 != 0,
            reverse_t: i & 8 != 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    /// Source channel and sign of every output channel.
    fn channel_map(&self, modality: Modality, channels: usize) -> Vec<(usize, f32)> {
        let mut map: Vec<(usize, f32)> = (0..channels).map(|c| (c, 1.0)).collect();
        match modality {
            Modality::Flow => {
                // (u, v) pull back through the flips, then the swap.
                let mut u = (0, if self.flip_w { -1.0 } else { 1.0 });
                let mut v = (1, if self.flip_h { -1.0 } else { 1.0 });
                if self.reverse_t {
                    u.1 = -u.1;
                    v.1 = -v.1;
                }
                if self.transpose {
                    std::mem::swap(&mut u, &mut v);
                }
                map[0] = u;
                map[1] = v;
            }
            Modality::Appearance if self.transpose && channels >= 6 => map.swap(4, 5),
            _ => {}
        }
        map
    }

    /// Applies the symmetry to a normalized `[C, T, H, W]` volume; values
    /// stay normalized with `stats`.
    pub fn apply(&self, modality: Modality, x: &TensorND, stats: &NormStats) -> Result<TensorND> {
        let d = x.dims();
        if d.len() != 4 {
            return Err(Error::Shape(format!("expected [C,T,H,W], got {d:?}")));
        }
        let (c, t, h, w) = (d[0], d[1], d[2], d[3]);
        if self.transpose && h != w {
            return Err(Error::Shape(format!(
                "transpose needs a square volume, got {h}x{w}"
            )));
        }
        if stats.mean.len() != c || stats.std.len() != c {
            return Err(Error::Shape(format!(
                "stats for {} channels, volume has {c}",
                stats.mean.len()
            )));
        }
        if self.is_identity() {
            return Ok(x.clone());
        }
        let src = x.data();
        let mut out = vec![0.0f32; src.len()];
        for (co, &(ci, sign)) in self.channel_map(modality, c).iter().enumerate() {
            let (si, so) = (stats.std[ci].max(STD_FLOOR), stats.std[co].max(STD_FLOOR));
            let gain = sign * si / so;
            let bias = (sign * stats.mean[ci] - stats.mean[co]) / so;
            for to in 0..t {
                let ti = if self.reverse_t { t - 1 - to } else { to };
                for yo in 0..h {
                    for xo in 0..w {
                        let (yy, xx) = if self.transpose { (xo, yo) } else { (yo, xo) };
                        let yi = if self.flip_h { h - 1 - yy } else { yy };
                        let xi = if self.flip_w { w - 1 - xx } else { xx };
                        let v = src[((ci * t + ti) * h + yi) * w + xi];
                        out[((co * t + to) * h + yo) * w + xo] = gain * v + bias;
                    }
                }
            }
        }
        TensorND::new(d.to_vec(), out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: &[usize]) -> TensorND {
        TensorND::from_fn(dims, |i| (i as f32 * 0.37).sin()).unwrap()
    }

    #[test]
    fn every_symmetry_is_an_involution_up_to_transpose_order() {
        let x = ramp(&[2, 4, 5, 5]);
        let stats = NormStats {
            mean: vec![0.3, -0.2],
            std: vec![1.5, 0.7],
        };
        for i in 0..Symmetry::COUNT {
            let s = Symmetry::from_index(i);
            let once = s.apply(Modality::Flow, &x, &stats).unwrap();
            // Flips and the swap commute only when both flips agree.
            let inverse = if s.transpose {
                Symmetry {
                    flip_h: s.flip_w,
                    flip_w: s.flip_h,
                    ..s
                }
            } else {
                s
            };
            let back = inverse.apply(Modality::Flow, &once, &stats).unwrap();
            for (a, b) in x.data().iter().zip(back.data()) {
                assert!((a - b).abs() < 1e-5, "symmetry {i}");
            }
        }
    }

    #[test]
    fn horizontal_flip_negates_raw_u() {
        let stats = NormStats {
            mean: vec![0.5, 0.0],
            std: vec![2.0, 1.0],
        };
        // Raw u = 1.5 everywhere normalizes to 0.5.
        let x = TensorND::from_fn(&[2, 1, 2, 2], |i| if i < 4 { 0.5 } else { 0.0 }).unwrap();
        let s = Symmetry {
            flip_w: true,
            ..Default::default()
        };
        let y = s.apply(Modality::Flow, &x, &stats).unwrap();
        // Raw -1.5 normalizes to -1.0.
        assert!(y.data()[..4].iter().all(|&v| (v + 1.0).abs() < 1e-6));
    }

    #[test]
    fn constant_channels_stay_finite() {
        let x = ramp(&[6, 2, 3, 3]);
        let stats = NormStats {
            mean: vec![0.0; 6],
            std: vec![1.0, 1.0, 1.0, 0.0, 0.5, 0.2],
        };
        for i in 0..Symmetry::COUNT {
            let y = Symmetry::from_index(i)
                .apply(Modality::Appearance, &x, &stats)
                .unwrap();
            assert!(y.data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn transpose_rejects_rectangles() {
        let x = ramp(&[1, 2, 3, 4]);
        let s = Symmetry {
            transpose: true,
            ..Default::default()
        };
        assert!(s
            .apply(Modality::Depth, &x, &NormStats::identity(1))
            .is_err());
    }
}
