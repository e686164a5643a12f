use super::render::{Render, MIXED};
use super::scene::SceneSpec;

/// Consistency measurements of one rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct Audit {
    /// Pixel-frames where two sprites overlap and the farther one shows.
    pub occlusion_violations: usize,
    /// Largest relative deviation of `half extent * depth` from frame 0,
    /// over sprites and frames.
    pub size_depth_deviation: f32,
    /// Mean absolute RGB error, in `[0, 1]` units, of warping frame `t` by
    /// the ground-truth flow onto frame `t + 1`.
    pub brightness_mae: f32,
    /// Pixels that entered the brightness check.
    pub brightness_pixels: usize,
}

impl Audit {
    pub fn passes(&self) -> bool {
        self.occlusion_violations == 0
            && self.size_depth_deviation <= 0.01
            && self.brightness_mae <= 2.0 / 255.0
    }
}

fn covers(r: &Render, scene: &SceneSpec, i: usize, t: usize, x: f32, y: f32) -> bool {
    let p = r.placements[t][i];
    let (dx, dy) = (x - p.center[0], y - p.center[1]);
    match scene.sprites[i].shape {
        super::scene::Shape::Rect => dx.abs() <= p.half[0] && dy.abs() <= p.half[1],
        super::scene::Shape::Ellipse => {
            let (u, v) = (dx / p.half[0], dy / p.half[1]);
            u * u + v * v <= 1.0
        }
    }
}

/// Catmull-Rom weights for fractional offset `f`, taps at -1, 0, 1, 2.
fn cubic(f: f32) -> [f32; 4] {
    let (f2, f3) = (f * f, f * f * f);
    [
        0.5 * (-f3 + 2.0 * f2 - f),
        0.5 * (3.0 * f3 - 5.0 * f2 + 2.0),
        0.5 * (-3.0 * f3 + 4.0 * f2 + f),
        0.5 * (f3 - f2),
    ]
}

pub fn audit(scene: &SceneSpec, r: &Render) -> Audit {
    let n = r.size();
    let plane = n * n;
    let t_len = r.frames.len();
    let order = scene.depth_order();

    let mut occlusion_violations = 0;
    for t in 0..t_len {
        for y in 0..n {
            for x in 0..n {
                let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
                let top = order
                    .iter()
                    .rev()
                    .find(|&&i| covers(r, scene, i, t, px, py));
                let id = r.ids[t * plane + y * n + x] as usize;
                if id == MIXED as usize {
                    continue;
                }
                if let Some(&i) = top {
                    occlusion_violations += usize::from(id != i + 1);
                }
            }
        }
    }

    let mut size_depth_deviation = 0.0f32;
    for (i, s) in scene.sprites.iter().enumerate() {
        let base = r.placements[0][i].half[0] * s.depth;
        for t in 1..t_len {
            let v = r.placements[t][i].half[0] * s.depth;
            size_depth_deviation = size_depth_deviation.max((v / base - 1.0).abs());
        }
    }

    let (mut err, mut count) = (0.0f64, 0usize);
    for t in 0..t_len - 1 {
        let f0 = r.frames.frame(t);
        let f1 = r.frames.frame(t + 1);
        for y in 0..n {
            for x in 0..n {
                let k = y * n + x;
                let id = r.ids[t * plane + k];
                if id == MIXED {
                    continue;
                }
                let qx = x as f32 + r.flow[t * plane + k];
                let qy = y as f32 + r.flow[(t_len - 1 + t) * plane + k];
                let (ix, iy) = (qx.floor() as isize, qy.floor() as isize);
                if ix < 1 || iy < 1 || ix + 2 >= n as isize || iy + 2 >= n as isize {
                    continue;
                }
                // The whole 4x4 footprint must show the same surface.
                let same = (-1..=2).all(|dy| {
                    (-1..=2).all(|dx| {
                        r.ids[(t + 1) * plane + (iy + dy) as usize * n + (ix + dx) as usize] == id
                    })
                });
                if !same {
                    continue;
                }
                let (wx, wy) = (cubic(qx - ix as f32), cubic(qy - iy as f32));
                for c in 0..3 {
                    let mut v = 0.0f32;
                    for (a, wy) in wy.iter().enumerate() {
                        for (b, wx) in wx.iter().enumerate() {
                            let at =
                                (iy + a as isize - 1) as usize * n + (ix + b as isize - 1) as usize;
                            v += wy * wx * f1[at * 3 + c] as f32;
                        }
                    }
                    err += ((v - f0[k * 3 + c] as f32) / 255.0).abs() as f64;
                }
                count += 1;
            }
        }
    }
    Audit {
        occlusion_violations,
        size_depth_deviation,
        brightness_mae: if count == 0 {
            0.0
        } else {
            (err / (3 * count) as f64) as f32
        },
        brightness_pixels: count,
    }
}
