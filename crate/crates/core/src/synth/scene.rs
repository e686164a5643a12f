use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cvr::CLIP_LEN;
use crate::error::{Error, Result};

/// Rendered frame side in pixels.
pub const FRAME_SIZE: usize = 64;
/// Background plane depth in meters.
pub const BG_DEPTH: f32 = 20.0;
/// Pixels per meter at one meter.
pub const FOCAL: f32 = 60.0;
/// Depth at which the camera pan moves content one-to-one.
pub const REF_DEPTH: f32 = 5.0;

/// One sinusoidal component of a texture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grating {
    pub kx: f32,
    pub ky: f32,
    pub phase: f32,
    pub amp: f32,
}

impl Grating {
    #[inline]
    pub fn eval(&self, x: f32, y: f32) -> f32 {
        self.amp * (self.kx * x + self.ky * y + self.phase).sin()
    }
}

/// `base + tint * sum(gratings)` per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub base: [f32; 3],
    pub tint: [f32; 3],
    pub gratings: Vec<Grating>,
}

impl Texture {
    #[inline]
    pub fn color(&self, x: f32, y: f32) -> [f32; 3] {
        let v: f32 = self.gratings.iter().map(|g| g.eval(x, y)).sum();
        [0, 1, 2].map(|c| self.base[c] + v * self.tint[c])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rect,
    Ellipse,
}

/// `p0 + v t + amp * sin(omega t + phase)`, per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub p0: [f32; 2],
    pub v: [f32; 2],
    pub amp: [f32; 2],
    pub omega: f32,
    pub phase: [f32; 2],
}

impl Trajectory {
    pub fn still(p: [f32; 2]) -> Self {
        Self {
            p0: p,
            v: [0.0; 2],
            amp: [0.0; 2],
            omega: 0.0,
            phase: [0.0; 2],
        }
    }

    pub fn at(&self, t: f32) -> [f32; 2] {
        [0, 1].map(|a| {
            self.p0[a] + self.v[a] * t + self.amp[a] * (self.omega * t + self.phase[a]).sin()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sprite {
    pub shape: Shape,
    pub texture: Texture,
    /// Meters; constant over the clip.
    pub depth: f32,
    /// Half extent in meters.
    pub world_size: f32,
    /// Width over height.
    pub aspect: f32,
    /// Screen-space center path before the camera pan, in pixels.
    pub path: Trajectory,
}

impl Sprite {
    /// Half width and half height in pixels.
    pub fn half_extent(&self) -> [f32; 2] {
        let hs = self.world_size * FOCAL / self.depth;
        let r = self.aspect.sqrt();
        [hs * r, hs / r]
    }

    /// Parallax factor of the camera pan at this depth.
    pub fn parallax(&self) -> f32 {
        REF_DEPTH / self.depth
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub size: usize,
    pub frames: usize,
    pub background: Texture,
    /// Drawn far to near.
    pub sprites: Vec<Sprite>,
    /// Camera offset in pixels at [`REF_DEPTH`]; `pan.at(0)` is the origin.
    pub pan: Trajectory,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 8 || self.frames < 2 {
            return Err(Error::Invalid(format!(
                "scene {}px x {} frames",
                self.size, self.frames
            )));
        }
        for (i, s) in self.sprites.iter().enumerate() {
            if !(s.depth > 0.0 && s.depth < BG_DEPTH) || !(s.world_size > 0.0) || !(s.aspect > 0.0)
            {
                return Err(Error::Invalid(format!(
                    "sprite {i} has degenerate geometry"
                )));
            }
            for o in &self.sprites[..i] {
                if (o.depth - s.depth).abs() < 1e-3 {
                    return Err(Error::Invalid(format!("sprite {i} shares a depth")));
                }
            }
        }
        Ok(())
    }

    /// Sprite indices sorted far to near.
    pub fn depth_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.sprites.len()).collect();
        idx.sort_by(|&a, &b| self.sprites[b].depth.total_cmp(&self.sprites[a].depth));
        idx
    }

    pub fn pan_offset(&self, t: f32) -> [f32; 2] {
        let (a, b) = (self.pan.at(t), self.pan.at(0.0));
        [a[0] - b[0], a[1] - b[1]]
    }
}

fn gray_basis() -> ([f32; 3], [f32; 3]) {
    let s2 = std::f32::consts::FRAC_1_SQRT_2;
    let s6 = 1.0 / 6f32.sqrt();
    ([s2, -s2, 0.0], [s6, s6, -2.0 * s6])
}

/// A color at `gray` plus `chroma` along hue angle `h`.
pub fn chromatic(gray: f32, chroma: f32, h: f32) -> [f32; 3] {
    let (e1, e2) = gray_basis();
    [0, 1, 2].map(|c| gray + chroma * (h.cos() * e1[c] + h.sin() * e2[c]))
}

fn random_texture(rng: &mut ChaCha8Rng, base: [f32; 3], contrast: f32) -> Texture {
    let n = rng.random_range(2..=3);
    let gratings = (0..n)
        .map(|_| {
            let k = rng.random_range(0.12f32..0.35);
            let dir = rng.random_range(0.0f32..std::f32::consts::TAU);
            Grating {
                kx: k * dir.cos(),
                ky: k * dir.sin(),
                phase: rng.random_range(0.0..std::f32::consts::TAU),
                amp: rng.random_range(0.6f32..1.0) / n as f32,
            }
        })
        .collect();
    let h = rng.random_range(0.0f32..std::f32::consts::TAU);
    let tint = chromatic(contrast, contrast * 0.5, h);
    Texture {
        base,
        tint,
        gratings,
    }
}

/// Random scene of 2 to 5 sprites. Sprites 0 and 1 cross paths near a
/// random frame so every scene contains an occlusion.
pub fn random_scene(seed: u64, size: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = CLIP_LEN;
    let s = size as f32;
    let scale = s / FRAME_SIZE as f32;
    let bg_base = [0, 1, 2].map(|_| rng.random_range(0.35f32..0.65));
    let background = random_texture(&mut rng, bg_base, 0.22);

    let pan_speed = rng.random_range(0.0f32..0.6) * scale;
    let pan_dir = rng.random_range(0.0f32..std::f32::consts::TAU);
    let pan = Trajectory {
        p0: [0.0; 2],
        v: [pan_speed * pan_dir.cos(), pan_speed * pan_dir.sin()],
        amp: [
            rng.random_range(0.0f32..1.0) * scale,
            rng.random_range(0.0f32..1.0) * scale,
        ],
        omega: rng.random_range(0.1f32..0.3),
        phase: [0.0; 2],
    };
    let pan_at = |t: f32| {
        let (a, b) = (pan.at(t), pan.at(0.0));
        [a[0] - b[0], a[1] - b[1]]
    };

    let count = rng.random_range(2..=5);
    let mut depths: Vec<f32> = Vec::with_capacity(count);
    while depths.len() < count {
        let d = rng.random_range(3.0f32..12.0);
        if depths.iter().all(|&o| (o - d).abs() >= 0.5) {
            depths.push(d);
        }
    }
    let meet_t = rng.random_range(8.0f32..16.0);
    let meet = [
        rng.random_range(0.35 * s..0.65 * s),
        rng.random_range(0.35 * s..0.65 * s),
    ];
    let mut sprites = Vec::with_capacity(count);
    for (i, &depth) in depths.iter().enumerate() {
        let half_px = rng.random_range(7.0f32..11.0) * scale;
        let hue = rng.random_range(0.0f32..std::f32::consts::TAU);
        let base = chromatic(rng.random_range(0.4f32..0.6), 0.25, hue);
        let omega = rng.random_range(0.1f32..0.3);
        let amp = [
            rng.random_range(0.0f32..1.2) * scale,
            rng.random_range(0.0f32..1.2) * scale,
        ];
        let phase = [
            rng.random_range(0.0..std::f32::consts::TAU),
            rng.random_range(0.0..std::f32::consts::TAU),
        ];
        let speed = rng.random_range(0.2f32..0.8) * scale;
        let dir = rng.random_range(0.0f32..std::f32::consts::TAU);
        let v = [speed * dir.cos(), speed * dir.sin()];
        let anchor = if i < 2 {
            meet
        } else {
            [
                rng.random_range(0.25 * s..0.75 * s),
                rng.random_range(0.25 * s..0.75 * s),
            ]
        };
        // Place the path so the sprite's screen center is `anchor` at `meet_t`.
        let wobble = [0, 1].map(|a| amp[a] * (omega * meet_t + phase[a]).sin());
        let cam = pan_at(meet_t).map(|c| c * REF_DEPTH / depth);
        let p0 = [0, 1].map(|a| anchor[a] - v[a] * meet_t - wobble[a] - cam[a]);
        sprites.push(Sprite {
            shape: if rng.random_bool(0.5) {
                Shape::Rect
            } else {
                Shape::Ellipse
            },
            texture: random_texture(&mut rng, base, 0.3),
            depth,
            world_size: half_px * depth / FOCAL,
            aspect: rng.random_range(0.7f32..1.4),
            path: Trajectory {
                p0,
                v,
                amp,
                omega,
                phase,
            },
        });
    }
    SceneSpec {
        seed,
        size,
        frames,
        background,
        sprites,
        pan,
    }
}
