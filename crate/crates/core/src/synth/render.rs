use crate::cvr::FrameSequence;
use crate::error::{Error, Result};

use super::scene::{Grating, SceneSpec, Shape, BG_DEPTH, REF_DEPTH};

/// Samples per pixel along each axis.
pub const SUPERSAMPLE: usize = 4;
/// Id of a pixel whose samples see more than one surface.
pub const MIXED: u8 = u8::MAX;

/// Per-frame alterations of one sprite. Identity by default.
#[derive(Clone, Debug, PartialEq)]
pub struct SpriteEdits {
    /// Added to the screen center, pixels.
    pub offset: Vec<[f32; 2]>,
    /// Multiplies the rendered extent (and texture coordinates).
    pub scale: Vec<f32>,
    /// Hue rotation about the gray axis, radians.
    pub hue: Vec<f32>,
    /// Extra luminance grating in sprite coordinates.
    pub distort: Vec<Option<Grating>>,
}

impl SpriteEdits {
    pub fn identity(frames: usize) -> Self {
        Self {
            offset: vec![[0.0; 2]; frames],
            scale: vec![1.0; frames],
            hue: vec![0.0; frames],
            distort: vec![None; frames],
        }
    }
}

/// Far sprite composited over the near one where they overlap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flip {
    pub far: usize,
    pub near: usize,
    pub alpha: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edits {
    pub sprites: Vec<SpriteEdits>,
    pub flips: Vec<Option<Flip>>,
}

impl Edits {
    pub fn identity(scene: &SceneSpec) -> Self {
        Self {
            sprites: vec![SpriteEdits::identity(scene.frames); scene.sprites.len()],
            flips: vec![None; scene.frames],
        }
    }
}

/// Geometry of one sprite in one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placement {
    pub center: [f32; 2],
    pub half: [f32; 2],
    pub scale: f32,
}

/// Frames plus ground truth of one rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct Render {
    pub frames: FrameSequence,
    /// `[T, H, W]` meters of the visible surface, averaged over the pixel.
    pub depth: Vec<f32>,
    /// `[2, T-1, H, W]` screen motion of the visible surface, pixels.
    pub flow: Vec<f32>,
    /// `[T, H, W]`; 0 is the background, `i + 1` is sprite `i`, [`MIXED`]
    /// on edges.
    pub ids: Vec<u8>,
    /// Per frame, per sprite.
    pub placements: Vec<Vec<Placement>>,
    /// Draw order per frame, far first.
    pub order: Vec<Vec<usize>>,
}

impl Render {
    pub fn size(&self) -> usize {
        self.frames.width()
    }
}

fn place(scene: &SceneSpec, edits: &Edits, i: usize, t: usize) -> Placement {
    let s = &scene.sprites[i];
    let e = &edits.sprites[i];
    let p = s.path.at(t as f32);
    let cam = scene.pan_offset(t as f32);
    let k = s.parallax();
    let scale = e.scale[t];
    let half = s.half_extent().map(|h| h * scale);
    Placement {
        center: [
            p[0] + cam[0] * k + e.offset[t][0],
            p[1] + cam[1] * k + e.offset[t][1],
        ],
        half,
        scale,
    }
}

impl Placement {
    /// Sprite coordinates of a screen point if it lies inside the shape.
    #[inline]
    fn local(&self, shape: Shape, x: f32, y: f32) -> Option<[f32; 2]> {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let inside = match shape {
            Shape::Rect => dx.abs() <= self.half[0] && dy.abs() <= self.half[1],
            Shape::Ellipse => {
                let (u, v) = (dx / self.half[0], dy / self.half[1]);
                u * u + v * v <= 1.0
            }
        };
        inside.then(|| [dx / self.scale, dy / self.scale])
    }

    /// Does the axis-aligned bounding box intersect another's?
    pub fn boxes_overlap(&self, o: &Placement) -> bool {
        (self.center[0] - o.center[0]).abs() < self.half[0] + o.half[0]
            && (self.center[1] - o.center[1]).abs() < self.half[1] + o.half[1]
    }
}

/// Rotation about the gray axis.
pub fn rotate_hue(c: [f32; 3], theta: f32) -> [f32; 3] {
    if theta == 0.0 {
        return c;
    }
    let g = (c[0] + c[1] + c[2]) / 3.0;
    let v = [c[0] - g, c[1] - g, c[2] - g];
    let k = 1.0 / 3f32.sqrt();
    let cross = [k * (v[2] - v[1]), k * (v[0] - v[2]), k * (v[1] - v[0])];
    let (s, co) = theta.sin_cos();
    [0, 1, 2].map(|i| g + v[i] * co + cross[i] * s)
}

fn quantize(c: [f32; 3]) -> [u8; 3] {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

fn sprite_color(scene: &SceneSpec, edits: &Edits, i: usize, t: usize, uv: [f32; 2]) -> [f32; 3] {
    let e = &edits.sprites[i];
    let c = rotate_hue(scene.sprites[i].texture.color(uv[0], uv[1]), e.hue[t]);
    match e.distort[t] {
        Some(g) => {
            let d = g.eval(uv[0], uv[1]);
            c.map(|v| v + d)
        }
        None => c,
    }
}

struct Sample {
    color: [f32; 3],
    depth: f32,
    /// Visible sprite and its local coordinates.
    sprite: usize,
    uv: [f32; 2],
}

/// The topmost sprite at a screen point, `None` over the background.
fn shade(
    scene: &SceneSpec,
    edits: &Edits,
    order: &[usize],
    t: usize,
    p: &[Placement],
    x: f32,
    y: f32,
) -> Option<Sample> {
    let (i, uv) = order
        .iter()
        .rev()
        .find_map(|&i| p[i].local(scene.sprites[i].shape, x, y).map(|uv| (i, uv)))?;
    let mut s = Sample {
        color: sprite_color(scene, edits, i, t, uv),
        depth: scene.sprites[i].depth,
        sprite: i,
        uv,
    };
    if let Some(f) = edits.flips[t].filter(|f| f.near == i) {
        if let Some(uvf) = p[f.far].local(scene.sprites[f.far].shape, x, y) {
            let cf = sprite_color(scene, edits, f.far, t, uvf);
            s.color = [0, 1, 2].map(|c| (1.0 - f.alpha) * s.color[c] + f.alpha * cf[c]);
            s.depth = (1.0 - f.alpha) * s.depth + f.alpha * scene.sprites[f.far].depth;
            if f.alpha >= 0.5 {
                s.sprite = f.far;
                s.uv = uvf;
            }
        }
    }
    Some(s)
}

/// Renders every frame of `scene` with `edits` applied.
pub fn render(scene: &SceneSpec, edits: &Edits) -> Result<Render> {
    scene.validate()?;
    let (n, t_len) = (scene.size, scene.frames);
    if edits.sprites.len() != scene.sprites.len()
        || edits.flips.len() != t_len
        || edits.sprites.iter().any(|e| {
            e.offset.len() != t_len
                || e.scale.len() != t_len
                || e.hue.len() != t_len
                || e.distort.len() != t_len
        })
    {
        return Err(Error::Invalid("edits do not match the scene".into()));
    }
    let order = scene.depth_order();
    let placements: Vec<Vec<Placement>> = (0..t_len)
        .map(|t| {
            (0..scene.sprites.len())
                .map(|i| place(scene, edits, i, t))
                .collect()
        })
        .collect();

    let plane = n * n;
    let mut rgb = Vec::with_capacity(t_len * plane * 3);
    let mut depth = vec![0.0f32; t_len * plane];
    let mut ids = vec![0u8; t_len * plane];
    let mut flow = vec![0.0f32; 2 * (t_len - 1) * plane];
    let inv = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f32;
    for t in 0..t_len {
        let cam = scene.pan_offset(t as f32);
        let bg_shift = cam.map(|c| c * REF_DEPTH / BG_DEPTH);
        let bg_flow = (t + 1 < t_len).then(|| {
            let c1 = scene.pan_offset(t as f32 + 1.0);
            [0, 1].map(|a| (c1[a] - cam[a]) * REF_DEPTH / BG_DEPTH)
        });
        for y in 0..n {
            for x in 0..n {
                let k = t * plane + y * n + x;
                let mut acc = [0.0f32; 3];
                let (mut d_acc, mut f_acc) = (0.0f32, [0.0f32; 2]);
                let mut id_px: Option<u8> = None;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let px = x as f32 + (sx as f32 + 0.5) / SUPERSAMPLE as f32;
                        let py = y as f32 + (sy as f32 + 0.5) / SUPERSAMPLE as f32;
                        let (color, d, id, f) =
                            match shade(scene, edits, &order, t, &placements[t], px, py) {
                                Some(s) => {
                                    let f = bg_flow.map_or([0.0; 2], |_| {
                                        let (a, b) =
                                            (placements[t][s.sprite], placements[t + 1][s.sprite]);
                                        [0, 1].map(|ax| {
                                            b.center[ax] - a.center[ax]
                                                + (b.scale - a.scale) * s.uv[ax]
                                        })
                                    });
                                    (s.color, s.depth, (s.sprite + 1) as u8, f)
                                }
                                None => (
                                    scene.background.color(px - bg_shift[0], py - bg_shift[1]),
                                    BG_DEPTH,
                                    0,
                                    bg_flow.unwrap_or([0.0; 2]),
                                ),
                            };
                        for c in 0..3 {
                            acc[c] += color[c];
                        }
                        d_acc += d;
                        f_acc[0] += f[0];
                        f_acc[1] += f[1];
                        id_px = match id_px {
                            None => Some(id),
                            Some(p) if p == id => Some(p),
                            Some(_) => Some(MIXED),
                        };
                    }
                }
                rgb.extend_from_slice(&quantize(acc.map(|v| v * inv)));
                depth[k] = d_acc * inv;
                ids[k] = id_px.unwrap_or(0);
                if t + 1 < t_len {
                    flow[k] = f_acc[0] * inv;
                    flow[(t_len - 1) * plane + k] = f_acc[1] * inv;
                }
            }
        }
    }

    Ok(Render {
        frames: FrameSequence::new(t_len, n, n, rgb)?,
        depth,
        flow,
        ids,
        placements,
        order: vec![order; t_len],
    })
}

#[cfg(test)]
mod tests {
    use super::super::scene::{random_scene, Sprite, Texture, Trajectory, FOCAL, FRAME_SIZE};
    use super::*;

    fn flat(c: f32) -> Texture {
        Texture {
            base: [c; 3],
            tint: [0.0; 3],
            gratings: vec![],
        }
    }

    fn one_sprite(v: [f32; 2]) -> SceneSpec {
        let tex = Texture {
            base: [0.5, 0.4, 0.6],
            tint: [0.3, 0.2, 0.25],
            gratings: vec![
                Grating {
                    kx: 0.5,
                    ky: 0.2,
                    phase: 0.3,
                    amp: 0.5,
                },
                Grating {
                    kx: -0.3,
                    ky: 0.45,
                    phase: 1.0,
                    amp: 0.4,
                },
            ],
        };
        SceneSpec {
            seed: 0,
            size: FRAME_SIZE,
            frames: 25,
            background: flat(0.3),
            sprites: vec![Sprite {
                shape: Shape::Rect,
                texture: tex,
                depth: 4.0,
                world_size: 12.0 * 4.0 / FOCAL,
                aspect: 1.0,
                path: Trajectory {
                    p0: [14.0, 32.0],
                    v,
                    amp: [0.0; 2],
                    omega: 0.0,
                    phase: [0.0; 2],
                },
            }],
            pan: Trajectory::still([0.0; 2]),
        }
    }

    #[test]
    fn same_seed_renders_identically() {
        let s = random_scene(7, FRAME_SIZE);
        let a = render(&s, &Edits::identity(&s)).unwrap();
        let b = render(&s, &Edits::identity(&s)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn static_scene_has_zero_flow() {
        let s = one_sprite([0.0, 0.0]);
        let r = render(&s, &Edits::identity(&s)).unwrap();
        assert!(r.flow.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn translating_sprite_flow_is_exact() {
        let s = one_sprite([3.0, 0.0]);
        let r = render(&s, &Edits::identity(&s)).unwrap();
        let plane = 64 * 64;
        let mut n = 0;
        for t in 0..24 {
            for k in 0..plane {
                if r.ids[t * plane + k] == 1 {
                    assert_eq!(r.flow[t * plane + k], 3.0);
                    assert_eq!(r.flow[(24 + t) * plane + k], 0.0);
                    n += 1;
                } else if r.ids[t * plane + k] == 0 {
                    assert_eq!(r.flow[t * plane + k], 0.0);
                }
            }
        }
        assert!(n > 1000);
    }

    #[test]
    fn hue_rotation_keeps_gray_and_norm() {
        let c = [0.7, 0.4, 0.2];
        let r = rotate_hue(c, 1.3);
        let g = |c: [f32; 3]| (c[0] + c[1] + c[2]) / 3.0;
        assert!((g(c) - g(r)).abs() < 1e-6);
        let norm = |c: [f32; 3]| c.iter().map(|v| (v - g(c)).powi(2)).sum::<f32>();
        assert!((norm(c) - norm(r)).abs() < 1e-6);
        let back = rotate_hue(r, -1.3);
        assert!(c.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-6));
        assert_eq!(rotate_hue([0.3; 3], 2.0), [0.3; 3]);
    }

    #[test]
    fn depth_is_visible_surface() {
        let s = one_sprite([1.0, 0.0]);
        let r = render(&s, &Edits::identity(&s)).unwrap();
        for (d, id) in r.depth.iter().zip(&r.ids) {
            match *id {
                0 => assert_eq!(*d, BG_DEPTH),
                MIXED => assert!(*d > 4.0 && *d < BG_DEPTH),
                _ => assert_eq!(*d, 4.0),
            }
        }
    }
}
