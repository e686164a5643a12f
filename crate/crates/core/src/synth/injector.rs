use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::render::{render, Edits, Flip, Render};
use super::scene::{Grating, SceneSpec, FRAME_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InjectorKind {
    AppearanceFlicker,
    MotionJitter,
    OcclusionFlip,
    ScaleDrift,
}

impl InjectorKind {
    pub const ALL: [InjectorKind; 4] = [
        InjectorKind::AppearanceFlicker,
        InjectorKind::MotionJitter,
        InjectorKind::OcclusionFlip,
        InjectorKind::ScaleDrift,
    ];
}

impl fmt::Display for InjectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Parameter regime of the injectors. The two families have disjoint
/// magnitude ranges for every kind, and disjoint flicker periods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    A,
    B,
}

impl Family {
    pub fn magnitude_range(self, kind: InjectorKind) -> (f32, f32) {
        use InjectorKind::*;
        match (self, kind) {
            (Family::A, AppearanceFlicker) => (0.6, 1.0),
            (Family::B, AppearanceFlicker) => (0.25, 0.5),
            (Family::A, MotionJitter) => (2.0, 3.0),
            (Family::B, MotionJitter) => (0.6, 1.2),
            (Family::A, ScaleDrift) => (0.4, 0.6),
            (Family::B, ScaleDrift) => (0.12, 0.25),
            (Family::A, OcclusionFlip) => (0.85, 1.0),
            (Family::B, OcclusionFlip) => (0.45, 0.7),
        }
    }

    /// Flicker texture-scramble period, pixels at [`FRAME_SIZE`].
    pub fn period_range(self) -> (f32, f32) {
        match self {
            Family::A => (4.0, 6.0),
            Family::B => (9.0, 14.0),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Family::A),
            "B" | "b" => Ok(Family::B),
            other => Err(Error::Invalid(format!(
                "unknown family `{other}` (expected A or B)"
            ))),
        }
    }
}

/// One parameterized artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Injector {
    pub kind: InjectorKind,
    pub magnitude: f32,
    /// Inclusive frame range.
    pub frames: [usize; 2],
    /// Sprite indices; two for [`InjectorKind::OcclusionFlip`].
    pub targets: Vec<usize>,
    pub family: Family,
    /// Flicker scramble period in pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f32>,
    /// Drives the per-frame noise.
    pub seed: u64,
}

/// Shortest active range.
pub const MIN_ACTIVE: usize = 8;
/// Pixels per frame (at `FRAME_SIZE`) a targeted sprite must show on its own.
pub const MIN_VISIBLE: f32 = 80.0;
/// Changed pixels over all frames (at `FRAME_SIZE`) for a sampled fake.
pub const MIN_MASK: usize = 600;

impl Injector {
    pub fn validate(&self, scene: &SceneSpec) -> Result<()> {
        if self.magnitude == 0.0 {
            return Err(Error::DegenerateInjector(format!(
                "{} with magnitude 0",
                self.kind
            )));
        }
        let (lo, hi) = self.family.magnitude_range(self.kind);
        if !(lo..=hi).contains(&self.magnitude) {
            return Err(Error::Invalid(format!(
                "{} magnitude {} outside family {} range [{lo}, {hi}]",
                self.kind, self.magnitude, self.family
            )));
        }
        let [a, b] = self.frames;
        if a > b || b >= scene.frames {
            return Err(Error::Invalid(format!(
                "active range [{a}, {b}] for {} frames",
                scene.frames
            )));
        }
        let need = if self.kind == InjectorKind::OcclusionFlip {
            2
        } else {
            1
        };
        if self.targets.len() != need {
            return Err(Error::Invalid(format!(
                "{} needs {need} target(s)",
                self.kind
            )));
        }
        if let Some(&t) = self.targets.iter().find(|&&t| t >= scene.sprites.len()) {
            return Err(Error::Invalid(format!(
                "{} targets missing sprite {t}",
                self.kind
            )));
        }
        if need == 2 && self.targets[0] == self.targets[1] {
            return Err(Error::Invalid(
                "occlusion flip needs two distinct sprites".into(),
            ));
        }
        if self.kind == InjectorKind::AppearanceFlicker && !self.period.is_some_and(|p| p > 0.0) {
            return Err(Error::Invalid("flicker needs a positive period".into()));
        }
        Ok(())
    }

    fn active(&self) -> std::ops::RangeInclusive<usize> {
        self.frames[0]..=self.frames[1]
    }

    fn edit(&self, scene: &SceneSpec, clean: &Render, edits: &mut Edits) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let px = scene.size as f32 / FRAME_SIZE as f32;
        let m = self.magnitude;
        match self.kind {
            InjectorKind::AppearanceFlicker => {
                let e = &mut edits.sprites[self.targets[0]];
                let k = std::f32::consts::TAU / (self.period.expect("validated") * px);
                for t in self.active() {
                    e.hue[t] += m * std::f32::consts::FRAC_PI_2 * rng.random_range(-1.0f32..1.0);
                    let dir = rng.random_range(0.0f32..std::f32::consts::TAU);
                    e.distort[t] = Some(Grating {
                        kx: k * dir.cos(),
                        ky: k * dir.sin(),
                        phase: rng.random_range(0.0..std::f32::consts::TAU),
                        amp: 0.2 * m,
                    });
                }
            }
            InjectorKind::MotionJitter => {
                let e = &mut edits.sprites[self.targets[0]];
                let step = Normal::new(0.0f32, m * px).expect("finite std");
                let mut o = [0.0f32; 2];
                for t in self.active() {
                    for a in 0..2 {
                        o[a] = 0.5 * o[a] + step.sample(&mut rng);
                        e.offset[t][a] += o[a];
                    }
                }
            }
            InjectorKind::ScaleDrift => {
                let e = &mut edits.sprites[self.targets[0]];
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let [a, b] = self.frames;
                let span = (b - a).max(1) as f32;
                for t in self.active() {
                    let phase = std::f32::consts::PI * (t - a) as f32 / span;
                    e.scale[t] *= 1.0 + sign * m * phase.sin();
                }
            }
            InjectorKind::OcclusionFlip => {
                let (i, j) = (self.targets[0], self.targets[1]);
                let (far, near) = if scene.sprites[i].depth > scene.sprites[j].depth {
                    (i, j)
                } else {
                    (j, i)
                };
                let overlaps = self
                    .active()
                    .any(|t| clean.placements[t][far].boxes_overlap(&clean.placements[t][near]));
                if !overlaps {
                    return Err(Error::DegenerateInjector(format!(
                        "sprites {far} and {near} do not overlap in frames {:?}",
                        self.frames
                    )));
                }
                for t in self.active() {
                    edits.flips[t] = Some(Flip {
                        far,
                        near,
                        alpha: m,
                    });
                }
            }
        }
        Ok(())
    }
}

/// `[T, H, W]` set of pixel-frames whose RGB differs between two renders.
pub fn difference_mask(a: &Render, b: &Render) -> Vec<u8> {
    a.frames
        .data()
        .chunks_exact(3)
        .zip(b.frames.data().chunks_exact(3))
        .map(|(p, q)| u8::from(p != q))
        .collect()
}

/// A fake rendering and its artifact mask.
#[derive(Clone, Debug)]
pub struct Injected {
    pub render: Render,
    /// `[T, H, W]`, 1 where the frame differs from the clean render.
    pub mask: Vec<u8>,
}

/// Re-renders `scene` with every injector applied. `clean` must be the
/// uninjected render of the same scene.
pub fn apply_injectors(
    scene: &SceneSpec,
    clean: &Render,
    injectors: &[Injector],
) -> Result<Injected> {
    if injectors.is_empty() {
        return Err(Error::Empty("injector list".into()));
    }
    let mut edits = Edits::identity(scene);
    for inj in injectors {
        inj.validate(scene)?;
        inj.edit(scene, clean, &mut edits)?;
    }
    let render = render(scene, &edits)?;
    let mask = difference_mask(&render, clean);
    if mask.iter().all(|&m| m == 0) {
        return Err(Error::DegenerateInjector("no pixel changed".into()));
    }
    Ok(Injected { render, mask })
}

pub fn apply_injector(scene: &SceneSpec, clean: &Render, injector: &Injector) -> Result<Injected> {
    apply_injectors(scene, clean, std::slice::from_ref(injector))
}

fn sample_range(rng: &mut ChaCha8Rng, frames: usize, must_cover: Option<usize>) -> [usize; 2] {
    let len = rng.random_range(MIN_ACTIVE..=(MIN_ACTIVE + 6).min(frames));
    let (lo, hi) = match must_cover {
        Some(c) => (c.saturating_sub(len - 1), c.min(frames - len)),
        None => (0, frames - len),
    };
    let a = rng.random_range(lo..=hi.max(lo));
    [a, a + len - 1]
}

fn area_scale(r: &Render) -> f32 {
    (r.size() as f32 / FRAME_SIZE as f32).powi(2)
}

/// Mean pixels per frame showing sprite `i` alone.
fn mean_visible(r: &Render, i: usize) -> f32 {
    let id = (i + 1) as u8;
    r.ids.iter().filter(|&&v| v == id).count() as f32 / r.frames.len() as f32
}

/// Draws one injector of `kind`. Flicker, jitter and drift target a random
/// sprite; the flip targets sprites 0 and 1 around a frame where they overlap.
pub fn sample_injector(
    rng: &mut ChaCha8Rng,
    kind: InjectorKind,
    family: Family,
    scene: &SceneSpec,
    clean: &Render,
) -> Result<Injector> {
    let n = scene.sprites.len();
    if n == 0 || (kind == InjectorKind::OcclusionFlip && n < 2) {
        return Err(Error::Invalid(format!(
            "{kind} needs more sprites than {n}"
        )));
    }
    let (lo, hi) = family.magnitude_range(kind);
    let magnitude = rng.random_range(lo..=hi);
    let (targets, frames) = if kind == InjectorKind::OcclusionFlip {
        let overlapping: Vec<usize> = (0..scene.frames)
            .filter(|&t| clean.placements[t][0].boxes_overlap(&clean.placements[t][1]))
            .collect();
        let centre = *overlapping
            .get(overlapping.len() / 2)
            .ok_or_else(|| Error::DegenerateInjector("sprites 0 and 1 never overlap".into()))?;
        (vec![0, 1], sample_range(rng, scene.frames, Some(centre)))
    } else {
        let visible: Vec<usize> = (0..n)
            .filter(|&i| mean_visible(clean, i) >= MIN_VISIBLE * area_scale(clean))
            .collect();
        if visible.is_empty() {
            return Err(Error::DegenerateInjector(
                "no sprite is visible enough".into(),
            ));
        }
        (
            vec![visible[rng.random_range(0..visible.len())]],
            sample_range(rng, scene.frames, None),
        )
    };
    let period = (kind == InjectorKind::AppearanceFlicker).then(|| {
        let (a, b) = family.period_range();
        rng.random_range(a..=b)
    });
    Ok(Injector {
        kind,
        magnitude,
        frames,
        targets,
        family,
        period,
        seed: rng.random(),
    })
}

/// One or two injectors of distinct kinds, redrawn until the combination
/// changes the render.
pub fn sample_and_apply(
    rng: &mut ChaCha8Rng,
    family: Family,
    scene: &SceneSpec,
    clean: &Render,
) -> Result<(Vec<Injector>, Injected)> {
    const ATTEMPTS: usize = 32;
    for _ in 0..ATTEMPTS {
        let count = rng.random_range(1..=2);
        let mut kinds = InjectorKind::ALL.to_vec();
        kinds.shuffle(rng);
        let injectors = kinds[..count]
            .iter()
            .map(|&k| sample_injector(rng, k, family, scene, clean))
            .collect::<Result<Vec<_>>>();
        let injectors = match injectors {
            Ok(v) => v,
            Err(Error::DegenerateInjector(why)) => {
                log::debug!("scene {}: {why}; redrawing", scene.seed);
                continue;
            }
            Err(e) => return Err(e),
        };
        match apply_injectors(scene, clean, &injectors) {
            Ok(out)
                if out.mask.iter().filter(|&&m| m != 0).count() as f32
                    >= MIN_MASK as f32 * area_scale(clean) =>
            {
                return Ok((injectors, out))
            }
            Ok(_) => log::debug!("scene {}: artifact too small; redrawing", scene.seed),
            Err(Error::DegenerateInjector(why)) => {
                log::debug!("scene {}: {why}; redrawing", scene.seed)
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateInjector(format!(
        "scene {} admits no visible injector",
        scene.seed
    )))
}
