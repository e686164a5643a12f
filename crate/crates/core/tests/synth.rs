use std::collections::BTreeMap;

use cvr_core::cvr::{extract_flow, read_cvrt, FlowParams, Modality, CLIP_LEN};
use cvr_core::ensemble::Label;
use cvr_core::eval::{frame_range, VolumeStore};
use cvr_core::synth::{
    build_corpus, generate_pair, random_scene, render, CorpusConfig, Edits, Family, Grating,
    InjectorKind, Shape, Split, Texture, Trajectory,
};

#[test]
fn flow_recovers_a_rendered_sprite_moving_three_pixels_per_frame() {
    let mut scene = random_scene(11, 64);
    scene.pan = Trajectory::still([0.0, 0.0]);
    scene.sprites.truncate(1);
    let s = &mut scene.sprites[0];
    s.shape = Shape::Rect;
    s.depth = 5.0;
    s.world_size = 1.2;
    s.aspect = 1.0;
    s.texture = Texture {
        base: [0.5; 3],
        tint: [0.45; 3],
        gratings: vec![
            Grating {
                kx: 0.41,
                ky: 0.13,
                phase: 0.0,
                amp: 0.4,
            },
            Grating {
                kx: -0.31,
                ky: 0.23,
                phase: 1.0,
                amp: 0.33,
            },
            Grating {
                kx: 0.57,
                ky: 0.49,
                phase: 2.0 + std::f32::consts::FRAC_PI_2,
                amp: 0.22,
            },
        ],
    };
    s.path = Trajectory {
        p0: [14.0, 32.0],
        v: [3.0, 0.0],
        amp: [0.0; 2],
        omega: 0.0,
        phase: [0.0; 2],
    };
    let r = render(&scene, &Edits::identity(&scene)).unwrap();
    let clip = r.frames.slice(0, CLIP_LEN).unwrap();
    let flow = extract_flow(&clip, &FlowParams::native()).unwrap().tensor;
    let (n, plane) = (64usize, 64 * 64);
    let (mut err, mut count) = (0.0f64, 0usize);
    for t in 0..12 {
        for y in 0..n {
            for x in 0..n {
                // Interior of the sprite in both frames, clear of its edges.
                let inside = |f: usize| {
                    (-3i32..=3).all(|dy| {
                        (-3i32..=3).all(|dx| {
                            let (yy, xx) = (y as i32 + dy, x as i32 + dx);
                            (0..n as i32).contains(&yy)
                                && (0..n as i32).contains(&xx)
                                && r.ids[f * plane + yy as usize * n + xx as usize] == 1
                        })
                    })
                };
                if inside(t) && inside(t + 1) {
                    let u = flow.data()[t * plane + y * n + x] as f64;
                    let v = flow.data()[(24 + t) * plane + y * n + x] as f64;
                    err += ((u - 3.0).powi(2) + v.powi(2)).sqrt();
                    count += 1;
                }
            }
        }
    }
    assert!(count > 500, "{count} interior pixels");
    let epe = err / count as f64;
    assert!(epe < 0.5, "end-point error {epe}");
}

fn small(family: Family, seed: u64) -> CorpusConfig {
    CorpusConfig {
        family,
        n_train: 16,
        n_test: 4,
        val_fraction: 0.1,
        seed,
        size: 32,
    }
}

fn magnitudes(family: Family) -> BTreeMap<String, Vec<f32>> {
    let dir = tempfile::tempdir().unwrap();
    let m = build_corpus(&small(family, 3), dir.path()).unwrap();
    let mut out: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    for e in &m.manifest.entries {
        for inj in &e.injectors {
            out.entry(format!("{:?}", inj.kind))
                .or_default()
                .push(inj.magnitude);
        }
    }
    out
}

#[test]
fn family_magnitudes_do_not_overlap() {
    let (a, b) = (magnitudes(Family::A), magnitudes(Family::B));
    let mut compared = 0;
    for (kind, ma) in &a {
        let Some(mb) = b.get(kind) else { continue };
        let lo_a = ma.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi_b = mb.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        assert!(lo_a > hi_b, "{kind}: A min {lo_a} vs B max {hi_b}");
        compared += 1;
    }
    assert!(compared >= 2, "only {compared} shared injector kinds");
    for kind in InjectorKind::ALL {
        let (lo_a, _) = Family::A.magnitude_range(kind);
        let (_, hi_b) = Family::B.magnitude_range(kind);
        assert!(lo_a > hi_b);
    }
}

#[test]
fn real_twins_have_no_mask_and_fakes_do() {
    for seed in 0..6u64 {
        let (real, fake) = generate_pair(seed * 977 + 1, Family::B, 32).unwrap();
        assert_eq!(real.label, Label::Real);
        assert!(real.mask.is_none() && real.injectors.is_empty());
        assert!(fake.mask.as_ref().unwrap().iter().any(|&m| m == 1));
        assert_eq!(real.scene, fake.scene);
    }
}

#[test]
fn depth_volume_at_working_size_equals_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_corpus(
        &CorpusConfig {
            n_train: 2,
            n_test: 1,
            ..small(Family::A, 5)
        },
        dir.path(),
    )
    .unwrap();
    let store = VolumeStore::new(&m, false);
    for e in m.manifest.split(Split::Train) {
        let gt = read_cvrt(m.resolve(&e.gt.depth)).unwrap();
        for (k, v) in store
            .volumes(e, Modality::Depth)
            .unwrap()
            .iter()
            .enumerate()
        {
            let want = frame_range(&gt, k * CLIP_LEN, 24).unwrap();
            assert_eq!(v.tensor.data().len(), want.data().len());
            assert!(v
                .tensor
                .data()
                .iter()
                .zip(want.data())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
