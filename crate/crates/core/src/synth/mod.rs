//! Procedural corpus of paired real and fake clips with ground truth.

mod audit;
mod corpus;
mod injector;
mod render;
mod scene;

pub use audit::{audit, Audit};
pub use corpus::{
    build_corpus, fingerprint, generate_pair, scene_seed, CorpusConfig, CorpusManifest, GtPaths,
    LoadedManifest, ManifestEntry, Split, Video,
};
pub use injector::{
    apply_injector, apply_injectors, difference_mask, sample_and_apply, sample_injector, Family,
    Injected, Injector, InjectorKind, MIN_ACTIVE,
};
pub use render::{render, rotate_hue, Edits, Flip, Placement, Render, SpriteEdits};
pub use scene::{
    chromatic, random_scene, Grating, SceneSpec, Shape, Sprite, Texture, Trajectory, BG_DEPTH,
    FOCAL, FRAME_SIZE, REF_DEPTH,
};
