//! Frame sequences and the three modality volumes built from them.

mod appearance;
pub mod cvrt;
mod depth;
pub mod flow;
mod frames;
mod resample;
mod volume;

pub use appearance::{extract_appearance_proxy, APPEARANCE_CHANNELS};
pub use cvrt::{read_cvrt, write_cvrt};
pub use depth::{load_depth, DepthKind};
pub use flow::{extract_flow, FlowParams};
pub use frames::{read_frames, segment_clips, write_frames_raw, FrameSequence, Segmentation};
pub use resample::{area_resample, area_resample_volume};
pub use volume::{normalize_volume, Modality, ModalityVolume, NormStats, STD_FLOOR};

/// Frames per classification clip.
pub const CLIP_LEN: usize = 25;
/// Temporal extent of every modality volume.
pub const VOLUME_FRAMES: usize = 24;
