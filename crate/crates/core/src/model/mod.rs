//! Per-modality 3D ConvNet classifiers: architecture, training, checkpoints.

mod augment;
mod checkpoint;
mod convnet;
mod train;

pub use augment::Symmetry;
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use convnet::{architecture, build_model, predict_clip, ConvNet3D, Prediction, DEFAULT_EXTENT};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};
