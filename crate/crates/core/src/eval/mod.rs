//! Evaluation protocols, reports and end-to-end detection.

mod detect;
mod logits;
mod protocol;
mod report;
mod volumes;

pub use detect::{detect, export_top_heatmaps, ClipBreakdown, DetectInput, Detection};
pub use logits::{ConstantSource, Detectors, LogitSource, LogitTable, OracleSource, TableVideo};
pub use protocol::{
    labelled_volumes, render_rows, row_name, run_protocol, train_modality, ProtocolConfig,
    ProtocolOutcome, ProtocolReport, Row, SeedRun, ABLATION,
};
pub use report::{check_balance, evaluate, evaluate_table, Confusion, EvalReport, VideoResult};
pub use volumes::{extract_volume, frame_range, mask_volume, VolumeStore, WORK_SIZE};
