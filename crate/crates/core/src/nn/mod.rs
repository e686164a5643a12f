//! Layers, exact reverse-mode gradients, loss and optimizer.

mod adam;
mod conv3d;
mod gradcheck;
mod layers;
mod loss;
mod network;

pub use adam::{AdamConfig, AdamState};
pub use conv3d::{conv3d_backward, conv3d_forward, ConvGeometry};
pub use gradcheck::{check_param_gradients, GradCheck, ABS_FLOOR};
pub use layers::{LayerSpec, LAYER_KINDS};
pub use loss::{sigmoid, sigmoid_bce};
pub use network::{Forward, Gradients, Layer, Network};
