//! Channel-wise half-precision quantization of the model's MLPs.

mod calibrate;
mod layer;
mod model;

pub use calibrate::{quantize_layer, scale_grid, scale_seed, CalibrationSet, QuantizedLayer, SCALE_CANDIDATES};
pub use layer::QuantizedLinear;
pub use model::{jittered_states, quantize_model, CalibrationState, LayerReport, QuantizeOptions, MIN_CALIBRATION_ROWS};
