//! Maps surviving weights to b-bit codes through a per-tensor level table.

mod density;
mod levels;
mod network;
mod quantize;

pub use density::{Density, DENSITY_BINS, DENSITY_FLOOR};
pub use levels::{
    optimal_levels, quantization_error, solve_optimal_levels, uniform_levels, OptimalLevels, Scheme,
};
pub use network::{
    quantize_network, EvalSet, QuantConfig, QuantReport, QuantizedModel, QuantizedTensor,
    TensorQuant, TensorReport,
};
pub use quantize::{dequantize, fit_optimal, nearest_code, quantize, QuantizationSpec, Rounding};
