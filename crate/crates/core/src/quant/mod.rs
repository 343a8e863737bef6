//! Post-training FP16 and INT8 simulation.

mod compare;
mod fp16;
mod int8;
mod model;
mod qconv;

pub use compare::{compare_outputs, CompareReport, ErrorStats, LayerError, PathError};
pub use fp16::{fp16_round, fp16_round_slice, FP16_MAX};
pub use int8::{calibrate_maxabs, dequantize_tensor, quantize_tensor, QTensor, QuantParams, QMAX};
pub use model::{quantize_model, QOp, QuantLayer, QuantSidecar, QuantizedModel};
pub use qconv::{quantize_bias, quantized_conv2d, quantized_deconv2d, QConvWeights};
