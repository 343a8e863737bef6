use half::f16;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest finite half-precision magnitude.
pub const FP16_MAX: f32 = 65504.0;

/// Rounds every value to the nearest half-precision number (ties to even).
///
/// Magnitudes above [`FP16_MAX`] are an overflow error naming the element.
pub fn fp16_round_slice(values: &[f32]) -> Result<Vec<f32>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !v.is_finite() || v.abs() > FP16_MAX {
                return Err(Error::NumericFault {
                    layer: "fp16".into(),
                    detail: format!("element {i} = {v} overflows half precision"),
                });
            }
            Ok(f16::from_f32(v).to_f32())
        })
        .collect()
}

pub fn fp16_round(t: &Tensor) -> Result<Tensor> {
    Tensor::new(t.shape(), fp16_round_slice(t.data())?)
}
