use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Largest representable quantized magnitude; -128 is unused so the grid is symmetric.
pub const QMAX: i32 = 127;

/// Symmetric per-tensor 8-bit quantization: `x ~ n * scale`, zero point 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
}

impl QuantParams {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::config(format!(
                "quantization scale must be positive, got {scale}"
            )));
        }
        Ok(QuantParams { scale })
    }

    /// Scale that maps `max_abs` to 127; a zero range gets scale 1.
    pub fn from_max_abs(max_abs: f64) -> Self {
        if max_abs > 0.0 {
            QuantParams {
                scale: max_abs / QMAX as f64,
            }
        } else {
            QuantParams { scale: 1.0 }
        }
    }

    #[inline]
    pub fn quantize(self, x: f32) -> i8 {
        round_clamp(x as f64 / self.scale)
    }

    #[inline]
    pub fn dequantize(self, n: i8) -> f32 {
        (n as f64 * self.scale) as f32
    }
}

/// Round half away from zero, then clamp to `[-127, 127]`.
#[inline]
pub(crate) fn round_clamp(v: f64) -> i8 {
    v.round().clamp(-(QMAX as f64), QMAX as f64) as i8
}

/// Max-abs calibration over all samples.
pub fn calibrate_maxabs(samples: &[Tensor]) -> Result<QuantParams> {
    if samples.is_empty() {
        return Err(Error::Domain(
            "calibration needs at least one sample".into(),
        ));
    }
    let m = samples.iter().map(|t| t.max_abs()).fold(0.0f32, f32::max);
    Ok(QuantParams::from_max_abs(m as f64))
}

/// An int8 tensor in NCHW order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTensor {
    shape: Shape,
    data: Vec<i8>,
}

impl QTensor {
    pub fn new(shape: Shape, data: Vec<i8>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::config(format!(
                "int8 tensor {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        if data.contains(&i8::MIN) {
            return Err(Error::config("-128 is outside the symmetric int8 range"));
        }
        Ok(QTensor { shape, data })
    }

    pub(crate) fn from_raw(shape: Shape, data: Vec<i8>) -> Self {
        QTensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn plane(&self, n: usize, c: usize) -> &[i8] {
        let p = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }
}

pub fn quantize_tensor(t: &Tensor, q: QuantParams) -> QTensor {
    QTensor::from_raw(t.shape(), t.data().iter().map(|&x| q.quantize(x)).collect())
}

pub fn dequantize_tensor(a: &QTensor, q: QuantParams) -> Tensor {
    Tensor::from_raw(a.shape, a.data.iter().map(|&n| q.dequantize(n)).collect())
}
