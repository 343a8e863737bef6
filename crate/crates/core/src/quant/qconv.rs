//! Integer convolutions: int8 operands, 32-bit accumulators, requantized output.

use rayon::prelude::*;

use super::int8::{round_clamp, QTensor, QuantParams};
use crate::error::{Error, Result};
use crate::ops::{conv2d_output_shape, deconv2d_output_shape, ConvWeights};
use crate::tensor::Shape;

/// Int8 kernel with the same layout and geometry rules as [`ConvWeights`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QConvWeights {
    pub kernel: Vec<i8>,
    pub kernel_shape: [usize; 4],
    pub groups: usize,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl QConvWeights {
    /// Quantizes the kernel of `w` with `q`; the float bias is not carried over.
    pub fn quantize(w: &ConvWeights, q: QuantParams) -> Self {
        QConvWeights {
            kernel: w.kernel.iter().map(|&k| q.quantize(k)).collect(),
            kernel_shape: w.kernel_shape,
            groups: w.groups,
            stride: w.stride,
            padding: w.padding,
        }
    }

    /// Float weights with the same geometry and the dequantized kernel.
    pub fn dequantize(&self, q: QuantParams, bias: Option<Vec<f32>>) -> Result<ConvWeights> {
        ConvWeights::new(
            self.kernel.iter().map(|&k| q.dequantize(k)).collect(),
            self.kernel_shape,
            bias,
            self.groups,
            self.stride,
            self.padding,
        )
    }

    fn shell(&self) -> Result<ConvWeights> {
        if self.kernel.len() != self.kernel_shape.iter().product::<usize>() {
            return Err(Error::config(format!(
                "int8 kernel has {} values, shape {:?}",
                self.kernel.len(),
                self.kernel_shape
            )));
        }
        ConvWeights::new(
            vec![0.0; self.kernel.len()],
            self.kernel_shape,
            None,
            self.groups,
            self.stride,
            self.padding,
        )
    }

    #[inline]
    fn at(&self, co: usize, ci: usize, ky: usize, kx: usize) -> i32 {
        let [_, cpg, kh, kw] = self.kernel_shape;
        self.kernel[((co * cpg + ci) * kh + ky) * kw + kx] as i32
    }
}

/// Quantizes a float bias to the accumulator scale `s_in * s_w`.
pub fn quantize_bias(bias: &[f32], input: QuantParams, weight: QuantParams) -> Result<Vec<i32>> {
    let s = input.scale * weight.scale;
    bias.iter()
        .enumerate()
        .map(|(i, &b)| {
            let v = (b as f64 / s).round();
            if v.abs() > i32::MAX as f64 {
                return Err(Error::NumericFault {
                    layer: "bias".into(),
                    detail: format!(
                        "bias {i} = {b} does not fit a 32-bit accumulator at scale {s:e}"
                    ),
                });
            }
            Ok(v as i32)
        })
        .collect()
}

fn overflow(what: &str, co: usize) -> Error {
    Error::NumericFault {
        layer: what.into(),
        detail: format!("32-bit accumulator overflow in output channel {co}"),
    }
}

fn check_bias(bias: Option<&[i32]>, c_out: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != c_out => Err(Error::config(format!(
            "bias has {} values, c_out is {c_out}",
            b.len()
        ))),
        _ => Ok(()),
    }
}

fn requantize(acc: Vec<i32>, shape: Shape, multiplier: f64) -> QTensor {
    QTensor::from_raw(
        shape,
        acc.into_iter()
            .map(|a| round_clamp(a as f64 * multiplier))
            .collect(),
    )
}

/// Integer convolution.
///
/// Products are summed in `i32` over (input channel, kernel row, kernel
/// column) with the bias added last; any overflow is reported rather than
/// wrapped. The sum is requantized with `s_in * s_w / s_out`, rounding half
/// away from zero.
pub fn quantized_conv2d(
    input: &QTensor,
    w: &QConvWeights,
    input_qp: QuantParams,
    w_qp: QuantParams,
    out_qp: QuantParams,
    bias: Option<&[i32]>,
) -> Result<QTensor> {
    let geom = w.shell()?;
    let os = conv2d_output_shape(input.shape(), &geom)?;
    check_bias(bias, os.c)?;
    let is = input.shape();
    let cpg = geom.c_in_per_group();
    let cout_pg = geom.c_out() / w.groups;
    let (sy, sx) = w.stride;
    let (py, px) = w.padding;
    let (kh, kw) = (geom.kh(), geom.kw());
    let plane = os.h * os.w;
    let mut acc = vec![0i32; os.len()];
    if plane > 0 {
        acc.par_chunks_mut(plane)
            .enumerate()
            .try_for_each(|(pi, dst)| {
                let (n, co) = (pi / os.c, pi % os.c);
                let g = co / cout_pg;
                let mut over = false;
                for cig in 0..cpg {
                    let src = input.plane(n, g * cpg + cig);
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = w.at(co, cig, ky, kx);
                            for oy in 0..os.h {
                                let iy = (oy * sy + ky) as i64 - py as i64;
                                if iy < 0 || iy >= is.h as i64 {
                                    continue;
                                }
                                let row = &src[iy as usize * is.w..(iy as usize + 1) * is.w];
                                let out_row = &mut dst[oy * os.w..(oy + 1) * os.w];
                                for (ox, d) in out_row.iter_mut().enumerate() {
                                    let ix = (ox * sx + kx) as i64 - px as i64;
                                    if ix < 0 || ix >= is.w as i64 {
                                        continue;
                                    }
                                    let (v, o) = d.overflowing_add(row[ix as usize] as i32 * wv);
                                    *d = v;
                                    over |= o;
                                }
                            }
                        }
                    }
                }
                if let Some(b) = bias {
                    for d in dst.iter_mut() {
                        let (v, o) = d.overflowing_add(b[co]);
                        *d = v;
                        over |= o;
                    }
                }
                if over {
                    Err(overflow("quantized conv2d", co))
                } else {
                    Ok(())
                }
            })?;
    }
    Ok(requantize(
        acc,
        os,
        input_qp.scale * w_qp.scale / out_qp.scale,
    ))
}

/// Integer transposed convolution; same accumulation and requantization rules as
/// [`quantized_conv2d`], contributions arriving in (input channel, kernel row,
/// kernel column) order per output element.
pub fn quantized_deconv2d(
    input: &QTensor,
    w: &QConvWeights,
    input_qp: QuantParams,
    w_qp: QuantParams,
    out_qp: QuantParams,
    bias: Option<&[i32]>,
) -> Result<QTensor> {
    let geom = w.shell()?;
    let os = deconv2d_output_shape(input.shape(), &geom)?;
    check_bias(bias, os.c)?;
    let is = input.shape();
    let (sy, sx) = w.stride;
    let (py, px) = w.padding;
    let (kh, kw) = (geom.kh(), geom.kw());
    let plane = os.h * os.w;
    let mut acc = vec![0i32; os.len()];
    acc.par_chunks_mut(plane)
        .enumerate()
        .try_for_each(|(pi, dst)| {
            let (n, co) = (pi / os.c, pi % os.c);
            let mut over = false;
            for ci in 0..is.c {
                let src = input.plane(n, ci);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = w.at(co, ci, ky, kx);
                        for iy in 0..is.h {
                            let oy = (iy * sy + ky) as i64 - py as i64;
                            if oy < 0 || oy >= os.h as i64 {
                                continue;
                            }
                            for ix in 0..is.w {
                                let ox = (ix * sx + kx) as i64 - px as i64;
                                if ox < 0 || ox >= os.w as i64 {
                                    continue;
                                }
                                let d = &mut dst[oy as usize * os.w + ox as usize];
                                let (v, o) = d.overflowing_add(src[iy * is.w + ix] as i32 * wv);
                                *d = v;
                                over |= o;
                            }
                        }
                    }
                }
            }
            if let Some(b) = bias {
                for d in dst.iter_mut() {
                    let (v, o) = d.overflowing_add(b[co]);
                    *d = v;
                    over |= o;
                }
            }
            if over {
                Err(overflow("quantized deconv2d", co))
            } else {
                Ok(())
            }
        })?;
    Ok(requantize(
        acc,
        os,
        input_qp.scale * w_qp.scale / out_qp.scale,
    ))
}
