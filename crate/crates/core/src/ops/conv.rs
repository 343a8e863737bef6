use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Kernel sizes accepted by the layer vocabulary. 4 is the transposed-convolution kernel.
pub const SUPPORTED_KERNELS: [usize; 4] = [1, 3, 4, 5];

/// Weights and geometry of a convolution or transposed convolution.
///
/// `kernel` is laid out `(c_out, c_in_per_group, kh, kw)` in both cases. For a
/// transposed convolution `groups` must be 1 and the second axis is the full
/// input channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub kernel: Vec<f32>,
    pub kernel_shape: [usize; 4],
    pub bias: Option<Vec<f32>>,
    pub groups: usize,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvWeights {
    pub fn new(
        kernel: Vec<f32>,
        kernel_shape: [usize; 4],
        bias: Option<Vec<f32>>,
        groups: usize,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        let w = ConvWeights {
            kernel,
            kernel_shape,
            bias,
            groups,
            stride,
            padding,
        };
        w.check()?;
        Ok(w)
    }

    /// Dense `c_out x c_in` kernel of side `k`, stride `s`, "same"-style padding `k / 2`.
    pub fn dense(kernel: Vec<f32>, c_out: usize, c_in: usize, k: usize, s: usize) -> Result<Self> {
        Self::new(kernel, [c_out, c_in, k, k], None, 1, (s, s), (k / 2, k / 2))
    }

    pub fn c_out(&self) -> usize {
        self.kernel_shape[0]
    }

    pub fn c_in_per_group(&self) -> usize {
        self.kernel_shape[1]
    }

    pub fn kh(&self) -> usize {
        self.kernel_shape[2]
    }

    pub fn kw(&self) -> usize {
        self.kernel_shape[3]
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups > 1 && self.c_in_per_group() == 1
    }

    pub(crate) fn check(&self) -> Result<()> {
        let [c_out, cpg, kh, kw] = self.kernel_shape;
        for (axis, k) in [("kh", kh), ("kw", kw)] {
            if !SUPPORTED_KERNELS.contains(&k) {
                return Err(Error::UnsupportedLayer(format!(
                    "kernel {axis}={k} outside the supported set {SUPPORTED_KERNELS:?}"
                )));
            }
        }
        if self.groups == 0 || c_out % self.groups != 0 {
            return Err(Error::config(format!(
                "c_out={c_out} is not divisible by groups={}",
                self.groups
            )));
        }
        if cpg == 0 || c_out == 0 {
            return Err(Error::config("convolution with zero channels"));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::config("stride must be at least 1"));
        }
        let expected = c_out * cpg * kh * kw;
        if self.kernel.len() != expected {
            return Err(Error::config(format!(
                "kernel has {} values, shape {:?} needs {expected}",
                self.kernel.len(),
                self.kernel_shape
            )));
        }
        if let Some(b) = &self.bias {
            if b.len() != c_out {
                return Err(Error::config(format!(
                    "bias has {} values, c_out is {c_out}",
                    b.len()
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn k_index(&self, co: usize, ci: usize, ky: usize, kx: usize) -> usize {
        ((co * self.kernel_shape[1] + ci) * self.kernel_shape[2] + ky) * self.kernel_shape[3] + kx
    }
}

fn conv_extent(len: usize, pad: usize, k: usize, stride: usize, axis: &str) -> Result<usize> {
    let padded = len + 2 * pad;
    if padded < k {
        return Err(Error::config(format!(
            "{axis}: kernel {k} larger than padded input {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// Output shape of `conv2d(input, w)`, validating channel agreement.
pub fn conv2d_output_shape(input: Shape, w: &ConvWeights) -> Result<Shape> {
    w.check()?;
    if input.c != w.groups * w.c_in_per_group() {
        return Err(Error::config(format!(
            "input channels {} != groups {} x c_in_per_group {}",
            input.c,
            w.groups,
            w.c_in_per_group()
        )));
    }
    let h = conv_extent(input.h, w.padding.0, w.kh(), w.stride.0, "height")?;
    let wd = conv_extent(input.w, w.padding.1, w.kw(), w.stride.1, "width")?;
    Ok(Shape::new(input.n, w.c_out(), h, wd))
}

fn deconv_extent(len: usize, pad: usize, k: usize, stride: usize, axis: &str) -> Result<usize> {
    let full = (len as i64 - 1) * stride as i64 + k as i64;
    let out = full - 2 * pad as i64;
    if len == 0 || out <= 0 {
        return Err(Error::config(format!(
            "{axis}: transposed convolution output size {out} is not positive"
        )));
    }
    Ok(out as usize)
}

/// Output shape of `deconv2d(input, w)`: `(len - 1) * s - 2p + k` per axis.
pub fn deconv2d_output_shape(input: Shape, w: &ConvWeights) -> Result<Shape> {
    w.check()?;
    if w.groups != 1 {
        return Err(Error::UnsupportedLayer(
            "grouped transposed convolution".into(),
        ));
    }
    if input.c != w.c_in_per_group() {
        return Err(Error::config(format!(
            "input channels {} != transposed kernel input channels {}",
            input.c,
            w.c_in_per_group()
        )));
    }
    let h = deconv_extent(input.h, w.padding.0, w.kh(), w.stride.0, "height")?;
    let wd = deconv_extent(input.w, w.padding.1, w.kw(), w.stride.1, "width")?;
    Ok(Shape::new(input.n, w.c_out(), h, wd))
}

/// Range of output indices `o` such that `o * stride + k - pad` lands in `[0, len)`.
#[inline]
fn valid_out_range(
    out_len: usize,
    len: usize,
    k: usize,
    pad: usize,
    stride: usize,
) -> (usize, usize) {
    // o * stride >= pad - k
    let lo = if pad > k {
        (pad - k).div_ceil(stride)
    } else {
        0
    };
    // o * stride + k - pad <= len - 1
    let limit = len as i64 - 1 + pad as i64 - k as i64;
    if limit < 0 {
        return (0, 0);
    }
    let hi = ((limit as usize) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// 2-D convolution with zero padding and no dilation.
///
/// Each output element accumulates in `f32` over (input channel, kernel row,
/// kernel column) in that order, starting from zero, and adds the bias last.
/// The result is bit-identical to [`super::reference::reference_conv2d`].
pub fn conv2d(input: &Tensor, w: &ConvWeights) -> Result<Tensor> {
    let out_shape = conv2d_output_shape(input.shape(), w)?;
    let in_shape = input.shape();
    let (ho, wo) = (out_shape.h, out_shape.w);
    let cpg = w.c_in_per_group();
    let cout_pg = w.c_out() / w.groups;
    let (sy, sx) = w.stride;
    let (py, px) = w.padding;
    let (kh, kw) = (w.kh(), w.kw());
    let mut out = vec![0.0f32; out_shape.len()];
    if out.is_empty() {
        return Ok(Tensor::from_raw(out_shape, out));
    }

    out.par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(plane_idx, plane)| {
            let n = plane_idx / out_shape.c;
            let co = plane_idx % out_shape.c;
            let g = co / cout_pg;
            for cig in 0..cpg {
                let ci = g * cpg + cig;
                let src = input.plane(n, ci);
                for ky in 0..kh {
                    let (oy0, oy1) = valid_out_range(ho, in_shape.h, ky, py, sy);
                    for kx in 0..kw {
                        let (ox0, ox1) = valid_out_range(wo, in_shape.w, kx, px, sx);
                        if ox0 >= ox1 {
                            continue;
                        }
                        let wv = w.kernel[w.k_index(co, cig, ky, kx)];
                        for oy in oy0..oy1 {
                            let iy = oy * sy + ky - py;
                            let row = &src[iy * in_shape.w..(iy + 1) * in_shape.w];
                            let dst = &mut plane[oy * wo + ox0..oy * wo + ox1];
                            let ix0 = ox0 * sx + kx - px;
                            if sx == 1 {
                                for (d, s) in dst.iter_mut().zip(&row[ix0..ix0 + (ox1 - ox0)]) {
                                    *d += s * wv;
                                }
                            } else {
                                for (j, d) in dst.iter_mut().enumerate() {
                                    *d += row[ix0 + j * sx] * wv;
                                }
                            }
                        }
                    }
                }
            }
            if let Some(b) = &w.bias {
                let bv = b[co];
                plane.iter_mut().for_each(|v| *v += bv);
            }
        });
    Ok(Tensor::from_raw(out_shape, out))
}

/// Transposed convolution (the adjoint of [`conv2d`] with the channel roles swapped).
///
/// Each input pixel scatters `x * w[co, ci, ky, kx]` to output position
/// `(iy * sy + ky - py, ix * sx + kx - px)`. Per output element the
/// contributions arrive in (input channel, kernel row, kernel column) order,
/// matching [`super::reference::reference_deconv2d`] bit for bit.
pub fn deconv2d(input: &Tensor, w: &ConvWeights) -> Result<Tensor> {
    let out_shape = deconv2d_output_shape(input.shape(), w)?;
    let in_shape = input.shape();
    let (ho, wo) = (out_shape.h, out_shape.w);
    let (sy, sx) = w.stride;
    let (py, px) = w.padding;
    let (kh, kw) = (w.kh(), w.kw());
    let mut out = vec![0.0f32; out_shape.len()];

    out.par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(plane_idx, plane)| {
            let n = plane_idx / out_shape.c;
            let co = plane_idx % out_shape.c;
            for ci in 0..in_shape.c {
                let src = input.plane(n, ci);
                for ky in 0..kh {
                    // iy * sy + ky - py in [0, ho)
                    let iy0 = if py > ky { (py - ky).div_ceil(sy) } else { 0 };
                    for kx in 0..kw {
                        let wv = w.kernel[w.k_index(co, ci, ky, kx)];
                        let ix0 = if px > kx { (px - kx).div_ceil(sx) } else { 0 };
                        for iy in iy0..in_shape.h {
                            let oy = iy * sy + ky - py;
                            if oy >= ho {
                                break;
                            }
                            let row = &src[iy * in_shape.w..(iy + 1) * in_shape.w];
                            let dst = &mut plane[oy * wo..(oy + 1) * wo];
                            for (ix, &v) in row.iter().enumerate().skip(ix0) {
                                let ox = ix * sx + kx - px;
                                if ox >= wo {
                                    break;
                                }
                                dst[ox] += v * wv;
                            }
                        }
                    }
                }
            }
            if let Some(b) = &w.bias {
                let bv = b[co];
                plane.iter_mut().for_each(|v| *v += bv);
            }
        });
    Ok(Tensor::from_raw(out_shape, out))
}
