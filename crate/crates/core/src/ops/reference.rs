//! Direct nested-loop convolutions used as test oracles for the optimized kernels.

use super::conv::{conv2d_output_shape, deconv2d_output_shape, ConvWeights};
use crate::error::Result;
use crate::tensor::Tensor;

/// Gather formulation of convolution: one output element at a time.
pub fn reference_conv2d(input: &Tensor, w: &ConvWeights) -> Result<Tensor> {
    let os = conv2d_output_shape(input.shape(), w)?;
    let is = input.shape();
    let cpg = w.c_in_per_group();
    let cout_pg = w.c_out() / w.groups;
    let mut out = Tensor::zeros(os);
    for n in 0..os.n {
        for co in 0..os.c {
            let g = co / cout_pg;
            for oy in 0..os.h {
                for ox in 0..os.w {
                    let mut acc = 0.0f32;
                    for cig in 0..cpg {
                        for ky in 0..w.kh() {
                            for kx in 0..w.kw() {
                                let iy = (oy * w.stride.0 + ky) as i64 - w.padding.0 as i64;
                                let ix = (ox * w.stride.1 + kx) as i64 - w.padding.1 as i64;
                                if iy < 0 || ix < 0 || iy >= is.h as i64 || ix >= is.w as i64 {
                                    continue;
                                }
                                acc += input.at(n, g * cpg + cig, iy as usize, ix as usize)
                                    * w.kernel[w.k_index(co, cig, ky, kx)];
                            }
                        }
                    }
                    if let Some(b) = &w.bias {
                        acc += b[co];
                    }
                    let i = out.index(n, co, oy, ox);
                    out.data_mut()[i] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Gather formulation of transposed convolution: output `(oy, ox)` receives
/// `x[ci, iy, ix] * w[co, ci, ky, kx]` whenever `oy + py - ky = iy * sy`.
pub fn reference_deconv2d(input: &Tensor, w: &ConvWeights) -> Result<Tensor> {
    let os = deconv2d_output_shape(input.shape(), w)?;
    let is = input.shape();
    let (sy, sx) = (w.stride.0 as i64, w.stride.1 as i64);
    let mut out = Tensor::zeros(os);
    for n in 0..os.n {
        for co in 0..os.c {
            for oy in 0..os.h {
                for ox in 0..os.w {
                    let mut acc = 0.0f32;
                    for ci in 0..is.c {
                        for ky in 0..w.kh() {
                            let ty = oy as i64 + w.padding.0 as i64 - ky as i64;
                            if ty < 0 || ty % sy != 0 || ty / sy >= is.h as i64 {
                                continue;
                            }
                            for kx in 0..w.kw() {
                                let tx = ox as i64 + w.padding.1 as i64 - kx as i64;
                                if tx < 0 || tx % sx != 0 || tx / sx >= is.w as i64 {
                                    continue;
                                }
                                acc += input.at(n, ci, (ty / sy) as usize, (tx / sx) as usize)
                                    * w.kernel[w.k_index(co, ci, ky, kx)];
                            }
                        }
                    }
                    if let Some(b) = &w.bias {
                        acc += b[co];
                    }
                    let i = out.index(n, co, oy, ox);
                    out.data_mut()[i] = acc;
                }
            }
        }
    }
    Ok(out)
}
