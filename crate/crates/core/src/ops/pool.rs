use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolSpec {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        PoolSpec {
            kernel,
            stride,
            padding,
        }
    }

    pub fn output_shape(&self, s: Shape) -> Result<Shape> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::config("pool kernel and stride must be at least 1"));
        }
        if self.padding >= self.kernel {
            return Err(Error::config(format!(
                "pool padding {} must be smaller than kernel {}",
                self.padding, self.kernel
            )));
        }
        let (ph, pw) = (s.h + 2 * self.padding, s.w + 2 * self.padding);
        if self.kernel > ph || self.kernel > pw {
            return Err(Error::config(format!(
                "pool window {} larger than padded input {ph}x{pw}",
                self.kernel
            )));
        }
        Ok(Shape::new(
            s.n,
            s.c,
            (ph - self.kernel) / self.stride + 1,
            (pw - self.kernel) / self.stride + 1,
        ))
    }
}

fn pool(
    input: &Tensor,
    spec: PoolSpec,
    reduce: impl Fn(&mut dyn Iterator<Item = f32>) -> f32,
) -> Result<Tensor> {
    let is = input.shape();
    let os = spec.output_shape(is)?;
    let mut out = Vec::with_capacity(os.len());
    for n in 0..is.n {
        for c in 0..is.c {
            let src = input.plane(n, c);
            for oy in 0..os.h {
                let y0 = (oy * spec.stride) as i64 - spec.padding as i64;
                let ys = y0.max(0) as usize..((y0 + spec.kernel as i64).min(is.h as i64)) as usize;
                for ox in 0..os.w {
                    let x0 = (ox * spec.stride) as i64 - spec.padding as i64;
                    let xs =
                        x0.max(0) as usize..((x0 + spec.kernel as i64).min(is.w as i64)) as usize;
                    let mut it = ys
                        .clone()
                        .flat_map(|y| xs.clone().map(move |x| (y, x)))
                        .map(|(y, x)| src[y * is.w + x]);
                    out.push(reduce(&mut it));
                }
            }
        }
    }
    Ok(Tensor::from_raw(os, out))
}

/// Window maximum over in-bounds elements (padding never wins).
pub fn maxpool(input: &Tensor, spec: PoolSpec) -> Result<Tensor> {
    pool(input, spec, |it: &mut dyn Iterator<Item = f32>| {
        it.fold(f32::NEG_INFINITY, f32::max)
    })
}

/// Window mean over in-bounds elements only; border windows divide by their valid count.
pub fn avgpool(input: &Tensor, spec: PoolSpec) -> Result<Tensor> {
    pool(input, spec, |it: &mut dyn Iterator<Item = f32>| {
        let (sum, count) = it.fold((0.0f32, 0usize), |(s, n), v| (s + v, n + 1));
        sum / count as f32
    })
}
