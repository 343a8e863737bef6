use super::conv::ConvWeights;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Inference-mode batch-normalization statistics and affine parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
}

impl BnParams {
    pub fn new(
        gamma: Vec<f32>,
        beta: Vec<f32>,
        running_mean: Vec<f32>,
        running_var: Vec<f32>,
        eps: f32,
    ) -> Result<Self> {
        let p = BnParams {
            gamma,
            beta,
            running_mean,
            running_var,
            eps,
        };
        p.check()?;
        Ok(p)
    }

    /// gamma = 1, beta = 0, mean = 0, var = 1, eps = 0.
    pub fn identity(channels: usize) -> Self {
        BnParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 0.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub(crate) fn check(&self) -> Result<()> {
        let c = self.gamma.len();
        if [
            self.beta.len(),
            self.running_mean.len(),
            self.running_var.len(),
        ]
        .iter()
        .any(|&l| l != c)
        {
            return Err(Error::config(format!(
                "batch-norm parameter lengths differ (gamma {c}, beta {}, mean {}, var {})",
                self.beta.len(),
                self.running_mean.len(),
                self.running_var.len()
            )));
        }
        if self.eps.is_nan() || self.eps < 0.0 {
            return Err(Error::config(format!(
                "batch-norm eps {} is negative",
                self.eps
            )));
        }
        if let Some(i) = self
            .running_var
            .iter()
            .position(|&v| v.is_nan() || v < 0.0 || v + self.eps <= 0.0)
        {
            return Err(Error::config(format!(
                "batch-norm channel {i}: var {} + eps {} must be positive",
                self.running_var[i], self.eps
            )));
        }
        Ok(())
    }

    /// Per-channel `(scale, shift)` with `y = scale * x + shift`.
    pub fn scale_shift(&self) -> Vec<(f32, f32)> {
        (0..self.channels())
            .map(|c| {
                let scale = self.gamma[c] / (self.running_var[c] + self.eps).sqrt();
                (scale, self.beta[c] - self.running_mean[c] * scale)
            })
            .collect()
    }
}

/// `y = gamma * (x - mean) / sqrt(var + eps) + beta`, per channel.
pub fn batchnorm_inference(input: &Tensor, p: &BnParams) -> Result<Tensor> {
    p.check()?;
    let s = input.shape();
    if p.channels() != s.c {
        return Err(Error::config(format!(
            "batch-norm has {} channels, input has {}",
            p.channels(),
            s.c
        )));
    }
    let mut out = input.clone();
    let plane = s.plane();
    for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let c = i % s.c;
        let denom = (p.running_var[c] + p.eps).sqrt();
        let (g, b, m) = (p.gamma[c], p.beta[c], p.running_mean[c]);
        for v in chunk {
            *v = g * (*v - m) / denom + b;
        }
    }
    Ok(out)
}

/// Folds a following batch norm into convolution (or transposed-convolution) weights.
///
/// Output channel `c` of the kernel is scaled by `gamma_c / sqrt(var_c + eps)`
/// and the bias becomes `(bias_c - mean_c) * scale_c + beta_c`.
pub fn fuse_conv_bn(w: &ConvWeights, p: &BnParams) -> Result<ConvWeights> {
    p.check()?;
    if p.channels() != w.c_out() {
        return Err(Error::config(format!(
            "cannot fold batch-norm with {} channels into convolution with {} outputs",
            p.channels(),
            w.c_out()
        )));
    }
    let per_out = w.kernel.len() / w.c_out();
    let mut kernel = w.kernel.clone();
    let mut bias = Vec::with_capacity(w.c_out());
    for c in 0..w.c_out() {
        let scale = p.gamma[c] / (p.running_var[c] + p.eps).sqrt();
        kernel[c * per_out..(c + 1) * per_out]
            .iter_mut()
            .for_each(|k| *k *= scale);
        let b = w.bias.as_ref().map_or(0.0, |b| b[c]);
        bias.push((b - p.running_mean[c]) * scale + p.beta[c]);
    }
    Ok(ConvWeights {
        kernel,
        kernel_shape: w.kernel_shape,
        bias: Some(bias),
        groups: w.groups,
        stride: w.stride,
        padding: w.padding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn closed_form_value() {
        let x = Tensor::new(Shape::new(1, 1, 1, 1), vec![3.0]).unwrap();
        let p = BnParams::new(vec![2.0], vec![1.0], vec![1.0], vec![4.0], 0.0).unwrap();
        assert_eq!(batchnorm_inference(&x, &p).unwrap().data(), &[3.0]);
    }

    #[test]
    fn identity_and_zero_gamma() {
        let x = Tensor::from_fn(Shape::new(2, 3, 2, 2), |n, c, y, x| {
            (n + c * 3 + y * 5 + x) as f32 - 4.0
        });
        assert_eq!(batchnorm_inference(&x, &BnParams::identity(3)).unwrap(), x);
        let p = BnParams::new(
            vec![0.0; 3],
            vec![0.5, -1.0, 2.0],
            vec![0.3; 3],
            vec![2.0; 3],
            1e-5,
        )
        .unwrap();
        let y = batchnorm_inference(&x, &p).unwrap();
        for n in 0..2 {
            for c in 0..3 {
                assert!(y.plane(n, c).iter().all(|&v| v == p.beta[c]));
            }
        }
    }

    #[test]
    fn length_mismatch() {
        let x = Tensor::zeros(Shape::new(1, 2, 1, 1));
        assert!(matches!(
            batchnorm_inference(&x, &BnParams::identity(3)),
            Err(Error::Config(_))
        ));
        assert!(BnParams::new(vec![1.0], vec![0.0], vec![0.0], vec![-1.0], 1e-5).is_err());
    }

    #[test]
    fn folding_identity_is_noop() {
        let w = ConvWeights::new(
            vec![0.5, -1.5, 2.0, 0.25],
            [2, 2, 1, 1],
            Some(vec![0.1, -0.2]),
            1,
            (1, 1),
            (0, 0),
        )
        .unwrap();
        assert_eq!(fuse_conv_bn(&w, &BnParams::identity(2)).unwrap(), w);
    }

    #[test]
    fn folding_scales_channel() {
        let w = ConvWeights::new(
            vec![1.0, 2.0, 3.0, 4.0],
            [2, 2, 1, 1],
            Some(vec![0.5, 0.5]),
            1,
            (1, 1),
            (0, 0),
        )
        .unwrap();
        let p = BnParams::new(
            vec![2.0, 1.0],
            vec![0.0; 2],
            vec![0.0; 2],
            vec![0.0, 1.0],
            1.0,
        )
        .unwrap();
        let f = fuse_conv_bn(&w, &p).unwrap();
        assert_eq!(&f.kernel[..2], &[2.0, 4.0]);
        assert_eq!(f.bias.as_ref().unwrap()[0], 1.0);
        assert!(matches!(
            fuse_conv_bn(&w, &BnParams::identity(3)),
            Err(Error::Config(_))
        ));
    }
}
