use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn leaky_relu(input: &Tensor, slope: f32) -> Result<Tensor> {
    if !(0.0..1.0).contains(&slope) {
        return Err(Error::config(format!(
            "leaky-relu slope {slope} outside [0, 1)"
        )));
    }
    Ok(input.map(|v| if v < 0.0 { slope * v } else { v }))
}

/// Numerically stable softmax along `axis` (0 = batch, 1 = channel, 2 = row, 3 = column).
pub fn softmax(input: &Tensor, axis: usize) -> Result<Tensor> {
    let dims = input.shape().dims();
    if axis > 3 {
        return Err(Error::config(format!("softmax axis {axis} out of range")));
    }
    let len = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let src = input.data();
    let mut out = vec![0.0f32; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let max = (0..len)
                .map(|k| src[at(k)])
                .fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0f32;
            for k in 0..len {
                let e = (src[at(k)] - max).exp();
                out[at(k)] = e;
                sum += e;
            }
            for k in 0..len {
                out[at(k)] /= sum;
            }
        }
    }
    Ok(Tensor::from_raw(input.shape(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn row(v: &[f32]) -> Tensor {
        Tensor::new(Shape::new(1, 1, 1, v.len()), v.to_vec()).unwrap()
    }

    #[test]
    fn elementwise_definitions() {
        assert_eq!(relu(&row(&[-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(leaky_relu(&row(&[-2.0]), 0.1).unwrap().data(), &[-0.2]);
        assert!(leaky_relu(&row(&[1.0]), 1.0).is_err());
        assert_eq!(softmax(&row(&[0.0, 0.0]), 3).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_sums_to_one_on_every_axis() {
        let t = Tensor::from_fn(Shape::new(2, 3, 4, 5), |n, c, y, x| {
            ((n * 7 + c * 13 + y * 3 + x) % 11) as f32 * 0.7 - 3.0
        });
        for axis in 0..4 {
            let s = softmax(&t, axis).unwrap();
            let dims = t.shape().dims();
            let inner: usize = dims[axis + 1..].iter().product();
            let outer: usize = dims[..axis].iter().product();
            for o in 0..outer {
                for i in 0..inner {
                    let sum: f32 = (0..dims[axis])
                        .map(|k| s.data()[(o * dims[axis] + k) * inner + i])
                        .sum();
                    assert!((sum - 1.0).abs() < 1e-6, "axis {axis}: {sum}");
                }
            }
        }
        assert!(softmax(&t, 4).is_err());
    }
}
