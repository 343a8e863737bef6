use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub fn eltwise_sum(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::config(format!(
            "elementwise sum of {} and {}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_raw(a.shape(), data))
}

/// Channel-axis concatenation in list order.
pub fn concat(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::config("concat of an empty list"))?
        .shape();
    let mut c = 0;
    for t in inputs {
        let s = t.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::config(format!("concat of {s} with {first}")));
        }
        c += s.c;
    }
    let os = Shape::new(first.n, c, first.h, first.w);
    let mut data = Vec::with_capacity(os.len());
    for n in 0..first.n {
        for t in inputs {
            let per = t.shape().c * first.plane();
            data.extend_from_slice(&t.data()[n * per..(n + 1) * per]);
        }
    }
    Ok(Tensor::from_raw(os, data))
}
