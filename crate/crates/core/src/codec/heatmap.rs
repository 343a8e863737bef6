use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// One person's stack of `k` keypoint heatmaps, each `h x w`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSet {
    k: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl HeatmapSet {
    pub fn new(k: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != k * h * w {
            return Err(Error::config(format!(
                "heatmap data has {} values, {k}x{h}x{w} needs {}",
                data.len(),
                k * h * w
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("heatmap contains non-finite values".into()));
        }
        Ok(HeatmapSet { k, h, w, data })
    }

    pub fn zeros(k: usize, h: usize, w: usize) -> Self {
        HeatmapSet {
            k,
            h,
            w,
            data: vec![0.0; k * h * w],
        }
    }

    pub fn num_keypoints(&self) -> usize {
        self.k
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map(&self, k: usize) -> &[f32] {
        &self.data[k * self.h * self.w..(k + 1) * self.h * self.w]
    }

    pub fn map_mut(&mut self, k: usize) -> &mut [f32] {
        let p = self.h * self.w;
        &mut self.data[k * p..(k + 1) * p]
    }

    pub fn same_shape(&self, other: &HeatmapSet) -> bool {
        (self.k, self.h, self.w) == (other.k, other.h, other.w)
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.k, self.h, self.w)
    }

    /// Splits an `(n, K, h, w)` batch into one set per person.
    pub fn from_batch(t: &Tensor) -> Vec<HeatmapSet> {
        let s = t.shape();
        (0..s.n)
            .map(|n| HeatmapSet {
                k: s.c,
                h: s.h,
                w: s.w,
                data: t.item(n).into_data(),
            })
            .collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_raw(Shape::new(1, self.k, self.h, self.w), self.data.clone())
    }

    /// Stacks sets of equal shape back into an `(n, K, h, w)` tensor.
    pub fn stack(sets: &[HeatmapSet]) -> Result<Tensor> {
        let items: Vec<Tensor> = sets.iter().map(|s| s.to_tensor()).collect();
        Tensor::stack(&items)
    }
}

/// A decoded keypoint: position in pixels and a confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}
