//! Heatmap regression and distillation losses.
//!
//! `L = mse(pred, gt) + alpha * mse(pred, teacher)`, each a mean over all
//! `K * h * w` elements, accumulated in `f64` in storage order.

use serde::{Deserialize, Serialize};

use crate::codec::HeatmapSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the teacher term.
    pub alpha: f64,
}

impl LossConfig {
    pub const DEFAULT_ALPHA: f64 = 1.0;

    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::config(format!(
                "alpha must be finite and non-negative, got {alpha}"
            )));
        }
        Ok(LossConfig { alpha })
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: Self::DEFAULT_ALPHA,
        }
    }
}

fn same_shape(a: &HeatmapSet, b: &HeatmapSet, what: &str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "{what} heatmaps are {}, predictions are {}",
            b.shape_string(),
            a.shape_string()
        )))
    }
}

pub fn mse_heatmap_loss(pred: &HeatmapSet, target: &HeatmapSet) -> Result<f64> {
    same_shape(pred, target, "target")?;
    if pred.is_empty() {
        return Err(Error::config("loss over empty heatmaps"));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

pub fn combined_loss(
    pred: &HeatmapSet,
    gt: &HeatmapSet,
    teacher: &HeatmapSet,
    cfg: LossConfig,
) -> Result<f64> {
    same_shape(pred, teacher, "teacher")?;
    let supervised = mse_heatmap_loss(pred, gt)?;
    if cfg.alpha == 0.0 {
        return Ok(supervised);
    }
    Ok(supervised + cfg.alpha * mse_heatmap_loss(pred, teacher)?)
}

/// `dL/dpred = 2/N (pred - gt) + alpha * 2/N (pred - teacher)`.
pub fn combined_loss_grad(
    pred: &HeatmapSet,
    gt: &HeatmapSet,
    teacher: &HeatmapSet,
    cfg: LossConfig,
) -> Result<HeatmapSet> {
    same_shape(pred, gt, "target")?;
    same_shape(pred, teacher, "teacher")?;
    if pred.is_empty() {
        return Err(Error::config("loss over empty heatmaps"));
    }
    let c = 2.0 / pred.len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(gt.data())
        .zip(teacher.data())
        .map(|((&p, &g), &t)| {
            let p = p as f64;
            (c * (p - g as f64) + cfg.alpha * c * (p - t as f64)) as f32
        })
        .collect();
    HeatmapSet::new(pred.num_keypoints(), pred.height(), pred.width(), data)
}
