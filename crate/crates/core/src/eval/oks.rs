use super::types::{DetInstance, GtInstance, OksConstants};
use crate::error::{Error, Result};

/// Object keypoint similarity, `mean_i exp(-d_i^2 / (2 area k_i^2))` over
/// labelled ground-truth keypoints. `None` when none are labelled.
pub fn compute_oks(
    det: &DetInstance,
    gt: &GtInstance,
    consts: &OksConstants,
) -> Result<Option<f64>> {
    let k = consts.len();
    if det.keypoints.len() != k || gt.keypoints.len() != k {
        return Err(Error::config(format!(
            "OKS needs {k} keypoints, detection has {}, ground truth has {}",
            det.keypoints.len(),
            gt.keypoints.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((d, g), ki) in det.keypoints.iter().zip(&gt.keypoints).zip(&consts.k) {
        if g.2 == 0 {
            continue;
        }
        let (dx, dy) = (d.x - g.0, d.y - g.1);
        sum += (-(dx * dx + dy * dy) / (2.0 * gt.area * ki * ki)).exp();
        n += 1;
    }
    Ok((n > 0).then(|| sum / n as f64))
}
