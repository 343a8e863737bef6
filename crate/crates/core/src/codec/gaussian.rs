use serde::{Deserialize, Serialize};

use super::heatmap::HeatmapSet;
use crate::error::{Error, Result};

/// Spread of the target Gaussians, in heatmap pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GaussianSpec {
    sigma: f64,
}

impl GaussianSpec {
    /// Sigma used when none is configured, suited to 64x48 maps.
    pub const DEFAULT_SIGMA: f64 = 2.0;

    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::config(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        Ok(GaussianSpec { sigma })
    }

    pub fn sigma(self) -> f64 {
        self.sigma
    }
}

impl Default for GaussianSpec {
    fn default() -> Self {
        GaussianSpec {
            sigma: Self::DEFAULT_SIGMA,
        }
    }
}

impl TryFrom<f64> for GaussianSpec {
    type Error = Error;
    fn try_from(s: f64) -> Result<Self> {
        Self::new(s)
    }
}

impl From<GaussianSpec> for f64 {
    fn from(g: GaussianSpec) -> f64 {
        g.sigma
    }
}

/// Renders one unit-peak Gaussian per visible keypoint `(x, y, visible)`.
///
/// Centres may be sub-pixel or off the map; invisible keypoints get a zero map.
pub fn encode_gaussian_targets(
    kps: &[(f64, f64, bool)],
    size: (usize, usize),
    g: GaussianSpec,
) -> HeatmapSet {
    let (hh, ww) = size;
    let mut out = HeatmapSet::zeros(kps.len(), hh, ww);
    let denom = 2.0 * g.sigma * g.sigma;
    for (k, &(x, y, visible)) in kps.iter().enumerate() {
        if !visible {
            continue;
        }
        let map = out.map_mut(k);
        for v in 0..hh {
            let dy = v as f64 - y;
            for u in 0..ww {
                let dx = u as f64 - x;
                map[v * ww + u] = (-(dx * dx + dy * dy) / denom).exp() as f32;
            }
        }
    }
    out
}
