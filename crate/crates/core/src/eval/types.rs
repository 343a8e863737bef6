use serde::{Deserialize, Serialize};

use crate::codec::{Keypoint, PersonBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub image_id: u64,
    /// `(x, y, visibility)` with visibility 0 (unlabelled), 1 (occluded) or 2 (visible).
    pub keypoints: Vec<(f64, f64, u8)>,
    pub area: f64,
    pub bbox: PersonBox,
}

impl GtInstance {
    pub fn num_visible(&self) -> usize {
        self.keypoints.iter().filter(|k| k.2 > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetInstance {
    pub image_id: u64,
    pub keypoints: Vec<Keypoint>,
    pub score: f64,
}

impl DetInstance {
    /// Area of the keypoints' bounding rectangle, used for area-range filtering.
    pub fn keypoint_extent_area(&self) -> f64 {
        if self.keypoints.is_empty() {
            return 0.0;
        }
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for k in &self.keypoints {
            x0 = x0.min(k.x);
            x1 = x1.max(k.x);
            y0 = y0.min(k.y);
            y1 = y1.max(k.y);
        }
        (x1 - x0) * (y1 - y0)
    }
}

/// Per-keypoint OKS falloff constants `k_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OksConstants {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keypoints: Vec<String>,
    pub k: Vec<f64>,
}

const DEFAULT_OKS: &str = include_str!("../../data/coco_oks_constants.json");

impl OksConstants {
    pub fn new(k: Vec<f64>) -> Result<Self> {
        let c = OksConstants {
            keypoints: Vec::new(),
            k,
        };
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        if self.k.is_empty() {
            return Err(Error::config("OKS constants list is empty"));
        }
        if let Some(i) = self.k.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config(format!(
                "OKS constant {i} = {} must be positive",
                self.k[i]
            )));
        }
        if !self.keypoints.is_empty() && self.keypoints.len() != self.k.len() {
            return Err(Error::config(format!(
                "{} keypoint names for {} OKS constants",
                self.keypoints.len(),
                self.k.len()
            )));
        }
        Ok(())
    }

    /// The 17 COCO person keypoint constants (twice the published per-keypoint sigmas).
    pub fn coco() -> Self {
        Self::from_json(DEFAULT_OKS).expect("bundled constants parse")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: OksConstants =
            serde_json::from_str(text).map_err(|e| Error::format(format!("OKS constants: {e}")))?;
        c.check()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }
}

impl Default for OksConstants {
    fn default() -> Self {
        Self::coco()
    }
}
