use serde::{Deserialize, Serialize};

use super::heatmap::Keypoint;
use crate::error::{Error, Result};

/// Default context margin around a person box.
pub const DEFAULT_MARGIN: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonBox {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl PersonBox {
    pub fn new(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        let b = PersonBox {
            cx,
            cy,
            width,
            height,
        };
        b.check()?;
        Ok(b)
    }

    /// Box from its top-left corner and size, as stored in COCO-style `bbox` arrays.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x + w / 2.0, y + h / 2.0, w, h)
    }

    fn check(&self) -> Result<()> {
        let finite = [self.cx, self.cy, self.width, self.height]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::Domain(format!(
                "degenerate person box: centre ({}, {}), size {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Row-major 2x3 matrix acting on `(x, y, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub m: [[f64; 3]; 2],
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn new(m: [[f64; 3]; 2]) -> Result<Self> {
        let t = AffineTransform { m };
        if !m.iter().flatten().all(|v| v.is_finite()) || t.det() == 0.0 {
            return Err(Error::Domain(format!(
                "affine transform {m:?} is not invertible"
            )));
        }
        Ok(t)
    }

    /// Axis-aligned scale followed by translation.
    pub fn scale_translate(sx: f64, sy: f64, tx: f64, ty: f64) -> Result<Self> {
        Self::new([[sx, 0.0, tx], [0.0, sy, ty]])
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }

    pub fn inverse(&self) -> Result<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Domain("affine transform is singular".into()));
        }
        let [[a, b, tx], [c, e, ty]] = self.m;
        let (ia, ib, ic, ie) = (e / d, -b / d, -c / d, a / d);
        Self::new([
            [ia, ib, -(ia * tx + ib * ty)],
            [ic, ie, -(ic * tx + ie * ty)],
        ])
    }

    /// `self` after `first`: `x -> self(first(x))`.
    pub fn compose(&self, first: &AffineTransform) -> AffineTransform {
        let (a, b) = (&self.m, &first.m);
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                m[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            m[r][2] += a[r][2];
        }
        AffineTransform { m }
    }
}

/// Crop transform from image space onto a `(h, w)` model input.
///
/// The box grows along its short side to the input's `w:h` aspect ratio, is
/// scaled by `margin` about its centre, and that region maps onto `[0, w) x [0, h)`.
pub fn box_to_input_transform(
    b: PersonBox,
    input_size: (usize, usize),
    margin: f64,
) -> Result<AffineTransform> {
    b.check()?;
    let (h, w) = (input_size.0 as f64, input_size.1 as f64);
    if h <= 0.0 || w <= 0.0 {
        return Err(Error::config(format!(
            "input size {h}x{w} must be positive"
        )));
    }
    if !(margin.is_finite() && margin >= 1.0) {
        return Err(Error::config(format!(
            "box margin must be at least 1, got {margin}"
        )));
    }
    let aspect = w / h;
    let (mut rw, mut rh) = (b.width, b.height);
    if rw > aspect * rh {
        rh = rw / aspect;
    } else {
        rw = rh * aspect;
    }
    rw *= margin;
    rh *= margin;
    let (sx, sy) = (w / rw, h / rh);
    AffineTransform::scale_translate(sx, sy, -sx * (b.cx - rw / 2.0), -sy * (b.cy - rh / 2.0))
}

/// Maps heatmap-space keypoints to image space through the inverse of `t`.
///
/// Heatmap cell centres land on input pixel centres: `x -> stride * x + stride / 2 - 0.5`.
pub fn heatmap_to_image_coords(
    kps: &[Keypoint],
    t: &AffineTransform,
    stride: usize,
) -> Result<Vec<Keypoint>> {
    let inv = t.inverse()?;
    let s = stride as f64;
    let off = s / 2.0 - 0.5;
    Ok(kps
        .iter()
        .map(|k| {
            let (x, y) = inv.apply(s * k.x + off, s * k.y + off);
            Keypoint {
                x,
                y,
                score: k.score,
            }
        })
        .collect())
}
