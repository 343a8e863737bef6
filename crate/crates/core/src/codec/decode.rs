//! Heatmap to keypoint decoding.
//!
//! Two decoders are provided and never mixed implicitly:
//!
//! * [`decode_argmax_quarter`]: integer argmax plus a 0.25 px step toward the
//!   larger neighbour on each axis.
//! * [`decode_dark`]: distribution-aware sub-pixel decoding. The map is
//!   smoothed with a Gaussian of the training sigma, rescaled to its original
//!   peak, log-transformed, and a single Newton step `m - H^-1 g` is taken from
//!   the argmax using central finite differences. A sampled Gaussian has an
//!   exactly quadratic log, so on clean targets the step lands on the true
//!   centre up to smoothing-kernel truncation.

use serde::Serialize;

use super::gaussian::GaussianSpec;
use super::heatmap::{HeatmapSet, Keypoint};
use crate::error::{Error, Result};

/// Floor applied before taking the log of a smoothed map.
pub const LOG_FLOOR: f64 = 1e-10;

/// Why the sub-pixel step was skipped for a keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    /// The argmax is on the outermost ring; the derivative stencil does not fit.
    BorderPeak,
    /// The Hessian is singular or not negative on its diagonal.
    DegenerateHessian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DarkKeypoint {
    pub keypoint: Keypoint,
    /// Set when the quarter-offset result was used instead.
    pub fallback: Option<Fallback>,
}

/// First maximum in row-major order.
fn argmax(map: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in map.iter().enumerate() {
        if v > map[best] {
            best = i;
        }
    }
    best
}

fn quarter_step(lo: f32, hi: f32) -> f64 {
    if hi > lo {
        0.25
    } else if lo > hi {
        -0.25
    } else {
        0.0
    }
}

fn quarter_one(map: &[f32], h: usize, w: usize) -> Keypoint {
    let m = argmax(map);
    let (my, mx) = (m / w, m % w);
    let mut x = mx as f64;
    let mut y = my as f64;
    if mx > 0 && mx + 1 < w {
        x += quarter_step(map[m - 1], map[m + 1]);
    }
    if my > 0 && my + 1 < h {
        y += quarter_step(map[m - w], map[m + w]);
    }
    Keypoint {
        x,
        y,
        score: (map[m] as f64).clamp(0.0, 1.0),
    }
}

/// Argmax with a quarter-pixel shift toward the larger neighbour.
///
/// Equal neighbours and peaks on the border of an axis give no shift on that
/// axis. Ties for the maximum resolve to the smallest row-major index.
/// Coordinates are in heatmap pixels, `x` along columns.
pub fn decode_argmax_quarter(h: &HeatmapSet) -> Result<Vec<Keypoint>> {
    if h.height() < 2 || h.width() < 2 {
        return Err(Error::config(format!(
            "quarter-offset decoding needs maps of at least 2x2, got {}",
            h.shape_string()
        )));
    }
    Ok((0..h.num_keypoints())
        .map(|k| quarter_one(h.map(k), h.height(), h.width()))
        .collect())
}

/// Separable Gaussian blur with zero padding, kernel radius `ceil(3 sigma)`.
pub(crate) fn smooth(map: &[f32], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let mut rows = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                let sx = x as i64 + j as i64 - radius;
                if sx >= 0 && (sx as usize) < w {
                    acc += kv * map[y * w + sx as usize] as f64;
                }
            }
            rows[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                let sy = y as i64 + j as i64 - radius;
                if sy >= 0 && (sy as usize) < h {
                    acc += kv * rows[sy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn dark_one(map: &[f32], h: usize, w: usize, g: GaussianSpec) -> DarkKeypoint {
    let baseline = quarter_one(map, h, w);
    let m = argmax(map);
    let (my, mx) = (m / w, m % w);
    if mx == 0 || my == 0 || mx + 1 >= w || my + 1 >= h {
        return DarkKeypoint {
            keypoint: baseline,
            fallback: Some(Fallback::BorderPeak),
        };
    }
    let peak = map[m] as f64;
    let mut s = smooth(map, h, w, g.sigma());
    let smax = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if smax > 0.0 && peak > 0.0 {
        let r = peak / smax;
        s.iter_mut().for_each(|v| *v *= r);
    }
    let l = |y: usize, x: usize| s[y * w + x].max(LOG_FLOOR).ln();
    let c = l(my, mx);
    let dx = 0.5 * (l(my, mx + 1) - l(my, mx - 1));
    let dy = 0.5 * (l(my + 1, mx) - l(my - 1, mx));
    let dxx = l(my, mx + 1) - 2.0 * c + l(my, mx - 1);
    let dyy = l(my + 1, mx) - 2.0 * c + l(my - 1, mx);
    let dxy =
        0.25 * (l(my + 1, mx + 1) - l(my + 1, mx - 1) - l(my - 1, mx + 1) + l(my - 1, mx - 1));
    let det = dxx * dyy - dxy * dxy;
    if !(dxx < 0.0 && dyy < 0.0) || !det.is_finite() || det.abs() <= f64::EPSILON {
        return DarkKeypoint {
            keypoint: baseline,
            fallback: Some(Fallback::DegenerateHessian),
        };
    }
    // offset = -H^-1 g with H^-1 = [dyy, -dxy; -dxy, dxx] / det
    let ox = -(dyy * dx - dxy * dy) / det;
    let oy = -(dxx * dy - dxy * dx) / det;
    DarkKeypoint {
        keypoint: Keypoint {
            x: mx as f64 + ox,
            y: my as f64 + oy,
            score: peak.clamp(0.0, 1.0),
        },
        fallback: None,
    }
}

/// Taylor-expansion sub-pixel decoding; see the module docs.
pub fn decode_dark(h: &HeatmapSet, g: GaussianSpec) -> Result<Vec<DarkKeypoint>> {
    if h.height() < 3 || h.width() < 3 {
        return Err(Error::config(format!(
            "sub-pixel decoding needs maps of at least 3x3, got {}",
            h.shape_string()
        )));
    }
    Ok((0..h.num_keypoints())
        .map(|k| dark_one(h.map(k), h.height(), h.width(), g))
        .collect())
}
