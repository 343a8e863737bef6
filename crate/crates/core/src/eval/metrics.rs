//! Average precision and recall over OKS thresholds.
//!
//! Per image, detections are ranked by score and truncated to
//! [`MAX_DETECTIONS`]. At each threshold every detection greedily claims the
//! unclaimed ground-truth instance with the highest OKS at or above the
//! threshold (first instance on ties), preferring instances inside the area
//! range under evaluation. Detections claiming out-of-range instances, and
//! unmatched detections whose keypoint extent is out of range, are ignored.
//! Precision is interpolated at 101 recall points.

use std::collections::BTreeMap;

use serde::Serialize;

use super::oks::compute_oks;
use super::types::{DetInstance, GtInstance, OksConstants};
use crate::error::{Error, Result};

pub const MAX_DETECTIONS: usize = 20;
pub const RECALL_POINTS: usize = 101;
/// Exclusive area bounds of the medium range, in square pixels.
pub const MEDIUM_AREA: (f64, f64) = (32.0 * 32.0, 96.0 * 96.0);

/// `0.50, 0.55, ..., 0.95`.
pub fn oks_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub ap: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub ap: f64,
    pub ap50: f64,
    /// `None` when no ground truth falls in the medium area range.
    pub ap_medium: Option<f64>,
    pub ar: f64,
    pub per_threshold: Vec<ThresholdMetrics>,
}

/// For each detection, the index of the ground truth it matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub det_to_gt: Vec<Option<usize>>,
}

fn greedy(
    oks: &[Vec<Option<f64>>],
    n_gt: usize,
    gt_ignore: &[bool],
    threshold: f64,
) -> Vec<Option<usize>> {
    let mut taken = vec![false; n_gt];
    oks.iter()
        .map(|row| {
            let pick = |ignored: bool| {
                let mut best: Option<(usize, f64)> = None;
                for (g, o) in row.iter().enumerate() {
                    let Some(o) = *o else { continue };
                    if taken[g] || gt_ignore[g] != ignored || o < threshold {
                        continue;
                    }
                    if best.is_none_or(|(_, b)| o > b) {
                        best = Some((g, o));
                    }
                }
                best.map(|(g, _)| g)
            };
            let m = pick(false).or_else(|| pick(true));
            if let Some(g) = m {
                taken[g] = true;
            }
            m
        })
        .collect()
}

fn oks_matrix(
    dets: &[&DetInstance],
    gts: &[&GtInstance],
    consts: &OksConstants,
) -> Result<Vec<Vec<Option<f64>>>> {
    dets.iter()
        .map(|d| gts.iter().map(|g| compute_oks(d, g, consts)).collect())
        .collect()
}

/// One-to-one greedy matching of `dets` (taken in the given order, normally
/// by descending score) to `gts` at `threshold`.
pub fn match_instances(
    dets: &[DetInstance],
    gts: &[GtInstance],
    consts: &OksConstants,
    threshold: f64,
) -> Result<Matching> {
    let d: Vec<&DetInstance> = dets.iter().collect();
    let g: Vec<&GtInstance> = gts.iter().collect();
    let oks = oks_matrix(&d, &g, consts)?;
    Ok(Matching {
        det_to_gt: greedy(&oks, gts.len(), &vec![false; gts.len()], threshold),
    })
}

struct ImageEval<'a> {
    dets: Vec<&'a DetInstance>,
    gt_area: Vec<f64>,
    oks: Vec<Vec<Option<f64>>>,
}

struct Ranked {
    score: f64,
    tp: bool,
    ignored: bool,
}

fn in_range(area: f64, range: Option<(f64, f64)>) -> bool {
    range.is_none_or(|(lo, hi)| area > lo && area < hi)
}

/// Interpolated AP and final recall at one threshold, `None` if no ground truth counts.
fn precision_recall(
    images: &[ImageEval<'_>],
    range: Option<(f64, f64)>,
    threshold: f64,
) -> Option<(f64, f64)> {
    let mut ranked = Vec::new();
    let mut n_pos = 0usize;
    for im in images {
        let gt_ignore: Vec<bool> = im.gt_area.iter().map(|&a| !in_range(a, range)).collect();
        n_pos += gt_ignore.iter().filter(|&&i| !i).count();
        let m = greedy(&im.oks, im.gt_area.len(), &gt_ignore, threshold);
        for (d, g) in im.dets.iter().zip(m) {
            let ignored = match g {
                Some(g) => gt_ignore[g],
                None => !in_range(d.keypoint_extent_area(), range),
            };
            ranked.push(Ranked {
                score: d.score,
                tp: g.is_some(),
                ignored,
            });
        }
    }
    if n_pos == 0 {
        return None;
    }
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for r in ranked.iter().filter(|r| !r.ignored) {
        if r.tp {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / n_pos as f64);
    }
    for i in (1..precision.len()).rev() {
        precision[i - 1] = precision[i - 1].max(precision[i]);
    }
    let mut sum = 0.0;
    let mut j = 0;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        while j < recall.len() && recall[j] < level {
            j += 1;
        }
        if j < recall.len() {
            sum += precision[j];
        }
    }
    Some((
        sum / RECALL_POINTS as f64,
        recall.last().copied().unwrap_or(0.0),
    ))
}

pub fn compute_metrics(
    dets: &[DetInstance],
    gts: &[GtInstance],
    consts: &OksConstants,
) -> Result<EvalResult> {
    if gts.is_empty() {
        return Err(Error::Domain("empty ground truth".into()));
    }
    if let Some(i) = dets.iter().position(|d| !d.score.is_finite()) {
        return Err(Error::Domain(format!(
            "detection {i} has non-finite score {}",
            dets[i].score
        )));
    }
    let mut by_image: BTreeMap<u64, (Vec<&GtInstance>, Vec<&DetInstance>)> = BTreeMap::new();
    for g in gts.iter().filter(|g| g.num_visible() > 0) {
        by_image.entry(g.image_id).or_default().0.push(g);
    }
    if by_image.is_empty() {
        return Err(Error::Domain(
            "no ground-truth instance has labelled keypoints".into(),
        ));
    }
    for d in dets {
        by_image.entry(d.image_id).or_default().1.push(d);
    }
    let images = by_image
        .into_values()
        .map(|(g, mut d)| {
            d.sort_by(|a, b| b.score.total_cmp(&a.score));
            d.truncate(MAX_DETECTIONS);
            Ok(ImageEval {
                oks: oks_matrix(&d, &g, consts)?,
                gt_area: g.iter().map(|g| g.area).collect(),
                dets: d,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let thresholds = oks_thresholds();
    let per_threshold: Vec<ThresholdMetrics> = thresholds
        .iter()
        .map(|&t| {
            let (ap, recall) =
                precision_recall(&images, None, t).expect("evaluable ground truth exists");
            ThresholdMetrics {
                threshold: t,
                ap,
                recall,
            }
        })
        .collect();
    let medium: Option<Vec<f64>> = thresholds
        .iter()
        .map(|&t| precision_recall(&images, Some(MEDIUM_AREA), t).map(|p| p.0))
        .collect();
    Ok(EvalResult {
        ap: mean(per_threshold.iter().map(|m| m.ap)),
        ap50: per_threshold[0].ap,
        ap_medium: medium.map(|m| mean(m.into_iter())),
        ar: mean(per_threshold.iter().map(|m| m.recall)),
        per_threshold,
    })
}

/// Mean kept inside the range of its inputs, so rounding never lifts it past the largest term.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| {
            (l.min(x), h.max(x))
        });
    (v.iter().sum::<f64>() / v.len() as f64).clamp(lo, hi)
}
