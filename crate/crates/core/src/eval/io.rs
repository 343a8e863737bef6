//! COCO-style JSON annotation and result files.
//!
//! Annotations: `{"images": [{"id", "width", "height"}], "annotations":
//! [{"image_id", "keypoints": [x, y, v, ...], "area", "bbox": [x, y, w, h]}]}`.
//! Detections: `[{"image_id", "keypoints": [x, y, c, ...], "score"}]`.
//! Unknown fields are ignored so full COCO files load.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::types::{DetInstance, GtInstance};
use crate::codec::{Keypoint, PersonBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Deserialize)]
struct AnnotationFile {
    images: Vec<ImageInfo>,
    annotations: Vec<Value>,
}

#[derive(Deserialize)]
struct AnnotationRecord {
    image_id: u64,
    keypoints: Vec<f64>,
    area: f64,
    bbox: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    image_id: u64,
    keypoints: Vec<f64>,
    score: f64,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn record_err(kind: &str, i: usize, msg: impl std::fmt::Display) -> Error {
    Error::format(format!("{kind} record {i}: {msg}"))
}

fn parse_gt(i: usize, v: Value, images: &BTreeSet<u64>) -> Result<GtInstance> {
    let r: AnnotationRecord =
        serde_json::from_value(v).map_err(|e| record_err("annotation", i, e))?;
    if !images.contains(&r.image_id) {
        return Err(record_err(
            "annotation",
            i,
            format!("image_id {} is not listed in images", r.image_id),
        ));
    }
    if !r.keypoints.len().is_multiple_of(3) || r.keypoints.is_empty() {
        return Err(record_err(
            "annotation",
            i,
            format!(
                "{} keypoint values is not a list of triplets",
                r.keypoints.len()
            ),
        ));
    }
    let mut keypoints = Vec::with_capacity(r.keypoints.len() / 3);
    for t in r.keypoints.chunks_exact(3) {
        let vis = t[2];
        if !(vis == 0.0 || vis == 1.0 || vis == 2.0) {
            return Err(record_err(
                "annotation",
                i,
                format!("visibility {vis} is not 0, 1 or 2"),
            ));
        }
        if !(t[0].is_finite() && t[1].is_finite()) {
            return Err(record_err(
                "annotation",
                i,
                "non-finite keypoint coordinate",
            ));
        }
        keypoints.push((t[0], t[1], vis as u8));
    }
    if !(r.area.is_finite() && r.area > 0.0) {
        return Err(record_err(
            "annotation",
            i,
            format!("area {} must be positive", r.area),
        ));
    }
    let [x, y, w, h] = r.bbox;
    let bbox = PersonBox::from_xywh(x, y, w, h).map_err(|e| record_err("annotation", i, e))?;
    Ok(GtInstance {
        image_id: r.image_id,
        keypoints,
        area: r.area,
        bbox,
    })
}

pub fn parse_annotations(text: &str) -> Result<(Vec<ImageInfo>, Vec<GtInstance>)> {
    let file: AnnotationFile =
        serde_json::from_str(text).map_err(|e| Error::format(format!("annotation file: {e}")))?;
    if file.annotations.is_empty() {
        return Err(Error::Domain("empty ground truth".into()));
    }
    let ids: BTreeSet<u64> = file.images.iter().map(|im| im.id).collect();
    let gts = file
        .annotations
        .into_iter()
        .enumerate()
        .map(|(i, v)| parse_gt(i, v, &ids))
        .collect::<Result<Vec<_>>>()?;
    Ok((file.images, gts))
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<GtInstance>> {
    Ok(parse_annotations(&read(path.as_ref())?)?.1)
}

/// Serializes ground truth back to the annotation schema.
pub fn annotations_to_json(images: &[ImageInfo], gts: &[GtInstance]) -> String {
    let anns: Vec<Value> = gts
        .iter()
        .map(|g| {
            let kps: Vec<f64> = g
                .keypoints
                .iter()
                .flat_map(|&(x, y, v)| [x, y, v as f64])
                .collect();
            let b = &g.bbox;
            serde_json::json!({
                "image_id": g.image_id,
                "keypoints": kps,
                "num_keypoints": g.num_visible(),
                "area": g.area,
                "bbox": [b.cx - b.width / 2.0, b.cy - b.height / 2.0, b.width, b.height],
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({ "images": images, "annotations": anns }))
        .expect("json")
}

pub fn parse_detections(text: &str) -> Result<Vec<DetInstance>> {
    let raw: Vec<Value> =
        serde_json::from_str(text).map_err(|e| Error::format(format!("detection file: {e}")))?;
    raw.into_iter()
        .enumerate()
        .map(|(i, v)| {
            let r: DetectionRecord =
                serde_json::from_value(v).map_err(|e| record_err("detection", i, e))?;
            if !r.keypoints.len().is_multiple_of(3) || r.keypoints.is_empty() {
                return Err(record_err(
                    "detection",
                    i,
                    format!(
                        "{} keypoint values is not a list of triplets",
                        r.keypoints.len()
                    ),
                ));
            }
            if !r.score.is_finite() || !r.keypoints.iter().all(|v| v.is_finite()) {
                return Err(record_err("detection", i, "non-finite value"));
            }
            Ok(DetInstance {
                image_id: r.image_id,
                keypoints: r
                    .keypoints
                    .chunks_exact(3)
                    .map(|t| Keypoint {
                        x: t[0],
                        y: t[1],
                        score: t[2],
                    })
                    .collect(),
                score: r.score,
            })
        })
        .collect()
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<DetInstance>> {
    parse_detections(&read(path.as_ref())?)
}

pub fn detections_to_json(dets: &[DetInstance]) -> String {
    let recs: Vec<DetectionRecord> = dets
        .iter()
        .map(|d| DetectionRecord {
            image_id: d.image_id,
            keypoints: d
                .keypoints
                .iter()
                .flat_map(|k| [k.x, k.y, k.score])
                .collect(),
            score: d.score,
        })
        .collect();
    serde_json::to_string_pretty(&recs).expect("json")
}

pub fn write_detections(path: impl AsRef<Path>, dets: &[DetInstance]) -> Result<()> {
    let p = path.as_ref();
    fs::write(p, detections_to_json(dets)).map_err(|e| Error::io(p, e))
}
