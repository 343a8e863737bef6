//! Full top-down pipeline on synthetic crops: random-weight default model,
//! inference, DARK decoding, mapping back to frame coordinates and scoring.
//! Writes the detections as JSON next to the printed summary.
//!
//! cargo run --release --example end_to_end [-- out.json]

use lightpose::codec::{
    box_to_input_transform, decode_dark, heatmap_to_image_coords, GaussianSpec, HeatmapSet,
    PersonBox, DEFAULT_MARGIN,
};
use lightpose::eval::{compute_metrics, detections_to_json, DetInstance, GtInstance, OksConstants};
use lightpose::model::{build_model, InferOptions, ModelConfig, Plan, WeightStore};
use lightpose::report::sha256_hex;
use lightpose::{Shape, Tensor};

fn main() -> lightpose::Result<()> {
    let cfg = ModelConfig::default();
    let g = build_model(&cfg)?;
    let ws = WeightStore::random(&g, 7);
    let plan = Plan::new(&g, &ws, InferOptions { fuse: true })?;
    let [h, w] = cfg.input_size;
    let n = 4;

    let crops = Tensor::from_fn(Shape::new(n, 3, h, w), |i, c, y, x| {
        (((i * 17 + c * 5 + y + 2 * x) % 37) as f32 - 18.0) / 18.0
    });
    let boxes: Vec<PersonBox> = (0..n)
        .map(|i| PersonBox::new(150.0 + 100.0 * i as f64, 240.0, 120.0, 200.0))
        .collect::<Result<_, _>>()?;
    let gts: Vec<GtInstance> = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| GtInstance {
            image_id: i as u64,
            keypoints: (0..17)
                .map(|k| {
                    (
                        b.cx + 4.0 * (k % 4) as f64 - 6.0,
                        b.cy + 10.0 * (k / 4) as f64 - 20.0,
                        2,
                    )
                })
                .collect(),
            area: 0.6 * b.width * b.height,
            bbox: *b,
        })
        .collect();

    let heat = plan.run(&crops)?;
    let stride = h / heat.shape().h;
    let mut dets = Vec::new();
    for (i, (hm, b)) in HeatmapSet::from_batch(&heat).iter().zip(&boxes).enumerate() {
        let kps: Vec<_> = decode_dark(hm, GaussianSpec::default())?
            .into_iter()
            .map(|d| d.keypoint)
            .collect();
        let t = box_to_input_transform(*b, (h, w), DEFAULT_MARGIN)?;
        let keypoints = heatmap_to_image_coords(&kps, &t, stride)?;
        let score = keypoints.iter().map(|k| k.score).sum::<f64>() / keypoints.len() as f64;
        dets.push(DetInstance {
            image_id: i as u64,
            keypoints,
            score,
        });
    }
    let m = compute_metrics(&dets, &gts, &OksConstants::coco())?;
    println!(
        "heatmaps {} sha256 {}",
        heat.shape(),
        &sha256_hex(&heat.to_tnsr_bytes())[..16]
    );
    println!(
        "AP {:.4}  AR {:.4}  (untrained weights, so near zero)",
        m.ap, m.ar
    );
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, detections_to_json(&dets)).map_err(|source| {
            lightpose::Error::Io {
                path: path.clone().into(),
                source,
            }
        })?;
        println!("detections -> {path}");
    }
    Ok(())
}
