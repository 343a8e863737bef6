//! Scores jittered detections against ground truth with OKS-based AP/AR,
//! showing how metrics fall as localisation noise grows.
//!
//! cargo run --example evaluate_oks

use lightpose::codec::{Keypoint, PersonBox};
use lightpose::eval::{compute_metrics, DetInstance, GtInstance, OksConstants};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lightpose::Result<()> {
    let consts = OksConstants::coco();
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let gts: Vec<GtInstance> = (0..40)
        .map(|i| {
            let (w, h) = (r.gen_range(30.0..150.0), r.gen_range(60.0..250.0));
            let b = PersonBox::new(320.0, 240.0, w, h).unwrap();
            GtInstance {
                image_id: i / 2,
                keypoints: (0..17)
                    .map(|_| {
                        (
                            b.cx + r.gen_range(-0.4..0.4) * w,
                            b.cy + r.gen_range(-0.4..0.4) * h,
                            2,
                        )
                    })
                    .collect(),
                area: 0.6 * w * h,
                bbox: b,
            }
        })
        .collect();
    for jitter in [0.0, 2.0, 5.0, 10.0, 20.0] {
        let dets: Vec<DetInstance> = gts
            .iter()
            .map(|g| DetInstance {
                image_id: g.image_id,
                keypoints: g
                    .keypoints
                    .iter()
                    .map(|&(x, y, _)| Keypoint {
                        x: x + r.gen_range(-jitter..=jitter),
                        y: y + r.gen_range(-jitter..=jitter),
                        score: 1.0,
                    })
                    .collect(),
                score: r.gen_range(0.1..1.0),
            })
            .collect();
        let m = compute_metrics(&dets, &gts, &consts)?;
        let medium = m.ap_medium.map_or("  n/a ".into(), |v| format!("{v:.4}"));
        println!(
            "jitter {jitter:>4} px  AP {:.4}  AP50 {:.4}  AP^M {medium}  AR {:.4}",
            m.ap, m.ap50, m.ar
        );
    }
    Ok(())
}
