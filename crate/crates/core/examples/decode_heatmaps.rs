//! Encodes keypoints as Gaussian targets, perturbs them, and compares the
//! Taylor-expansion decoder with the argmax quarter-offset rule.
//!
//! cargo run --release --example decode_heatmaps

use lightpose::codec::{decode_argmax_quarter, decode_dark, encode_gaussian_targets, GaussianSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lightpose::Result<()> {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let g = GaussianSpec::new(2.0)?;
    for noise in [0.0f32, 0.01, 0.05] {
        let (mut dark, mut quarter, mut fallbacks) = (0.0, 0.0, 0);
        let n = 500;
        for _ in 0..n {
            let truth = (r.gen_range(8.0..40.0), r.gen_range(8.0..56.0));
            let mut h = encode_gaussian_targets(&[(truth.0, truth.1, true)], (64, 48), g);
            for v in h.data_mut() {
                *v += r.gen_range(-noise..=noise);
            }
            let d = decode_dark(&h, g)?[0];
            fallbacks += d.fallback.is_some() as usize;
            let q = decode_argmax_quarter(&h)?[0];
            dark += ((d.keypoint.x - truth.0).powi(2) + (d.keypoint.y - truth.1).powi(2)).sqrt();
            quarter += ((q.x - truth.0).powi(2) + (q.y - truth.1).powi(2)).sqrt();
        }
        println!(
            "noise {noise:<5} mean error dark {:.4} px, quarter {:.4} px, {fallbacks} fallback(s)",
            dark / n as f64,
            quarter / n as f64
        );
    }
    Ok(())
}
