//! Plain gradient descent on a student heatmap under the supervised plus
//! distillation loss. With alpha = 1 the optimum is the midpoint of the
//! ground truth and the teacher.
//!
//! cargo run --example distill_loss

use lightpose::codec::{encode_gaussian_targets, GaussianSpec, HeatmapSet};
use lightpose::loss::{combined_loss, combined_loss_grad, mse_heatmap_loss, LossConfig};

fn main() -> lightpose::Result<()> {
    let g = GaussianSpec::new(2.0)?;
    let gt = encode_gaussian_targets(&[(20.0, 30.0, true), (10.0, 12.0, true)], (64, 48), g);
    let teacher = encode_gaussian_targets(&[(21.0, 31.0, true), (10.5, 12.0, true)], (64, 48), g);
    let mut student = HeatmapSet::zeros(2, 64, 48);
    let cfg = LossConfig::new(1.0)?;
    // the loss is a mean, so the step has to scale with the element count
    let lr = student.len() as f32 / 20.0;
    for step in 0..=40 {
        if step % 10 == 0 {
            println!(
                "step {step:>2}  loss {:.4e}",
                combined_loss(&student, &gt, &teacher, cfg)?
            );
        }
        let grad = combined_loss_grad(&student, &gt, &teacher, cfg)?;
        for (s, d) in student.data_mut().iter_mut().zip(grad.data()) {
            *s -= lr * d;
        }
    }
    let mid: Vec<f32> = gt
        .data()
        .iter()
        .zip(teacher.data())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let mid = HeatmapSet::new(2, 64, 48, mid)?;
    println!(
        "distance to midpoint {:.3e}",
        mse_heatmap_loss(&student, &mid)?
    );
    Ok(())
}
