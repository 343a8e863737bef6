//! Runs the default network on a synthetic crop with seeded random weights,
//! with and without batch-norm folding, and reports shapes and timings.
//!
//! cargo run --release --example infer_default

use std::time::Instant;

use lightpose::model::{build_model, runtime_shapes, InferOptions, ModelConfig, Plan, WeightStore};
use lightpose::{Shape, Tensor};

fn main() -> lightpose::Result<()> {
    let cfg = ModelConfig::default();
    let g = build_model(&cfg)?;
    let ws = WeightStore::random(&g, 7);
    let [h, w] = cfg.input_size;
    let x = Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, xx| {
        ((y * 3 + xx * 5 + c) % 29) as f32 / 14.5 - 1.0
    });

    let mut outputs = Vec::new();
    for fuse in [false, true] {
        let plan = Plan::new(&g, &ws, InferOptions { fuse })?;
        let t = Instant::now();
        let y = plan.run(&x)?;
        println!(
            "fuse={fuse:<5} output {} in {:.1} ms",
            y.shape(),
            t.elapsed().as_secs_f64() * 1e3
        );
        outputs.push(y);
    }
    println!(
        "max |fused - unfused| = {:.3e}",
        outputs[0].max_abs_diff(&outputs[1])
    );

    let plan = Plan::new(&g, &ws, InferOptions::default())?;
    let shapes = runtime_shapes(&plan, &x)?;
    println!("{} nodes; last five:", shapes.len());
    for (id, s) in shapes.iter().rev().take(5).rev() {
        println!("    {:<24} {s}", g.node(*id).name);
    }
    Ok(())
}
