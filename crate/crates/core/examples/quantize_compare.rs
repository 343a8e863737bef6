//! Calibrates an INT8 model on a few inputs and compares FP16 and INT8
//! simulated outputs against FP32, layer by layer.
//!
//! cargo run --release --example quantize_compare

use lightpose::model::{build_model, ModelConfig, WeightStore};
use lightpose::quant::{compare_outputs, quantize_model};
use lightpose::{Shape, Tensor};

fn input(seed: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        (((seed * 13 + c * 7 + y * 3 + x) % 31) as f32 - 15.0) / 15.0
    })
}

fn main() -> lightpose::Result<()> {
    let cfg = ModelConfig::default().with_input(128, 96);
    let g = build_model(&cfg)?;
    let ws = WeightStore::random(&g, 3);
    let [h, w] = cfg.input_size;
    let calib: Vec<Tensor> = (0..4).map(|i| input(i, h, w)).collect();
    let test: Vec<Tensor> = (10..12).map(|i| input(i, h, w)).collect();
    let qm = quantize_model(&g, &ws, &calib)?;
    let rep = compare_outputs(&g, &ws, &qm, &test)?;
    println!(
        "output  fp16 max {:.3e} mean {:.3e}",
        rep.fp16.output.max_abs, rep.fp16.output.mean_abs
    );
    println!(
        "output  int8 max {:.3e} mean {:.3e}",
        rep.int8.output.max_abs, rep.int8.output.mean_abs
    );
    let mut worst = rep.int8.layers.clone();
    worst.sort_by(|a, b| b.stats.mean_abs.total_cmp(&a.stats.mean_abs));
    println!("largest int8 layer errors:");
    for l in worst.iter().take(5) {
        println!(
            "    {:<28} mean {:.3e} max {:.3e}",
            l.layer, l.stats.mean_abs, l.stats.max_abs
        );
    }
    Ok(())
}
