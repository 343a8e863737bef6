//! Prints MAC and parameter counts across the ablation grid: decoder depth,
//! decoder width, input resolution and backbone.
//!
//! cargo run --release --example cost_tables

use lightpose::model::{count_macs, count_params, Convention, ModelConfig, ENCODER_NAMES};

fn row(label: &str, cfg: &ModelConfig) {
    let out = count_macs(cfg, Convention::OutputBased).expect("valid config");
    let inp = count_macs(cfg, Convention::InputBased).expect("valid config");
    println!(
        "{label:<34} {:>8.3} GMACs  ({:>6.3} input-based)  {:>6.2} M params",
        out.gmacs(),
        inp.gmacs(),
        count_params(cfg).unwrap() as f64 * 1e-6
    );
}

fn main() {
    let d = ModelConfig::default();
    println!("decoder levels (32 channels each)");
    for levels in 2..=4 {
        row(
            &format!("  {levels} levels"),
            &d.clone().with_deconv(&vec![32; levels]),
        );
    }
    println!("head / deconv channel grid");
    for (head, ch) in [
        (10, 8),
        (20, 16),
        (40, 32),
        (80, 64),
        (160, 128),
        (320, 256),
    ] {
        row(
            &format!("  head {head}, deconv {ch}x3"),
            &d.clone().with_head(head).with_deconv(&[ch; 3]),
        );
    }
    println!("input resolution");
    for (h, w) in [(128, 96), (192, 160), (256, 192), (384, 288)] {
        row(&format!("  {h}x{w}"), &d.clone().with_input(h, w));
    }
    println!("backbones");
    for enc in ENCODER_NAMES {
        row(&format!("  {enc}"), &d.clone().with_encoder(enc));
    }
}
