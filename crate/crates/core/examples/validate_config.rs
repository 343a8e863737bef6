//! Checks every shipped configuration against the supported layer set and the
//! accelerator envelope, printing each diagnostic.
//!
//! cargo run --example validate_config [-- --strict-3x3]

use std::path::Path;

use lightpose::model::{validate_config_with, Level, ModelConfig, ValidateOptions};

fn main() -> lightpose::Result<()> {
    let strict_3x3 = std::env::args().any(|a| a == "--strict-3x3");
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .expect("configs directory")
        .flatten()
        .map(|e| e.path())
        .collect();
    paths.sort();
    for p in paths {
        let cfg = ModelConfig::load(&p)?;
        let diags = validate_config_with(&cfg, ValidateOptions { strict_3x3 });
        let errors = diags.iter().filter(|d| d.level == Level::Error).count();
        let verdict = if errors > 0 { "rejected" } else { "ok" };
        println!(
            "{:<20} {verdict} ({} diagnostic(s))",
            p.file_name().unwrap().to_string_lossy(),
            diags.len()
        );
        for d in diags {
            println!("    {d}");
        }
    }
    Ok(())
}
