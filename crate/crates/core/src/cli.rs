//! Command-line front end. The `lightpose` binary is a thin wrapper around [`main`].
//!
//! Every command prints a human-readable summary to stdout and writes a JSON
//! [`RunReport`] (default `lightpose-<command>.json`, override with
//! `--report`). Inputs are read and validated before anything is written.
//! Exit codes: 0 success, 1 validation or domain error, 2 I/O error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::codec::{
    box_to_input_transform, decode_argmax_quarter, decode_dark, heatmap_to_image_coords,
    AffineTransform, GaussianSpec, HeatmapSet, Keypoint, PersonBox, DEFAULT_MARGIN,
};
use crate::error::{Error, Result};
use crate::eval::{
    compute_metrics, detections_to_json, load_annotations, load_detections, DetInstance,
    OksConstants,
};
use crate::loss::{combined_loss, combined_loss_grad, mse_heatmap_loss, LossConfig};
use crate::model::{
    build_model, graph_cost, infer_timed, validate_config_with, Convention, Graph, InferOptions,
    Level, ModelConfig, Op, Plan, ValidateOptions, WeightStore,
};
use crate::quant::{compare_outputs, fp16_round, fp16_round_slice, quantize_model};
use crate::report::{sha256_hex, Assumptions, RunReport};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Parser)]
#[command(
    name = "lightpose",
    version,
    about = "Lightweight top-down pose network toolkit"
)]
pub struct Cli {
    /// Worker threads for data-parallel kernels (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Where to write the JSON run report.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    OutputBased,
    InputBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    Fp32,
    Fp16,
    Int8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeMethod {
    Dark,
    Quarter,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count MACs and parameters of a model configuration.
    Flops {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "output-based")]
        convention: ConventionArg,
        /// Report 2 FLOPs per MAC.
        #[arg(long)]
        double_count: bool,
        /// Print the per-layer table.
        #[arg(long)]
        per_layer: bool,
    },
    /// Check a configuration against the layer set and hardware envelope.
    Validate {
        config: PathBuf,
        /// Also warn on non-3x3 spatial kernels.
        #[arg(long)]
        strict_3x3: bool,
    },
    /// Write deterministic random (or zero) weights for a configuration.
    InitWeights {
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        blob: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        zeros: bool,
    },
    /// Run the model on tensor dumps and write the heatmap batch.
    Infer {
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        blob: PathBuf,
        /// Input tensor dumps, concatenated along the batch axis.
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Fold batch norms into convolutions first.
        #[arg(long)]
        fuse: bool,
        #[arg(long, value_enum, default_value = "fp32")]
        precision: Precision,
        /// Calibration tensor dumps (required for int8).
        #[arg(long = "calib", num_args = 1..)]
        calib: Vec<PathBuf>,
        /// Also report FP16 and INT8 errors against FP32 (needs --calib).
        #[arg(long)]
        compare: bool,
    },
    /// Decode heatmap dumps to keypoints.
    Decode {
        heatmaps: PathBuf,
        #[arg(long, value_enum, default_value = "dark")]
        method: DecodeMethod,
        /// Target Gaussian sigma in heatmap pixels.
        #[arg(long)]
        sigma: Option<f64>,
        /// JSON list of `{image_id, bbox: [x, y, w, h], score}`, one per heatmap item.
        #[arg(long)]
        boxes: Option<PathBuf>,
        #[arg(long)]
        margin: Option<f64>,
        /// Heatmap stride relative to the model input.
        #[arg(long, default_value_t = 4)]
        stride: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score detections against annotations (AP, AP50, AP^M, AR).
    Eval {
        detections: PathBuf,
        annotations: PathBuf,
        #[arg(long)]
        oks_consts: Option<PathBuf>,
    },
    /// Per-layer timing of repeated forward passes.
    Bench {
        config: PathBuf,
        #[arg(long, requires = "blob")]
        manifest: Option<PathBuf>,
        #[arg(long, requires = "manifest")]
        blob: Option<PathBuf>,
        /// Seed for random weights when no manifest is given.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        #[arg(long)]
        fuse: bool,
    },
    /// Supervised plus distillation loss of heatmap dumps.
    Loss {
        pred: PathBuf,
        gt: PathBuf,
        teacher: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        /// Write the gradient with respect to `pred`.
        #[arg(long)]
        grad_out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Flops { .. } => "flops",
            Command::Validate { .. } => "validate",
            Command::InitWeights { .. } => "init-weights",
            Command::Infer { .. } => "infer",
            Command::Decode { .. } => "decode",
            Command::Eval { .. } => "eval",
            Command::Bench { .. } => "bench",
            Command::Loss { .. } => "loss",
        }
    }
}

/// What a command produced: printable text, the report, and whether it failed validation.
pub struct Outcome {
    pub text: String,
    pub report: RunReport,
    pub exit_code: i32,
}

fn read_bytes(p: &Path) -> Result<Vec<u8>> {
    fs::read(p).map_err(|e| Error::io(p, e))
}

fn load_config(p: &Path, report: &mut RunReport) -> Result<ModelConfig> {
    let bytes = read_bytes(p)?;
    report.config_hash = Some(sha256_hex(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::format(format!("{} is not UTF-8", p.display())))?;
    ModelConfig::from_toml_str(&text)
}

fn write_file(p: &Path, bytes: &[u8], report: &mut RunReport) -> Result<()> {
    fs::write(p, bytes).map_err(|e| Error::io(p, e))?;
    report.outputs.push(p.to_path_buf());
    Ok(())
}

fn load_batch(paths: &[PathBuf]) -> Result<Tensor> {
    let parts = paths.iter().map(Tensor::load).collect::<Result<Vec<_>>>()?;
    Tensor::stack(&parts)
}

fn heatmap_tensor_to_set(t: &Tensor) -> Result<HeatmapSet> {
    let s = t.shape();
    HeatmapSet::new(s.n * s.c, s.h, s.w, t.data().to_vec())
}

fn convention(c: ConventionArg) -> Convention {
    match c {
        ConventionArg::OutputBased => Convention::OutputBased,
        ConventionArg::InputBased => Convention::InputBased,
    }
}

#[derive(Debug, Deserialize)]
struct BoxRecord {
    image_id: u64,
    bbox: [f64; 4],
    #[serde(default = "unit")]
    score: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Serialize)]
struct LayerTiming {
    layer: String,
    kind: String,
    folded: bool,
    mean_ms: f64,
}

/// Executes one parsed command without printing or writing the report.
pub fn execute(cli: &Cli, argv: Vec<String>) -> Result<Outcome> {
    let mut report = RunReport::new(argv);
    let mut assumptions = Assumptions::default();
    let mut text = String::new();
    let mut exit_code = 0;
    match &cli.command {
        Command::Flops {
            config,
            convention: conv,
            double_count,
            per_layer,
        } => {
            let cfg = load_config(config, &mut report)?;
            let g = report.time("build", || build_model(&cfg))?;
            let r = graph_cost(&g, convention(*conv));
            let unit = if *double_count {
                "GFLOPs (2 per MAC)"
            } else {
                "GFLOPs (1 per MAC)"
            };
            if *per_layer {
                for l in r.layers.iter().filter(|l| l.macs > 0 || l.params > 0) {
                    text += &format!(
                        "{:<32} {:<10} {:>14} MACs {:>10} params\n",
                        l.layer, l.kind, l.macs, l.params
                    );
                }
            }
            text += &format!(
                "encoder {}  input {}x{}\ntotal MACs {}  {:.4} {unit}\nparameters {}\n",
                cfg.encoder,
                cfg.input_size[0],
                cfg.input_size[1],
                r.total_macs,
                r.gflops(*double_count),
                r.total_params
            );
            report.result = json!({
                "convention": r.convention,
                "double_count": double_count,
                "total_macs": r.total_macs,
                "gflops": r.gflops(*double_count),
                "total_params": r.total_params,
                "layers": r.layers,
            });
        }
        Command::Validate { config, strict_3x3 } => {
            let cfg = load_config(config, &mut report)?;
            let diags = validate_config_with(
                &cfg,
                ValidateOptions {
                    strict_3x3: *strict_3x3,
                },
            );
            let errors = diags.iter().filter(|d| d.level == Level::Error).count();
            for d in &diags {
                text += &format!("{d}\n");
            }
            text += &format!("{errors} error(s), {} warning(s)\n", diags.len() - errors);
            if errors > 0 {
                exit_code = 1;
            }
            report.result =
                json!({ "errors": errors, "warnings": diags.len() - errors, "diagnostics": diags });
        }
        Command::InitWeights {
            config,
            manifest,
            blob,
            seed,
            zeros,
        } => {
            let cfg = load_config(config, &mut report)?;
            let g = build_model(&cfg)?;
            let ws = if *zeros {
                WeightStore::zeros(&g)
            } else {
                WeightStore::random(&g, *seed)
            };
            let (m, b) = ws.save();
            write_file(manifest, m.to_json().as_bytes(), &mut report)?;
            write_file(blob, &b, &mut report)?;
            text += &format!("{} arrays, {} bytes\n", m.entries.len(), b.len());
            report.result = json!({ "arrays": m.entries.len(), "bytes": b.len(), "seed": seed, "zeros": zeros });
        }
        Command::Infer {
            config,
            manifest,
            blob,
            inputs,
            output,
            fuse,
            precision,
            calib,
            compare,
        } => {
            if (*precision == Precision::Int8 || *compare) && calib.is_empty() {
                return Err(Error::Domain(
                    "int8 inference needs calibration inputs (--calib)".into(),
                ));
            }
            let cfg = load_config(config, &mut report)?;
            let ws = report.time("load-weights", || WeightStore::load_files(manifest, blob))?;
            let x = load_batch(inputs)?;
            let calib_t = calib.iter().map(Tensor::load).collect::<Result<Vec<_>>>()?;
            let g = build_model(&cfg)?;
            let heat = match precision {
                Precision::Fp32 => {
                    let plan = Plan::new(&g, &ws, InferOptions { fuse: *fuse })?;
                    report.time("infer", || plan.run(&x))?
                }
                Precision::Fp16 => {
                    let plan = Plan::new(&g, &ws, InferOptions { fuse: *fuse })?
                        .map_weights(fp16_round_slice)?;
                    report.time("infer", || {
                        plan.run_observed(&x, |_, t, _| {
                            *t = fp16_round(t)?;
                            Ok(())
                        })
                    })?
                }
                Precision::Int8 => {
                    if !fuse {
                        report.warn("int8 always folds batch norms; --fuse is implied");
                    }
                    let qm = report.time("calibrate", || quantize_model(&g, &ws, &calib_t))?;
                    report.time("infer", || qm.run(&x))?
                }
            };
            let mut extra = serde_json::Value::Null;
            if *compare {
                let qm = quantize_model(&g, &ws, &calib_t)?;
                let items: Vec<Tensor> = (0..x.shape().n).map(|n| x.item(n)).collect();
                let c = report.time("compare", || compare_outputs(&g, &ws, &qm, &items))?;
                text += &format!(
                    "fp16 error max {:.3e} mean {:.3e}\nint8 error max {:.3e} mean {:.3e}\n",
                    c.fp16.output.max_abs,
                    c.fp16.output.mean_abs,
                    c.int8.output.max_abs,
                    c.int8.output.mean_abs
                );
                extra = serde_json::to_value(&c).expect("json");
            }
            write_file(output, &heat.to_tnsr_bytes(), &mut report)?;
            text += &format!("heatmaps {} -> {}\n", heat.shape(), output.display());
            report.result = json!({
                "precision": format!("{precision:?}").to_lowercase(),
                "fused": *fuse || *precision == Precision::Int8,
                "output_shape": heat.shape(),
                "output_max_abs": heat.max_abs(),
                "output_sha256": sha256_hex(&heat.to_tnsr_bytes()),
                "compare": extra,
            });
        }
        Command::Decode {
            heatmaps,
            method,
            sigma,
            boxes,
            margin,
            stride,
            output,
        } => {
            let t = Tensor::load(heatmaps)?;
            let g = match sigma {
                Some(s) => GaussianSpec::new(*s)?,
                None => GaussianSpec::default(),
            };
            assumptions.sigma = (g.sigma(), sigma.is_none());
            let margin_v = margin.unwrap_or(DEFAULT_MARGIN);
            assumptions.margin = (margin_v, margin.is_none());
            let box_list: Option<Vec<BoxRecord>> = match boxes {
                Some(p) => {
                    let bytes = read_bytes(p)?;
                    Some(
                        serde_json::from_slice(&bytes)
                            .map_err(|e| Error::format(format!("boxes file: {e}")))?,
                    )
                }
                None => None,
            };
            let sets = HeatmapSet::from_batch(&t);
            if let Some(b) = &box_list {
                if b.len() != sets.len() {
                    return Err(Error::Domain(format!(
                        "{} boxes for {} heatmap items",
                        b.len(),
                        sets.len()
                    )));
                }
            }
            let input_size = (t.shape().h * stride, t.shape().w * stride);
            let mut dets = Vec::new();
            let mut fallbacks = 0usize;
            report.time("decode", || {
                for (i, h) in sets.iter().enumerate() {
                    let kps: Vec<Keypoint> = match method {
                        DecodeMethod::Quarter => decode_argmax_quarter(h)?,
                        DecodeMethod::Dark => decode_dark(h, g)?
                            .into_iter()
                            .map(|d| {
                                fallbacks += d.fallback.is_some() as usize;
                                d.keypoint
                            })
                            .collect(),
                    };
                    let (tf, image_id, box_score) = match &box_list {
                        Some(b) => {
                            let [x, y, w, hgt] = b[i].bbox;
                            let pb = PersonBox::from_xywh(x, y, w, hgt)?;
                            (
                                box_to_input_transform(pb, input_size, margin_v)?,
                                b[i].image_id,
                                b[i].score,
                            )
                        }
                        None => (AffineTransform::IDENTITY, i as u64, 1.0),
                    };
                    let kps = heatmap_to_image_coords(&kps, &tf, *stride)?;
                    let mean = kps.iter().map(|k| k.score).sum::<f64>() / kps.len().max(1) as f64;
                    dets.push(DetInstance {
                        image_id,
                        keypoints: kps,
                        score: box_score * mean,
                    });
                }
                Ok(())
            })?;
            write_file(output, detections_to_json(&dets).as_bytes(), &mut report)?;
            text += &format!(
                "{} instances decoded ({:?}), {} keypoint fallback(s) -> {}\n",
                dets.len(),
                method,
                fallbacks,
                output.display()
            );
            report.result = json!({
                "method": format!("{method:?}").to_lowercase(),
                "instances": dets.len(),
                "fallbacks": fallbacks,
                "sigma": g.sigma(),
                "margin": margin_v,
                "stride": stride,
            });
        }
        Command::Eval {
            detections,
            annotations,
            oks_consts,
        } => {
            let dets = load_detections(detections)?;
            let gts = load_annotations(annotations)?;
            let consts = match oks_consts {
                Some(p) => {
                    let bytes = read_bytes(p)?;
                    OksConstants::from_json(&String::from_utf8_lossy(&bytes))?
                }
                None => OksConstants::coco(),
            };
            assumptions.default_oks = oks_consts.is_none();
            let r = report.time("evaluate", || compute_metrics(&dets, &gts, &consts))?;
            let medium = r.ap_medium.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            text += &format!(
                "AP {:.4}  AP50 {:.4}  AP^M {medium}  AR {:.4}\n",
                r.ap, r.ap50, r.ar
            );
            report.result = serde_json::to_value(&r).expect("json");
        }
        Command::Bench {
            config,
            manifest,
            blob,
            seed,
            iters,
            batch,
            fuse,
        } => {
            if *iters == 0 || *batch == 0 {
                return Err(Error::Domain(
                    "--iters and --batch must be at least 1".into(),
                ));
            }
            let cfg = load_config(config, &mut report)?;
            let g = build_model(&cfg)?;
            let ws = match (manifest, blob) {
                (Some(m), Some(b)) => WeightStore::load_files(m, b)?,
                _ => WeightStore::random(&g, *seed),
            };
            let plan = Plan::new(&g, &ws, InferOptions { fuse: *fuse })?;
            let (ch, h, w) = (g.input_shape().c, g.input_shape().h, g.input_shape().w);
            let x = Tensor::from_fn(Shape::new(*batch, ch, h, w), |n, c, y, xx| {
                (((n * 7 + c * 5 + y * 3 + xx) % 17) as f32 - 8.0) / 8.0
            });
            let (layers, out_hash, total) = bench(&g, &plan, &x, *iters)?;
            for l in &layers {
                text += &format!(
                    "{:<32} {:<10} {:>10.4} ms{}\n",
                    l.layer,
                    l.kind,
                    l.mean_ms,
                    if l.folded { "  (folded)" } else { "" }
                );
            }
            text += &format!(
                "{} layers, {:.3} ms per pass over {iters} pass(es)\n",
                layers.len(),
                total
            );
            report.result = json!({
                "iters": iters,
                "batch": batch,
                "fused": fuse,
                "threads": rayon::current_num_threads(),
                "mean_pass_ms": total,
                "output_sha256": out_hash,
                "layers": layers,
            });
        }
        Command::Loss {
            pred,
            gt,
            teacher,
            alpha,
            grad_out,
        } => {
            let (p, gtt, tt) = (
                Tensor::load(pred)?,
                Tensor::load(gt)?,
                Tensor::load(teacher)?,
            );
            let cfg = match alpha {
                Some(a) => LossConfig::new(*a)?,
                None => LossConfig::default(),
            };
            assumptions.alpha = (cfg.alpha, alpha.is_none());
            if p.shape() != gtt.shape() || p.shape() != tt.shape() {
                return Err(Error::config(format!(
                    "heatmap shapes differ: pred {}, gt {}, teacher {}",
                    p.shape(),
                    gtt.shape(),
                    tt.shape()
                )));
            }
            let (ps, gs, ts) = (
                heatmap_tensor_to_set(&p)?,
                heatmap_tensor_to_set(&gtt)?,
                heatmap_tensor_to_set(&tt)?,
            );
            let total = combined_loss(&ps, &gs, &ts, cfg)?;
            let sup = mse_heatmap_loss(&ps, &gs)?;
            let dist = mse_heatmap_loss(&ps, &ts)?;
            if let Some(o) = grad_out {
                let grad = combined_loss_grad(&ps, &gs, &ts, cfg)?;
                let gt_ = Tensor::new(p.shape(), grad.data().to_vec())?;
                write_file(o, &gt_.to_tnsr_bytes(), &mut report)?;
            }
            text += &format!(
                "loss {total:.6e} (supervised {sup:.6e}, distillation {dist:.6e}, alpha {})\n",
                cfg.alpha
            );
            report.result = json!({ "loss": total, "supervised": sup, "distillation": dist, "alpha": cfg.alpha });
        }
    }
    for w in assumptions.warnings() {
        report.warn(w);
    }
    Ok(Outcome {
        text,
        report,
        exit_code,
    })
}

fn bench(
    g: &Graph,
    plan: &Plan<'_>,
    x: &Tensor,
    iters: usize,
) -> Result<(Vec<LayerTiming>, String, f64)> {
    let mut acc = vec![Duration::ZERO; g.len()];
    let mut hash: Option<String> = None;
    for _ in 0..iters {
        let (out, times) = infer_timed(plan, x)?;
        for (id, d) in times {
            acc[id] += d;
        }
        let h = sha256_hex(&out.to_tnsr_bytes());
        if let Some(prev) = &hash {
            if *prev != h {
                return Err(Error::NumericFault {
                    layer: g.node(g.output_id()).name.clone(),
                    detail: "output changed between benchmark passes".into(),
                });
            }
        }
        hash = Some(h);
    }
    let layers: Vec<LayerTiming> = g
        .nodes()
        .iter()
        .enumerate()
        .filter(|(id, _)| *id != 0)
        .map(|(id, n)| LayerTiming {
            layer: n.name.clone(),
            kind: n.kind.tag().to_string(),
            folded: matches!(plan.op(id), Op::Folded),
            mean_ms: acc[id].as_secs_f64() * 1e3 / iters as f64,
        })
        .collect();
    let total = layers.iter().map(|l| l.mean_ms).sum();
    Ok((layers, hash.unwrap_or_default(), total))
}

fn run_with(cli: &Cli, argv: Vec<String>) -> Result<Outcome> {
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?;
            pool.install(|| execute(cli, argv))
        }
        None => execute(cli, argv),
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let report_path = cli
        .report
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("lightpose-{}.json", cli.command.name())));
    match run_with(&cli, argv) {
        Ok(mut out) => {
            print!("{}", out.text);
            for w in out
                .report
                .warnings
                .iter()
                .filter(|w| !w.starts_with("assumption:"))
            {
                eprintln!("warning: {w}");
            }
            out.report.outputs.push(report_path.clone());
            if let Err(e) = out.report.write(&report_path) {
                eprintln!("error: {e}");
                return e.exit_code();
            }
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
