//! Measurements that drive the library on generated cases. Shared by the
//! property tests and the acceptance runner so both check the same thing.

use lightpose::codec::{
    box_to_input_transform, decode_dark, heatmap_to_image_coords, GaussianSpec, HeatmapSet,
    Keypoint, PersonBox, DEFAULT_MARGIN,
};
use lightpose::eval::{
    compute_metrics, detections_to_json, DetInstance, EvalResult, GtInstance, OksConstants,
};
use lightpose::loss::{combined_loss, combined_loss_grad, LossConfig};
use lightpose::model::{build_model, InferOptions, ModelConfig, Plan, WeightStore};
use lightpose::ops::{batchnorm_inference, conv2d, deconv2d, fuse_conv_bn, ConvWeights};
use lightpose::quant::{compare_outputs, quantize_model, QConvWeights, QTensor};
use lightpose::report::sha256_hex;
use lightpose::{Shape, Tensor};
use rand::Rng;

use super::*;

/// Swaps the two channel axes of a dense kernel.
pub fn transposed(w: &ConvWeights) -> ConvWeights {
    let [co, ci, kh, kw] = w.kernel_shape;
    let mut k = vec![0.0; w.kernel.len()];
    for o in 0..co {
        for i in 0..ci {
            for p in 0..kh * kw {
                k[(i * co + o) * kh * kw + p] = w.kernel[(o * ci + i) * kh * kw + p];
            }
        }
    }
    ConvWeights::new(k, [ci, co, kh, kw], None, 1, w.stride, w.padding).unwrap()
}

pub fn adjoint_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let k = [1usize, 3, 4, 5][r.gen_range(0..4)];
    let s = r.gen_range(1..3);
    let pad = r.gen_range(0..=k / 2);
    let (ci, co) = (r.gen_range(1..5), r.gen_range(1..5));
    // pick an input size whose padded extent the stride divides exactly
    let ho = r.gen_range(2..7);
    let wo = r.gen_range(2..7);
    let (h, w) = ((ho - 1) * s + k - 2 * pad, (wo - 1) * s + k - 2 * pad);
    let wc = ConvWeights::new(
        rand_vec(&mut r, co * ci * k * k, -1.0, 1.0),
        [co, ci, k, k],
        None,
        1,
        (s, s),
        (pad, pad),
    )
    .unwrap();
    let x = rand_tensor(&mut r, Shape::new(1, ci, h, w), -1.0, 1.0);
    let y = rand_tensor(&mut r, Shape::new(1, co, ho, wo), -1.0, 1.0);
    let cx = conv2d(&x, &wc).unwrap();
    assert_eq!(cx.shape(), y.shape());
    let dy = deconv2d(&y, &transposed(&wc)).unwrap();
    assert_eq!(dy.shape(), x.shape());
    let (a, b) = (dot(cx.data(), y.data()), dot(x.data(), dy.data()));
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// A random int8 case and its scales; `transposed` picks a deconvolution.
pub fn qcase(
    r: &mut impl Rng,
    transposed: bool,
) -> (QTensor, QConvWeights, [f64; 3], Option<Vec<i32>>) {
    let (x, w) = if transposed {
        rand_deconv_case(r)
    } else {
        rand_conv_case(r)
    };
    let x = rand_qtensor(r, x.shape());
    let w = QConvWeights::quantize(&w, qp(1.0 / 127.0));
    let scales = [
        r.gen_range(0.001..0.1),
        r.gen_range(0.001..0.1),
        r.gen_range(0.05..5.0),
    ];
    let bias = r.gen_bool(0.5).then(|| {
        (0..w.kernel_shape[0])
            .map(|_| r.gen_range(-20000..20000))
            .collect()
    });
    (x, w, scales, bias)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub const H: usize = 64;
pub const W: usize = 48;

/// Exact sampled Gaussian with unit peak at `(cx, cy)`, evaluated independently.
pub fn gaussian_map(cx: f64, cy: f64, sigma: f64) -> HeatmapSet {
    let data = (0..H * W)
        .map(|i| {
            let (y, x) = ((i / W) as f64, (i % W) as f64);
            (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp() as f32
        })
        .collect();
    HeatmapSet::new(1, H, W, data).unwrap()
}

pub fn interior_center(r: &mut impl Rng, sigma: f64) -> (f64, f64) {
    let m = 3.0 * sigma;
    (
        r.gen_range(m..W as f64 - 1.0 - m),
        r.gen_range(m..H as f64 - 1.0 - m),
    )
}

pub fn dist(k: &Keypoint, c: (f64, f64)) -> f64 {
    ((k.x - c.0).powi(2) + (k.y - c.1).powi(2)).sqrt()
}

pub fn rand_set(r: &mut impl Rng, k: usize, h: usize, w: usize) -> HeatmapSet {
    HeatmapSet::new(k, h, w, rand_vec(r, k * h * w, -0.2, 1.2)).unwrap()
}

/// Largest relative gap between the analytic gradient and central differences.
pub fn gradient_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (k, h, w) = (r.gen_range(1..4), r.gen_range(2..9), r.gen_range(2..9));
    let (p, g, t) = (
        rand_set(&mut r, k, h, w),
        rand_set(&mut r, k, h, w),
        rand_set(&mut r, k, h, w),
    );
    let cfg = LossConfig::new(r.gen_range(0.0..2.0)).unwrap();
    let grad = combined_loss_grad(&p, &g, &t, cfg).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let step = 1e-2f32;
        let (mut hi, mut lo) = (p.clone(), p.clone());
        hi.data_mut()[i] += step;
        lo.data_mut()[i] -= step;
        let delta = hi.data()[i] as f64 - lo.data()[i] as f64;
        let fd = (combined_loss(&hi, &g, &t, cfg).unwrap()
            - combined_loss(&lo, &g, &t, cfg).unwrap())
            / delta;
        let an = grad.data()[i] as f64;
        worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1e-8));
    }
    worst
}

/// Folding error on one random conv+BN case.
pub struct FusionGap {
    /// Fused output against the f64 oracle, relative to `max(1, max |exact|)`.
    pub vs_exact: f64,
    /// Fused output against the unfused f32 pipeline, same scaling.
    pub vs_unfused: f64,
    pub abs_vs_unfused: f64,
}

pub fn fusion_gap(r: &mut impl Rng) -> FusionGap {
    let (x, w) = rand_conv_case(r);
    let x = x.map(|v| 10.0 * v);
    let p = rand_bn(r, w.c_out());
    let unfused = batchnorm_inference(&conv2d(&x, &w).unwrap(), &p).unwrap();
    let fused = conv2d(&x, &fuse_conv_bn(&w, &p).unwrap()).unwrap();
    let (s, z) = oracle_conv(&x, &w);
    let exact = oracle_bn(s, &z, &p);
    let scale = exact.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let abs = fused.max_abs_diff(&unfused) as f64;
    FusionGap {
        vs_exact: max_abs_diff(fused.data(), &exact) / scale,
        vs_unfused: abs / scale,
        abs_vs_unfused: abs,
    }
}

/// Median FP16 and INT8 output errors over a random-weight ensemble of the micro graph.
pub fn precision_ensemble(seeds: u64) -> (f64, f64) {
    let g = micro_graph();
    let (mut e16, mut e8) = (Vec::new(), Vec::new());
    for seed in 0..seeds {
        let ws = WeightStore::random(&g, seed);
        let mut r = rng(1000 + seed);
        let calib: Vec<Tensor> = (0..4)
            .map(|_| rand_tensor(&mut r, g.input_shape(), -1.0, 1.0))
            .collect();
        let test: Vec<Tensor> = (0..2)
            .map(|_| rand_tensor(&mut r, g.input_shape(), -1.0, 1.0))
            .collect();
        let qm = quantize_model(&g, &ws, &calib).unwrap();
        let rep = compare_outputs(&g, &ws, &qm, &test).unwrap();
        e16.push(rep.fp16.output.mean_abs);
        e8.push(rep.int8.output.mean_abs);
    }
    (median(e16), median(e8))
}

/// Relative superposition error of conv (or deconv) on one random case.
pub fn linearity_gap(seed: u64, transposed: bool) -> f64 {
    let mut r = rng(seed);
    let (x, mut w) = if transposed {
        rand_deconv_case(&mut r)
    } else {
        rand_conv_case(&mut r)
    };
    w.bias = None;
    let z = rand_tensor(&mut r, x.shape(), -1.0, 1.0);
    let (a, b) = (r.gen_range(-2.0f32..2.0), r.gen_range(-2.0f32..2.0));
    let f = if transposed { deconv2d } else { conv2d };
    let mix = Tensor::new(
        x.shape(),
        x.data()
            .iter()
            .zip(z.data())
            .map(|(p, q)| a * p + b * q)
            .collect(),
    )
    .unwrap();
    let lhs = f(&mix, &w).unwrap();
    let (fx, fz) = (f(&x, &w).unwrap(), f(&z, &w).unwrap());
    let rhs: Vec<f64> = fx
        .data()
        .iter()
        .zip(fz.data())
        .map(|(p, q)| a as f64 * *p as f64 + b as f64 * *q as f64)
        .collect();
    let scale = rhs
        .iter()
        .fold(lhs.max_abs() as f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    max_abs_diff(lhs.data(), &rhs) / scale
}

pub const E2E_IMAGES: usize = 10;

/// Ten pre-cropped inputs for the default model, their person boxes in a
/// 640x480 frame, and one annotated person per image.
pub struct E2eFixture {
    pub crops: Tensor,
    pub boxes: Vec<PersonBox>,
    pub gts: Vec<GtInstance>,
}

pub fn e2e_fixture(cfg: &ModelConfig) -> E2eFixture {
    let mut r = rng(2024);
    let [h, w] = cfg.input_size;
    let crops = rand_tensor(&mut r, Shape::new(E2E_IMAGES, 3, h, w), -1.0, 1.0);
    let mut boxes = Vec::new();
    let mut gts = Vec::new();
    for id in 0..E2E_IMAGES {
        let (bw, bh) = (r.gen_range(60.0..200.0), r.gen_range(100.0..300.0));
        let b =
            PersonBox::new(r.gen_range(120.0..520.0), r.gen_range(160.0..320.0), bw, bh).unwrap();
        let keypoints = (0..cfg.num_keypoints)
            .map(|_| {
                (
                    b.cx + r.gen_range(-0.4..0.4) * bw,
                    b.cy + r.gen_range(-0.4..0.4) * bh,
                    2u8,
                )
            })
            .collect();
        gts.push(GtInstance {
            image_id: id as u64,
            keypoints,
            area: 0.6 * bw * bh,
            bbox: b,
        });
        boxes.push(b);
    }
    E2eFixture { crops, boxes, gts }
}

/// What one end-to-end run produced, with digests for bitwise comparison.
pub struct E2eRun {
    pub heatmap_sha256: String,
    pub detections_sha256: String,
    pub metrics: EvalResult,
    pub fallbacks: usize,
}

/// Random-weight default model, then infer, DARK decode, map back to the frame and score.
pub fn run_e2e(cfg: &ModelConfig, weight_seed: u64, fx: &E2eFixture) -> E2eRun {
    let g = build_model(cfg).unwrap();
    let ws = WeightStore::random(&g, weight_seed);
    let plan = Plan::new(&g, &ws, InferOptions { fuse: true }).unwrap();
    let heat = plan.run(&fx.crops).unwrap();
    let [h, w] = cfg.input_size;
    let stride = h / heat.shape().h;
    let mut fallbacks = 0;
    let dets: Vec<DetInstance> = HeatmapSet::from_batch(&heat)
        .iter()
        .zip(&fx.boxes)
        .enumerate()
        .map(|(id, (hm, b))| {
            let decoded = decode_dark(hm, GaussianSpec::default()).unwrap();
            fallbacks += decoded.iter().filter(|d| d.fallback.is_some()).count();
            let kps: Vec<Keypoint> = decoded.iter().map(|d| d.keypoint).collect();
            let t = box_to_input_transform(*b, (h, w), DEFAULT_MARGIN).unwrap();
            let keypoints = heatmap_to_image_coords(&kps, &t, stride).unwrap();
            let score = keypoints.iter().map(|k| k.score).sum::<f64>() / keypoints.len() as f64;
            DetInstance {
                image_id: id as u64,
                keypoints,
                score,
            }
        })
        .collect();
    let metrics = compute_metrics(&dets, &fx.gts, &OksConstants::coco()).unwrap();
    E2eRun {
        heatmap_sha256: sha256_hex(&heat.to_tnsr_bytes()),
        detections_sha256: sha256_hex(detections_to_json(&dets).as_bytes()),
        metrics,
        fallbacks,
    }
}
