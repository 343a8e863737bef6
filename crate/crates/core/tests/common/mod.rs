//! Independent oracles and random-case generators shared by the integration
//! tests and the acceptance runner. Nothing at this level calls the library
//! code it is used to check; `cases` holds the measurements that do.

#![allow(dead_code)]

pub mod cases;

use lightpose::codec::{Keypoint, PersonBox};
use lightpose::eval::{DetInstance, GtInstance};
use lightpose::model::{ConvGeometry, Graph, GraphBuilder};
use lightpose::ops::{BnParams, ConvWeights, PoolSpec};
use lightpose::quant::{QConvWeights, QTensor, QuantParams};
use lightpose::{Shape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(r: &mut impl Rng, shape: Shape, lo: f32, hi: f32) -> Tensor {
    let data = (0..shape.len()).map(|_| r.gen_range(lo..hi)).collect();
    Tensor::new(shape, data).unwrap()
}

pub fn rand_vec(r: &mut impl Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

/// A random convolution case: input tensor and weights with a valid geometry.
pub fn rand_conv_case(r: &mut impl Rng) -> (Tensor, ConvWeights) {
    let k = *[1usize, 3, 5].choose(r).unwrap();
    let (groups, cpg, c_out) = match r.gen_range(0..3) {
        0 => (1, r.gen_range(1..5), r.gen_range(1..6)),
        1 => {
            let c = r.gen_range(1..6);
            (c, 1, c)
        }
        _ => (2, r.gen_range(1..3), 2 * r.gen_range(1..3)),
    };
    let stride = (r.gen_range(1..3), r.gen_range(1..3));
    let padding = (r.gen_range(0..=k / 2), r.gen_range(0..=k / 2));
    let h = r.gen_range(k..k + 9);
    let w = r.gen_range(k..k + 9);
    let n = r.gen_range(1..3);
    let kernel = rand_vec(r, c_out * cpg * k * k, -1.0, 1.0);
    let bias = r.gen_bool(0.5).then(|| rand_vec(r, c_out, -1.0, 1.0));
    let wts = ConvWeights::new(kernel, [c_out, cpg, k, k], bias, groups, stride, padding).unwrap();
    let x = rand_tensor(r, Shape::new(n, groups * cpg, h, w), -1.0, 1.0);
    (x, wts)
}

/// A random transposed-convolution case.
pub fn rand_deconv_case(r: &mut impl Rng) -> (Tensor, ConvWeights) {
    let k = *[1usize, 3, 4, 5].choose(r).unwrap();
    let (c_in, c_out) = (r.gen_range(1..5), r.gen_range(1..5));
    let s = r.gen_range(1..3);
    let pad = r.gen_range(0..=k / 2);
    let (h, w) = (r.gen_range(2..9), r.gen_range(2..9));
    let kernel = rand_vec(r, c_out * c_in * k * k, -1.0, 1.0);
    let bias = r.gen_bool(0.5).then(|| rand_vec(r, c_out, -1.0, 1.0));
    let wts = ConvWeights::new(kernel, [c_out, c_in, k, k], bias, 1, (s, s), (pad, pad)).unwrap();
    let n = r.gen_range(1..3);
    let x = rand_tensor(r, Shape::new(n, c_in, h, w), -1.0, 1.0);
    (x, wts)
}

fn kidx(w: &[usize; 4], co: usize, ci: usize, ky: usize, kx: usize) -> usize {
    ((co * w[1] + ci) * w[2] + ky) * w[3] + kx
}

/// Convolution by direct summation in `f64`: `(shape, values)`.
pub fn oracle_conv(x: &Tensor, w: &ConvWeights) -> (Shape, Vec<f64>) {
    let s = x.shape();
    let [c_out, cpg, kh, kw] = w.kernel_shape;
    let ho = (s.h + 2 * w.padding.0 - kh) / w.stride.0 + 1;
    let wo = (s.w + 2 * w.padding.1 - kw) / w.stride.1 + 1;
    let os = Shape::new(s.n, c_out, ho, wo);
    let per_group = c_out / w.groups;
    let mut out = vec![0.0f64; os.len()];
    for n in 0..s.n {
        for co in 0..c_out {
            let g = co / per_group;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = w.bias.as_ref().map_or(0.0, |b| b[co] as f64);
                    for ci in 0..cpg {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * w.stride.0 + ky) as isize - w.padding.0 as isize;
                                let ix = (ox * w.stride.1 + kx) as isize - w.padding.1 as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w
                                {
                                    acc += x.at(n, g * cpg + ci, iy as usize, ix as usize) as f64
                                        * w.kernel[kidx(&w.kernel_shape, co, ci, ky, kx)] as f64;
                                }
                            }
                        }
                    }
                    out[((n * c_out + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    (os, out)
}

/// Transposed convolution by scattering every input element, in `f64`.
pub fn oracle_deconv(x: &Tensor, w: &ConvWeights) -> (Shape, Vec<f64>) {
    let s = x.shape();
    let [c_out, c_in, kh, kw] = w.kernel_shape;
    let full_h = (s.h - 1) * w.stride.0 + kh;
    let full_w = (s.w - 1) * w.stride.1 + kw;
    let (ho, wo) = (full_h - 2 * w.padding.0, full_w - 2 * w.padding.1);
    let os = Shape::new(s.n, c_out, ho, wo);
    let mut full = vec![0.0f64; s.n * c_out * full_h * full_w];
    for n in 0..s.n {
        for ci in 0..c_in {
            for iy in 0..s.h {
                for ix in 0..s.w {
                    let v = x.at(n, ci, iy, ix) as f64;
                    for co in 0..c_out {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let (fy, fx) = (iy * w.stride.0 + ky, ix * w.stride.1 + kx);
                                full[((n * c_out + co) * full_h + fy) * full_w + fx] +=
                                    v * w.kernel[kidx(&w.kernel_shape, co, ci, ky, kx)] as f64;
                            }
                        }
                    }
                }
            }
        }
    }
    let mut out = vec![0.0f64; os.len()];
    for n in 0..s.n {
        for co in 0..c_out {
            let b = w.bias.as_ref().map_or(0.0, |b| b[co] as f64);
            for oy in 0..ho {
                for ox in 0..wo {
                    out[((n * c_out + co) * ho + oy) * wo + ox] =
                        full[((n * c_out + co) * full_h + oy + w.padding.0) * full_w
                            + ox
                            + w.padding.1]
                            + b;
                }
            }
        }
    }
    (os, out)
}

pub fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - y).abs())
        .fold(0.0, f64::max)
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

pub fn rand_bn(r: &mut impl Rng, c: usize) -> BnParams {
    BnParams::new(
        rand_vec(r, c, -2.0, 2.0),
        rand_vec(r, c, -1.0, 1.0),
        rand_vec(r, c, -1.0, 1.0),
        (0..c).map(|_| 10f32.powf(r.gen_range(-3.0..1.0))).collect(),
        *[0.0f32, 1e-5].choose(r).unwrap(),
    )
    .unwrap()
}

/// Per-channel `gamma (x - mean) / sqrt(var + eps) + beta` in `f64`.
pub fn oracle_bn(s: Shape, x: &[f64], p: &BnParams) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = (i / s.plane()) % s.c;
            let sd = (p.running_var[c] as f64 + p.eps as f64).sqrt();
            p.gamma[c] as f64 * (v - p.running_mean[c] as f64) / sd + p.beta[c] as f64
        })
        .collect()
}

/// Integer-exact convolution: `i64` accumulation, then requantization by
/// `s_in * s_w / s_out` with round-half-away-from-zero and clamp to +-127.
pub fn oracle_qconv(
    x: &QTensor,
    w: &QConvWeights,
    s_in: f64,
    s_w: f64,
    s_out: f64,
    bias: Option<&[i32]>,
    transposed: bool,
) -> Vec<i8> {
    let s = x.shape();
    let [c_out, cpg, kh, kw] = w.kernel_shape;
    let at = |n: usize, c: usize, y: usize, xx: usize| {
        x.data()[((n * s.c + c) * s.h + y) * s.w + xx] as i64
    };
    let wk = |co, ci, ky, kx| w.kernel[kidx(&w.kernel_shape, co, ci, ky, kx)] as i64;
    let (ho, wo, acc) = if !transposed {
        let ho = (s.h + 2 * w.padding.0 - kh) / w.stride.0 + 1;
        let wo = (s.w + 2 * w.padding.1 - kw) / w.stride.1 + 1;
        let per_group = c_out / w.groups;
        let mut acc = vec![0i64; s.n * c_out * ho * wo];
        for n in 0..s.n {
            for co in 0..c_out {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut a = 0i64;
                        for ci in 0..cpg {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * w.stride.0 + ky) as isize - w.padding.0 as isize;
                                    let ix = (ox * w.stride.1 + kx) as isize - w.padding.1 as isize;
                                    if iy >= 0
                                        && ix >= 0
                                        && (iy as usize) < s.h
                                        && (ix as usize) < s.w
                                    {
                                        a += at(
                                            n,
                                            (co / per_group) * cpg + ci,
                                            iy as usize,
                                            ix as usize,
                                        ) * wk(co, ci, ky, kx);
                                    }
                                }
                            }
                        }
                        acc[((n * c_out + co) * ho + oy) * wo + ox] = a;
                    }
                }
            }
        }
        (ho, wo, acc)
    } else {
        let ho = (s.h - 1) * w.stride.0 + kh - 2 * w.padding.0;
        let wo = (s.w - 1) * w.stride.1 + kw - 2 * w.padding.1;
        let mut acc = vec![0i64; s.n * c_out * ho * wo];
        for n in 0..s.n {
            for ci in 0..cpg {
                for iy in 0..s.h {
                    for ix in 0..s.w {
                        for co in 0..c_out {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let oy = (iy * w.stride.0 + ky) as isize - w.padding.0 as isize;
                                    let ox = (ix * w.stride.1 + kx) as isize - w.padding.1 as isize;
                                    if oy >= 0
                                        && ox >= 0
                                        && (oy as usize) < ho
                                        && (ox as usize) < wo
                                    {
                                        acc[((n * c_out + co) * ho + oy as usize) * wo
                                            + ox as usize] +=
                                            at(n, ci, iy, ix) * wk(co, ci, ky, kx);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (ho, wo, acc)
    };
    let plane = ho * wo;
    let m = s_in * s_w / s_out;
    acc.iter()
        .enumerate()
        .map(|(i, &a)| {
            let co = (i / plane) % c_out;
            let a = a + bias.map_or(0, |b| b[co] as i64);
            let v = a as f64 * m;
            let r = if v >= 0.0 {
                (v + 0.5).floor()
            } else {
                (v - 0.5).ceil()
            };
            r.clamp(-127.0, 127.0) as i8
        })
        .collect()
}

pub fn rand_qtensor(r: &mut impl Rng, shape: Shape) -> QTensor {
    QTensor::new(
        shape,
        (0..shape.len())
            .map(|_| r.gen_range(-127i8..=127))
            .collect(),
    )
    .unwrap()
}

pub fn qp(scale: f64) -> QuantParams {
    QuantParams::new(scale).unwrap()
}

/// A small network exercising every quantized op kind: conv, BN, ReLU,
/// depthwise conv, max pool, residual add, concat, deconv and a biased head.
pub fn micro_graph() -> Graph {
    let mut b = GraphBuilder::new(3, 32, 24);
    let x = b.input();
    let c1 = b.conv("c1", x, ConvGeometry::square(3, 16, 3, 2)).unwrap();
    let n1 = b.batchnorm("c1.bn", c1).unwrap();
    let r1 = b.relu("c1.relu", n1).unwrap();
    let dw = b
        .conv("dw", r1, ConvGeometry::square(16, 16, 3, 1).with_groups(16))
        .unwrap();
    let n2 = b.batchnorm("dw.bn", dw).unwrap();
    let r2 = b.relu("dw.relu", n2).unwrap();
    let sum = b.add("res", r1, r2).unwrap();
    let p = b.maxpool("pool", sum, PoolSpec::new(3, 2, 1)).unwrap();
    let pw = b.conv("pw", p, ConvGeometry::square(16, 8, 1, 1)).unwrap();
    let cat = b.concat("cat", &[p, pw]).unwrap();
    let up = b.deconv("up", cat, ConvGeometry::upsample(24, 16)).unwrap();
    let n3 = b.batchnorm("up.bn", up).unwrap();
    let r3 = b.relu("up.relu", n3).unwrap();
    let head = b
        .conv(
            "head",
            r3,
            ConvGeometry::square(16, 5, 1, 1).with_bias(true),
        )
        .unwrap();
    b.finish(head).unwrap()
}

/// Object keypoint similarity computed from scratch.
pub fn oracle_oks(d: &DetInstance, g: &GtInstance, k: &[f64]) -> Option<f64> {
    let terms: Vec<f64> = g
        .keypoints
        .iter()
        .zip(&d.keypoints)
        .zip(k)
        .filter(|((gk, _), _)| gk.2 > 0)
        .map(|((gk, dk), ki)| {
            let d2 = (dk.x - gk.0).powi(2) + (dk.y - gk.1).powi(2);
            (-d2 / (2.0 * g.area * ki * ki)).exp()
        })
        .collect();
    (!terms.is_empty()).then(|| terms.iter().sum::<f64>() / terms.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMetrics {
    pub ap: f64,
    pub ap50: f64,
    pub ar: f64,
    pub ap_medium: Option<f64>,
}

/// Average precision at one threshold, by exhaustive search over ranks for
/// every recall level. Scores must be distinct.
fn oracle_ap_at(
    dets: &[DetInstance],
    gts: &[GtInstance],
    k: &[f64],
    t: f64,
    range: Option<(f64, f64)>,
) -> Option<(f64, f64)> {
    let inside = |a: f64| range.is_none_or(|(lo, hi)| a > lo && a < hi);
    let gts: Vec<&GtInstance> = gts
        .iter()
        .filter(|g| g.keypoints.iter().any(|p| p.2 > 0))
        .collect();
    let n_pos = gts.iter().filter(|g| inside(g.area)).count();
    if n_pos == 0 {
        return None;
    }
    let mut images: Vec<u64> = gts
        .iter()
        .map(|g| g.image_id)
        .chain(dets.iter().map(|d| d.image_id))
        .collect();
    images.sort();
    images.dedup();
    // (score, is true positive) for every counted detection
    let mut counted: Vec<(f64, bool)> = Vec::new();
    for im in images {
        let mut ds: Vec<&DetInstance> = dets.iter().filter(|d| d.image_id == im).collect();
        ds.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        ds.truncate(20);
        let gs: Vec<&GtInstance> = gts.iter().copied().filter(|g| g.image_id == im).collect();
        let mut used = vec![false; gs.len()];
        for d in ds {
            let mut choice: Option<usize> = None;
            for want_inside in [true, false] {
                let mut best = f64::NEG_INFINITY;
                for (j, g) in gs.iter().enumerate() {
                    if used[j] || inside(g.area) != want_inside {
                        continue;
                    }
                    if let Some(o) = oracle_oks(d, g, k) {
                        if o >= t && o > best {
                            best = o;
                            choice = Some(j);
                        }
                    }
                }
                if choice.is_some() {
                    break;
                }
            }
            match choice {
                Some(j) => {
                    used[j] = true;
                    if inside(gs[j].area) {
                        counted.push((d.score, true));
                    }
                }
                None => {
                    let xs = d.keypoints.iter().map(|p| p.x);
                    let ys = d.keypoints.iter().map(|p| p.y);
                    let w = xs.clone().fold(f64::NEG_INFINITY, f64::max)
                        - xs.fold(f64::INFINITY, f64::min);
                    let h = ys.clone().fold(f64::NEG_INFINITY, f64::max)
                        - ys.fold(f64::INFINITY, f64::min);
                    if inside(w * h) {
                        counted.push((d.score, false));
                    }
                }
            }
        }
    }
    counted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut pr = Vec::new();
    let mut tp = 0;
    for (i, c) in counted.iter().enumerate() {
        tp += c.1 as usize;
        pr.push((tp as f64 / (i + 1) as f64, tp as f64 / n_pos as f64));
    }
    let mut sum = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        let best = pr
            .iter()
            .filter(|p| p.1 >= level)
            .map(|p| p.0)
            .fold(0.0, f64::max);
        sum += best;
    }
    Some((sum / 101.0, pr.last().map_or(0.0, |p| p.1)))
}

pub fn oracle_metrics(dets: &[DetInstance], gts: &[GtInstance], k: &[f64]) -> OracleMetrics {
    let th: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
    let all: Vec<(f64, f64)> = th
        .iter()
        .map(|&t| oracle_ap_at(dets, gts, k, t, None).unwrap())
        .collect();
    let med: Option<Vec<f64>> = th
        .iter()
        .map(|&t| oracle_ap_at(dets, gts, k, t, Some((1024.0, 9216.0))).map(|p| p.0))
        .collect();
    OracleMetrics {
        ap: all.iter().map(|p| p.0).sum::<f64>() / 10.0,
        ap50: all[0].0,
        ar: all.iter().map(|p| p.1).sum::<f64>() / 10.0,
        ap_medium: med.map(|m| m.iter().sum::<f64>() / 10.0),
    }
}

/// A random evaluation problem with at most five images and distinct scores.
pub fn rand_eval_dataset(r: &mut impl Rng, nk: usize) -> (Vec<DetInstance>, Vec<GtInstance>) {
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    let n_images = r.gen_range(1..=5u64);
    for im in 0..n_images {
        let n_gt = r.gen_range(0..4);
        for _ in 0..n_gt {
            let (cx, cy) = (r.gen_range(50.0..400.0), r.gen_range(50.0..400.0));
            let side: f64 = r.gen_range(20.0..130.0);
            let keypoints: Vec<(f64, f64, u8)> = (0..nk)
                .map(|_| {
                    let v = *[0u8, 1, 2, 2, 2].choose(r).unwrap();
                    (
                        cx + r.gen_range(-0.5..0.5) * side,
                        cy + r.gen_range(-0.5..0.5) * side,
                        v,
                    )
                })
                .collect();
            let g = GtInstance {
                image_id: im,
                keypoints,
                area: side * side * r.gen_range(0.5..1.0),
                bbox: PersonBox::new(cx, cy, side, side).unwrap(),
            };
            // detections near this instance at a range of noise levels
            for _ in 0..r.gen_range(0..3) {
                let noise = side * r.gen_range(0.0..0.3);
                dets.push(DetInstance {
                    image_id: im,
                    keypoints: g
                        .keypoints
                        .iter()
                        .map(|p| Keypoint {
                            x: p.0 + r.gen_range(-1.0..1.0) * noise,
                            y: p.1 + r.gen_range(-1.0..1.0) * noise,
                            score: 1.0,
                        })
                        .collect(),
                    score: 0.0,
                });
            }
            gts.push(g);
        }
        let spurious = if r.gen_bool(0.15) {
            22
        } else {
            r.gen_range(0..3)
        };
        for _ in 0..spurious {
            let (cx, cy) = (r.gen_range(50.0..400.0), r.gen_range(50.0..400.0));
            let side: f64 = r.gen_range(10.0..150.0);
            dets.push(DetInstance {
                image_id: im,
                keypoints: (0..nk)
                    .map(|_| Keypoint {
                        x: cx + r.gen_range(-0.5..0.5) * side,
                        y: cy + r.gen_range(-0.5..0.5) * side,
                        score: 1.0,
                    })
                    .collect(),
                score: 0.0,
            });
        }
    }
    if gts
        .iter()
        .all(|g: &GtInstance| g.keypoints.iter().all(|p| p.2 == 0))
    {
        gts.push(GtInstance {
            image_id: 0,
            keypoints: (0..nk).map(|i| (100.0 + i as f64, 100.0, 2)).collect(),
            area: 2000.0,
            bbox: PersonBox::new(100.0, 100.0, 40.0, 50.0).unwrap(),
        });
    }
    // distinct scores in random order
    let mut scores: Vec<usize> = (1..=dets.len()).collect();
    scores.shuffle(r);
    for (d, s) in dets.iter_mut().zip(scores) {
        d.score = s as f64 / 1000.0;
    }
    (dets, gts)
}
