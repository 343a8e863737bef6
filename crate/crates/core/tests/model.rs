mod common;

use common::*;
use lightpose::model::{
    build_model, count_macs, count_params, graph_cost, infer, runtime_shapes, validate_config,
    validate_config_with, ConvGeometry, Convention, GraphBuilder, InferOptions, Level, Manifest,
    ModelConfig, Plan, SkipMode, ValidateOptions, WeightStore, ENCODER_NAMES,
};
use lightpose::{Error, Shape, Tensor};
use proptest::prelude::*;

fn macs(cfg: &ModelConfig) -> u64 {
    count_macs(cfg, Convention::OutputBased).unwrap().total_macs
}

fn grid(head: usize, ch: usize) -> ModelConfig {
    ModelConfig::default().with_head(head).with_deconv(&[ch; 3])
}

#[test]
fn level_count_ordering() {
    let d = ModelConfig::default();
    let m: Vec<u64> = (2..=4)
        .map(|l| macs(&d.clone().with_deconv(&vec![32; l])))
        .collect();
    assert!(m[0] < m[1] && m[1] < m[2], "{m:?}");
}

#[test]
fn channel_grid_ordering() {
    let rows = [
        (10, 8),
        (20, 16),
        (40, 32),
        (80, 64),
        (160, 128),
        (320, 256),
    ];
    let m: Vec<u64> = rows.iter().map(|&(h, c)| macs(&grid(h, c))).collect();
    assert!(m.windows(2).all(|p| p[0] < p[1]), "{m:?}");
}

#[test]
fn default_cost_is_in_the_expected_band() {
    let g = macs(&ModelConfig::default()) as f64 * 1e-9;
    assert!((0.45..=0.80).contains(&g), "{g}");
}

#[test]
fn input_size_scaling_is_by_pixel_count() {
    let base = macs(&ModelConfig::default()) as f64;
    let big = macs(&ModelConfig::default().with_input(384, 288)) as f64;
    assert!((big / base - 2.25).abs() < 1e-12);
    let sizes = [
        (128, 96),
        (160, 128),
        (192, 160),
        (224, 160),
        (256, 192),
        (384, 288),
    ];
    let m: Vec<u64> = sizes
        .iter()
        .map(|&(h, w)| macs(&ModelConfig::default().with_input(h, w)))
        .collect();
    assert!(m.windows(2).all(|p| p[0] < p[1]), "{m:?}");
}

#[test]
fn backbone_orderings() {
    let r18: Vec<u64> = [16, 32, 64, 128, 256]
        .iter()
        .map(|&c| {
            macs(
                &ModelConfig::default()
                    .with_encoder("resnet-18")
                    .with_deconv(&[c; 3]),
            )
        })
        .collect();
    assert!(r18.windows(2).all(|p| p[0] < p[1]), "{r18:?}");
    let at32 = |e: &str| macs(&ModelConfig::default().with_encoder(e));
    assert!(at32("resnet-18") < at32("resnet-34") && at32("resnet-34") < at32("resnet-50"));
    let effs: Vec<u64> = (0..=6)
        .map(|i| at32(&format!("reduced-efficientnet-b{i}")))
        .collect();
    assert!(effs.windows(2).all(|p| p[0] < p[1]), "{effs:?}");
    assert!(at32("reduced-efficientnet-b1-fpga") < at32("reduced-efficientnet-b1"));
}

#[test]
fn conventions_differ_only_on_deconvolutions() {
    let cfg = ModelConfig::default();
    let out = count_macs(&cfg, Convention::OutputBased).unwrap();
    let inp = count_macs(&cfg, Convention::InputBased).unwrap();
    for (a, b) in out.layers.iter().zip(&inp.layers) {
        if a.kind == "deconv" {
            assert_eq!(a.macs, 4 * b.macs, "{}", a.layer);
        } else {
            assert_eq!(a.macs, b.macs, "{}", a.layer);
        }
    }
    assert_eq!(
        out.total_macs,
        out.layers.iter().map(|l| l.macs).sum::<u64>()
    );
    assert_eq!(
        out.total_params,
        out.layers.iter().map(|l| l.params).sum::<u64>()
    );
}

#[test]
fn closed_form_layer_costs() {
    let mut b = GraphBuilder::new(32, 64, 48);
    let c = b
        .conv("c", b.input(), ConvGeometry::square(32, 17, 1, 1))
        .unwrap();
    let g = b.finish(c).unwrap();
    assert_eq!(
        graph_cost(&g, Convention::OutputBased).total_macs,
        64 * 48 * 32 * 17
    );

    let mut b = GraphBuilder::new(8, 10, 10);
    let c = b
        .conv(
            "c",
            b.input(),
            ConvGeometry::square(8, 8, 3, 1).with_bias(true),
        )
        .unwrap();
    let g = b.finish(c).unwrap();
    assert_eq!(
        graph_cost(&g, Convention::OutputBased).total_params,
        8 * 8 * 9 + 8
    );

    let b = GraphBuilder::new(3, 8, 8);
    let g = b.finish(0).unwrap();
    assert_eq!(graph_cost(&g, Convention::InputBased).total_macs, 0);
}

#[test]
fn params_do_not_depend_on_resolution() {
    for enc in ENCODER_NAMES {
        let cfg = ModelConfig::default().with_encoder(enc);
        assert_eq!(
            count_params(&cfg).unwrap(),
            count_params(&cfg.clone().with_input(384, 288)).unwrap(),
            "{enc}"
        );
    }
}

#[test]
fn output_shapes_follow_level_count() {
    let g = build_model(&ModelConfig::default()).unwrap();
    assert_eq!(g.output_shape(), Shape::new(1, 17, 64, 48));
    let g = build_model(&ModelConfig::default().with_deconv(&[32, 32])).unwrap();
    assert_eq!(g.output_shape(), Shape::new(1, 17, 32, 24));
    let mut cfg = ModelConfig::default()
        .with_encoder("resnet-18")
        .with_deconv(&[16; 3]);
    cfg.head_channels = None;
    assert!(build_model(&cfg).is_ok());
}

#[test]
fn static_shapes_match_runtime_shapes() {
    for cfg in [
        ModelConfig::default().with_input(64, 64),
        ModelConfig::default()
            .with_input(64, 32)
            .with_skip(SkipMode::Sum),
        ModelConfig::default()
            .with_input(32, 64)
            .with_skip(SkipMode::Concat)
            .with_deconv(&[16; 4]),
        ModelConfig::default()
            .with_encoder("resnet-50")
            .with_input(64, 64),
        ModelConfig::default()
            .with_encoder("resnet-18")
            .with_input(64, 96)
            .with_deconv(&[8, 8]),
    ] {
        let g = build_model(&cfg).unwrap();
        let ws = WeightStore::random(&g, 3);
        let plan = Plan::new(&g, &ws, InferOptions::default()).unwrap();
        let x = Tensor::zeros(g.input_shape());
        for (id, s) in runtime_shapes(&plan, &x).unwrap() {
            assert_eq!(s, g.node(id).shape, "{}", g.node(id).name);
        }
    }
}

#[test]
fn validator_diagnostics() {
    let clean = validate_config(&ModelConfig::default());
    assert!(clean.is_empty(), "{clean:?}");
    let d = validate_config(&grid(20, 16));
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].level, Level::Warning);
    assert!(
        d[0].message.contains("channel 20 not a multiple of 8"),
        "{}",
        d[0]
    );

    let mut b = GraphBuilder::new(8, 16, 16);
    let c = b
        .conv("wide", b.input(), ConvGeometry::square(8, 1024, 3, 1))
        .unwrap();
    let g = b.finish(c).unwrap();
    let w = lightpose::model::graph_warnings(&g, ValidateOptions::default());
    assert!(
        w.iter()
            .any(|d| d.message.contains("exceeds 648 max for 3x3")),
        "{w:?}"
    );

    let bad = ModelConfig::default().with_deconv(&[32; 5]);
    assert!(validate_config(&bad)
        .iter()
        .any(|d| d.level == Level::Error));
    let odd = ModelConfig::default().with_input(250, 192);
    assert!(validate_config(&odd)
        .iter()
        .any(|d| d.level == Level::Error));
    let fpga = ModelConfig::default().with_encoder("reduced-efficientnet-b1-fpga");
    assert!(validate_config_with(&fpga, ValidateOptions { strict_3x3: true }).is_empty());
    let strict = validate_config_with(
        &ModelConfig::default(),
        ValidateOptions { strict_3x3: true },
    );
    assert!(!strict.is_empty());
    assert!(matches!(
        build_model(&ModelConfig::default().with_encoder("vgg-16")),
        Err(Error::Config(_)) | Err(Error::UnsupportedLayer(_))
    ));
}

#[test]
fn zero_weights_give_zero_heatmaps() {
    let g = build_model(&ModelConfig::default().with_input(64, 64)).unwrap();
    let mut ws = WeightStore::zeros(&g);
    // the final heatmap bias is the only way a nonzero value could appear
    for (l, p, _) in g.param_specs() {
        if p == "bias" {
            let n = ws.get(&l, p).unwrap().data.len();
            ws.insert(&l, p, vec![n], vec![0.0; n]).unwrap();
        }
    }
    let x = rand_tensor(&mut rng(1), g.input_shape(), -1.0, 1.0);
    let y = infer(&g, &ws, &x, InferOptions::default()).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn identity_graph_passes_input_through() {
    let mut b = GraphBuilder::new(1, 5, 4);
    let c = b
        .conv("id", b.input(), ConvGeometry::square(1, 1, 1, 1))
        .unwrap();
    let g = b.finish(c).unwrap();
    let mut ws = WeightStore::new();
    ws.insert("id", "weight", vec![1, 1, 1, 1], vec![1.0])
        .unwrap();
    let x = rand_tensor(&mut rng(2), g.input_shape(), -5.0, 5.0);
    assert_eq!(infer(&g, &ws, &x, InferOptions::default()).unwrap(), x);
}

#[test]
fn fused_execution_matches_unfused() {
    let g = build_model(&ModelConfig::default()).unwrap();
    let ws = WeightStore::random(&g, 7);
    let x = rand_tensor(&mut rng(3), Shape::new(2, 3, 256, 192), -1.0, 1.0);
    let a = infer(&g, &ws, &x, InferOptions { fuse: false }).unwrap();
    let b = infer(&g, &ws, &x, InferOptions { fuse: true }).unwrap();
    assert!(a.max_abs_diff(&b) <= 1e-4, "{}", a.max_abs_diff(&b));
    let again = infer(&g, &ws, &x, InferOptions { fuse: false }).unwrap();
    assert_eq!(a, again);
}

#[test]
fn missing_weight_is_named() {
    let g = build_model(&ModelConfig::default().with_input(64, 64)).unwrap();
    let full = WeightStore::random(&g, 1);
    let mut ws = WeightStore::new();
    for (l, p, a) in full.iter().filter(|(l, _, _)| *l != "head.conv") {
        ws.insert(l, p, a.shape.clone(), a.data.clone()).unwrap();
    }
    match Plan::new(&g, &ws, InferOptions::default()) {
        Err(Error::MissingWeight { layer, .. }) => assert_eq!(layer, "head.conv"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn weights_round_trip_through_files() {
    let g = build_model(&ModelConfig::default()).unwrap();
    let ws = WeightStore::random(&g, 42);
    let dir = tempfile::tempdir().unwrap();
    let (m, b) = (dir.path().join("w.json"), dir.path().join("w.bin"));
    ws.save_files(&m, &b).unwrap();
    let back = WeightStore::load_files(&m, &b).unwrap();
    assert_eq!(back, ws);
    let text = std::fs::read_to_string(&m).unwrap();
    let manifest = Manifest::from_json(&text).unwrap();
    let bytes: u64 = manifest
        .entries
        .iter()
        .map(|e| 4 * e.shape.iter().product::<usize>() as u64)
        .sum();
    assert_eq!(bytes, std::fs::metadata(&b).unwrap().len());
    assert_eq!(WeightStore::random(&g, 42), ws);
    assert_ne!(WeightStore::random(&g, 43), ws);
}

#[test]
fn config_files_parse_and_reject_unknown_keys() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let d = ModelConfig::load(format!("{dir}/configs/default.toml")).unwrap();
    assert_eq!(d, ModelConfig::default());
    assert_eq!(ModelConfig::from_toml_str(&d.to_toml_string()).unwrap(), d);
    let extra = format!("{}\nbogus = 1\n", d.to_toml_string());
    assert!(ModelConfig::from_toml_str(&extra).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn macs_increase_with_each_deconv_width(i in 0usize..3, c in 1usize..64) {
        let mut ch = vec![32usize; 3];
        ch[i] = c;
        let lo = macs(&ModelConfig::default().with_deconv(&ch));
        ch[i] = c + 1;
        prop_assert!(macs(&ModelConfig::default().with_deconv(&ch)) > lo);
    }

    #[test]
    fn macs_scale_with_pixels(hm in 1usize..10, wm in 1usize..10) {
        let cfg = ModelConfig::default().with_input(32 * hm, 32 * wm);
        let a = macs(&cfg);
        let b = macs(&cfg.clone().with_input(64 * hm, 64 * wm));
        prop_assert_eq!(b, 4 * a);
    }
}
