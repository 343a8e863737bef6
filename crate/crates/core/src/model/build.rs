use std::collections::BTreeMap;

use super::config::{Activation, BlockKind, ModelConfig, SkipMode, StageSpec, LEAKY_SLOPE};
use super::encoder::{preset, EncoderSpec};
use super::graph::{ConvGeometry, Graph, GraphBuilder, NodeId};
use super::validate::{first_error, validate_config};
use crate::error::{Error, Result};
use crate::ops::PoolSpec;

/// Name of the final heatmap convolution in every built model.
pub const HEATMAP_LAYER: &str = "final.conv";

/// Builds the executable graph: encoder, optional 1x1 head, deconvolution
/// levels (each deconv + BN + ReLU, with an optional skip connection) and a
/// 1x1 heatmap convolution with bias.
pub fn build_model(cfg: &ModelConfig) -> Result<Graph> {
    if let Some(d) = first_error(&validate_config(cfg)) {
        return Err(Error::config(format!("[{}] {}", d.rule, d.message)));
    }
    build_graph(cfg)
}

fn apply_activation(
    b: &mut GraphBuilder,
    prefix: &str,
    from: NodeId,
    act: Activation,
) -> Result<NodeId> {
    match act {
        Activation::Relu => b.relu(&format!("{prefix}.relu"), from),
        Activation::LeakyRelu => b.leaky_relu(&format!("{prefix}.leaky_relu"), from, LEAKY_SLOPE),
        Activation::Swish => Err(Error::UnsupportedLayer(format!(
            "{prefix}: swish is excluded from the layer set, use relu"
        ))),
    }
}

/// conv -> batchnorm -> optional activation, named `{prefix}.conv` etc.
fn conv_bn_act(
    b: &mut GraphBuilder,
    prefix: &str,
    from: NodeId,
    geom: ConvGeometry,
    act: Option<Activation>,
) -> Result<NodeId> {
    let c = b.conv(&format!("{prefix}.conv"), from, geom)?;
    let bn = b.batchnorm(&format!("{prefix}.bn"), c)?;
    match act {
        Some(a) => apply_activation(b, prefix, bn, a),
        None => Ok(bn),
    }
}

fn shortcut(
    b: &mut GraphBuilder,
    prefix: &str,
    x: NodeId,
    c_out: usize,
    stride: usize,
) -> Result<NodeId> {
    let c_in = b.shape(x).c;
    if stride == 1 && c_in == c_out {
        Ok(x)
    } else {
        conv_bn_act(
            b,
            &format!("{prefix}.down"),
            x,
            ConvGeometry::square(c_in, c_out, 1, stride),
            None,
        )
    }
}

fn block(
    b: &mut GraphBuilder,
    prefix: &str,
    x: NodeId,
    stage: &StageSpec,
    stride: usize,
) -> Result<NodeId> {
    let c_in = b.shape(x).c;
    let c_out = stage.channels;
    let k = stage.kernel;
    let act = stage.activation;
    match stage.block {
        BlockKind::Mbconv => {
            let mid = c_in * stage.expand;
            let mut h = x;
            if stage.expand != 1 {
                h = conv_bn_act(
                    b,
                    &format!("{prefix}.expand"),
                    h,
                    ConvGeometry::square(c_in, mid, 1, 1),
                    Some(act),
                )?;
            }
            h = conv_bn_act(
                b,
                &format!("{prefix}.dw"),
                h,
                ConvGeometry::square(mid, mid, k, stride).with_groups(mid),
                Some(act),
            )?;
            h = conv_bn_act(
                b,
                &format!("{prefix}.project"),
                h,
                ConvGeometry::square(mid, c_out, 1, 1),
                None,
            )?;
            if stride == 1 && c_in == c_out {
                h = b.add(&format!("{prefix}.add"), h, x)?;
            }
            Ok(h)
        }
        BlockKind::Basic => {
            let h = conv_bn_act(
                b,
                &format!("{prefix}.conv1"),
                x,
                ConvGeometry::square(c_in, c_out, k, stride),
                Some(act),
            )?;
            let h = conv_bn_act(
                b,
                &format!("{prefix}.conv2"),
                h,
                ConvGeometry::square(c_out, c_out, k, 1),
                None,
            )?;
            let s = shortcut(b, prefix, x, c_out, stride)?;
            let sum = b.add(&format!("{prefix}.add"), h, s)?;
            apply_activation(b, &format!("{prefix}.out"), sum, act)
        }
        BlockKind::Bottleneck => {
            let inner = (c_out / 4).max(1);
            let h = conv_bn_act(
                b,
                &format!("{prefix}.conv1"),
                x,
                ConvGeometry::square(c_in, inner, 1, 1),
                Some(act),
            )?;
            let h = conv_bn_act(
                b,
                &format!("{prefix}.conv2"),
                h,
                ConvGeometry::square(inner, inner, k, stride),
                Some(act),
            )?;
            let h = conv_bn_act(
                b,
                &format!("{prefix}.conv3"),
                h,
                ConvGeometry::square(inner, c_out, 1, 1),
                None,
            )?;
            let s = shortcut(b, prefix, x, c_out, stride)?;
            let sum = b.add(&format!("{prefix}.add"), h, s)?;
            apply_activation(b, &format!("{prefix}.out"), sum, act)
        }
        BlockKind::Conv => conv_bn_act(
            b,
            prefix,
            x,
            ConvGeometry::square(c_in, c_out, k, stride),
            Some(act),
        ),
    }
}

pub(crate) struct EncoderOutput {
    pub out: NodeId,
    pub stride: usize,
    /// Last node produced at each downsampling factor.
    pub features: BTreeMap<usize, NodeId>,
}

pub(crate) fn build_encoder(
    b: &mut GraphBuilder,
    spec: &EncoderSpec,
    stages: &[StageSpec],
) -> Result<EncoderOutput> {
    let mut features = BTreeMap::new();
    let mut x = conv_bn_act(
        b,
        "stem",
        b.input(),
        ConvGeometry::square(3, spec.stem_channels, 3, 2),
        Some(Activation::Relu),
    )?;
    let mut stride = 2;
    features.insert(stride, x);
    if spec.stem_pool {
        x = b.maxpool("stem.pool", x, PoolSpec::new(3, 2, 1))?;
        stride *= 2;
        features.insert(stride, x);
    }
    for (si, stage) in stages.iter().enumerate() {
        for r in 0..stage.repeats {
            let s = if r == 0 { stage.stride } else { 1 };
            x = block(b, &format!("stage{si}.{r}"), x, stage, s)?;
            stride *= s;
            features.insert(stride, x);
        }
    }
    if let Some(top) = spec.top_channels {
        let c = b.shape(x).c;
        x = conv_bn_act(
            b,
            "top",
            x,
            ConvGeometry::square(c, top, 1, 1),
            Some(Activation::Relu),
        )?;
        features.insert(stride, x);
    }
    Ok(EncoderOutput {
        out: x,
        stride,
        features,
    })
}

/// Builds without running the validator; structural problems surface as errors.
pub(crate) fn build_graph(cfg: &ModelConfig) -> Result<Graph> {
    let spec = preset(&cfg.encoder)?;
    let stages = cfg.stages.as_deref().unwrap_or(&spec.stages);
    let [h, w] = cfg.input_size;
    let mut b = GraphBuilder::new(3, h, w);
    let enc = build_encoder(&mut b, &spec, stages)?;

    let mut x = enc.out;
    if let Some(head) = cfg.head_channels {
        let c = b.shape(x).c;
        x = conv_bn_act(
            &mut b,
            "head",
            x,
            ConvGeometry::square(c, head, 1, 1),
            Some(Activation::Relu),
        )?;
    }
    let mut stride = enc.stride;
    for (i, &ch) in cfg.deconv_channels.iter().enumerate() {
        let prefix = format!("deconv{i}");
        let c = b.shape(x).c;
        let d = b.deconv(
            &format!("{prefix}.deconv"),
            x,
            ConvGeometry::upsample(c, ch),
        )?;
        let bn = b.batchnorm(&format!("{prefix}.bn"), d)?;
        x = b.relu(&format!("{prefix}.relu"), bn)?;
        if stride % 2 != 0 {
            return Err(Error::config(format!(
                "{prefix}: upsampling past the input resolution (encoder stride {})",
                enc.stride
            )));
        }
        stride /= 2;
        if cfg.skip_mode == SkipMode::None {
            continue;
        }
        let feat = *enc.features.get(&stride).ok_or_else(|| {
            Error::config(format!(
                "skip_mode {:?} at {prefix} needs an encoder feature at stride {stride}, which the encoder does not expose",
                cfg.skip_mode
            ))
        })?;
        let fc = b.shape(feat).c;
        x = match cfg.skip_mode {
            SkipMode::Sum => {
                let p = conv_bn_act(
                    &mut b,
                    &format!("{prefix}.skip"),
                    feat,
                    ConvGeometry::square(fc, ch, 1, 1),
                    None,
                )?;
                b.add(&format!("{prefix}.sum"), x, p)?
            }
            SkipMode::Concat => {
                let cat = b.concat(&format!("{prefix}.concat"), &[x, feat])?;
                conv_bn_act(
                    &mut b,
                    &format!("{prefix}.reduce"),
                    cat,
                    ConvGeometry::square(ch + fc, ch, 1, 1),
                    Some(Activation::Relu),
                )?
            }
            SkipMode::None => unreachable!(),
        };
    }
    let c = b.shape(x).c;
    let out = b.conv(
        HEATMAP_LAYER,
        x,
        ConvGeometry::square(c, cfg.num_keypoints, 1, 1).with_bias(true),
    )?;
    b.finish(out)
}
