//! Encoder presets: reduced EfficientNet-B0..B6 (no squeeze-excitation, ReLU
//! everywhere) and ResNet-18/34/50 built only from the supported layer set.

use super::config::{BlockKind, StageSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    EfficientNet,
    ResNet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub family: Family,
    /// 3x3 stride-2 stem width.
    pub stem_channels: usize,
    /// ResNet stems add a 3x3 stride-2 max pool after the stem convolution.
    pub stem_pool: bool,
    pub stages: Vec<StageSpec>,
    /// Final 1x1 convolution of the EfficientNet layout.
    pub top_channels: Option<usize>,
}

pub const ENCODER_NAMES: [&str; 11] = [
    "reduced-efficientnet-b0",
    "reduced-efficientnet-b1",
    "reduced-efficientnet-b2",
    "reduced-efficientnet-b3",
    "reduced-efficientnet-b4",
    "reduced-efficientnet-b5",
    "reduced-efficientnet-b6",
    "reduced-efficientnet-b1-fpga",
    "resnet-18",
    "resnet-34",
    "resnet-50",
];

/// (expand, kernel, stride, channels, repeats) of the B0 baseline.
const EFFICIENTNET_BASE: [(usize, usize, usize, usize, usize); 7] = [
    (1, 3, 1, 16, 1),
    (6, 3, 2, 24, 2),
    (6, 5, 2, 40, 2),
    (6, 3, 2, 80, 3),
    (6, 5, 1, 112, 3),
    (6, 5, 2, 192, 4),
    (6, 3, 1, 320, 1),
];

/// (width, depth) multipliers for B0..B6.
const EFFICIENTNET_SCALE: [(f64, f64); 7] = [
    (1.0, 1.0),
    (1.0, 1.1),
    (1.1, 1.2),
    (1.2, 1.4),
    (1.4, 1.8),
    (1.6, 2.2),
    (1.8, 2.6),
];

/// Scales a channel count by `width` and rounds to a multiple of 8, never
/// dropping more than 10% below the scaled value.
pub fn round_filters(filters: usize, width: f64) -> usize {
    let divisor = 8usize;
    let scaled = filters as f64 * width;
    let mut rounded = divisor.max(((scaled + divisor as f64 / 2.0) as usize) / divisor * divisor);
    if (rounded as f64) < 0.9 * scaled {
        rounded += divisor;
    }
    rounded
}

pub fn round_repeats(repeats: usize, depth: f64) -> usize {
    // guard against 1.1 * 10 = 11.000000000000002 style noise
    (repeats as f64 * depth - 1e-9).ceil() as usize
}

fn efficientnet(variant: usize, fpga: bool) -> EncoderSpec {
    let (width, depth) = EFFICIENTNET_SCALE[variant];
    let stages = EFFICIENTNET_BASE
        .iter()
        .map(|&(expand, kernel, stride, channels, repeats)| {
            StageSpec::new(
                BlockKind::Mbconv,
                round_filters(channels, width),
                round_repeats(repeats, depth),
                stride,
                if fpga { 3 } else { kernel },
                expand,
            )
        })
        .collect();
    EncoderSpec {
        family: Family::EfficientNet,
        stem_channels: round_filters(32, width),
        stem_pool: false,
        stages,
        top_channels: Some(round_filters(1280, width)),
    }
}

fn resnet(depths: [usize; 4], bottleneck: bool) -> EncoderSpec {
    let (block, mult) = if bottleneck {
        (BlockKind::Bottleneck, 4)
    } else {
        (BlockKind::Basic, 1)
    };
    let stages = [64, 128, 256, 512]
        .iter()
        .zip(depths)
        .enumerate()
        .map(|(i, (&c, d))| StageSpec::new(block, c * mult, d, if i == 0 { 1 } else { 2 }, 3, 1))
        .collect();
    EncoderSpec {
        family: Family::ResNet,
        stem_channels: 64,
        stem_pool: true,
        stages,
        top_channels: None,
    }
}

pub fn preset(name: &str) -> Result<EncoderSpec> {
    let spec = match name {
        "reduced-efficientnet-b1-fpga" => efficientnet(1, true),
        "resnet-18" => resnet([2, 2, 2, 2], false),
        "resnet-34" => resnet([3, 4, 6, 3], false),
        "resnet-50" => resnet([3, 4, 6, 3], true),
        _ => match name.strip_prefix("reduced-efficientnet-b") {
            Some(v) if v.len() == 1 && ("0"..="6").contains(&v) => {
                efficientnet(v.parse().unwrap(), false)
            }
            _ => {
                return Err(Error::UnsupportedLayer(format!(
                    "unsupported encoder {name:?}; expected one of {ENCODER_NAMES:?}"
                )))
            }
        },
    };
    Ok(spec)
}
