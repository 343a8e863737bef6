use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declarative description of an encoder-decoder pose network.
///
/// Parsed from TOML; unknown keys are rejected.
///
/// ```toml
/// encoder = "reduced-efficientnet-b1"
/// head_channels = 40
/// deconv_channels = [32, 32, 32]
/// skip_mode = "none"
/// num_keypoints = 17
/// input_size = [256, 192]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: String,
    /// Replaces the preset's stage layout when present. The stem (and the
    /// EfficientNet top convolution) of the preset are kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<StageSpec>>,
    /// Width of the 1x1 head convolution; `None` feeds the encoder output straight
    /// into the first deconvolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_channels: Option<usize>,
    pub deconv_channels: Vec<usize>,
    #[serde(default)]
    pub skip_mode: SkipMode,
    #[serde(default = "default_keypoints")]
    pub num_keypoints: usize,
    /// `[height, width]` of the model input.
    pub input_size: [usize; 2],
}

fn default_keypoints() -> usize {
    17
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipMode {
    #[default]
    None,
    Sum,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    /// Inverted bottleneck: 1x1 expand, depthwise kxk, 1x1 project (no SE).
    Mbconv,
    /// Two kxk convolutions with identity or projected shortcut.
    Basic,
    /// 1x1 reduce, kxk, 1x1 expand (x4) with shortcut.
    Bottleneck,
    /// Plain conv + BN + activation.
    Conv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    LeakyRelu,
    /// Parsed so that it can be reported; never built.
    Swish,
}

/// Negative slope used for `leaky_relu` stages.
pub const LEAKY_SLOPE: f32 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub block: BlockKind,
    pub channels: usize,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "three")]
    pub kernel: usize,
    #[serde(default = "one")]
    pub expand: usize,
    #[serde(default)]
    pub activation: Activation,
}

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

impl StageSpec {
    pub fn new(
        block: BlockKind,
        channels: usize,
        repeats: usize,
        stride: usize,
        kernel: usize,
        expand: usize,
    ) -> Self {
        StageSpec {
            block,
            channels,
            repeats,
            stride,
            kernel,
            expand,
            activation: Activation::Relu,
        }
    }
}

impl Default for ModelConfig {
    /// Reduced EfficientNet-B1, head 40, deconvolutions 32-32-32, 256x192 input.
    fn default() -> Self {
        ModelConfig {
            encoder: "reduced-efficientnet-b1".into(),
            stages: None,
            head_channels: Some(40),
            deconv_channels: vec![32, 32, 32],
            skip_mode: SkipMode::None,
            num_keypoints: 17,
            input_size: [256, 192],
        }
    }
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(format!("model config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model config always serializes")
    }

    pub fn with_head(mut self, head: usize) -> Self {
        self.head_channels = Some(head);
        self
    }

    pub fn with_deconv(mut self, channels: &[usize]) -> Self {
        self.deconv_channels = channels.to_vec();
        self
    }

    pub fn with_input(mut self, h: usize, w: usize) -> Self {
        self.input_size = [h, w];
        self
    }

    pub fn with_skip(mut self, mode: SkipMode) -> Self {
        self.skip_mode = mode;
        self
    }

    pub fn with_encoder(mut self, name: &str) -> Self {
        self.encoder = name.into();
        self
    }
}
