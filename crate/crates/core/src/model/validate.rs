//! Embeddability checks for model configurations.
//!
//! Errors are structural: the model cannot be built. Warnings flag layers that
//! build fine but fall outside the accelerator-friendly envelope (channel
//! counts not a multiple of 8, dense convolutions wider than the per-kernel
//! limits, conv/BN/activation chains that cannot be fused).

use serde::Serialize;

use super::build::{build_graph, HEATMAP_LAYER};
use super::config::{Activation, ModelConfig};
use super::encoder::preset;
use super::graph::{Graph, LayerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub level: Level,
    pub rule: &'static str,
    pub message: String,
}

impl Diagnostic {
    fn error(rule: &'static str, message: String) -> Self {
        Diagnostic {
            level: Level::Error,
            rule,
            message,
        }
    }

    fn warning(rule: &'static str, message: String) -> Self {
        Diagnostic {
            level: Level::Warning,
            rule,
            message,
        }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let level = match self.level {
            Level::Warning => "warning",
            Level::Error => "error",
        };
        write!(f, "{level}[{}]: {}", self.rule, self.message)
    }
}

/// Largest channel count of a dense 3x3 convolution.
pub const MAX_CHANNELS_3X3: usize = 648;
/// Largest channel count of a dense 5x5 convolution.
pub const MAX_CHANNELS_5X5: usize = 1816;
pub const CHANNEL_MULTIPLE: usize = 8;
pub const MAX_DECONV_LEVELS: usize = 4;

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    /// Warn on every non-1x1 convolution kernel other than 3x3.
    pub strict_3x3: bool,
}

pub fn first_error(diags: &[Diagnostic]) -> Option<&Diagnostic> {
    diags.iter().find(|d| d.level == Level::Error)
}

pub fn validate_config(cfg: &ModelConfig) -> Vec<Diagnostic> {
    validate_config_with(cfg, ValidateOptions::default())
}

pub fn validate_config_with(cfg: &ModelConfig, opts: ValidateOptions) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let spec = match preset(&cfg.encoder) {
        Ok(s) => Some(s),
        Err(e) => {
            out.push(Diagnostic::error("unsupported-encoder", e.to_string()));
            None
        }
    };
    let levels = cfg.deconv_channels.len();
    if !(1..=MAX_DECONV_LEVELS).contains(&levels) {
        out.push(Diagnostic::error(
            "deconv-levels",
            format!("{levels} deconvolution levels; expected 1 to {MAX_DECONV_LEVELS}"),
        ));
    }
    if cfg.num_keypoints == 0 {
        out.push(Diagnostic::error(
            "num-keypoints",
            "num_keypoints must be at least 1".into(),
        ));
    }
    let [h, w] = cfg.input_size;
    if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
        out.push(Diagnostic::error(
            "input-size",
            format!("input {h}x{w} must be a positive multiple of 32 on both axes"),
        ));
    }
    if cfg.head_channels == Some(0) || cfg.deconv_channels.contains(&0) {
        out.push(Diagnostic::error(
            "zero-channels",
            "channel counts must be positive".into(),
        ));
    }
    let stages = cfg
        .stages
        .as_deref()
        .or(spec.as_ref().map(|s| s.stages.as_slice()))
        .unwrap_or(&[]);
    for (si, s) in stages.iter().enumerate() {
        let layer = format!("stage{si} ({:?})", s.block);
        if s.activation == Activation::Swish {
            out.push(Diagnostic::error(
                "excluded-activation",
                format!("{layer}: swish is not in the layer set; use relu"),
            ));
        }
        if ![1, 3, 5].contains(&s.kernel) {
            out.push(Diagnostic::error(
                "unsupported-kernel",
                format!(
                    "{layer}: kernel {} outside the convolution set {{1, 3, 5}} (4 is reserved for deconvolution)",
                    s.kernel
                ),
            ));
        }
        if ![1, 2].contains(&s.stride) {
            out.push(Diagnostic::error(
                "stride",
                format!("{layer}: stride {} must be 1 or 2", s.stride),
            ));
        }
        if s.channels == 0 || s.repeats == 0 || s.expand == 0 {
            out.push(Diagnostic::error(
                "zero-channels",
                format!("{layer}: channels, repeats and expand must be positive"),
            ));
        }
    }
    if first_error(&out).is_some() {
        return out;
    }
    match build_graph(cfg) {
        Ok(g) => out.extend(graph_warnings(&g, opts)),
        Err(e) => out.push(Diagnostic::error("structure", e.to_string())),
    }
    out
}

/// Hardware-envelope warnings on a built graph.
pub fn graph_warnings(g: &Graph, opts: ValidateOptions) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let consumers = g.consumers();
    for (id, node) in g.nodes().iter().enumerate() {
        let geom = match &node.kind {
            LayerKind::Conv(geom) | LayerKind::Deconv(geom) => geom,
            LayerKind::BatchNorm { .. } => {
                let producer = &g.node(node.inputs[0]);
                let fusible = matches!(producer.kind, LayerKind::Conv(_) | LayerKind::Deconv(_))
                    && consumers[node.inputs[0]].len() == 1;
                if !fusible {
                    out.push(Diagnostic::warning(
                        "non-fusible",
                        format!(
                            "{}: batch norm does not directly follow a single-use convolution",
                            node.name
                        ),
                    ));
                }
                if let Some(&next) = consumers[id].first() {
                    if let LayerKind::LeakyRelu { .. } = g.node(next).kind {
                        out.push(Diagnostic::warning(
                            "non-fusible",
                            format!(
                                "{}: conv/BN/leaky_relu cannot be fused; only conv+BN+ReLU fuses",
                                g.node(next).name
                            ),
                        ));
                    }
                }
                continue;
            }
            _ => continue,
        };
        if node.name != HEATMAP_LAYER && geom.c_out % CHANNEL_MULTIPLE != 0 {
            out.push(Diagnostic::warning(
                "channel-multiple",
                format!(
                    "{}: channel {} not a multiple of {CHANNEL_MULTIPLE}",
                    node.name, geom.c_out
                ),
            ));
        }
        let is_conv = matches!(node.kind, LayerKind::Conv(_));
        if is_conv && geom.groups == 1 {
            let widest = geom.c_in.max(geom.c_out);
            let limit = match geom.kernel {
                (3, 3) => Some((MAX_CHANNELS_3X3, "3x3")),
                (5, 5) => Some((MAX_CHANNELS_5X5, "5x5")),
                _ => None,
            };
            if let Some((max, label)) = limit {
                if widest > max {
                    out.push(Diagnostic::warning(
                        "max-channels",
                        format!(
                            "{}: {widest} channels exceeds {max} max for {label}",
                            node.name
                        ),
                    ));
                }
            }
        }
        if opts.strict_3x3 && is_conv && geom.kernel != (1, 1) && geom.kernel != (3, 3) {
            out.push(Diagnostic::warning(
                "strict-3x3",
                format!(
                    "{}: kernel {}x{} outside strict 3x3 mode",
                    node.name, geom.kernel.0, geom.kernel.1
                ),
            ));
        }
    }
    out
}
