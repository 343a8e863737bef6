use serde::{Deserialize, Serialize};

use super::build::build_model;
use super::config::ModelConfig;
use super::graph::{Graph, LayerKind};
use crate::error::Result;

/// How transposed-convolution MACs are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `h_in * w_in * kh * kw * c_in * c_out`: every multiply the layer actually performs.
    InputBased,
    /// `h_out * w_out * kh * kw * c_in * c_out`, as reported by common profiling tools.
    #[default]
    OutputBased,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer: String,
    pub kind: String,
    pub macs: u64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub convention: Convention,
    pub layers: Vec<LayerCost>,
    pub total_macs: u64,
    pub total_params: u64,
}

impl FlopsReport {
    pub fn gmacs(&self) -> f64 {
        self.total_macs as f64 * 1e-9
    }

    /// GMACs, or twice that when counting multiplies and adds separately.
    pub fn gflops(&self, double_count: bool) -> f64 {
        if double_count {
            2.0 * self.gmacs()
        } else {
            self.gmacs()
        }
    }
}

/// Parameter count of a layer: kernel + bias + all four batch-norm arrays.
fn layer_params(kind: &LayerKind) -> u64 {
    kind.param_shapes()
        .iter()
        .map(|(_, s)| s.iter().product::<usize>() as u64)
        .sum()
}

fn layer_macs(g: &Graph, id: usize, convention: Convention) -> u64 {
    let node = g.node(id);
    match &node.kind {
        LayerKind::Conv(geom) => {
            let s = node.shape;
            (s.h * s.w * geom.kernel.0 * geom.kernel.1 * geom.c_in_per_group() * geom.c_out) as u64
        }
        LayerKind::Deconv(geom) => {
            let spatial = match convention {
                Convention::InputBased => g.node(node.inputs[0]).shape.plane(),
                Convention::OutputBased => node.shape.plane(),
            };
            (spatial * geom.kernel.0 * geom.kernel.1 * geom.c_in * geom.c_out) as u64
        }
        _ => 0,
    }
}

pub fn graph_cost(g: &Graph, convention: Convention) -> FlopsReport {
    let layers: Vec<LayerCost> = g
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| !matches!(n.kind, LayerKind::Input))
        .map(|(id, n)| LayerCost {
            layer: n.name.clone(),
            kind: n.kind.tag().to_string(),
            macs: layer_macs(g, id, convention),
            params: layer_params(&n.kind),
        })
        .collect();
    FlopsReport {
        convention,
        total_macs: layers.iter().map(|l| l.macs).sum(),
        total_params: layers.iter().map(|l| l.params).sum(),
        layers,
    }
}

pub fn count_macs(cfg: &ModelConfig, convention: Convention) -> Result<FlopsReport> {
    Ok(graph_cost(&build_model(cfg)?, convention))
}

pub fn count_params(cfg: &ModelConfig) -> Result<u64> {
    Ok(graph_cost(&build_model(cfg)?, Convention::default()).total_params)
}
