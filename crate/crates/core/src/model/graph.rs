use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::ops::{conv2d_output_shape, deconv2d_output_shape, ConvWeights, PoolSpec};
use crate::tensor::Shape;

pub type NodeId = usize;

/// Geometry of a (transposed) convolution, independent of weight values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
    pub bias: bool,
}

impl ConvGeometry {
    /// Square kernel with padding `k / 2`.
    pub fn square(c_in: usize, c_out: usize, k: usize, stride: usize) -> Self {
        ConvGeometry {
            c_in,
            c_out,
            kernel: (k, k),
            stride: (stride, stride),
            padding: (k / 2, k / 2),
            groups: 1,
            bias: false,
        }
    }

    /// The decoder's transposed convolution: kernel 4, stride 2, padding 1.
    pub fn upsample(c_in: usize, c_out: usize) -> Self {
        ConvGeometry {
            c_in,
            c_out,
            kernel: (4, 4),
            stride: (2, 2),
            padding: (1, 1),
            groups: 1,
            bias: false,
        }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn c_in_per_group(&self) -> usize {
        self.c_in / self.groups.max(1)
    }

    pub fn kernel_shape(&self) -> [usize; 4] {
        [
            self.c_out,
            self.c_in_per_group(),
            self.kernel.0,
            self.kernel.1,
        ]
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_shape().iter().product()
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups > 1 && self.groups == self.c_in
    }

    /// Zero-valued weights carrying this geometry; used for shape checks.
    fn placeholder(&self) -> ConvWeights {
        ConvWeights {
            kernel: vec![0.0; self.kernel_len()],
            kernel_shape: self.kernel_shape(),
            bias: None,
            groups: self.groups,
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn conv_output(&self, input: Shape) -> Result<Shape> {
        if self.groups == 0 || !self.c_in.is_multiple_of(self.groups) {
            return Err(Error::config(format!(
                "c_in={} not divisible by groups={}",
                self.c_in, self.groups
            )));
        }
        if input.c != self.c_in {
            return Err(Error::config(format!(
                "layer expects {} input channels, producer has {}",
                self.c_in, input.c
            )));
        }
        conv2d_output_shape(input, &self.placeholder())
    }

    pub fn deconv_output(&self, input: Shape) -> Result<Shape> {
        if input.c != self.c_in {
            return Err(Error::config(format!(
                "layer expects {} input channels, producer has {}",
                self.c_in, input.c
            )));
        }
        deconv2d_output_shape(input, &self.placeholder())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Input,
    Conv(ConvGeometry),
    Deconv(ConvGeometry),
    BatchNorm { channels: usize, eps: f32 },
    Relu,
    LeakyRelu { slope: f32 },
    MaxPool(PoolSpec),
    AvgPool(PoolSpec),
    Add,
    Concat,
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv(g) if g.is_depthwise() => "dwconv",
            LayerKind::Conv(_) => "conv",
            LayerKind::Deconv(_) => "deconv",
            LayerKind::BatchNorm { .. } => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::LeakyRelu { .. } => "leaky_relu",
            LayerKind::MaxPool(_) => "maxpool",
            LayerKind::AvgPool(_) => "avgpool",
            LayerKind::Add => "add",
            LayerKind::Concat => "concat",
        }
    }

    /// Named parameter arrays this layer needs, with their shapes.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            LayerKind::Conv(g) | LayerKind::Deconv(g) => {
                let mut v = vec![("weight", g.kernel_shape().to_vec())];
                if g.bias {
                    v.push(("bias", vec![g.c_out]));
                }
                v
            }
            LayerKind::BatchNorm { channels, .. } => {
                BN_PARAMS.iter().map(|&p| (p, vec![*channels])).collect()
            }
            _ => Vec::new(),
        }
    }
}

pub const BN_PARAMS: [&str; 4] = ["gamma", "beta", "running_mean", "running_var"];

/// Batch-norm epsilon used by every built model.
pub const BN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<NodeId>,
    /// Output shape for a batch of one.
    pub shape: Shape,
}

/// A topologically ordered layer graph with statically known shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    nodes: Vec<Node>,
    output: NodeId,
}

impl Graph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn output_id(&self) -> NodeId {
        self.output
    }

    /// `(c, h, w)` expected at the input node.
    pub fn input_shape(&self) -> Shape {
        self.nodes[0].shape
    }

    pub fn output_shape(&self) -> Shape {
        self.nodes[self.output].shape
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Consumers of each node, in node order.
    pub fn consumers(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (id, n) in self.nodes.iter().enumerate() {
            for &i in &n.inputs {
                out[i].push(id);
            }
        }
        out
    }

    /// `(layer, param, shape)` for every stored parameter array, in node order.
    pub fn param_specs(&self) -> Vec<(String, &'static str, Vec<usize>)> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.kind
                    .param_shapes()
                    .into_iter()
                    .map(move |(p, s)| (n.name.clone(), p, s))
            })
            .collect()
    }
}

/// Incremental graph construction with shape inference at every step.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    names: HashSet<String>,
}

impl GraphBuilder {
    /// Starts a graph whose input has `c` channels and `h x w` pixels.
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        let mut b = GraphBuilder::default();
        b.nodes.push(Node {
            name: "input".into(),
            kind: LayerKind::Input,
            inputs: Vec::new(),
            shape: Shape::new(1, c, h, w),
        });
        b.names.insert("input".into());
        b
    }

    pub fn input(&self) -> NodeId {
        0
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id].shape
    }

    fn push(
        &mut self,
        name: &str,
        kind: LayerKind,
        inputs: Vec<NodeId>,
        shape: Shape,
    ) -> Result<NodeId> {
        if !self.names.insert(name.to_string()) {
            return Err(Error::config(format!("duplicate layer name {name:?}")));
        }
        self.nodes.push(Node {
            name: name.into(),
            kind,
            inputs,
            shape,
        });
        Ok(self.nodes.len() - 1)
    }

    fn source(&self, id: NodeId, name: &str) -> Result<Shape> {
        self.nodes
            .get(id)
            .map(|n| n.shape)
            .ok_or_else(|| Error::config(format!("{name}: input node {id} does not exist")))
    }

    pub fn conv(&mut self, name: &str, from: NodeId, geom: ConvGeometry) -> Result<NodeId> {
        let s = self.source(from, name)?;
        let out = geom
            .conv_output(s)
            .map_err(|e| Error::config(format!("{name}: {e}")))?;
        self.push(name, LayerKind::Conv(geom), vec![from], out)
    }

    pub fn deconv(&mut self, name: &str, from: NodeId, geom: ConvGeometry) -> Result<NodeId> {
        let s = self.source(from, name)?;
        let out = geom
            .deconv_output(s)
            .map_err(|e| Error::config(format!("{name}: {e}")))?;
        self.push(name, LayerKind::Deconv(geom), vec![from], out)
    }

    pub fn batchnorm(&mut self, name: &str, from: NodeId) -> Result<NodeId> {
        let s = self.source(from, name)?;
        self.push(
            name,
            LayerKind::BatchNorm {
                channels: s.c,
                eps: BN_EPS,
            },
            vec![from],
            s,
        )
    }

    pub fn relu(&mut self, name: &str, from: NodeId) -> Result<NodeId> {
        let s = self.source(from, name)?;
        self.push(name, LayerKind::Relu, vec![from], s)
    }

    pub fn leaky_relu(&mut self, name: &str, from: NodeId, slope: f32) -> Result<NodeId> {
        let s = self.source(from, name)?;
        if !(0.0..1.0).contains(&slope) {
            return Err(Error::config(format!(
                "{name}: slope {slope} outside [0, 1)"
            )));
        }
        self.push(name, LayerKind::LeakyRelu { slope }, vec![from], s)
    }

    pub fn maxpool(&mut self, name: &str, from: NodeId, spec: PoolSpec) -> Result<NodeId> {
        let s = self.source(from, name)?;
        let out = spec
            .output_shape(s)
            .map_err(|e| Error::config(format!("{name}: {e}")))?;
        self.push(name, LayerKind::MaxPool(spec), vec![from], out)
    }

    pub fn avgpool(&mut self, name: &str, from: NodeId, spec: PoolSpec) -> Result<NodeId> {
        let s = self.source(from, name)?;
        let out = spec
            .output_shape(s)
            .map_err(|e| Error::config(format!("{name}: {e}")))?;
        self.push(name, LayerKind::AvgPool(spec), vec![from], out)
    }

    pub fn add(&mut self, name: &str, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.source(a, name)?, self.source(b, name)?);
        if sa != sb {
            return Err(Error::config(format!("{name}: cannot add {sa} and {sb}")));
        }
        self.push(name, LayerKind::Add, vec![a, b], sa)
    }

    pub fn concat(&mut self, name: &str, parts: &[NodeId]) -> Result<NodeId> {
        let first = self.source(
            *parts
                .first()
                .ok_or_else(|| Error::config(format!("{name}: empty concat")))?,
            name,
        )?;
        let mut c = 0;
        for &p in parts {
            let s = self.source(p, name)?;
            if (s.h, s.w) != (first.h, first.w) {
                return Err(Error::config(format!(
                    "{name}: cannot concat {s} with {first}"
                )));
            }
            c += s.c;
        }
        self.push(
            name,
            LayerKind::Concat,
            parts.to_vec(),
            Shape { c, ..first },
        )
    }

    pub fn finish(self, output: NodeId) -> Result<Graph> {
        if output >= self.nodes.len() {
            return Err(Error::config(format!(
                "output node {output} does not exist"
            )));
        }
        Ok(Graph {
            nodes: self.nodes,
            output,
        })
    }
}
