//! Graph execution.
//!
//! A [`Plan`] resolves every layer's weights once (optionally folding
//! batch norms into the preceding convolution) and then runs nodes in
//! topological order, releasing intermediate tensors after their last use.

use std::time::{Duration, Instant};

use super::graph::{Graph, LayerKind, Node, NodeId};
use super::weights::WeightStore;
use crate::error::{Error, Result};
use crate::ops::{self, BnParams, ConvWeights, PoolSpec};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InferOptions {
    /// Fold conv + batch-norm pairs before execution.
    pub fuse: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input,
    Conv(ConvWeights),
    Deconv(ConvWeights),
    BatchNorm(BnParams),
    /// Batch norm already folded into its producer.
    Folded,
    Relu,
    LeakyRelu(f32),
    MaxPool(PoolSpec),
    AvgPool(PoolSpec),
    Add,
    Concat,
}

#[derive(Debug, Clone)]
pub struct Plan<'g> {
    graph: &'g Graph,
    ops: Vec<Op>,
    last_use: Vec<usize>,
}

fn conv_weights(
    ws: &WeightStore,
    node: &Node,
    geom: &super::graph::ConvGeometry,
) -> Result<ConvWeights> {
    let kernel = ws.require(&node.name, "weight")?;
    let bias = if geom.bias {
        Some(ws.require(&node.name, "bias")?.data.clone())
    } else {
        None
    };
    ConvWeights::new(
        kernel.data.clone(),
        geom.kernel_shape(),
        bias,
        geom.groups,
        geom.stride,
        geom.padding,
    )
    .map_err(|e| Error::config(format!("{}: {e}", node.name)))
}

fn bn_params(ws: &WeightStore, node: &Node, eps: f32) -> Result<BnParams> {
    let get = |p: &str| ws.require(&node.name, p).map(|a| a.data.clone());
    BnParams::new(
        get("gamma")?,
        get("beta")?,
        get("running_mean")?,
        get("running_var")?,
        eps,
    )
    .map_err(|e| Error::config(format!("{}: {e}", node.name)))
}

impl<'g> Plan<'g> {
    pub fn new(graph: &'g Graph, ws: &WeightStore, opts: InferOptions) -> Result<Self> {
        ws.check_against(graph)?;
        let consumers = graph.consumers();
        let mut ops = Vec::with_capacity(graph.len());
        for node in graph.nodes() {
            let op = match &node.kind {
                LayerKind::Input => Op::Input,
                LayerKind::Conv(g) => Op::Conv(conv_weights(ws, node, g)?),
                LayerKind::Deconv(g) => Op::Deconv(conv_weights(ws, node, g)?),
                LayerKind::BatchNorm { eps, .. } => Op::BatchNorm(bn_params(ws, node, *eps)?),
                LayerKind::Relu => Op::Relu,
                LayerKind::LeakyRelu { slope } => Op::LeakyRelu(*slope),
                LayerKind::MaxPool(s) => Op::MaxPool(*s),
                LayerKind::AvgPool(s) => Op::AvgPool(*s),
                LayerKind::Add => Op::Add,
                LayerKind::Concat => Op::Concat,
            };
            ops.push(op);
        }
        if opts.fuse {
            for (id, node) in graph.nodes().iter().enumerate() {
                if !matches!(node.kind, LayerKind::BatchNorm { .. }) {
                    continue;
                }
                let src = node.inputs[0];
                if consumers[src].len() != 1 || src == graph.output_id() {
                    continue;
                }
                let Op::BatchNorm(p) = std::mem::replace(&mut ops[id], Op::Folded) else {
                    unreachable!()
                };
                match &mut ops[src] {
                    Op::Conv(w) | Op::Deconv(w) => *w = ops::fuse_conv_bn(w, &p)?,
                    _ => ops[id] = Op::BatchNorm(p),
                }
            }
        }
        let mut last_use: Vec<usize> = (0..graph.len()).collect();
        for (id, node) in graph.nodes().iter().enumerate() {
            for &i in &node.inputs {
                last_use[i] = last_use[i].max(id);
            }
        }
        last_use[graph.output_id()] = usize::MAX;
        Ok(Plan {
            graph,
            ops,
            last_use,
        })
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.ops[id]
    }

    /// Resolves a folded batch norm to the node whose output it shares.
    pub fn resolve(&self, id: NodeId) -> NodeId {
        match self.ops[id] {
            Op::Folded => self.resolve(self.graph.node(id).inputs[0]),
            _ => id,
        }
    }

    /// A copy of this plan with every weight array passed through `f`.
    pub fn map_weights(&self, mut f: impl FnMut(&[f32]) -> Result<Vec<f32>>) -> Result<Plan<'g>> {
        let mut ops = self.ops.clone();
        for op in &mut ops {
            match op {
                Op::Conv(w) | Op::Deconv(w) => {
                    w.kernel = f(&w.kernel)?;
                    if let Some(b) = &mut w.bias {
                        *b = f(b)?;
                    }
                }
                Op::BatchNorm(p) => {
                    p.gamma = f(&p.gamma)?;
                    p.beta = f(&p.beta)?;
                    p.running_mean = f(&p.running_mean)?;
                    p.running_var = f(&p.running_var)?;
                }
                _ => {}
            }
        }
        Ok(Plan {
            ops,
            ..self.clone()
        })
    }

    /// The same plan with replacement ops (one per node, structure unchanged).
    pub(crate) fn with_ops(&self, ops: Vec<Op>) -> Plan<'g> {
        assert_eq!(ops.len(), self.ops.len());
        Plan {
            ops,
            ..self.clone()
        }
    }

    pub fn check_input(&self, input: &Tensor) -> Result<()> {
        let want = self.graph.input_shape();
        let got = input.shape();
        if (got.c, got.h, got.w) != (want.c, want.h, want.w) {
            return Err(Error::config(format!(
                "input {got} does not match the model input (n, {}, {}, {})",
                want.c, want.h, want.w
            )));
        }
        Ok(())
    }

    pub fn run(&self, input: &Tensor) -> Result<Tensor> {
        self.run_observed(input, |_, _, _| Ok(()))
    }

    /// Runs the plan, calling `observe(node, output, elapsed)` after every
    /// executed node. The observer may modify the output in place.
    pub fn run_observed(
        &self,
        input: &Tensor,
        mut observe: impl FnMut(NodeId, &mut Tensor, Duration) -> Result<()>,
    ) -> Result<Tensor> {
        self.check_input(input)?;
        let mut values: Vec<Option<Tensor>> = vec![None; self.graph.len()];
        for (id, node) in self.graph.nodes().iter().enumerate() {
            let start = Instant::now();
            let get = |i: NodeId| values[i].as_ref().expect("producer runs before consumer");
            let out = match &self.ops[id] {
                Op::Input => Some(input.clone()),
                Op::Folded => None,
                op => Some(self.exec(node, op, &get).map_err(|e| match e {
                    Error::Config(m) => Error::config(format!("{}: {m}", node.name)),
                    other => other,
                })?),
            };
            match out {
                Some(mut t) => {
                    if let Some(i) = t.first_non_finite() {
                        return Err(Error::NumericFault {
                            layer: node.name.clone(),
                            detail: format!("element {i} is {}", t.data()[i]),
                        });
                    }
                    observe(id, &mut t, start.elapsed())?;
                    values[id] = Some(t);
                }
                None => {
                    // the folded batch norm aliases its producer
                    let src = node.inputs[0];
                    values[id] = values[src].take();
                }
            }
            for &i in &node.inputs {
                if self.last_use[i] <= id {
                    values[i] = None;
                }
            }
        }
        Ok(values[self.graph.output_id()]
            .take()
            .expect("output computed"))
    }

    fn exec<'a>(
        &self,
        node: &Node,
        op: &Op,
        get: &impl Fn(NodeId) -> &'a Tensor,
    ) -> Result<Tensor> {
        let x = || get(node.inputs[0]);
        Ok(match op {
            Op::Conv(w) => ops::conv2d(x(), w)?,
            Op::Deconv(w) => ops::deconv2d(x(), w)?,
            Op::BatchNorm(p) => ops::batchnorm_inference(x(), p)?,
            Op::Relu => ops::relu(x()),
            Op::LeakyRelu(s) => ops::leaky_relu(x(), *s)?,
            Op::MaxPool(s) => ops::maxpool(x(), *s)?,
            Op::AvgPool(s) => ops::avgpool(x(), *s)?,
            Op::Add => ops::eltwise_sum(get(node.inputs[0]), get(node.inputs[1]))?,
            Op::Concat => {
                let parts: Vec<&Tensor> = node.inputs.iter().map(|&i| get(i)).collect();
                ops::concat(&parts)?
            }
            Op::Input | Op::Folded => unreachable!(),
        })
    }
}

/// Runs `g` on `input`, returning the `(n, K, h, w)` heatmap batch.
pub fn infer(g: &Graph, ws: &WeightStore, input: &Tensor, opts: InferOptions) -> Result<Tensor> {
    Plan::new(g, ws, opts)?.run(input)
}

/// Per-layer wall-clock timings of one forward pass, in node order.
pub fn infer_timed(plan: &Plan<'_>, input: &Tensor) -> Result<(Tensor, Vec<(NodeId, Duration)>)> {
    let mut times = Vec::new();
    let out = plan.run_observed(input, |id, _, dt| {
        times.push((id, dt));
        Ok(())
    })?;
    Ok((out, times))
}

/// Runs a forward pass and records every node's runtime output shape.
pub fn runtime_shapes(plan: &Plan<'_>, input: &Tensor) -> Result<Vec<(NodeId, Shape)>> {
    let mut shapes = Vec::new();
    plan.run_observed(input, |id, t, _| {
        shapes.push((id, t.shape()));
        Ok(())
    })?;
    Ok(shapes)
}
