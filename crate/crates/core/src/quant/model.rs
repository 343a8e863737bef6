//! Whole-model int8 simulation on top of the fused float plan.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::int8::{dequantize_tensor, quantize_tensor, QTensor, QuantParams};
use super::qconv::{quantize_bias, quantized_conv2d, quantized_deconv2d, QConvWeights};
use crate::error::{Error, Result};
use crate::model::{Graph, InferOptions, NodeId, Op, Plan, WeightStore};
use crate::ops::{self, ConvWeights};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantLayer {
    pub weights: QConvWeights,
    pub weight_qp: QuantParams,
    /// Folded float bias; quantized against the input scale at run time.
    pub bias: Option<Vec<f32>>,
    pub(crate) bias_q: Option<Vec<i32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QOp {
    Input,
    Conv(QuantLayer),
    Deconv(QuantLayer),
    Folded,
    Relu,
    MaxPool(ops::PoolSpec),
    /// Dequantize the inputs, run the float op, requantize.
    Float(Op),
}

/// Int8 weights and per-edge activation scales for a graph.
///
/// Batch norms are folded into their producers; each executed node owns
/// one activation scale for its output edge (folded nodes alias their
/// producer's edge).
#[derive(Debug, Clone)]
pub struct QuantizedModel<'g> {
    graph: &'g Graph,
    ops: Vec<QOp>,
    act: Vec<QuantParams>,
    last_use: Vec<usize>,
}

/// Scales in a serializable form, keyed by layer name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantSidecar {
    pub weights: BTreeMap<String, f64>,
    pub activations: BTreeMap<String, f64>,
}

impl QuantSidecar {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sidecar serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(format!("quantization sidecar: {e}")))
    }
}

fn inherits_scale(op: &Op) -> bool {
    matches!(op, Op::Relu | Op::MaxPool(_))
}

fn layer_for(
    w: &ConvWeights,
    in_qp: QuantParams,
    weight_qp: Option<QuantParams>,
) -> Result<QuantLayer> {
    let weight_qp = weight_qp.unwrap_or_else(|| {
        QuantParams::from_max_abs(w.kernel.iter().fold(0.0f32, |m, v| m.max(v.abs())) as f64)
    });
    let bias_q = w
        .bias
        .as_deref()
        .map(|b| quantize_bias(b, in_qp, weight_qp))
        .transpose()?;
    Ok(QuantLayer {
        weights: QConvWeights::quantize(w, weight_qp),
        weight_qp,
        bias: w.bias.clone(),
        bias_q,
    })
}

impl<'g> QuantizedModel<'g> {
    fn from_plan(
        plan: &Plan<'g>,
        act: Vec<QuantParams>,
        weight_qp: &BTreeMap<NodeId, QuantParams>,
    ) -> Result<Self> {
        let g = plan.graph();
        let mut ops_q = Vec::with_capacity(g.len());
        for (id, op) in plan.ops().iter().enumerate() {
            let in_qp = || act[plan.resolve(g.node(id).inputs[0])];
            let q = match op {
                Op::Input => QOp::Input,
                Op::Folded => QOp::Folded,
                Op::Conv(w) => QOp::Conv(
                    layer_for(w, in_qp(), weight_qp.get(&id).copied())
                        .map_err(|e| rename(e, &g.node(id).name))?,
                ),
                Op::Deconv(w) => QOp::Deconv(
                    layer_for(w, in_qp(), weight_qp.get(&id).copied())
                        .map_err(|e| rename(e, &g.node(id).name))?,
                ),
                Op::Relu => QOp::Relu,
                Op::MaxPool(s) => QOp::MaxPool(*s),
                other => QOp::Float(other.clone()),
            };
            ops_q.push(q);
        }
        let mut last_use: Vec<usize> = (0..g.len()).collect();
        for (id, node) in g.nodes().iter().enumerate() {
            for &i in &node.inputs {
                last_use[i] = last_use[i].max(id);
            }
        }
        last_use[g.output_id()] = usize::MAX;
        Ok(QuantizedModel {
            graph: g,
            ops: ops_q,
            act,
            last_use,
        })
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn ops(&self) -> &[QOp] {
        &self.ops
    }

    /// Activation scale of the tensor produced by `id`.
    pub fn activation(&self, id: NodeId) -> QuantParams {
        self.act[id]
    }

    pub fn weight_params(&self, id: NodeId) -> Option<QuantParams> {
        match &self.ops[id] {
            QOp::Conv(l) | QOp::Deconv(l) => Some(l.weight_qp),
            _ => None,
        }
    }

    pub fn sidecar(&self) -> QuantSidecar {
        let mut weights = BTreeMap::new();
        let mut activations = BTreeMap::new();
        for (id, node) in self.graph.nodes().iter().enumerate() {
            if let Some(q) = self.weight_params(id) {
                weights.insert(node.name.clone(), q.scale);
            }
            if !matches!(self.ops[id], QOp::Folded) {
                activations.insert(node.name.clone(), self.act[id].scale);
            }
        }
        QuantSidecar {
            weights,
            activations,
        }
    }

    /// Int8 kernels (as integer-valued f32) and float biases in weight-store form.
    pub fn weight_store(&self) -> WeightStore {
        let mut ws = WeightStore::new();
        for (id, node) in self.graph.nodes().iter().enumerate() {
            if let QOp::Conv(l) | QOp::Deconv(l) = &self.ops[id] {
                let k = l.weights.kernel.iter().map(|&v| v as f32).collect();
                ws.insert(&node.name, "weight", l.weights.kernel_shape.to_vec(), k)
                    .unwrap();
                if let Some(b) = &l.bias {
                    ws.insert(&node.name, "bias", vec![b.len()], b.clone())
                        .unwrap();
                }
            }
        }
        ws
    }

    /// Writes the weight manifest, blob and the TOML scale sidecar.
    pub fn save_files(
        &self,
        manifest: impl AsRef<Path>,
        blob: impl AsRef<Path>,
        sidecar: impl AsRef<Path>,
    ) -> Result<()> {
        self.weight_store().save_files(manifest, blob)?;
        let p = sidecar.as_ref();
        fs::write(p, self.sidecar().to_toml()).map_err(|e| Error::io(p, e))
    }

    /// Rebuilds a model saved by [`QuantizedModel::save_files`].
    pub fn load_files(
        graph: &'g Graph,
        manifest: impl AsRef<Path>,
        blob: impl AsRef<Path>,
        sidecar: impl AsRef<Path>,
    ) -> Result<Self> {
        let stored = WeightStore::load_files(manifest, blob)?;
        let p = sidecar.as_ref();
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let sc = QuantSidecar::from_toml(&text)?;
        let look = |map: &BTreeMap<String, f64>, name: &str, what: &str| -> Result<QuantParams> {
            let s = map.get(name).ok_or_else(|| {
                Error::format(format!(
                    "quantization sidecar has no {what} scale for {name}"
                ))
            })?;
            QuantParams::new(*s)
        };
        // Structure (which batch norms fold) depends only on the graph.
        let shell = Plan::new(
            graph,
            &WeightStore::zeros(graph),
            InferOptions { fuse: true },
        )?;
        let mut act = vec![QuantParams { scale: 1.0 }; graph.len()];
        let mut wq = BTreeMap::new();
        let mut ops_f = shell.ops().to_vec();
        for (id, node) in graph.nodes().iter().enumerate() {
            if matches!(ops_f[id], Op::Folded) {
                continue;
            }
            act[id] = look(&sc.activations, &node.name, "activation")?;
            if let Op::Conv(w) | Op::Deconv(w) = &mut ops_f[id] {
                let q = look(&sc.weights, &node.name, "weight")?;
                let k = stored.require(&node.name, "weight")?;
                w.kernel = k
                    .data
                    .iter()
                    .map(|&v| (v as f64 * q.scale) as f32)
                    .collect();
                w.bias = stored.get(&node.name, "bias").map(|b| b.data.clone());
                wq.insert(id, q);
            }
        }
        for id in 0..graph.len() {
            if matches!(ops_f[id], Op::Folded) {
                act[id] = act[shell.resolve(id)];
            }
        }
        let plan = shell.with_ops(ops_f);
        let mut m = Self::from_plan(&plan, act, &wq)?;
        // kernels were dequantized on load; restore the exact stored integers
        for (id, node) in graph.nodes().iter().enumerate() {
            if let QOp::Conv(l) | QOp::Deconv(l) = &mut m.ops[id] {
                let k = stored.require(&node.name, "weight")?;
                l.weights.kernel = k.data.iter().map(|&v| v as i8).collect();
            }
        }
        Ok(m)
    }

    pub fn run(&self, input: &Tensor) -> Result<Tensor> {
        self.run_observed(input, |_, _, _| {})
    }

    /// Runs the int8 path, calling `observe(node, output, scale)` for every
    /// executed node; returns the dequantized output.
    pub fn run_observed(
        &self,
        input: &Tensor,
        mut observe: impl FnMut(NodeId, &QTensor, QuantParams),
    ) -> Result<Tensor> {
        let g = self.graph;
        let want = g.input_shape();
        let got = input.shape();
        if (got.c, got.h, got.w) != (want.c, want.h, want.w) {
            return Err(Error::config(format!(
                "input {got} does not match the model input (n, {}, {}, {})",
                want.c, want.h, want.w
            )));
        }
        let mut values: Vec<Option<QTensor>> = vec![None; g.len()];
        for (id, node) in g.nodes().iter().enumerate() {
            let qp = self.act[id];
            let get = |i: NodeId| values[i].as_ref().expect("producer runs first");
            let out = match &self.ops[id] {
                QOp::Folded => None,
                QOp::Input => Some(quantize_tensor(input, qp)),
                op => Some(
                    self.exec(node.inputs.as_slice(), op, qp, &get)
                        .map_err(|e| rename(e, &node.name))?,
                ),
            };
            match out {
                Some(t) => {
                    observe(id, &t, qp);
                    values[id] = Some(t);
                }
                None => values[id] = values[node.inputs[0]].take(),
            }
            for &i in &node.inputs {
                if self.last_use[i] <= id {
                    values[i] = None;
                }
            }
        }
        let out = values[g.output_id()].take().expect("output computed");
        Ok(dequantize_tensor(&out, self.act[g.output_id()]))
    }

    fn exec<'a>(
        &self,
        inputs: &[NodeId],
        op: &QOp,
        qp: QuantParams,
        get: &impl Fn(NodeId) -> &'a QTensor,
    ) -> Result<QTensor> {
        let x = get(inputs[0]);
        let in_qp = self.act[inputs[0]];
        Ok(match op {
            QOp::Conv(l) => {
                quantized_conv2d(x, &l.weights, in_qp, l.weight_qp, qp, l.bias_q.as_deref())?
            }
            QOp::Deconv(l) => {
                quantized_deconv2d(x, &l.weights, in_qp, l.weight_qp, qp, l.bias_q.as_deref())?
            }
            QOp::Relu => QTensor::from_raw(x.shape(), x.data().iter().map(|&v| v.max(0)).collect()),
            QOp::MaxPool(s) => {
                // max commutes with a positive scale, so pool the dequantized values exactly
                let f = ops::maxpool(&dequantize_tensor(x, in_qp), *s)?;
                quantize_tensor(&f, qp)
            }
            QOp::Float(op) => {
                let deq: Vec<Tensor> = inputs
                    .iter()
                    .map(|&i| dequantize_tensor(get(i), self.act[i]))
                    .collect();
                let f = match op {
                    Op::BatchNorm(p) => ops::batchnorm_inference(&deq[0], p)?,
                    Op::LeakyRelu(s) => ops::leaky_relu(&deq[0], *s)?,
                    Op::AvgPool(s) => ops::avgpool(&deq[0], *s)?,
                    Op::Add => ops::eltwise_sum(&deq[0], &deq[1])?,
                    Op::Concat => ops::concat(&deq.iter().collect::<Vec<_>>())?,
                    other => unreachable!("{other:?} has a dedicated int8 path"),
                };
                quantize_tensor(&f, qp)
            }
            QOp::Input | QOp::Folded => unreachable!(),
        })
    }
}

fn rename(e: Error, layer: &str) -> Error {
    match e {
        Error::NumericFault { detail, .. } => Error::NumericFault {
            layer: layer.to_string(),
            detail,
        },
        Error::Config(m) => Error::config(format!("{layer}: {m}")),
        other => other,
    }
}

/// Builds an int8 model: batch norms are folded, weight scales come from the
/// folded kernels' max-abs, and activation scales from float forward passes
/// over `calib`.
pub fn quantize_model<'g>(
    g: &'g Graph,
    ws: &WeightStore,
    calib: &[Tensor],
) -> Result<QuantizedModel<'g>> {
    if calib.is_empty() {
        return Err(Error::Domain(
            "quantization needs at least one calibration input".into(),
        ));
    }
    let plan = Plan::new(g, ws, InferOptions { fuse: true })?;
    let mut max_abs = vec![0.0f32; g.len()];
    for x in calib {
        plan.run_observed(x, |id, t, _| {
            max_abs[id] = max_abs[id].max(t.max_abs());
            Ok(())
        })?;
    }
    let mut act = vec![QuantParams { scale: 1.0 }; g.len()];
    for (id, node) in g.nodes().iter().enumerate() {
        act[id] = match plan.op(id) {
            Op::Folded => act[plan.resolve(id)],
            op if inherits_scale(op) => act[node.inputs[0]],
            _ => QuantParams::from_max_abs(max_abs[id] as f64),
        };
    }
    QuantizedModel::from_plan(&plan, act, &BTreeMap::new())
}
