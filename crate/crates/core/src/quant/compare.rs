use serde::Serialize;

use super::fp16::{fp16_round, fp16_round_slice};
use super::int8::dequantize_tensor;
use super::model::QuantizedModel;
use crate::error::Result;
use crate::model::{Graph, InferOptions, NodeId, Plan, WeightStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ErrorStats {
    pub max_abs: f64,
    pub mean_abs: f64,
    #[serde(skip)]
    sum: f64,
    #[serde(skip)]
    count: u64,
}

impl ErrorStats {
    fn add(&mut self, reference: &Tensor, other: &Tensor) {
        for (a, b) in reference.data().iter().zip(other.data()) {
            let d = (*a as f64 - *b as f64).abs();
            self.max_abs = self.max_abs.max(d);
            self.sum += d;
        }
        self.count += reference.len() as u64;
        self.mean_abs = if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerError {
    pub layer: String,
    #[serde(flatten)]
    pub stats: ErrorStats,
}

/// Error of one reduced-precision path against the float reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathError {
    pub output: ErrorStats,
    pub layers: Vec<LayerError>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub fp16: PathError,
    pub int8: PathError,
}

struct Tracker {
    per_node: Vec<Option<ErrorStats>>,
    output: ErrorStats,
}

impl Tracker {
    fn new(n: usize) -> Self {
        Tracker {
            per_node: vec![None; n],
            output: ErrorStats::default(),
        }
    }

    fn finish(self, g: &Graph) -> PathError {
        PathError {
            output: self.output,
            layers: self
                .per_node
                .into_iter()
                .enumerate()
                .filter_map(|(id, s)| {
                    s.map(|stats| LayerError {
                        layer: g.node(id).name.clone(),
                        stats,
                    })
                })
                .collect(),
        }
    }
}

/// Runs the float, FP16-simulated and int8 paths on every input and reports
/// elementwise errors of the latter two against the float one, overall and
/// per layer.
///
/// The reference is the fused float plan, so node outputs line up one to one
/// with both reduced-precision paths and the reported error is purely due
/// to precision. The FP16 path rounds the weights and every layer output to
/// half precision while accumulating in `f32`.
pub fn compare_outputs(
    g: &Graph,
    ws: &WeightStore,
    qm: &QuantizedModel<'_>,
    inputs: &[Tensor],
) -> Result<CompareReport> {
    let reference = Plan::new(g, ws, InferOptions { fuse: true })?;
    let half = reference.map_weights(fp16_round_slice)?;
    let mut t16 = Tracker::new(g.len());
    let mut t8 = Tracker::new(g.len());
    for x in inputs {
        let mut layer_ref: Vec<Option<Tensor>> = vec![None; g.len()];
        let want = reference.run_observed(x, |id, t, _| {
            layer_ref[id] = Some(t.clone());
            Ok(())
        })?;
        let record = |per_node: &mut Vec<Option<ErrorStats>>, id: NodeId, t: &Tensor| {
            let r = layer_ref[id].as_ref().expect("reference ran the same node");
            per_node[id]
                .get_or_insert_with(ErrorStats::default)
                .add(r, t);
        };
        let got16 = half.run_observed(x, |id, t, _| {
            *t = fp16_round(t)?;
            record(&mut t16.per_node, id, t);
            Ok(())
        })?;
        t16.output.add(&want, &got16);
        let got8 = qm.run_observed(x, |id, q, qp| {
            record(&mut t8.per_node, id, &dequantize_tensor(q, qp))
        })?;
        t8.output.add(&want, &got8);
    }
    Ok(CompareReport {
        fp16: t16.finish(g),
        int8: t8.finish(g),
    })
}
