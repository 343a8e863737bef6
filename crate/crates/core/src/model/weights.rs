//! Named parameter arrays and their manifest + blob serialization.
//!
//! The manifest is JSON: `{"entries": [{"layer_id", "param", "dtype": "f32",
//! "shape", "offset"}, ...]}`. Entries are contiguous and ordered; `offset` is
//! the byte position of the array in the blob, which holds little-endian
//! `f32` values and nothing else.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, LayerKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub layer_id: String,
    pub param: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(format!("weight manifest: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore {
    arrays: BTreeMap<(String, String), ParamArray>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        layer: &str,
        param: &str,
        shape: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<()> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::config(format!(
                "{layer}.{param}: shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        self.arrays.insert(
            (layer.to_string(), param.to_string()),
            ParamArray { shape, data },
        );
        Ok(())
    }

    pub fn get(&self, layer: &str, param: &str) -> Option<&ParamArray> {
        self.arrays.get(&(layer.to_string(), param.to_string()))
    }

    pub fn require(&self, layer: &str, param: &str) -> Result<&ParamArray> {
        self.get(layer, param).ok_or_else(|| Error::MissingWeight {
            layer: layer.into(),
            param: param.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &ParamArray)> {
        self.arrays
            .iter()
            .map(|((l, p), a)| (l.as_str(), p.as_str(), a))
    }

    /// Applies `f` to every array in place.
    pub fn map_arrays(
        &self,
        mut f: impl FnMut(&str, &str, &[f32]) -> Result<Vec<f32>>,
    ) -> Result<WeightStore> {
        let mut out = WeightStore::new();
        for ((l, p), a) in &self.arrays {
            out.insert(l, p, a.shape.clone(), f(l, p, &a.data)?)?;
        }
        Ok(out)
    }

    /// Checks that every parameter the graph needs is present with the right shape.
    pub fn check_against(&self, g: &Graph) -> Result<()> {
        for (layer, param, shape) in g.param_specs() {
            let a = self.require(&layer, param)?;
            if a.shape != shape {
                return Err(Error::config(format!(
                    "{layer}.{param}: stored shape {:?}, graph expects {shape:?}",
                    a.shape
                )));
            }
        }
        Ok(())
    }

    /// Deterministic random weights for `g`: uniform He-scaled kernels and
    /// batch norms close to identity.
    pub fn random(g: &Graph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws = WeightStore::new();
        for node in g.nodes() {
            match &node.kind {
                LayerKind::Conv(geom) | LayerKind::Deconv(geom) => {
                    let fan_in = geom.c_in_per_group() * geom.kernel.0 * geom.kernel.1;
                    let bound = (6.0 / fan_in as f32).sqrt();
                    let kernel = (0..geom.kernel_len())
                        .map(|_| rng.gen_range(-bound..bound))
                        .collect();
                    ws.insert(&node.name, "weight", geom.kernel_shape().to_vec(), kernel)
                        .expect("shape matches length");
                    if geom.bias {
                        let bias = (0..geom.c_out).map(|_| rng.gen_range(-0.1..0.1)).collect();
                        ws.insert(&node.name, "bias", vec![geom.c_out], bias)
                            .unwrap();
                    }
                }
                LayerKind::BatchNorm { channels, .. } => {
                    let c = *channels;
                    let mut draw = |lo: f32, hi: f32| -> Vec<f32> {
                        (0..c).map(|_| rng.gen_range(lo..hi)).collect()
                    };
                    let gamma = draw(0.4, 0.9);
                    let beta = draw(-0.1, 0.1);
                    let mean = draw(-0.1, 0.1);
                    let var = draw(0.5, 1.5);
                    for (p, v) in ["gamma", "beta", "running_mean", "running_var"]
                        .into_iter()
                        .zip([gamma, beta, mean, var])
                    {
                        ws.insert(&node.name, p, vec![c], v).unwrap();
                    }
                }
                _ => {}
            }
        }
        ws
    }

    /// All-zero kernels, biases and batch-norm scales (running variance 1).
    pub fn zeros(g: &Graph) -> Self {
        let mut ws = WeightStore::new();
        for (layer, param, shape) in g.param_specs() {
            let n: usize = shape.iter().product();
            let fill = if param == "running_var" { 1.0 } else { 0.0 };
            ws.insert(&layer, param, shape, vec![fill; n]).unwrap();
        }
        ws
    }

    pub fn save(&self) -> (Manifest, Vec<u8>) {
        let mut manifest = Manifest::default();
        let mut blob = Vec::new();
        for ((layer, param), a) in &self.arrays {
            manifest.entries.push(ManifestEntry {
                layer_id: layer.clone(),
                param: param.clone(),
                dtype: "f32".into(),
                shape: a.shape.clone(),
                offset: blob.len() as u64,
            });
            for v in &a.data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        (manifest, blob)
    }

    pub fn load(manifest: &Manifest, blob: &[u8]) -> Result<Self> {
        let mut ws = WeightStore::new();
        let mut cursor = 0u64;
        for (i, e) in manifest.entries.iter().enumerate() {
            if e.dtype != "f32" {
                return Err(Error::format(format!(
                    "entry {i} ({}.{}): dtype {:?} is not f32",
                    e.layer_id, e.param, e.dtype
                )));
            }
            if e.offset != cursor {
                return Err(Error::format(format!(
                    "entry {i} ({}.{}): offset {} but previous data ends at {cursor}",
                    e.layer_id, e.param, e.offset
                )));
            }
            let n: u64 = e.shape.iter().map(|&d| d as u64).product();
            let end = cursor + 4 * n;
            if end > blob.len() as u64 {
                return Err(Error::format(format!(
                    "weight blob truncated: entry {i} ({}.{}) needs bytes {cursor}..{end}, blob has {}",
                    e.layer_id,
                    e.param,
                    blob.len()
                )));
            }
            let data = blob[cursor as usize..end as usize]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if ws.get(&e.layer_id, &e.param).is_some() {
                return Err(Error::format(format!(
                    "entry {i}: duplicate {}.{}",
                    e.layer_id, e.param
                )));
            }
            ws.insert(&e.layer_id, &e.param, e.shape.clone(), data)?;
            cursor = end;
        }
        if cursor != blob.len() as u64 {
            return Err(Error::format(format!(
                "weight blob has {} bytes, manifest covers {cursor}",
                blob.len()
            )));
        }
        Ok(ws)
    }

    pub fn save_files(
        &self,
        manifest_path: impl AsRef<Path>,
        blob_path: impl AsRef<Path>,
    ) -> Result<()> {
        let (m, blob) = self.save();
        let (mp, bp) = (manifest_path.as_ref(), blob_path.as_ref());
        fs::write(mp, m.to_json()).map_err(|e| Error::io(mp, e))?;
        fs::write(bp, blob).map_err(|e| Error::io(bp, e))
    }

    pub fn load_files(
        manifest_path: impl AsRef<Path>,
        blob_path: impl AsRef<Path>,
    ) -> Result<Self> {
        let (mp, bp) = (manifest_path.as_ref(), blob_path.as_ref());
        let text = fs::read_to_string(mp).map_err(|e| Error::io(mp, e))?;
        let blob = fs::read(bp).map_err(|e| Error::io(bp, e))?;
        Self::load(&Manifest::from_json(&text)?, &blob)
    }
}
