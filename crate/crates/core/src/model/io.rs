use std::collections::HashMap;
use std::path::Path;

use super::mlp::{Layer, Linear, Mlp};
use super::params::{layer_name, BlockParams, ModelParams};
use super::ModelConfig;
use crate::container::{read_file, Reader, Tensor, TensorData, Writer};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quant::QuantizedLinear;
use crate::real::Real;

pub const PARAMS_MAGIC: &[u8; 4] = b"FLCG";
const VERSION: u32 = 1;

fn full_tensor<T: Real>(name: String, dims: Vec<usize>, values: &[T]) -> Tensor {
    if T::BYTES == 4 {
        Tensor::f32(name, dims, values.iter().map(|v| v.to_f32_lossy()).collect())
    } else {
        Tensor::f64(name, dims, values.iter().map(|v| v.as_f64()).collect())
    }
}

pub fn params_to_bytes<T: Real>(params: &ModelParams<T>) -> Vec<u8> {
    let c = params.config();
    let mut w = Writer::new(PARAMS_MAGIC, VERSION);
    for v in [
        c.hidden_dim,
        c.rbf_dim,
        c.num_blocks,
        c.num_atom_types,
        c.filter_hidden_dim,
        c.readout_hidden_dim,
    ] {
        w.u32(v as u32);
    }
    w.f64(c.cutoff);
    w.tensor(&full_tensor(
        "embedding".into(),
        vec![params.embedding.rows(), params.embedding.cols()],
        params.embedding.as_slice(),
    ));
    for (name, layer) in params.named_layers() {
        let dims = vec![layer.out_dim(), layer.in_dim()];
        match layer {
            Layer::Full(l) => {
                w.tensor(&full_tensor(format!("{name}.weight"), dims, l.weight()));
                w.tensor(&full_tensor(format!("{name}.bias"), vec![l.out_dim()], l.bias()));
            }
            Layer::Half(q) => {
                w.tensor(&Tensor {
                    name: format!("{name}.weight"),
                    dims,
                    data: TensorData::F16Scaled {
                        data: q.weight().to_vec(),
                        scale: q.scale().to_vec(),
                    },
                });
                w.tensor(&Tensor::f32(format!("{name}.bias"), vec![q.out_dim()], q.bias().to_vec()));
            }
        }
    }
    w.finish()
}

pub fn save_params<T: Real>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    std::fs::write(path, params_to_bytes(params)).map_err(|e| Error::io(path, e))
}

/// Loads a parameter file using the architecture stored in its header.
pub fn load_params<T: Real>(path: &Path) -> Result<ModelParams<T>> {
    params_from_bytes(&read_file(path)?, None)
}

/// Loads a parameter file and requires every tensor to fit `expected`.
pub fn load_params_checked<T: Real>(path: &Path, expected: &ModelConfig) -> Result<ModelParams<T>> {
    params_from_bytes(&read_file(path)?, Some(expected))
}

pub fn params_from_bytes<T: Real>(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<ModelParams<T>> {
    let (mut r, version) = Reader::new(bytes, PARAMS_MAGIC, "parameter file")?;
    if version != VERSION {
        return Err(Error::load("parameter file", format!("unsupported version {version}")));
    }
    let mut u = |f: &str| r.u32(f).map(|v| v as usize);
    let hidden_dim = u("hidden_dim")?;
    let rbf_dim = u("rbf_dim")?;
    let num_blocks = u("num_blocks")?;
    let num_atom_types = u("num_atom_types")?;
    let filter_hidden_dim = u("filter_hidden_dim")?;
    let readout_hidden_dim = u("readout_hidden_dim")?;
    let cutoff = r.f64("cutoff")?;
    let header = ModelConfig {
        hidden_dim,
        rbf_dim,
        num_blocks,
        cutoff,
        num_atom_types,
        filter_hidden_dim,
        readout_hidden_dim,
    };
    header.validate()?;
    let config = expected.copied().unwrap_or(header);
    config.validate()?;
    if config.cutoff != header.cutoff {
        return Err(Error::load(
            "parameter file",
            format!("cutoff {} does not match expected {}", header.cutoff, config.cutoff),
        ));
    }

    let mut by_name: HashMap<String, Tensor> = HashMap::new();
    for t in r.tensors()? {
        if by_name.contains_key(&t.name) {
            return Err(Error::load(t.name, "duplicate tensor"));
        }
        by_name.insert(t.name.clone(), t);
    }
    let mut take = |name: &str, dims: &[usize]| -> Result<Tensor> {
        let t = by_name.remove(name).ok_or_else(|| Error::load(name, "tensor missing"))?;
        if t.dims != dims {
            return Err(Error::load(name, format!("shape {:?}, expected {:?}", t.dims, dims)));
        }
        Ok(t)
    };

    let d = config.hidden_dim;
    let emb = take("embedding", &[config.num_atom_types, d])?;
    if matches!(emb.data, TensorData::F16Scaled { .. }) {
        return Err(Error::load("embedding", "embedding must be full precision"));
    }
    let embedding = Matrix::from_vec(config.num_atom_types, d, emb.to_f64().into_iter().map(T::lit).collect());

    let mut mlp = |prefix: &str, widths: &[usize]| -> Result<Mlp<T>> {
        let n = widths.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for l in 0..n {
            let name = layer_name(prefix, n, l);
            let (i, o) = (widths[l], widths[l + 1]);
            let wn = format!("{name}.weight");
            let bn = format!("{name}.bias");
            let w = take(&wn, &[o, i])?;
            let b = take(&bn, &[o])?;
            if matches!(b.data, TensorData::F16Scaled { .. }) {
                return Err(Error::load(bn, "bias must be full precision"));
            }
            let layer = match w.data {
                TensorData::F16Scaled { data, scale } => {
                    let bias = b.to_f64().into_iter().map(|v| v as f32).collect();
                    Layer::Half(QuantizedLinear::new(o, i, data, scale, bias).map_err(|e| Error::load(&wn, e.to_string()))?)
                }
                _ => Layer::Full(Linear::new(
                    o,
                    i,
                    w.to_f64().into_iter().map(T::lit).collect(),
                    b.to_f64().into_iter().map(T::lit).collect(),
                )?),
            };
            layers.push(layer);
        }
        Mlp::new(layers)
    };
    let mut blocks = Vec::with_capacity(config.num_blocks);
    for t in 0..config.num_blocks {
        blocks.push(BlockParams {
            pre: mlp(&format!("block{t}.pre"), &[d, d])?,
            filter: mlp(
                &format!("block{t}.filter"),
                &[config.rbf_dim, config.filter_hidden_dim, d],
            )?,
            post: mlp(&format!("block{t}.post"), &[d, d, d])?,
        });
    }
    let readout = mlp("readout", &[d, config.readout_hidden_dim, 1])?;
    if let Some(extra) = by_name.keys().min() {
        return Err(Error::load(extra.clone(), "unexpected tensor"));
    }
    ModelParams::new(config, embedding, blocks, readout)
}
