use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::calibrate::{quantize_layer, CalibrationSet};
use crate::backend::reference::{reference_energy, Aggregation};
use crate::backend::common::embed;
use crate::error::{Error, Result};
use crate::model::{rbf_expand, Layer, Mlp, MlpCache, ModelParams};
use crate::neighbor::build_neighbors_cells;
use crate::real::Real;

/// Smallest calibration set accepted per layer.
pub const MIN_CALIBRATION_ROWS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizeOptions {
    /// Calibration rows per layer.
    pub samples: usize,
    pub seed: u64,
}

impl Default for QuantizeOptions {
    fn default() -> Self {
        Self { samples: 256, seed: 0 }
    }
}

/// A configuration the model is evaluated on to collect node features.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationState<T> {
    pub positions: Vec<[T; 3]>,
    pub types: Vec<usize>,
}

/// `count` copies of a structure with every coordinate displaced by Gaussian
/// noise of `sigma` nm.
pub fn jittered_states<T: Real>(
    positions: &[[f64; 3]],
    types: &[usize],
    count: usize,
    sigma: f64,
    seed: u64,
) -> Vec<CalibrationState<T>> {
    (0..count)
        .map(|k| CalibrationState {
            positions: crate::synth::jitter(positions, sigma, seed.wrapping_add(k as u64))
                .iter()
                .map(|p| p.map(T::lit))
                .collect(),
            types: types.to_vec(),
        })
        .collect()
}

/// Calibration outcome of one quantized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub name: String,
    pub per_channel_error: f64,
    pub per_tensor_error: f64,
}

/// Replaces every layer of the filter, update and readout networks (and the
/// node-wise pre-linear) by a half-precision layer with calibrated
/// per-channel scales. The embedding stays full precision.
///
/// Filter layers calibrate on basis vectors at distances drawn uniformly in
/// `(0, cutoff)`; node-wise networks on features from full-precision forward
/// passes over `states`. Deeper layers see the activations of those rows.
pub fn quantize_model<T: Real>(
    params: &ModelParams<T>,
    states: &[CalibrationState<T>],
    opts: &QuantizeOptions,
) -> Result<(ModelParams<T>, Vec<LayerReport>)> {
    if opts.samples < MIN_CALIBRATION_ROWS {
        return Err(Error::InvalidInput(format!(
            "at least {MIN_CALIBRATION_ROWS} calibration samples are needed, got {}",
            opts.samples
        )));
    }
    let cfg = *params.config();
    let d = cfg.hidden_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // node rows per block input, per post input, and final features
    let nb = params.num_blocks();
    let mut block_in: Vec<Vec<T>> = vec![Vec::new(); nb];
    let mut post_in: Vec<Vec<T>> = vec![Vec::new(); nb];
    let mut final_x: Vec<T> = Vec::new();
    for st in states {
        let nl = build_neighbors_cells(&st.positions, cfg.cutoff);
        let (_, _, caches, _) = reference_energy(&st.positions, &st.types, params, &nl, Aggregation::Scatter)?;
        let mut x = embed(&st.types, params);
        for (t, bc) in caches.blocks.iter().enumerate() {
            block_in[t].extend_from_slice(&x);
            post_in[t].extend_from_slice(&bc.h);
            for (a, b) in x.iter_mut().zip(bc.post.output()) {
                *a += *b;
            }
        }
        final_x.extend_from_slice(&x);
    }
    let node_rows = final_x.len() / d.max(1);
    if node_rows < MIN_CALIBRATION_ROWS {
        return Err(Error::InvalidInput(format!(
            "calibration states provide {node_rows} atoms, at least {MIN_CALIBRATION_ROWS} are needed"
        )));
    }

    let k = cfg.rbf_dim;
    let rbf = params.rbf();
    let mut basis = Vec::with_capacity(opts.samples * k);
    for _ in 0..opts.samples {
        let dist: f64 = rng.gen_range(0.0..cfg.cutoff);
        basis.extend(rbf_expand(T::lit(dist), rbf));
    }

    let mut out = params.clone();
    let mut reports = Vec::new();
    for t in 0..nb {
        let rows = subsample(&block_in[t], d, opts.samples, &mut rng);
        quantize_mlp(&mut out.blocks[t].pre, &rows, &format!("block{t}.pre"), &mut reports)?;
        quantize_mlp(&mut out.blocks[t].filter, &basis, &format!("block{t}.filter"), &mut reports)?;
        let rows = subsample(&post_in[t], d, opts.samples, &mut rng);
        quantize_mlp(&mut out.blocks[t].post, &rows, &format!("block{t}.post"), &mut reports)?;
    }
    let rows = subsample(&final_x, d, opts.samples, &mut rng);
    quantize_mlp(&mut out.readout, &rows, "readout", &mut reports)?;
    out.validate()?;
    Ok((out, reports))
}

/// At most `count` rows of `data`, chosen without replacement in ascending order.
fn subsample<T: Real>(data: &[T], width: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let n = data.len() / width;
    if n <= count {
        return data.to_vec();
    }
    let mut idx = sample(rng, n, count).into_vec();
    idx.sort_unstable();
    let mut out = Vec::with_capacity(count * width);
    for i in idx {
        out.extend_from_slice(&data[i * width..(i + 1) * width]);
    }
    out
}

fn quantize_mlp<T: Real>(mlp: &mut Mlp<T>, inputs: &[T], prefix: &str, reports: &mut Vec<LayerReport>) -> Result<()> {
    let rows = inputs.len() / mlp.in_dim();
    let mut cache = MlpCache::new();
    mlp.forward_rows(inputs, rows, &mut cache);
    let n = mlp.layers().len();
    let mut quantized = Vec::with_capacity(n);
    for l in 0..n {
        let layer_in: Vec<f64> = if l == 0 {
            inputs.iter().map(|v| v.as_f64()).collect()
        } else {
            cache.activation(l - 1).iter().map(|v| v.as_f64()).collect()
        };
        let layer = &mlp.layers()[l];
        let calib = CalibrationSet::new(layer.in_dim(), layer_in)?;
        let (weight, bias) = layer_weights(layer);
        let q = quantize_layer(&weight, &bias, layer.out_dim(), layer.in_dim(), &calib)?;
        let name = if n == 1 { prefix.to_string() } else { format!("{prefix}.{l}") };
        reports.push(LayerReport {
            name,
            per_channel_error: q.per_channel_error,
            per_tensor_error: q.per_tensor_error,
        });
        quantized.push(q.layer);
    }
    for (slot, q) in mlp.layers_mut().iter_mut().zip(quantized) {
        *slot = Layer::Half(q);
    }
    Ok(())
}

fn layer_weights<T: Real>(layer: &Layer<T>) -> (Vec<f64>, Vec<f64>) {
    match layer {
        Layer::Full(l) => (
            l.weight().iter().map(|v| v.as_f64()).collect(),
            l.bias().iter().map(|v| v.as_f64()).collect(),
        ),
        Layer::Half(q) => (
            q.dequantized().iter().map(|&v| v as f64).collect(),
            q.bias().iter().map(|&v| v as f64).collect(),
        ),
    }
}
