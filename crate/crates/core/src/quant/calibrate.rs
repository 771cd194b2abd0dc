use half::f16;

use super::layer::QuantizedLinear;
use crate::error::{Error, Result};

/// Number of geometric scale candidates per grid.
pub const SCALE_CANDIDATES: usize = 33;

/// Representative inputs of one layer, row-major `count x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    width: usize,
    samples: Vec<f64>,
}

impl CalibrationSet {
    pub fn new(width: usize, samples: Vec<f64>) -> Result<Self> {
        if width == 0 || samples.is_empty() || samples.len() % width != 0 {
            return Err(Error::InvalidInput(format!(
                "calibration set needs a nonempty multiple of width {width}, got {} values",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("calibration samples must be finite".into()));
        }
        Ok(Self { width, samples })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn count(&self) -> usize {
        self.samples.len() / self.width
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `X^T X`, so that `|delta . X^T|^2 = delta^T G delta`.
    fn gram(&self) -> Vec<f64> {
        let n = self.width;
        let mut g = vec![0.0; n * n];
        for x in self.samples.chunks_exact(n) {
            for i in 0..n {
                let xi = x[i];
                if xi == 0.0 {
                    continue;
                }
                let row = &mut g[i * n..(i + 1) * n];
                for j in 0..n {
                    row[j] += xi * x[j];
                }
            }
        }
        g
    }
}

/// A quantized layer together with its calibrated output errors.
#[derive(Debug, Clone)]
pub struct QuantizedLayer {
    pub layer: QuantizedLinear,
    /// Summed calibration error with the chosen per-channel scales.
    pub per_channel_error: f64,
    /// Best calibration error achievable with one scale for the whole tensor.
    pub per_tensor_error: f64,
}

/// Power of two nearest (in log space) to `absmax`.
pub fn scale_seed(absmax: f64) -> f64 {
    if absmax > 0.0 && absmax.is_finite() {
        absmax.log2().round().exp2()
    } else {
        1.0
    }
}

/// Candidates `2^(3(i-16)/16) * seed`, ascending, spanning `seed/8 ..= 8 seed`.
pub fn scale_grid(seed: f64) -> Vec<f32> {
    (0..SCALE_CANDIDATES)
        .map(|i| {
            let e = 3.0 * (i as f64 - 16.0) / 16.0;
            (e.exp2() * seed) as f32
        })
        .collect()
}

fn quantize_row(row: &[f64], scale: f32, q: &mut [f16]) {
    let s = scale as f64;
    for (qi, &w) in q.iter_mut().zip(row) {
        *qi = f16::from_f64(w / s);
    }
}

fn row_error(row: &[f64], scale: f32, gram: &[f64], q: &mut [f16], delta: &mut [f64]) -> f64 {
    quantize_row(row, scale, q);
    for ((d, qi), &w) in delta.iter_mut().zip(q.iter()).zip(row) {
        *d = (scale * qi.to_f32()) as f64 - w;
    }
    let n = row.len();
    let mut err = 0.0;
    for i in 0..n {
        if delta[i] == 0.0 {
            continue;
        }
        let gi = &gram[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            acc += gi[j] * delta[j];
        }
        err += delta[i] * acc;
    }
    if err.is_finite() {
        err.max(0.0)
    } else {
        f64::INFINITY
    }
}

/// Chooses per-output-channel scales that minimize `|(deq_k - w_k) X^T|^2`.
///
/// Each channel searches its own grid (seeded at its absmax) together with the
/// grid a single tensor-wide scale would search, so the per-channel error can
/// never exceed the per-tensor one. Ties go to the smaller scale. A zero row
/// gets scale 1 and zero weights.
pub fn quantize_layer(
    weight: &[f64],
    bias: &[f64],
    out_dim: usize,
    in_dim: usize,
    calib: &CalibrationSet,
) -> Result<QuantizedLayer> {
    if weight.len() != out_dim * in_dim || bias.len() != out_dim {
        return Err(Error::Shape(format!(
            "layer {out_dim}x{in_dim} given {} weights and {} biases",
            weight.len(),
            bias.len()
        )));
    }
    if calib.width() != in_dim {
        return Err(Error::Shape(format!(
            "calibration width {} does not match layer input {in_dim}",
            calib.width()
        )));
    }
    let gram = calib.gram();
    let absmax = weight.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let tensor_grid = if absmax > 0.0 { scale_grid(scale_seed(absmax)) } else { vec![1.0] };

    let mut q = vec![f16::ZERO; in_dim];
    let mut delta = vec![0.0; in_dim];
    // tensor_err[c][k]: error of channel k under tensor candidate c
    let mut tensor_err = vec![vec![0.0; out_dim]; tensor_grid.len()];
    let mut scales = vec![1.0f32; out_dim];
    let mut channel_err = vec![0.0; out_dim];
    let mut stored = vec![f16::ZERO; out_dim * in_dim];

    for k in 0..out_dim {
        let row = &weight[k * in_dim..(k + 1) * in_dim];
        for (c, &s) in tensor_grid.iter().enumerate() {
            tensor_err[c][k] = row_error(row, s, &gram, &mut q, &mut delta);
        }
        let row_max = row.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        if row_max == 0.0 {
            continue;
        }
        let mut candidates: Vec<(f32, f64)> = scale_grid(scale_seed(row_max))
            .into_iter()
            .map(|s| (s, row_error(row, s, &gram, &mut q, &mut delta)))
            .collect();
        candidates.extend(tensor_grid.iter().enumerate().map(|(c, &s)| (s, tensor_err[c][k])));
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = candidates[0];
        for &cand in &candidates[1..] {
            if cand.1 < best.1 {
                best = cand;
            }
        }
        scales[k] = best.0;
        channel_err[k] = best.1;
        quantize_row(row, best.0, &mut stored[k * in_dim..(k + 1) * in_dim]);
    }

    let per_tensor_error = tensor_err
        .iter()
        .map(|errs| errs.iter().sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let per_channel_error = channel_err.iter().sum();
    let bias32 = bias.iter().map(|&b| b as f32).collect();
    Ok(QuantizedLayer {
        layer: QuantizedLinear::new(out_dim, in_dim, stored, scales, bias32)?,
        per_channel_error,
        per_tensor_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn calib(rng: &mut ChaCha8Rng, count: usize, width: usize) -> CalibrationSet {
        CalibrationSet::new(width, (0..count * width).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn grid_spans_an_eighth_to_eight_times_seed() {
        let g = scale_grid(4.0);
        assert_eq!(g.len(), 33);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[16], 4.0);
        assert_eq!(g[32], 32.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(scale_seed(3.0), 4.0);
        assert_eq!(scale_seed(0.7), 0.5);
    }

    #[test]
    fn half_representable_weights_have_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w: Vec<f64> = (0..6 * 5).map(|_| f16::from_f64(rng.gen_range(-2.0..2.0)).to_f64()).collect();
        let c = calib(&mut rng, 32, 5);
        let q = quantize_layer(&w, &[0.0; 6], 6, 5, &c).unwrap();
        assert_eq!(q.per_channel_error, 0.0);
        for (a, b) in q.layer.dequantized().iter().zip(&w) {
            assert_eq!(*a as f64, *b);
        }
    }

    #[test]
    fn zero_layer_gets_unit_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = calib(&mut rng, 32, 3);
        let q = quantize_layer(&[0.0; 6], &[0.5, -0.5], 2, 3, &c).unwrap();
        assert_eq!(q.layer.scale(), &[1.0, 1.0]);
        assert!(q.layer.weight().iter().all(|w| w.to_f32() == 0.0));
        assert_eq!(q.per_channel_error, 0.0);
        assert_eq!(q.per_tensor_error, 0.0);
    }

    #[test]
    fn disparate_channels_beat_a_single_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let in_dim = 16;
        let mut w = Vec::new();
        for mag in [1e3, 1e-3] {
            w.extend((0..in_dim).map(|_| mag * rng.gen_range(-1.0..1.0)));
        }
        let c = calib(&mut rng, 64, in_dim);
        let q = quantize_layer(&w, &[0.0; 2], 2, in_dim, &c).unwrap();
        assert!(q.per_channel_error < q.per_tensor_error);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = calib(&mut rng, 4, 3);
        assert!(quantize_layer(&[0.0; 5], &[0.0; 2], 2, 3, &c).is_err());
        assert!(quantize_layer(&[0.0; 8], &[0.0; 2], 2, 4, &c).is_err());
        assert!(CalibrationSet::new(3, vec![]).is_err());
    }
}
