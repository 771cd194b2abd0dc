use half::f16;

use crate::error::{Error, Result};
use crate::linalg::{matmul_acc, transpose};

/// Half-precision weights with a per-output-channel scale and a full-precision bias.
///
/// The dequantized row `k` is `scale[k] * weight[k]`. Both orientations of the
/// dequantized matrix are kept so forward and input-gradient products run as
/// plain f32 matmuls.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLinear {
    in_dim: usize,
    out_dim: usize,
    weight: Vec<f16>,
    scale: Vec<f32>,
    bias: Vec<f32>,
    deq: Vec<f32>,
    deq_t: Vec<f32>,
}

impl QuantizedLinear {
    pub fn new(out_dim: usize, in_dim: usize, weight: Vec<f16>, scale: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weight.len() != out_dim * in_dim || scale.len() != out_dim || bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "quantized layer {out_dim}x{in_dim}: got {} weights, {} scales, {} biases",
                weight.len(),
                scale.len(),
                bias.len()
            )));
        }
        if let Some(s) = scale.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidInput(format!("quantization scale must be positive and finite, got {s}")));
        }
        let deq: Vec<f32> = weight
            .iter()
            .enumerate()
            .map(|(i, w)| scale[i / in_dim.max(1)] * w.to_f32())
            .collect();
        let deq_t = transpose(&deq, out_dim, in_dim);
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            scale,
            bias,
            deq,
            deq_t,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight(&self) -> &[f16] {
        &self.weight
    }

    pub fn scale(&self) -> &[f32] {
        &self.scale
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Row-major `out x in` dequantized weights.
    pub fn dequantized(&self) -> &[f32] {
        &self.deq
    }

    pub(crate) fn forward_rows_f32(&self, input: &[f32], rows: usize, out: &mut Vec<f32>) {
        out.clear();
        for _ in 0..rows {
            out.extend_from_slice(&self.bias);
        }
        matmul_acc(input, rows, self.in_dim, &self.deq_t, self.out_dim, out);
    }

    pub(crate) fn vjp_rows_f32(&self, grad_out: &[f32], rows: usize, grad_in: &mut Vec<f32>) {
        grad_in.clear();
        grad_in.resize(rows * self.in_dim, 0.0);
        matmul_acc(grad_out, rows, self.out_dim, &self.deq, self.in_dim, grad_in);
    }
}
