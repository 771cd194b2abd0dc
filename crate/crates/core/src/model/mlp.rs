//! Dense MLP forward and input-gradient primitives.
//!
//! An [`Mlp`] alternates affine layers with shifted softplus; the last layer has
//! no activation. Forward passes operate on batches of rows and leave the
//! pre-activations in an [`MlpCache`], which is all `backward_input_rows` needs.
//! Weight gradients are never formed.

use half::f16;

use crate::error::{Error, Result};
use crate::linalg::{matmul_acc, transpose};
use crate::quant::QuantizedLinear;
use crate::real::Real;

/// Full-precision affine layer `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    in_dim: usize,
    out_dim: usize,
    weight: Vec<T>,
    weight_t: Vec<T>,
    bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(out_dim: usize, in_dim: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weight.len() != out_dim * in_dim {
            return Err(Error::Shape(format!(
                "weight has {} entries, expected {out_dim}x{in_dim}",
                weight.len()
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "bias has {} entries, expected {out_dim}",
                bias.len()
            )));
        }
        let weight_t = transpose(&weight, out_dim, in_dim);
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            weight_t,
            bias,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut w = vec![T::zero(); dim * dim];
        for i in 0..dim {
            w[i * dim + i] = T::one();
        }
        Self::new(dim, dim, w, vec![T::zero(); dim]).expect("square identity")
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Row-major `out x in` weights.
    pub fn weight(&self) -> &[T] {
        &self.weight
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    fn forward_rows(&self, input: &[T], rows: usize, out: &mut Vec<T>) {
        out.clear();
        for _ in 0..rows {
            out.extend_from_slice(&self.bias);
        }
        matmul_acc(input, rows, self.in_dim, &self.weight_t, self.out_dim, out);
    }

    fn vjp_rows(&self, grad_out: &[T], rows: usize, grad_in: &mut Vec<T>) {
        grad_in.clear();
        grad_in.resize(rows * self.in_dim, T::zero());
        matmul_acc(grad_out, rows, self.out_dim, &self.weight, self.in_dim, grad_in);
    }
}

/// One affine layer, either full precision or half-precision storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Full(Linear<T>),
    Half(QuantizedLinear),
}

impl<T: Real> Layer<T> {
    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Full(l) => l.in_dim,
            Layer::Half(q) => q.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Full(l) => l.out_dim,
            Layer::Half(q) => q.out_dim(),
        }
    }

    pub fn is_half(&self) -> bool {
        matches!(self, Layer::Half(_))
    }

    fn forward_rows(&self, input: &[T], rows: usize, out: &mut Vec<T>, scratch: &mut HalfScratch) {
        match self {
            Layer::Full(l) => l.forward_rows(input, rows, out),
            Layer::Half(q) => {
                // activations enter the layer in half precision, accumulate in f32
                scratch.input.clear();
                scratch
                    .input
                    .extend(input[..rows * q.in_dim()].iter().map(|v| f16::from_f32(v.to_f32_lossy()).to_f32()));
                q.forward_rows_f32(&scratch.input, rows, &mut scratch.output);
                out.clear();
                out.extend(scratch.output.iter().map(|&v| T::from_f32_lossless(v)));
            }
        }
    }

    fn vjp_rows(&self, grad_out: &[T], rows: usize, grad_in: &mut Vec<T>, scratch: &mut HalfScratch) {
        match self {
            Layer::Full(l) => l.vjp_rows(grad_out, rows, grad_in),
            Layer::Half(q) => {
                scratch.input.clear();
                scratch.input.extend(grad_out.iter().map(|v| v.to_f32_lossy()));
                q.vjp_rows_f32(&scratch.input, rows, &mut scratch.output);
                grad_in.clear();
                grad_in.extend(scratch.output.iter().map(|&v| T::from_f32_lossless(v)));
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
struct HalfScratch {
    input: Vec<f32>,
    output: Vec<f32>,
}

/// Feed-forward stack of [`Layer`]s with shifted softplus between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
}

/// Pre-activations of a forward pass plus reusable scratch buffers.
#[derive(Debug, Clone, Default)]
pub struct MlpCache<T> {
    rows: usize,
    dims: Vec<usize>,
    /// `pre[l]` is the affine output of layer `l`; the last entry is the MLP output.
    pre: Vec<Vec<T>>,
    act: Vec<Vec<T>>,
    grad_a: Vec<T>,
    grad_b: Vec<T>,
    half: HalfScratch,
}

impl<T: Real> MlpCache<T> {
    pub fn new() -> Self {
        Self {
            rows: 0,
            dims: Vec::new(),
            pre: Vec::new(),
            act: Vec::new(),
            grad_a: Vec::new(),
            grad_b: Vec::new(),
            half: HalfScratch::default(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Output rows of the most recent forward pass.
    pub fn output(&self) -> &[T] {
        self.pre.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Pre-activation of hidden layer `l` from the most recent forward pass.
    pub fn pre_activation(&self, l: usize) -> &[T] {
        &self.pre[l]
    }

    /// Activated output of hidden layer `l`.
    pub fn activation(&self, l: usize) -> &[T] {
        &self.act[l]
    }

    /// A cache for a single affine layer, whose input gradient needs no
    /// activations, so no forward pass has to be kept or replayed.
    pub fn for_affine(mlp: &Mlp<T>, rows: usize) -> Self {
        assert_eq!(mlp.layers().len(), 1, "only single-layer networks have stateless backward");
        let mut c = Self::new();
        c.rows = rows;
        c.dims = vec![mlp.in_dim(), mlp.out_dim()];
        c.pre = vec![Vec::new()];
        c
    }

    /// Frees everything `backward_input_rows` does not read: activations, the
    /// output rows and scratch. Only hidden pre-activations survive.
    pub fn compact(&mut self) {
        for a in &mut self.act {
            *a = Vec::new();
        }
        if let Some(last) = self.pre.last_mut() {
            *last = Vec::new();
        }
        self.grad_a = Vec::new();
        self.grad_b = Vec::new();
        self.half = HalfScratch::default();
    }

    /// Elements held by cached activations.
    pub fn cached_elems(&self) -> usize {
        self.pre.iter().map(Vec::len).sum::<usize>() + self.act.iter().map(Vec::len).sum::<usize>()
    }
}

impl<T: Real> Mlp<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("an MLP needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {l} outputs {} features but layer {} expects {}",
                    pair[0].out_dim(),
                    l + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn from_linears(layers: Vec<Linear<T>>) -> Result<Self> {
        Self::new(layers.into_iter().map(Layer::Full).collect())
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// Widths of each layer output, e.g. `[hidden, out]`.
    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Layer::out_dim).collect()
    }

    pub fn is_quantized(&self) -> bool {
        self.layers.iter().any(Layer::is_half)
    }

    /// Batched forward over `rows` input rows; returns the output rows.
    pub fn forward_rows<'c>(&self, input: &[T], rows: usize, cache: &'c mut MlpCache<T>) -> &'c [T] {
        assert_eq!(
            input.len(),
            rows * self.in_dim(),
            "MLP input has wrong width for {rows} rows"
        );
        let n = self.layers.len();
        cache.rows = rows;
        cache.dims.clear();
        cache.dims.push(self.in_dim());
        cache.dims.extend(self.widths());
        cache.pre.resize_with(n, Vec::new);
        cache.act.resize_with(n - 1, Vec::new);
        for l in 0..n {
            let (pre_done, pre_rest) = cache.pre.split_at_mut(l);
            let out = &mut pre_rest[0];
            let layer_in: &[T] = if l == 0 { input } else { &cache.act[l - 1] };
            let _ = pre_done;
            self.layers[l].forward_rows(layer_in, rows, out, &mut cache.half);
            if l + 1 < n {
                let act = &mut cache.act[l];
                act.resize(out.len(), T::zero());
                T::shifted_softplus_slice(out, act);
            }
        }
        &cache.pre[n - 1]
    }

    /// Gradient of `sum(grad_out * output)` with respect to the input rows.
    pub fn backward_input_rows(&self, cache: &mut MlpCache<T>, grad_out: &[T], grad_in: &mut Vec<T>) {
        let n = self.layers.len();
        let rows = cache.rows;
        assert!(
            cache.dims.len() == n + 1
                && cache.dims[0] == self.in_dim()
                && cache.dims[1..].iter().zip(self.widths()).all(|(a, b)| *a == b),
            "MLP cache does not belong to this network"
        );
        assert_eq!(grad_out.len(), rows * self.out_dim(), "grad_out has wrong shape");
        let mut g = std::mem::take(&mut cache.grad_a);
        let mut next = std::mem::take(&mut cache.grad_b);
        g.clear();
        g.extend_from_slice(grad_out);
        for l in (0..n).rev() {
            self.layers[l].vjp_rows(&g, rows, &mut next, &mut cache.half);
            if l > 0 {
                T::mul_softplus_grad_slice(&cache.pre[l - 1], &mut next);
            }
            std::mem::swap(&mut g, &mut next);
        }
        grad_in.clear();
        grad_in.extend_from_slice(&g);
        cache.grad_a = g;
        cache.grad_b = next;
    }

    /// Single-vector forward returning the output and its cache.
    pub fn forward(&self, input: &[T]) -> (Vec<T>, MlpCache<T>) {
        let mut cache = MlpCache::new();
        let out = self.forward_rows(input, 1, &mut cache).to_vec();
        (out, cache)
    }

    pub fn backward_input(&self, cache: &mut MlpCache<T>, grad_out: &[T]) -> Vec<T> {
        let mut g = Vec::new();
        self.backward_input_rows(cache, grad_out, &mut g);
        g
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Full(l) => Layer::Full(
                    Linear::new(
                        l.out_dim,
                        l.in_dim,
                        l.weight.iter().map(|v| U::lit(v.as_f64())).collect(),
                        l.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
                    )
                    .expect("same shape"),
                ),
                Layer::Half(q) => Layer::Half(q.clone()),
            })
            .collect();
        Mlp { layers }
    }
}
