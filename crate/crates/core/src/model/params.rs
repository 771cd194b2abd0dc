use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::{Layer, Linear, Mlp};
use super::rbf::RbfSpec;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::Real;

/// Weights of one interaction block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    /// Node-wise `D -> D` linear map applied before the gather.
    pub pre: Mlp<T>,
    /// `D_r -> filter_hidden -> D`.
    pub filter: Mlp<T>,
    /// `D -> D -> D` update network added to the residual.
    pub post: Mlp<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    rbf: RbfSpec,
    pub embedding: Matrix<T>,
    pub blocks: Vec<BlockParams<T>>,
    /// `D -> readout_hidden -> 1` per-atom energy head.
    pub readout: Mlp<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn new(config: ModelConfig, embedding: Matrix<T>, blocks: Vec<BlockParams<T>>, readout: Mlp<T>) -> Result<Self> {
        config.validate()?;
        let p = Self {
            config,
            rbf: config.rbf_spec(),
            embedding,
            blocks,
            readout,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn rbf(&self) -> &RbfSpec {
        &self.rbf
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_quantized(&self) -> bool {
        self.readout.is_quantized()
            || self
                .blocks
                .iter()
                .any(|b| b.pre.is_quantized() || b.filter.is_quantized() || b.post.is_quantized())
    }

    /// Every affine layer with its tensor-name prefix, in file order.
    pub fn named_layers(&self) -> Vec<(String, &Layer<T>)> {
        let mut out = Vec::new();
        for (t, b) in self.blocks.iter().enumerate() {
            for (name, mlp) in [("pre", &b.pre), ("filter", &b.filter), ("post", &b.post)] {
                push_layers(&mut out, &format!("block{t}.{name}"), mlp);
            }
        }
        push_layers(&mut out, "readout", &self.readout);
        out
    }

    /// Checks shapes against the config and that all values are finite.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        if (self.embedding.rows(), self.embedding.cols()) != (c.num_atom_types, c.hidden_dim) {
            return Err(Error::load(
                "embedding",
                format!(
                    "shape {}x{}, expected {}x{}",
                    self.embedding.rows(),
                    self.embedding.cols(),
                    c.num_atom_types,
                    c.hidden_dim
                ),
            ));
        }
        if !self.embedding.is_finite() {
            return Err(Error::load("embedding", "non-finite entries"));
        }
        if self.blocks.len() != c.num_blocks {
            return Err(Error::Config(format!(
                "{} blocks present, config wants {}",
                self.blocks.len(),
                c.num_blocks
            )));
        }
        let d = c.hidden_dim;
        let expected = |name: &str| -> Vec<(usize, usize)> {
            match name {
                "pre" => vec![(d, d)],
                "filter" => vec![(c.filter_hidden_dim, c.rbf_dim), (d, c.filter_hidden_dim)],
                "post" => vec![(d, d), (d, d)],
                _ => vec![(c.readout_hidden_dim, d), (1, c.readout_hidden_dim)],
            }
        };
        let mut groups: Vec<(String, &Mlp<T>, Vec<(usize, usize)>)> = Vec::new();
        for (t, b) in self.blocks.iter().enumerate() {
            groups.push((format!("block{t}.pre"), &b.pre, expected("pre")));
            groups.push((format!("block{t}.filter"), &b.filter, expected("filter")));
            groups.push((format!("block{t}.post"), &b.post, expected("post")));
        }
        groups.push(("readout".into(), &self.readout, expected("readout")));
        for (prefix, mlp, shapes) in groups {
            if mlp.layers().len() != shapes.len() {
                return Err(Error::load(
                    &prefix,
                    format!("{} layers, expected {}", mlp.layers().len(), shapes.len()),
                ));
            }
            for (l, (layer, &(o, i))) in mlp.layers().iter().zip(&shapes).enumerate() {
                let name = layer_name(&prefix, mlp.layers().len(), l);
                if (layer.out_dim(), layer.in_dim()) != (o, i) {
                    return Err(Error::load(
                        format!("{name}.weight"),
                        format!("shape {}x{}, expected {o}x{i}", layer.out_dim(), layer.in_dim()),
                    ));
                }
                if !layer_is_finite(layer) {
                    return Err(Error::load(format!("{name}.weight"), "non-finite entries"));
                }
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config,
            rbf: self.rbf.clone(),
            embedding: self.embedding.cast(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    pre: b.pre.cast(),
                    filter: b.filter.cast(),
                    post: b.post.cast(),
                })
                .collect(),
            readout: self.readout.cast(),
        }
    }
}

/// Tensor-name prefix of layer `l` in an MLP with `n` layers.
pub(crate) fn layer_name(prefix: &str, n: usize, l: usize) -> String {
    if n == 1 {
        prefix.to_string()
    } else {
        format!("{prefix}.{l}")
    }
}

fn push_layers<'a, T: Real>(out: &mut Vec<(String, &'a Layer<T>)>, prefix: &str, mlp: &'a Mlp<T>) {
    let n = mlp.layers().len();
    for (l, layer) in mlp.layers().iter().enumerate() {
        out.push((layer_name(prefix, n, l), layer));
    }
}

fn layer_is_finite<T: Real>(layer: &Layer<T>) -> bool {
    match layer {
        Layer::Full(l) => l.weight().iter().chain(l.bias()).all(|v| v.is_finite()),
        Layer::Half(q) => {
            q.dequantized().iter().all(|v| v.is_finite()) && q.bias().iter().all(|v| v.is_finite())
        }
    }
}

fn init_linear<T: Real>(rng: &mut ChaCha8Rng, out_dim: usize, in_dim: usize) -> Linear<T> {
    let bound = (3.0 / in_dim as f32).sqrt();
    let w = (0..out_dim * in_dim)
        .map(|_| T::from_f32_lossless(rng.gen_range(-bound..bound)))
        .collect();
    let b = (0..out_dim)
        .map(|_| T::from_f32_lossless(rng.gen_range(-0.1f32..0.1)))
        .collect();
    Linear::new(out_dim, in_dim, w, b).expect("shapes from config")
}

fn init_mlp<T: Real>(rng: &mut ChaCha8Rng, dims: &[usize]) -> Mlp<T> {
    let layers = dims.windows(2).map(|w| init_linear(rng, w[1], w[0])).collect();
    Mlp::from_linears(layers).expect("consistent widths")
}

/// Deterministic random parameters with variance-scaled uniform weights.
///
/// Values are drawn in f32 and widened, so the f32 and f64 models built from one
/// seed hold identical numbers.
pub fn init_params<T: Real>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = config;
    let d = c.hidden_dim;
    let s3 = 3f32.sqrt();
    let embedding = Matrix::from_fn(c.num_atom_types, d, |_, _| T::from_f32_lossless(rng.gen_range(-s3..s3)));
    let blocks = (0..c.num_blocks)
        .map(|_| BlockParams {
            pre: init_mlp(&mut rng, &[d, d]),
            filter: init_mlp(&mut rng, &[c.rbf_dim, c.filter_hidden_dim, d]),
            post: init_mlp(&mut rng, &[d, d, d]),
        })
        .collect();
    let readout = init_mlp(&mut rng, &[d, c.readout_hidden_dim, 1]);
    ModelParams::new(*config, embedding, blocks, readout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            hidden_dim: 8,
            rbf_dim: 5,
            num_blocks: 2,
            cutoff: 1.0,
            num_atom_types: 3,
            filter_hidden_dim: 6,
            readout_hidden_dim: 4,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = init_params::<f32>(&small(), 7).unwrap();
        let b = init_params::<f32>(&small(), 7).unwrap();
        let c = init_params::<f32>(&small(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn shapes_follow_config() {
        let p = init_params::<f64>(&small(), 1).unwrap();
        assert!(p.validate().is_ok());
        assert_eq!(p.blocks.len(), 2);
        assert_eq!(p.blocks[0].filter.widths(), vec![6, 8]);
        assert_eq!(p.readout.out_dim(), 1);
        let names: Vec<String> = p.named_layers().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "block0.pre");
        assert_eq!(names[1], "block0.filter.0");
        assert_eq!(names.last().unwrap(), "readout.1");
        assert_eq!(names.len(), 2 * 5 + 2);
    }

    #[test]
    fn widening_preserves_values() {
        let a = init_params::<f32>(&small(), 3).unwrap();
        let b = init_params::<f64>(&small(), 3).unwrap();
        assert_eq!(a.cast::<f64>(), b);
    }
}
