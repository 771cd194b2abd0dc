//! The continuous-filter interaction model shared by both force backends:
//! configuration, radial basis, activation, MLP primitives and parameters.

pub(crate) mod activation;
mod io;
mod mlp;
mod params;
mod rbf;

pub use activation::{shifted_softplus, shifted_softplus_grad};
pub use io::{load_params, load_params_checked, params_from_bytes, params_to_bytes, save_params, PARAMS_MAGIC};
pub use mlp::{Layer, Linear, Mlp, MlpCache};
pub use params::{init_params, BlockParams, ModelParams};
pub use rbf::{rbf_expand, rbf_expand_and_grad_into, rbf_expand_into, rbf_grad, rbf_grad_into, RbfSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub rbf_dim: usize,
    pub num_blocks: usize,
    /// Neighbor cutoff in nm.
    pub cutoff: f64,
    pub num_atom_types: usize,
    pub filter_hidden_dim: usize,
    pub readout_hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            rbf_dim: 64,
            num_blocks: 3,
            cutoff: 1.5,
            num_atom_types: 4,
            filter_hidden_dim: 128,
            readout_hidden_dim: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("rbf_dim", self.rbf_dim),
            ("num_blocks", self.num_blocks),
            ("num_atom_types", self.num_atom_types),
            ("filter_hidden_dim", self.filter_hidden_dim),
            ("readout_hidden_dim", self.readout_hidden_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(Error::Config(format!(
                "cutoff must be a positive length, got {}",
                self.cutoff
            )));
        }
        Ok(())
    }

    /// Radial basis matching this configuration.
    pub fn rbf_spec(&self) -> RbfSpec {
        RbfSpec::uniform(self.rbf_dim, self.cutoff)
    }
}
