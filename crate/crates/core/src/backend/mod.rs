//! Force backends and the ablation switchboard between them.

pub(crate) mod common;
pub mod flash;
pub mod reference;

pub use common::{compute_distances, compute_edge_geometry, unit_direction, EdgeGeometry};
pub use flash::{flash_forward_backward, plan_tasks, FlashOptions, Task};
pub use reference::{
    cfconv_forward, interaction_block, radial_basis_matrix, reference_energy, reference_forces, Aggregation,
    ReferenceBlockCache, ReferenceCaches,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::neighbor::{group_by_destination, group_by_source, NeighborList};
use crate::real::Real;
use crate::traffic::TrafficReport;

/// Ablation switches: fused edge evaluation, segmented reductions, half-precision MLPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendMode {
    pub fused: bool,
    pub segred: bool,
    pub quant: bool,
}

impl BackendMode {
    pub const REFERENCE: Self = Self {
        fused: false,
        segred: false,
        quant: false,
    };
    pub const FLASH: Self = Self {
        fused: true,
        segred: true,
        quant: false,
    };

    pub fn is_reference(&self) -> bool {
        !self.fused && !self.segred
    }

    /// Short label such as `fused+segred` or `reference`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.fused {
            parts.push("fused");
        }
        if self.segred {
            parts.push("segred");
        }
        if parts.is_empty() {
            parts.push("reference");
        }
        if self.quant {
            parts.push("quant");
        }
        parts.join("+")
    }

    /// All eight flag combinations.
    pub fn all() -> Vec<Self> {
        let mut out = Vec::new();
        for quant in [false, true] {
            for fused in [false, true] {
                for segred in [false, true] {
                    out.push(Self { fused, segred, quant });
                }
            }
        }
        out
    }
}

impl std::str::FromStr for BackendMode {
    type Err = Error;

    /// Inverse of [`BackendMode::label`]; `flash` is accepted for `fused+segred`.
    fn from_str(s: &str) -> Result<Self> {
        let mut mode = Self::REFERENCE;
        for part in s.split('+') {
            match part.trim() {
                "reference" => {}
                "flash" => {
                    mode.fused = true;
                    mode.segred = true;
                }
                "fused" => mode.fused = true,
                "segred" => mode.segred = true,
                "quant" => mode.quant = true,
                other => {
                    return Err(Error::Config(format!(
                        "unknown backend mode part {other:?} in {s:?}; expected reference, fused, segred, flash or quant"
                    )))
                }
            }
        }
        Ok(mode)
    }
}

/// Result of one energy and force evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyForces<T> {
    /// Total energy, accumulated in f64.
    pub energy: f64,
    pub atom_energies: Vec<T>,
    pub forces: Vec<[T; 3]>,
    pub traffic: TrafficReport,
    /// Wall time spent building segment layouts.
    pub index_seconds: f64,
}

/// Energy and forces under `mode`.
///
/// `params` must already be quantized when `mode.quant` is set. With fusion and
/// segmented reduction both off this is exactly the reference pipeline.
pub fn flash_energy_forces<T: Real>(
    positions: &[[T; 3]],
    types: &[usize],
    params: &ModelParams<T>,
    nl: &NeighborList,
    mode: BackendMode,
    opts: &FlashOptions,
) -> Result<EnergyForces<T>> {
    if mode.quant != params.is_quantized() {
        return Err(Error::Config(format!(
            "mode {} needs {} parameters",
            mode.label(),
            if mode.quant { "quantized" } else { "full-precision" }
        )));
    }
    if mode.fused {
        let r = flash_forward_backward(positions, types, params, nl, mode.segred, opts)?;
        return Ok(EnergyForces {
            energy: r.energy,
            atom_energies: r.atom_energies,
            forces: r.forces,
            traffic: r.traffic,
            index_seconds: r.index_seconds,
        });
    }
    let t0 = std::time::Instant::now();
    let aggregation = if mode.segred {
        let n = positions.len();
        Aggregation::Segmented {
            dst: group_by_destination(nl, n),
            src: group_by_source(nl, n),
        }
    } else {
        Aggregation::Scatter
    };
    let index_seconds = t0.elapsed().as_secs_f64();
    let (energy, atom_energies, mut caches, forward) = reference_energy(positions, types, params, nl, aggregation)?;
    let (forces, backward) = reference_forces(&mut caches, params);
    Ok(EnergyForces {
        energy,
        atom_energies,
        forces,
        traffic: forward + backward,
        index_seconds,
    })
}
