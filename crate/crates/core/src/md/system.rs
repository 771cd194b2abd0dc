use std::path::Path;

use serde::{Deserialize, Serialize};

use super::prior::{Bond, PriorSpec};
use crate::error::{Error, Result};

/// The only energy unit the integrator's Boltzmann constant is expressed in.
pub const ENERGY_UNIT: &str = "kJ/mol";

/// Beads, their types and masses, starting coordinates, bonds and an optional
/// native reference structure. Lengths in nm, masses in amu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct System {
    pub energy_unit: String,
    pub beads: usize,
    pub types: Vec<usize>,
    pub masses: Vec<f64>,
    pub positions: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bonds: Vec<Bond>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native: Option<Vec<[f64; 3]>>,
}

impl System {
    /// A system with uniform masses, no bonds and no native structure.
    pub fn new(types: Vec<usize>, masses: Vec<f64>, positions: Vec<[f64; 3]>) -> Result<Self> {
        let s = Self {
            energy_unit: ENERGY_UNIT.into(),
            beads: types.len(),
            types,
            masses,
            positions,
            bonds: Vec::new(),
            native: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.beads;
        if self.energy_unit != ENERGY_UNIT {
            return Err(Error::Config(format!(
                "energy unit {:?} is not supported, use {ENERGY_UNIT:?}",
                self.energy_unit
            )));
        }
        for (what, len) in [
            ("types", self.types.len()),
            ("masses", self.masses.len()),
            ("positions", self.positions.len()),
        ] {
            if len != n {
                return Err(Error::Shape(format!("system declares {n} beads but lists {len} {what}")));
            }
        }
        if let Some(native) = &self.native {
            if native.len() != n {
                return Err(Error::Shape(format!("native structure has {} beads, expected {n}", native.len())));
            }
        }
        if let Some(i) = self.masses.iter().position(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidInput(format!("bead {i} has mass {}", self.masses[i])));
        }
        let coords = self.positions.iter().chain(self.native.iter().flatten());
        if coords.flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("coordinates must be finite".into()));
        }
        self.prior()?.check_indices(n)
    }

    pub fn prior(&self) -> Result<PriorSpec> {
        PriorSpec::new(self.bonds.clone())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("cannot serialize system: {e}")))
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.into(),
            reason: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}
