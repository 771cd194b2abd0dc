//! Run configuration files.
//!
//! ```toml
//! [model]
//! hidden_dim = 128
//!
//! [sim]
//! n_steps = 1000
//! n_replicas = 4
//!
//! [backend]
//! precision = "32bit"
//! fused = true
//! segred = true
//!
//! [paths]
//! system = "system.toml"
//! out = "run"
//! ```
//!
//! Relative paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::BackendMode;
use crate::error::{Error, Result};
use crate::md::SimConfig;
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Precision {
    #[default]
    #[serde(rename = "32bit")]
    Single,
    #[serde(rename = "64bit")]
    Double,
}

impl Precision {
    pub fn label(self) -> &'static str {
        match self {
            Precision::Single => "32bit",
            Precision::Double => "64bit",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "32bit" => Ok(Precision::Single),
            "64bit" => Ok(Precision::Double),
            _ => Err(Error::Config(format!("unknown precision {s:?}; expected 32bit or 64bit"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub precision: Precision,
    pub fused: bool,
    pub segred: bool,
    pub quant: bool,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            precision: Precision::Single,
            fused: true,
            segred: true,
            quant: false,
            workers: 0,
        }
    }
}

impl BackendConfig {
    pub fn mode(&self) -> BackendMode {
        BackendMode {
            fused: self.fused,
            segred: self.segred,
            quant: self.quant,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub system: Option<PathBuf>,
    /// Parameter file; without one the model is initialized from the run seed.
    pub params: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    /// Replica counts swept per backend mode.
    pub replicas: Vec<usize>,
    /// Timed steps per cell, after one warm-up step.
    pub steps: u64,
    /// Mode labels to sweep; empty sweeps all fused/segred combinations.
    pub modes: Vec<String>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            replicas: vec![1, 2, 4],
            steps: 10,
            modes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub sim: SimConfig,
    pub backend: BackendConfig,
    pub paths: PathsConfig,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.paths.system,
            &mut cfg.paths.params,
            &mut cfg.paths.out,
            &mut cfg.paths.resume,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sim.validate()?;
        if self.bench.replicas.iter().any(|&r| r == 0) {
            return Err(Error::Config("bench replica counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Checks that every input file exists before anything runs.
    pub fn check_inputs(&self) -> Result<()> {
        for p in [&self.paths.system, &self.paths.params, &self.paths.resume].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn system_path(&self) -> Result<&Path> {
        self.paths
            .system
            .as_deref()
            .ok_or_else(|| Error::Config("paths.system is not set".into()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_resolves_paths() {
        let text = r#"
[model]
hidden_dim = 32
num_blocks = 2

[sim]
n_steps = 10
seed = 4

[backend]
precision = "64bit"
fused = false

[paths]
system = "sys.toml"
out = "/tmp/run"
"#;
        let c = RunConfig::from_toml(text, Path::new("/data/cfg/run.toml")).unwrap();
        assert_eq!(c.model.hidden_dim, 32);
        assert_eq!(c.sim.n_steps, 10);
        assert_eq!(c.backend.precision, Precision::Double);
        assert_eq!(c.backend.mode(), BackendMode { fused: false, segred: true, quant: false });
        assert_eq!(c.paths.system.as_deref(), Some(Path::new("/data/cfg/sys.toml")));
        assert_eq!(c.out_dir(), PathBuf::from("/tmp/run"));
        let again = RunConfig::from_toml(&c.to_toml().unwrap(), Path::new("x.toml")).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let p = Path::new("c.toml");
        assert!(RunConfig::from_toml("[sim]\nsteps = 3\n", p).is_err());
        assert!(RunConfig::from_toml("[extra]\n", p).is_err());
        assert!(RunConfig::from_toml("[backend]\nprecision = \"16bit\"\n", p).is_err());
        assert!(RunConfig::from_toml("[sim]\ndt_fs = -1.0\n", p).is_err());
        assert!(RunConfig::from_toml("[bench]\nreplicas = [0]\n", p).is_err());
        assert!(RunConfig::from_toml("", p).is_ok());
    }

    #[test]
    fn missing_inputs_are_named() {
        let c = RunConfig::from_toml("[paths]\nparams = \"/nonexistent/p.bin\"\n", Path::new("c.toml")).unwrap();
        let msg = c.check_inputs().unwrap_err().to_string();
        assert!(msg.contains("/nonexistent/p.bin"));
    }
}
