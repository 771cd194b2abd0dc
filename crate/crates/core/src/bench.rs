//! Throughput sweeps over replica counts and backend modes.

use std::fmt::Write as _;

use crate::backend::BackendMode;
use crate::config::BenchConfig;
use crate::error::{Error, Result};
use crate::md::{NullObserver, SimConfig, Simulation, System};
use crate::memory;
use crate::model::ModelParams;
use crate::real::Real;
use crate::traffic::{io_model_base, io_model_flash, IoDims};

pub const BENCH_SCHEMA: &str = "# schema: flashcg-bench v1";
pub const BENCH_COLUMNS: &str = "mode,precision,replicas,beads,mean_edges,steps,wall_ms_per_step,steps_mol_per_s,\
io_base_bytes,io_flash_bytes,io_ratio,peak_alloc_bytes,speedup";
/// Columns that depend on the host and are left out of reproducibility checks.
pub const BENCH_WALL_TIME_COLUMNS: &[&str] = &["wall_ms_per_step", "steps_mol_per_s", "peak_alloc_bytes", "speedup"];

/// One (mode, replica count) cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub mode: BackendMode,
    pub precision: &'static str,
    pub replicas: usize,
    pub beads: usize,
    /// Mean directed edges per replica and step.
    pub mean_edges: f64,
    pub steps: u64,
    pub wall_ms_per_step: f64,
    pub steps_mol_per_s: f64,
    /// Modeled bytes per step of the materializing and the fused pipeline,
    /// summed over replicas.
    pub io_base_bytes: u64,
    pub io_flash_bytes: u64,
    /// Peak heap growth during the timed steps; `None` without the counting allocator.
    pub peak_alloc_bytes: Option<usize>,
    /// Reference step time over this row's step time at the same replica count.
    pub speedup: f64,
}

impl BenchRow {
    pub fn io_ratio(&self) -> f64 {
        self.io_base_bytes as f64 / self.io_flash_bytes.max(1) as f64
    }
}

/// Modes named in `cfg.modes`, or the four fused/segred combinations.
pub fn bench_modes(cfg: &BenchConfig) -> Result<Vec<BackendMode>> {
    if cfg.modes.is_empty() {
        return Ok(BackendMode::all().into_iter().filter(|m| !m.quant).collect());
    }
    let mut out: Vec<BackendMode> = Vec::new();
    for label in &cfg.modes {
        let m: BackendMode = label.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy)]
struct Timing {
    wall_seconds: f64,
    steps: u64,
    mean_edges: f64,
    peak: Option<usize>,
}

fn time_cell<T: Real>(
    system: &System,
    params: &ModelParams<T>,
    sim: &SimConfig,
    replicas: usize,
    steps: u64,
    mode: BackendMode,
) -> Result<Timing> {
    let cfg = SimConfig {
        n_replicas: replicas,
        output_stride: u64::MAX,
        checkpoint_stride: 0,
        ..*sim
    };
    Simulation::new(Some(params), system, SimConfig { n_steps: 1, ..cfg }, mode)?.run(None, &mut NullObserver)?;
    let sim = Simulation::new(Some(params), system, SimConfig { n_steps: steps, ..cfg }, mode)?;
    let (summary, peak) = memory::measure_peak(|| sim.run(None, &mut NullObserver));
    let summary = summary?;
    Ok(Timing {
        wall_seconds: summary.wall_seconds,
        steps: summary.steps,
        mean_edges: summary.mean_edges,
        peak: memory::is_active().then_some(peak),
    })
}

/// Runs `cfg.steps` timed steps (after one warm-up step) for every replica
/// count and mode. Quantized modes use `quantized`, which must then be given.
/// The reference pipeline is timed for every replica count even when it is not
/// among the modes, as the baseline of the speedup column.
pub fn run_bench<T: Real>(
    system: &System,
    params: &ModelParams<T>,
    quantized: Option<&ModelParams<T>>,
    sim: &SimConfig,
    cfg: &BenchConfig,
) -> Result<Vec<BenchRow>> {
    if cfg.steps == 0 {
        return Err(Error::Config("bench steps must be >= 1".into()));
    }
    let modes = bench_modes(cfg)?;
    if modes.iter().any(|m| m.quant) && quantized.is_none() {
        return Err(Error::Config("quantized modes need quantized parameters".into()));
    }
    let mut rows = Vec::new();
    for &replicas in &cfg.replicas {
        let baseline = time_cell(system, params, sim, replicas, cfg.steps, BackendMode::REFERENCE)?;
        let base_step = baseline.wall_seconds / baseline.steps as f64;
        for &mode in &modes {
            let t = if mode == BackendMode::REFERENCE {
                baseline
            } else {
                let p = if mode.quant { quantized.expect("checked above") } else { params };
                time_cell(system, p, sim, replicas, cfg.steps, mode)?
            };
            let step_s = t.wall_seconds / t.steps as f64;
            let dims = IoDims::new(system.beads, t.mean_edges.round() as usize, params.config(), T::BYTES, mode.quant);
            rows.push(BenchRow {
                mode,
                precision: T::NAME,
                replicas,
                beads: system.beads,
                mean_edges: t.mean_edges,
                steps: t.steps,
                wall_ms_per_step: step_s * 1e3,
                steps_mol_per_s: replicas as f64 / step_s,
                io_base_bytes: io_model_base(&dims) * replicas as u64,
                io_flash_bytes: io_model_flash(&dims) * replicas as u64,
                peak_alloc_bytes: t.peak,
                speedup: base_step / step_s,
            });
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = format!("{BENCH_SCHEMA}\n{BENCH_COLUMNS}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.2},{},{:.4},{:.3},{},{},{:.4},{},{:.4}",
            r.mode.label(),
            r.precision,
            r.replicas,
            r.beads,
            r.mean_edges,
            r.steps,
            r.wall_ms_per_step,
            r.steps_mol_per_s,
            r.io_base_bytes,
            r.io_flash_bytes,
            r.io_ratio(),
            r.peak_alloc_bytes.map(|b| b.to_string()).unwrap_or_default(),
            r.speedup
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};
    use crate::synth::{chain_system, Shape};

    fn small() -> ModelConfig {
        ModelConfig {
            hidden_dim: 16,
            rbf_dim: 8,
            num_blocks: 1,
            filter_hidden_dim: 16,
            readout_hidden_dim: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn mode_labels_round_trip() {
        for m in BackendMode::all() {
            assert_eq!(m.label().parse::<BackendMode>().unwrap(), m);
        }
        assert_eq!("flash".parse::<BackendMode>().unwrap(), BackendMode::FLASH);
        assert!("fast".parse::<BackendMode>().is_err());
    }

    #[test]
    fn single_cell_has_every_column() {
        let sys = chain_system(Shape::Globule, 40, 4, 1).unwrap();
        let p = init_params::<f64>(&small(), 2).unwrap();
        let cfg = BenchConfig {
            replicas: vec![1],
            steps: 2,
            modes: vec!["flash".into()],
        };
        let rows = run_bench(&sys, &p, None, &SimConfig::default(), &cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let csv = bench_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], BENCH_SCHEMA);
        let cols = BENCH_COLUMNS.split(',').count();
        let cells: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(cells.len(), cols);
        // peak allocation is empty without the counting allocator
        let peak = BENCH_COLUMNS.split(',').position(|c| c == "peak_alloc_bytes").unwrap();
        assert!(cells.iter().enumerate().all(|(i, c)| i == peak || !c.is_empty()));
        assert!(rows[0].io_ratio() > 1.0 && rows[0].speedup > 0.0);
    }

    #[test]
    fn quant_modes_need_quantized_params() {
        let sys = chain_system(Shape::Coil, 10, 2, 1).unwrap();
        let p = init_params::<f32>(&small(), 2).unwrap();
        let cfg = BenchConfig {
            replicas: vec![1],
            steps: 1,
            modes: vec!["flash+quant".into()],
        };
        assert!(run_bench(&sys, &p, None, &SimConfig::default(), &cfg).is_err());
    }
}
