use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::checkpoint::save_checkpoint;
use super::integrator::{
    half_kick, kinetic_energy, kinetic_temperature, langevin_step, noise_rng, thermal_velocities, ReplicaState, SimConfig,
    SimState,
};
use super::prior::{prior_energy_forces, PriorSpec};
use super::system::System;
use super::trajectory::{Frame, LogRow, LogWriter, XyzWriter};
use crate::backend::{flash_energy_forces, BackendMode, FlashOptions};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::neighbor::{build_neighbors_cells, prune_to_cutoff, NeighborList};
use crate::real::Real;

/// Force magnitude above which a run is declared unstable.
pub const BLOWUP_FORCE: f64 = 1e6;

/// Receives frames, log rows and checkpoints in `(step, replica)` order.
pub trait Observer {
    fn frame(&mut self, _frame: &Frame) -> Result<()> {
        Ok(())
    }

    fn log(&mut self, _row: &LogRow) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&mut self, _state: &SimState, _seed: u64) -> Result<()> {
        Ok(())
    }
}

pub struct NullObserver;

impl Observer for NullObserver {}

/// Keeps everything in memory.
#[derive(Debug, Default)]
pub struct MemoryObserver {
    pub frames: Vec<Frame>,
    pub rows: Vec<LogRow>,
    pub checkpoints: Vec<SimState>,
}

impl Observer for MemoryObserver {
    fn frame(&mut self, frame: &Frame) -> Result<()> {
        self.frames.push(frame.clone());
        Ok(())
    }

    fn log(&mut self, row: &LogRow) -> Result<()> {
        self.rows.push(*row);
        Ok(())
    }

    fn checkpoint(&mut self, state: &SimState, _seed: u64) -> Result<()> {
        self.checkpoints.push(state.clone());
        Ok(())
    }
}

/// Writes `trajectory.xyz`, `log.csv` and `checkpoint.bin` into a directory.
pub struct FileObserver {
    types: Vec<usize>,
    xyz: XyzWriter<std::io::BufWriter<std::fs::File>>,
    log: LogWriter<std::io::BufWriter<std::fs::File>>,
    xyz_path: PathBuf,
    log_path: PathBuf,
    checkpoint_path: PathBuf,
}

impl FileObserver {
    pub fn create(dir: &Path, types: &[usize]) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let xyz_path = dir.join("trajectory.xyz");
        let log_path = dir.join("log.csv");
        Ok(Self {
            types: types.to_vec(),
            xyz: XyzWriter::create(&xyz_path)?,
            log: LogWriter::create(&log_path)?,
            xyz_path,
            log_path,
            checkpoint_path: dir.join("checkpoint.bin"),
        })
    }

    pub fn checkpoint_path(&self) -> &Path {
        &self.checkpoint_path
    }

    pub fn flush(&mut self) -> Result<()> {
        self.xyz.flush().map_err(|e| Error::io(&self.xyz_path, e))?;
        self.log.flush().map_err(|e| Error::io(&self.log_path, e))
    }
}

impl Observer for FileObserver {
    fn frame(&mut self, frame: &Frame) -> Result<()> {
        self.xyz.write(frame, &self.types).map_err(|e| Error::io(&self.xyz_path, e))
    }

    fn log(&mut self, row: &LogRow) -> Result<()> {
        self.log.write(row).map_err(|e| Error::io(&self.log_path, e))
    }

    fn checkpoint(&mut self, state: &SimState, seed: u64) -> Result<()> {
        self.flush()?;
        save_checkpoint(&self.checkpoint_path, state, seed)
    }
}

/// Aggregate throughput of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    /// Replica steps per wall second.
    pub steps_mol_per_s: f64,
    /// Simulated ns per wall day, summed over replicas.
    pub ns_per_day: f64,
}

/// `steps * replicas / seconds`, and the simulated time this buys per day.
pub fn throughput_report(steps: u64, replicas: usize, wall_seconds: f64, dt_fs: f64) -> Result<Throughput> {
    if !(wall_seconds > 0.0 && wall_seconds.is_finite()) {
        return Err(Error::InvalidInput(format!("elapsed time must be positive, got {wall_seconds} s")));
    }
    let steps_mol_per_s = steps as f64 * replicas as f64 / wall_seconds;
    Ok(Throughput {
        steps_mol_per_s,
        ns_per_day: steps_mol_per_s * dt_fs * 86400.0 / 1e6,
    })
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub state: SimState,
    /// Steps integrated by this call.
    pub steps: u64,
    pub wall_seconds: f64,
    /// Mean edge count over force evaluations.
    pub mean_edges: f64,
    /// Wall time spent in segment-layout construction.
    pub index_seconds: f64,
}

impl RunSummary {
    pub fn throughput(&self, dt_fs: f64) -> Result<Throughput> {
        throughput_report(self.steps, self.state.replicas.len(), self.wall_seconds, dt_fs)
    }
}

/// Per-replica neighbor list and latest forces.
struct Work {
    list: Option<NeighborList>,
    forces: Vec<[f64; 3]>,
    potential: f64,
    prior: f64,
    edges: usize,
    index_seconds: f64,
    wall_ms: f64,
}

impl Work {
    fn new(n: usize) -> Self {
        Self {
            list: None,
            forces: vec![[0.0; 3]; n],
            potential: 0.0,
            prior: 0.0,
            edges: 0,
            index_seconds: 0.0,
            wall_ms: 0.0,
        }
    }
}

/// Langevin dynamics of a system under the network potential (if any) plus
/// its bonded prior.
pub struct Simulation<'a, T: Real> {
    params: Option<&'a ModelParams<T>>,
    system: &'a System,
    prior: PriorSpec,
    cfg: SimConfig,
    mode: BackendMode,
    opts: FlashOptions,
    /// Stream index of replica 0, for splitting one ensemble across runs.
    pub replica_offset: usize,
}

impl<'a, T: Real> Simulation<'a, T> {
    pub fn new(params: Option<&'a ModelParams<T>>, system: &'a System, cfg: SimConfig, mode: BackendMode) -> Result<Self> {
        cfg.validate()?;
        system.validate()?;
        if let Some(p) = params {
            let nt = p.config().num_atom_types;
            if let Some(t) = system.types.iter().find(|&&t| t >= nt) {
                return Err(Error::InvalidInput(format!("system uses bead type {t}, model knows {nt}")));
            }
            if mode.quant != p.is_quantized() {
                return Err(Error::Config(format!(
                    "mode {} does not match {} parameters",
                    mode.label(),
                    if p.is_quantized() { "quantized" } else { "full-precision" }
                )));
            }
        }
        Ok(Self {
            params,
            system,
            prior: system.prior()?,
            cfg,
            mode,
            opts: FlashOptions::default(),
            replica_offset: 0,
        })
    }

    pub fn with_options(mut self, opts: FlashOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Starting coordinates for every replica with thermal velocities.
    pub fn initial_state(&self) -> SimState {
        let replicas = (0..self.cfg.n_replicas)
            .map(|r| ReplicaState {
                positions: self.system.positions.clone(),
                velocities: thermal_velocities(
                    &self.system.masses,
                    self.cfg.temperature,
                    self.cfg.seed,
                    self.replica_offset + r,
                ),
            })
            .collect();
        SimState {
            replicas,
            masses: self.system.masses.clone(),
            step: 0,
        }
    }

    fn evaluate(&self, positions: &[[f64; 3]], work: &mut Work, step: u64, replica: usize) -> Result<()> {
        if let Some(i) = positions.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(blowup(step, replica, format!("position of bead {i} is not finite"), positions));
        }
        work.forces.iter_mut().for_each(|f| *f = [0.0; 3]);
        work.potential = 0.0;
        work.edges = 0;
        work.index_seconds = 0.0;
        if let Some(params) = self.params {
            let rc = params.config().cutoff;
            let reuse = self.cfg.rebuild_stride > 1;
            if work.list.is_none() || step % self.cfg.rebuild_stride == 0 {
                let radius = if reuse { rc + self.cfg.skin } else { rc };
                work.list = Some(build_neighbors_cells(positions, radius));
            }
            let list = work.list.as_ref().expect("list built above");
            let pruned;
            let nl = if reuse {
                pruned = prune_to_cutoff(list, positions, rc);
                &pruned
            } else {
                list
            };
            let pos_t: Vec<[T; 3]> = positions.iter().map(|p| p.map(T::lit)).collect();
            let ef = flash_energy_forces(&pos_t, &self.system.types, params, nl, self.mode, &self.opts)?;
            for (f, g) in work.forces.iter_mut().zip(&ef.forces) {
                *f = g.map(|v| v.as_f64());
            }
            work.potential = ef.energy;
            work.edges = nl.num_edges();
            work.index_seconds = ef.index_seconds;
        }
        let (e_prior, f_prior) = prior_energy_forces(positions, &self.prior);
        work.prior = e_prior;
        for (f, g) in work.forces.iter_mut().zip(&f_prior) {
            for c in 0..3 {
                f[c] += g[c];
            }
        }
        if !(work.potential.is_finite() && e_prior.is_finite()) {
            return Err(blowup(step, replica, "energy is not finite".into(), positions));
        }
        for (i, f) in work.forces.iter().enumerate() {
            let mag = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
            if !(mag <= BLOWUP_FORCE) {
                return Err(blowup(step, replica, format!("force on bead {i} has magnitude {mag:.3e}"), positions));
            }
        }
        Ok(())
    }

    fn emit(&self, state: &SimState, works: &[Work], obs: &mut dyn Observer) -> Result<()> {
        for (r, (rep, w)) in state.replicas.iter().zip(works).enumerate() {
            let replica = self.replica_offset + r;
            obs.frame(&Frame {
                step: state.step,
                replica,
                positions: rep.positions.clone(),
            })?;
            let kin = kinetic_energy(&rep.velocities, &state.masses);
            obs.log(&LogRow {
                step: state.step,
                replica,
                potential: w.potential,
                prior: w.prior,
                kinetic_t: kinetic_temperature(&rep.velocities, &state.masses),
                total: w.potential + w.prior + kin,
                wall_ms: w.wall_ms,
            })?;
        }
        Ok(())
    }

    /// Integrates from `resume` (or the initial state) up to `n_steps`.
    ///
    /// A fresh run emits the starting frame; a resumed one continues after the
    /// checkpointed step. Output goes to `obs` every `output_stride` steps.
    pub fn run(&self, resume: Option<SimState>, obs: &mut dyn Observer) -> Result<RunSummary> {
        let fresh = resume.is_none();
        let mut state = match resume {
            Some(s) => {
                if s.replicas.len() != self.cfg.n_replicas || s.masses != self.system.masses {
                    return Err(Error::Config(format!(
                        "checkpoint holds {} replicas of {} beads, run expects {} of {}",
                        s.replicas.len(),
                        s.num_beads(),
                        self.cfg.n_replicas,
                        self.system.beads
                    )));
                }
                s
            }
            None => self.initial_state(),
        };
        let n = self.system.beads;
        let masses = state.masses.clone();
        let mut works: Vec<Work> = (0..state.replicas.len()).map(|_| Work::new(n)).collect();
        let t0 = Instant::now();
        let step0 = state.step;
        let offset = self.replica_offset;
        state
            .replicas
            .par_iter()
            .zip(works.par_iter_mut())
            .enumerate()
            .map(|(r, (rep, w))| {
                let t = Instant::now();
                let out = self.evaluate(&rep.positions, w, step0, offset + r);
                w.wall_ms = t.elapsed().as_secs_f64() * 1e3;
                out
            })
            .collect::<Vec<Result<()>>>()
            .into_iter()
            .collect::<Result<()>>()?;
        if fresh && state.step % self.cfg.output_stride == 0 {
            self.emit(&state, &works, obs)?;
        }
        let mut edge_sum = 0usize;
        let mut evals = 0usize;
        let mut index_seconds = 0.0;
        while state.step < self.cfg.n_steps {
            let step = state.step;
            state
                .replicas
                .par_iter_mut()
                .zip(works.par_iter_mut())
                .enumerate()
                .map(|(r, (rep, w))| {
                    let t = Instant::now();
                    let replica = offset + r;
                    let mut rng = noise_rng(self.cfg.seed, replica, step);
                    langevin_step(rep, &w.forces, &masses, &self.cfg, &mut rng);
                    self.evaluate(&rep.positions, w, step + 1, replica)?;
                    half_kick(rep, &w.forces, &masses, self.cfg.dt_ps());
                    w.wall_ms = t.elapsed().as_secs_f64() * 1e3;
                    Ok(())
                })
                .collect::<Vec<Result<()>>>()
                .into_iter()
                .collect::<Result<()>>()?;
            state.step += 1;
            for w in &works {
                edge_sum += w.edges;
                index_seconds += w.index_seconds;
            }
            evals += works.len();
            if state.step % self.cfg.output_stride == 0 {
                self.emit(&state, &works, obs)?;
            }
            if self.cfg.checkpoint_stride > 0 && state.step % self.cfg.checkpoint_stride == 0 {
                obs.checkpoint(&state, self.cfg.seed)?;
            }
        }
        Ok(RunSummary {
            steps: state.step - step0,
            state,
            wall_seconds: t0.elapsed().as_secs_f64(),
            mean_edges: if evals > 0 { edge_sum as f64 / evals as f64 } else { 0.0 },
            index_seconds,
        })
    }
}

fn blowup(step: u64, replica: usize, reason: String, positions: &[[f64; 3]]) -> Error {
    Error::BlowUp {
        step,
        replica,
        reason,
        frame: positions.to_vec(),
    }
}
