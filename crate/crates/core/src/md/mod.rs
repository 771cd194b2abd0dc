//! Langevin dynamics over replicas with the network potential and bonded priors.

mod checkpoint;
mod integrator;
mod prior;
mod sim;
mod system;
mod trajectory;

pub use checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use integrator::{
    half_kick, kinetic_energy, kinetic_temperature, langevin_step, noise_rng, thermal_velocities, ReplicaState, SimConfig,
    SimState, KB,
};
pub use prior::{prior_energy_forces, Bond, PriorSpec};
pub use sim::{
    throughput_report, FileObserver, MemoryObserver, NullObserver, Observer, RunSummary, Simulation, Throughput,
    BLOWUP_FORCE,
};
pub use system::{System, ENERGY_UNIT};
pub use trajectory::{parse_xyz, read_xyz, Frame, LogRow, LogWriter, XyzWriter, LOG_COLUMNS, LOG_SCHEMA, WALL_TIME_COLUMNS};
