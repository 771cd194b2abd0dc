//! Langevin dynamics of a synthetic chain under a freshly initialized potential.
//!
//! cargo run --release --example simulate_chain

use flashcg::backend::BackendMode;
use flashcg::md::{MemoryObserver, SimConfig, Simulation};
use flashcg::model::{init_params, ModelConfig};
use flashcg::synth::{chain_system, Shape};

fn main() -> flashcg::Result<()> {
    let system = chain_system(Shape::Globule, 64, 4, 7)?;
    let params = init_params::<f32>(&ModelConfig::default(), 7)?;
    let cfg = SimConfig {
        n_steps: 100,
        n_replicas: 2,
        output_stride: 25,
        seed: 7,
        ..SimConfig::default()
    };
    let mut obs = MemoryObserver::default();
    let summary = Simulation::new(Some(&params), &system, cfg, BackendMode::FLASH)?.run(None, &mut obs)?;
    for row in &obs.rows {
        println!(
            "step {:>4} replica {} potential {:>10.3} prior {:>10.3} T {:>7.1} K",
            row.step, row.replica, row.potential, row.prior, row.kinetic_t
        );
    }
    let tp = summary.throughput(cfg.dt_fs)?;
    println!(
        "{} steps x {} replicas in {:.2} s: {:.1} steps*mol/s, {:.2} ns/day, {:.0} edges",
        summary.steps, cfg.n_replicas, summary.wall_seconds, tp.steps_mol_per_s, tp.ns_per_day, summary.mean_edges
    );
    Ok(())
}
