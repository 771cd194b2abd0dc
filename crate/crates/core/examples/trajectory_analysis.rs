//! RMSD, fraction of native contacts and GDT-TS along a short trajectory.

use flashcg::analysis::{compute_metrics, MetricOptions};
use flashcg::backend::BackendMode;
use flashcg::md::{MemoryObserver, SimConfig, Simulation};
use flashcg::synth::{chain_system, Shape};

fn main() -> flashcg::Result<()> {
    let system = chain_system(Shape::Helix, 40, 1, 2)?;
    let cfg = SimConfig {
        n_steps: 5000,
        output_stride: 250,
        temperature: 350.0,
        seed: 2,
        ..SimConfig::default()
    };
    // prior-only dynamics: the bonded chain drifts away from its helix
    let mut obs = MemoryObserver::default();
    Simulation::<f64>::new(None, &system, cfg, BackendMode::FLASH)?.run(None, &mut obs)?;
    let series = compute_metrics(&obs.frames, system.native.as_deref(), &MetricOptions::default())?;
    print!("{}", series.to_csv());
    let s = series.summary(0.1)?;
    println!("{s:?}");
    Ok(())
}
