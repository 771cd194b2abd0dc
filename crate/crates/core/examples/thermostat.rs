//! Equipartition on a harmonic chain: block averages of the kinetic temperature
//! scatter around the bath temperature.

use flashcg::backend::BackendMode;
use flashcg::md::{MemoryObserver, SimConfig, Simulation};
use flashcg::synth::{chain_system, Shape};

fn main() -> flashcg::Result<()> {
    let chain = chain_system(Shape::Coil, 10, 1, 1)?;
    let cfg = SimConfig {
        n_steps: 50_000,
        output_stride: 10,
        seed: 1,
        ..SimConfig::default()
    };
    let mut obs = MemoryObserver::default();
    Simulation::<f64>::new(None, &chain, cfg, BackendMode::FLASH)?.run(None, &mut obs)?;
    let rows = &obs.rows[1..];
    for block in rows.chunks(rows.len() / 5) {
        let t = block.iter().map(|r| r.kinetic_t).sum::<f64>() / block.len() as f64;
        println!("steps {:>6}..{:>6}: mean T {t:.1} K", block[0].step, block[block.len() - 1].step);
    }
    let t = rows.iter().map(|r| r.kinetic_t).sum::<f64>() / rows.len() as f64;
    println!("overall {t:.1} K, bath {} K", cfg.temperature);
    Ok(())
}
