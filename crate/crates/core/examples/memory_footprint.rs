//! Peak heap growth of one force evaluation per pipeline.

use flashcg::backend::{flash_energy_forces, BackendMode, FlashOptions};
use flashcg::memory::{measure_peak, CountingAllocator};
use flashcg::model::{init_params, ModelConfig};
use flashcg::neighbor::build_neighbors_cells;
use flashcg::synth::random_gas;

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

fn main() -> flashcg::Result<()> {
    let params = init_params::<f32>(&ModelConfig::default(), 5)?;
    let pos: Vec<[f32; 3]> = random_gas(600, 4.0, 5).iter().map(|p| p.map(|v| v as f32)).collect();
    let types: Vec<usize> = (0..pos.len()).map(|i| i % 4).collect();
    let nl = build_neighbors_cells(&pos, params.config().cutoff);
    println!("E/N = {:.1}", nl.num_edges() as f64 / pos.len() as f64);
    for mode in [BackendMode::REFERENCE, BackendMode::FLASH] {
        let (r, peak) =
            measure_peak(|| flash_energy_forces(&pos, &types, &params, &nl, mode, &FlashOptions::default()));
        r?;
        println!("{:<14} peak {:>8.1} MB", mode.label(), peak as f64 / 1e6);
    }
    Ok(())
}
