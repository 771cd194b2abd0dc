//! Same energy and forces from every fused/segmented combination, with the
//! modeled traffic of each.

use flashcg::backend::{flash_energy_forces, BackendMode, FlashOptions};
use flashcg::model::{init_params, ModelConfig};
use flashcg::neighbor::build_neighbors_cells;
use flashcg::synth::random_gas;
use flashcg::verify::force_rel_error;

fn main() -> flashcg::Result<()> {
    let params = init_params::<f64>(&ModelConfig::default(), 3)?;
    let pos = random_gas(200, 3.0, 3);
    let types: Vec<usize> = (0..pos.len()).map(|i| i % 4).collect();
    let nl = build_neighbors_cells(&pos, params.config().cutoff);
    let opts = FlashOptions::default();
    let reference = flash_energy_forces(&pos, &types, &params, &nl, BackendMode::REFERENCE, &opts)?;
    println!("N = {}, E = {} ({:.1} per bead)", pos.len(), nl.num_edges(), nl.num_edges() as f64 / pos.len() as f64);
    for mode in BackendMode::all().into_iter().filter(|m| !m.quant) {
        let r = flash_energy_forces(&pos, &types, &params, &nl, mode, &opts)?;
        println!(
            "{:<14} E = {:>14.9}  |dE|/|E| {:.1e}  force err {:.1e}  {:>12} B  {:>9} atomic updates",
            mode.label(),
            r.energy,
            (r.energy - reference.energy).abs() / reference.energy.abs(),
            force_rel_error(&r.forces, &reference.forces),
            r.traffic.total(),
            r.traffic.atomic_updates
        );
    }
    Ok(())
}
