//! Half-precision weights with per-channel scales, and what they cost in accuracy.

use flashcg::model::{init_params, ModelConfig};
use flashcg::quant::{quantize_model, QuantizeOptions};
use flashcg::verify::{quant_errors, random_state};

fn main() -> flashcg::Result<()> {
    let config = ModelConfig::default();
    let params = init_params::<f32>(&config, 11)?;
    let calib: Vec<_> = (0..8).map(|k| random_state(64, config.num_atom_types, 100 + k)).collect();
    let (quant, report) = quantize_model(&params, &calib, &QuantizeOptions::default())?;
    println!("{:<18} {:>12} {:>12}", "layer", "per-channel", "per-tensor");
    for l in &report {
        println!("{:<18} {:>12.3e} {:>12.3e}", l.name, l.per_channel_error, l.per_tensor_error);
    }
    let states: Vec<_> = (0..20).map(|k| random_state(64, config.num_atom_types, 1000 + k)).collect();
    let e = quant_errors(&params, &quant, &states, &Default::default())?;
    println!(
        "max |dE|/|E| {:.2e} (min |E| {:.2e}), max |dE|/sum|e_i| {:.2e}, force p95 {:.2e}",
        e.max_energy_rel, e.min_abs_energy, e.max_energy_scaled, e.force_p95
    );
    Ok(())
}
