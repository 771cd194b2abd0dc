//! Step time, throughput and modeled traffic across replica counts and modes.

use flashcg::bench::{bench_csv, run_bench};
use flashcg::config::BenchConfig;
use flashcg::md::SimConfig;
use flashcg::memory::CountingAllocator;
use flashcg::model::{init_params, ModelConfig};
use flashcg::synth::{chain_system, Shape};

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

fn main() -> flashcg::Result<()> {
    let system = chain_system(Shape::Globule, 300, 4, 1)?;
    let params = init_params::<f32>(&ModelConfig::default(), 1)?;
    let cfg = BenchConfig {
        replicas: vec![1, 2],
        steps: 3,
        modes: vec!["reference".into(), "segred".into(), "fused".into(), "flash".into()],
    };
    print!("{}", bench_csv(&run_bench(&system, &params, None, &SimConfig::default(), &cfg)?));
    Ok(())
}
