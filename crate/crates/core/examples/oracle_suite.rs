//! The verification suite on a reduced workload.

use flashcg::config::Precision;
use flashcg::memory::CountingAllocator;
use flashcg::verify::{run_all, VerifyOptions, Workload};

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

fn main() -> flashcg::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut opts = VerifyOptions::new(seed, Precision::Single);
    opts.workload = Workload::quick();
    for r in run_all(&opts)? {
        println!("{r}");
    }
    Ok(())
}
