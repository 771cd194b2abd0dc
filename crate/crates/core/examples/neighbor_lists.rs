//! Cell-list neighbor search against the all-pairs scan.

use std::time::Instant;

use flashcg::neighbor::{build_neighbors_bruteforce, build_neighbors_cells};
use flashcg::synth::random_gas;

fn main() {
    for n in [256, 1024, 4096] {
        let pos = random_gas(n, 3.0, n as u64);
        let t = Instant::now();
        let mut cells = build_neighbors_cells(&pos, 1.5);
        let t_cells = t.elapsed();
        let t = Instant::now();
        let mut brute = build_neighbors_bruteforce(&pos, 1.5);
        let t_brute = t.elapsed();
        cells.canonicalize();
        brute.canonicalize();
        println!(
            "N {n:>5}: {:>7} edges, cells {:>9.2?}, brute force {:>9.2?}, equal {}",
            cells.num_edges(),
            t_cells,
            t_brute,
            cells == brute
        );
    }
}
