//! Grouping edges by destination and reducing each segment without atomics.

use flashcg::neighbor::{group_by_destination, NeighborList};
use flashcg::segment::{scatter_add, segment_reduce_csr};

fn main() -> flashcg::Result<()> {
    let nl = NeighborList::from_edges(4, vec![1, 2, 3, 0, 0, 2], vec![0, 0, 0, 1, 2, 3])?;
    let csr = group_by_destination(&nl, 4);
    println!("ptr  {:?}", csr.ptr);
    println!("perm {:?}", csr.perm);
    for i in 0..csr.num_segments() {
        let src: Vec<u32> = csr.segment(i).iter().map(|&e| nl.src[e as usize]).collect();
        println!("bead {i} receives from {src:?}");
    }
    let d = 2;
    let values: Vec<f64> = (0..nl.num_edges() * d).map(|k| k as f64).collect();
    let (scattered, updates) = scatter_add(&values, &nl.dst, 4, d);
    let reduced = segment_reduce_csr(&values, &csr, d);
    println!("scatter-add  {scattered:?} ({updates} atomic updates)");
    println!("segment sum  {reduced:?}");
    Ok(())
}
