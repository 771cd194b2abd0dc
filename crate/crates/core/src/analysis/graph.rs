use rayon::prelude::*;

use crate::neighbor::{build_neighbors_cells, NeighborList};

/// Topology of one frame's radius graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStats {
    /// Directed edge count.
    pub edges: usize,
    pub mean_degree: f64,
    pub max_degree: u32,
    /// Mean of `|i - j|` over edges: how far contacts sit from the sequence diagonal.
    pub mean_bandwidth: f64,
    pub max_bandwidth: usize,
}

pub fn neighbor_graph_stats(nl: &NeighborList) -> GraphStats {
    let deg = nl.in_degrees();
    let e = nl.num_edges();
    let band: Vec<usize> = nl.src.iter().zip(&nl.dst).map(|(&s, &d)| s.abs_diff(d) as usize).collect();
    GraphStats {
        edges: e,
        mean_degree: if deg.is_empty() { 0.0 } else { e as f64 / deg.len() as f64 },
        max_degree: deg.iter().copied().max().unwrap_or(0),
        mean_bandwidth: if e == 0 { 0.0 } else { band.iter().sum::<usize>() as f64 / e as f64 },
        max_bandwidth: band.iter().copied().max().unwrap_or(0),
    }
}

pub fn frame_graph_stats(positions: &[[f64; 3]], r_cut: f64) -> GraphStats {
    neighbor_graph_stats(&build_neighbors_cells(positions, r_cut))
}

/// Per-frame statistics, in frame order.
pub fn graph_stats<P: AsRef<[[f64; 3]]> + Sync>(frames: &[P], r_cut: f64) -> Vec<GraphStats> {
    frames.par_iter().map(|f| frame_graph_stats(f.as_ref(), r_cut)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_gas;

    fn brute(p: &[[f64; 3]], rc: f64) -> usize {
        let mut e = 0;
        for i in 0..p.len() {
            for j in 0..p.len() {
                let d: f64 = (0..3).map(|k| (p[i][k] - p[j][k]).powi(2)).sum::<f64>().sqrt();
                if i != j && d < rc {
                    e += 1;
                }
            }
        }
        e
    }

    #[test]
    fn counts_match_brute_force() {
        for seed in 0..5 {
            let p = random_gas(150, 20.0, seed);
            let s = frame_graph_stats(&p, 0.5);
            assert_eq!(s.edges, brute(&p, 0.5));
            assert!((s.mean_degree - s.edges as f64 / 150.0).abs() < 1e-12);
        }
    }

    #[test]
    fn static_and_expanding_trajectories() {
        let p = random_gas(80, 30.0, 1);
        let stat = graph_stats(&[p.clone(), p.clone(), p.clone()], 0.5);
        assert!(stat.windows(2).all(|w| w[0] == w[1]));
        let frames: Vec<Vec<[f64; 3]>> = (0..6)
            .map(|k| p.iter().map(|x| x.map(|v| v * (1.0 + 0.2 * k as f64))).collect())
            .collect();
        let e: Vec<usize> = graph_stats(&frames, 0.5).iter().map(|s| s.edges).collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0]), "{e:?}");
        assert!(e[0] > e[5]);
    }

    #[test]
    fn chain_bandwidth() {
        let p: Vec<[f64; 3]> = (0..10).map(|i| [0.38 * i as f64, 0.0, 0.0]).collect();
        let s = frame_graph_stats(&p, 0.5);
        assert_eq!((s.edges, s.max_degree, s.max_bandwidth), (18, 2, 1));
        assert_eq!(s.mean_bandwidth, 1.0);
    }
}
