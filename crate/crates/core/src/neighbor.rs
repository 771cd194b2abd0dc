//! Directed cutoff graphs and their destination/source CSR layouts.

use crate::error::{Error, Result};
use crate::real::Real;

/// Directed edges `src -> dst`, both orientations present, sorted by `(dst, src)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NeighborList {
    num_nodes: usize,
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
}

impl NeighborList {
    /// Builds a list from raw edge arrays, checking indices. Self-edges are
    /// accepted; they have zero length and contribute no force.
    pub fn from_edges(num_nodes: usize, src: Vec<u32>, dst: Vec<u32>) -> Result<Self> {
        if src.len() != dst.len() {
            return Err(Error::Shape(format!("{} sources vs {} destinations", src.len(), dst.len())));
        }
        for (e, (&s, &d)) in src.iter().zip(&dst).enumerate() {
            if s as usize >= num_nodes || d as usize >= num_nodes {
                return Err(Error::InvalidInput(format!("edge {e} ({s} -> {d}) out of range for {num_nodes} nodes")));
            }
        }
        Ok(Self { num_nodes, src, dst })
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            src: Vec::new(),
            dst: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    /// Sorts edges into canonical `(dst, src)` order.
    pub fn canonicalize(&mut self) {
        let mut pairs: Vec<(u32, u32)> = self.dst.iter().copied().zip(self.src.iter().copied()).collect();
        pairs.sort_unstable();
        self.dst = pairs.iter().map(|p| p.0).collect();
        self.src = pairs.iter().map(|p| p.1).collect();
    }

    pub fn in_degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.num_nodes];
        for &d in &self.dst {
            deg[d as usize] += 1;
        }
        deg
    }
}

#[inline]
fn dist2<T: Real>(a: &[T; 3], b: &[T; 3]) -> f64 {
    let dx = a[0].as_f64() - b[0].as_f64();
    let dy = a[1].as_f64() - b[1].as_f64();
    let dz = a[2].as_f64() - b[2].as_f64();
    dx * dx + dy * dy + dz * dz
}

/// Exact O(N^2) enumeration of all ordered pairs closer than `r_cut`.
pub fn build_neighbors_bruteforce<T: Real>(positions: &[[T; 3]], r_cut: f64) -> NeighborList {
    let n = positions.len();
    let rc2 = r_cut * r_cut;
    let mut nl = NeighborList::empty(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && dist2(&positions[i], &positions[j]) < rc2 {
                nl.dst.push(i as u32);
                nl.src.push(j as u32);
            }
        }
    }
    nl
}

/// Uniform grid over the bounding box with cells no smaller than the cutoff.
#[derive(Debug, Clone)]
pub struct CellGrid {
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    start: Vec<usize>,
    beads: Vec<u32>,
    cell_of: Vec<usize>,
}

impl CellGrid {
    pub fn build<T: Real>(positions: &[[T; 3]], r_cut: f64) -> Self {
        let n = positions.len();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in positions {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k].as_f64());
                hi[k] = hi[k].max(p[k].as_f64());
            }
        }
        if n == 0 {
            lo = [0.0; 3];
            hi = [0.0; 3];
        }
        // cap the cell count near the bead count so sparse clouds stay cheap
        let limit = (4 * n + 64) as f64;
        let mut cell = r_cut;
        let dims_for = |cell: f64| -> [usize; 3] {
            let mut d = [1usize; 3];
            for k in 0..3 {
                d[k] = ((hi[k] - lo[k]) / cell).floor() as usize + 1;
            }
            d
        };
        let mut dims = dims_for(cell);
        while (dims[0] as f64) * (dims[1] as f64) * (dims[2] as f64) > limit {
            cell *= 1.5;
            dims = dims_for(cell);
        }
        let ncell = dims[0] * dims[1] * dims[2];
        let cell_of: Vec<usize> = positions
            .iter()
            .map(|p| {
                let mut c = [0usize; 3];
                for k in 0..3 {
                    c[k] = (((p[k].as_f64() - lo[k]) / cell).floor() as usize).min(dims[k] - 1);
                }
                (c[0] * dims[1] + c[1]) * dims[2] + c[2]
            })
            .collect();
        let mut start = vec![0usize; ncell + 1];
        for &c in &cell_of {
            start[c + 1] += 1;
        }
        for c in 0..ncell {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut beads = vec![0u32; n];
        for (i, &c) in cell_of.iter().enumerate() {
            beads[fill[c]] = i as u32;
            fill[c] += 1;
        }
        Self {
            origin: lo,
            cell,
            dims,
            start,
            beads,
            cell_of,
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn num_cells(&self) -> usize {
        self.dims.iter().product()
    }

    /// Bead indices stored in cell `c`.
    pub fn bucket(&self, c: usize) -> &[u32] {
        &self.beads[self.start[c]..self.start[c + 1]]
    }

    fn coords(&self, c: usize) -> [usize; 3] {
        let z = c % self.dims[2];
        let y = (c / self.dims[2]) % self.dims[1];
        let x = c / (self.dims[1] * self.dims[2]);
        [x, y, z]
    }
}

/// Cell-list neighbor search; returns the same canonical list as brute force.
pub fn build_neighbors_cells<T: Real>(positions: &[[T; 3]], r_cut: f64) -> NeighborList {
    let n = positions.len();
    if positions.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return build_neighbors_bruteforce(positions, r_cut);
    }
    let grid = CellGrid::build(positions, r_cut);
    let rc2 = r_cut * r_cut;
    let mut nl = NeighborList::empty(n);
    let mut found: Vec<u32> = Vec::new();
    for i in 0..n {
        found.clear();
        let [cx, cy, cz] = grid.coords(grid.cell_of[i]);
        for x in cx.saturating_sub(1)..=(cx + 1).min(grid.dims[0] - 1) {
            for y in cy.saturating_sub(1)..=(cy + 1).min(grid.dims[1] - 1) {
                for z in cz.saturating_sub(1)..=(cz + 1).min(grid.dims[2] - 1) {
                    let c = (x * grid.dims[1] + y) * grid.dims[2] + z;
                    for &j in grid.bucket(c) {
                        if j as usize != i && dist2(&positions[i], &positions[j as usize]) < rc2 {
                            found.push(j);
                        }
                    }
                }
            }
        }
        found.sort_unstable();
        nl.src.extend_from_slice(&found);
        nl.dst.extend(std::iter::repeat(i as u32).take(found.len()));
    }
    nl
}

/// Keeps only edges whose current length is below `r_cut`, preserving order.
pub fn prune_to_cutoff<T: Real>(nl: &NeighborList, positions: &[[T; 3]], r_cut: f64) -> NeighborList {
    let rc2 = r_cut * r_cut;
    let mut out = NeighborList::empty(nl.num_nodes);
    for (&s, &d) in nl.src.iter().zip(&nl.dst) {
        if dist2(&positions[s as usize], &positions[d as usize]) < rc2 {
            out.src.push(s);
            out.dst.push(d);
        }
    }
    out
}

/// Which endpoint a [`CsrLayout`] groups edges by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Destination,
    Source,
}

/// Edges grouped by one endpoint: segment `i` is `perm[ptr[i]..ptr[i + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrLayout {
    pub key: GroupKey,
    pub ptr: Vec<usize>,
    pub perm: Vec<u32>,
}

impl CsrLayout {
    pub fn num_segments(&self) -> usize {
        self.ptr.len() - 1
    }

    #[inline]
    pub fn segment(&self, i: usize) -> &[u32] {
        &self.perm[self.ptr[i]..self.ptr[i + 1]]
    }

    pub fn max_segment(&self) -> usize {
        self.ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }
}

fn counting_sort(keys: &[u32], n: usize, key: GroupKey) -> CsrLayout {
    let mut ptr = vec![0usize; n + 1];
    for &k in keys {
        ptr[k as usize + 1] += 1;
    }
    for i in 0..n {
        ptr[i + 1] += ptr[i];
    }
    let mut fill = ptr[..n].to_vec();
    let mut perm = vec![0u32; keys.len()];
    for (e, &k) in keys.iter().enumerate() {
        let slot = &mut fill[k as usize];
        perm[*slot] = e as u32;
        *slot += 1;
    }
    CsrLayout { key, ptr, perm }
}

/// Stable bucket sort of edges by destination in O(E + N).
pub fn group_by_destination(nl: &NeighborList, n: usize) -> CsrLayout {
    counting_sort(&nl.dst, n, GroupKey::Destination)
}

/// Stable bucket sort of edges by source in O(E + N).
pub fn group_by_source(nl: &NeighborList, n: usize) -> CsrLayout {
    counting_sort(&nl.src, n, GroupKey::Source)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_at_half_cutoff_and_at_cutoff() {
        let p = [[0.0f64, 0.0, 0.0], [0.5, 0.0, 0.0]];
        assert_eq!(build_neighbors_bruteforce(&p, 1.0).num_edges(), 2);
        let q = [[0.0f64, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(build_neighbors_bruteforce(&q, 1.0).num_edges(), 0);
        assert_eq!(build_neighbors_cells(&q, 1.0).num_edges(), 0);
        assert_eq!(build_neighbors_bruteforce(&[[0.0f32; 3]], 1.0).num_edges(), 0);
    }

    #[test]
    fn coincident_points_have_no_self_edges() {
        let p = vec![[0.25f64; 3]; 4];
        let nl = build_neighbors_cells(&p, 1.0);
        assert_eq!(nl.num_edges(), 12);
        assert!(nl.src.iter().zip(&nl.dst).all(|(s, d)| s != d));
        assert_eq!(nl, build_neighbors_bruteforce(&p, 1.0));
    }

    #[test]
    fn line_and_triangle() {
        let line: Vec<[f64; 3]> = (0..10).map(|i| [i as f64 * 1.1, 0.0, 0.0]).collect();
        assert_eq!(build_neighbors_cells(&line, 1.0).num_edges(), 0);
        let tri = [[0.0f64, 0.0, 0.0], [0.3, 0.0, 0.0], [0.0, 0.3, 0.0]];
        assert_eq!(build_neighbors_cells(&tri, 1.0).num_edges(), 6);
    }

    #[test]
    fn hand_checked_layouts() {
        let nl = NeighborList::from_edges(3, vec![0, 1, 2], vec![1, 1, 0]).unwrap();
        let d = group_by_destination(&nl, 2);
        assert_eq!(d.ptr, vec![0, 1, 3]);
        assert_eq!(d.perm, vec![2, 0, 1]);
        let s = group_by_source(&nl, 3);
        assert_eq!(s.ptr, vec![0, 1, 2, 3]);
        assert_eq!(s.perm, vec![0, 1, 2]);
        let empty = group_by_destination(&NeighborList::empty(4), 4);
        assert_eq!(empty.ptr, vec![0; 5]);
        assert!(empty.perm.is_empty());
    }

    #[test]
    fn isolated_source_has_empty_segment() {
        let nl = NeighborList::from_edges(3, vec![0, 0], vec![1, 2]).unwrap();
        let s = group_by_source(&nl, 3);
        assert_eq!(s.ptr[2], s.ptr[1]);
        assert_eq!(s.ptr[3], s.ptr[2]);
    }

    #[test]
    fn from_edges_rejects_invalid() {
        assert!(NeighborList::from_edges(2, vec![0], vec![0]).is_ok());
        assert!(NeighborList::from_edges(2, vec![0], vec![2]).is_err());
        assert!(NeighborList::from_edges(2, vec![0, 1], vec![1]).is_err());
    }

    #[test]
    fn prune_drops_stretched_edges() {
        let p = [[0.0f64, 0.0, 0.0], [0.5, 0.0, 0.0], [0.9, 0.0, 0.0]];
        let nl = build_neighbors_bruteforce(&p, 1.0);
        let moved = [[0.0f64, 0.0, 0.0], [0.5, 0.0, 0.0], [1.2, 0.0, 0.0]];
        let pruned = prune_to_cutoff(&nl, &moved, 1.0);
        assert_eq!(pruned, build_neighbors_bruteforce(&moved, 1.0));
    }
}
