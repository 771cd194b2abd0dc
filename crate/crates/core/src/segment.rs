//! Scatter-add and segmented reduction over edge rows.

use crate::neighbor::CsrLayout;
use crate::real::{AtomicBuffer, Real};

/// `out[index[e]] += values[e]` in edge order through atomic updates.
///
/// Returns the `n x d` result and the number of element updates performed.
pub fn scatter_add<T: Real>(values: &[T], index: &[u32], n: usize, d: usize) -> (Vec<T>, u64) {
    debug_assert_eq!(values.len(), index.len() * d);
    let mut buf = AtomicBuffer::<T>::zeros(n * d);
    for (row, &i) in values.chunks_exact(d.max(1)).zip(index) {
        buf.add_row(i as usize * d, row);
    }
    let updates = buf.updates();
    (buf.into_vec(), updates)
}

/// Sums `values` (rows already in `perm` order) over each segment of `ptr`.
///
/// Every output row is owned by exactly one segment, accumulated left to right
/// and written once; empty segments give zero rows.
pub fn segment_reduce<T: Real>(values: &[T], ptr: &[usize], d: usize) -> Vec<T> {
    let n = ptr.len().saturating_sub(1);
    let mut out = vec![T::zero(); n * d];
    let mut acc = vec![T::zero(); d];
    for i in 0..n {
        acc.fill(T::zero());
        for p in ptr[i]..ptr[i + 1] {
            for (a, &v) in acc.iter_mut().zip(&values[p * d..(p + 1) * d]) {
                *a += v;
            }
        }
        out[i * d..(i + 1) * d].copy_from_slice(&acc);
    }
    out
}

/// Segmented reduction of edge-indexed rows through the layout's permutation.
pub fn segment_reduce_csr<T: Real>(values: &[T], csr: &CsrLayout, d: usize) -> Vec<T> {
    let n = csr.num_segments();
    let mut out = vec![T::zero(); n * d];
    let mut acc = vec![T::zero(); d];
    for i in 0..n {
        acc.fill(T::zero());
        for &e in csr.segment(i) {
            let e = e as usize;
            for (a, &v) in acc.iter_mut().zip(&values[e * d..(e + 1) * d]) {
                *a += v;
            }
        }
        out[i * d..(i + 1) * d].copy_from_slice(&acc);
    }
    out
}
