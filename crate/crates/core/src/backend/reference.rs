//! Materializing pipeline: every edge tensor (`B`, `W`, gathered sources,
//! messages) is built as a full `E`-row matrix and kept for the backward pass.

use super::common::*;
use crate::error::Result;
use crate::model::{rbf_expand_into, rbf_grad_into, BlockParams, MlpCache, ModelParams, RbfSpec};
use crate::neighbor::{CsrLayout, NeighborList};
use crate::real::Real;
use crate::segment::{scatter_add, segment_reduce_csr};
use crate::traffic::{mlp_backward_traffic, mlp_forward_traffic, Stage, TrafficReport};

/// How per-edge rows are summed into node rows.
#[derive(Debug, Clone)]
pub enum Aggregation {
    /// Atomic scatter-add in canonical edge order.
    Scatter,
    /// Segmented reduction over destination (forward) and source (backward) layouts.
    Segmented { dst: CsrLayout, src: CsrLayout },
}

#[derive(Debug, Clone)]
pub struct ReferenceBlockCache<T> {
    pub basis: Vec<T>,
    /// Filter MLP activations; its output is the filter matrix `W`.
    pub filter: MlpCache<T>,
    pub x_src: Vec<T>,
    pub messages: Vec<T>,
    pub h: Vec<T>,
    pub pre: MlpCache<T>,
    pub post: MlpCache<T>,
}

impl<T: Real> ReferenceBlockCache<T> {
    pub fn filters(&self) -> &[T] {
        self.filter.output()
    }
}

/// Everything the reference backward pass needs.
#[derive(Debug, Clone)]
pub struct ReferenceCaches<T> {
    pub n: usize,
    pub nl: NeighborList,
    pub geometry: EdgeGeometry<T>,
    pub blocks: Vec<ReferenceBlockCache<T>>,
    pub readout: MlpCache<T>,
    pub aggregation: Aggregation,
}

fn aggregate_forward<T: Real>(
    messages: &[T],
    nl: &NeighborList,
    agg: &Aggregation,
    n: usize,
    d: usize,
    report: &mut TrafficReport,
) -> Vec<T> {
    let (e, s) = (nl.num_edges() as u64, T::BYTES as u64);
    report.read(Stage::Aggregation, e * d as u64 * s);
    match agg {
        Aggregation::Scatter => {
            let (h, updates) = scatter_add(messages, &nl.dst, n, d);
            report.write(Stage::Aggregation, updates * s);
            report.atomic_updates += updates;
            h
        }
        Aggregation::Segmented { dst, .. } => {
            report.write(Stage::Aggregation, (n * d) as u64 * s);
            segment_reduce_csr(messages, dst, d)
        }
    }
}

fn aggregate_backward<T: Real>(
    grads: &[T],
    nl: &NeighborList,
    agg: &Aggregation,
    n: usize,
    d: usize,
    report: &mut TrafficReport,
) -> Vec<T> {
    let (e, s) = (nl.num_edges() as u64, T::BYTES as u64);
    report.read(Stage::Aggregation, e * d as u64 * s);
    match agg {
        Aggregation::Scatter => {
            let (g, updates) = scatter_add(grads, &nl.src, n, d);
            report.write(Stage::Aggregation, updates * s);
            report.atomic_updates += updates;
            g
        }
        Aggregation::Segmented { src, .. } => {
            report.write(Stage::Aggregation, (n * d) as u64 * s);
            segment_reduce_csr(grads, src, d)
        }
    }
}

/// Basis matrix `B` (`E x D_r`) for all edges.
pub fn radial_basis_matrix<T: Real>(d: &[T], rbf: &RbfSpec) -> Vec<T> {
    let k = rbf.dim();
    let mut b = vec![T::zero(); d.len() * k];
    for (row, &de) in b.chunks_exact_mut(k).zip(d) {
        rbf_expand_into(de, rbf, row);
    }
    b
}

/// `h_i = sum_{e: dst[e] = i} x_src[e] * w_e` by gather, multiply and scatter-add.
///
/// Returns the aggregated features and the number of atomic element updates.
pub fn cfconv_forward<T: Real>(x: &[T], w: &[T], nl: &NeighborList, d: usize) -> (Vec<T>, u64) {
    let n = nl.num_nodes();
    let mut m = Vec::with_capacity(nl.num_edges() * d);
    for (e, &s) in nl.src.iter().enumerate() {
        let xs = &x[s as usize * d..(s as usize + 1) * d];
        let we = &w[e * d..(e + 1) * d];
        m.extend(xs.iter().zip(we).map(|(a, b)| *a * *b));
    }
    scatter_add(&m, &nl.dst, n, d)
}

/// One materializing interaction block: `X' = X + post(cfconv(pre(X), filter(B)))`.
pub fn interaction_block<T: Real>(
    x: &[T],
    geometry: &EdgeGeometry<T>,
    nl: &NeighborList,
    block: &BlockParams<T>,
    rbf: &RbfSpec,
    agg: &Aggregation,
    report: &mut TrafficReport,
) -> (Vec<T>, ReferenceBlockCache<T>) {
    let n = nl.num_nodes();
    let e = nl.num_edges();
    let d = block.pre.out_dim();
    let s = T::BYTES as u64;
    let (n64, e64, d64) = (n as u64, e as u64, d as u64);

    let mut pre = MlpCache::new();
    let y = block.pre.forward_rows(x, n, &mut pre).to_vec();
    mlp_forward_traffic(report, Stage::Mlps, n64, &widths(&block.pre), s, mlp_width(&block.pre));

    let basis = radial_basis_matrix(&geometry.d, rbf);
    report.read(Stage::RadialBasis, e64 * s);
    report.write(Stage::RadialBasis, e64 * rbf.dim() as u64 * s);

    let mut filter = MlpCache::new();
    block.filter.forward_rows(&basis, e, &mut filter);
    mlp_forward_traffic(report, Stage::Filters, e64, &widths(&block.filter), s, mlp_width(&block.filter));
    let w = filter.output();

    let mut x_src = Vec::with_capacity(e * d);
    for &src in &nl.src {
        x_src.extend_from_slice(&y[src as usize * d..(src as usize + 1) * d]);
    }
    report.read(Stage::Gather, e64 * d64 * s);
    report.write(Stage::Gather, e64 * d64 * s);

    let messages: Vec<T> = x_src.iter().zip(w).map(|(a, b)| *a * *b).collect();
    report.read(Stage::Messages, 2 * e64 * d64 * s);
    report.write(Stage::Messages, e64 * d64 * s);

    let h = aggregate_forward(&messages, nl, agg, n, d, report);

    let mut post = MlpCache::new();
    let upd = block.post.forward_rows(&h, n, &mut post);
    mlp_forward_traffic(report, Stage::Mlps, n64, &widths(&block.post), s, mlp_width(&block.post));
    let x_next: Vec<T> = x.iter().zip(upd).map(|(a, b)| *a + *b).collect();
    report.read(Stage::Mlps, 2 * n64 * d64 * s);
    report.write(Stage::Mlps, n64 * d64 * s);

    let cache = ReferenceBlockCache {
        basis,
        filter,
        x_src,
        messages,
        h,
        pre,
        post,
    };
    (x_next, cache)
}

/// Energy, per-atom energies, caches and forward traffic of the reference model.
pub fn reference_energy<T: Real>(
    positions: &[[T; 3]],
    types: &[usize],
    params: &ModelParams<T>,
    nl: &NeighborList,
    aggregation: Aggregation,
) -> Result<(f64, Vec<T>, ReferenceCaches<T>, TrafficReport)> {
    check_inputs(positions, types, params, nl)?;
    let n = positions.len();
    let geometry = compute_edge_geometry(positions, nl);
    let mut report = TrafficReport::new();
    let mut x = embed(types, params);
    let mut blocks = Vec::with_capacity(params.num_blocks());
    for block in &params.blocks {
        let (next, cache) = interaction_block(&x, &geometry, nl, block, params.rbf(), &aggregation, &mut report);
        x = next;
        blocks.push(cache);
    }
    let mut readout = MlpCache::new();
    let (eps, energy) = readout_forward(params, &x, n, &mut readout);
    let caches = ReferenceCaches {
        n,
        nl: nl.clone(),
        geometry,
        blocks,
        readout,
        aggregation,
    };
    Ok((energy, eps, caches, report))
}

/// Analytic forces from the cached forward pass, with backward traffic.
pub fn reference_forces<T: Real>(caches: &mut ReferenceCaches<T>, params: &ModelParams<T>) -> (Vec<[T; 3]>, TrafficReport) {
    let n = caches.n;
    let nl = &caches.nl;
    let e = nl.num_edges();
    let d = params.config().hidden_dim;
    let rbf = params.rbf();
    let k = rbf.dim();
    let s = T::BYTES as u64;
    let (n64, e64, d64) = (n as u64, e as u64, d as u64);
    let mut report = TrafficReport::new();
    let mut dedd = vec![T::zero(); e];
    let mut g = readout_backward(params, n, &mut caches.readout);

    for (block, cache) in params.blocks.iter().zip(caches.blocks.iter_mut()).rev() {
        let mut g_h = Vec::new();
        block.post.backward_input_rows(&mut cache.post, &g, &mut g_h);
        mlp_backward_traffic(&mut report, Stage::Mlps, n64, &widths(&block.post), s, mlp_width(&block.post));

        let mut g_m = Vec::with_capacity(e * d);
        for &t in &nl.dst {
            g_m.extend_from_slice(&g_h[t as usize * d..(t as usize + 1) * d]);
        }
        report.read(Stage::Gather, e64 * d64 * s);
        report.write(Stage::Gather, e64 * d64 * s);

        let w = cache.filter.output();
        let g_xsrc: Vec<T> = g_m.iter().zip(w).map(|(a, b)| *a * *b).collect();
        let g_w: Vec<T> = g_m.iter().zip(&cache.x_src).map(|(a, b)| *a * *b).collect();
        report.read(Stage::Messages, 4 * e64 * d64 * s);
        report.write(Stage::Messages, 2 * e64 * d64 * s);
        drop(g_m);

        let g_y = aggregate_backward(&g_xsrc, nl, &caches.aggregation, n, d, &mut report);
        drop(g_xsrc);

        let mut g_b = Vec::new();
        block.filter.backward_input_rows(&mut cache.filter, &g_w, &mut g_b);
        mlp_backward_traffic(&mut report, Stage::Filters, e64, &widths(&block.filter), s, mlp_width(&block.filter));
        drop(g_w);

        let mut grad = vec![T::zero(); k];
        for (ei, de) in caches.geometry.d.iter().enumerate() {
            rbf_grad_into(*de, rbf, &mut grad);
            let row = &g_b[ei * k..(ei + 1) * k];
            let mut acc = T::zero();
            for (a, b) in row.iter().zip(&grad) {
                acc += *a * *b;
            }
            dedd[ei] += acc;
        }
        report.read(Stage::RadialBasis, e64 * k as u64 * s + e64 * s);
        report.write(Stage::RadialBasis, e64 * s);

        let mut g_pre = Vec::new();
        block.pre.backward_input_rows(&mut cache.pre, &g_y, &mut g_pre);
        mlp_backward_traffic(&mut report, Stage::Mlps, n64, &widths(&block.pre), s, mlp_width(&block.pre));
        for (a, b) in g.iter_mut().zip(&g_pre) {
            *a += *b;
        }
        report.read(Stage::Mlps, 2 * n64 * d64 * s);
        report.write(Stage::Mlps, n64 * d64 * s);
    }

    let forces = forces_from_edge_gradients(n, nl, &caches.geometry, &dedd);
    (forces, report)
}
