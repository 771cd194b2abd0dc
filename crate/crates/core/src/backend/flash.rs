//! Fused pipeline: radial basis, filter MLP and messages are evaluated per tile of
//! edges and never stored. Forward sums messages over destination segments,
//! backward recomputes the filters from cached distances and sums over source
//! segments, so every output row has exactly one writer.

use rayon::prelude::*;

use super::common::*;
use crate::error::Result;
use crate::model::{rbf_expand_and_grad_into, rbf_expand_into, Mlp, MlpCache, ModelParams, RbfSpec};
use crate::neighbor::{group_by_destination, group_by_source, CsrLayout, NeighborList};
use crate::real::{AtomicBuffer, Real};
use crate::traffic::{mlp_backward_traffic, mlp_forward_traffic, Stage, TrafficReport};

/// Tiling and partitioning knobs of the fused kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlashOptions {
    /// Edges evaluated together through the filter MLP.
    pub tile_edges: usize,
    /// Target edge count of one work unit of consecutive segments.
    pub unit_edges: usize,
    /// Segments longer than this are split into chunks with private partials.
    pub max_segment: usize,
    /// Test hook: negates filter channel 0 in the forward pass.
    pub inject_fault: bool,
}

impl Default for FlashOptions {
    fn default() -> Self {
        Self {
            tile_edges: 128,
            unit_edges: 1024,
            max_segment: 8192,
            inject_fault: false,
        }
    }
}

/// A unit of exclusive-ownership work over one CSR layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Whole segments of nodes `start..end`.
    Nodes { start: usize, end: usize },
    /// Positions `p0..p1` of the oversized segment of `node`.
    Chunk { node: usize, p0: usize, p1: usize },
}

/// Partitions segments into work units of roughly `unit_edges` edges.
pub fn plan_tasks(csr: &CsrLayout, opts: &FlashOptions) -> Vec<Task> {
    let n = csr.num_segments();
    let mut tasks = Vec::new();
    let mut start = 0;
    let mut edges = 0;
    for i in 0..n {
        let len = csr.ptr[i + 1] - csr.ptr[i];
        if len > opts.max_segment {
            if start < i {
                tasks.push(Task::Nodes { start, end: i });
            }
            let mut p = csr.ptr[i];
            while p < csr.ptr[i + 1] {
                let p1 = (p + opts.max_segment).min(csr.ptr[i + 1]);
                tasks.push(Task::Chunk { node: i, p0: p, p1 });
                p = p1;
            }
            start = i + 1;
            edges = 0;
            continue;
        }
        edges += len;
        if edges >= opts.unit_edges {
            tasks.push(Task::Nodes { start, end: i + 1 });
            start = i + 1;
            edges = 0;
        }
    }
    if start < n {
        tasks.push(Task::Nodes { start, end: n });
    }
    tasks
}

/// Per-worker buffers for one tile.
struct Tile<T> {
    basis: Vec<T>,
    basis_grad: Vec<T>,
    filter: MlpCache<T>,
    grad_w: Vec<T>,
    grad_b: Vec<T>,
}

impl<T: Real> Tile<T> {
    fn new() -> Self {
        Self {
            basis: Vec::new(),
            basis_grad: Vec::new(),
            filter: MlpCache::new(),
            grad_w: Vec::new(),
            grad_b: Vec::new(),
        }
    }

    /// Evaluates `w_e` for the tile's edges; with `grad` also keeps `db/dd`.
    fn filters(&mut self, edges: &[u32], dist: &[T], rbf: &RbfSpec, filter: &Mlp<T>, grad: bool) {
        let k = rbf.dim();
        let rows = edges.len();
        self.basis.resize(rows * k, T::zero());
        if grad {
            self.basis_grad.resize(rows * k, T::zero());
            for (r, &e) in edges.iter().enumerate() {
                rbf_expand_and_grad_into(
                    dist[e as usize],
                    rbf,
                    &mut self.basis[r * k..(r + 1) * k],
                    &mut self.basis_grad[r * k..(r + 1) * k],
                );
            }
        } else {
            for (r, &e) in edges.iter().enumerate() {
                rbf_expand_into(dist[e as usize], rbf, &mut self.basis[r * k..(r + 1) * k]);
            }
        }
        filter.forward_rows(&self.basis, rows, &mut self.filter);
    }
}

struct Ctx<'a, T> {
    nl: &'a NeighborList,
    dist: &'a [T],
    rbf: &'a RbfSpec,
    filter: &'a Mlp<T>,
    d: usize,
    opts: &'a FlashOptions,
}

struct ForwardOut<T> {
    rows: Vec<T>,
    report: TrafficReport,
}

/// Sums `y[src] * w_e` over positions `p0..p1` of `csr` into `out`, whose first
/// row belongs to node `first`.
fn forward_range<T: Real>(
    ctx: &Ctx<'_, T>,
    csr: &CsrLayout,
    y: &[T],
    first: usize,
    p0: usize,
    p1: usize,
    out: &mut [T],
    tile: &mut Tile<T>,
    report: &mut TrafficReport,
) {
    let d = ctx.d;
    let s = T::BYTES as u64;
    let mut p = p0;
    while p < p1 {
        let q = (p + ctx.opts.tile_edges).min(p1);
        let edges = &csr.perm[p..q];
        tile.filters(edges, ctx.dist, ctx.rbf, ctx.filter, false);
        let w = tile.filter.output();
        for (r, &e) in edges.iter().enumerate() {
            let e = e as usize;
            let src = ctx.nl.src[e] as usize;
            let dst = ctx.nl.dst[e] as usize;
            let acc = &mut out[(dst - first) * d..(dst - first + 1) * d];
            let ys = &y[src * d..(src + 1) * d];
            let we = &w[r * d..(r + 1) * d];
            if ctx.opts.inject_fault {
                acc[0] -= ys[0] * we[0];
                for c in 1..d {
                    acc[c] += ys[c] * we[c];
                }
            } else {
                for c in 0..d {
                    acc[c] += ys[c] * we[c];
                }
            }
        }
        let rows = (q - p) as u64;
        report.read(Stage::RadialBasis, rows * s);
        report.read(Stage::Gather, rows * d as u64 * s);
        p = q;
    }
}

fn forward_task<T: Real>(ctx: &Ctx<'_, T>, csr: &CsrLayout, y: &[T], task: Task, tile: &mut Tile<T>) -> ForwardOut<T> {
    let d = ctx.d;
    let s = T::BYTES as u64;
    let mut report = TrafficReport::new();
    let rows = match task {
        Task::Nodes { start, end } => {
            let mut rows = vec![T::zero(); (end - start) * d];
            forward_range(ctx, csr, y, start, csr.ptr[start], csr.ptr[end], &mut rows, tile, &mut report);
            report.write(Stage::Aggregation, ((end - start) * d) as u64 * s);
            rows
        }
        Task::Chunk { node, p0, p1 } => {
            let mut rows = vec![T::zero(); d];
            forward_range(ctx, csr, y, node, p0, p1, &mut rows, tile, &mut report);
            report.write(Stage::Aggregation, d as u64 * s);
            rows
        }
    };
    ForwardOut { rows, report }
}

/// Writes task outputs into an `n x d` matrix; chunk partials of a node are
/// combined in chunk order.
fn assemble<T: Real>(tasks: &[Task], outs: &[Vec<T>], n: usize, d: usize, report: &mut TrafficReport) -> Vec<T> {
    let s = T::BYTES as u64;
    let mut out = vec![T::zero(); n * d];
    let mut i = 0;
    while i < tasks.len() {
        match tasks[i] {
            Task::Nodes { start, end } => {
                out[start * d..end * d].copy_from_slice(&outs[i]);
                i += 1;
            }
            Task::Chunk { node, .. } => {
                let row = &mut out[node * d..(node + 1) * d];
                let mut count = 0;
                while i < tasks.len() && matches!(tasks[i], Task::Chunk { node: m, .. } if m == node) {
                    for (a, b) in row.iter_mut().zip(&outs[i]) {
                        *a += *b;
                    }
                    count += 1;
                    i += 1;
                }
                report.read(Stage::Aggregation, count * d as u64 * s);
                report.write(Stage::Aggregation, d as u64 * s);
            }
        }
    }
    out
}

/// Destination-grouped fused message passing: `h_i = sum_{dst=i} y_src * w_e`.
pub fn fused_aggregate<T: Real>(
    y: &[T],
    dist: &[T],
    nl: &NeighborList,
    dst_csr: &CsrLayout,
    tasks: &[Task],
    filter: &Mlp<T>,
    rbf: &RbfSpec,
    opts: &FlashOptions,
    report: &mut TrafficReport,
) -> Vec<T> {
    let d = filter.out_dim();
    let ctx = Ctx {
        nl,
        dist,
        rbf,
        filter,
        d,
        opts,
    };
    let outs: Vec<ForwardOut<T>> = tasks
        .par_iter()
        .map_init(Tile::new, |tile, &task| forward_task(&ctx, dst_csr, y, task, tile))
        .collect();
    let mut rows = Vec::with_capacity(outs.len());
    for o in outs {
        *report += o.report;
        rows.push(o.rows);
    }
    assemble(tasks, &rows, nl.num_nodes(), d, report)
}

struct BackwardOut<T> {
    rows: Vec<T>,
    dedd: Vec<T>,
    report: TrafficReport,
}

#[allow(clippy::too_many_arguments)]
fn backward_range<T: Real>(
    ctx: &Ctx<'_, T>,
    csr: &CsrLayout,
    y: &[T],
    g_h: &[T],
    first: usize,
    p0: usize,
    p1: usize,
    out: &mut [T],
    dedd: &mut [T],
    tile: &mut Tile<T>,
    report: &mut TrafficReport,
) {
    let d = ctx.d;
    let k = ctx.rbf.dim();
    let s = T::BYTES as u64;
    let mut p = p0;
    while p < p1 {
        let q = (p + ctx.opts.tile_edges).min(p1);
        let edges = &csr.perm[p..q];
        let rows = edges.len();
        tile.filters(edges, ctx.dist, ctx.rbf, ctx.filter, true);
        tile.grad_w.resize(rows * d, T::zero());
        {
            let w = tile.filter.output();
            for (r, &e) in edges.iter().enumerate() {
                let e = e as usize;
                let src = ctx.nl.src[e] as usize;
                let dst = ctx.nl.dst[e] as usize;
                let gh = &g_h[dst * d..(dst + 1) * d];
                let own = &y[src * d..(src + 1) * d];
                let we = &w[r * d..(r + 1) * d];
                let acc = &mut out[(src - first) * d..(src - first + 1) * d];
                let gw = &mut tile.grad_w[r * d..(r + 1) * d];
                for c in 0..d {
                    acc[c] += gh[c] * we[c];
                    gw[c] = gh[c] * own[c];
                }
            }
        }
        let mut grad_b = std::mem::take(&mut tile.grad_b);
        ctx.filter.backward_input_rows(&mut tile.filter, &tile.grad_w, &mut grad_b);
        for r in 0..rows {
            let gb = &grad_b[r * k..(r + 1) * k];
            let db = &tile.basis_grad[r * k..(r + 1) * k];
            let mut acc = T::zero();
            for (a, b) in gb.iter().zip(db) {
                acc += *a * *b;
            }
            dedd[p - p0 + r] = acc;
        }
        tile.grad_b = grad_b;
        let rows = rows as u64;
        report.read(Stage::RadialBasis, rows * s);
        report.write(Stage::RadialBasis, rows * s);
        report.read(Stage::Gather, rows * d as u64 * s);
        p = q;
    }
}

#[allow(clippy::too_many_arguments)]
fn backward_task<T: Real>(
    ctx: &Ctx<'_, T>,
    csr: &CsrLayout,
    y: &[T],
    g_h: &[T],
    task: Task,
    tile: &mut Tile<T>,
) -> BackwardOut<T> {
    let d = ctx.d;
    let s = T::BYTES as u64;
    let mut report = TrafficReport::new();
    let (first, last, p0, p1) = match task {
        Task::Nodes { start, end } => (start, end, csr.ptr[start], csr.ptr[end]),
        Task::Chunk { node, p0, p1 } => (node, node + 1, p0, p1),
    };
    let mut rows = vec![T::zero(); (last - first) * d];
    let mut dedd = vec![T::zero(); p1 - p0];
    backward_range(ctx, csr, y, g_h, first, p0, p1, &mut rows, &mut dedd, tile, &mut report);
    // each segment loads its owned row once and writes its gradient row once
    let owned = ((last - first) * d) as u64 * s;
    report.read(Stage::Gather, owned);
    report.write(Stage::Aggregation, owned);
    BackwardOut { rows, dedd, report }
}

/// Source-grouped backward: returns `dL/dy` rows and per-edge `dL/dd`, the
/// latter indexed by edge id.
#[allow(clippy::too_many_arguments)]
pub fn fused_aggregate_backward<T: Real>(
    y: &[T],
    g_h: &[T],
    dist: &[T],
    nl: &NeighborList,
    src_csr: &CsrLayout,
    tasks: &[Task],
    filter: &Mlp<T>,
    rbf: &RbfSpec,
    opts: &FlashOptions,
    dedd_acc: &mut [T],
    report: &mut TrafficReport,
) -> Vec<T> {
    let d = filter.out_dim();
    let ctx = Ctx {
        nl,
        dist,
        rbf,
        filter,
        d,
        opts,
    };
    let outs: Vec<BackwardOut<T>> = tasks
        .par_iter()
        .map_init(Tile::new, |tile, &task| backward_task(&ctx, src_csr, y, g_h, task, tile))
        .collect();
    let mut rows = Vec::with_capacity(outs.len());
    for (task, o) in tasks.iter().zip(outs) {
        *report += o.report;
        let p0 = match *task {
            Task::Nodes { start, .. } => src_csr.ptr[start],
            Task::Chunk { p0, .. } => p0,
        };
        for (i, v) in o.dedd.into_iter().enumerate() {
            dedd_acc[src_csr.perm[p0 + i] as usize] += v;
        }
        rows.push(o.rows);
    }
    assemble(tasks, &rows, nl.num_nodes(), d, report)
}

/// Forces from per-edge `dL/dd` with one owner per atom: incoming edges through
/// the destination layout, outgoing ones through the source layout.
pub fn segmented_forces<T: Real>(
    positions: &[[T; 3]],
    nl: &NeighborList,
    dist: &[T],
    dedd: &[T],
    dst_csr: &CsrLayout,
    src_csr: &CsrLayout,
) -> Vec<[T; 3]> {
    let n = positions.len();
    let edge_term = |e: usize| -> [T; 3] {
        let (s, t) = (nl.src[e] as usize, nl.dst[e] as usize);
        let u = [
            positions[t][0] - positions[s][0],
            positions[t][1] - positions[s][1],
            positions[t][2] - positions[s][2],
        ];
        let dir = unit_direction(u, dist[e]);
        [dedd[e] * dir[0], dedd[e] * dir[1], dedd[e] * dir[2]]
    };
    (0..n)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            let mut g = [T::zero(); 3];
            for &e in dst_csr.segment(i) {
                let v = edge_term(e as usize);
                for k in 0..3 {
                    g[k] += v[k];
                }
            }
            for &e in src_csr.segment(i) {
                let v = edge_term(e as usize);
                for k in 0..3 {
                    g[k] -= v[k];
                }
            }
            [-g[0], -g[1], -g[2]]
        })
        .collect()
}

/// Energy and forces with fused edge evaluation.
///
/// With `segmented` the reductions run over CSR segments in parallel; without it
/// the fused messages are scatter-added in canonical edge order.
pub fn flash_forward_backward<T: Real>(
    positions: &[[T; 3]],
    types: &[usize],
    params: &ModelParams<T>,
    nl: &NeighborList,
    segmented: bool,
    opts: &FlashOptions,
) -> Result<FlashResult<T>> {
    check_inputs(positions, types, params, nl)?;
    let n = positions.len();
    let e = nl.num_edges();
    let d = params.config().hidden_dim;
    let s = T::BYTES as u64;
    let (n64, d64) = (n as u64, d as u64);
    let rbf = params.rbf();

    let t0 = std::time::Instant::now();
    let layouts = if segmented {
        let dst = group_by_destination(nl, n);
        let src = group_by_source(nl, n);
        let dst_tasks = plan_tasks(&dst, opts);
        let src_tasks = plan_tasks(&src, opts);
        Some((dst, src, dst_tasks, src_tasks))
    } else {
        None
    };
    let index_seconds = t0.elapsed().as_secs_f64();

    let dist = compute_distances(positions, nl);
    let mut report = TrafficReport::new();
    let mut x = embed(types, params);
    let mut ys: Vec<Vec<T>> = Vec::with_capacity(params.num_blocks());
    let mut posts: Vec<MlpCache<T>> = Vec::with_capacity(params.num_blocks());

    for block in &params.blocks {
        let mut pre = MlpCache::new();
        block.pre.forward_rows(&x, n, &mut pre);
        mlp_forward_traffic(&mut report, Stage::Mlps, n64, &widths(&block.pre), s, mlp_width(&block.pre));
        let mut y = pre.output().to_vec();
        drop(pre);

        let h = match &layouts {
            Some((dst, _, tasks, _)) => fused_aggregate(&y, &dist, nl, dst, tasks, &block.filter, rbf, opts, &mut report),
            None => scatter_forward(&y, &dist, nl, &block.filter, rbf, opts, &mut report),
        };

        let mut post = MlpCache::new();
        let upd = block.post.forward_rows(&h, n, &mut post);
        mlp_forward_traffic(&mut report, Stage::Mlps, n64, &widths(&block.post), s, mlp_width(&block.post));
        for (a, b) in x.iter_mut().zip(upd) {
            *a += *b;
        }
        report.read(Stage::Mlps, 2 * n64 * d64 * s);
        report.write(Stage::Mlps, n64 * d64 * s);
        drop(h);
        post.compact();
        y.shrink_to_fit();
        ys.push(y);
        posts.push(post);
    }

    let mut readout = MlpCache::new();
    let (atom_energies, energy) = readout_forward(params, &x, n, &mut readout);
    drop(x);

    let mut g = readout_backward(params, n, &mut readout);
    drop(readout);
    let mut dedd = vec![T::zero(); e];
    for (t, block) in params.blocks.iter().enumerate().rev() {
        let mut g_h = Vec::new();
        block.post.backward_input_rows(&mut posts[t], &g, &mut g_h);
        mlp_backward_traffic(&mut report, Stage::Mlps, n64, &widths(&block.post), s, mlp_width(&block.post));
        posts.pop();

        let y = ys.pop().expect("one cached row set per block");
        let g_y = match &layouts {
            Some((_, src, _, tasks)) => fused_aggregate_backward(
                &y, &g_h, &dist, nl, src, tasks, &block.filter, rbf, opts, &mut dedd, &mut report,
            ),
            None => scatter_backward(&y, &g_h, &dist, nl, &block.filter, rbf, opts, &mut dedd, &mut report),
        };
        drop(y);
        drop(g_h);

        let mut pre = MlpCache::for_affine(&block.pre, n);
        let mut g_pre = Vec::new();
        block.pre.backward_input_rows(&mut pre, &g_y, &mut g_pre);
        mlp_backward_traffic(&mut report, Stage::Mlps, n64, &widths(&block.pre), s, mlp_width(&block.pre));
        for (a, b) in g.iter_mut().zip(&g_pre) {
            *a += *b;
        }
        report.read(Stage::Mlps, 2 * n64 * d64 * s);
        report.write(Stage::Mlps, n64 * d64 * s);
    }

    let forces = match &layouts {
        Some((dst, src, _, _)) => segmented_forces(positions, nl, &dist, &dedd, dst, src),
        None => {
            let geometry = compute_edge_geometry(positions, nl);
            forces_from_edge_gradients(n, nl, &geometry, &dedd)
        }
    };
    Ok(FlashResult {
        energy,
        atom_energies,
        forces,
        traffic: report,
        index_seconds,
    })
}

pub struct FlashResult<T> {
    pub energy: f64,
    pub atom_energies: Vec<T>,
    pub forces: Vec<[T; 3]>,
    pub traffic: TrafficReport,
    pub index_seconds: f64,
}

/// Fused messages scatter-added in canonical edge order.
fn scatter_forward<T: Real>(
    y: &[T],
    dist: &[T],
    nl: &NeighborList,
    filter: &Mlp<T>,
    rbf: &RbfSpec,
    opts: &FlashOptions,
    report: &mut TrafficReport,
) -> Vec<T> {
    let d = filter.out_dim();
    let s = T::BYTES as u64;
    let e = nl.num_edges();
    let mut tile = Tile::new();
    let mut h = AtomicBuffer::<T>::zeros(nl.num_nodes() * d);
    let mut msg = vec![T::zero(); d];
    let ids: Vec<u32> = (0..e as u32).collect();
    for chunk in ids.chunks(opts.tile_edges.max(1)) {
        tile.filters(chunk, dist, rbf, filter, false);
        let w = tile.filter.output();
        for (r, &ei) in chunk.iter().enumerate() {
            let ei = ei as usize;
            let src = nl.src[ei] as usize;
            let ys = &y[src * d..(src + 1) * d];
            for c in 0..d {
                msg[c] = ys[c] * w[r * d + c];
            }
            if opts.inject_fault {
                msg[0] = -msg[0];
            }
            h.add_row(nl.dst[ei] as usize * d, &msg);
        }
        let rows = chunk.len() as u64;
        report.read(Stage::RadialBasis, rows * s);
        report.read(Stage::Gather, rows * d as u64 * s);
    }
    report.write(Stage::Aggregation, h.updates() * s);
    report.atomic_updates += h.updates();
    h.into_vec()
}

#[allow(clippy::too_many_arguments)]
fn scatter_backward<T: Real>(
    y: &[T],
    g_h: &[T],
    dist: &[T],
    nl: &NeighborList,
    filter: &Mlp<T>,
    rbf: &RbfSpec,
    opts: &FlashOptions,
    dedd: &mut [T],
    report: &mut TrafficReport,
) -> Vec<T> {
    let d = filter.out_dim();
    let k = rbf.dim();
    let s = T::BYTES as u64;
    let e = nl.num_edges();
    let mut tile = Tile::new();
    let mut g_y = AtomicBuffer::<T>::zeros(nl.num_nodes() * d);
    let mut msg = vec![T::zero(); d];
    let mut grad_b = Vec::new();
    let ids: Vec<u32> = (0..e as u32).collect();
    for chunk in ids.chunks(opts.tile_edges.max(1)) {
        let rows = chunk.len();
        tile.filters(chunk, dist, rbf, filter, true);
        tile.grad_w.resize(rows * d, T::zero());
        {
            let w = tile.filter.output();
            for (r, &ei) in chunk.iter().enumerate() {
                let ei = ei as usize;
                let (src, dst) = (nl.src[ei] as usize, nl.dst[ei] as usize);
                for c in 0..d {
                    let gh = g_h[dst * d + c];
                    msg[c] = gh * w[r * d + c];
                    tile.grad_w[r * d + c] = gh * y[src * d + c];
                }
                g_y.add_row(src * d, &msg);
            }
        }
        filter.backward_input_rows(&mut tile.filter, &tile.grad_w, &mut grad_b);
        for (r, &ei) in chunk.iter().enumerate() {
            let mut acc = T::zero();
            for j in 0..k {
                acc += grad_b[r * k + j] * tile.basis_grad[r * k + j];
            }
            dedd[ei as usize] += acc;
        }
        let rows = rows as u64;
        report.read(Stage::RadialBasis, rows * s);
        report.write(Stage::RadialBasis, rows * s);
        report.read(Stage::Gather, 2 * rows * d as u64 * s);
    }
    report.write(Stage::Aggregation, g_y.updates() * s);
    report.atomic_updates += g_y.updates();
    g_y.into_vec()
}
