//! Modeled memory traffic: per-stage byte counters and the closed-form models
//! they must agree with.
//!
//! Bytes are what a bandwidth-bound device would move for activations and edge
//! tensors in one forward+backward evaluation of the interaction blocks. Weights,
//! index arrays, edge geometry (`u`, `d` construction, position gradients), the
//! embedding lookup and the readout head are not counted; every counted term is
//! per block, so models scale exactly with the block count.
//!
//! Scalars move at the evaluation width `s`; hidden activations internal to an
//! MLP move at the MLP width `q` (2 bytes for half-precision layers).

use std::fmt;
use std::ops::{Add, AddAssign};

/// Pipeline stages that carry traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    RadialBasis,
    Filters,
    Gather,
    Messages,
    Aggregation,
    Mlps,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::RadialBasis,
        Stage::Filters,
        Stage::Gather,
        Stage::Messages,
        Stage::Aggregation,
        Stage::Mlps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::RadialBasis => "radial_basis",
            Stage::Filters => "filters",
            Stage::Gather => "gather",
            Stage::Messages => "messages",
            Stage::Aggregation => "aggregation",
            Stage::Mlps => "mlps",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageBytes {
    pub read: u64,
    pub written: u64,
}

impl StageBytes {
    pub fn total(&self) -> u64 {
        self.read + self.written
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficReport {
    stages: [StageBytes; 6],
    /// Scatter-add element updates that would need atomics on a parallel device.
    pub atomic_updates: u64,
}

impl TrafficReport {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn read(&mut self, stage: Stage, bytes: u64) {
        self.stages[stage.index()].read += bytes;
    }

    #[inline]
    pub fn write(&mut self, stage: Stage, bytes: u64) {
        self.stages[stage.index()].written += bytes;
    }

    pub fn stage(&self, stage: Stage) -> StageBytes {
        self.stages[stage.index()]
    }

    pub fn total_read(&self) -> u64 {
        self.stages.iter().map(|s| s.read).sum()
    }

    pub fn total_written(&self) -> u64 {
        self.stages.iter().map(|s| s.written).sum()
    }

    pub fn total(&self) -> u64 {
        self.total_read() + self.total_written()
    }

    pub fn scaled(&self, k: u64) -> Self {
        let mut out = *self;
        for s in &mut out.stages {
            s.read *= k;
            s.written *= k;
        }
        out.atomic_updates *= k;
        out
    }
}

impl AddAssign for TrafficReport {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.stages.iter_mut().zip(rhs.stages) {
            a.read += b.read;
            a.written += b.written;
        }
        self.atomic_updates += rhs.atomic_updates;
    }
}

impl Add for TrafficReport {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl fmt::Display for TrafficReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in Stage::ALL {
            let b = self.stage(s);
            writeln!(f, "{:<13} read {:>14} written {:>14}", s.name(), b.read, b.written)?;
        }
        write!(
            f,
            "{:<13} read {:>14} written {:>14} atomics {}",
            "total",
            self.total_read(),
            self.total_written(),
            self.atomic_updates
        )
    }
}

/// Problem sizes for the closed-form traffic models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IoDims {
    pub nodes: u64,
    pub edges: u64,
    pub hidden: u64,
    pub rbf: u64,
    pub filter_hidden: u64,
    pub blocks: u64,
    /// Bytes per scalar of the evaluation precision.
    pub width: u64,
    /// Bytes per hidden activation inside MLPs.
    pub mlp_width: u64,
}

impl IoDims {
    pub fn new(nodes: usize, edges: usize, config: &crate::model::ModelConfig, width: usize, quantized: bool) -> Self {
        Self {
            nodes: nodes as u64,
            edges: edges as u64,
            hidden: config.hidden_dim as u64,
            rbf: config.rbf_dim as u64,
            filter_hidden: config.filter_hidden_dim as u64,
            blocks: config.num_blocks as u64,
            width: width as u64,
            mlp_width: if quantized { 2 } else { width as u64 },
        }
    }
}

/// Forward traffic of an MLP over `rows` rows: input read, hidden written then
/// read, output written.
pub fn mlp_forward_traffic(report: &mut TrafficReport, stage: Stage, rows: u64, widths: &[u64], s: u64, q: u64) {
    let hidden: u64 = widths[1..widths.len() - 1].iter().sum();
    report.read(stage, rows * (widths[0] * s + hidden * q));
    report.write(stage, rows * (hidden * q + widths[widths.len() - 1] * s));
}

/// Input-gradient traffic: output gradient and cached pre-activations read,
/// hidden gradient written then read, input gradient written.
pub fn mlp_backward_traffic(report: &mut TrafficReport, stage: Stage, rows: u64, widths: &[u64], s: u64, q: u64) {
    let hidden: u64 = widths[1..widths.len() - 1].iter().sum();
    report.read(stage, rows * (widths[widths.len() - 1] * s + 2 * hidden * q));
    report.write(stage, rows * (hidden * q + widths[0] * s));
}

/// Node-level MLP traffic of one block, identical for both pipelines.
pub fn node_mlp_traffic_forward(report: &mut TrafficReport, n: u64, d: u64, s: u64, q: u64) {
    mlp_forward_traffic(report, Stage::Mlps, n, &[d, d], s, q);
    mlp_forward_traffic(report, Stage::Mlps, n, &[d, d, d], s, q);
    // residual: X and post output read, X' written
    report.read(Stage::Mlps, 2 * n * d * s);
    report.write(Stage::Mlps, n * d * s);
}

pub fn node_mlp_traffic_backward(report: &mut TrafficReport, n: u64, d: u64, s: u64, q: u64) {
    mlp_backward_traffic(report, Stage::Mlps, n, &[d, d, d], s, q);
    mlp_backward_traffic(report, Stage::Mlps, n, &[d, d], s, q);
    // residual: incoming gradient and pre-linear gradient summed
    report.read(Stage::Mlps, 2 * n * d * s);
    report.write(Stage::Mlps, n * d * s);
}

/// Closed-form traffic of the materializing pipeline.
///
/// Per block and edge: `B`, the filter hidden layer, `W`, the gathered sources
/// and `M` are written and read back in the forward pass; the backward pass
/// materializes the gathered output gradient, the source and filter gradients,
/// and the basis gradient.
pub fn io_breakdown_base(dims: &IoDims) -> TrafficReport {
    let IoDims {
        nodes: n,
        edges: e,
        hidden: d,
        rbf: dr,
        filter_hidden: fh,
        width: s,
        mlp_width: q,
        ..
    } = *dims;
    let mut r = TrafficReport::new();
    // forward
    r.read(Stage::RadialBasis, e * s);
    r.write(Stage::RadialBasis, e * dr * s);
    mlp_forward_traffic(&mut r, Stage::Filters, e, &[dr, fh, d], s, q);
    r.read(Stage::Gather, e * d * s);
    r.write(Stage::Gather, e * d * s);
    r.read(Stage::Messages, 2 * e * d * s);
    r.write(Stage::Messages, e * d * s);
    r.read(Stage::Aggregation, e * d * s);
    r.write(Stage::Aggregation, e * d * s);
    node_mlp_traffic_forward(&mut r, n, d, s, q);
    // backward
    node_mlp_traffic_backward(&mut r, n, d, s, q);
    r.read(Stage::Gather, e * d * s);
    r.write(Stage::Gather, e * d * s);
    r.read(Stage::Messages, 4 * e * d * s);
    r.write(Stage::Messages, 2 * e * d * s);
    r.read(Stage::Aggregation, e * d * s);
    r.write(Stage::Aggregation, e * d * s);
    mlp_backward_traffic(&mut r, Stage::Filters, e, &[dr, fh, d], s, q);
    r.read(Stage::RadialBasis, e * dr * s + e * s);
    r.write(Stage::RadialBasis, e * s);
    r.atomic_updates = 2 * e * d;
    r.scaled(dims.blocks)
}

/// Closed-form traffic of the fused, segment-reduced pipeline.
///
/// Per block and edge only the cached distance and one gathered feature row move
/// in each direction; the basis, filters and messages stay in tile-local
/// buffers. Each segment writes its output row once and the backward pass reads
/// the owned source row once. Assumes no segment was split into chunks.
pub fn io_breakdown_flash(dims: &IoDims) -> TrafficReport {
    let IoDims {
        nodes: n,
        edges: e,
        hidden: d,
        width: s,
        mlp_width: q,
        ..
    } = *dims;
    let mut r = TrafficReport::new();
    r.read(Stage::RadialBasis, e * s);
    r.read(Stage::Gather, e * d * s);
    r.write(Stage::Aggregation, n * d * s);
    node_mlp_traffic_forward(&mut r, n, d, s, q);
    node_mlp_traffic_backward(&mut r, n, d, s, q);
    r.read(Stage::RadialBasis, e * s);
    r.write(Stage::RadialBasis, e * s);
    r.read(Stage::Gather, e * d * s + n * d * s);
    r.write(Stage::Aggregation, n * d * s);
    r.scaled(dims.blocks)
}

pub fn io_model_base(dims: &IoDims) -> u64 {
    io_breakdown_base(dims).total()
}

pub fn io_model_flash(dims: &IoDims) -> u64 {
    io_breakdown_flash(dims).total()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(n: u64, e: u64, t: u64) -> IoDims {
        IoDims {
            nodes: n,
            edges: e,
            hidden: 128,
            rbf: 64,
            filter_hidden: 128,
            blocks: t,
            width: 4,
            mlp_width: 4,
        }
    }

    #[test]
    fn totals_are_sums_of_stages() {
        let r = io_breakdown_base(&dims(100, 4000, 3));
        let sum: u64 = Stage::ALL.iter().map(|&s| r.stage(s).total()).sum();
        assert_eq!(sum, r.total());
    }

    #[test]
    fn linear_in_blocks() {
        for t in 1..5 {
            assert_eq!(io_model_base(&dims(50, 900, 2 * t)), 2 * io_model_base(&dims(50, 900, t)));
            assert_eq!(io_model_flash(&dims(50, 900, 2 * t)), 2 * io_model_flash(&dims(50, 900, t)));
        }
    }

    #[test]
    fn per_edge_and_per_node_constants() {
        let one_edge = io_model_base(&dims(0, 1, 1));
        assert_eq!(one_edge, 3 * 4 + 4 * 64 * 4 + 19 * 128 * 4 + 5 * 128 * 4);
        assert_eq!(io_model_flash(&dims(0, 1, 1)), 3 * 4 + 2 * 128 * 4);
        assert_eq!(io_model_base(&dims(1, 0, 1)), 19 * 128 * 4);
        assert_eq!(io_model_flash(&dims(1, 0, 1)), 22 * 128 * 4);
    }

    #[test]
    fn degenerate_limit_within_constant_factor() {
        let mut d = dims(1000, 1000, 1);
        d.rbf = 1;
        let ratio = io_model_base(&d) as f64 / io_model_flash(&d) as f64;
        assert!(ratio > 1.0 && ratio < 4.0, "{ratio}");
    }
}
