//! Structural metrics of trajectories against a native structure.

mod align;
mod contacts;
mod gdt;
mod graph;
mod series;
mod smoothing;

pub use align::{kabsch_align, rmsd, Alignment};
pub use contacts::{
    build_contacts, contact_value, fraction_native_contacts, ContactSet, DEFAULT_BETA, DEFAULT_CONTACT_CUTOFF,
    DEFAULT_LAMBDA, MIN_SEQUENCE_SEPARATION,
};
pub use gdt::{gdt_ts, GdtScore, GDT_CUTOFFS};
pub use graph::{frame_graph_stats, graph_stats, neighbor_graph_stats, GraphStats};
pub use series::{compute_metrics, MetricOptions, MetricSeries, MetricSummary, METRICS_COLUMNS, METRICS_SCHEMA};
pub use smoothing::{
    histogram_density, largest_metastable_q, savitzky_golay, DEFAULT_HISTOGRAM_BINS, DEFAULT_SG_ORDER,
    DEFAULT_SG_WINDOW, PEAK_NOISE_FLOOR,
};
