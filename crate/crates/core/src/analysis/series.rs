use std::fmt::Write as _;

use rayon::prelude::*;

use super::align::rmsd;
use super::contacts::{
    build_contacts, fraction_native_contacts, DEFAULT_BETA, DEFAULT_CONTACT_CUTOFF, DEFAULT_LAMBDA,
    MIN_SEQUENCE_SEPARATION,
};
use super::gdt::gdt_ts;
use super::graph::frame_graph_stats;
use super::smoothing::largest_metastable_q;
use crate::error::{Error, Result};
use crate::md::Frame;

pub const METRICS_SCHEMA: &str = "# schema: flashcg-metrics v1";
pub const METRICS_COLUMNS: &str = "frame,step,replica,rmsd,q,gdt_ts,edges";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    pub q: bool,
    pub gdt: bool,
    pub contact_cutoff: f64,
    pub min_separation: usize,
    pub beta: f64,
    pub lambda: f64,
    /// Radius of the graph whose edges are counted, in nm.
    pub graph_cutoff: f64,
    /// Fraction of frames, ranked by Q then RMSD, averaged for the summary GDT-TS.
    pub select_fraction: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            q: true,
            gdt: true,
            contact_cutoff: DEFAULT_CONTACT_CUTOFF,
            min_separation: MIN_SEQUENCE_SEPARATION,
            beta: DEFAULT_BETA,
            lambda: DEFAULT_LAMBDA,
            graph_cutoff: 1.2,
            select_fraction: 0.1,
        }
    }
}

/// Per-frame metrics. Optional columns are `None` when not requested.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricSeries {
    pub step: Vec<u64>,
    pub replica: Vec<usize>,
    /// nm, against the native structure or else the first frame.
    pub rmsd: Vec<f64>,
    pub q: Option<Vec<f64>>,
    pub gdt_ts: Option<Vec<f64>>,
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub frames: usize,
    pub largest_metastable_q: Option<f64>,
    pub mean_gdt_ts_selected: Option<f64>,
    pub mean_edges: f64,
    pub min_edges: usize,
    pub max_edges: usize,
}

struct Row {
    rmsd: f64,
    q: Option<f64>,
    gdt: Option<f64>,
    edges: usize,
}

pub fn compute_metrics(frames: &[Frame], native: Option<&[[f64; 3]]>, opts: &MetricOptions) -> Result<MetricSeries> {
    let first = frames.first().ok_or_else(|| Error::InvalidInput("trajectory has no frames".into()))?;
    if (opts.q || opts.gdt) && native.is_none() {
        return Err(Error::InvalidInput("Q and GDT-TS need a native structure".into()));
    }
    let reference = native.unwrap_or(&first.positions);
    if let Some(f) = frames.iter().find(|f| f.positions.len() != reference.len()) {
        return Err(Error::Shape(format!(
            "frame at step {} has {} beads, reference has {}",
            f.step,
            f.positions.len(),
            reference.len()
        )));
    }
    let contacts = if opts.q {
        Some(build_contacts(reference, opts.contact_cutoff, opts.min_separation))
    } else {
        None
    };
    let rows: Vec<Row> = frames
        .par_iter()
        .map(|f| {
            Ok(Row {
                rmsd: rmsd(&f.positions, reference)?,
                q: contacts
                    .as_ref()
                    .map(|c| fraction_native_contacts(&f.positions, c, opts.beta, opts.lambda))
                    .transpose()?,
                gdt: if opts.gdt { Some(gdt_ts(&f.positions, reference)?.score) } else { None },
                edges: frame_graph_stats(&f.positions, opts.graph_cutoff).edges,
            })
        })
        .collect::<Result<_>>()?;
    Ok(MetricSeries {
        step: frames.iter().map(|f| f.step).collect(),
        replica: frames.iter().map(|f| f.replica).collect(),
        rmsd: rows.iter().map(|r| r.rmsd).collect(),
        q: opts.q.then(|| rows.iter().map(|r| r.q.unwrap()).collect()),
        gdt_ts: opts.gdt.then(|| rows.iter().map(|r| r.gdt.unwrap()).collect()),
        edges: rows.iter().map(|r| r.edges).collect(),
    })
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step.is_empty()
    }

    /// Indices of the `fraction` most native-like frames: highest Q, ties and
    /// Q-less series ranked by lowest RMSD.
    pub fn select_native_like(&self, fraction: f64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            let by_q = match &self.q {
                Some(q) => q[b].total_cmp(&q[a]),
                None => std::cmp::Ordering::Equal,
            };
            by_q.then(self.rmsd[a].total_cmp(&self.rmsd[b])).then(a.cmp(&b))
        });
        let keep = ((fraction * self.len() as f64).ceil() as usize).clamp(1, self.len().max(1));
        idx.truncate(keep);
        idx
    }

    pub fn summary(&self, select_fraction: f64) -> Result<MetricSummary> {
        if self.is_empty() {
            return Err(Error::InvalidInput("no frames to summarize".into()));
        }
        let sel = self.select_native_like(select_fraction);
        Ok(MetricSummary {
            frames: self.len(),
            largest_metastable_q: self.q.as_deref().map(largest_metastable_q).transpose()?,
            mean_gdt_ts_selected: self
                .gdt_ts
                .as_ref()
                .map(|g| sel.iter().map(|&i| g[i]).sum::<f64>() / sel.len() as f64),
            mean_edges: self.edges.iter().sum::<usize>() as f64 / self.len() as f64,
            min_edges: *self.edges.iter().min().unwrap(),
            max_edges: *self.edges.iter().max().unwrap(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{METRICS_SCHEMA}\n{METRICS_COLUMNS}\n");
        let opt = |v: Option<&Vec<f64>>, i: usize| v.map(|c| format!("{:.6}", c[i])).unwrap_or_default();
        for i in 0..self.len() {
            let _ = writeln!(
                s,
                "{i},{},{},{:.6},{},{},{}",
                self.step[i],
                self.replica[i],
                self.rmsd[i],
                opt(self.q.as_ref(), i),
                opt(self.gdt_ts.as_ref(), i),
                self.edges[i]
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{globule, jitter};

    fn frames(native: &[[f64; 3]], n: usize) -> Vec<Frame> {
        (0..n)
            .map(|k| Frame {
                step: 10 * k as u64,
                replica: 0,
                positions: if k == 0 { native.to_vec() } else { jitter(native, 0.02 * k as f64, k as u64) },
            })
            .collect()
    }

    #[test]
    fn native_trajectory_has_zero_rmsd_and_native_q() {
        let native = globule(30, 3.0, 1);
        let fr: Vec<Frame> = (0..4)
            .map(|k| Frame {
                step: k,
                replica: 0,
                positions: native.clone(),
            })
            .collect();
        let m = compute_metrics(&fr, Some(&native), &MetricOptions::default()).unwrap();
        let c = build_contacts(&native, DEFAULT_CONTACT_CUTOFF, MIN_SEQUENCE_SEPARATION);
        let q0 = fraction_native_contacts(&native, &c, DEFAULT_BETA, DEFAULT_LAMBDA).unwrap();
        assert!(m.rmsd.iter().all(|&r| r < 1e-12));
        assert!(m.q.as_ref().unwrap().iter().all(|&q| (q - q0).abs() < 1e-15));
        assert!(m.gdt_ts.as_ref().unwrap().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn rmsd_only_without_native() {
        let native = globule(20, 3.0, 2);
        let fr = frames(&native, 5);
        let opts = MetricOptions {
            q: false,
            gdt: false,
            ..MetricOptions::default()
        };
        let m = compute_metrics(&fr, None, &opts).unwrap();
        assert!(m.q.is_none() && m.gdt_ts.is_none());
        assert!(m.rmsd[0] < 1e-12 && m.rmsd[4] > m.rmsd[1]);
        assert!(compute_metrics(&fr, None, &MetricOptions::default()).is_err());
        assert!(compute_metrics(&[], Some(&native), &MetricOptions::default()).is_err());
    }

    #[test]
    fn csv_and_summary() {
        let native = globule(20, 3.0, 3);
        let m = compute_metrics(&frames(&native, 12), Some(&native), &MetricOptions::default()).unwrap();
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRICS_SCHEMA);
        assert_eq!(lines[1], METRICS_COLUMNS);
        assert_eq!(lines.len(), 14);
        assert!(lines[2..].iter().all(|l| l.split(',').count() == 7));
        let s = m.summary(0.1).unwrap();
        let sel = m.select_native_like(0.1);
        assert_eq!((sel.len(), sel[0]), (2, 0));
        assert_eq!(s.frames, 12);
        let g = m.gdt_ts.as_ref().unwrap();
        assert_eq!(s.mean_gdt_ts_selected.unwrap(), (g[sel[0]] + g[sel[1]]) / 2.0);
        assert!(s.largest_metastable_q.is_some());
    }
}
