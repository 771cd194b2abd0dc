//! Oracle suite: every backend, reduction, neighbor search, traffic model,
//! quantizer, integrator and metric checked against an independent answer.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    build_contacts, fraction_native_contacts, gdt_ts, largest_metastable_q, rmsd, DEFAULT_BETA, DEFAULT_LAMBDA,
    DEFAULT_HISTOGRAM_BINS,
};
use crate::backend::{flash_energy_forces, reference_energy, Aggregation, BackendMode, FlashOptions};
use crate::config::Precision;
use crate::error::Result;
use crate::md::{MemoryObserver, SimConfig, Simulation, System};
use crate::memory;
use crate::model::{init_params, ModelConfig, ModelParams};
use crate::neighbor::{build_neighbors_bruteforce, build_neighbors_cells, group_by_destination, NeighborList};
use crate::quant::{quantize_model, CalibrationState, QuantizeOptions};
use crate::real::Real;
use crate::segment::{scatter_add, segment_reduce_csr};
use crate::synth::{chain_system, degree_skew_graph, random_gas, DegreeProfile, Shape};
use crate::traffic::{io_model_base, io_model_flash, IoDims};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub energy_rel: f64,
    pub force_rel: f64,
    pub finite_difference: f64,
    pub aggregation: f64,
    pub quant_energy: f64,
    pub quant_force_p95: f64,
    pub temperature_rel: f64,
    pub nve_drift: f64,
    pub skew_variation: f64,
}

impl Tolerances {
    pub fn for_precision(p: Precision) -> Self {
        let (energy_rel, force_rel) = match p {
            Precision::Single => (1e-5, 1e-4),
            Precision::Double => (1e-10, 1e-9),
        };
        Self {
            energy_rel,
            force_rel,
            finite_difference: 1e-5,
            aggregation: 1e-6,
            quant_energy: 1e-2,
            quant_force_p95: 3e-2,
            temperature_rel: 0.05,
            nve_drift: 1e-4,
            skew_variation: 0.25,
        }
    }
}

/// Instance counts of the suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workload {
    pub equivalence_systems: usize,
    pub fd_systems: usize,
    pub aggregation_instances: usize,
    pub neighbor_configs: usize,
    pub quant_states: usize,
    pub thermostat_steps: u64,
    pub nve_steps: u64,
    /// Timed repetitions per wall-clock measurement; the fastest counts.
    pub timing_repeats: usize,
    pub skew_edges: usize,
}

impl Workload {
    pub fn full() -> Self {
        Self {
            equivalence_systems: 200,
            fd_systems: 20,
            aggregation_instances: 100,
            neighbor_configs: 100,
            quant_states: 100,
            thermostat_steps: 100_000,
            nve_steps: 10_000,
            timing_repeats: 3,
            skew_edges: 30_000,
        }
    }

    pub fn quick() -> Self {
        Self {
            equivalence_systems: 20,
            fd_systems: 4,
            aggregation_instances: 20,
            neighbor_configs: 20,
            quant_states: 10,
            thermostat_steps: 100_000,
            nve_steps: 10_000,
            timing_repeats: 1,
            skew_edges: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub precision: Precision,
    pub workload: Workload,
    pub tolerances: Tolerances,
    pub flash: FlashOptions,
}

impl VerifyOptions {
    pub fn new(seed: u64, precision: Precision) -> Self {
        Self {
            seed,
            precision,
            workload: Workload::full(),
            tolerances: Tolerances::for_precision(precision),
            flash: FlashOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// The check could not run here (for example without the counting allocator).
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: Status,
    /// Measured quantity compared against `limit`.
    pub value: f64,
    pub limit: f64,
    pub detail: String,
    /// Seed of the worst instance.
    pub seed: Option<u64>,
    pub seconds: f64,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, value: f64, limit: f64, detail: String) -> Self {
        Self {
            name,
            status: if passed { Status::Pass } else { Status::Fail },
            value,
            limit,
            detail,
            seed: None,
            seconds: 0.0,
        }
    }

    fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        write!(f, "{tag} {:<28} {:.3e} (limit {:.1e})", self.name, self.value, self.limit)?;
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        if let Some(s) = self.seed {
            write!(f, " [seed {s}]")?;
        }
        write!(f, " {:.1}s", self.seconds)
    }
}

fn timed(f: impl FnOnce() -> Result<Vec<CheckResult>>) -> Result<Vec<CheckResult>> {
    let t = Instant::now();
    let mut out = f()?;
    let s = t.elapsed().as_secs_f64();
    for r in &mut out {
        r.seconds = s;
    }
    Ok(out)
}

fn cast_positions<T: Real>(p: &[[f64; 3]]) -> Vec<[T; 3]> {
    p.iter().map(|x| x.map(T::lit)).collect()
}

fn types_for(n: usize, num_types: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..num_types)).collect()
}

/// Small architecture used where many instances are evaluated.
pub fn compact_model(num_blocks: usize) -> ModelConfig {
    ModelConfig {
        hidden_dim: 64,
        rbf_dim: 32,
        num_blocks,
        filter_hidden_dim: 64,
        readout_hidden_dim: 32,
        ..ModelConfig::default()
    }
}

/// `max_i |a_i - b_i| / max_i |b_i|` over force vectors.
pub fn force_rel_error<T: Real>(a: &[[T; 3]], b: &[[T; 3]]) -> f64 {
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.map(|v| v.as_f64()), y.map(|v| v.as_f64()));
        num = num.max(norm([x[0] - y[0], x[1] - y[1], x[2] - y[2]]));
        den = den.max(norm(y));
    }
    num / den.max(1e-300)
}

pub fn energy_rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

macro_rules! dispatch {
    ($p:expr, $f:ident($($arg:expr),*)) => {
        match $p {
            Precision::Single => $f::<f32>($($arg),*),
            Precision::Double => $f::<f64>($($arg),*),
        }
    };
}

/// Flash against reference on random systems of 8 to 256 beads with 1 to 3 blocks.
pub fn check_equivalence(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    timed(|| dispatch!(opts.precision, equivalence(opts)))
}

fn equivalence<T: Real>(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let models: Vec<ModelParams<T>> = (1..=3)
        .map(|t| init_params::<T>(&compact_model(t), opts.seed.wrapping_add(t as u64)))
        .collect::<Result<_>>()?;
    let (mut worst_e, mut worst_f) = ((f64::NEG_INFINITY, 0u64), (f64::NEG_INFINITY, 0u64));
    for i in 0..opts.workload.equivalence_systems {
        let seed = opts.seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(8..=256);
        let density = rng.gen_range(0.5..6.0);
        let params = &models[i % 3];
        let pos = cast_positions::<T>(&random_gas(n, density, seed));
        let types = types_for(n, params.config().num_atom_types, &mut rng);
        let nl = build_neighbors_cells(&pos, params.config().cutoff);
        let r = flash_energy_forces(&pos, &types, params, &nl, BackendMode::REFERENCE, &opts.flash)?;
        let f = flash_energy_forces(&pos, &types, params, &nl, BackendMode::FLASH, &opts.flash)?;
        let e_err = energy_rel_error(f.energy, r.energy);
        let f_err = force_rel_error(&f.forces, &r.forces);
        if !(e_err <= worst_e.0) {
            worst_e = (e_err, seed);
        }
        if !(f_err <= worst_f.0) {
            worst_f = (f_err, seed);
        }
    }
    let tol = &opts.tolerances;
    let detail = format!("{} systems, {}", opts.workload.equivalence_systems, T::NAME);
    Ok(vec![
        CheckResult::new("energy-equivalence", worst_e.0 <= tol.energy_rel, worst_e.0, tol.energy_rel, detail.clone())
            .with_seed(worst_e.1),
        CheckResult::new("force-equivalence", worst_f.0 <= tol.force_rel, worst_f.0, tol.force_rel, detail)
            .with_seed(worst_f.1),
    ])
}

/// Central differences of the energy against analytic forces of both pipelines, in f64.
pub fn check_finite_difference(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    timed(|| {
        let h = 1e-5;
        let mut worst = (f64::NEG_INFINITY, 0u64);
        for i in 0..opts.workload.fd_systems {
            let seed = opts.seed.wrapping_add(1000 + i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = init_params::<f64>(&compact_model(1 + i % 3), seed)?;
            let n = rng.gen_range(8..=24);
            let mut pos = random_gas(n, rng.gen_range(1.0..5.0), seed);
            let types = types_for(n, params.config().num_atom_types, &mut rng);
            let nl = build_neighbors_cells(&pos, params.config().cutoff);
            let energy = |p: &[[f64; 3]]| -> Result<f64> {
                Ok(reference_energy(p, &types, &params, &nl, Aggregation::Scatter)?.0)
            };
            let mut fd = vec![[0.0; 3]; n];
            for a in 0..n {
                for k in 0..3 {
                    let x0 = pos[a][k];
                    pos[a][k] = x0 + h;
                    let ep = energy(&pos)?;
                    pos[a][k] = x0 - h;
                    let em = energy(&pos)?;
                    pos[a][k] = x0;
                    fd[a][k] = -(ep - em) / (2.0 * h);
                }
            }
            for mode in [BackendMode::REFERENCE, BackendMode::FLASH] {
                let f = flash_energy_forces(&pos, &types, &params, &nl, mode, &opts.flash)?;
                let err = force_rel_error(&fd, &f.forces);
                if !(err <= worst.0) {
                    worst = (err, seed);
                }
            }
        }
        let tol = opts.tolerances.finite_difference;
        Ok(vec![CheckResult::new(
            "finite-difference-forces",
            worst.0 <= tol,
            worst.0,
            tol,
            format!("{} systems, h = {h:e} nm", opts.workload.fd_systems),
        )
        .with_seed(worst.1)])
    })
}

/// Segmented reduction against scatter-add, and atomic-update counts of every mode.
pub fn check_aggregation(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    timed(|| dispatch!(opts.precision, aggregation(opts)))
}

fn aggregation<T: Real>(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut worst = (f64::NEG_INFINITY, 0u64);
    for i in 0..opts.workload.aggregation_instances {
        let seed = opts.seed.wrapping_add(2000 + i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=512);
        let e = rng.gen_range(0..=10_000);
        let d = rng.gen_range(1..=128);
        let src: Vec<u32> = (0..e).map(|_| rng.gen_range(0..n as u32)).collect();
        let dst: Vec<u32> = (0..e).map(|_| rng.gen_range(0..n as u32)).collect();
        let nl = NeighborList::from_edges(n, src, dst)?;
        let values: Vec<T> = (0..e * d).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        let abs: Vec<T> = values.iter().map(|v| v.abs()).collect();
        let (scattered, _) = scatter_add(&values, &nl.dst, n, d);
        let (scale, _) = scatter_add(&abs, &nl.dst, n, d);
        let reduced = segment_reduce_csr(&values, &group_by_destination(&nl, n), d);
        for ((a, b), s) in scattered.iter().zip(&reduced).zip(&scale) {
            let err = (a.as_f64() - b.as_f64()).abs() / s.as_f64().max(1.0);
            if !(err <= worst.0) {
                worst = (err, seed);
            }
        }
    }
    let tol = opts.tolerances.aggregation;
    let sum = CheckResult::new(
        "segment-reduce-vs-scatter",
        worst.0 <= tol,
        worst.0,
        tol,
        format!("{} instances, error relative to the segment's absolute sum", opts.workload.aggregation_instances),
    )
    .with_seed(worst.1);

    let seed = opts.seed.wrapping_add(2500);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = init_params::<T>(&compact_model(2), seed)?;
    let pos = cast_positions::<T>(&random_gas(96, 4.0, seed));
    let types = types_for(96, params.config().num_atom_types, &mut rng);
    let nl = build_neighbors_cells(&pos, params.config().cutoff);
    let expected_base = 2 * nl.num_edges() as u64 * params.config().hidden_dim as u64 * params.num_blocks() as u64;
    let mut segmented_atomics = 0u64;
    let mut base_ok = true;
    for mode in BackendMode::all().into_iter().filter(|m| !m.quant) {
        let r = flash_energy_forces(&pos, &types, &params, &nl, mode, &opts.flash)?;
        if mode.segred {
            segmented_atomics += r.traffic.atomic_updates;
        } else {
            base_ok &= r.traffic.atomic_updates == expected_base;
        }
    }
    let atomics = CheckResult::new(
        "flash-atomic-updates",
        segmented_atomics == 0 && base_ok,
        segmented_atomics as f64,
        0.0,
        format!(
            "segmented paths record none; scatter paths {} the expected 2*E*D*T = {expected_base}",
            if base_ok { "match" } else { "DO NOT match" }
        ),
    )
    .with_seed(seed);
    Ok(vec![sum, atomics])
}

fn edge_set(nl: &NeighborList) -> Vec<(u32, u32)> {
    let mut v: Vec<(u32, u32)> = nl.src.iter().copied().zip(nl.dst.iter().copied()).collect();
    v.sort_unstable();
    v
}

/// Cell-list search against the all-pairs search.
pub fn check_neighbors(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    timed(|| dispatch!(opts.precision, neighbors(opts)))
}

fn neighbors<T: Real>(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut mismatched = 0usize;
    let mut first_bad = None;
    let mut edges = 0usize;
    for i in 0..opts.workload.neighbor_configs {
        let seed = opts.seed.wrapping_add(3000 + i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=512);
        let pos = cast_positions::<T>(&random_gas(n, rng.gen_range(0.5..30.0), seed));
        let rc = rng.gen_range(0.2..2.0);
        let a = edge_set(&build_neighbors_cells(&pos, rc));
        let b = edge_set(&build_neighbors_bruteforce(&pos, rc));
        edges += b.len();
        if a != b {
            mismatched += 1;
            first_bad.get_or_insert(seed);
        }
    }
    let r = CheckResult::new(
        "cell-list-vs-brute-force",
        mismatched == 0,
        mismatched as f64,
        0.0,
        format!("{} configurations, {edges} edges compared as sets", opts.workload.neighbor_configs),
    );
    Ok(vec![match first_bad {
        Some(s) => r.with_seed(s),
        None => r,
    }])
}

/// Byte counters of both pipelines against the closed forms, and the ratio at E/N = 40.
pub fn check_io_model(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    timed(|| dispatch!(opts.precision, io_model(opts)))
}

fn io_model<T: Real>(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut mismatches = Vec::new();
    for i in 0..6u64 {
        let seed = opts.seed.wrapping_add(4000 + i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params::<T>(&compact_model(1 + i as usize % 3), seed)?;
        let n = rng.gen_range(16..=160);
        let pos = cast_positions::<T>(&random_gas(n, rng.gen_range(1.0..8.0), seed));
        let types = types_for(n, params.config().num_atom_types, &mut rng);
        let nl = build_neighbors_cells(&pos, params.config().cutoff);
        let dims = IoDims::new(n, nl.num_edges(), params.config(), T::BYTES, false);
        let base = flash_energy_forces(&pos, &types, &params, &nl, BackendMode::REFERENCE, &opts.flash)?;
        let flash = flash_energy_forces(&pos, &types, &params, &nl, BackendMode::FLASH, &opts.flash)?;
        if base.traffic.total() != io_model_base(&dims) {
            mismatches.push(format!("base seed {seed}: {} vs {}", base.traffic.total(), io_model_base(&dims)));
        }
        if flash.traffic.total() != io_model_flash(&dims) {
            mismatches.push(format!("flash seed {seed}: {} vs {}", flash.traffic.total(), io_model_flash(&dims)));
        }
    }
    let measured = CheckResult::new(
        "io-model-measured",
        mismatches.is_empty(),
        mismatches.len() as f64,
        0.0,
        if mismatches.is_empty() {
            "6 systems x 2 pipelines match byte for byte".into()
        } else {
            mismatches.join("; ")
        },
    );
    let config = ModelConfig::default();
    let dims = IoDims::new(1000, 40_000, &config, T::BYTES, false);
    let ratio = io_model_base(&dims) as f64 / io_model_flash(&dims) as f64;
    let ratio_check = CheckResult::new(
        "io-model-ratio",
        ratio > 10.0,
        ratio,
        10.0,
        format!("E/N = 40, D = {}, D_r = {}", config.hidden_dim, config.rbf_dim),
    );
    Ok(vec![measured, ratio_check])
}

/// Peak transient heap of one force evaluation, reference over flash, at E/N >= 20.
pub fn check_memory(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    timed(|| dispatch!(opts.precision, peak_memory(opts)))
}

fn peak_memory<T: Real>(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let config = ModelConfig::default();
    let limit = config.hidden_dim as f64 / 4.0;
    if !memory::is_active() {
        return Ok(vec![CheckResult {
            status: Status::Skip,
            ..CheckResult::new(
                "peak-memory-ratio",
                true,
                f64::NAN,
                limit,
                "counting allocator not installed".into(),
            )
        }]);
    }
    let seed = opts.seed.wrapping_add(5000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = init_params::<T>(&config, seed)?;
    let n = 800;
    let pos = cast_positions::<T>(&random_gas(n, 4.0, seed));
    let types = types_for(n, config.num_atom_types, &mut rng);
    let nl = build_neighbors_cells(&pos, config.cutoff);
    let per_node = nl.num_edges() as f64 / n as f64;
    let (r, base_peak) =
        memory::measure_peak(|| flash_energy_forces(&pos, &types, &params, &nl, BackendMode::REFERENCE, &opts.flash));
    r?;
    let (r, flash_peak) =
        memory::measure_peak(|| flash_energy_forces(&pos, &types, &params, &nl, BackendMode::FLASH, &opts.flash));
    r?;
    let ratio = base_peak as f64 / flash_peak.max(1) as f64;
    Ok(vec![CheckResult::new(
        "peak-memory-ratio",
        ratio >= limit && per_node >= 20.0,
        ratio,
        limit,
        format!("E/N = {per_node:.1}, reference {base_peak} B, flash {flash_peak} B"),
    )
    .with_seed(seed)])
}

fn best_time(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        f()?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// End-to-end step time (neighbor search, energy, forces) at E >= 5e4, D = 128, T = 3.
pub fn check_wall_clock(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    timed(|| dispatch!(opts.precision, wall_clock(opts)))
}

fn wall_clock<T: Real>(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let config = ModelConfig::default();
    let seed = opts.seed.wrapping_add(6000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = init_params::<T>(&config, seed)?;
    let n = 1700;
    let pos = cast_positions::<T>(&random_gas(n, 2.84, seed));
    let types = types_for(n, config.num_atom_types, &mut rng);
    let edges = build_neighbors_cells(&pos, config.cutoff).num_edges();
    let step = |mode: BackendMode| -> Result<()> {
        let nl = build_neighbors_cells(&pos, config.cutoff);
        flash_energy_forces(&pos, &types, &params, &nl, mode, &opts.flash).map(|_| ())
    };
    // one untimed pass each to fault in memory
    step(BackendMode::REFERENCE)?;
    step(BackendMode::FLASH)?;
    let t_ref = best_time(opts.workload.timing_repeats, || step(BackendMode::REFERENCE))?;
    let t_flash = best_time(opts.workload.timing_repeats, || step(BackendMode::FLASH))?;
    let speedup = t_ref / t_flash;
    Ok(vec![CheckResult::new(
        "wall-clock-speedup",
        speedup > 1.0 && edges >= 50_000,
        speedup,
        1.0,
        format!("E = {edges}, reference {t_ref:.3} s, flash {t_flash:.3} s per step, {}", T::NAME),
    )
    .with_seed(seed)])
}

/// Half-precision model against the full-precision one on random states.
pub fn check_quantization(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    timed(|| dispatch!(opts.precision, quantization(opts)))
}

/// Random gas of `n` beads at a density in [2, 4) nm^-3 with random types.
pub fn random_state<T: Real>(n: usize, num_types: usize, seed: u64) -> CalibrationState<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CalibrationState {
        positions: cast_positions::<T>(&random_gas(n, rng.gen_range(2.0..4.0), seed)),
        types: types_for(n, num_types, &mut rng),
    }
}

/// Errors of a quantized model against its full-precision source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantErrors {
    /// Largest `|dE| / |E|` and the index of its state.
    pub max_energy_rel: f64,
    pub worst_state: usize,
    pub max_energy_abs: f64,
    /// Largest `|dE| / sum_i |e_i|`, insensitive to cancellation in the total.
    pub max_energy_scaled: f64,
    pub min_abs_energy: f64,
    /// 95th percentile over beads of `|dF_i| / rms |F|`.
    pub force_p95: f64,
}

pub fn quant_errors<T: Real>(
    full: &ModelParams<T>,
    quant: &ModelParams<T>,
    states: &[CalibrationState<T>],
    flash: &FlashOptions,
) -> Result<QuantErrors> {
    if states.is_empty() {
        return Err(crate::Error::InvalidInput("no evaluation states".into()));
    }
    let qmode = BackendMode {
        quant: true,
        ..BackendMode::FLASH
    };
    let mut out = QuantErrors {
        max_energy_rel: f64::NEG_INFINITY,
        worst_state: 0,
        max_energy_abs: 0.0,
        max_energy_scaled: 0.0,
        min_abs_energy: f64::INFINITY,
        force_p95: 0.0,
    };
    let mut ratios = Vec::new();
    for (k, st) in states.iter().enumerate() {
        let nl = build_neighbors_cells(&st.positions, full.config().cutoff);
        let a = flash_energy_forces(&st.positions, &st.types, full, &nl, BackendMode::FLASH, flash)?;
        let b = flash_energy_forces(&st.positions, &st.types, quant, &nl, qmode, flash)?;
        let e = energy_rel_error(b.energy, a.energy);
        if !(e <= out.max_energy_rel) {
            out.max_energy_rel = e;
            out.worst_state = k;
        }
        let de = (b.energy - a.energy).abs();
        let abs_sum: f64 = a.atom_energies.iter().map(|v| v.as_f64().abs()).sum();
        out.max_energy_abs = out.max_energy_abs.max(de);
        out.max_energy_scaled = out.max_energy_scaled.max(de / abs_sum.max(1e-300));
        out.min_abs_energy = out.min_abs_energy.min(a.energy.abs());
        let sq = |f: &[T; 3]| f.iter().map(|v| v.as_f64().powi(2)).sum::<f64>();
        let rms = (a.forces.iter().map(sq).sum::<f64>() / a.forces.len() as f64).sqrt();
        for (fa, fb) in a.forces.iter().zip(&b.forces) {
            let diff: f64 = (0..3).map(|c| (fa[c].as_f64() - fb[c].as_f64()).powi(2)).sum::<f64>().sqrt();
            ratios.push(diff / rms.max(1e-300));
        }
    }
    ratios.sort_by(f64::total_cmp);
    out.force_p95 = ratios.get((ratios.len() * 95 / 100).min(ratios.len().saturating_sub(1))).copied().unwrap_or(0.0);
    Ok(out)
}

fn quantization<T: Real>(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let config = ModelConfig::default();
    let seed = opts.seed.wrapping_add(7000);
    let params = init_params::<T>(&config, seed)?;
    let nt = config.num_atom_types;
    let calib: Vec<CalibrationState<T>> = (0..8).map(|k| random_state(64, nt, seed.wrapping_add(100 + k))).collect();
    let (quant, report) = quantize_model(&params, &calib, &QuantizeOptions { seed, ..Default::default() })?;
    let state_seed = |k: usize| seed.wrapping_add(1000 + k as u64);
    let states: Vec<CalibrationState<T>> =
        (0..opts.workload.quant_states).map(|k| random_state(64, nt, state_seed(k))).collect();
    let q = quant_errors(&params, &quant, &states, &opts.flash)?;
    let worse: Vec<&str> = report
        .iter()
        .filter(|l| l.per_channel_error > l.per_tensor_error)
        .map(|l| l.name.as_str())
        .collect();
    let tol = &opts.tolerances;
    let n = states.len();
    Ok(vec![
        CheckResult::new(
            "quant-energy",
            q.max_energy_rel <= tol.quant_energy,
            q.max_energy_rel,
            tol.quant_energy,
            format!(
                "{n} states; max |dE| {:.2e}, max |dE| / sum|e_i| {:.2e}, min |E| {:.2e}",
                q.max_energy_abs, q.max_energy_scaled, q.min_abs_energy
            ),
        )
        .with_seed(state_seed(q.worst_state)),
        CheckResult::new(
            "quant-force-p95",
            q.force_p95 <= tol.quant_force_p95,
            q.force_p95,
            tol.quant_force_p95,
            format!("{n} states, |dF| / rms |F|"),
        ),
        CheckResult::new(
            "quant-per-channel",
            worse.is_empty(),
            worse.len() as f64,
            0.0,
            if worse.is_empty() {
                format!("per-channel <= per-tensor on all {} layers", report.len())
            } else {
                format!("worse on {}", worse.join(", "))
            },
        ),
    ])
}

/// Equipartition on a harmonic chain and energy conservation of a single bond.
pub fn check_thermostat(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    timed(|| {
        let tol = &opts.tolerances;
        let chain = chain_system(Shape::Coil, 10, 1, opts.seed)?;
        let cfg = SimConfig {
            n_steps: opts.workload.thermostat_steps,
            output_stride: 10,
            seed: opts.seed,
            ..SimConfig::default()
        };
        let mut obs = MemoryObserver::default();
        Simulation::<f64>::new(None, &chain, cfg, BackendMode::FLASH)?.run(None, &mut obs)?;
        let tail = &obs.rows[obs.rows.len() / 10..];
        let mean_t = tail.iter().map(|r| r.kinetic_t).sum::<f64>() / tail.len() as f64;
        let t_err = (mean_t - cfg.temperature).abs() / cfg.temperature;

        let mut bond = System::new(vec![0, 0], vec![110.0; 2], vec![[0.0; 3], [0.41, 0.0, 0.0]])?;
        bond.bonds = vec![crate::md::Bond {
            i: 0,
            j: 1,
            k: 20_000.0,
            r0: 0.38,
        }];
        let nve = SimConfig {
            dt_fs: 1.0,
            temperature: 0.0,
            friction: 0.0,
            n_steps: opts.workload.nve_steps,
            output_stride: 1,
            ..SimConfig::default()
        };
        let mut obs = MemoryObserver::default();
        Simulation::<f64>::new(None, &bond, nve, BackendMode::FLASH)?.run(None, &mut obs)?;
        let e0 = obs.rows[0].total;
        let drift = obs.rows.iter().map(|r| (r.total - e0).abs() / e0.abs()).fold(0.0, f64::max);
        Ok(vec![
            CheckResult::new(
                "thermostat-temperature",
                t_err <= tol.temperature_rel,
                t_err,
                tol.temperature_rel,
                format!("mean {mean_t:.2} K over {} steps", cfg.n_steps),
            )
            .with_seed(opts.seed),
            CheckResult::new(
                "nve-drift",
                drift <= tol.nve_drift,
                drift,
                tol.nve_drift,
                format!("{} steps at 1 fs", nve.n_steps),
            ),
        ])
    })
}

/// Direct evaluations of the structural metrics.
pub fn check_metrics(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(8000));
        let pair = vec![[0.0; 3], [3.0, 0.0, 0.0], [3.0, 3.0, 0.0], [0.5, 0.0, 0.0]];
        let contacts = build_contacts(&pair, 0.9, 3);
        let q = fraction_native_contacts(&pair, &contacts, DEFAULT_BETA, DEFAULT_LAMBDA)?;
        let q_err = (q - 0.92414).abs();

        let x = random_gas(40, 5.0, opts.seed);
        let g = gdt_ts(&x, &x)?.score;

        let mut worst_rmsd = 0.0f64;
        for _ in 0..20 {
            let (a, b, c): (f64, f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let rot = nalgebra::Rotation3::from_euler_angles(a, b, c);
            let t = nalgebra::Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let y: Vec<[f64; 3]> = x
                .iter()
                .map(|p| {
                    let v = rot * nalgebra::Vector3::from(*p) + t;
                    [v[0], v[1], v[2]]
                })
                .collect();
            worst_rmsd = worst_rmsd.max(rmsd(&y, &x)?);
        }

        let normal = |mu: f64, sigma: f64, rng: &mut ChaCha8Rng| -> f64 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            (mu + sigma * z).clamp(0.0, 1.0)
        };
        let mut series: Vec<f64> = (0..6000).map(|_| normal(0.3, 0.05, &mut rng)).collect();
        series.extend((0..3000).map(|_| normal(0.85, 0.03, &mut rng)));
        let m = largest_metastable_q(&series)?;
        let bin = 1.0 / DEFAULT_HISTOGRAM_BINS as f64;
        Ok(vec![
            CheckResult::new("metrics-q-single-contact", q_err <= 1e-5, q_err, 1e-5, format!("Q = {q:.6}")),
            CheckResult::new("metrics-gdt-identity", g == 1.0, (g - 1.0).abs(), 0.0, format!("GDT-TS = {g}")),
            CheckResult::new("metrics-rmsd-rigid", worst_rmsd <= 1e-10, worst_rmsd, 1e-10, "20 rigid copies".into()),
            CheckResult::new(
                "metrics-metastable-q",
                (m - 0.85).abs() <= bin,
                (m - 0.85).abs(),
                bin,
                format!("modes at 0.30 and 0.85, found {m:.3}"),
            ),
        ])
    })
}

/// Flash step time on uniform against power-law degree graphs with equal edge counts.
pub fn check_degree_skew(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    timed(|| dispatch!(opts.precision, degree_skew(opts)))
}

fn degree_skew<T: Real>(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let config = ModelConfig::default();
    let seed = opts.seed.wrapping_add(9000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = init_params::<T>(&config, seed)?;
    let e = opts.workload.skew_edges & !1;
    let n = (e / 20).max(8);
    let types = types_for(n, config.num_atom_types, &mut rng);
    let mut times = [[0.0f64; 2]; 2];
    let mut max_deg = [0u32; 2];
    for (g, profile) in [DegreeProfile::Uniform, DegreeProfile::PowerLaw { exponent: 2.2 }].into_iter().enumerate() {
        let (pos, nl) = degree_skew_graph(n, e, profile, config.cutoff, seed)?;
        max_deg[g] = nl.in_degrees().into_iter().max().unwrap_or(0);
        let pos = cast_positions::<T>(&pos);
        for (m, mode) in [BackendMode::FLASH, BackendMode::REFERENCE].into_iter().enumerate() {
            flash_energy_forces(&pos, &types, &params, &nl, mode, &opts.flash)?;
            times[m][g] = best_time(opts.workload.timing_repeats, || {
                flash_energy_forces(&pos, &types, &params, &nl, mode, &opts.flash).map(|_| ())
            })?;
        }
    }
    let variation = |t: [f64; 2]| (t[0] - t[1]).abs() / t[0].min(t[1]);
    let (flash_var, base_var) = (variation(times[0]), variation(times[1]));
    let tol = opts.tolerances.skew_variation;
    Ok(vec![CheckResult::new(
        "degree-skew-variation",
        flash_var <= tol,
        flash_var,
        tol,
        format!(
            "E = {e}, max in-degree {} vs {}; flash {:.3}/{:.3} s, scatter baseline {:.3}/{:.3} s (variation {:.1}%)",
            max_deg[0],
            max_deg[1],
            times[0][0],
            times[0][1],
            times[1][0],
            times[1][1],
            100.0 * base_var
        ),
    )
    .with_seed(seed)])
}

/// Every check in a fixed order.
pub type CheckFn = fn(&VerifyOptions) -> Result<Vec<CheckResult>>;

/// Check groups in suite order.
pub const CHECK_GROUPS: [(&str, CheckFn); 11] = [
    ("equivalence", check_equivalence),
    ("finite-difference", check_finite_difference),
    ("aggregation", check_aggregation),
    ("neighbors", check_neighbors),
    ("io-model", check_io_model),
    ("memory", check_memory),
    ("wall-clock", check_wall_clock),
    ("quantization", check_quantization),
    ("thermostat", check_thermostat),
    ("metrics", check_metrics),
    ("degree-skew", check_degree_skew),
];

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    run_groups(opts, &[])
}

/// Runs the named groups, or every group when `names` is empty.
pub fn run_groups(opts: &VerifyOptions, names: &[String]) -> Result<Vec<CheckResult>> {
    if let Some(bad) = names.iter().find(|n| !CHECK_GROUPS.iter().any(|(g, _)| g == n)) {
        let known: Vec<&str> = CHECK_GROUPS.iter().map(|(g, _)| *g).collect();
        return Err(crate::Error::Config(format!(
            "unknown check group {bad:?}; expected one of {}",
            known.join(", ")
        )));
    }
    let mut out = Vec::new();
    for (name, check) in CHECK_GROUPS {
        if names.is_empty() || names.iter().any(|n| n == name) {
            out.extend(check(opts)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(p: Precision) -> VerifyOptions {
        VerifyOptions {
            workload: Workload {
                equivalence_systems: 6,
                fd_systems: 2,
                aggregation_instances: 5,
                neighbor_configs: 5,
                ..Workload::quick()
            },
            ..VerifyOptions::new(11, p)
        }
    }

    #[test]
    fn equivalence_passes_in_both_precisions() {
        for p in [Precision::Single, Precision::Double] {
            for r in check_equivalence(&quick(p)).unwrap() {
                assert!(r.passed(), "{r}");
            }
        }
    }

    #[test]
    fn injected_fault_is_caught_by_the_energy_check() {
        let mut o = quick(Precision::Double);
        o.flash.inject_fault = true;
        let r = check_equivalence(&o).unwrap();
        assert_eq!(r[0].name, "energy-equivalence");
        assert_eq!(r[0].status, Status::Fail);
        assert!(r[0].seed.is_some());
        assert!(r[0].to_string().starts_with("FAIL energy-equivalence"));
    }

    #[test]
    fn cheap_checks_pass() {
        let o = quick(Precision::Single);
        for c in [check_aggregation, check_neighbors, check_io_model, check_metrics, check_finite_difference] {
            for r in c(&o).unwrap() {
                assert!(r.passed(), "{r}");
            }
        }
    }

    #[test]
    fn memory_check_skips_without_allocator() {
        if !memory::is_active() {
            let r = check_memory(&quick(Precision::Single)).unwrap();
            assert_eq!(r[0].status, Status::Skip);
        }
    }
}
