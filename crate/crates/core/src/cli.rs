//! Command-line front end: argument parsing, config overrides and the six commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{compute_metrics, MetricOptions};
use crate::bench::{bench_csv, run_bench};
use crate::config::{Precision, RunConfig};
use crate::error::{Error, Result};
use crate::md::{load_checkpoint, read_xyz, FileObserver, Frame, Simulation, System, XyzWriter};
use crate::model::{init_params, load_params, save_params, ModelParams};
use crate::quant::{jittered_states, quantize_model, CalibrationState, LayerReport, QuantizeOptions};
use crate::real::Real;
use crate::synth::{chain_system, Shape};
use crate::verify::{quant_errors, random_state, run_groups, VerifyOptions, Workload};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;

/// Jittered copies of the system used to calibrate half-precision scales.
const CALIBRATION_STATES: usize = 16;
const CALIBRATION_SIGMA: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "flashcg", version, about = "Coarse-grained MD with continuous-filter GNN potentials")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Floating-point precision: 32bit or 64bit.
    #[arg(long, global = true, value_parser = parse_precision)]
    pub mode: Option<Precision>,
    #[arg(long, global = true)]
    pub fused: Option<Switch>,
    #[arg(long, global = true)]
    pub segred: Option<Switch>,
    #[arg(long, global = true)]
    pub quant: Option<Switch>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

fn parse_precision(s: &str) -> std::result::Result<Precision, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Langevin dynamics; writes trajectory.xyz and log.csv.
    Simulate {
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Runs every oracle check; exit 2 on any failure.
    Verify {
        /// Fewer random instances per check.
        #[arg(long)]
        quick: bool,
        /// Check groups to run, comma separated; all by default.
        #[arg(long, value_delimiter = ',')]
        checks: Vec<String>,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Sweeps replica counts and backend modes; writes bench.csv.
    Bench {
        /// Beads of the synthetic globule used when no system is configured.
        #[arg(long, default_value_t = 600)]
        beads: usize,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        replicas: Vec<usize>,
        /// Mode labels such as reference, fused+segred, flash+quant.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
    },
    /// Half-precision copy of a parameter file with per-layer calibration errors.
    Quantize {
        /// Full-precision parameters; defaults to paths.params.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Random states for the energy and force comparison.
        #[arg(long, default_value_t = 100)]
        states: usize,
    },
    /// Per-frame RMSD, Q, GDT-TS and edge counts of a trajectory.
    Analyze {
        trajectory: PathBuf,
        /// System file whose native structure is the reference; defaults to paths.system.
        #[arg(long)]
        native: Option<PathBuf>,
        /// Only RMSD and graph statistics; no native structure needed.
        #[arg(long)]
        rmsd_only: bool,
        #[arg(long)]
        no_q: bool,
        #[arg(long)]
        no_gdt: bool,
    },
    /// Writes a synthetic chain, fresh parameters and a config into the output directory.
    GenSystem {
        #[arg(long, default_value = "coil", value_parser = parse_shape)]
        shape: Shape,
        #[arg(long, default_value_t = 32)]
        beads: usize,
    },
}

fn parse_shape(s: &str) -> std::result::Result<Shape, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    /// Names of the failed checks.
    Verification(Vec<String>),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Verification(names) => write!(f, "verification failed: {}", names.join(", ")),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::BlowUp { .. }) => EXIT_BLOWUP,
            CliError::Core(_) => EXIT_CONFIG,
            CliError::Verification(_) => EXIT_VERIFY,
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Config file (or defaults) with command-line overrides applied.
pub fn resolve_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.sim.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.backend.workers = w;
    }
    if let Some(m) = g.mode {
        cfg.backend.precision = m;
    }
    if let Some(s) = g.fused {
        cfg.backend.fused = s.on();
    }
    if let Some(s) = g.segred {
        cfg.backend.segred = s.on();
    }
    if let Some(s) = g.quant {
        cfg.backend.quant = s.on();
    }
    if let Some(o) = &g.out {
        cfg.paths.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_pool(workers: usize) {
    if workers > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

pub fn run(cli: &Cli) -> std::result::Result<(), CliError> {
    let cfg = resolve_config(&cli.global)?;
    init_pool(cfg.backend.workers);
    match &cli.command {
        Command::Simulate { steps, replicas } => {
            let mut cfg = cfg;
            if let Some(s) = steps {
                cfg.sim.n_steps = *s;
            }
            if let Some(r) = replicas {
                cfg.sim.n_replicas = *r;
            }
            cfg.validate()?;
            match cfg.backend.precision {
                Precision::Single => cmd_simulate::<f32>(&cfg)?,
                Precision::Double => cmd_simulate::<f64>(&cfg)?,
            }
        }
        Command::Verify {
            quick,
            checks,
            inject_fault,
        } => cmd_verify(&cfg, cli.global.seed, *quick, checks, *inject_fault)?,
        Command::Bench {
            beads,
            steps,
            replicas,
            modes,
        } => {
            let mut cfg = cfg;
            if let Some(s) = steps {
                cfg.bench.steps = *s;
            }
            if !replicas.is_empty() {
                cfg.bench.replicas = replicas.clone();
            }
            if !modes.is_empty() {
                cfg.bench.modes = modes.clone();
            }
            cfg.validate()?;
            match cfg.backend.precision {
                Precision::Single => cmd_bench::<f32>(&cfg, *beads)?,
                Precision::Double => cmd_bench::<f64>(&cfg, *beads)?,
            }
        }
        Command::Quantize { input, output, states } => match cfg.backend.precision {
            Precision::Single => cmd_quantize::<f32>(&cfg, input.as_deref(), output, *states)?,
            Precision::Double => cmd_quantize::<f64>(&cfg, input.as_deref(), output, *states)?,
        },
        Command::Analyze {
            trajectory,
            native,
            rmsd_only,
            no_q,
            no_gdt,
        } => {
            let opts = MetricOptions {
                q: !(*rmsd_only || *no_q),
                gdt: !(*rmsd_only || *no_gdt),
                ..MetricOptions::default()
            };
            cmd_analyze(&cfg, trajectory, native.as_deref(), &opts)?
        }
        Command::GenSystem { shape, beads } => cmd_gen_system(&cfg, *shape, *beads)?,
    }
    Ok(())
}

/// Parameters from `paths.params`, or freshly initialized from the run seed.
/// With quantization on, full-precision parameters are calibrated on jittered
/// copies of `system`.
pub fn load_model<T: Real>(cfg: &RunConfig, system: &System) -> Result<ModelParams<T>> {
    let params = match &cfg.paths.params {
        Some(p) => load_params::<T>(p)?,
        None => init_params::<T>(&cfg.model, cfg.sim.seed)?,
    };
    if cfg.backend.quant && !params.is_quantized() {
        let states = jittered_states::<T>(
            &system.positions,
            &system.types,
            CALIBRATION_STATES,
            CALIBRATION_SIGMA,
            cfg.sim.seed,
        );
        let opts = QuantizeOptions {
            seed: cfg.sim.seed,
            ..QuantizeOptions::default()
        };
        return Ok(quantize_model(&params, &states, &opts)?.0);
    }
    Ok(params)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}

fn cmd_simulate<T: Real>(cfg: &RunConfig) -> Result<()> {
    cfg.check_inputs()?;
    let system = System::load(cfg.system_path()?)?;
    let params = load_model::<T>(cfg, &system)?;
    let resume = match &cfg.paths.resume {
        Some(p) => {
            let (state, seed) = load_checkpoint(p)?;
            if seed != cfg.sim.seed {
                return Err(Error::Config(format!(
                    "checkpoint {} was written with seed {seed}, run uses {}",
                    p.display(),
                    cfg.sim.seed
                )));
            }
            Some(state)
        }
        None => None,
    };
    let out = create_out(cfg)?;
    let sim = Simulation::new(Some(&params), &system, cfg.sim, cfg.backend.mode())?;
    let mut obs = FileObserver::create(&out, &system.types)?;
    let result = sim.run(resume, &mut obs);
    obs.flush()?;
    let summary = match result {
        Ok(s) => s,
        Err(Error::BlowUp {
            step,
            replica,
            reason,
            frame,
        }) => {
            let path = out.join("blowup.xyz");
            let mut w = XyzWriter::create(&path)?;
            w.write(
                &Frame {
                    step,
                    replica,
                    positions: frame.clone(),
                },
                &system.types,
            )
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
            eprintln!("offending frame written to {}", path.display());
            return Err(Error::BlowUp {
                step,
                replica,
                reason,
                frame,
            });
        }
        Err(e) => return Err(e),
    };
    let tp = summary.throughput(cfg.sim.dt_fs)?;
    println!(
        "mode {} {} | {} beads, {} replicas, {} steps in {:.3} s",
        cfg.backend.mode().label(),
        T::NAME,
        system.beads,
        cfg.sim.n_replicas,
        summary.steps,
        summary.wall_seconds
    );
    println!(
        "throughput {:.2} steps*mol/s, {:.2} ns/day | mean edges {:.1} | index build {:.3} s",
        tp.steps_mol_per_s, tp.ns_per_day, summary.mean_edges, summary.index_seconds
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_verify(
    cfg: &RunConfig,
    seed: Option<u64>,
    quick: bool,
    checks: &[String],
    inject_fault: bool,
) -> std::result::Result<(), CliError> {
    let seed = seed.unwrap_or_else(rand::random);
    let mut opts = VerifyOptions::new(seed, cfg.backend.precision);
    if quick {
        opts.workload = Workload::quick();
    }
    opts.flash.inject_fault = inject_fault;
    println!("verify seed {seed} precision {}", cfg.backend.precision.label());
    let results = run_groups(&opts, checks)?;
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.passed()).map(|r| r.name.to_string()).collect();
    println!("{} of {} checks passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed))
    }
}

fn cmd_bench<T: Real>(cfg: &RunConfig, beads: usize) -> Result<()> {
    cfg.check_inputs()?;
    let system = match &cfg.paths.system {
        Some(p) => System::load(p)?,
        None => chain_system(Shape::Globule, beads, cfg.model.num_atom_types, cfg.sim.seed)?,
    };
    let full_cfg = RunConfig {
        backend: crate::config::BackendConfig {
            quant: false,
            ..cfg.backend
        },
        ..cfg.clone()
    };
    let params = load_model::<T>(&full_cfg, &system)?;
    if params.is_quantized() {
        return Err(Error::Config("bench needs full-precision parameters".into()));
    }
    let modes = crate::bench::bench_modes(&cfg.bench)?;
    let quantized = if modes.iter().any(|m| m.quant) {
        let q_cfg = RunConfig {
            backend: crate::config::BackendConfig {
                quant: true,
                ..cfg.backend
            },
            ..cfg.clone()
        };
        Some(load_model::<T>(&q_cfg, &system)?)
    } else {
        None
    };
    let rows = run_bench(&system, &params, quantized.as_ref(), &cfg.sim, &cfg.bench)?;
    let csv = bench_csv(&rows);
    let out = create_out(cfg)?;
    let path = out.join("bench.csv");
    write_text(&path, &csv)?;
    print!("{csv}");
    println!("wrote {}", path.display());
    Ok(())
}

pub fn layer_table(report: &[LayerReport]) -> String {
    let mut s = format!("{:<28} {:>14} {:>14}\n", "layer", "per-channel", "per-tensor");
    for l in report {
        let _ = writeln!(s, "{:<28} {:>14.4e} {:>14.4e}", l.name, l.per_channel_error, l.per_tensor_error);
    }
    s
}

fn cmd_quantize<T: Real>(cfg: &RunConfig, input: Option<&Path>, output: &Path, states: usize) -> Result<()> {
    cfg.check_inputs()?;
    let input = input
        .or(cfg.paths.params.as_deref())
        .ok_or_else(|| Error::Config("no input parameters: pass --input or set paths.params".into()))?;
    if !input.is_file() {
        return Err(Error::Config(format!("input file {} does not exist", input.display())));
    }
    let params = load_params::<T>(input)?;
    if params.is_quantized() {
        return Err(Error::Config(format!("{} is already quantized", input.display())));
    }
    let nt = params.config().num_atom_types;
    let seed = cfg.sim.seed;
    let calib: Vec<CalibrationState<T>> = match &cfg.paths.system {
        Some(p) => {
            let sys = System::load(p)?;
            jittered_states(&sys.positions, &sys.types, CALIBRATION_STATES, CALIBRATION_SIGMA, seed)
        }
        None => (0..8).map(|k| random_state(64, nt, seed.wrapping_add(100 + k))).collect(),
    };
    let (quant, report) = quantize_model(
        &params,
        &calib,
        &QuantizeOptions {
            seed,
            ..QuantizeOptions::default()
        },
    )?;
    print!("{}", layer_table(&report));
    let eval: Vec<CalibrationState<T>> =
        (0..states).map(|k| random_state(64, nt, seed.wrapping_add(1000 + k as u64))).collect();
    let q = quant_errors(&params, &quant, &eval, &Default::default())?;
    println!(
        "energy over {states} random states: max |dE|/|E| {:.3e}, max |dE| {:.3e}, max |dE|/sum|e_i| {:.3e}, min |E| {:.3e}",
        q.max_energy_rel, q.max_energy_abs, q.max_energy_scaled, q.min_abs_energy
    );
    println!("forces: 95th percentile |dF|/rms|F| {:.3e}", q.force_p95);
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_params(&quant, output)?;
    println!("wrote {}", output.display());
    Ok(())
}

fn cmd_analyze(cfg: &RunConfig, trajectory: &Path, native: Option<&Path>, opts: &MetricOptions) -> Result<()> {
    let frames = read_xyz(trajectory)?;
    let native_path = native.or(cfg.paths.system.as_deref());
    let reference = match native_path {
        Some(p) if opts.q || opts.gdt => {
            let sys = System::load(p)?;
            Some(sys.native.unwrap_or(sys.positions))
        }
        _ => None,
    };
    let series = compute_metrics(&frames, reference.as_deref(), opts)?;
    let summary = series.summary(opts.select_fraction)?;
    let out = create_out(cfg)?;
    let csv_path = out.join("metrics.csv");
    write_text(&csv_path, &series.to_csv())?;
    let mut text = String::new();
    let _ = writeln!(text, "frames {}", summary.frames);
    if let Some(q) = summary.largest_metastable_q {
        let _ = writeln!(text, "largest_metastable_q {q:.4}");
    }
    if let Some(g) = summary.mean_gdt_ts_selected {
        let _ = writeln!(text, "mean_gdt_ts_selected {g:.4}");
    }
    let _ = writeln!(
        text,
        "edges mean {:.1} min {} max {}",
        summary.mean_edges, summary.min_edges, summary.max_edges
    );
    write_text(&out.join("summary.txt"), &text)?;
    print!("{text}");
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn cmd_gen_system(cfg: &RunConfig, shape: Shape, beads: usize) -> Result<()> {
    let system = chain_system(shape, beads, cfg.model.num_atom_types, cfg.sim.seed)?;
    let out = create_out(cfg)?;
    system.save(&out.join("system.toml"))?;
    let params = init_params::<f64>(&cfg.model, cfg.sim.seed)?;
    save_params(&params, &out.join("params.bin"))?;
    let run = RunConfig {
        paths: crate::config::PathsConfig {
            system: Some("system.toml".into()),
            params: Some("params.bin".into()),
            out: Some("run".into()),
            resume: None,
        },
        ..cfg.clone()
    };
    write_text(&out.join("config.toml"), &run.to_toml()?)?;
    println!(
        "wrote {} ({} beads, {:?}), params.bin and config.toml",
        out.join("system.toml").display(),
        beads,
        shape
    );
    Ok(())
}
