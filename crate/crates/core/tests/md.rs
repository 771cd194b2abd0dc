use flashcg::backend::BackendMode;
use flashcg::md::*;
use flashcg::model::{init_params, ModelConfig};
use flashcg::synth::{chain_system, Shape};
use flashcg::Error;

fn small_model() -> ModelConfig {
    ModelConfig {
        hidden_dim: 32,
        rbf_dim: 16,
        num_blocks: 2,
        filter_hidden_dim: 32,
        readout_hidden_dim: 16,
        ..ModelConfig::default()
    }
}

fn cfg(steps: u64) -> SimConfig {
    SimConfig {
        n_steps: steps,
        output_stride: 10,
        ..SimConfig::default()
    }
}

#[test]
fn zero_steps_gives_initial_frame_only() {
    let sys = chain_system(Shape::Helix, 12, 4, 0).unwrap();
    let sim = Simulation::<f64>::new(None, &sys, SimConfig { n_replicas: 2, ..cfg(0) }, BackendMode::FLASH).unwrap();
    let mut obs = MemoryObserver::default();
    let out = sim.run(None, &mut obs).unwrap();
    assert_eq!(out.steps, 0);
    assert_eq!(obs.frames.len(), 2);
    assert!(obs.frames.iter().all(|f| f.step == 0 && f.positions == sys.positions));
}

#[test]
fn velocity_verlet_limit_conserves_energy() {
    let mut sys = chain_system(Shape::Coil, 6, 1, 4).unwrap();
    for (k, p) in sys.positions.iter_mut().enumerate() {
        p[0] += 0.02 * (k % 3) as f64;
    }
    let c = SimConfig {
        dt_fs: 1.0,
        temperature: 0.0,
        friction: 0.0,
        n_steps: 10_000,
        output_stride: 100,
        ..SimConfig::default()
    };
    let sim = Simulation::<f64>::new(None, &sys, c, BackendMode::FLASH).unwrap();
    let mut obs = MemoryObserver::default();
    sim.run(None, &mut obs).unwrap();
    let e0 = obs.rows[0].total;
    assert!(e0 > 0.0);
    let drift = obs.rows.iter().map(|r| (r.total - e0).abs() / e0).fold(0.0, f64::max);
    assert!(drift <= 1e-4, "relative energy drift {drift:.3e}");
}

#[test]
fn thermostat_holds_target_temperature() {
    let sys = chain_system(Shape::Coil, 10, 1, 8).unwrap();
    let c = SimConfig {
        n_steps: 100_000,
        output_stride: 10,
        seed: 3,
        ..SimConfig::default()
    };
    let sim = Simulation::<f64>::new(None, &sys, c, BackendMode::FLASH).unwrap();
    let mut obs = MemoryObserver::default();
    sim.run(None, &mut obs).unwrap();
    let tail = &obs.rows[obs.rows.len() / 10..];
    let mean = tail.iter().map(|r| r.kinetic_t).sum::<f64>() / tail.len() as f64;
    assert!((mean - 300.0).abs() <= 15.0, "mean kinetic temperature {mean:.1} K");
}

#[test]
fn cross_backend_trajectories_agree_in_64_bit() {
    let sys = chain_system(Shape::Globule, 30, 4, 1).unwrap();
    let params = init_params::<f64>(&small_model(), 2).unwrap();
    let c = SimConfig { n_steps: 100, seed: 7, ..cfg(100) };
    let mut finals = Vec::new();
    for mode in [BackendMode::REFERENCE, BackendMode::FLASH] {
        let sim = Simulation::new(Some(&params), &sys, c, mode).unwrap();
        finals.push(sim.run(None, &mut NullObserver).unwrap().state);
    }
    let dev = finals[0].replicas[0]
        .positions
        .iter()
        .zip(&finals[1].replicas[0].positions)
        .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
        .fold(0.0, f64::max);
    assert!(dev <= 1e-6, "max deviation {dev:.3e} nm");
}

#[test]
fn resume_from_checkpoint_is_bit_exact() {
    let sys = chain_system(Shape::Globule, 24, 4, 3).unwrap();
    let params = init_params::<f32>(&small_model(), 5).unwrap();
    let c = SimConfig {
        n_replicas: 2,
        checkpoint_stride: 50,
        ..cfg(100)
    };
    let sim = Simulation::new(Some(&params), &sys, c, BackendMode::FLASH).unwrap();
    let mut obs = MemoryObserver::default();
    let full = sim.run(None, &mut obs).unwrap();
    assert_eq!(obs.checkpoints.len(), 2);
    let mid = obs.checkpoints[0].clone();
    assert_eq!(mid.step, 50);
    let (mid, seed) = checkpoint_from_bytes(&checkpoint_to_bytes(&mid, c.seed)).unwrap();
    assert_eq!(seed, c.seed);
    let resumed = sim.run(Some(mid), &mut NullObserver).unwrap();
    assert_eq!(resumed.steps, 50);
    assert_eq!(resumed.state, full.state);
}

#[test]
fn replicas_are_independent_of_batching() {
    let sys = chain_system(Shape::Coil, 16, 4, 2).unwrap();
    let params = init_params::<f32>(&small_model(), 1).unwrap();
    let together = Simulation::new(Some(&params), &sys, SimConfig { n_replicas: 2, ..cfg(30) }, BackendMode::FLASH)
        .unwrap()
        .run(None, &mut NullObserver)
        .unwrap()
        .state;
    for r in 0..2 {
        let mut sim = Simulation::new(Some(&params), &sys, SimConfig { n_replicas: 1, ..cfg(30) }, BackendMode::FLASH).unwrap();
        sim.replica_offset = r;
        let alone = sim.run(None, &mut NullObserver).unwrap().state;
        assert_eq!(alone.replicas[0], together.replicas[r]);
    }
}

#[test]
fn momentum_is_conserved_without_friction() {
    let sys = chain_system(Shape::Globule, 20, 4, 6).unwrap();
    let params = init_params::<f64>(&small_model(), 3).unwrap();
    let c = SimConfig {
        friction: 0.0,
        dt_fs: 2.0,
        ..cfg(200)
    };
    let sim = Simulation::new(Some(&params), &sys, c, BackendMode::FLASH).unwrap();
    let state = sim.run(None, &mut NullObserver).unwrap().state;
    let rep = &state.replicas[0];
    for k in 0..3 {
        let p: f64 = rep.velocities.iter().zip(&state.masses).map(|(v, m)| m * v[k]).sum();
        assert!(p.abs() <= 1e-10, "momentum component {k}: {p:.3e}");
    }
}

#[test]
fn runaway_forces_abort_with_the_offending_frame() {
    let mut sys = chain_system(Shape::Coil, 4, 1, 0).unwrap();
    sys.bonds[0].k = 1e12;
    sys.positions[1][0] += 0.1;
    let sim = Simulation::<f64>::new(None, &sys, cfg(10), BackendMode::FLASH).unwrap();
    match sim.run(None, &mut NullObserver) {
        Err(Error::BlowUp { step, replica, frame, .. }) => {
            assert_eq!((step, replica), (0, 0));
            assert_eq!(frame, sys.positions);
        }
        other => panic!("expected a blow-up, got {other:?}"),
    }
}

#[test]
fn mismatched_checkpoint_is_rejected() {
    let sys = chain_system(Shape::Helix, 8, 1, 0).unwrap();
    let sim = Simulation::<f64>::new(None, &sys, SimConfig { n_replicas: 2, ..cfg(5) }, BackendMode::FLASH).unwrap();
    let mut other = sim.initial_state();
    other.replicas.pop();
    assert!(matches!(sim.run(Some(other), &mut NullObserver), Err(Error::Config(_))));
}

#[test]
fn throughput_units() {
    let t = throughput_report(1000, 64, 20.67, 4.0).unwrap();
    assert!((t.steps_mol_per_s - 3096.27).abs() < 0.01);
    let t = throughput_report(3095, 1, 1.0, 4.0).unwrap();
    assert!((t.ns_per_day - 1069.6).abs() < 0.1);
    assert!(throughput_report(10, 1, 0.0, 4.0).is_err());
}

#[test]
fn file_observer_writes_trajectory_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let sys = chain_system(Shape::Helix, 5, 2, 0).unwrap();
    let sim = Simulation::<f64>::new(None, &sys, SimConfig { n_replicas: 2, ..cfg(20) }, BackendMode::FLASH).unwrap();
    let mut obs = FileObserver::create(dir.path(), &sys.types).unwrap();
    sim.run(None, &mut obs).unwrap();
    obs.flush().unwrap();
    let frames = read_xyz(&dir.path().join("trajectory.xyz")).unwrap();
    assert_eq!(frames.len(), 6);
    assert_eq!((frames[5].step, frames[5].replica), (20, 1));
    let log = std::fs::read_to_string(dir.path().join("log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], LOG_SCHEMA);
    assert_eq!(lines[1], LOG_COLUMNS);
    assert_eq!(lines.len(), 2 + 6);
}
