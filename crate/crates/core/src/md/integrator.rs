use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boltzmann constant in kJ/(mol K); with nm, ps and amu this is consistent.
pub const KB: f64 = 0.008_314_462_618;

/// Run parameters of a Langevin simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Time step in fs.
    pub dt_fs: f64,
    /// Bath temperature in K.
    pub temperature: f64,
    /// Collision rate in 1/ps.
    pub friction: f64,
    pub n_steps: u64,
    pub n_replicas: usize,
    pub seed: u64,
    /// Steps between neighbor-list rebuilds; in between the list is pruned.
    pub rebuild_stride: u64,
    /// Extra search radius in nm for lists reused across steps.
    pub skin: f64,
    /// Steps between trajectory frames and log rows.
    pub output_stride: u64,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_stride: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_fs: 4.0,
            temperature: 300.0,
            friction: 1.0,
            n_steps: 1000,
            n_replicas: 1,
            seed: 0,
            rebuild_stride: 1,
            skin: 0.1,
            output_stride: 100,
            checkpoint_stride: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dt_fs > 0.0 && self.dt_fs.is_finite()) {
            return bad(format!("dt_fs must be > 0, got {}", self.dt_fs));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return bad(format!("friction must be >= 0, got {}", self.friction));
        }
        if self.n_replicas == 0 {
            return bad("n_replicas must be >= 1".into());
        }
        if self.rebuild_stride == 0 || self.output_stride == 0 {
            return bad("rebuild_stride and output_stride must be >= 1".into());
        }
        if !(self.skin >= 0.0 && self.skin.is_finite()) {
            return bad(format!("skin must be >= 0, got {}", self.skin));
        }
        if self.rebuild_stride > 1 && self.skin == 0.0 {
            return bad("rebuild_stride > 1 needs a positive skin".into());
        }
        Ok(())
    }

    /// Time step in ps.
    pub fn dt_ps(&self) -> f64 {
        self.dt_fs * 1e-3
    }
}

/// Positions (nm) and velocities (nm/ps) of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaState {
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
}

/// All replicas of a run at a common step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub replicas: Vec<ReplicaState>,
    /// Bead masses in amu.
    pub masses: Vec<f64>,
    pub step: u64,
}

impl SimState {
    pub fn num_beads(&self) -> usize {
        self.masses.len()
    }

    pub fn is_finite(&self) -> bool {
        self.replicas
            .iter()
            .all(|r| r.positions.iter().chain(&r.velocities).flatten().all(|v| v.is_finite()))
    }
}

/// Stream reserved for initial velocities, disjoint from the per-step noise streams.
const INIT_STREAM: u64 = 1 << 40;

/// Counter-based generator for `(seed, replica, step)`: a fixed key, one stream
/// per replica and a block offset per step, so the numbers a replica sees never
/// depend on scheduling or on how the run was split across restarts.
pub fn noise_rng(seed: u64, replica: usize, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng.set_word_pos((step as u128) << 32);
    rng
}

/// Maxwell-Boltzmann velocities at `temperature` with zero net momentum.
pub fn thermal_velocities(masses: &[f64], temperature: f64, seed: u64, replica: usize) -> Vec<[f64; 3]> {
    let mut v = vec![[0.0; 3]; masses.len()];
    if temperature == 0.0 || masses.is_empty() {
        return v;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM + replica as u64);
    for (vi, &m) in v.iter_mut().zip(masses) {
        let s = (KB * temperature / m).sqrt();
        for c in vi.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *c = s * z;
        }
    }
    let total: f64 = masses.iter().sum();
    let mut p = [0.0; 3];
    for (vi, &m) in v.iter().zip(masses) {
        for c in 0..3 {
            p[c] += m * vi[c];
        }
    }
    for vi in v.iter_mut() {
        for c in 0..3 {
            vi[c] -= p[c] / total;
        }
    }
    v
}

pub fn kinetic_energy(velocities: &[[f64; 3]], masses: &[f64]) -> f64 {
    velocities
        .iter()
        .zip(masses)
        .map(|(v, m)| 0.5 * m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
        .sum()
}

/// Instantaneous temperature `2 K / (3 N k_B)`.
pub fn kinetic_temperature(velocities: &[[f64; 3]], masses: &[f64]) -> f64 {
    if masses.is_empty() {
        return 0.0;
    }
    2.0 * kinetic_energy(velocities, masses) / (3.0 * masses.len() as f64 * KB)
}

/// `v += (dt / 2) F / m`.
pub fn half_kick(state: &mut ReplicaState, forces: &[[f64; 3]], masses: &[f64], dt_ps: f64) {
    for ((v, f), &m) in state.velocities.iter_mut().zip(forces).zip(masses) {
        let s = 0.5 * dt_ps / m;
        for c in 0..3 {
            v[c] += s * f[c];
        }
    }
}

fn half_drift(state: &mut ReplicaState, dt_ps: f64) {
    for (x, v) in state.positions.iter_mut().zip(&state.velocities) {
        for c in 0..3 {
            x[c] += 0.5 * dt_ps * v[c];
        }
    }
}

/// The B-A-O-A part of a BAOAB step from forces at the current positions.
///
/// The closing half-kick needs forces at the new positions; callers apply it
/// with [`half_kick`] once those are evaluated.
pub fn langevin_step(state: &mut ReplicaState, forces: &[[f64; 3]], masses: &[f64], cfg: &SimConfig, rng: &mut ChaCha8Rng) {
    let dt = cfg.dt_ps();
    half_kick(state, forces, masses, dt);
    half_drift(state, dt);
    if cfg.friction > 0.0 {
        let c1 = (-cfg.friction * dt).exp();
        let c2 = (1.0 - c1 * c1).max(0.0);
        for (v, &m) in state.velocities.iter_mut().zip(masses) {
            let sigma = (c2 * KB * cfg.temperature / m).sqrt();
            for c in v.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *c = c1 * *c + sigma * z;
            }
        }
    }
    half_drift(state, dt);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idle_system_stays_put() {
        let cfg = SimConfig {
            temperature: 0.0,
            friction: 0.0,
            ..SimConfig::default()
        };
        let x = vec![[0.1, 0.2, 0.3], [1.0, 0.0, 0.0]];
        let mut s = ReplicaState {
            positions: x.clone(),
            velocities: vec![[0.0; 3]; 2],
        };
        let zero = vec![[0.0; 3]; 2];
        let mut rng = noise_rng(0, 0, 0);
        for _ in 0..10 {
            langevin_step(&mut s, &zero, &[12.0, 12.0], &cfg, &mut rng);
            half_kick(&mut s, &zero, &[12.0, 12.0], cfg.dt_ps());
        }
        assert_eq!(s.positions, x);
    }

    #[test]
    fn noise_streams_are_counter_based() {
        let a: f64 = noise_rng(5, 2, 7).sample(StandardNormal);
        let b: f64 = noise_rng(5, 2, 7).sample(StandardNormal);
        let c: f64 = noise_rng(5, 3, 7).sample(StandardNormal);
        let d: f64 = noise_rng(5, 2, 8).sample(StandardNormal);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn thermal_velocities_have_no_net_momentum() {
        let m = vec![12.0, 14.0, 16.0, 72.0, 100.0];
        let v = thermal_velocities(&m, 300.0, 1, 0);
        for c in 0..3 {
            let p: f64 = v.iter().zip(&m).map(|(vi, mi)| mi * vi[c]).sum();
            assert!(p.abs() < 1e-12);
        }
        assert!(thermal_velocities(&m, 0.0, 1, 0).iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { dt_fs: 0.0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { temperature: -1.0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { friction: -1.0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { n_replicas: 0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { rebuild_stride: 5, skin: 0.0, ..SimConfig::default() }.validate().is_err());
    }
}
