use std::path::Path;

use super::integrator::{ReplicaState, SimState};
use crate::container::{read_file, Reader, Tensor, Writer};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FLCK";
const VERSION: u32 = 1;

/// Serializes the state with the run seed. Noise is counter-based, so the
/// step number is the whole generator state.
pub fn checkpoint_to_bytes(state: &SimState, seed: u64) -> Vec<u8> {
    let n = state.num_beads();
    let mut w = Writer::new(CHECKPOINT_MAGIC, VERSION);
    w.u64(state.step);
    w.u64(seed);
    w.u32(state.replicas.len() as u32);
    w.u32(n as u32);
    w.tensor(&Tensor::f64("masses", vec![n], state.masses.clone()));
    for (r, rep) in state.replicas.iter().enumerate() {
        w.tensor(&Tensor::f64(format!("replica{r}.positions"), vec![n, 3], rep.positions.concat()));
        w.tensor(&Tensor::f64(format!("replica{r}.velocities"), vec![n, 3], rep.velocities.concat()));
    }
    w.finish()
}

/// Returns the state and the seed it was produced with.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(SimState, u64)> {
    let (mut r, version) = Reader::new(bytes, CHECKPOINT_MAGIC, "checkpoint")?;
    if version != VERSION {
        return Err(Error::load("checkpoint", format!("unsupported version {version}")));
    }
    let step = r.u64("step")?;
    let seed = r.u64("seed")?;
    let replicas = r.u32("replica count")? as usize;
    let n = r.u32("bead count")? as usize;
    let tensors = r.tensors()?;
    if tensors.len() != 1 + 2 * replicas {
        return Err(Error::load(
            "checkpoint",
            format!("expected {} tensors, found {}", 1 + 2 * replicas, tensors.len()),
        ));
    }
    let take = |i: usize, name: &str, dims: &[usize]| -> Result<Vec<f64>> {
        let t = &tensors[i];
        if t.name != name || t.dims != dims {
            return Err(Error::load(name, format!("found {} with shape {:?}", t.name, t.dims)));
        }
        Ok(t.to_f64())
    };
    let rows = |v: Vec<f64>| -> Vec<[f64; 3]> { v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect() };
    let masses = take(0, "masses", &[n])?;
    let mut reps = Vec::with_capacity(replicas);
    for k in 0..replicas {
        reps.push(ReplicaState {
            positions: rows(take(1 + 2 * k, &format!("replica{k}.positions"), &[n, 3])?),
            velocities: rows(take(2 + 2 * k, &format!("replica{k}.velocities"), &[n, 3])?),
        });
    }
    let state = SimState {
        replicas: reps,
        masses,
        step,
    };
    if !state.is_finite() {
        return Err(Error::load("checkpoint", "state is not finite"));
    }
    Ok((state, seed))
}

pub fn save_checkpoint(path: &Path, state: &SimState, seed: u64) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(state, seed)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(SimState, u64)> {
    checkpoint_from_bytes(&read_file(path)?)
}
